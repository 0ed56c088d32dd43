"""Reference implementations used only by the tests.

Each oracle is written against the textbook semantics directly and shares no
code with the package beyond the formula AST classes.
"""
