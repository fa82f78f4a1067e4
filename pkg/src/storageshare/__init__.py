"""Day-ahead shared-storage division toolkit.

Splits a community battery between a distribution company and its customers
by solving the resulting division problem exactly: each party's dispatch LP
is replaced by its optimality conditions and the whole thing is solved either
as a mixed-binary program or by complementarity branching. A grid-search
oracle and invariant checkers guard the reformulation.
"""

__version__ = "0.1.0"
