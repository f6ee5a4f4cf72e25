"""Exception hierarchy.

``ValidationError`` covers bad inputs (CLI exit code 1); everything else that
can go wrong while running is a ``L1FaultRuntimeError`` (exit code 2).
"""


class ValidationError(ValueError):
    pass


class GraphError(ValidationError):
    pass


class NotBipartiteError(GraphError):
    pass


class L1FaultRuntimeError(RuntimeError):
    pass


class InfeasibleError(L1FaultRuntimeError):
    """The constraint set of an l1 problem is empty (up to tolerance)."""


class SolverError(L1FaultRuntimeError):
    pass


class BoundUndefinedError(ValidationError):
    """Error bounds only exist while fewer than half of the nodes are faulty."""
