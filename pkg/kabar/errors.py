from typing import Optional


class KabarError(Exception):
    """Base class for all refinement toolkit errors"""


class GraphFormatError(KabarError):
    """Malformed graph file; `line` is 1-based when known"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class PartitionFormatError(GraphFormatError):
    pass


class ContractViolation(KabarError, ValueError):
    """A caller broke an operation's precondition"""


class StaleModelError(KabarError):
    """A model payload no longer matches the partition it was built on"""


class NegativeCycleError(KabarError):
    def __init__(self, cycle):
        self.cycle = cycle
        super().__init__(f"negative cycle of weight {cycle.weight} reachable from source")


class InvariantViolation(KabarError):
    """Internal bookkeeping disagrees with a recount"""
