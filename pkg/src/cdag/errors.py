"""Exception types shared across the simulator."""


class CdagError(Exception):
    """Base class for all protocol and simulator errors."""


class InvalidParameter(CdagError):
    pass


class NotFound(CdagError):
    pass


class CorruptStore(CdagError):
    pass


class EmptySlot(CdagError):
    """A tournament produced no usable candidate block."""


class NotInChain(CdagError):
    pass


class NoTransactions(CdagError):
    pass


class NotInSlot(CdagError):
    """Operation requires a barrier certificate the node does not hold."""
