"""Exception types raised by the sampler, simulators and runners."""


class TeleportError(Exception):
    """Base class for all errors raised by this package."""


class NumericalError(TeleportError):
    """Base class for numerical failures (CLI exit status 2)."""


class NonFiniteWeight(NumericalError):
    pass


class NonFiniteRatio(NumericalError):
    pass


class NonFiniteRhs(NumericalError):
    pass


class NegativityBreach(NumericalError):
    """Raised when an Euler iterate goes below the negativity floor.

    This almost always means the time step is too large for the
    current density; retry with a smaller ``dt``.
    """


class NotFactorizable(NumericalError):
    pass


class InsufficientWindow(NumericalError):
    pass


class WindowNotConverged(NumericalError):
    """The Sokal window search ran past half the series length.

    The chain is too short to estimate its autocorrelation time.
    """


class TooLarge(TeleportError):
    pass


class DiffersOnMultipleIndices(TeleportError):
    pass


class ConfigInvalid(TeleportError):
    """Experiment configuration failed validation.

    ``messages`` holds one ``path: problem`` string per offending field.
    """

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))
