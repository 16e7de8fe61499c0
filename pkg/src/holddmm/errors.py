"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or dimensionally inconsistent input."""


class IntegrationError(RuntimeError):
    """Raised when a flow leaves the diffeomorphic regime.

    ``step`` is the index of the integrator node at which the failure was
    detected (``None`` when not tied to a node); ``index`` optionally names
    the offending atom or passive point.
    """

    def __init__(self, message, step=None, index=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step
        self.index = index
