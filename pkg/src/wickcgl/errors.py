class ConfigurationError(ValueError):
    """Invalid or inconsistent discretisation / configuration."""


class InputError(ValueError):
    """Malformed operands for an otherwise valid configuration."""


class BlowUpError(FloatingPointError):
    """A trajectory produced a non-finite value."""

    def __init__(self, t, step, last_norms=None):
        super().__init__(f"non-finite state at t={t} (step {step})")
        self.t = t
        self.step = step
        self.last_norms = last_norms or {}
