class ParameterError(ValueError):
    """An argument is outside the domain of a topology or failure function."""


class ConfigError(ValueError):
    """A system or scenario configuration is invalid."""


class ProtocolError(RuntimeError):
    """A state machine observed a condition the system model rules out."""


class EnumerationLimitError(RuntimeError):
    """A crash-timing enumeration would exceed its configured cap."""

    def __init__(self, count, cap):
        super().__init__(f"crash-timing enumeration needs {count} runs, cap is {cap}")
        self.count = count
        self.cap = cap
