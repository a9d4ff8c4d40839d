"""Exception types raised by the simulator and the experiment runner."""


class ConnectivityError(Exception):
    """Base class for errors raised by aloha_connectivity."""


class ConfigError(ConnectivityError, ValueError):
    """Invalid experiment configuration.

    Parameters
    ----------
    message: str
        What is wrong and which field it concerns
    line: int, optional
        1-based line of the configuration text the problem was found on
    """

    def __init__(self, message, line=None):
        self.message = message
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientDataError(ConnectivityError, ValueError):
    """Not enough usable samples to fit or summarize."""


class HorizonTooShortError(ConnectivityError, RuntimeError):
    """Too many runs were censored at max_slots for a finite quantity."""


class ReplicationError(ConnectivityError, RuntimeError):
    """A single replication of an experiment failed."""
