"""Exception hierarchy shared by the simulator modules and the command line."""


class RefugeError(Exception):
    """Base class for every error raised by the simulator"""

    exit_code = 1


class ConfigError(RefugeError, ValueError):
    """Invalid parameters, geometry, configuration file or command-line value"""

    exit_code = 1


class SolverError(RefugeError, RuntimeError):
    """Linear solver or eigensolver failure (non-convergence, sign change)"""

    exit_code = 2


class MonitorAbort(RefugeError, RuntimeError):
    """An invariant monitor breached its tolerance while running in abort mode"""

    exit_code = 3

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
