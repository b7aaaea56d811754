"""Exception types raised across the package."""


class SurvivalError(ValueError):
    """Base class for errors raised while fitting survival models."""


class NoEventsError(SurvivalError):
    def __init__(self, message="no events"):
        super().__init__(message)


class NonIdentifiableError(SurvivalError):
    def __init__(self, detail=None):
        msg = "non-identifiable"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class SeparationError(SurvivalError):
    def __init__(self, detail=None):
        msg = "monotone likelihood / separation"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class NotConvergedError(SurvivalError):
    pass


class ConfigError(ValueError):
    """Invalid user-supplied configuration (schema, window, experiment grid)."""
