"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
1 usage/configuration, 2 data, 3 numeric failure.
"""


class EssError(Exception):
    exit_code = 3
    kind = "error"

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def record(self):
        return {"error": self.kind, "message": str(self), "details": self.details}


class ConfigError(EssError):
    exit_code = 1
    kind = "config"


class InvalidInputError(EssError):
    exit_code = 2
    kind = "invalid_input"


class SchemaError(InvalidInputError):
    kind = "schema"


class IngestionError(InvalidInputError):
    kind = "ingestion"


class OverlapError(InvalidInputError):
    kind = "overlap"


class GridInfeasibleError(InvalidInputError):
    kind = "grid_infeasible"


class InsufficientBlocksError(EssError):
    kind = "insufficient_blocks"


class ConvergenceError(EssError):
    kind = "convergence"


class TrainingError(EssError):
    """A learner failed on one training block; ``details['block']`` names it."""

    kind = "training"
