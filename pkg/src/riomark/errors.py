"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class RiomarkError(Exception):
    exit_code = 1


class SchemaError(RiomarkError):
    """Malformed header, bad row in strict mode, or duplicate ids."""

    exit_code = 3


class MissingPredictionsError(RiomarkError):
    exit_code = 4

    def __init__(self, missing):
        self.missing = sorted(missing)
        shown = ", ".join(self.missing[:20])
        more = f" (+{len(self.missing) - 20} more)" if len(self.missing) > 20 else ""
        super().__init__(f"missing predictions for {len(self.missing)} ids: {shown}{more}")


class ModelError(RiomarkError):
    """Training failure, divergence, or an incompatible model file."""

    exit_code = 5


class EstimationError(RiomarkError):
    exit_code = 6
