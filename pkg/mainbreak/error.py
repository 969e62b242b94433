class MainbreakError(Exception):
    status = 1

    def __init__(self, *errors, status=None):
        self.status = status if status is not None else self.status
        self.errors = errors
        super().__init__("; ".join(str(err) for err in errors))

    def to_dict(self):
        errs = [{"detail": str(err)} for err in self.errors]
        return {"errors": errs}


class UsageError(MainbreakError):
    """
    The command line or run configuration is invalid.
    Exits with the conventional usage status.
    """
    status = 2


class ConfigurationError(UsageError):
    pass


class DataError(MainbreakError):
    status = 1


class IngestError(DataError):
    """
    A dataset file cannot be ingested at all
    (missing file, bad header, duplicate key, too many rejects).
    Row-level problems are rejects, not errors.
    """

    def __init__(self, *errors, file=None, row=None, status=None):
        self.file = file
        self.row = row
        context = []
        if file is not None:
            context.append(f"file '{file}'")
        if row is not None:
            context.append(f"row {row}")
        if context:
            errors = tuple(f"{', '.join(context)}: {err}" for err in errors)
        super().__init__(*errors, status=status)


class GeometryError(DataError):
    pass


class FeatureError(DataError):
    pass


class PlanError(DataError):
    pass


class ModelError(MainbreakError):
    status = 1


class InternalError(MainbreakError):
    status = 1
