"""Exception hierarchy shared by all drydown modules."""


class DrydownError(Exception):
    """Base class for all validation and computation errors."""


# --- ingestion ---

class MissingColumn(DrydownError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"missing required column: {column!r}")


class NonNumericValue(DrydownError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"non-numeric value {value!r} at row {row}, column {column!r}")


class UnknownTreatment(DrydownError):
    def __init__(self, value):
        self.value = value
        super().__init__(f"unknown treatment {value!r} (expected Control or Stressed)")


# --- model fitting ---

class RankDeficient(DrydownError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"design matrix is rank deficient (collinear column: {column!r})")


class TooFewObservations(DrydownError):
    pass


class MissingPredictor(DrydownError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"missing predictor: {name!r}")


class NonFiniteLoss(DrydownError):
    def __init__(self, epoch, learning_rate):
        self.epoch = epoch
        self.learning_rate = learning_rate
        super().__init__(
            f"training loss became non-finite at epoch {epoch} "
            f"(learning rate {learning_rate})"
        )


# --- smoothing ---

class TooFewPoints(DrydownError):
    pass


class NonIncreasingDays(DrydownError):
    pass


# --- evaluation ---

class LengthMismatch(DrydownError):
    pass


class DegenerateObserved(DrydownError):
    pass


class DegenerateInput(DrydownError):
    pass


# --- water balance ---

class TooFewRecords(DrydownError):
    pass


class NonMonotoneTime(DrydownError):
    pass


class ZeroTtsw(DrydownError):
    pass


class DegenerateControl(DrydownError):
    pass


# --- response fitting ---

class NonConvergence(DrydownError):
    def __init__(self, last_iterate, message="solver failed to converge"):
        self.last_iterate = last_iterate
        super().__init__(f"{message} (last iterate: {last_iterate})")


class InsufficientSpan(DrydownError):
    pass


class InsufficientOverlap(DrydownError):
    pass


# --- synthetic data ---

class ConfigInvalid(DrydownError):
    pass
