"""Exception hierarchy shared across the toolkit."""


class ProbeError(Exception):
    """Base class for all toolkit errors."""


# --- dataset loading -------------------------------------------------------


class MissingFileError(ProbeError):
    pass


class MalformedRecordError(ProbeError):
    def __init__(self, path, line_no, reason):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason


class DuplicateIdError(ProbeError):
    def __init__(self, sample_id):
        super().__init__(f"duplicate sample id {sample_id!r}")
        self.sample_id = sample_id


class PixelOutOfRangeError(ProbeError):
    pass


class IncompleteGroupError(ProbeError):
    def __init__(self, group_id, missing):
        super().__init__(f"confounder group {group_id!r} missing roles: {sorted(missing)}")
        self.group_id = group_id
        self.missing = tuple(sorted(missing))


class RoleInvariantViolatedError(ProbeError):
    def __init__(self, group_id, which):
        super().__init__(f"confounder group {group_id!r}: {which}")
        self.group_id = group_id
        self.which = which


class EmptyInputError(ProbeError):
    pass


# --- segmentation ----------------------------------------------------------


class EmptyTextError(ProbeError):
    pass


class ImageTooSmallError(ProbeError):
    pass


class LengthMismatchError(ProbeError):
    pass


# --- predictors & training -------------------------------------------------


class SingleClassDatasetError(ProbeError):
    pass


class ExternalPredictorError(ProbeError):
    """Any failure while talking to an external predictor process."""


class HandshakeFailedError(ExternalPredictorError):
    pass


class BridgeTimeoutError(ExternalPredictorError):
    pass


class MalformedResponseError(ExternalPredictorError):
    pass


class ScoreOutOfRangeError(ExternalPredictorError):
    pass


# --- attribution -----------------------------------------------------------


class TooManyEntitiesError(ProbeError):
    def __init__(self, n, limit):
        super().__init__(f"exact attribution needs 2^n model calls; n={n} exceeds limit {limit}")
        self.n = n
        self.limit = limit


class AllZeroAttributionError(ProbeError):
    pass


# --- metrics ---------------------------------------------------------------


class InsufficientDataError(ProbeError):
    pass


# --- harness ---------------------------------------------------------------


class InvalidSpecError(ProbeError):
    pass


class MissingCaptionsError(ProbeError):
    pass
