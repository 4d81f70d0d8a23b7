"""Exception types shared across the package.

Every error raised by library code derives from DatasteerError so callers
(CLI, service) can map failures to stage-tagged exit codes / HTTP responses
in one place.
"""


class DatasteerError(Exception):
    """Base class for all package errors."""


# -- corpus ingestion ----------------------------------------------------

class MalformedRecord(DatasteerError):
    def __init__(self, line: int, field: str, message: str = ""):
        self.line = line
        self.field = field
        super().__init__(f"line {line}, field '{field}': {message or 'malformed record'}")


class DimensionMismatch(DatasteerError):
    def __init__(self, record_id: str, expected: int, actual: int):
        self.record_id = record_id
        self.expected = expected
        self.actual = actual
        super().__init__(f"embedding of '{record_id}' has length {actual}, expected {expected}")


class DanglingEdge(DatasteerError):
    def __init__(self, missing_id: str):
        self.missing_id = missing_id
        super().__init__(f"edge references unknown id '{missing_id}'")


class EmptyModality(DatasteerError):
    pass


class EmptyGraph(DatasteerError):
    pass


# -- metrics -------------------------------------------------------------

class NotADistribution(DatasteerError):
    pass


class EmptyClass(DatasteerError):
    pass


class TooFewSamples(DatasteerError):
    pass


class MissingPredictions(DatasteerError):
    pass


class MissingGenerated(DatasteerError):
    pass


# -- projection ----------------------------------------------------------

class BadConfig(DatasteerError):
    pass


class EmptyCandidates(DatasteerError):
    pass


class IncompleteLayout(DatasteerError):
    pass


class NonFiniteLoss(DatasteerError):
    pass


class Diverged(DatasteerError):
    pass


# -- theory oracles ------------------------------------------------------

class DegenerateInput(DatasteerError):
    pass


class TooManyPoints(DatasteerError):
    pass


class NotManyToOne(DatasteerError):
    pass


# -- hierarchy / evaluation ----------------------------------------------

class UnknownNode(DatasteerError):
    pass


class KTooLarge(DatasteerError):
    pass


# -- refinement ----------------------------------------------------------

class SingleClass(DatasteerError):
    pass


class EmptySet(DatasteerError):
    pass


class TooFewProxies(DatasteerError):
    pass


class InvalidTemplate(DatasteerError):
    pass


# -- providers -----------------------------------------------------------

class ProviderError(DatasteerError):
    pass


class ProviderUnreachable(ProviderError):
    pass


class BadResponse(ProviderError):
    def __init__(self, message: str, expected=None, actual=None):
        self.expected = expected
        self.actual = actual
        super().__init__(message)


class InvalidTemplateFromProvider(ProviderError):
    pass


# -- service -------------------------------------------------------------

class UnknownSession(DatasteerError):
    pass


class ConflictingJob(DatasteerError):
    pass


class UnknownImageIds(DatasteerError):
    def __init__(self, ids):
        self.ids = sorted(ids)
        super().__init__(f"unknown image ids: {', '.join(self.ids)}")
