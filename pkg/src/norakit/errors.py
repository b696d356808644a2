"""Exception hierarchy.

Every error raised on bad data derives from :class:`DataError`; the CLI maps
that family to exit code 2 and everything else under :class:`NoraError` to 3.
"""


class NoraError(Exception):
    pass


class DataError(NoraError):
    pass


class MalformedLine(DataError):
    def __init__(self, line_no, reason=""):
        self.line_no = line_no
        msg = f"malformed record on line {line_no}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class SchemaViolation(DataError):
    def __init__(self, field, reason, line_no=None):
        self.field = field
        self.reason = reason
        self.line_no = line_no
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"schema violation in '{field}'{where}: {reason}")


class SpanOutOfRange(DataError):
    def __init__(self, instance_id, reason=""):
        self.instance_id = instance_id
        super().__init__(f"target span out of range for instance {instance_id!r} {reason}".rstrip())


class EmptyTraining(DataError):
    pass


class DuplicateId(DataError):
    pass


class SpanTruncated(DataError):
    def __init__(self, instance_id, last_span_pos, max_len):
        self.instance_id = instance_id
        super().__init__(
            f"span of {instance_id!r} ends at token {last_span_pos}, past max_len={max_len}"
        )


class SpanUnmappable(DataError):
    def __init__(self, instance_id):
        self.instance_id = instance_id
        super().__init__(f"no token overlaps the target span of {instance_id!r}")


class ShapeMismatch(NoraError):
    pass


class TraceMismatch(NoraError):
    pass


class NonFiniteLogit(NoraError):
    pass


class NonFiniteGradient(NoraError):
    pass


class DivergedLoss(NoraError):
    pass


class CheckpointError(NoraError):
    pass


class VersionMismatch(CheckpointError):
    pass


class CorruptChecksum(CheckpointError):
    pass


class KTooLarge(NoraError):
    pass


class InsufficientInstances(NoraError):
    def __init__(self, n, available):
        self.n = n
        self.available = available
        super().__init__(f"top-{n} requested but only {available} instances logged")


class DegenerateMask(NoraError):
    pass


class LengthMismatch(NoraError):
    pass
