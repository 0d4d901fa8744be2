from typing import Optional


class PreemptQLError(Exception):
    """Base class for every failure reported to a user.

    `kind` is the stable machine-readable name used in HTTP error bodies.
    """

    kind = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ConfigError(PreemptQLError):
    kind = "config"


class NTriplesSyntaxError(PreemptQLError):
    kind = "ntriples"

    def __init__(self, line: int, detail: str):
        super().__init__(f"N-Triples syntax error at line {line}: {detail}")
        self.line = line
        self.detail = detail


class StalePositionError(PreemptQLError):
    kind = "stale_position"

    def __init__(self, index_id: str, key: object):
        super().__init__(f"stale position: key not found in index {index_id}")
        self.index_id = index_id
        self.key = key


class QuerySyntaxError(PreemptQLError):
    kind = "parse"

    def __init__(self, position: int, detail: str, text: Optional[str] = None):
        line, column = _line_col(text, position) if text is not None else (0, 0)
        where = f"line {line}, column {column}" if line else f"offset {position}"
        super().__init__(f"syntax error at {where}: {detail}")
        self.position = position
        self.line = line
        self.column = column
        self.detail = detail


class UnsupportedFeatureError(PreemptQLError):
    kind = "unsupported"

    def __init__(self, feature: str):
        super().__init__(f"unsupported feature: {feature}")
        self.feature = feature


class FragmentViolationError(PreemptQLError):
    kind = "fragment"

    def __init__(self, operator: str):
        super().__init__(f"operator {operator} is not evaluable by the server")
        self.operator = operator


class PlanDecodeError(PreemptQLError):
    kind = "plan_decode"

    def __init__(self, offset: int, reason: str):
        super().__init__(f"malformed saved plan at byte {offset}: {reason}")
        self.offset = offset
        self.reason = reason


class StalePlanError(PreemptQLError):
    kind = "stale_plan"

    def __init__(self, detail: str = "dataset fingerprint mismatch"):
        super().__init__(f"stale plan: {detail}")
        self.detail = detail


class IncompatiblePlanVersionError(PreemptQLError):
    kind = "plan_version"

    def __init__(self, found: int, expected: int):
        super().__init__(
            f"incompatible plan version: got {found}, expected {expected}"
        )
        self.found = found
        self.expected = expected


class OverloadError(PreemptQLError):
    kind = "overload"

    def __init__(self, message: str = "server queue is full"):
        super().__init__(message)


class TransportError(PreemptQLError):
    kind = "transport"


class ServerResponseError(PreemptQLError):
    """Non-retriable error status returned by a server."""

    kind = "server"

    def __init__(self, status: int, kind: str, detail: str):
        super().__init__(f"server replied {status} ({kind}): {detail}")
        self.status = status
        self.error_kind = kind
        self.detail = detail


class WorkloadSpecError(PreemptQLError):
    kind = "workload_spec"


def _line_col(text: str, position: int):
    position = max(0, min(position, len(text)))
    line = text.count("\n", 0, position) + 1
    column = position - (text.rfind("\n", 0, position) + 1) + 1
    return line, column
