"""Exceptions raised by cascade-router."""


class ConfigError(ValueError):
    """Invalid configuration value or key."""


class TraceFormatError(ValueError):
    """A trace or query file line could not be parsed."""

    def __init__(self, lineno, reason):
        self.lineno = lineno
        self.reason = reason
        super(TraceFormatError, self).__init__("line {}: {}".format(lineno, reason))


class DuplicateTraceError(TraceFormatError):
    """The same (query_id, agent_id) pair occurs twice in a trace file."""

    def __init__(self, lineno, query_id, agent_id):
        self.query_id = query_id
        self.agent_id = agent_id
        super(DuplicateTraceError, self).__init__(
            lineno, "duplicate trace for query {!r}, agent {!r}".format(query_id, agent_id))


class CalibrationError(ValueError):
    """Calibration targets are invalid or unreachable."""

    def __init__(self, message, achievable=None):
        self.achievable = achievable
        if achievable is not None:
            message = "{} (achievable range: {:.4f} to {:.4f})".format(message, *achievable)
        super(CalibrationError, self).__init__(message)


class MissingTraceError(LookupError):
    """No trace recorded for a (query_id, agent_id) pair."""

    def __init__(self, query_id, agent_id):
        self.query_id = query_id
        self.agent_id = agent_id
        super(MissingTraceError, self).__init__(
            "no trace for query {!r}, agent {!r}".format(query_id, agent_id))


class LiveBackendError(RuntimeError):
    """The live endpoint answered with an error status or an unusable body."""


class HopError(RuntimeError):
    """A hop in the routing path failed."""

    def __init__(self, hop, agent_id, cause):
        self.hop = hop
        self.agent_id = agent_id
        self.cause = cause
        super(HopError, self).__init__("hop {} ({}) failed: {}".format(hop, agent_id, cause))
