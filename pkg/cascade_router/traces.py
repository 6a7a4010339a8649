"""Read and write capability trace files (trace schema v1) and query files."""
from collections import OrderedDict
import json
import logging

from .errors import DuplicateTraceError, MissingTraceError, TraceFormatError
from .model import CapabilityTrace, Query


_TRACE_FIELDS = ('query_id', 'agent_id', 'samples', 'greedy')


def _as_bit(value, lineno, field):
    """Parse a 0|1 value."""
    if value in (0, 1) and not isinstance(value, (bool, float)):
        return bool(value)
    raise TraceFormatError(lineno, "{} must be 0 or 1, got {!r}".format(field, value))


def _read_line(handle, lineno):
    """Read the next line as text, raising TraceFormatError on bytes that are not UTF-8."""
    try:
        raw = handle.readline()
        if isinstance(raw, bytes):
            raw = raw.decode('utf-8')
    except UnicodeDecodeError:
        raise TraceFormatError(lineno, "invalid UTF-8")
    return raw


# pylint: disable=too-few-public-methods
class TraceReader(object):
    """An Iterator-like class for line-delimited trace records."""

    def __init__(self, infile):
        self._file = infile
        self._lineno = 0

    @property
    def lineno(self):
        return self._lineno

    def __iter__(self):
        return self

    def __next__(self):
        line = ''
        while line == '':
            raw = _read_line(self._file, self._lineno + 1)
            if raw == '':
                raise StopIteration
            self._lineno += 1
            line = raw.strip()

        try:
            record = json.loads(line)
        except ValueError as err:
            raise TraceFormatError(self._lineno, "invalid JSON: {}".format(err))
        if not isinstance(record, dict):
            raise TraceFormatError(self._lineno, "expected an object")

        for field in _TRACE_FIELDS:
            if field not in record:
                raise TraceFormatError(self._lineno, "missing field {!r}".format(field))

        query_id = record['query_id']
        agent_id = record['agent_id']
        if not isinstance(query_id, str) or not isinstance(agent_id, str):
            raise TraceFormatError(self._lineno, "query_id and agent_id must be strings")

        samples = record['samples']
        if not isinstance(samples, list):
            raise TraceFormatError(self._lineno, "samples must be a list")
        if not samples:
            raise TraceFormatError(self._lineno, "n_samples = 0")

        return CapabilityTrace(
            query_id=query_id,
            agent_id=agent_id,
            samples=tuple(_as_bit(sample, self._lineno, 'samples') for sample in samples),
            greedy_correct=_as_bit(record['greedy'], self._lineno, 'greedy'),
        )

    next = __next__
# pylint: enable=too-few-public-methods


class TraceSet(object):
    """Capability traces keyed by (query_id, agent_id), in insertion order."""

    __slots__ = ('_traces',)

    def __init__(self, traces=()):
        self._traces = OrderedDict()
        for trace in traces:
            key = (trace.query_id, trace.agent_id)
            if key in self._traces:
                raise DuplicateTraceError(len(self._traces) + 1, *key)
            self._traces[key] = trace

    def get(self, query_id, agent_id):
        """Get the trace of an agent on a query, raising MissingTraceError if absent."""
        try:
            return self._traces[(query_id, agent_id)]
        except KeyError:
            raise MissingTraceError(query_id, agent_id)

    def has(self, query_id, agent_id):
        return (query_id, agent_id) in self._traces

    def query_ids(self):
        """Query ids in order of first appearance."""
        return list(OrderedDict.fromkeys(query_id for query_id, _ in self._traces))

    def agent_ids(self):
        """Agent ids in order of first appearance."""
        return list(OrderedDict.fromkeys(agent_id for _, agent_id in self._traces))

    def for_agent(self, agent_id):
        return [trace for (_, agent), trace in self._traces.items() if agent == agent_id]

    def queries(self):
        """Build payload-less queries for every traced query id."""
        return [Query(query_id) for query_id in self.query_ids()]

    def __iter__(self):
        return iter(self._traces.values())

    def __len__(self):
        return len(self._traces)

    def __eq__(self, other):
        if not isinstance(other, TraceSet):
            return False
        return dict(self._traces) == dict(other._traces)


def load_trace_set(handle):
    """Load a trace set from a text or byte stream.

    Raises
    ------
    TraceFormatError
        on the first malformed line, with its line number
    DuplicateTraceError
        if a (query_id, agent_id) pair occurs twice

    """
    logger = logging.getLogger("cascade-router")
    reader = TraceReader(handle)
    traces = OrderedDict()
    for trace in reader:
        key = (trace.query_id, trace.agent_id)
        if key in traces:
            raise DuplicateTraceError(reader.lineno, *key)
        traces[key] = trace
    logger.debug("Loaded %s traces", len(traces))
    return TraceSet(traces.values())


def trace_to_line(trace):
    """Serialise a trace to its canonical schema v1 line."""
    record = OrderedDict([
        ('query_id', trace.query_id),
        ('agent_id', trace.agent_id),
        ('samples', [1 if sample else 0 for sample in trace.samples]),
        ('greedy', 1 if trace.greedy_correct else 0),
    ])
    return json.dumps(record, ensure_ascii=False)


def dump_trace_set(traces, handle):
    """Write a trace set in canonical form."""
    for trace in traces:
        handle.write(trace_to_line(trace))
        handle.write(u"\n")


def load_queries(handle):
    """Load queries from line-delimited {"id", "payload", "tags"} records."""
    queries = []
    seen = set()
    lineno = 0
    while True:
        lineno += 1
        line = _read_line(handle, lineno)
        if line == '':
            break
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except ValueError as err:
            raise TraceFormatError(lineno, "invalid JSON: {}".format(err))
        if not isinstance(record, dict) or not isinstance(record.get('id'), str):
            raise TraceFormatError(lineno, "query record needs a string 'id'")
        if record['id'] in seen:
            raise TraceFormatError(lineno, "duplicate query id {!r}".format(record['id']))
        seen.add(record['id'])
        queries.append(Query(record['id'], record.get('payload'), record.get('tags')))
    return queries
