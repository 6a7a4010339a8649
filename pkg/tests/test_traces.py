import codecs
from io import BytesIO, StringIO
from os import path

import pytest

from cascade_router.errors import DuplicateTraceError, MissingTraceError, TraceFormatError
from cascade_router.model import CapabilityTrace, Query
from cascade_router.traces import (
    TraceReader,
    TraceSet,
    dump_trace_set,
    load_queries,
    load_trace_set,
    trace_to_line,
)


def open_testfile(fname):
    return codecs.open(path.join(path.dirname(__file__), fname), 'r', 'utf-8')


def test_reader_fixture():
    reader = TraceReader(open_testfile('four_queries_traces.jsonl'))
    first = next(reader)
    assert first.query_id == 'q1'
    assert first.agent_id == 'a1'
    assert first.n_samples == 10
    assert first.greedy_correct is True
    rest = list(reader)
    # blank lines are skipped
    assert len(rest) == 11
    assert reader.lineno == 15


def test_reader_bytes():
    handle = BytesIO(b'{"query_id": "q1", "agent_id": "a1", "samples": [1, 0], "greedy": 0}\n')
    trace = next(TraceReader(handle))
    assert trace.samples == (True, False)
    assert trace.greedy_correct is False


@pytest.mark.parametrize('line, reason', [
    ('not json', 'invalid JSON'),
    ('[1, 2]', 'expected an object'),
    ('{"query_id": "q1", "agent_id": "a1", "samples": [1]}', "missing field 'greedy'"),
    ('{"query_id": 1, "agent_id": "a1", "samples": [1], "greedy": 1}', 'must be strings'),
    ('{"query_id": "q1", "agent_id": "a1", "samples": [], "greedy": 1}', 'n_samples = 0'),
    ('{"query_id": "q1", "agent_id": "a1", "samples": [1, 2], "greedy": 1}', 'samples must be 0 or 1'),
    ('{"query_id": "q1", "agent_id": "a1", "samples": [0.5], "greedy": 1}', 'samples must be 0 or 1'),
    ('{"query_id": "q1", "agent_id": "a1", "samples": [1], "greedy": "yes"}', 'greedy must be 0 or 1'),
    ('{"query_id": "q1", "agent_id": "a1", "samples": [true], "greedy": 1}', 'samples must be 0 or 1'),
    ('{"query_id": "q1", "agent_id": "a1", "samples": [1], "greedy": false}', 'greedy must be 0 or 1'),
])
def test_reader_errors(line, reason):
    handle = StringIO('\n' + line + '\n')
    with pytest.raises(TraceFormatError) as excinfo:
        next(TraceReader(handle))
    assert excinfo.value.lineno == 2
    assert reason in excinfo.value.reason
    assert str(excinfo.value).startswith('line 2: ')


def test_load_broken_file():
    with pytest.raises(TraceFormatError) as excinfo:
        load_trace_set(open_testfile('broken_traces.jsonl'))
    assert excinfo.value.lineno == 2


def test_load_invalid_utf8():
    with open(path.join(path.dirname(__file__), 'invalid_utf8_traces.jsonl'), 'rb') as handle:
        with pytest.raises(TraceFormatError) as excinfo:
            load_trace_set(handle)
    assert excinfo.value.lineno == 2
    assert 'invalid UTF-8' in excinfo.value.reason

    with pytest.raises(TraceFormatError) as excinfo:
        load_queries(BytesIO(b'{"id": "q1"}\n{"id": "q\xff"}\n'))
    assert excinfo.value.lineno == 2


def test_load_duplicates():
    line = '{"query_id": "q1", "agent_id": "a1", "samples": [1], "greedy": 1}\n'
    with pytest.raises(DuplicateTraceError) as excinfo:
        load_trace_set(StringIO(line + line))
    assert excinfo.value.lineno == 2
    assert excinfo.value.query_id == 'q1'
    assert excinfo.value.agent_id == 'a1'


def test_trace_set():
    traces = load_trace_set(open_testfile('four_queries_traces.jsonl'))
    assert len(traces) == 12
    assert traces.query_ids() == ['q1', 'q2', 'q3', 'q4']
    assert traces.agent_ids() == ['a1', 'a2', 'a3']
    assert traces.queries() == [Query('q1'), Query('q2'), Query('q3'), Query('q4')]
    assert [trace.query_id for trace in traces.for_agent('a2')] == ['q1', 'q2', 'q3', 'q4']
    assert traces.get('q3', 'a2').n_correct == 5
    assert traces.has('q4', 'a3')
    assert not traces.has('q5', 'a3')

    with pytest.raises(MissingTraceError) as excinfo:
        traces.get('q5', 'a1')
    assert str(excinfo.value) == "no trace for query 'q5', agent 'a1'"
    assert isinstance(excinfo.value, LookupError)


def test_trace_set_rejects_duplicates():
    trace = CapabilityTrace('q1', 'a1', (True,), True)
    with pytest.raises(DuplicateTraceError):
        TraceSet([trace, trace])


def test_dump_is_canonical():
    traces = load_trace_set(open_testfile('four_queries_traces.jsonl'))
    handle = StringIO()
    dump_trace_set(traces, handle)
    lines = handle.getvalue().splitlines()
    assert len(lines) == 12
    assert lines[0] == '{"query_id": "q1", "agent_id": "a1", "samples": [1, 1, 1, 1, 1, 1, 1, 1, 1, 1], "greedy": 1}'
    assert load_trace_set(StringIO(handle.getvalue())) == traces


def test_trace_to_line():
    trace = CapabilityTrace('q1', 'a1', (True, False), False)
    assert trace_to_line(trace) == '{"query_id": "q1", "agent_id": "a1", "samples": [1, 0], "greedy": 0}'


def test_load_queries():
    handle = StringIO(
        '{"id": "q1", "payload": "What is 2 + 2?"}\n'
        '\n'
        '{"id": "q2", "payload": "Name a prime.", "tags": {"split": "ood"}}\n'
    )
    queries = load_queries(handle)
    assert queries == [Query('q1', 'What is 2 + 2?'), Query('q2', 'Name a prime.', {'split': 'ood'})]


def test_load_queries_errors():
    with pytest.raises(TraceFormatError) as excinfo:
        load_queries(StringIO('{"id": "q1"}\n{"id": "q1"}\n'))
    assert excinfo.value.lineno == 2

    with pytest.raises(TraceFormatError):
        load_queries(StringIO('{"payload": "no id"}\n'))
