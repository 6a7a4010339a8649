import pytest

from cascade_router import jobs
from cascade_router.engine import EngineConfig
from cascade_router.errors import HopError
from cascade_router.model import CapabilityTrace, Pool, Query, Scenario
from cascade_router.traces import TraceSet


@pytest.fixture
def traces():
    return TraceSet([
        CapabilityTrace('q1', 'a1', (True, True), True),
        CapabilityTrace('q1', 'a2', (True, True), True),
    ])


def test_job_eq(traces):
    args = [Pool.from_costs([0.1, 0.9]), {}, Scenario('balance'), traces, EngineConfig()]
    job_a = jobs.RouteJob(*args)
    job_b = jobs.RouteJob(*args)
    job_c = jobs.RouteJob(Pool.from_costs([0.2, 0.9]), {}, Scenario('balance'), traces, EngineConfig())

    assert job_a == job_b
    assert job_a != job_c
    assert job_b != args


def test_job_routes(traces):
    job = jobs.RouteJob(Pool.from_costs([0.1, 0.9]), {}, Scenario('balance'), traces, EngineConfig())
    outcome = job(Query('q1'))
    assert outcome.final_agent == 'a1'


def test_job_collects_hop_errors(traces, mocker):
    err = HopError(1, 'a2', RuntimeError('timed out'))
    mocker.patch('cascade_router.engine.route_one', side_effect=err)

    strict = jobs.RouteJob(Pool.from_costs([0.1, 0.9]), {}, Scenario('balance'), traces, EngineConfig())
    with pytest.raises(HopError):
        strict(Query('q1'))

    lenient = jobs.RouteJob(Pool.from_costs([0.1, 0.9]), {}, Scenario('balance'), traces, EngineConfig(),
                            collect_errors=True)
    outcome = lenient(Query('q1'))
    assert outcome.error == 'hop 1 (a2) failed: timed out'
    assert outcome.query_id == 'q1'
