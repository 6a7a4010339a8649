"""Test the config module."""

from argparse import Namespace
from os import path

import pytest

from cascade_router.agents import LiveAgentSpec
from cascade_router.config import RouterConfig, _create_list
from cascade_router.engine import EngineConfig
from cascade_router.errors import ConfigError
from cascade_router.model import Scenario, REFERENCE_ID_ACCURACIES
from cascade_router.policy import PolicyConfig


def _get_file(fname):
    """Get a file from the test directory."""
    return path.join(path.dirname(__file__), fname)


def test_init():
    """Test RouterConfig initialises with the correct default values."""
    config = RouterConfig()
    for key in ('pool', 'engine', 'policy', 'policies', 'external', 'eval', 'alphas', 'pool_remove'):
        assert getattr(config, key) == RouterConfig._DEFAULTS[key]
    assert config.synthetic is None
    assert config.traces is None
    assert config.balance is False
    assert config.seed == 0
    assert config.build_scenario() == Scenario('balance')
    assert config.build_engine_config() == EngineConfig()


def test_defaults_are_copies():
    config = RouterConfig()
    config.pool_remove.append('a1')
    assert RouterConfig().pool_remove == []


def test_from_kwargs():
    """Test RouterConfig initialises correctly from kwargs."""
    config = RouterConfig.from_kwargs(engine={'seed': 3, 'parallel': 2})
    assert config.seed == 3
    assert config.build_engine_config().parallel == 2

    with pytest.raises(ConfigError):
        RouterConfig.from_kwargs(garbage="wow")


def test_from_file():
    config = RouterConfig.from_file(_get_file('replay_config.yaml'))
    assert config.seed == 7
    assert config.traces == _get_file('four_queries_traces.jsonl')
    assert config.eval == {'easy_cutoff_rank': 1, 'truth': 'greedy'}

    pool = config.build_pool()
    assert pool.ids == ['a1', 'a2', 'a3']
    assert pool.costs == [0.1, 0.4, 0.9]
    assert not pool.has_live_agents


def test_from_file_errors(tmpdir):
    with pytest.raises(ConfigError):
        RouterConfig.from_file(str(tmpdir.join('missing.yaml')))

    bad = tmpdir.join('bad.yaml')
    bad.write('pool: [')
    with pytest.raises(ConfigError):
        RouterConfig.from_file(str(bad))

    unknown = tmpdir.join('unknown.yaml')
    unknown.write('garbage: 1\n')
    with pytest.raises(ConfigError) as excinfo:
        RouterConfig.from_file(str(unknown))
    assert 'garbage' in str(excinfo.value)

    empty = tmpdir.join('empty.yaml')
    empty.write('')
    assert RouterConfig.from_file(str(empty)).pool == []


def test_from_namespace():
    """Test RouterConfig initialises correctly from a Namespace object."""
    args = Namespace(config=_get_file('replay_config.yaml'), seed=11, alpha=0.8, gamma=1.0, overhead='fractional:0.1',
                     parallel=2, progress_bar=True, pool_remove='a1', out='/tmp/out', balance=True)
    config = RouterConfig.from_namespace(args)
    assert config.seed == 11
    assert config.build_scenario() == Scenario('cost_first', gamma=1.0)
    engine = config.build_engine_config()
    assert engine.overhead_mode == 'fractional'
    assert engine.overhead_fraction == 0.1
    assert engine.parallel == 2
    assert engine.progress_bar is True
    assert config.pool_remove == ['a1']
    assert config.out == '/tmp/out'
    assert config.balance is True


def test_from_namespace_custom_alpha():
    config = RouterConfig.from_namespace(Namespace(alpha=0.3))
    scenario = config.build_scenario()
    assert scenario.name == 'custom'
    assert scenario.alpha == 0.3


def test_scenario():
    config = RouterConfig()
    config.scenario = {'alpha': 0.2}
    assert config.build_scenario().name == 'performance_first'
    assert config.build_scenario(alpha=0.8).name == 'cost_first'

    with pytest.raises(ConfigError):
        config.scenario = {'name': 'garbage'}
    with pytest.raises(ConfigError):
        config.scenario = {'name': 'balance', 'alpha': 0.3}
    with pytest.raises(ConfigError):
        config.scenario = {'alpha': 1.5}
    with pytest.raises(ConfigError):
        config.scenario = {'name': 'balance', 'colour': 'blue'}


def test_pool():
    config = RouterConfig()
    with pytest.raises(ConfigError):
        config.build_pool()

    config.pool = [{'id': 'a1', 'cost': 0.1},
                   {'id': 'a2', 'cost': 0.9, 'backend': {'kind': 'live', 'endpoint_url': 'http://localhost:8000',
                                                         'model_name': 'tiny'}}]
    pool = config.build_pool()
    assert pool.has_live_agents
    assert pool.by_id('a2').backend == LiveAgentSpec('http://localhost:8000', 'tiny')
    assert config.as_dict()['pool'][1]['backend']['kind'] == 'live'

    config.pool = [{'id': 'a1', 'cost': 0.4}, {'id': 'a2', 'cost': 0.4}]
    with pytest.raises(ConfigError) as excinfo:
        config.build_pool()
    assert 'a2' in str(excinfo.value)

    with pytest.raises(ConfigError):
        config.pool = [{'id': 'a1'}]
    with pytest.raises(ConfigError):
        config.pool = [{'id': 'a1', 'cost': 0.1, 'backend': 'carrier pigeon'}]
    with pytest.raises(ConfigError):
        config.pool = {'id': 'a1'}


def test_policies():
    config = RouterConfig.from_kwargs(policy={'kind': 'noisy', 'noise_sigma': 0.5},
                                      policies={'a2': {'noise_sigma': 1.0}})
    policies = config.build_policies(['a1', 'a2'])
    assert policies['a1'] == PolicyConfig('noisy', noise_sigma=0.5)
    assert policies['a2'] == PolicyConfig('noisy', noise_sigma=1.0)

    with pytest.raises(ConfigError):
        config.policy = {'kind': 'garbage'}
    with pytest.raises(ConfigError):
        config.policies = {'a1': {'garbage': 1}}


def test_engine_external_eval():
    config = RouterConfig()
    with pytest.raises(ConfigError):
        config.engine = {'overhead_mode': 'garbage'}
    with pytest.raises(ConfigError):
        config.engine = {'garbage': 1}
    with pytest.raises(ConfigError):
        config.engine = {'entry_rank': -1}
    with pytest.raises(ConfigError):
        config.external = {'score_noise_sigma': -1}
    with pytest.raises(ConfigError):
        config.external = {'threshold': 2}
    with pytest.raises(ConfigError):
        config.eval = {'truth': 'vibes'}
    with pytest.raises(ConfigError):
        config.eval = {'easy_cutoff_rank': 0}


def test_alphas():
    config = RouterConfig()
    config.alphas = '0.2,0.5, 0.8'
    assert config.alphas == [0.2, 0.5, 0.8]
    with pytest.raises(ConfigError):
        config.alphas = '0.2,lots'
    with pytest.raises(ConfigError):
        config.alphas = '1.5'


def test_synthetic():
    config = RouterConfig()
    assert config.build_synthetic_spec() is None
    with pytest.raises(ConfigError):
        config.synthetic = {'n_queries': 10}
    with pytest.raises(ConfigError):
        config.synthetic = {'skills': [0.0], 'garbage': 1}

    config = RouterConfig.from_kwargs(engine={'seed': 5},
                                      synthetic={'target_accuracies': REFERENCE_ID_ACCURACIES, 'n_queries': 50})
    spec = config.build_synthetic_spec()
    assert spec.seed == 5
    assert spec.n_queries == 50
    assert len(spec.skills) == 5
    assert list(spec.skills) == sorted(spec.skills)


def test_synthetic_takes_pool_costs():
    config = RouterConfig.from_kwargs(pool=[{'id': 'small', 'cost': 0.2}, {'id': 'big', 'cost': 0.8}],
                                      synthetic={'skills': [-0.5, 0.5]})
    spec = config.build_synthetic_spec()
    assert list(spec.costs) == [0.2, 0.8]
    assert list(spec.agent_ids) == ['small', 'big']


def test_config_hash():
    first = RouterConfig.from_file(_get_file('replay_config.yaml'))
    second = RouterConfig.from_file(_get_file('replay_config.yaml'))
    assert first.config_hash() == second.config_hash()
    assert len(first.config_hash()) == 64

    second.engine = dict(second.engine, parallel=4, progress_bar=True)
    assert first.config_hash() == second.config_hash()

    second.engine = dict(second.engine, seed=8)
    assert first.config_hash() != second.config_hash()


def test_config_hash_ignores_working_directory(tmpdir, monkeypatch):
    first = tmpdir.mkdir('first')
    monkeypatch.chdir(str(first))
    from_first = RouterConfig.from_namespace(Namespace(traces=path.join('..', 'traces.jsonl')))
    assert from_first.traces == str(tmpdir.join('traces.jsonl'))

    monkeypatch.chdir(str(tmpdir))
    from_root = RouterConfig.from_namespace(Namespace(traces='traces.jsonl'))
    assert from_root.config_hash() == from_first.config_hash()


def test_get_default():
    """Test RouterConfig.get_default()."""
    assert RouterConfig.get_default('scenario') == {'name': 'balance'}
    assert RouterConfig.get_default('balance') is False


def test_create_list():
    """Test creating lists."""
    assert _create_list('a1') == ['a1']
    assert _create_list('a1, a2') == ['a1', 'a2']
    assert _create_list(['a1', 'a2']) == ['a1', 'a2']
    assert _create_list(('a1',)) == ['a1']
    with pytest.raises(ConfigError):
        _create_list(42)


def test_get_choices():
    """Test RouterConfig.get_choices()."""
    assert RouterConfig.get_choices('truth') == ['greedy', 'frequency']
    assert RouterConfig.get_choices('scenario') == ['performance_first', 'balance', 'cost_first', 'custom']
    assert 'fractional' in RouterConfig.get_choices('overhead_mode')
    with pytest.raises(ValueError):
        RouterConfig.get_choices('seed')
