"""Route queries through a cascade of self-assessing agents and evaluate the routing."""
from .config import RouterConfig
from .core import (
    argument_parser,
    run,
)
from .engine import EngineConfig, route_one, run_batch
from .evaluation import aggregate, compute_utility, oracle_route, run_baseline
from .model import Pool, Query, Scenario, SCENARIO_ALPHAS
from .policy import PolicyConfig, decide, reject_threshold, sft_label

__version__ = '0.1.0'
__all__ = [
    'run',
    'argument_parser',
    'RouterConfig',
    'EngineConfig',
    'PolicyConfig',
    'Pool',
    'Query',
    'Scenario',
    'SCENARIO_ALPHAS',
    'aggregate',
    'compute_utility',
    'decide',
    'oracle_route',
    'reject_threshold',
    'route_one',
    'run_baseline',
    'run_batch',
    'sft_label',
]
