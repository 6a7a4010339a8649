"""Agent backends: a calibrated synthetic pool and a live chat-completions endpoint.

Recorded traces need no backend object of their own; the engine reads them
straight from a :class:`cascade_router.traces.TraceSet`.
"""
from collections import OrderedDict
import logging
import os
import time
from typing import Any, List, Mapping, NamedTuple, Optional, Sequence

import numpy as np
import requests

from .errors import CalibrationError, ConfigError, LiveBackendError
from .model import (
    CapabilityTrace,
    Pool,
    Query,
    REFERENCE_AGENT_IDS,
    REFERENCE_COSTS,
)
from .policy import ANSWER, REJECT
from .traces import TraceSet


TOKEN_ENV = 'CASCADE_ROUTER_API_TOKEN'
QUADRATURE_NODES = 1024
DEFAULT_DIFFICULTY = {'kind': 'normal', 'mean': 0.0, 'std': 1.0}


class LiveAgentSpec(NamedTuple):
    """An agent served by an OpenAI-style chat-completions endpoint."""

    endpoint_url: str
    model_name: str
    timeout_ms: int = 30000
    reject_prefix: str = "I don't know"
    max_in_flight: int = 4

    @classmethod
    def from_dict(cls, values):
        values = dict(values)
        values.pop('kind', None)
        unknown = set(values) - set(cls._fields)
        if unknown:
            raise ConfigError("Unrecognized live backend option(s): {}".format(sorted(unknown)))
        for required in ('endpoint_url', 'model_name'):
            if required not in values:
                raise ConfigError("Live backend needs {!r}".format(required))
        spec = cls(**values)
        if spec.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1, got {}".format(spec.max_in_flight))
        return spec


class LiveResponse(NamedTuple):
    decision: str
    response_text: str
    latency_ms: float


def build_prompt(query, scenario):
    """Prepend the scenario instruction to the query payload."""
    if scenario.instruction:
        return "{}\n{}".format(scenario.instruction, query.payload)
    return query.payload


def live_query(spec, query, scenario):
    """Ask a live agent to answer or reject a query.

    Raises
    ------
    requests.exceptions.RequestException
        on transport errors and timeouts
    LiveBackendError
        on non-2xx status codes or unparseable bodies

    """
    logger = logging.getLogger("cascade-router")
    if query.payload is None:
        raise ValueError("query {!r} has no payload for the live backend".format(query.id))

    body = {
        'model': spec.model_name,
        'messages': [{'role': 'user', 'content': build_prompt(query, scenario)}],
        'temperature': 0,
    }
    headers = {'X-Correlation-ID': query.id}
    token = os.environ.get(TOKEN_ENV)
    if token:
        headers['Authorization'] = 'Bearer {}'.format(token)

    logger.debug('Sending query %r to %r', query.id, spec.model_name)
    start = time.monotonic()
    req = requests.post(spec.endpoint_url, json=body, headers=headers, timeout=spec.timeout_ms / 1000.0)
    latency_ms = (time.monotonic() - start) * 1000.0

    if not 200 <= req.status_code < 300:
        raise LiveBackendError("{} returned status {} for query {!r}".format(
            spec.endpoint_url, req.status_code, query.id))
    try:
        text = req.json()['choices'][0]['message']['content']
    except (ValueError, KeyError, IndexError, TypeError) as err:
        raise LiveBackendError("Unparseable response for query {!r}: {!r}".format(query.id, err))
    if not isinstance(text, str):
        raise LiveBackendError("Response content for query {!r} is not text".format(query.id))

    decision = REJECT if text.strip().startswith(spec.reject_prefix) else ANSWER
    return LiveResponse(decision, text, latency_ms)


class SyntheticPoolSpec(NamedTuple):
    """Parameters of a synthetic pool with logistic capability curves.

    p_i(x) = sigmoid(discrimination * (skill_i - difficulty_x))
    """

    skills: Sequence[float]
    discrimination: float = 10.0
    difficulty: Mapping[str, Any] = DEFAULT_DIFFICULTY
    n_queries: int = 1000
    n_samples: int = 10
    nested: bool = True
    seed: int = 0
    costs: Sequence[float] = tuple(REFERENCE_COSTS)
    agent_ids: Sequence[str] = tuple(REFERENCE_AGENT_IDS)

    @classmethod
    def from_dict(cls, values):
        values = dict(values)
        unknown = set(values) - set(cls._fields)
        if unknown:
            raise ConfigError("Unrecognized synthetic option(s): {}".format(sorted(unknown)))
        for key in ('skills', 'costs', 'agent_ids'):
            if key in values:
                values[key] = tuple(values[key])
        if 'difficulty' in values:
            values['difficulty'] = dict(values['difficulty'])
        return cls(**values)


class SyntheticPool(NamedTuple):
    pool: Pool
    traces: TraceSet
    queries: List[Query]
    greedy_accuracy: List[float]


def _sigmoid(values):
    # tanh form never overflows for steep slopes
    return 0.5 * (1.0 + np.tanh(0.5 * values))


def _check_difficulty(difficulty):
    kind = difficulty.get('kind')
    if kind == 'normal':
        if float(difficulty.get('std', 1.0)) <= 0:
            raise ConfigError("normal difficulty needs std > 0")
    elif kind == 'uniform':
        if float(difficulty.get('high', 3.0)) <= float(difficulty.get('low', -3.0)):
            raise ConfigError("uniform difficulty needs low < high")
    else:
        raise ConfigError("Unsupported difficulty distribution: {}".format(kind))


def sample_difficulties(difficulty, size, rng):
    """Draw query difficulties."""
    _check_difficulty(difficulty)
    if difficulty['kind'] == 'normal':
        return rng.normal(float(difficulty.get('mean', 0.0)), float(difficulty.get('std', 1.0)), size)
    return rng.uniform(float(difficulty.get('low', -3.0)), float(difficulty.get('high', 3.0)), size)


def quadrature(difficulty, nodes=QUADRATURE_NODES):
    """Midpoint quadrature nodes and weights over the difficulty distribution."""
    _check_difficulty(difficulty)
    if difficulty['kind'] == 'normal':
        mean = float(difficulty.get('mean', 0.0))
        std = float(difficulty.get('std', 1.0))
        low, high = mean - 8.0 * std, mean + 8.0 * std
    else:
        low, high = float(difficulty.get('low', -3.0)), float(difficulty.get('high', 3.0))
    width = (high - low) / nodes
    points = low + width * (np.arange(nodes) + 0.5)
    if difficulty['kind'] == 'normal':
        weights = np.exp(-0.5 * ((points - mean) / std) ** 2)
    else:
        weights = np.ones(nodes)
    return points, weights / weights.sum()


def capability_matrix(skills, difficulties, discrimination):
    """Capabilities with one row per query and one column per agent."""
    skills = np.asarray(skills, dtype=float)
    difficulties = np.asarray(difficulties, dtype=float)
    return _sigmoid(discrimination * (skills[np.newaxis, :] - difficulties[:, np.newaxis]))


def mean_capability(spec):
    """Expected capability of each agent over the difficulty distribution."""
    points, weights = quadrature(spec.difficulty)
    return list(weights @ capability_matrix(spec.skills, points, spec.discrimination))


def validate_synthetic(spec):
    """Raise ConfigError if the synthetic pool spec is unusable."""
    skills = list(spec.skills)
    if not skills:
        raise ConfigError("synthetic pool needs at least one skill")
    for lower, higher in zip(skills, skills[1:]):
        if higher <= lower:
            raise ConfigError("skills must be strictly increasing, got {}".format(skills))
    if spec.discrimination <= 0:
        raise ConfigError("discrimination must be > 0, got {}".format(spec.discrimination))
    if spec.n_samples < 1:
        raise ConfigError("n_samples must be >= 1, got {}".format(spec.n_samples))
    if spec.n_queries < 0:
        raise ConfigError("n_queries must be >= 0, got {}".format(spec.n_queries))
    if not len(spec.costs) == len(spec.agent_ids) == len(skills):
        raise ConfigError("synthetic pool has {} skills, {} costs and {} agent ids".format(
            len(skills), len(spec.costs), len(spec.agent_ids)))
    _check_difficulty(spec.difficulty)


def generate_synthetic(spec):
    """Generate a pool and its capability traces. Deterministic for a given seed."""
    logger = logging.getLogger("cascade-router")
    validate_synthetic(spec)

    rng = np.random.default_rng(spec.seed)
    n_agents = len(spec.skills)
    difficulties = sample_difficulties(spec.difficulty, spec.n_queries, rng)
    capabilities = capability_matrix(spec.skills, difficulties, spec.discrimination)

    if spec.nested:
        # one uniform per (query, sample) shared by all agents keeps correctness monotone in rank
        draws = rng.random((spec.n_queries, 1, spec.n_samples))
    else:
        draws = rng.random((spec.n_queries, n_agents, spec.n_samples))
    correct = draws < capabilities[:, :, np.newaxis]
    greedy = capabilities > 0.5

    queries = [Query('q{:05d}'.format(index), tags={'difficulty': float(value)})
               for index, value in enumerate(difficulties)]
    traces = TraceSet(
        CapabilityTrace(query.id, agent_id, tuple(bool(bit) for bit in correct[row, column]),
                        bool(greedy[row, column]))
        for row, query in enumerate(queries)
        for column, agent_id in enumerate(spec.agent_ids)
    )
    pool = Pool.from_costs(list(spec.costs), list(spec.agent_ids))

    if spec.n_queries:
        accuracy = [float(value) for value in greedy.mean(axis=0)]
    else:
        accuracy = [0.0] * n_agents
    for agent_id, value in zip(spec.agent_ids, accuracy):
        logger.info('Synthetic agent %s: greedy accuracy %.4f', agent_id, value)

    return SyntheticPool(pool, traces, queries, accuracy)


def calibrate_skills(target_accuracies, template=None, tolerance=1e-9, max_iterations=200):
    """Bisect each agent's skill so its mean capability hits the target accuracy.

    Parameters
    ----------
    target_accuracies: list of float
        strictly increasing, each in (0, 1)
    template: SyntheticPoolSpec, optional
        all other parameters of the pool; its skills are replaced

    Returns
    -------
    SyntheticPoolSpec

    """
    logger = logging.getLogger("cascade-router")
    targets = [float(target) for target in target_accuracies]
    if template is None:
        template = SyntheticPoolSpec(skills=())
    if not targets:
        raise CalibrationError("no target accuracies given")
    for target in targets:
        if not 0.0 < target < 1.0:
            raise CalibrationError("target accuracy {} outside (0, 1)".format(target))
    for lower, higher in zip(targets, targets[1:]):
        if higher <= lower:
            raise CalibrationError("target accuracies must be strictly increasing, got {}".format(targets))
    if template.discrimination <= 0:
        raise ConfigError("discrimination must be > 0, got {}".format(template.discrimination))

    points, weights = quadrature(template.difficulty)
    slope = template.discrimination

    def mean_p(skill):
        return float(weights @ _sigmoid(slope * (skill - points)))

    low_bound = float(points.min()) - 40.0 / slope
    high_bound = float(points.max()) + 40.0 / slope
    achievable = (mean_p(low_bound), mean_p(high_bound))

    skills = []
    for target in targets:
        if not achievable[0] < target < achievable[1]:
            raise CalibrationError("target accuracy {} is unreachable".format(target), achievable)
        low, high = low_bound, high_bound
        for _ in range(max_iterations):
            middle = 0.5 * (low + high)
            if mean_p(middle) < target:
                low = middle
            else:
                high = middle
            if high - low < tolerance:
                break
        skill = 0.5 * (low + high)
        logger.debug('Calibrated skill %.6f for target %.4f (achieved %.6f)', skill, target, mean_p(skill))
        skills.append(skill)

    return template._replace(skills=tuple(skills))


def calibration_residuals(spec, target_accuracies):
    """Absolute differences between analytic mean capability and targets."""
    return [abs(achieved - target) for achieved, target in zip(mean_capability(spec), target_accuracies)]


def summarize_pool(result):
    """Per-agent greedy accuracy keyed by agent id."""
    return OrderedDict(zip(result.pool.ids, result.greedy_accuracy))


def optional_live_spec(backend) -> Optional[LiveAgentSpec]:
    """Turn a pool entry's backend value into a LiveAgentSpec, or None for traces."""
    if backend is None or backend == 'trace':
        return None
    if isinstance(backend, LiveAgentSpec):
        return backend
    if isinstance(backend, dict) and backend.get('kind') == 'live':
        return LiveAgentSpec.from_dict(backend)
    if isinstance(backend, dict) and backend.get('kind', 'trace') == 'trace':
        return None
    raise ConfigError("Unsupported agent backend: {!r}".format(backend))
