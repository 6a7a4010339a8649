"""Distributed cascade routing: each agent answers or passes the query to the next one."""
from collections import OrderedDict
import logging
from multiprocessing import Pool as WorkerPool
from multiprocessing.pool import ThreadPool

import requests
from tqdm import tqdm

from .agents import live_query
from .errors import ConfigError, HopError, LiveBackendError
from .jobs import RouteJob
from .model import Pool, RoutingDecision, RoutingOutcome
from .policy import (
    ANSWER,
    PolicyConfig,
    RewardParams,
    agent_decision,
    estimate_capability,
    realized_correctness,
    reject_threshold,
    reward,
)


DEFAULT_OVERHEAD_FRACTION = 0.05

# Measured mean response times in seconds of self-assessment trained agents
REJECT_LATENCY_S = OrderedDict([('0.5b', 0.039), ('1.5b', 0.053), ('3b', 0.066), ('7b', 0.083)])
ANSWER_LATENCY_S = OrderedDict([('0.5b', 0.825), ('1.5b', 1.399), ('3b', 2.446), ('7b', 3.895)])

DEFAULT_POLICY = PolicyConfig()


def overhead_fraction_from_latency(agent_id):
    """Rejection time as a fraction of answering time for a reference agent."""
    return REJECT_LATENCY_S[agent_id] / ANSWER_LATENCY_S[agent_id]


def parse_overhead(value):
    """Parse 'none', 'fractional' or 'fractional:<f>' into (mode, fraction)."""
    if value == 'none':
        return 'none', DEFAULT_OVERHEAD_FRACTION
    mode, _, fraction = value.partition(':')
    if mode != 'fractional':
        raise ConfigError("Unsupported overhead mode: {}".format(value))
    if not fraction:
        return mode, DEFAULT_OVERHEAD_FRACTION
    try:
        return mode, float(fraction)
    except ValueError:
        raise ConfigError("Invalid overhead fraction: {}".format(fraction))


class EngineConfig(object):
    """Settings of a routing run."""

    _DEFAULTS = {
        'overhead_mode': ['none', 'fractional'],
        'overhead_fraction': DEFAULT_OVERHEAD_FRACTION,
        'seed': 0,
        'entry_rank': None,
        'parallel': 1,
        'max_in_flight': None,
        'progress_bar': False,
    }

    __slots__ = (
        '_overhead_mode',
        '_overhead_fraction',
        'seed',
        '_entry_rank',
        '_parallel',
        'max_in_flight',
        'progress_bar',
    )

    def __init__(self, **kwargs):
        for slot in self.__slots__:
            name = slot.lstrip('_')
            default = self._DEFAULTS[name]
            if isinstance(default, list):
                default = default[0]
            setattr(self, name, kwargs.pop(name, default))
        if kwargs:
            raise ConfigError("Unrecognized engine option(s): {}".format(sorted(kwargs)))

    @property
    def overhead_mode(self):
        return self._overhead_mode

    @overhead_mode.setter
    def overhead_mode(self, value):
        if value not in self._DEFAULTS['overhead_mode']:
            raise ConfigError("Unsupported overhead mode: {}".format(value))
        self._overhead_mode = value

    @property
    def overhead_fraction(self):
        return self._overhead_fraction

    @overhead_fraction.setter
    def overhead_fraction(self, value):
        value = float(value)
        if not 0.0 <= value <= 1.0:
            raise ConfigError("overhead_fraction must be in [0, 1], got {}".format(value))
        self._overhead_fraction = value

    @property
    def entry_rank(self):
        return self._entry_rank

    @entry_rank.setter
    def entry_rank(self, value):
        if value is not None:
            try:
                rank = int(value)
            except (TypeError, ValueError):
                rank = None
            if isinstance(value, bool) or rank is None or rank != value:
                raise ConfigError("entry_rank must be an integer, got {!r}".format(value))
            value = rank
            if value < 1:
                raise ConfigError("entry_rank must be >= 1, got {}".format(value))
        self._entry_rank = value

    @property
    def parallel(self):
        return self._parallel

    @parallel.setter
    def parallel(self, value):
        value = int(value)
        if value < 1:
            raise ConfigError("parallel must be >= 1, got {}".format(value))
        self._parallel = value

    def as_dict(self):
        return OrderedDict((slot.lstrip('_'), getattr(self, slot)) for slot in self.__slots__)

    def __eq__(self, other):
        if not isinstance(other, EngineConfig):
            return False
        return self.as_dict() == other.as_dict()


def resolve_entry_rank(pool, config):
    """Get the rank routing starts at, raising ConfigError unless it is in [1, K]."""
    entry_rank = pool.entry_rank if config.entry_rank is None else config.entry_rank
    if not 1 <= entry_rank <= len(pool):
        raise ConfigError("entry_rank must be in [1, {}], got {}".format(len(pool), entry_rank))
    return entry_rank


def walk_cascade(query, pool, scenario, config, hop):
    """Walk the cascade from the entry rank until some agent answers.

    ``hop(index, agent, is_fallback)`` returns the agent's RoutingDecision
    and whether its answer would be correct (None when unscored).
    """
    logger = logging.getLogger("cascade-router")
    params = RewardParams.from_scenario(scenario)
    entry_rank = resolve_entry_rank(pool, config)
    path = []
    decisions = []
    overhead = 0.0

    for rank in range(entry_rank, len(pool) + 1):
        agent = pool.by_rank(rank)
        is_fallback = pool.is_fallback(agent)
        try:
            decision, correct = hop(len(path), agent, is_fallback)
        except HopError as err:
            err.path = tuple(path + [agent.id])
            raise
        path.append(agent.id)
        decisions.append(decision)
        logger.debug('Query %r at %s: %s (p=%.4f, threshold=%.4f)', query.id, agent.id, decision.kind,
                     decision.estimated_capability, decision.threshold)

        if decision.answered:
            if correct is None:
                outcome_reward = None
            else:
                outcome_reward = reward('correct' if correct else 'incorrect', params)
            return RoutingOutcome(
                query_id=query.id,
                path=tuple(path),
                final_agent=agent.id,
                correct=correct,
                inference_cost=agent.cost,
                overhead_cost=overhead,
                total_cost=agent.cost + overhead,
                reward=outcome_reward,
                per_hop_decisions=tuple(decisions),
            )

        if config.overhead_mode == 'fractional':
            overhead += config.overhead_fraction * agent.cost

    raise RuntimeError("No agent answered query {!r}".format(query.id))


def route_one(query, pool, policies, scenario, traces, config):
    """Route a single query through the cascade.

    Parameters
    ----------
    query: Query
    pool: Pool
    policies: dict
        agent id -> PolicyConfig; agents without an entry are calibrated
    scenario: Scenario
    traces: TraceSet
        capability traces for every non-live agent on the path
    config: EngineConfig

    Returns
    -------
    RoutingOutcome

    """
    def hop(index, agent, is_fallback):
        if agent.is_live:
            try:
                response = live_query(agent.backend, query, scenario)
            except (requests.exceptions.RequestException, LiveBackendError, ValueError) as err:
                raise HopError(index, agent.id, err)
            kind = ANSWER if is_fallback else response.decision
            estimate = 1.0 if response.decision == ANSWER else 0.0
            return RoutingDecision(kind, estimate, reject_threshold(scenario)), None

        trace = traces.get(query.id, agent.id)
        policy = policies.get(agent.id, DEFAULT_POLICY)
        p_hat = estimate_capability(trace, policy, config.seed)
        decision = agent_decision(policy, p_hat, scenario, is_fallback)
        return decision, realized_correctness(trace, policy, config.seed)

    return walk_cascade(query, pool, scenario, config, hop)


def failed_outcome(query, err):
    """Outcome record for a query whose live hop failed."""
    path = getattr(err, 'path', ())
    return RoutingOutcome(query.id, tuple(path), None, None, 0.0, 0.0, 0.0, None, (), error=str(err))


def is_partial(outcomes):
    """Check if any query of a batch failed."""
    return any(outcome.error is not None for outcome in outcomes)


_INSTALLED_JOB = None


def _install_job(job):  # pragma: no cover  # runs in worker processes
    global _INSTALLED_JOB
    _INSTALLED_JOB = job


def _run_installed(query):  # pragma: no cover  # runs in worker processes
    return _INSTALLED_JOB(query)


def run_batch(queries, pool, policies, scenario, traces, config):
    """Route a batch of queries. Outcomes come back in input order.

    A missing trace aborts the batch. Failed live hops are recorded on the
    outcome's ``error`` field instead; see is_partial().
    """
    logger = logging.getLogger("cascade-router")
    queries = list(queries)
    resolve_entry_rank(pool, config)
    job = RouteJob(pool, policies, scenario, traces, config, collect_errors=True)

    if pool.has_live_agents:
        in_flight = config.max_in_flight or min(agent.backend.max_in_flight for agent in pool if agent.is_live)
        with ThreadPool(processes=in_flight) as workers:
            pending = [workers.apply_async(job, (query,)) for query in queries]
            if config.progress_bar:
                pending = tqdm(pending, desc="Routing queries", unit="queries")
            outcomes = [result.get(0xFFFF) for result in pending]
    elif config.parallel == 1:
        _queries = queries
        if config.progress_bar:
            _queries = tqdm(queries, desc="Routing queries", unit="queries")
        outcomes = [job(query) for query in _queries]
    else:  # pragma: no cover
        # Testing multiprocessing code is annoying
        with WorkerPool(processes=config.parallel, initializer=_install_job, initargs=(job,)) as workers:
            pending = [workers.apply_async(_run_installed, (query,)) for query in queries]
            if config.progress_bar:
                pending = tqdm(pending, desc="Routing queries", unit="queries")
            # 0xFFFF is just "a really long time"
            outcomes = [result.get(0xFFFF) for result in pending]

    if is_partial(outcomes):
        logger.warning("%s of %s queries failed on a live hop; results are partial",
                       sum(1 for outcome in outcomes if outcome.error), len(outcomes))
    return outcomes


def apply_pool_edit(pool, remove):
    """Remove agents from a pool and re-rank the rest. Policies are left alone.

    Raises
    ------
    ValueError
        if an id is unknown or no agent would remain

    """
    remove = set(remove)
    unknown = remove - set(pool.ids)
    if unknown:
        raise ValueError("Cannot remove unknown agent(s): {}".format(sorted(unknown)))
    kept = [agent for agent in pool if agent.id not in remove]
    if not kept:
        raise ValueError("Cannot remove every agent from the pool")

    later = [position for position, agent in enumerate(kept, start=1) if agent.rank >= pool.entry_rank]
    entry_rank = later[0] if later else len(kept)
    return Pool([agent._replace(rank=rank) for rank, agent in enumerate(kept, start=1)], entry_rank=entry_rank)
