"""Domain types shared by the routing engine, the agent backends and the evaluation code."""
from collections import OrderedDict
from fractions import Fraction
import logging
from typing import Any, Dict, List, Mapping, NamedTuple, Optional, Tuple

from .errors import ConfigError


SCENARIO_ALPHAS = OrderedDict([
    ('performance_first', 0.2),
    ('balance', 0.5),
    ('cost_first', 0.8),
])

SCENARIO_NAMES = list(SCENARIO_ALPHAS) + ['custom']

SCENARIO_INSTRUCTIONS = {
    'performance_first': "Scenario: Performance First. You must ensure your answer is correct. Only choose to "
                         "answer if you are completely certain of your ability to answer the question; otherwise, "
                         "choose not to answer.",
    'balance': "Scenario: Balance. You need to strike a balance between answering and not answering. You can "
               "choose to answer questions you are confident in and choose not to answer those you are uncertain "
               "about.",
    'cost_first': "Scenario: Cost First. You need to answer questions as much as possible. Choose to answer as long "
                  "as you believe you have the ability to answer correctly; only choose not to answer if you feel "
                  "there is absolutely no possibility of giving a correct answer.",
}

DEFAULT_GAMMA = 0.5

# Reference pool: five instruction-tuned models from 0.5B to 14B parameters
REFERENCE_AGENT_IDS = ['0.5b', '1.5b', '3b', '7b', '14b']
REFERENCE_COSTS = [0.1, 0.2, 0.4, 0.7, 0.9]
REFERENCE_ID_ACCURACIES = [0.3801, 0.5895, 0.7308, 0.8090, 0.8545]
REFERENCE_OOD_ACCURACIES = [0.3582, 0.5469, 0.6157, 0.6989, 0.7443]


class AgentSpec(NamedTuple):
    """One member of the agent pool.

    ``backend`` is either the string ``'trace'`` (recorded or synthetic
    capability traces) or a :class:`cascade_router.agents.LiveAgentSpec`.
    """

    id: str
    cost: float
    rank: int
    backend: Any = 'trace'

    @property
    def is_live(self):
        """Check if this agent is answered by a live endpoint."""
        return not isinstance(self.backend, str)


class Pool(object):
    """A cost-ordered pool of agents; the last agent is the fallback."""

    __slots__ = ('_agents', '_entry_rank')

    def __init__(self, agents, entry_rank=1):
        """Initialise the pool. Use validate_pool() to check the invariants."""
        self._agents = tuple(agents)
        self._entry_rank = entry_rank

    @classmethod
    def from_costs(cls, costs, ids=None, backends=None, entry_rank=1):
        """Build a pool with ranks 1..K in the order the costs are given."""
        if ids is None:
            ids = ['a{}'.format(i + 1) for i in range(len(costs))]
        if backends is None:
            backends = ['trace'] * len(costs)
        agents = [AgentSpec(agent_id, cost, rank, backend)
                  for rank, (agent_id, cost, backend) in enumerate(zip(ids, costs, backends), start=1)]
        return cls(agents, entry_rank=entry_rank)

    @property
    def agents(self):
        return self._agents

    @property
    def entry_rank(self):
        return self._entry_rank

    @property
    def ids(self) -> List[str]:
        return [agent.id for agent in self._agents]

    @property
    def costs(self) -> List[float]:
        return [agent.cost for agent in self._agents]

    @property
    def fallback(self):
        """The expert of last resort."""
        return self._agents[-1]

    @property
    def entry(self):
        return self.by_rank(self._entry_rank)

    def by_rank(self, rank):
        """Get the agent at a 1-based rank."""
        return self._agents[rank - 1]

    def by_id(self, agent_id):
        """Get an agent by id."""
        for agent in self._agents:
            if agent.id == agent_id:
                return agent
        raise KeyError(agent_id)

    def is_fallback(self, agent):
        return agent.rank == len(self._agents)

    @property
    def has_live_agents(self):
        return any(agent.is_live for agent in self._agents)

    def __len__(self):
        return len(self._agents)

    def __iter__(self):
        return iter(self._agents)

    def __eq__(self, other):
        if not isinstance(other, Pool):
            return False
        return self._agents == other._agents and self._entry_rank == other._entry_rank

    def __repr__(self):
        return "Pool({!r}, entry_rank={})".format(list(self._agents), self._entry_rank)


# Reference pool ordered by cost
REFERENCE_POOL = Pool.from_costs(REFERENCE_COSTS, REFERENCE_AGENT_IDS)


class Scenario(object):
    """A deployment scenario: preference factor alpha and reliability factor gamma."""

    __slots__ = ('_name', '_alpha', '_gamma', '_instruction')

    def __init__(self, name='balance', alpha=None, gamma=DEFAULT_GAMMA, instruction=None):
        if name not in SCENARIO_NAMES:
            raise ConfigError("Unsupported scenario: {}".format(name))
        if name in SCENARIO_ALPHAS:
            pinned = SCENARIO_ALPHAS[name]
            if alpha is not None and float(alpha) != pinned:
                raise ConfigError("Scenario {} pins alpha to {}, got {}".format(name, pinned, alpha))
            alpha = pinned
            if instruction is None:
                instruction = SCENARIO_INSTRUCTIONS[name]
        elif alpha is None:
            raise ConfigError("A custom scenario needs an alpha value")

        alpha = float(alpha)
        if not 0.0 <= alpha <= 1.0:
            raise ConfigError("alpha must be in [0, 1], got {}".format(alpha))
        gamma = float(gamma)
        if not 0.0 < gamma <= 1.0:
            raise ConfigError("gamma must be in (0, 1], got {}".format(gamma))

        self._name = name
        self._alpha = alpha
        self._gamma = gamma
        self._instruction = instruction

    @classmethod
    def from_alpha(cls, alpha, gamma=DEFAULT_GAMMA):
        """Pick the named scenario pinned to alpha, or a custom one."""
        for name, pinned in SCENARIO_ALPHAS.items():
            if float(alpha) == pinned:
                return cls(name, gamma=gamma)
        return cls('custom', alpha=alpha, gamma=gamma)

    @property
    def name(self):
        return self._name

    @property
    def alpha(self):
        return self._alpha

    @property
    def gamma(self):
        return self._gamma

    @property
    def instruction(self):
        return self._instruction

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return False
        return (self._name, self._alpha, self._gamma, self._instruction) == \
            (other._name, other._alpha, other._gamma, other._instruction)

    def __hash__(self):
        return hash((self._name, self._alpha, self._gamma))

    def __repr__(self):
        return "Scenario({!r}, alpha={}, gamma={})".format(self._name, self._alpha, self._gamma)


class Query(NamedTuple):
    """A query. The payload is only needed for live agents."""

    id: str
    payload: Optional[str] = None
    tags: Optional[Mapping[str, Any]] = None


class CapabilityTrace(NamedTuple):
    """Recorded correctness of one agent on one query."""

    query_id: str
    agent_id: str
    samples: Tuple[bool, ...]
    greedy_correct: bool

    @property
    def n_samples(self):
        return len(self.samples)

    @property
    def n_correct(self):
        return sum(1 for sample in self.samples if sample)

    @property
    def frequency(self):
        """Exact fraction of correct samples."""
        return Fraction(self.n_correct, self.n_samples)

    @property
    def all_wrong(self):
        return not any(self.samples)


class RoutingDecision(NamedTuple):
    """One agent's answer/reject decision."""

    kind: str
    estimated_capability: float
    threshold: float

    @property
    def answered(self):
        return self.kind == 'answer'


class RoutingOutcome(NamedTuple):
    """The realized routing path of a single query.

    ``correct`` and ``reward`` are None when the answering agent is live,
    since live answers are not scored. ``error`` is set when a live hop
    failed inside a batch.
    """

    query_id: str
    path: Tuple[str, ...]
    final_agent: Optional[str]
    correct: Optional[bool]
    inference_cost: float
    overhead_cost: float
    total_cost: float
    reward: Optional[float]
    per_hop_decisions: Tuple[RoutingDecision, ...]
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        """Convert to the outcome log record."""
        return OrderedDict([
            ('query_id', self.query_id),
            ('path', list(self.path)),
            ('final_agent', self.final_agent),
            ('correct', self.correct),
            ('inference_cost', self.inference_cost),
            ('overhead_cost', self.overhead_cost),
            ('total_cost', self.total_cost),
            ('reward', self.reward),
            ('per_hop_decisions', [OrderedDict([
                ('kind', decision.kind),
                ('estimated_capability', decision.estimated_capability),
                ('threshold', decision.threshold),
            ]) for decision in self.per_hop_decisions]),
            ('error', self.error),
        ])


class EvalReport(NamedTuple):
    """Aggregate metrics of a routing run."""

    alpha: float
    n_queries: int
    performance: float
    mean_cost: float
    utility: float
    per_agent_answer_rate: Mapping[str, float]
    routing_distribution: Mapping[str, float]
    classification: Optional[Mapping[str, float]] = None
    easy_hard_costs: Optional[Mapping[str, Optional[float]]] = None
    delta_performance: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return OrderedDict([
            ('alpha', self.alpha),
            ('n_queries', self.n_queries),
            ('performance', self.performance),
            ('mean_cost', self.mean_cost),
            ('utility', self.utility),
            ('per_agent_answer_rate', OrderedDict(self.per_agent_answer_rate)),
            ('routing_distribution', OrderedDict(self.routing_distribution)),
            ('classification', None if self.classification is None else OrderedDict(self.classification)),
            ('easy_hard_costs', None if self.easy_hard_costs is None else OrderedDict(self.easy_hard_costs)),
            ('delta_performance', self.delta_performance),
        ])


def validate_pool(pool):
    """Check the pool invariants.

    Returns
    -------
    list of str
        One message per violation, naming the agent. Empty if the pool is valid.

    """
    violations = []
    agents = list(pool.agents)
    if not agents:
        return ["pool: no agents"]

    seen = set()
    for position, agent in enumerate(agents, start=1):
        if agent.id in seen:
            violations.append("{}: duplicate agent id".format(agent.id))
        seen.add(agent.id)
        if not 0.0 <= agent.cost <= 1.0:
            violations.append("{}: cost {} outside [0, 1]".format(agent.id, agent.cost))
        if agent.rank != position:
            violations.append("{}: rank {} but position {} in the pool".format(agent.id, agent.rank, position))

    for lower, higher in zip(agents, agents[1:]):
        if higher.cost <= lower.cost:
            violations.append("{}: cost {} not strictly greater than {} of {}".format(
                higher.id, higher.cost, lower.cost, lower.id))

    if not 1 <= pool.entry_rank <= len(agents):
        violations.append("pool: entry rank {} outside [1, {}]".format(pool.entry_rank, len(agents)))

    return violations


def validate_scenario(scenario):
    """Return warnings for legal but degenerate scenarios."""
    logger = logging.getLogger("cascade-router")
    warnings = []
    if scenario.alpha == 0.0:
        warnings.append("alpha = 0: every agent but the fallback will reject every query")
    for warning in warnings:
        logger.warning(warning)
    return warnings
