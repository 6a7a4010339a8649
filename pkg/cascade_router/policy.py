"""Self-assessment decision rule, scenario-conditioned reward and SFT labeling."""
from collections import OrderedDict, defaultdict
from fractions import Fraction
import hashlib
import logging
import math
from typing import NamedTuple

import numpy as np

from .errors import ConfigError
from .model import RoutingDecision


ANSWER = 'answer'
REJECT = 'reject'

# Responses starting with this are rejections
REJECT_SENTINEL = "I don't know!"

_LOGIT_EPSILON = 1e-6


def derive_seed(seed, *keys):
    """Derive a stable 64 bit seed from a run seed and any number of keys."""
    material = ":".join(str(part) for part in (seed,) + keys)
    return int(hashlib.md5(material.encode('utf-8')).hexdigest()[:16], 16)


def as_fraction(value):
    """Read a float the way it was written, e.g. 0.2 -> 1/5."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    return Fraction(repr(float(value)))


class RewardParams(NamedTuple):
    """Preference factor alpha and reliability factor gamma."""

    alpha: float
    gamma: float = 0.5

    @classmethod
    def from_scenario(cls, scenario):
        return cls(scenario.alpha, scenario.gamma)


class PolicyConfig(object):
    """How an agent estimates its own capability and turns it into a decision."""

    _DEFAULTS = {
        'kind': ['calibrated', 'noisy', 'fixed_threshold', 'always_answer'],
        'noise_sigma': 0.0,
        'fixed_threshold': 0.5,
        'capability_source': ['frequency', 'greedy', 'bernoulli_sample'],
        'smoothing': (0, 0),
    }

    __slots__ = (
        '_kind',
        '_noise_sigma',
        '_fixed_threshold',
        '_capability_source',
        '_smoothing',
    )

    def __init__(self, kind='calibrated', noise_sigma=0.0, fixed_threshold=0.5,
                 capability_source='frequency', smoothing=(0, 0)):
        self.kind = kind
        self.noise_sigma = noise_sigma
        self.fixed_threshold = fixed_threshold
        self.capability_source = capability_source
        self.smoothing = smoothing

    @property
    def kind(self):
        return self._kind

    @kind.setter
    def kind(self, value):
        if value not in self._DEFAULTS['kind']:
            raise ConfigError("Unsupported policy kind: {}".format(value))
        self._kind = value

    @property
    def noise_sigma(self):
        return self._noise_sigma

    @noise_sigma.setter
    def noise_sigma(self, value):
        value = float(value)
        if value < 0:
            raise ConfigError("noise_sigma must be >= 0, got {}".format(value))
        self._noise_sigma = value

    @property
    def fixed_threshold(self):
        return self._fixed_threshold

    @fixed_threshold.setter
    def fixed_threshold(self, value):
        value = float(value)
        if not 0.0 <= value <= 1.0:
            raise ConfigError("fixed_threshold must be in [0, 1], got {}".format(value))
        self._fixed_threshold = value

    @property
    def capability_source(self):
        return self._capability_source

    @capability_source.setter
    def capability_source(self, value):
        if value not in self._DEFAULTS['capability_source']:
            raise ConfigError("Unsupported capability source: {}".format(value))
        self._capability_source = value

    @property
    def smoothing(self):
        """Laplace-style (k_plus, n_plus) added to the correct and total counts."""
        return self._smoothing

    @smoothing.setter
    def smoothing(self, value):
        if isinstance(value, dict):
            value = (value.get('k_plus', 0), value.get('n_plus', 0))
        try:
            k_plus, n_plus = (int(part) for part in value)
        except (TypeError, ValueError):
            raise ConfigError("smoothing must be a (k_plus, n_plus) pair, got {!r}".format(value))
        if k_plus < 0 or n_plus < 0:
            raise ConfigError("smoothing counts must be >= 0, got {!r}".format(value))
        self._smoothing = (k_plus, n_plus)

    @classmethod
    def from_dict(cls, values):
        """Initialise from a configuration mapping."""
        values = dict(values or {})
        known = [slot[1:] for slot in cls.__slots__]
        unknown = set(values) - set(known)
        if unknown:
            raise ConfigError("Unrecognized policy option(s): {}".format(sorted(unknown)))
        return cls(**values)

    def as_dict(self):
        return OrderedDict((slot[1:], getattr(self, slot)) for slot in self.__slots__)

    def __eq__(self, other):
        if not isinstance(other, PolicyConfig):
            return False
        return self.as_dict() == other.as_dict()

    def __repr__(self):
        return "PolicyConfig({})".format(", ".join("{}={!r}".format(k, v) for k, v in self.as_dict().items()))


def reject_threshold(params):
    """Expected reward of rejecting, (1 - alpha) ** gamma."""
    return (1.0 - params.alpha) ** params.gamma


def reward(kind, params):
    """Scenario-conditioned reward for a single response."""
    if kind == 'correct':
        return 1.0
    if kind == 'incorrect':
        return 0.0
    if kind == REJECT:
        return reject_threshold(params)
    raise ValueError("Unsupported reward kind: {}".format(kind))


def expected_rewards(p, params):
    """Expected reward of answering (p) and of rejecting for capability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("capability must be in [0, 1], got {}".format(p))
    return {ANSWER: p * reward('correct', params) + (1 - p) * reward('incorrect', params),
            REJECT: reward(REJECT, params)}


def decide(p_hat, scenario, is_fallback, threshold=None):
    """Answer if the estimated capability beats the reject threshold.

    Parameters
    ----------
    p_hat: float
        capability estimate, noise and smoothing already applied
    scenario:
        anything with alpha and gamma attributes
    is_fallback: bool
        the fallback agent always answers
    threshold: float, optional
        override for the scenario threshold

    Returns
    -------
    RoutingDecision

    """
    if threshold is None:
        threshold = reject_threshold(RewardParams(scenario.alpha, scenario.gamma))
    if is_fallback or p_hat > threshold:
        return RoutingDecision(ANSWER, p_hat, threshold)
    return RoutingDecision(REJECT, p_hat, threshold)


def agent_decision(config, p_hat, scenario, is_fallback):
    """Apply a PolicyConfig's decision rule to a capability estimate."""
    if config.kind == 'always_answer':
        return RoutingDecision(ANSWER, p_hat, 0.0)
    if config.kind == 'fixed_threshold':
        return decide(p_hat, scenario, is_fallback, threshold=config.fixed_threshold)
    return decide(p_hat, scenario, is_fallback)


def bernoulli_draw(trace, seed):
    """Draw one realized correctness for (query, agent, seed) from the sample frequency."""
    rng = np.random.default_rng(derive_seed(seed, trace.query_id, trace.agent_id, 'outcome'))
    return bool(rng.random() < float(trace.frequency))


def perturb(p, sigma, seed):
    """Add N(0, sigma) noise to p in logit space."""
    if sigma == 0:
        return p
    p = min(max(p, _LOGIT_EPSILON), 1.0 - _LOGIT_EPSILON)
    logit = math.log(p / (1.0 - p))
    logit += np.random.default_rng(seed).normal(0.0, sigma)
    return 1.0 / (1.0 + math.exp(-logit))


def estimate_capability(trace, config, rng_seed):
    """Estimate an agent's probability of solving the query.

    Deterministic for a given trace, config and seed.
    """
    if trace.n_samples == 0:
        raise ValueError("trace for query {!r}, agent {!r} has no samples".format(trace.query_id, trace.agent_id))

    if config.capability_source == 'greedy':
        estimate = 1.0 if trace.greedy_correct else 0.0
    elif config.capability_source == 'bernoulli_sample':
        estimate = 1.0 if bernoulli_draw(trace, rng_seed) else 0.0
    else:
        k_plus, n_plus = config.smoothing
        estimate = float(Fraction(trace.n_correct + k_plus, trace.n_samples + n_plus))
        estimate = min(max(estimate, 0.0), 1.0)

    if config.kind == 'noisy':
        estimate = perturb(estimate, config.noise_sigma,
                           derive_seed(rng_seed, trace.query_id, trace.agent_id, 'noise'))
    return estimate


def realized_correctness(trace, config, rng_seed):
    """Whether the agent's answer is correct when it does answer."""
    if config.capability_source == 'bernoulli_sample':
        return bernoulli_draw(trace, rng_seed)
    return trace.greedy_correct


def sft_label(trace, alpha):
    """Label a trace for SFT: reject iff its frequency falls below 1 - alpha.

    The comparison is done on exact fractions.
    """
    delta = 1 - as_fraction(alpha)
    if trace.n_correct < delta * trace.n_samples:
        return REJECT
    return ANSWER


def _stratify(traces, scenarios):
    strata = OrderedDict()
    for scenario in scenarios:
        for trace in traces:
            key = (trace.agent_id, scenario.name, scenario.alpha)
            label = sft_label(trace, scenario.alpha)
            strata.setdefault(key, {ANSWER: [], REJECT: []})[label].append(trace)
    return strata


def find_empty_strata(traces, scenarios):
    """List (agent_id, scenario, alpha, n_answer, n_reject) strata that cannot be balanced."""
    empty = []
    for (agent_id, name, alpha), labelled in _stratify(traces, scenarios).items():
        if not labelled[ANSWER] or not labelled[REJECT]:
            empty.append((agent_id, name, alpha, len(labelled[ANSWER]), len(labelled[REJECT])))
    return empty


def _record(trace, scenario, label):
    return OrderedDict([
        ('query_id', trace.query_id),
        ('agent_id', trace.agent_id),
        ('scenario', scenario.name),
        ('alpha', scenario.alpha),
        ('label', label),
    ])


def build_sft_dataset(traces, scenarios, balance=False, seed=0):
    """Label every trace under every scenario.

    With ``balance``, each (agent, scenario) stratum is downsampled to equal
    answer and reject counts, and all of an agent's strata to the same size.
    Strata without answers or without rejections are logged and left empty.

    Returns
    -------
    list of OrderedDict
        records with query_id, agent_id, scenario, alpha and label

    """
    logger = logging.getLogger("cascade-router")
    traces = list(traces)
    scenarios = list(scenarios)
    if not balance:
        return [_record(trace, scenario, sft_label(trace, scenario.alpha))
                for scenario in scenarios for trace in traces]

    strata = _stratify(traces, scenarios)

    per_agent = defaultdict(list)
    for (agent_id, name, alpha), labelled in strata.items():
        if not labelled[ANSWER] or not labelled[REJECT]:
            logger.warning("Cannot balance stratum %s/%s (alpha=%s): %s answer, %s reject; emitting it empty",
                           agent_id, name, alpha, len(labelled[ANSWER]), len(labelled[REJECT]))
            continue
        per_agent[agent_id].append(min(len(labelled[ANSWER]), len(labelled[REJECT])))
    stratum_size = {agent_id: min(sizes) for agent_id, sizes in per_agent.items()}

    position = {(trace.query_id, trace.agent_id): index for index, trace in enumerate(traces)}
    records = []
    for scenario in scenarios:
        for agent_id in OrderedDict.fromkeys(trace.agent_id for trace in traces):
            labelled = strata[(agent_id, scenario.name, scenario.alpha)]
            if agent_id not in stratum_size or not labelled[ANSWER] or not labelled[REJECT]:
                continue
            size = stratum_size[agent_id]
            kept = []
            for label in (ANSWER, REJECT):
                members = labelled[label]
                rng = np.random.default_rng(derive_seed(seed, agent_id, scenario.name, scenario.alpha, label))
                chosen = sorted(rng.choice(len(members), size=size, replace=False))
                kept.extend((members[index], label) for index in chosen)
            kept.sort(key=lambda item: position[(item[0].query_id, item[0].agent_id)])
            records.extend(_record(trace, scenario, label) for trace, label in kept)
    return records
