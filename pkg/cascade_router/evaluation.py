"""Aggregate metrics, baseline routers and the analysis suites."""
from collections import Counter, OrderedDict
import logging
import math
from typing import Any, Mapping, NamedTuple, Optional

import numpy as np

from .engine import EngineConfig, route_one, walk_cascade
from .model import EvalReport, RoutingDecision, RoutingOutcome, Scenario, SCENARIO_ALPHAS
from .policy import (
    ANSWER,
    RewardParams,
    agent_decision,
    decide,
    derive_seed,
    estimate_capability,
    perturb,
    reward,
)


BASELINE_KINDS = ['oracle', 'smallest', 'largest', 'random', 'external_threshold']
TRUTH_SOURCES = ['greedy', 'frequency']

# Accuracy and F1 of routing classifiers predicting whether a 7B agent can solve a query
EXTERNAL_CLASSIFIERS = OrderedDict([
    ('random', {'accuracy': 0.50, 'f1': 0.50}),
    ('bert_based', {'accuracy': 0.56, 'f1': 0.63}),
    ('llm_based', {'accuracy': 0.71, 'f1': 0.77}),
    ('self_assessment', {'accuracy': 0.80, 'f1': 0.81}),
])


class BaselineSpec(NamedTuple):
    """A centralized or external baseline router.

    ``external`` holds ``score_noise_sigma`` and ``threshold`` for the
    external_threshold kind; a missing threshold means the scenario's
    reject threshold.
    """

    kind: str
    random_seed: int = 0
    external: Optional[Mapping[str, Any]] = None

    @property
    def score_noise_sigma(self):
        return float((self.external or {}).get('score_noise_sigma', 0.0))

    @property
    def threshold(self):
        return (self.external or {}).get('threshold')


def compute_utility(performance, mean_cost, alpha):
    """Utility = Performance - alpha * Cost."""
    return performance - alpha * mean_cost


def is_capable(trace, truth='greedy'):
    """Ground truth for 'this agent can solve this query'."""
    if truth == 'greedy':
        return trace.greedy_correct
    if truth == 'frequency':
        return trace.frequency >= 0.5
    raise ValueError("Unsupported truth source: {}".format(truth))


def aggregate(outcomes, scenario, pool=None):
    """Aggregate routing outcomes into an EvalReport.

    Outcomes of failed live hops are left out; unscored (live) answers
    count towards cost but not towards performance.
    """
    logger = logging.getLogger("cascade-router")
    outcomes = list(outcomes)
    usable = [outcome for outcome in outcomes if outcome.error is None]
    if len(usable) != len(outcomes):
        logger.warning("Leaving %s failed queries out of the report", len(outcomes) - len(usable))
    if not usable:
        raise ValueError("Cannot aggregate an empty outcome list")

    scored = [outcome.correct for outcome in usable if outcome.correct is not None]
    performance = sum(1 for correct in scored if correct) / len(scored) if scored else 0.0
    mean_cost = math.fsum(outcome.total_cost for outcome in usable) / len(usable)

    reached = Counter()
    answered = Counter()
    finals = Counter()
    order = OrderedDict() if pool is None else OrderedDict.fromkeys(pool.ids)
    for outcome in usable:
        for agent_id, decision in zip(outcome.path, outcome.per_hop_decisions):
            order.setdefault(agent_id)
            reached[agent_id] += 1
            if decision.answered:
                answered[agent_id] += 1
        finals[outcome.final_agent] += 1

    answer_rate = OrderedDict((agent_id, answered[agent_id] / reached[agent_id])
                              for agent_id in order if reached[agent_id])
    distribution = OrderedDict((agent_id, finals[agent_id] / len(usable)) for agent_id in order)

    return EvalReport(
        alpha=scenario.alpha,
        n_queries=len(usable),
        performance=performance,
        mean_cost=mean_cost,
        utility=compute_utility(performance, mean_cost, scenario.alpha),
        per_agent_answer_rate=answer_rate,
        routing_distribution=distribution,
    )


def oracle_route(query, pool, traces, truth='greedy'):
    """The smallest capable agent, or the cheapest one if nobody is capable."""
    for agent in pool:
        if is_capable(traces.get(query.id, agent.id), truth):
            return agent.id
    return min(pool, key=lambda agent: agent.cost).id


def run_assignment(assignment, queries, pool, traces, scenario):
    """Evaluate a centralized routing: every query goes straight to its assigned agent.

    Parameters
    ----------
    assignment: dict
        query id -> agent id

    """
    params = RewardParams.from_scenario(scenario)
    outcomes = []
    for query in queries:
        agent = pool.by_id(assignment[query.id])
        trace = traces.get(query.id, agent.id)
        correct = trace.greedy_correct
        outcomes.append(RoutingOutcome(
            query_id=query.id,
            path=(agent.id,),
            final_agent=agent.id,
            correct=correct,
            inference_cost=agent.cost,
            overhead_cost=0.0,
            total_cost=agent.cost,
            reward=reward('correct' if correct else 'incorrect', params),
            per_hop_decisions=(RoutingDecision(ANSWER, float(trace.frequency), 0.0),),
        ))
    return outcomes


def _external_threshold(spec, queries, pool, traces, scenario, config):
    """Cascade where an outside observer scores each agent's capability with noise."""
    sigma = spec.score_noise_sigma
    threshold = spec.threshold

    outcomes = []
    for query in queries:
        def hop(index, agent, is_fallback):
            trace = traces.get(query.id, agent.id)
            score = perturb(float(trace.frequency), sigma,
                            derive_seed(spec.random_seed, query.id, agent.id, 'external'))
            return decide(score, scenario, is_fallback, threshold=threshold), trace.greedy_correct

        outcomes.append(walk_cascade(query, pool, scenario, config, hop))
    return outcomes


def run_baseline(spec, queries, pool, traces, scenario, config=None, truth='greedy'):
    """Route a batch with a baseline policy. ``truth`` only matters for the oracle."""
    if spec.kind not in BASELINE_KINDS:
        raise ValueError("Unsupported baseline: {}".format(spec.kind))
    queries = list(queries)
    if config is None:
        config = EngineConfig()

    if spec.kind == 'external_threshold':
        return _external_threshold(spec, queries, pool, traces, scenario, config)

    if spec.kind == 'oracle':
        assignment = {query.id: oracle_route(query, pool, traces, truth) for query in queries}
    elif spec.kind == 'smallest':
        assignment = {query.id: pool.by_rank(1).id for query in queries}
    elif spec.kind == 'largest':
        assignment = {query.id: pool.fallback.id for query in queries}
    else:
        assignment = {}
        for query in queries:
            rng = np.random.default_rng(derive_seed(spec.random_seed, query.id, 'random'))
            assignment[query.id] = pool.by_rank(int(rng.integers(len(pool))) + 1).id
    return run_assignment(assignment, queries, pool, traces, scenario)


def easy_hard_split(outcomes, pool, traces, easy_cutoff_rank, truth='greedy'):
    """Mean cost of easy queries (solvable up to the cutoff rank) and of the rest.

    A class without members is left out of the result.
    """
    if not 1 <= easy_cutoff_rank <= len(pool):
        raise ValueError("easy cutoff rank {} outside [1, {}]".format(easy_cutoff_rank, len(pool)))
    small = [agent for agent in pool if agent.rank <= easy_cutoff_rank]

    costs = {'easy_mean_cost': [], 'hard_mean_cost': []}
    for outcome in outcomes:
        if outcome.error is not None:
            continue
        easy = any(is_capable(traces.get(outcome.query_id, agent.id), truth) for agent in small)
        costs['easy_mean_cost' if easy else 'hard_mean_cost'].append(outcome.total_cost)

    return OrderedDict((key, math.fsum(values) / len(values)) for key, values in costs.items() if values)


def _flags(values, key):
    return np.array([value[key] if isinstance(value, Mapping) else value for value in values], dtype=bool)


def classification_metrics(decisions, truths):
    """Accuracy, precision, recall and F1 with 'answer'/'capable' as the positive class.

    Both arguments take booleans, or mappings with ``decided_answer`` and
    ``capable`` keys respectively.
    """
    decided = _flags(decisions, 'decided_answer')
    capable = _flags(truths, 'capable')
    if len(decided) != len(capable):
        raise ValueError("Got {} decisions but {} truths".format(len(decided), len(capable)))
    if not len(decided):
        raise ValueError("Cannot score an empty decision list")

    tp = int(np.sum(decided & capable))
    fp = int(np.sum(decided & ~capable))
    fn = int(np.sum(~decided & capable))
    tn = int(np.sum(~decided & ~capable))

    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return OrderedDict([
        ('accuracy', (tp + tn) / len(decided)),
        ('precision', precision),
        ('recall', recall),
        ('f1', f1),
    ])


def agent_decisions(traces, agent_id, policy, scenario, seed=0, truth='greedy'):
    """One agent's answer decisions and true capability over every traced query.

    Returns
    -------
    (list of bool, list of bool)
        decided_answer and capable, in trace order

    """
    decided = []
    capable = []
    for trace in traces.for_agent(agent_id):
        p_hat = estimate_capability(trace, policy, seed)
        decided.append(agent_decision(policy, p_hat, scenario, False).answered)
        capable.append(is_capable(trace, truth))
    return decided, capable


def answered_rejected_accuracy(traces, agent_id, policy, scenario, seed=0):
    """Greedy accuracy of one agent on the queries it answers versus those it rejects."""
    decided, _ = agent_decisions(traces, agent_id, policy, scenario, seed)
    groups = {True: [], False: []}
    for answered, trace in zip(decided, traces.for_agent(agent_id)):
        groups[answered].append(trace.greedy_correct)

    def accuracy(values):
        return sum(values) / len(values) if values else None

    return OrderedDict([
        ('answered', len(groups[True])),
        ('rejected', len(groups[False])),
        ('answered_accuracy', accuracy(groups[True])),
        ('rejected_accuracy', accuracy(groups[False])),
    ])


def delta_performance(before, after, agent_id=None):
    """Newly solved queries relative to the queries solved before.

    A query counts as newly solved when every sample before was wrong and
    at least one sample after is correct. The two sides count "correct"
    differently: newly solved looks at all samples, so a query the greedy
    answer still misses counts once any sample solves it, while solved
    before counts greedy-correct queries only. Overlaying new greedy
    answers on unchanged samples therefore solves nothing new.

    Raises
    ------
    ValueError
        if the trace sets cover different queries or nothing was solved before

    """
    def keyed(traces):
        return {(trace.query_id, trace.agent_id): trace for trace in traces
                if agent_id is None or trace.agent_id == agent_id}

    before_traces = keyed(before)
    after_traces = keyed(after)
    if set(before_traces) != set(after_traces):
        raise ValueError("before and after traces cover different (query, agent) pairs")

    solved_before = sum(1 for trace in before_traces.values() if trace.greedy_correct)
    if not solved_before:
        raise ValueError("No query was answered correctly before; delta performance is undefined")
    newly_solved = sum(1 for key, trace in before_traces.items()
                       if trace.all_wrong and not after_traces[key].all_wrong)
    return newly_solved / solved_before


def cost_monotonicity_violations(runs, pool):
    """Queries whose final agent gets more expensive as alpha grows.

    Parameters
    ----------
    runs: list of (alpha, list of RoutingOutcome)
        in increasing alpha order

    Returns
    -------
    list of (query_id, lower alpha, higher alpha)

    """
    violations = []
    for (low_alpha, low), (high_alpha, high) in zip(runs, runs[1:]):
        low_cost = {outcome.query_id: pool.by_id(outcome.final_agent).cost
                    for outcome in low if outcome.error is None}
        for outcome in high:
            if outcome.error is not None or outcome.query_id not in low_cost:
                continue
            if pool.by_id(outcome.final_agent).cost > low_cost[outcome.query_id]:
                violations.append((outcome.query_id, low_alpha, high_alpha))
    return violations


def answer_rate_violations(reports):
    """Agents whose answer rate drops from one alpha to the next higher one.

    Returns
    -------
    list of (agent_id, lower alpha, higher alpha)

    """
    violations = []
    for low, high in zip(reports, reports[1:]):
        for agent_id, rate in high.per_agent_answer_rate.items():
            if agent_id in low.per_agent_answer_rate and rate < low.per_agent_answer_rate[agent_id]:
                violations.append((agent_id, low.alpha, high.alpha))
    return violations


def topline_ratio(report, oracle_report):
    """Utility as a fraction of the oracle's utility."""
    if oracle_report.utility == 0:
        return None
    return report.utility / oracle_report.utility


def comparison_rows(queries, pool, traces, policies, config, gamma=0.5, external=None):
    """Reports for every method under the three named scenarios.

    Returns
    -------
    list of (method name, {scenario name: EvalReport})

    """
    queries = list(queries)
    methods = [
        ('Oracle', BaselineSpec('oracle')),
        ('Smallest', BaselineSpec('smallest')),
        ('Largest', BaselineSpec('largest')),
        ('Random', BaselineSpec('random', random_seed=config.seed)),
        ('External threshold', BaselineSpec('external_threshold', random_seed=config.seed, external=external)),
        ('Self-routing', None),
    ]
    rows = []
    for name, spec in methods:
        reports = OrderedDict()
        for scenario_name in SCENARIO_ALPHAS:
            scenario = Scenario(scenario_name, gamma=gamma)
            if spec is None:
                outcomes = [route_one(query, pool, policies, scenario, traces, config) for query in queries]
            else:
                outcomes = run_baseline(spec, queries, pool, traces, scenario, config)
            reports[scenario_name] = aggregate(outcomes, scenario, pool)
        rows.append((name, reports))
    return rows


def comparison_markdown(rows):
    """Render method x scenario x (Accuracy, Cost, Utility) as a markdown table."""
    titles = {'performance_first': 'Performance First', 'balance': 'Balance', 'cost_first': 'Cost First'}
    header = ['Method']
    for scenario_name, alpha in SCENARIO_ALPHAS.items():
        label = "{} (α={})".format(titles[scenario_name], alpha)
        header.extend(["{} Accuracy".format(label), "{} Cost".format(label), "{} Utility".format(label)])

    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for name, reports in rows:
        cells = [name]
        for scenario_name in SCENARIO_ALPHAS:
            report = reports[scenario_name]
            cells.extend(["{:.2f}".format(report.performance), "{:.2f}".format(report.mean_cost),
                          "{:.2f}".format(report.utility)])
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
