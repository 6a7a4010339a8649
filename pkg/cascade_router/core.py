"""Core functionality of cascade-router: the command line and the commands behind it."""
import argparse
from collections import Counter, OrderedDict
import logging
import os
import sys

from .agents import generate_synthetic
from .config import RouterConfig
from .engine import apply_pool_edit, is_partial, resolve_entry_rank, run_batch
from .errors import (
    CalibrationError,
    ConfigError,
    HopError,
    LiveBackendError,
    MissingTraceError,
    TraceFormatError,
)
from .evaluation import (
    BaselineSpec,
    agent_decisions,
    aggregate,
    answer_rate_violations,
    classification_metrics,
    cost_monotonicity_violations,
    easy_hard_split,
    run_baseline,
    comparison_markdown,
    comparison_rows,
    topline_ratio,
)
from .model import SCENARIO_ALPHAS, validate_scenario
from .policy import build_sft_dataset, find_empty_strata
from .report import (
    RunManifest,
    atomic_write,
    write_json,
    write_jsonl,
    write_outcomes,
    write_report_csv,
    write_report_json,
    write_sweep_csv,
    write_traces,
)
from .traces import load_queries, load_trace_set


EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _common_options():
    """Options shared by every command."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-c', '--config', dest='config', metavar='PATH',
                        help='YAML (or JSON) configuration file')
    common.add_argument('-o', '--out', dest='out', metavar='PATH',
                        help='Output directory; for "label" the output file (default: current directory)')
    common.add_argument('--seed', dest='seed', type=int,
                        help='Run seed (default: engine.seed from the config, or 0)')
    common.add_argument('--alpha', dest='alpha', type=float,
                        help='Run a single scenario with this preference factor instead of the configured one')
    common.add_argument('--gamma', dest='gamma', type=float,
                        help='Reliability factor of the reject reward (default: 0.5)')
    common.add_argument('--overhead', dest='overhead',
                        help='Rejection overhead, one of {} with an optional ":<f>" fraction (default: none)'.format(
                            ', '.join(RouterConfig.get_choices('overhead_mode'))))
    common.add_argument('--pool-remove', dest='pool_remove', metavar='IDS',
                        help='Comma-separated agent ids to remove from the pool before routing')
    common.add_argument('-P', '--progress-bar', dest='progress_bar', action='store_true',
                        help='Show a progress bar while routing queries')
    common.add_argument('-p', '--parallel', dest='parallel', type=int, metavar='N',
                        help='Route queries in %(metavar)s processes (default: 1)')
    common.add_argument('-v', '--verbose', action='store_true',
                        help='increase output verbosity')
    common.add_argument('-d', '--debug', action='store_true',
                        help='print debugging information')
    return common


def argument_parser(version=None):
    """Create the argument parser for cascade-router."""
    parser = argparse.ArgumentParser(
        prog='cascade-router',
        description='Route queries through a cost-ordered cascade of self-assessing agents and evaluate it.')
    parser.add_argument('-V', '--version', action='version', version=version,
                        help='print version information')
    common = _common_options()
    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True

    simulate = subparsers.add_parser('simulate', parents=[common],
                                     help='Generate a synthetic pool from the config and route it')
    simulate.add_argument('--compare', '--table2', dest='compare', action='store_true',
                          help='Also print every baseline under the three named scenarios as a markdown table')

    replay = subparsers.add_parser('replay', parents=[common], help='Route recorded capability traces')
    replay.add_argument('traces', nargs='?', default=None,
                        help='Trace file (default: the "traces" entry of the config)')
    replay.add_argument('--compare', '--table2', dest='compare', action='store_true',
                        help='Also print every baseline under the three named scenarios as a markdown table')

    sweep = subparsers.add_parser('sweep', parents=[common], help='Route the same traces under several alphas')
    sweep.add_argument('--alphas', dest='alphas',
                       help='Comma-separated alphas, e.g. "0.2,0.5,0.8" (default: the three named scenarios)')
    sweep.add_argument('--traces', dest='traces',
                       help='Trace file (default: the "traces" entry of the config, else a synthetic pool)')

    label = subparsers.add_parser('label', parents=[common], help='Label traces for supervised fine-tuning')
    label.add_argument('traces', nargs='?', default=None,
                       help='Trace file (default: the "traces" entry of the config)')
    label.add_argument('--alphas', dest='alphas',
                       help='Comma-separated alphas to label for (default: the three named scenarios)')
    label.add_argument('--balance', dest='balance', action='store_true',
                       help='Downsample to equal answer and reject counts per agent and scenario')

    return parser


def run(args):
    """Run a command using parameters passed as argparse.Namespace object.

    Parameters
    ----------
    args: Namespace
        Arguments from argument_parser

    Returns
    -------
    int
        exit code: 0 on success, 1 on configuration errors, 2 on runtime errors

    """
    logger = logging.getLogger("cascade-router")
    commands = {
        'simulate': cmd_simulate,
        'replay': cmd_replay,
        'sweep': cmd_sweep,
        'label': cmd_label,
    }
    try:
        config = RouterConfig.from_namespace(args)
        return commands[args.command](config)
    except (MissingTraceError, HopError, LiveBackendError) as err:
        logger.error('%s', err)
        return EXIT_RUNTIME
    except (ConfigError, TraceFormatError, CalibrationError) as err:
        logger.error('%s', err)
        return EXIT_CONFIG
    except OSError as err:
        logger.error('Writing outputs failed: %s', err)
        return EXIT_RUNTIME


def _load_traces(path):
    logger = logging.getLogger("cascade-router")
    if path is None:
        raise ConfigError("No trace file given; pass one on the command line or set 'traces' in the config")
    try:
        handle = open(path, 'rb')
    except OSError as err:
        raise ConfigError("Cannot read trace file {}: {}".format(path, err.strerror))
    with handle:
        try:
            traces = load_trace_set(handle)
        except TraceFormatError:
            logger.error('Malformed trace file %s', path)
            raise
    if not len(traces):
        raise ConfigError("empty dataset: {} holds no traces".format(path))
    logger.info('Loaded %s traces for %s queries from %s', len(traces), len(traces.query_ids()), path)
    return traces


def _load_queries(config, traces):
    if config.queries is None:
        return traces.queries()
    try:
        with open(config.queries, 'rb') as handle:
            queries = load_queries(handle)
    except OSError as err:
        raise ConfigError("Cannot read query file {}: {}".format(config.queries, err.strerror))
    if not queries:
        raise ConfigError("empty dataset: {} holds no queries".format(config.queries))
    return queries


def _edit_pool(config, pool):
    logger = logging.getLogger("cascade-router")
    if not config.pool_remove:
        return pool
    try:
        edited = apply_pool_edit(pool, config.pool_remove)
    except ValueError as err:
        raise ConfigError("--pool-remove: {}".format(err))
    logger.info('Routing with reduced pool %s', ", ".join(edited.ids))
    return edited


def _out_path(config, name):
    return os.path.join(config.out, name)


def _route_and_report(config, manifest, pool, traces, queries, scenario):
    """Route queries, write the outcome log, report and manifest, return the exit code."""
    logger = logging.getLogger("cascade-router")
    validate_scenario(scenario)
    engine_config = config.build_engine_config()
    policies = config.build_policies(pool.ids)
    truth = config.eval.get('truth', 'greedy')

    outcomes = run_batch(queries, pool, policies, scenario, traces, engine_config)
    manifest.add_output(write_outcomes(_out_path(config, 'outcomes.jsonl'), outcomes))
    manifest.partial = is_partial(outcomes)
    if all(outcome.error is not None for outcome in outcomes):
        logger.error('Every query failed on a live hop, no report written')
        manifest.write(_out_path(config, 'manifest.json'))
        return EXIT_RUNTIME

    report = aggregate(outcomes, scenario, pool)
    oracle_report = None
    topline = None
    if not pool.has_live_agents:
        cutoff = config.eval.get('easy_cutoff_rank')
        if cutoff is not None:
            try:
                split = easy_hard_split(outcomes, pool, traces, int(cutoff), truth)
            except ValueError as err:
                raise ConfigError("eval.easy_cutoff_rank: {}".format(err))
            report = report._replace(easy_hard_costs=split)
        entry = pool.by_rank(resolve_entry_rank(pool, engine_config))
        if not pool.is_fallback(entry):
            decided, capable = agent_decisions(traces, entry.id, policies[entry.id], scenario,
                                               engine_config.seed, truth)
            if decided:
                report = report._replace(classification=classification_metrics(decided, capable))

        oracle_outcomes = run_baseline(BaselineSpec('oracle'), queries, pool, traces, scenario, engine_config,
                                       truth=truth)
        oracle_report = aggregate(oracle_outcomes, scenario, pool)
        topline = topline_ratio(report, oracle_report)

    extra_rows = []
    if oracle_report is not None:
        extra_rows = [('oracle_performance', '', oracle_report.performance),
                      ('oracle_mean_cost', '', oracle_report.mean_cost),
                      ('oracle_utility', '', oracle_report.utility)]
        if topline is not None:
            extra_rows.append(('topline_ratio', '', topline))
    manifest.add_output(write_report_csv(_out_path(config, 'report.csv'), report, extra_rows))
    manifest.add_output(write_report_json(_out_path(config, 'report.json'), report, oracle_report, topline))

    logger.info('Performance %.4f, cost %.4f, utility %.4f over %s queries (alpha=%s)',
                report.performance, report.mean_cost, report.utility, report.n_queries, scenario.alpha)

    if config.compare:
        if pool.has_live_agents:
            logger.warning('Skipping --compare, live agents have no traces to run baselines on')
        else:
            rows = comparison_rows(queries, pool, traces, policies, engine_config, scenario.gamma, config.external)
            table = comparison_markdown(rows)
            manifest.add_output(atomic_write(_out_path(config, 'comparison.md'), lambda handle: handle.write(table)))
            sys.stdout.write(table)

    manifest.write(_out_path(config, 'manifest.json'))
    if manifest.partial:
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_simulate(config):
    """Generate a synthetic pool, route it and write traces, outcomes, report and manifest."""
    logger = logging.getLogger("cascade-router")
    spec = config.build_synthetic_spec()
    if spec is None:
        raise ConfigError("simulate needs a 'synthetic' section in the config")
    if spec.n_queries == 0:
        raise ConfigError("empty dataset: synthetic.n_queries is 0")

    manifest = RunManifest(config.config_hash(), config.seed, 'simulate')
    synthetic = generate_synthetic(spec)
    logger.info('Generated %s queries for agents %s', len(synthetic.queries), ", ".join(synthetic.pool.ids))
    manifest.add_output(write_traces(_out_path(config, 'traces.jsonl'), synthetic.traces))

    pool = config.build_pool() if config.pool else synthetic.pool
    pool = _edit_pool(config, pool)
    return _route_and_report(config, manifest, pool, synthetic.traces, synthetic.queries, config.build_scenario())


def cmd_replay(config):
    """Route recorded traces and write outcomes, report and manifest."""
    traces = _load_traces(config.traces)
    queries = _load_queries(config, traces)
    pool = _edit_pool(config, config.build_pool())
    manifest = RunManifest(config.config_hash(), config.seed, 'replay')
    return _route_and_report(config, manifest, pool, traces, queries, config.build_scenario())


def cmd_sweep(config):
    """Route the same traces under every alpha and check the routing shifts towards cheaper agents."""
    logger = logging.getLogger("cascade-router")
    alphas = sorted(config.alphas or SCENARIO_ALPHAS.values())
    manifest = RunManifest(config.config_hash(), config.seed, 'sweep')

    if config.traces is not None:
        traces = _load_traces(config.traces)
        queries = _load_queries(config, traces)
        pool = config.build_pool()
    else:
        spec = config.build_synthetic_spec()
        if spec is None:
            raise ConfigError("sweep needs a trace file or a 'synthetic' section in the config")
        if spec.n_queries == 0:
            raise ConfigError("empty dataset: synthetic.n_queries is 0")
        synthetic = generate_synthetic(spec)
        traces, queries = synthetic.traces, synthetic.queries
        pool = config.build_pool() if config.pool else synthetic.pool
    pool = _edit_pool(config, pool)
    if pool.has_live_agents:
        raise ConfigError("sweep runs on traces only, the pool has live agents")

    engine_config = config.build_engine_config()
    policies = config.build_policies(pool.ids)
    runs = []
    reports = []
    for alpha in alphas:
        scenario = config.build_scenario(alpha)
        validate_scenario(scenario)
        outcomes = run_batch(queries, pool, policies, scenario, traces, engine_config)
        report = aggregate(outcomes, scenario, pool)
        runs.append((alpha, outcomes))
        reports.append(report)
        manifest.add_output(write_report_json(_out_path(config, 'report_alpha_{}.json'.format(alpha)), report))
        logger.info('alpha=%s: performance %.4f, cost %.4f, utility %.4f',
                    alpha, report.performance, report.mean_cost, report.utility)

    cost_violations = cost_monotonicity_violations(runs, pool)
    rate_violations = answer_rate_violations(reports)
    for query_id, low, high in cost_violations:
        logger.warning('Query %r moved to a more expensive agent from alpha=%s to alpha=%s', query_id, low, high)
    for agent_id, low, high in rate_violations:
        logger.warning('Answer rate of %s dropped from alpha=%s to alpha=%s', agent_id, low, high)

    manifest.add_output(write_sweep_csv(_out_path(config, 'sweep.csv'), reports, pool.ids))
    summary = OrderedDict([
        ('alphas', alphas),
        ('cost_monotonic', not cost_violations),
        ('cost_violations', [list(violation) for violation in cost_violations]),
        ('answer_rate_monotonic', not rate_violations),
        ('answer_rate_violations', [list(violation) for violation in rate_violations]),
        ('reports', [report.to_dict() for report in reports]),
    ])
    manifest.add_output(write_json(_out_path(config, 'sweep.json'), summary))
    manifest.write(_out_path(config, 'manifest.json'))
    return EXIT_OK


def cmd_label(config):
    """Write SFT labels for every trace under every alpha, plus stratum counts."""
    logger = logging.getLogger("cascade-router")
    traces = _load_traces(config.traces)
    alphas = config.alphas or list(SCENARIO_ALPHAS.values())
    scenarios = [config.build_scenario(alpha) for alpha in alphas]

    out = config.out
    if os.path.isdir(out) or out.endswith(os.sep):
        out = os.path.join(out, 'sft_labels.jsonl')

    records = build_sft_dataset(traces, scenarios, balance=config.balance, seed=config.seed)
    write_jsonl(out, records)

    counts = Counter((record['agent_id'], record['scenario'], record['alpha'], record['label'])
                     for record in records)
    strata = []
    for scenario in scenarios:
        for agent_id in traces.agent_ids():
            strata.append(OrderedDict([
                ('agent_id', agent_id),
                ('scenario', scenario.name),
                ('alpha', scenario.alpha),
                ('answer', counts[(agent_id, scenario.name, scenario.alpha, 'answer')]),
                ('reject', counts[(agent_id, scenario.name, scenario.alpha, 'reject')]),
            ]))
    summary = OrderedDict([
        ('records', len(records)),
        ('balanced', config.balance),
        ('strata', strata),
        ('empty_strata', [list(stratum) for stratum in find_empty_strata(traces, scenarios)]),
    ])
    write_json(out + '.summary.json', summary)
    logger.info('Wrote %s labelled records to %s', len(records), out)
    return EXIT_OK
