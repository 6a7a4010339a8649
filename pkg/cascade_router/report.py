"""Write run outputs: reports, outcome logs, sweep tables and the run manifest.

Every file is written to a temporary file next to its destination first and
then renamed into place.
"""
import csv
from collections import OrderedDict
from datetime import datetime, timezone
import io
import json
import logging
import os
import tempfile

from .traces import dump_trace_set


REPORT_COLUMNS = ['metric', 'agent_id', 'value']


def atomic_write(path, write):
    """Call write(handle) on a temporary file, then move it to path."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.{}.'.format(os.path.basename(path)), suffix='.tmp')
    try:
        with io.open(fd, 'w', encoding='utf-8', newline='') as handle:
            write(handle)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
    return path


def _json(handle, data):
    json.dump(data, handle, indent=2)
    handle.write(u"\n")


def write_json(path, data):
    return atomic_write(path, lambda handle: _json(handle, data))


def write_jsonl(path, records):
    """Write one JSON object per line."""
    def write(handle):
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False))
            handle.write(u"\n")
    return atomic_write(path, write)


def write_traces(path, traces):
    return atomic_write(path, lambda handle: dump_trace_set(traces, handle))


def write_outcomes(path, outcomes):
    """Write the outcome log, one routing outcome per line."""
    return write_jsonl(path, (outcome.to_dict() for outcome in outcomes))


def report_rows(report):
    """Flatten an EvalReport into (metric, agent_id, value) rows."""
    rows = [
        ('alpha', '', report.alpha),
        ('n_queries', '', report.n_queries),
        ('performance', '', report.performance),
        ('mean_cost', '', report.mean_cost),
        ('utility', '', report.utility),
    ]
    rows.extend(('answer_rate', agent_id, rate) for agent_id, rate in report.per_agent_answer_rate.items())
    rows.extend(('routing_share', agent_id, share) for agent_id, share in report.routing_distribution.items())
    if report.classification:
        rows.extend(('classification_' + key, '', value) for key, value in report.classification.items())
    if report.easy_hard_costs:
        rows.extend((key, '', value) for key, value in report.easy_hard_costs.items())
    if report.delta_performance is not None:
        rows.append(('delta_performance', '', report.delta_performance))
    return rows


def write_report_csv(path, report, extra_rows=()):
    def write(handle):
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(REPORT_COLUMNS)
        for row in report_rows(report):
            writer.writerow(row)
        for row in extra_rows:
            writer.writerow(row)
    return atomic_write(path, write)


def write_report_json(path, report, oracle=None, topline=None):
    """Write the report, with the oracle's report on the same traces if there is one."""
    data = OrderedDict([('report', report.to_dict())])
    if oracle is not None:
        data['oracle'] = oracle.to_dict()
        data['topline_ratio'] = topline
    return write_json(path, data)


def sweep_rows(reports, agent_ids):
    """One row per alpha: aggregate metrics, answer rates and routing shares."""
    header = ['alpha', 'performance', 'mean_cost', 'utility']
    header.extend('answer_rate:{}'.format(agent_id) for agent_id in agent_ids)
    header.extend('routing_share:{}'.format(agent_id) for agent_id in agent_ids)
    rows = [header]
    for report in reports:
        row = [report.alpha, report.performance, report.mean_cost, report.utility]
        row.extend(report.per_agent_answer_rate.get(agent_id, '') for agent_id in agent_ids)
        row.extend(report.routing_distribution.get(agent_id, 0.0) for agent_id in agent_ids)
        rows.append(row)
    return rows


def write_sweep_csv(path, reports, agent_ids):
    def write(handle):
        writer = csv.writer(handle, lineterminator='\n')
        for row in sweep_rows(reports, agent_ids):
            writer.writerow(row)
    return atomic_write(path, write)


def _now():
    return datetime.now(timezone.utc).isoformat()


class RunManifest(object):
    """What a run did: configuration hash, seed, command, timestamps and outputs."""

    __slots__ = ['config_hash', 'seed', 'command', 'started', 'finished', 'outputs', 'partial']

    def __init__(self, config_hash, seed, command):
        """Start a manifest for a run that begins now."""
        self.config_hash = config_hash
        self.seed = seed
        self.command = command
        self.started = _now()
        self.finished = None
        self.outputs = []
        self.partial = False

    def add_output(self, path):
        """Record an output file."""
        self.outputs.append(os.path.basename(path))
        return path

    def to_dict(self):
        return OrderedDict((slot, getattr(self, slot)) for slot in self.__slots__)

    def write(self, path):
        """Stamp the finish time and write the manifest."""
        logger = logging.getLogger("cascade-router")
        self.finished = _now()
        self.add_output(path)
        write_json(path, self.to_dict())
        logger.info("Wrote run manifest to %s", path)
        return path
