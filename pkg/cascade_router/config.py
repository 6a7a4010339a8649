"""Configuration for the router."""
import codecs
from collections import OrderedDict
import copy
import hashlib
import json
import os

import yaml

from .agents import SyntheticPoolSpec, calibrate_skills, optional_live_spec
from .engine import EngineConfig, parse_overhead
from .errors import ConfigError
from .evaluation import TRUTH_SOURCES
from .model import Pool, SCENARIO_NAMES, Scenario, validate_pool
from .policy import PolicyConfig


# engine keys that change how fast a run goes, not what it produces
_UNHASHED_ENGINE_KEYS = ('parallel', 'max_in_flight', 'progress_bar')


def _check_keys(section, value, allowed):
    if not isinstance(value, dict):
        raise ConfigError("{}: expected a mapping, got {!r}".format(section, value))
    unknown = set(value) - set(allowed)
    if unknown:
        raise ConfigError("{}: unrecognized key(s): {}".format(section, ", ".join(sorted(unknown))))


class RouterConfig(object):
    """Configuration object for cascade-router."""

    _DEFAULTS = {
        'pool': [],
        'scenario': {'name': 'balance'},
        'engine': {},
        'policy': {},
        'policies': {},
        'synthetic': None,
        'external': {},
        'eval': {},
        'traces': None,
        'queries': None,
        'alphas': [],
        'pool_remove': [],
        'balance': False,
        'compare': False,
        'out': os.getcwd(),
    }

    _CHOICES = {
        'scenario': SCENARIO_NAMES,
        'overhead_mode': EngineConfig._DEFAULTS['overhead_mode'],
        'policy': PolicyConfig._DEFAULTS['kind'],
        'capability_source': PolicyConfig._DEFAULTS['capability_source'],
        'truth': TRUTH_SOURCES,
    }

    _SECTIONS = ['pool', 'scenario', 'engine', 'policy', 'policies', 'synthetic', 'external', 'eval', 'traces',
                 'queries']

    __slots__ = (
        '_pool',
        '_scenario',
        '_engine',
        '_policy',
        '_policies',
        '_synthetic',
        '_external',
        '_eval',
        'traces',
        'queries',
        '_alphas',
        '_pool_remove',
        'balance',
        'compare',
        'out',
    )

    def __init__(self):
        """Set up a config object with all default values."""
        for slot in self.__slots__:
            if slot.startswith('_'):
                slot = slot[1:]
            setattr(self, slot, self.get_default(slot))

    @property
    def pool(self):
        """Access the pool entries."""
        return self._pool

    @pool.setter
    def pool(self, value):
        if not isinstance(value, list):
            raise ConfigError("pool: expected a list of agents, got {!r}".format(value))
        entries = []
        for index, entry in enumerate(value):
            section = "pool[{}]".format(index)
            _check_keys(section, entry, ('id', 'cost', 'backend'))
            for required in ('id', 'cost'):
                if required not in entry:
                    raise ConfigError("{}: missing key {!r}".format(section, required))
            backend = entry.get('backend', 'trace')
            try:
                optional_live_spec(backend)
            except ConfigError as err:
                raise ConfigError("{}.backend: {}".format(section, err))
            entries.append({'id': str(entry['id']), 'cost': float(entry['cost']), 'backend': backend})
        self._pool = entries

    @property
    def scenario(self):
        """Access the scenario section."""
        return self._scenario

    @scenario.setter
    def scenario(self, value):
        _check_keys('scenario', value, ('name', 'alpha', 'gamma', 'instruction'))
        value = dict(value)
        self._scenario = value
        self.build_scenario()

    @property
    def engine(self):
        """Access the engine section."""
        return self._engine

    @engine.setter
    def engine(self, value):
        _check_keys('engine', value, EngineConfig._DEFAULTS)
        EngineConfig(**value)
        self._engine = dict(value)

    @property
    def seed(self):
        """The run seed."""
        return self._engine.get('seed', EngineConfig._DEFAULTS['seed'])

    @property
    def policy(self):
        """Access the default policy section."""
        return self._policy

    @policy.setter
    def policy(self, value):
        _check_keys('policy', value, PolicyConfig._DEFAULTS)
        PolicyConfig.from_dict(value)
        self._policy = dict(value)

    @property
    def policies(self):
        """Access the per-agent policy overrides."""
        return self._policies

    @policies.setter
    def policies(self, value):
        if not isinstance(value, dict):
            raise ConfigError("policies: expected a mapping of agent id to policy, got {!r}".format(value))
        for agent_id, overrides in value.items():
            _check_keys("policies.{}".format(agent_id), overrides, PolicyConfig._DEFAULTS)
            merged = dict(self._policy)
            merged.update(overrides)
            PolicyConfig.from_dict(merged)
        self._policies = {str(agent_id): dict(overrides) for agent_id, overrides in value.items()}

    @property
    def synthetic(self):
        """Access the synthetic pool section."""
        return self._synthetic

    @synthetic.setter
    def synthetic(self, value):
        if value is not None:
            _check_keys('synthetic', value, SyntheticPoolSpec._fields + ('target_accuracies',))
            if 'skills' not in value and 'target_accuracies' not in value:
                raise ConfigError("synthetic: needs either 'skills' or 'target_accuracies'")
            value = dict(value)
        self._synthetic = value

    @property
    def external(self):
        """Access the external-threshold baseline section."""
        return self._external

    @external.setter
    def external(self, value):
        _check_keys('external', value, ('score_noise_sigma', 'threshold'))
        sigma = float(value.get('score_noise_sigma', 0.0))
        if sigma < 0:
            raise ConfigError("external.score_noise_sigma must be >= 0, got {}".format(sigma))
        threshold = value.get('threshold')
        if threshold is not None and not 0.0 <= float(threshold) <= 1.0:
            raise ConfigError("external.threshold must be in [0, 1], got {}".format(threshold))
        self._external = dict(value)

    @property
    def eval(self):
        """Access the evaluation section."""
        return self._eval

    @eval.setter
    def eval(self, value):
        _check_keys('eval', value, ('easy_cutoff_rank', 'truth'))
        if value.get('truth', 'greedy') not in self.get_choices('truth'):
            raise ConfigError("eval.truth: unsupported truth source {!r}".format(value['truth']))
        cutoff = value.get('easy_cutoff_rank')
        if cutoff is not None and int(cutoff) < 1:
            raise ConfigError("eval.easy_cutoff_rank must be >= 1, got {}".format(cutoff))
        self._eval = dict(value)

    @property
    def alphas(self):
        """Get the alphas of a sweep."""
        return self._alphas

    @alphas.setter
    def alphas(self, value):
        alphas = []
        for alpha in _create_list(value):
            try:
                alpha = float(alpha)
            except ValueError:
                raise ConfigError("Invalid alpha: {!r}".format(alpha))
            if not 0.0 <= alpha <= 1.0:
                raise ConfigError("alpha must be in [0, 1], got {}".format(alpha))
            alphas.append(alpha)
        self._alphas = alphas

    @property
    def pool_remove(self):
        """Get the agent ids to drop from the pool."""
        return self._pool_remove

    @pool_remove.setter
    def pool_remove(self, value):
        self._pool_remove = [agent_id for agent_id in _create_list(value) if agent_id]

    def build_scenario(self, alpha=None):
        """Build the Scenario, optionally for another alpha."""
        section = self._scenario
        gamma = section.get('gamma', Scenario().gamma)
        if alpha is not None:
            return Scenario.from_alpha(alpha, gamma)
        if 'name' in section:
            return Scenario(section['name'], alpha=section.get('alpha'), gamma=gamma,
                            instruction=section.get('instruction'))
        if 'alpha' not in section:
            raise ConfigError("scenario: needs a 'name' or an 'alpha'")
        scenario = Scenario.from_alpha(section['alpha'], gamma)
        if section.get('instruction') is not None:
            scenario = Scenario(scenario.name, alpha=scenario.alpha, gamma=gamma,
                                instruction=section['instruction'])
        return scenario

    def build_engine_config(self):
        """Build the EngineConfig."""
        return EngineConfig(**self._engine)

    def build_pool(self):
        """Build the agent pool from the pool section, applying pool_remove afterwards.

        Raises
        ------
        ConfigError
            if the pool section is empty or violates the pool invariants

        """
        if not self._pool:
            raise ConfigError("pool: no agents configured")
        pool = Pool.from_costs(
            [entry['cost'] for entry in self._pool],
            [entry['id'] for entry in self._pool],
            [optional_live_spec(entry['backend']) or 'trace' for entry in self._pool],
        )
        violations = validate_pool(pool)
        if violations:
            raise ConfigError("pool: {}".format("; ".join(violations)))
        return pool

    def build_policies(self, agent_ids):
        """Build one PolicyConfig per agent: the default policy with the agent's overrides."""
        policies = OrderedDict()
        for agent_id in agent_ids:
            values = dict(self._policy)
            values.update(self._policies.get(agent_id, {}))
            policies[agent_id] = PolicyConfig.from_dict(values)
        return policies

    def build_synthetic_spec(self):
        """Build the SyntheticPoolSpec, calibrating skills if target accuracies are given.

        Returns None without a synthetic section.
        """
        if self._synthetic is None:
            return None
        values = dict(self._synthetic)
        targets = values.pop('target_accuracies', None)
        values.setdefault('seed', self.seed)
        if self._pool:
            values.setdefault('costs', [entry['cost'] for entry in self._pool])
            values.setdefault('agent_ids', [entry['id'] for entry in self._pool])
        values.setdefault('skills', ())
        spec = SyntheticPoolSpec.from_dict(values)
        if targets is not None:
            spec = calibrate_skills(targets, template=spec)
        return spec

    def as_dict(self):
        """The effective configuration as plain data."""
        result = OrderedDict()
        for section in self._SECTIONS:
            result[section] = copy.deepcopy(getattr(self, section))
        for backend_entry in result['pool']:
            live = optional_live_spec(backend_entry['backend'])
            if live is not None:
                backend_entry['backend'] = dict(live._asdict(), kind='live')
        result['alphas'] = list(self._alphas)
        result['pool_remove'] = list(self._pool_remove)
        result['balance'] = self.balance
        return result

    def config_hash(self):
        """SHA-256 over the canonical JSON of everything that affects the outputs."""
        values = self.as_dict()
        for key in _UNHASHED_ENGINE_KEYS:
            values['engine'].pop(key, None)
        canonical = json.dumps(values, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    @classmethod
    def from_kwargs(cls, **kwargs):
        """Initialise configuration from kwargs."""
        config = cls()
        for slot in cls.__slots__:
            if slot.startswith('_'):
                slot = slot[1:]
            setattr(config, slot, kwargs.pop(slot, cls.get_default(slot)))

        if kwargs:
            raise ConfigError("Unrecognized option(s): {}".format(", ".join(sorted(kwargs))))
        return config

    @classmethod
    def from_file(cls, path):
        """Initialise from a YAML (or JSON) configuration file.

        Relative trace and query paths are taken relative to the file.
        """
        try:
            with codecs.open(path, 'r', encoding='utf-8') as handle:
                values = yaml.safe_load(handle)
        except OSError as err:
            raise ConfigError("Cannot read config file {}: {}".format(path, err.strerror))
        except yaml.YAMLError as err:
            raise ConfigError("{}: not valid YAML: {}".format(path, err))
        if values is None:
            values = {}
        if not isinstance(values, dict):
            raise ConfigError("{}: expected a mapping at the top level".format(path))
        unknown = set(values) - set(cls._SECTIONS)
        if unknown:
            raise ConfigError("{}: unrecognized section(s): {}".format(path, ", ".join(sorted(unknown))))

        base = os.path.dirname(os.path.abspath(path))
        for key in ('traces', 'queries'):
            if values.get(key) is not None and not os.path.isabs(values[key]):
                values[key] = os.path.join(base, values[key])

        # policy must be set before the per-agent overrides are checked against it
        ordered = OrderedDict((key, values[key]) for key in cls._SECTIONS if key in values)
        return cls.from_kwargs(**ordered)

    @classmethod
    def from_namespace(cls, namespace):
        """Initialise from an argparser Namespace: the --config file plus command line overrides."""
        config_file = getattr(namespace, 'config', None)
        config = cls.from_file(config_file) if config_file else cls()

        engine = dict(config.engine)
        if getattr(namespace, 'seed', None) is not None:
            engine['seed'] = namespace.seed
        if getattr(namespace, 'overhead', None) is not None:
            engine['overhead_mode'], engine['overhead_fraction'] = parse_overhead(namespace.overhead)
        if getattr(namespace, 'parallel', None) is not None:
            engine['parallel'] = namespace.parallel
        if getattr(namespace, 'progress_bar', False):
            engine['progress_bar'] = True
        config.engine = engine

        scenario = dict(config.scenario)
        if getattr(namespace, 'alpha', None) is not None:
            scenario = {'alpha': namespace.alpha}
            if 'gamma' in config.scenario:
                scenario['gamma'] = config.scenario['gamma']
        if getattr(namespace, 'gamma', None) is not None:
            scenario['gamma'] = namespace.gamma
        config.scenario = scenario

        for slot in ('traces', 'alphas', 'pool_remove', 'out'):
            if getattr(namespace, slot, None) is not None:
                setattr(config, slot, getattr(namespace, slot))
        for flag in ('balance', 'compare'):
            if getattr(namespace, flag, False):
                setattr(config, flag, True)
        if config.traces is not None:
            config.traces = os.path.abspath(config.traces)

        return config

    @classmethod
    def get_default(cls, category):
        """Get the default value of a given category."""
        value = cls._DEFAULTS[category]
        if isinstance(value, (dict, list)):
            return copy.deepcopy(value)
        return value

    @classmethod
    def get_choices(cls, category):
        """Get all available options for a category."""
        if category not in cls._CHOICES:
            raise ValueError("{} does not offer choices".format(category))
        return list(cls._CHOICES[category])


def _create_list(value):
    """Create a list from the input value.

    If the input is a list already, return it.
    If the input is a comma-separated string, split it.
    """
    if isinstance(value, list):
        return value
    elif isinstance(value, (tuple, set)):
        return list(value)
    elif isinstance(value, str):
        return [part.strip() for part in value.split(',')]
    else:
        raise ConfigError("Can't create list for input {!r}".format(value))
