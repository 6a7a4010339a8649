"""Module for routing jobs handed to the worker pools."""


class RouteJob(object):
    """Everything needed to route a query, except the query itself."""

    __slots__ = ['pool', 'policies', 'scenario', 'traces', 'config', 'collect_errors']

    def __init__(self, pool, policies, scenario, traces, config, collect_errors=False):
        """Initialise the routing job."""
        self.pool = pool
        self.policies = policies
        self.scenario = scenario
        self.traces = traces
        self.config = config
        self.collect_errors = collect_errors

    def __call__(self, query):
        """Route one query."""
        # imported here, the engine imports this module
        from .engine import route_one, failed_outcome
        from .errors import HopError

        try:
            return route_one(query, self.pool, self.policies, self.scenario, self.traces, self.config)
        except HopError as err:
            if not self.collect_errors:
                raise
            return failed_outcome(query, err)

    def __eq__(self, other):
        """Check for equality."""
        if not isinstance(other, RouteJob):
            return False

        return self.pool == other.pool and \
            self.policies == other.policies and \
            self.scenario == other.scenario and \
            self.traces is other.traces and \
            self.config == other.config and \
            self.collect_errors == other.collect_errors
