"""Exception types raised across the toolkit.

Every error carries enough context in its message to identify the offending
input (node ids, clique indices, numeric bounds) without a debugger.
"""


class PcosimError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(PcosimError):
    """Invalid configuration value or malformed experiment spec."""


# -- topology ---------------------------------------------------------------

class SelfLoop(ConfigError):
    """An edge (i, i) was supplied; the diagonal must stay empty."""


class DuplicateEdge(ConfigError):
    """The same undirected edge appears twice in the edge list."""


class DelayOutOfRange(ConfigError):
    """A propagation delay lies outside [0, 1) oscillator periods."""


class DisconnectedGraph(ConfigError):
    """The graph is not connected."""


class CliqueExplosion(PcosimError):
    """Maximal-clique enumeration exceeded the configured cap."""


class AmbiguousPartition(PcosimError):
    """Two overlapping cliques have equal total demand, so the
    demand-based partition is not well defined."""


# -- synchronization --------------------------------------------------------

class RefractoryWindowEmpty(ConfigError):
    """No admissible refractory length exists for the given delays
    (2 max tau >= 1/2 + min tau)."""


class EventStorm(PcosimError):
    """More events than node_count**2 shared one timestamp; indicates an
    engine fault rather than legitimate cascading."""


class NoHead(PcosimError):
    """No node precedes all others; the state is not a valid delayed
    fixed point with bounded accumulated delay."""


# -- scheduling -------------------------------------------------------------

class InitRejectionExhausted(PcosimError):
    """Random schedule initialization failed to find a collision-free
    configuration within the retry cap."""


class NotInClique(PcosimError):
    """A node was queried against a clique it does not belong to."""


class MissingPreReference(PcosimError):
    """A scheduling update fired without a stored predecessor end-beacon
    reference; indicates an engine ordering bug."""


# -- spectral / predictions -------------------------------------------------

class EigenNoConvergence(PcosimError):
    """The dense eigensolver failed to converge."""


class UnsupportedArrangement(PcosimError):
    """The shared-node arrangement falls outside the closed-form cases
    (one shared node, a consecutive block, or two split blocks)."""


class AssumptionViolated(PcosimError):
    """A structural assumption required by the closed-form fixed point
    does not hold; the witness names the violating clique or nodes."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
