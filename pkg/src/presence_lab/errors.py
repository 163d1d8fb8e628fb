"""Exception hierarchy shared by all modules."""


class PresenceLabError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(PresenceLabError):
    """Invalid or incomplete experiment configuration."""


class ThetaOutOfDomain(PresenceLabError):
    """theta outside the declared finiteness domain of the cumulant."""


class SpeedOutOfRange(PresenceLabError):
    """Requested drift is not attained by the cumulant derivative."""


class NoConvergence(PresenceLabError):
    """A bracketed root search exhausted its iteration/bracket budget."""


class BelowDomain(PresenceLabError):
    """Argument at or below the lower domain edge of the growth exponent."""


class UnsupportedPalm(PresenceLabError):
    """No exact size-biased sibling kernel is available for this model."""


class XNotInSupport(PresenceLabError):
    """Conditioning point is not an atom of the intensity."""


class NonFiniteSample(PresenceLabError):
    """A Monte Carlo functional overflowed or produced NaN."""


class CapExceeded(PresenceLabError):
    """A configuration or population exceeded its hard size cap."""


class PopulationCap(CapExceeded):
    """Live fragment population exceeded the cap (missing/ineffective prune)."""


class WindowOverflow(PresenceLabError):
    """Grid support grew past the configured window and loss tolerance."""


class UnsupportedModel(PresenceLabError):
    """Operation has no exact strategy for this model kind."""


class NotSubcritical(PresenceLabError):
    """Operation requires a subcritical speed (positive rate function)."""


class GeometricModel(PresenceLabError):
    """Operation requires a non-geometric dislocation measure."""


class UnsupportedSizeBiased(PresenceLabError):
    """Model exposes no size-biased jump structure."""


class PruningBias(PresenceLabError):
    """Functional would be biased by a pruned state; rerun without pruning."""


class GridMiss(PresenceLabError):
    """Too many field lookups fell outside the precomputed window."""
