"""Exception types raised across the toolkit."""


class MbmlmcError(Exception):
    """Base class for all toolkit errors."""


class NonTilingEdge(MbmlmcError):
    """Block edge does not divide the domain extents."""


class OutsideDomain(MbmlmcError):
    """Query point lies outside the computational domain."""


class UnknownRegion(MbmlmcError):
    """Referenced block id or region does not exist."""


class InvalidFractions(MbmlmcError):
    """Volume fractions are not a partition of unity in [0, 1]."""


class InvalidPoisson(MbmlmcError):
    """Poisson ratio outside (-1, 0.5)."""


class NotApplicable(MbmlmcError):
    """Operation is not defined for this material kind."""


class MeshSpecMismatch(MbmlmcError):
    """Mesh was not generated for the requested model."""


class NonNestedSizes(MbmlmcError):
    """Mesh sizes are not power-of-two divisions of the block edge."""


class SolverDiverged(MbmlmcError):
    """Iterative solver hit its iteration cap before the tolerance."""


class SingularSystem(MbmlmcError):
    """Linear system has no Dirichlet constraints and is singular."""


class RegionUnresolved(MbmlmcError):
    """QoI region is not resolved by the reference mesh."""


class MeshMismatch(MbmlmcError):
    """Fields or coefficient fields live on different meshes."""


class DegenerateCombination(MbmlmcError):
    """Denominator in the bound combination vanished."""


class BiasExceedsTolerance(MbmlmcError):
    """Measured bias is not smaller than the total tolerance."""


class NotEnoughModels(MbmlmcError):
    """Model sequence is too short for the requested number of levels."""


class ConfigError(MbmlmcError):
    """Experiment configuration failed validation."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
