"""Exception and warning types raised across the toolkit."""


class DegbillError(Exception):
    """Base class for all toolkit errors."""


class OutOfTubeError(DegbillError):
    """A point or offset lies outside the tube of radius rho."""


class DegenerateProjectionError(DegbillError):
    """The nearest scatterer point is not unique (cut locus)."""


class OutsideDomainError(DegbillError):
    """A state lies outside the region where an operation is defined."""


class NeedsRegularization(DegbillError):
    """Physical integration came closer to the scatterer than the handoff radius.

    Attributes
    ----------
    trajectory : Trajectory
        The partial trajectory up to the handoff point.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class LeftTube(DegbillError):
    """Regularized integration left the tube; carries the exit state."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class StiffnessError(DegbillError):
    """Integrator step size underflow or non-finite state."""


class NoConnectionError(DegbillError):
    """A boundary-value or Newton solve failed to converge."""


class ConjugatePointsError(NoConnectionError):
    """The shooting Jacobian is singular: endpoints are conjugate."""


class TwistConditionError(DegbillError):
    """A restricted twist block is not invertible."""


class BranchPointError(DegbillError):
    """Square-root lift requested at the branch point u = 0 or xi = 0."""


class GaugeViolationError(DegbillError):
    """KS state with nonzero bilinear gauge integral."""


class GaugeSelectionError(DegbillError):
    """No KS gauge angle gives a nonzero offset pairing (opposite offsets)."""


class DomainError(DegbillError):
    """Inputs violate the admissible set of a connection problem."""


class ConfigError(DegbillError):
    """Configuration file is malformed or inconsistent."""


class DegenerateChainWarning(UserWarning):
    """A critical chain has a singular Hessian; the kernel basis is attached."""
