"""Exception hierarchy.

Every failure mode raised by the library derives from :class:`StolocError`
so callers can catch one base class at CLI boundaries.
"""


class StolocError(Exception):
    """Base class for all library errors."""


# -- priors ----------------------------------------------------------------

class ZeroSecondMoment(StolocError):
    """Prior has (numerically) zero second moment; cannot normalize."""


class NumericalUnderflow(StolocError):
    """All reweighted posterior masses underflowed (non-finite inputs)."""


class DivergentIntegral(StolocError):
    """Tilted density is not integrable over the quadrature range."""


class OutOfDomain(StolocError):
    """Target mean lies outside the attainable-mean interval."""


class NoConvergence(StolocError):
    """Iterative solver exhausted its budget."""


class OutOfGamma(StolocError):
    """(m, s) is not realizable as tilted first/second moments."""


# -- model -----------------------------------------------------------------

class SubcriticalBeta(StolocError):
    """Signal-to-noise ratio beta <= 1: spectral initialization undefined."""


class BelowBulkEdge(StolocError):
    """Top eigenvalue <= 2: no outlier, beta not identifiable."""


class DimensionMismatch(StolocError):
    """Inconsistent array shapes."""


# -- amp -------------------------------------------------------------------

class SymmetricPrior(StolocError):
    """Sign-alignment is undefined for symmetric priors."""


class WeakCharacteristic(StolocError):
    """|Im characteristic function| below threshold on the search grid."""


class SubcriticalTime(StolocError):
    """Matrix-observation AMP needs t > 1."""


# -- tap -------------------------------------------------------------------

class ZeroVector(StolocError):
    """Tangent basis requested at the origin."""


class NonpositiveVariance(StolocError):
    """sigma^2 + S(s) - Q(m) <= 0: infeasible TAP state."""


class NonpositiveGamma(StolocError):
    """Linear-model potential needs gamma > 0."""


class StepRejected(StolocError):
    """Natural gradient step rejected after repeated halvings."""


# -- sampler / oracle / metrics --------------------------------------------

class OracleFailure(StolocError):
    """Drift oracle failed inside the localization loop."""

    def __init__(self, step, cause):
        super().__init__(f"drift oracle failed at step {step}: {cause!r}")
        self.step = step
        self.cause = cause


class NonpositiveTopEigenvalue(StolocError):
    """Final matrix estimate has no positive top eigenvalue."""


class BudgetExceeded(StolocError):
    """Exact enumeration would exceed the configuration budget."""


class OutOfRange(StolocError):
    """Overlap prediction needs |m_i| <= 1."""


class NonIntegerOverlap(StolocError):
    """Samples are not supported on the +-1 grid."""
