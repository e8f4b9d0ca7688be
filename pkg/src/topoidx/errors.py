"""Exception types used across the package.

Every failure mode that a numerical certificate can hit has its own
exception class so that callers (and the command line driver) can react
to the *reason* a computation stopped, not just the fact that it did.
Exceptions carry the offending numbers whenever that is cheap to do.
"""

__all__ = [
    'TopoidxError', 'GapClosed', 'GapClosedWarning', 'NotInvertible',
    'BranchCutHit', 'OddDimension', 'EvenDimension', 'InvalidCosets',
    'FiberParity', 'NotChiral', 'NotFlat', 'UnsupportedClass',
    'NotConverged', 'GridTooCoarse', 'IsometryMismatch',
    'PreconditionBound', 'InsufficientVolume', 'MatchingFailed',
    'SingularPath', 'SplitFailed', 'NotDimerClosed', 'CollinearityFailure',
    ]


class TopoidxError(Exception):
    """Base class for all package specific errors."""


class GapClosed(TopoidxError):
    """The spectral gap of a Hamiltonian fell below the gap tolerance.

    Raised before any flattening step that would divide by (a function
    of) the gap.  Carries the measured gap in ``args[1]`` when known.
    """


class GapClosedWarning(UserWarning):
    """A model was built with parameters whose spectral gap is below the
    gap tolerance.  Construction still succeeds; downstream flattening
    will raise GapClosed."""


class NotInvertible(TopoidxError):
    """An operator that must be invertible is singular to tolerance."""


class BranchCutHit(TopoidxError):
    """An eigenvalue lies on (or too close to) the negative real axis,
    where the principal branch of the square root is discontinuous."""


class OddDimension(TopoidxError):
    """The requested construction only exists in even space dimension."""


class EvenDimension(TopoidxError):
    """The requested construction only exists in odd space dimension."""


class InvalidCosets(TopoidxError):
    """Coset representatives do not tile the lattice for the given
    sublattice matrix (wrong count, or two representatives congruent)."""


class FiberParity(TopoidxError):
    """The internal fiber dimension is incompatible with the requested
    symmetry class (e.g. an odd fiber for a quaternionic structure)."""


class NotChiral(TopoidxError):
    """The operator fails to anticommute with the chiral grading."""


class NotFlat(TopoidxError):
    """The operator is not a self-adjoint unitary to tolerance."""


class UnsupportedClass(TopoidxError):
    """The symmetry class label is unknown, or the requested operation
    is not defined for it."""


class NotConverged(TopoidxError):
    """A certification scan did not stabilize within its radius budget.

    The partial report, when available, is attached as ``report``.
    """

    def __init__(self, *args, report=None):
        super().__init__(*args)
        self.report = report


class GridTooCoarse(TopoidxError):
    """A momentum-space discretization is too coarse to trust."""


class IsometryMismatch(TopoidxError):
    """A partial isometry does not have the promised initial/final
    projections."""


class PreconditionBound(TopoidxError):
    """A quantitative precondition of a lemma-level routine failed
    (for instance a coupling norm exceeding its geometric budget)."""


class InsufficientVolume(TopoidxError):
    """The truncated lattice is too small to host the requested
    geometric construction (not enough shells, cones, or sites)."""


class MatchingFailed(TopoidxError):
    """A site matching (e.g. for a proper-set isometry) left mandatory
    sites unmatched."""


class SingularPath(TopoidxError):
    """An operator path left the invertibles: some grid point has a
    smallest singular value below tolerance."""


class SplitFailed(TopoidxError):
    """A proper set could not be split into two proper halves with the
    required per-cone multiplicities."""


class NotDimerClosed(TopoidxError):
    """An operator expected to act dimer-by-dimer leaks outside the
    dimer spans."""


class CollinearityFailure(TopoidxError):
    """A column of an operator is too close to a multiple of its own
    basis vector, so no rank-one repair direction exists."""
