"""Exception types shared across the package."""


class FovMatchError(Exception):
    """Base class for all package-specific errors."""


class AllStationary(FovMatchError):
    """No frame of a trajectory moves by at least speed_epsilon."""


class MismatchedLengths(FovMatchError):
    """Trajectories disagree in frame count or frame rate."""


class DimensionMismatch(FovMatchError):
    """Descriptor vectors (or series) disagree in dimension or length."""


class InsufficientOverlap(FovMatchError):
    """No admissible offset satisfies the minimum overlap requirement."""


class ZeroMatrix(FovMatchError):
    """An all-zero matrix where a nonzero one is required."""


class NoConvergence(FovMatchError):
    """Power iteration hit the iteration cap.

    Non-fatal for callers that only rank: the last iterate is attached.
    """

    def __init__(self, eigenvalue, eigenvector, iterations):
        super().__init__(
            f"power iteration did not converge within {iterations} iterations"
        )
        self.eigenvalue = eigenvalue
        self.eigenvector = eigenvector
        self.iterations = iterations


class InfeasibleMotion(FovMatchError):
    """Arena too small for the requested speed range."""
