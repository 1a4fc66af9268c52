"""Exception types raised across the package."""


class DimensionError(ValueError):
    """State or matrix dimension does not match what the operation expects."""


class IntegrationDivergedError(RuntimeError):
    def __init__(self, step, state=None):
        self.step = step
        self.state = state
        super().__init__(f"integration diverged at step {step}")


class DegenerateDictionaryError(RuntimeError):
    """Every singular value of the lifted data matrix was truncated."""


class IllConditionedEigenError(RuntimeError):
    """Eigenvector matrix of K is numerically singular."""


class UnresolvedBasinError(RuntimeError):
    def __init__(self, endpoint, t_final):
        self.endpoint = endpoint
        self.t_final = t_final
        super().__init__(
            f"endpoint {endpoint} at t={t_final} is not near any attractor target"
        )
