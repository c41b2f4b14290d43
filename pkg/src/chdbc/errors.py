"""Exception hierarchy shared by all modules.

Every error carries a short machine-readable ``tag`` used by the CLI when it
reports a failure.
"""


class ChdbcError(Exception):
    tag = "ERROR"


class DomainError(ChdbcError, ValueError):
    tag = "DOMAIN_ERROR"


class ConvergenceError(ChdbcError):
    tag = "CONVERGENCE_ERROR"


class AssumptionViolation(ChdbcError):
    """Raised when a potential pair fails one of the structural hypotheses.

    ``failures`` lists ``(name, witness_r, detail)`` triples in check order.
    """

    tag = "ASSUMPTION_VIOLATION"

    def __init__(self, failures):
        self.failures = list(failures)
        names = ", ".join(f"{name} at r={r:.6g}" for name, r, _ in self.failures)
        super().__init__(f"assumption(s) violated: {names}")

    @property
    def inequalities(self):
        return [name for name, _, _ in self.failures]


class NotDoubleWell(ChdbcError):
    tag = "NOT_DOUBLE_WELL"


class ConfigError(ChdbcError, ValueError):
    tag = "CONFIG_ERROR"


class NonZeroMean(ChdbcError, ValueError):
    tag = "NONZERO_MEAN"


class SolverStall(ChdbcError):
    tag = "SOLVER_STALL"


class InadmissibleInitialData(ChdbcError, ValueError):
    tag = "INADMISSIBLE_INITIAL_DATA"


class NewtonDivergence(ChdbcError):
    tag = "NEWTON_DIVERGENCE"


class SeparationBreach(ChdbcError):
    tag = "SEPARATION_BREACH"


class StepFloorReached(ChdbcError):
    tag = "NEWTON_DIVERGENCE"


class NonAdmissibleIterate(ChdbcError):
    tag = "NON_ADMISSIBLE_ITERATE"


class DegenerateSamples(ChdbcError):
    tag = "DEGENERATE_SAMPLES"


class NotDecaying(ChdbcError):
    tag = "NOT_DECAYING"


class IdentityNotApplicable(ChdbcError):
    tag = "IDENTITY_NOT_APPLICABLE"
