from dataclasses import dataclass, replace

# --- Defaults ---
CLUSTER_TOL = 1e-8
PRUNE_REL = 1e-14
GRAD_STEP = 1e-5
THIRD_STEP = 1e-4
JACOBIAN_STEP = 1e-7


@dataclass(frozen=True)
class Settings:
    """Numerical knobs shared by every module. All tolerances scale with `precision`."""

    precision: float = 1.0
    cluster_tol: float = CLUSTER_TOL
    prune_rel: float = PRUNE_REL
    grad_step: float = GRAD_STEP
    third_step: float = THIRD_STEP
    jacobian_step: float = JACOBIAN_STEP
    seed: int = 0

    def tol(self, base, scale=1.0):
        return base * self.precision * max(1.0, float(scale))

    def with_overrides(self, **kwargs):
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


DEFAULT_SETTINGS = Settings()
