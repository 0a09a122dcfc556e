"""
Bethe roots of the polynomial wave function and the leading-order data built on them.

The roots s_i solve (V2'(B) - S) e = 0 with
    B_ii = V1'(s_i) - (T/N) sum_{j!=i} 1/(s_i - s_j),   B_ij = -T / (N (s_i - s_j)).
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import AnchorError, ConfigError, SolverError, VerificationError
from .ratfun import Poly, PoleSum, make_anchors
from .records import decode_array, encode_array

log = logging.getLogger(__name__)


# --- Matrices ---

def inverse_differences(s):
    """M_ij = 1/(s_i - s_j) off the diagonal, 0 on it."""
    s = np.asarray(s, dtype=complex)
    diff = s[:, None] - s[None, :]
    np.fill_diagonal(diff, 1.0)
    out = 1.0 / diff
    np.fill_diagonal(out, 0.0)
    return out


def b_matrix(s, V1p, g):
    """B for roots s, V1' and g = T/N."""
    s = np.asarray(s, dtype=complex)
    inv = inverse_differences(s)
    B = -g * inv
    B[np.diag_indices_from(B)] = V1p(s) - g * inv.sum(axis=1)
    return B


def poly_apply(poly, M, vec):
    """p(M) @ vec by Horner's rule, without forming p(M)."""
    vec = np.asarray(vec, dtype=complex)
    out = np.zeros_like(vec)
    for c in poly.coeffs[::-1]:
        out = M @ out + c * vec
    return out


def bethe_residual(s, model, T=None):
    g = (model.T if T is None else T) / model.N
    B = b_matrix(s, model.V1p, g)
    return poly_apply(model.V2p, B, np.ones(len(s), dtype=complex)) - np.asarray(s, dtype=complex)


# --- Start points ---

def decoupled_roots(model):
    """All roots of V2'(V1'(x)) - x, the T = 0 limit of the Bethe system, sorted by (real, imag)."""
    composed = Poly()
    power = Poly([1.0])
    for c in model.ttilde:
        composed = composed + power * c
        power = power * model.V1p
    composed = composed - Poly([0.0, 1.0])
    if composed.is_zero():
        raise ConfigError("degenerate decoupled equation: V2'(V1'(x)) - x vanishes identically")
    if composed.degree == 0:
        return np.zeros(0, dtype=complex)
    roots = linalg.eigvals(linalg.companion(composed.coeffs[::-1]))
    return np.array(sorted(roots, key=lambda z: (round(z.real, 12), round(z.imag, 12))), dtype=complex)


# --- Newton ---

def _jacobian(s, model, T, step):
    n = len(s)
    J = np.empty((n, n), dtype=complex)
    for j in range(n):
        ds = np.zeros(n, dtype=complex)
        ds[j] = step
        J[:, j] = (bethe_residual(s + ds, model, T) - bethe_residual(s - ds, model, T)) / (2 * step)
    return J


def newton(s, model, T, tol, max_iter, jacobian_step):
    """Newton on the Bethe residual at fixed T. Returns (roots, residual norm, iterations)."""
    s = np.array(s, dtype=complex)
    for it in range(max_iter + 1):
        F = bethe_residual(s, model, T)
        norm = float(np.max(np.abs(F)))
        if not np.isfinite(norm):
            raise SolverError(f"Newton produced non-finite residual at T={T:g}")
        if norm <= tol:
            return s, norm, it
        if it == max_iter:
            break
        scale = max(1.0, float(np.max(np.abs(s))))
        J = _jacobian(s, model, T, jacobian_step * scale)
        try:
            s = s + linalg.solve(J, -F)
        except (linalg.LinAlgError, ValueError) as exc:
            raise SolverError(f"singular Bethe Jacobian at T={T:g}") from exc
    raise SolverError(f"Newton did not converge in {max_iter} iterations at T={T:g} (residual {norm:.3e})")


# --- Solutions ---

@dataclass
class BetheSolution:
    s: np.ndarray
    B: np.ndarray
    u: np.ndarray
    residual: float
    model_hash: str = ""
    trace: list = field(default_factory=list)

    @property
    def N(self):
        return self.s.size

    @property
    def anchors(self):
        return make_anchors(self.s)

    @property
    def scale(self):
        return max(1.0, float(np.max(np.abs(self.s))))

    def to_record(self):
        return {
            "model_hash": self.model_hash,
            "roots": encode_array(self.s),
            "B": encode_array(self.B),
            "u": encode_array(self.u),
            "residual": self.residual,
        }

    @classmethod
    def from_record(cls, rec):
        try:
            return cls(
                s=decode_array(rec["roots"]).reshape(-1),
                B=decode_array(rec["B"]),
                u=decode_array(rec["u"]),
                residual=float(rec["residual"]),
                model_hash=rec.get("model_hash", ""),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed solution record: {exc}") from exc


def _check_distinct(s, settings, T):
    try:
        make_anchors(s, settings.cluster_tol)
    except AnchorError as exc:
        raise SolverError(f"root collision during continuation at T={T:g}: {exc}") from exc


def _homotopy(model, settings, trace):
    cfg = model.bethe
    if cfg.root_selection is None:
        raise ConfigError("homotopy mode needs bethe.root_selection (branch choice is never automatic)")
    start = decoupled_roots(model)
    sel = list(cfg.root_selection)
    if len(set(sel)) != len(sel) or any(k < 0 or k >= start.size for k in sel):
        raise ConfigError(f"root_selection {sel} must be distinct indices into {start.size} decoupled roots")
    s = start[sel]
    _check_distinct(s, settings, 0.0)
    log.info("homotopy start roots %s", np.array2string(s, precision=6))

    base = 1.0 / cfg.steps
    h, frac = base, 0.0
    smallest = base / 2**cfg.max_halvings
    tol = settings.tol(cfg.tol)
    while frac < 1.0:
        target = min(1.0, frac + h)
        T = target * model.T
        try:
            s_new, norm, iters = newton(s, model, T, tol, cfg.max_iter, settings.jacobian_step)
            _check_distinct(s_new, settings, T)
        except SolverError as exc:
            h /= 2
            if h < smallest:
                raise SolverError(f"homotopy stalled at T={frac * model.T:g}: {exc}") from exc
            log.info("homotopy step failed at T=%g, halving to %g", T, h)
            continue
        s, frac = s_new, target
        trace.append({"T": T, "residual": norm, "iterations": iters})
        log.debug("homotopy T=%g residual=%.3e iterations=%d", T, norm, iters)
        h = min(base, 2 * h)
    return s


def solve_bethe(model, settings=None):
    """Roots, B, u table and diagnostics for the branch chosen in model.bethe."""
    settings = settings or model.settings
    cfg = model.bethe
    trace = []
    if cfg.mode == "homotopy":
        s = _homotopy(model, settings, trace)
    else:
        if cfg.initial_guesses is None:
            raise ConfigError("direct mode needs bethe.initial_guesses")
        guess = np.array(cfg.initial_guesses, dtype=complex)
        _check_distinct(guess, settings, model.T)
        s, norm, iters = newton(guess, model, model.T, settings.tol(cfg.tol), cfg.max_iter, settings.jacobian_step)
        trace.append({"T": model.T, "residual": norm, "iterations": iters})
    _check_distinct(s, settings, model.T)

    B = b_matrix(s, model.V1p, model.g)
    residual = float(np.max(np.abs(bethe_residual(s, model))))
    log.info("Bethe roots converged, residual %.3e", residual)
    sol = BetheSolution(s=s, B=B, u=np.zeros((model.d2 + 1, model.N), dtype=complex),
                        residual=residual, model_hash=model.digest(), trace=trace)
    sol.u = compute_u(sol, model, settings=settings)
    return sol


# --- Coefficient table ---

def compute_u(sol, model, settings=None, check=True):
    """u_k = (T/N) sum_{p=0}^{d2-k-1} ttilde_{k+p+1} B^p e for k = 0..d2, shape (d2+1, N)."""
    settings = settings or model.settings
    d2, g = model.d2, model.g
    e = np.ones(model.N, dtype=complex)
    powers = [e]
    for _ in range(d2):
        powers.append(sol.B @ powers[-1])
    u = np.zeros((d2 + 1, model.N), dtype=complex)
    for k in range(d2):
        u[k] = g * sum(model.ttilde[k + p + 1] * powers[p] for p in range(d2 - k))
    if check:
        tol = settings.tol(1e-9, sol.scale ** max(d2, 1))
        recursion = max(
            float(np.max(np.abs(u[k - 1] - sol.B @ u[k] - g * model.ttilde[k] * e))) for k in range(1, d2 + 1)
        )
        closure = float(np.max(np.abs(-sol.B @ u[0] - g * (model.ttilde[0] - sol.s))))
        log.debug("u table: recursion %.3e closure %.3e", recursion, closure)
        if recursion > tol:
            raise VerificationError("u recursion", recursion, tol)
        if closure > tol:
            raise VerificationError("u closure (Bethe roots not converged)", closure, tol)
    return u


def componentwise_residual(sol, model):
    """Largest violation of the per-root form of the u recursion, k = 0..d2."""
    s, u, g = sol.s, sol.u, model.g
    inv = inverse_differences(s)
    V1 = model.V1p(s)
    worst = 0.0
    for k in range(model.d2 + 1):
        prev = u[k - 1] if k > 0 else np.zeros_like(s)
        lhs = inv @ u[k]
        rhs = model.coefficient(2, k) - (s if k == 0 else 0) - prev / g + (V1 / g - inv.sum(axis=1)) * u[k]
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


# --- Leading order ---

@dataclass
class LeadingData:
    psi: Poly
    Y: PoleSum
    W1: PoleSum
    U0: list
    P0: np.ndarray

    def U0_at(self, k):
        """U_{0,k}; zero outside 0..d2+1 and for k = d2+1."""
        if 0 <= k < len(self.U0):
            return self.U0[k]
        return PoleSum(self.W1.anchors)


def p0_coefficients(sol, model):
    """P0[a, b], the coefficient of x**a y**b in P_0^(0)(x, y)."""
    d1, d2, g = model.d1, model.d2, model.g
    e = np.ones(model.N, dtype=complex)
    powers = [e]
    for _ in range(d2):
        powers.append(sol.B @ powers[-1])
    right = [sum(model.ttilde[k2] * powers[k2 - 1 - b] for k2 in range(b + 1, d2 + 1)) for b in range(d2)]
    P0 = np.zeros((max(d1, 1), max(d2, 1)), dtype=complex)
    for a in range(d1):
        left = sum(model.t[k1] * sol.s ** (k1 - 1 - a) for k1 in range(a + 1, d1 + 1))
        for b in range(d2):
            P0[a, b] = g * (left @ right[b])
    return P0


def leading_data(sol, model):
    anchors = sol.anchors
    g = model.g
    N = model.N
    W1 = PoleSum(anchors, {(i, 1): g for i in range(N)})
    Y = W1 * -1.0 + model.V1p
    U0 = []
    for k in range(model.d2 + 1):
        poly = Poly([-model.ttilde[k], 1.0]) if k == 0 else Poly([-model.ttilde[k]])
        U0.append(PoleSum(anchors, {(i, 1): sol.u[k, i] for i in range(N)}, poly))
    return LeadingData(psi=Poly.from_roots(sol.s), Y=Y, W1=W1, U0=U0, P0=p0_coefficients(sol, model))
