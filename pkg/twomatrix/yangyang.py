"""
Yang-Yang functional of the Bethe system: extremal frame, Hessian, f0, f1 and the
correlators obtained by differentiating the extremum.

Variables R = (s_1..s_N, st_1..st_N, A row-major, u_1..u_N) and, with g = T/N,

    S(R) = sum V1(s_i) + sum V2(st_i) - tr(S A St A^-1)
           - g ln D(s) - g ln D(st) - g ln det A + g u.(A e - e)

where D is the Vandermonde product. The extremum reproduces the Bethe system with
u = e, B = A St A^-1 and A e = e.
"""
import logging
import warnings
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
from scipy import linalg

from .bethe import b_matrix, inverse_differences, poly_apply
from .errors import AnchorError, SolverError, VerificationError
from .ratfun import PoleTensor, make_anchors

log = logging.getLogger(__name__)

COND_WARN = 1e12


# --- Packing ---

def size(N):
    return 3 * N + N * N


def pack(s, st, A, u):
    return np.concatenate([np.asarray(s, complex), np.asarray(st, complex),
                           np.asarray(A, complex).ravel(), np.asarray(u, complex)])


def unpack(R, N):
    R = np.asarray(R, dtype=complex)
    s = R[:N]
    st = R[N:2 * N]
    A = R[2 * N:2 * N + N * N].reshape(N, N)
    u = R[2 * N + N * N:]
    return s, st, A, u


# --- Determinants ---

def log_det(M):
    """Principal-branch ln det M from the LU pivots."""
    lu, piv = linalg.lu_factor(np.asarray(M, dtype=complex), check_finite=True)
    diag = np.diag(lu)
    if np.any(diag == 0):
        raise SolverError("singular matrix in log-determinant")
    swaps = int(np.count_nonzero(piv != np.arange(piv.size)))
    total = np.sum(np.log(diag)) + 1j * np.pi * (swaps % 2)
    return complex(total.real, np.angle(np.exp(1j * total.imag)))


def inverse(M, what="matrix"):
    M = np.asarray(M, dtype=complex)
    lu, piv = linalg.lu_factor(M)
    if np.any(np.diag(lu) == 0):
        raise SolverError(f"singular {what}")
    return linalg.lu_solve((lu, piv), np.eye(M.shape[0], dtype=complex))


def _log_vandermonde(x):
    x = np.asarray(x, dtype=complex)
    diff = x[None, :] - x[:, None]
    iu = np.triu_indices(x.size, 1)
    return complex(np.log(np.prod(diff[iu]))) if iu[0].size else 0j


# --- Functional and its derivatives ---

def action(R, model):
    N, g = model.N, model.g
    s, st, A, u = unpack(R, N)
    P = inverse(A, "A matrix")
    e = np.ones(N, dtype=complex)
    trace = np.sum(s * np.diag(A @ np.diag(st) @ P))
    return complex(
        np.sum(model.V1(s)) + np.sum(model.V2(st)) - trace
        - g * _log_vandermonde(s) - g * _log_vandermonde(st) - g * log_det(A)
        + g * (u @ (A @ e - e))
    )


def _log_ratio_vandermonde(x1, x0):
    iu = np.triu_indices(len(x0), 1)
    d1 = (x1[None, :] - x1[:, None])[iu]
    d0 = (x0[None, :] - x0[:, None])[iu]
    return complex(np.sum(np.log(d1 / d0)))


def action_difference(R1, R0, model):
    """S(R1) - S(R0) with every logarithm taken of a ratio close to 1."""
    N, g = model.N, model.g
    s1, st1, A1, u1 = unpack(R1, N)
    s0, st0, A0, u0 = unpack(R0, N)
    e = np.ones(N, dtype=complex)

    def smooth(s, st, A, u):
        P = inverse(A, "A matrix")
        return (np.sum(model.V1(s)) + np.sum(model.V2(st)) - np.sum(s * np.diag(A @ np.diag(st) @ P))
                + g * (u @ (A @ e - e)))

    logs = (_log_ratio_vandermonde(s1, s0) + _log_ratio_vandermonde(st1, st0)
            + np.log(linalg.det(linalg.solve(A0, A1))))
    return complex(smooth(s1, st1, A1, u1) - smooth(s0, st0, A0, u0) - g * logs)


def gradient(R, model):
    N, g = model.N, model.g
    s, st, A, u = unpack(R, N)
    P = inverse(A, "A matrix")
    S, St = np.diag(s), np.diag(st)
    e = np.ones(N, dtype=complex)
    inv_s, inv_st = inverse_differences(s), inverse_differences(st)
    M2 = P @ S @ A @ St @ P
    g_s = model.V1p(s) - np.diag(A @ St @ P) - g * inv_s.sum(axis=1)
    g_st = model.V2p(st) - np.diag(P @ S @ A) - g * inv_st.sum(axis=1)
    g_A = (-(St @ P @ S) + M2 - g * P).T + g * u[:, None]
    g_u = g * (A @ e - e)
    return np.concatenate([g_s, g_st, g_A.ravel(), g_u])


def _vandermonde_block(x, second, g):
    inv = inverse_differences(x)
    sq = inv**2
    block = -g * sq
    block[np.diag_indices_from(block)] = second + g * sq.sum(axis=1)
    return block


def hessian(R, model):
    """Analytic second derivatives of the functional; valid at any R."""
    N, g = model.N, model.g
    s, st, A, u = unpack(R, N)
    P = inverse(A, "A matrix")
    S, St = np.diag(s), np.diag(st)
    eye = np.eye(N)
    Bp = A @ St @ P
    Bt = P @ S @ A
    M2 = P @ S @ A @ St @ P
    n = size(N)
    H = np.zeros((n, n), dtype=complex)
    iS, iT = slice(0, N), slice(N, 2 * N)
    iA, iU = slice(2 * N, 2 * N + N * N), slice(2 * N + N * N, n)

    H[iS, iS] = _vandermonde_block(s, model.V1p.deriv()(s), g)
    H[iT, iT] = _vandermonde_block(st, model.V2p.deriv()(st), g)
    H[iS, iT] = -(A * P.T)

    sA = -eye[:, :, None] * (st[None, None, :] * P.T[:, None, :]) + Bp[:, :, None] * P.T[:, None, :]
    tA = P[:, :, None] * Bt.T[:, None, :] - eye[:, None, :] * (s[None, :, None] * P[:, :, None])
    AA = (
        np.einsum("s,r,sa,br->abrs", st, s, P, P)
        - np.einsum("sa,br->abrs", P, M2)
        + np.einsum("a,b,sa,br->abrs", s, st, P, P)
        - np.einsum("sa,br->abrs", M2, P)
        + g * np.einsum("sa,br->abrs", P, P)
    )
    H[iS, iA] = sA.reshape(N, N * N)
    H[iT, iA] = tA.reshape(N, N * N)
    H[iA, iA] = AA.reshape(N * N, N * N)
    H[iU, iA] = g * np.repeat(eye, N, axis=1)

    for rows, cols in ((iS, iT), (iS, iA), (iT, iA), (iU, iA)):
        H[cols, rows] = H[rows, cols].T
    return H


def fd_hessian(R, model, step):
    n = R.size
    out = np.empty((n, n), dtype=complex)
    for j in range(n):
        dR = np.zeros(n, dtype=complex)
        dR[j] = step
        out[:, j] = (gradient(R + dR, model) - gradient(R - dR, model)) / (2 * step)
    return out


def third_derivatives(R, model, step):
    """T[a, b, c] = d^3 S / dR_a dR_b dR_c from central differences of the analytic Hessian, symmetrized."""
    n = R.size
    raw = np.empty((n, n, n), dtype=complex)
    for c in range(n):
        dR = np.zeros(n, dtype=complex)
        dR[c] = step
        raw[:, :, c] = (hessian(R + dR, model) - hessian(R - dR, model)) / (2 * step)
    return sum(np.transpose(raw, p) for p in permutations(range(3))) / 6.0


# --- Frame ---

@dataclass
class ExtremalFrame:
    stilde: np.ndarray
    A: np.ndarray
    u: np.ndarray
    H: np.ndarray = None
    Hinv: np.ndarray = None
    action: complex = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.stilde.size

    def point(self, s):
        return pack(s, self.stilde, self.A, self.u)


def build_frame(sol, model, settings=None, check=True):
    """Dual roots, A from the eigenvectors of B, Hessian and action value at the extremum."""
    settings = settings or model.settings
    N = model.N
    w, V = linalg.eig(sol.B)
    order = sorted(range(N), key=lambda k: (round(w[k].real, 12), round(w[k].imag, 12)))
    w, V = w[order], V[:, order]
    try:
        make_anchors(w, settings.cluster_tol)
    except AnchorError as exc:
        raise SolverError(f"B has a repeated eigenvalue: {exc}") from exc
    e = np.ones(N, dtype=complex)
    try:
        c = linalg.solve(V, e)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SolverError("eigenvector matrix of B is singular") from exc
    if np.any(np.abs(c) < settings.cluster_tol):
        raise SolverError("e has no component along an eigenvector of B; A would be singular")
    frame = ExtremalFrame(stilde=w.astype(complex), A=V * c[None, :], u=e.copy())
    frame.diagnostics = frame_diagnostics(frame, sol, model)
    log.info("frame diagnostics %s", {k: f"{v:.2e}" for k, v in frame.diagnostics.items()})
    tol = settings.tol(1e-8, sol.scale ** max(model.d1, model.d2, 1))
    if check:
        for name in ("eigen", "gradient"):
            if frame.diagnostics[name] > tol:
                raise VerificationError(f"frame {name}", frame.diagnostics[name], tol)
    frame.H = build_hessian(frame, sol, model, settings=settings, check=check)
    frame.Hinv = inverse(frame.H, "Hessian")
    frame.action = action_and_f0(frame, sol, model)["Shat"]
    return frame


def a_system_residual(s, stilde, A, model):
    """The linear system fixing A, written for P = A^-1 together with P e = e."""
    g = model.g
    P = inverse(A, "A matrix")
    inv = inverse_differences(s)  # inv[k, j] = 1/(s_k - s_j)
    diff_sum = P * inv.sum(axis=0)[None, :] - P @ inv
    res = g * diff_sum + P * (model.V1p(s)[None, :] - stilde[:, None])
    rows = P.sum(axis=1) - 1.0
    return float(max(np.max(np.abs(res)), np.max(np.abs(rows))))


def frame_diagnostics(frame, sol, model):
    N, g = model.N, model.g
    A, st = frame.A, frame.stilde
    e = np.ones(N, dtype=complex)
    P = inverse(A, "A matrix")
    Bhat = b_matrix(st, model.V2p, g)
    return {
        "eigen": float(np.max(np.abs(sol.B @ A - A * st[None, :]))),
        "right_sum": float(np.max(np.abs(A @ e - e))),
        "left_sum": float(np.max(np.abs(e @ A - e))),
        "dual_matrix": float(np.max(np.abs(P @ np.diag(sol.s) @ A - Bhat.T))),
        "dual_bethe": float(np.max(np.abs(poly_apply(model.V1p, Bhat, e) - st))),
        "a_system": a_system_residual(sol.s, st, A, model),
        "gradient": float(np.max(np.abs(gradient(frame.point(sol.s), model)))),
    }


def action_and_f0(frame, sol, model):
    Shat = action(frame.point(sol.s), model)
    return {"Shat": Shat, "f0": -model.g * Shat}


def build_hessian(frame, sol, model, settings=None, check=True):
    settings = settings or model.settings
    R = frame.point(sol.s)
    H = hessian(R, model)
    scale = sol.scale
    fd = fd_hessian(R, model, settings.grad_step * scale)
    rel = float(np.max(np.abs(H - fd))) / max(1.0, float(np.max(np.abs(H))))
    asym = float(np.max(np.abs(H - H.T)))
    frame.diagnostics.update({"hessian_fd": rel, "hessian_symmetry": asym})
    log.info("Hessian check: finite-difference rel err %.2e, asymmetry %.2e", rel, asym)
    if check:
        if rel > settings.tol(1e-5):
            raise VerificationError("Hessian finite differences", rel, settings.tol(1e-5))
        if asym > settings.tol(1e-10, scale):
            raise VerificationError("Hessian symmetry", asym, settings.tol(1e-10, scale))
    cond = float(np.linalg.cond(H))
    frame.diagnostics["hessian_cond"] = cond
    if cond > COND_WARN:
        warnings.warn(f"ill-conditioned Yang-Yang Hessian (cond {cond:.2e})", RuntimeWarning, stacklevel=2)
    return H


def f1_from_hessian(H, N):
    """f1 = -1/2 ln det H, and the same for the Schur complement onto the (s, st) block."""
    H = np.asarray(H, dtype=complex)
    k = 2 * N
    logdet = log_det(H)
    H22inv = inverse(H[k:, k:], "(A, u) block of the Hessian")
    reduced = H[:k, :k] - H[:k, k:] @ H22inv @ H[k:, :k]
    logdet_reduced = log_det(reduced)
    return {
        "f1": -0.5 * logdet,
        "f1_reduced": -0.5 * logdet_reduced,
        "logdet": logdet,
        "logdet_reduced": logdet_reduced,
        "det": complex(np.exp(logdet)),
    }


# --- Variational correlators ---

def W2_variational(frame, sol, model):
    """W2(x, x') = (T/N) sum (H^-1)_ij / ((x - s_i)^2 (x' - s_j)^2) over the s block."""
    N, g = model.N, model.g
    Hs = frame.Hinv[:N, :N]
    terms = {((i, 2), (j, 2)): g * Hs[i, j] for i in range(N) for j in range(N)}
    return PoleTensor(sol.anchors, 2, terms)


def W3_variational(frame, sol, model, third=None, settings=None):
    settings = settings or model.settings
    N, g = model.N, model.g
    R = frame.point(sol.s)
    if third is None:
        third = third_derivatives(R, model, settings.third_step * sol.scale)
    P = frame.Hinv[:N, :]
    Hs = frame.Hinv[:N, :N]
    C = np.einsum("ia,jb,kc,abc->ijk", P, P, P, third)
    terms = {}
    for i in range(N):
        for j in range(N):
            for k in range(N):
                c = 2 * g * Hs[i, j] * Hs[i, k]
                for key in (((i, 3), (j, 2), (k, 2)), ((j, 2), (i, 3), (k, 2)), ((j, 2), (k, 2), (i, 3))):
                    terms[key] = terms.get(key, 0j) + c
                key = ((i, 2), (j, 2), (k, 2))
                terms[key] = terms.get(key, 0j) - g * C[i, j, k]
    return PoleTensor(sol.anchors, 3, terms)


def root_sensitivity(frame, sol, m):
    """ds_i/dt_m = -sum_k (H^-1)_ik s_k^m."""
    N = sol.N
    return -frame.Hinv[:N, :N] @ (sol.s**m)
