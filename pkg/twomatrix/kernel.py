"""
Recursion kernel K(x0, x): the d2 x d2 matrix solving

    (D^t(x) - (T/N) d/dx) K(x0, x) = Id/(x0 - x) + sum_j A_j(x0)/(x - s_j),

known only through its Taylor jets at the Bethe roots. Jet n at root i is stored as a
coefficient array kappa[p, q, j, a]: the coefficient of 1/(x0 - s_j)**(a+1) in
K^(n)(x0, s_i)_{p,q} / n!.
"""
import logging
import math

import numpy as np
from scipy import linalg

from .errors import SolverError, VerificationError
from .ratfun import PoleSum
from .records import encode_array

log = logging.getLogger(__name__)

DEFAULT_DEPTH = 3


# --- Blocks and the linear system ---

def build_blocks(sol, model):
    """B_0..B_{d2-1} (N x N, symmetric) and the (d2 N) x (d2 N) matrix M."""
    N, d2, g = model.N, model.d2, model.g
    s, u = sol.s, sol.u
    diff = s[:, None] - s[None, :]
    np.fill_diagonal(diff, 1.0)
    inv_sq = 1.0 / diff**2
    np.fill_diagonal(inv_sq, 0.0)
    v1pp = model.V1p.deriv()(s)
    blocks = []
    for k in range(d2):
        pair = u[k][:, None] + u[k][None, :]
        Bk = g * pair * inv_sq
        Bk[np.diag_indices(N)] = -v1pp * u[k] - g * np.sum(pair * inv_sq, axis=1) + (g if k == 0 else 0.0)
        blocks.append(Bk)
    L = d2 - 1
    M = np.zeros((d2 * N, d2 * N), dtype=complex)
    for p in range(L):
        M[p * N:(p + 1) * N, p * N:(p + 1) * N] = -sol.B.T
        M[p * N:(p + 1) * N, (p + 1) * N:(p + 2) * N] = np.eye(N)
    for k, Bk in enumerate(blocks):
        M[L * N:, k * N:(k + 1) * N] = Bk
    return blocks, M


def compat_blocks(sol, model):
    """C_0..C_{d2-1} of the compatibility identity sum_k C_k (B^t)^k = 0."""
    N, d2, g = model.N, model.d2, model.g
    s, u = sol.s, sol.u
    lead = model.ttilde[d2]
    L = d2 - 1
    diff = s[:, None] - s[None, :]
    np.fill_diagonal(diff, 1.0)
    inv = 1.0 / diff
    np.fill_diagonal(inv, 0.0)
    blocks = []
    for k in range(L):
        Ck = g * u[k][:, None] * inv / lead
        Ck[np.diag_indices(N)] = (g / lead) * (inv @ u[k] - model.ttilde[k] + (s if k == 0 else 0.0))
        blocks.append(Ck)
    last = -model.V1p(s) + 2 * g * inv.sum(axis=1) - model.ttilde[L] / lead
    if L == 0:
        last = last + s / lead
    blocks.append(np.diag(g * last))
    return blocks


def compat_check(sol, model, check=True, settings=None):
    settings = settings or model.settings
    Bt = sol.B.T
    total = np.zeros_like(sol.B)
    power = np.eye(model.N, dtype=complex)
    for Ck in compat_blocks(sol, model):
        total = total + Ck @ power
        power = power @ Bt
    residual = float(np.max(np.abs(total)))
    tol = settings.tol(1e-9, sol.scale ** max(model.d2, 1))
    log.info("compatibility identity residual %.3e", residual)
    if check and residual > tol:
        raise VerificationError("compatibility identity", residual, tol)
    return residual


# --- Kernel table ---

class KernelTable:
    """Jets of K(x0, s_i) for every root, grown on demand."""

    def __init__(self, sol, model, kappa0, Minv):
        self.sol = sol
        self.model = model
        self.N, self.d2, self.g = model.N, model.d2, model.g
        self.L = self.d2 - 1
        self.lead = model.ttilde[self.d2]
        self.anchors = sol.anchors
        self.Minv = Minv
        self.width = 2
        self.kappa = [[kappa0[i]] for i in range(self.N)]
        self.consistency = {}
        self._prepare()

    # --- local expansion data ---

    def _prepare(self):
        s, u, g = self.sol.s, self.sol.u, self.g
        self.w = [u[: self.d2, i] / self.lead for i in range(self.N)]
        self.A = []
        for j in range(self.N):
            Aj = g * self.kappa[j][0]
            Aj[self.L] += np.einsum("k,kqja->qja", self.w[j], self.kappa[j][0])
            self.A.append(Aj)

    def _local(self, i, depth):
        """Taylor data at s_i of the regular parts of Y and U0/ttilde, orders 0..depth."""
        s, u, g = self.sol.s, self.sol.u, self.g
        others = [j for j in range(self.N) if j != i]
        d = s[i] - s[others]
        v1 = self.model.V1p.taylor(s[i], depth)
        y = np.array([v1[m] - g * (-1) ** m * np.sum(1.0 / d ** (m + 1)) for m in range(depth + 1)])
        V = np.zeros((depth + 1, self.d2), dtype=complex)
        for m in range(depth + 1):
            for k in range(self.d2):
                tail = (-1) ** m * np.sum(u[k, others] / d ** (m + 1))
                if m == 0:
                    V[m, k] = tail - self.model.ttilde[k] + (s[i] if k == 0 else 0.0)
                else:
                    V[m, k] = tail + (1.0 if (k == 0 and m == 1) else 0.0)
        return y, V / self.lead

    def _pad(self, width):
        if width <= self.width:
            return
        extra = width - self.width

        def grow(arr):
            return np.concatenate([arr, np.zeros(arr.shape[:-1] + (extra,), dtype=complex)], axis=-1)

        self.kappa = [[grow(k) for k in ks] for ks in self.kappa]
        self.A = [grow(a) for a in self.A]
        self.width = width

    def rhs(self, i, n):
        """E_n at root i: everything in the order-h^n relation except the kappa_{n+1} terms."""
        s = self.sol.s
        kap = self.kappa[i]
        y, V = self._local(i, n)
        E = np.zeros_like(kap[0])
        for p in range(self.d2):
            E[p, p, i, n] += 1.0
        for j in range(self.N):
            if j != i:
                E += (-1) ** n * self.A[j] / (s[i] - s[j]) ** (n + 1)
        E[:-1] -= kap[n][1:]
        for m in range(n + 1):
            E += y[m] * kap[n - m]
            E[self.L] -= np.einsum("k,kqja->qja", V[m], kap[n - m])
        return E

    def _step(self, i, n):
        """kappa_{n+1} at root i from [-n g + r w^t] kappa_{n+1} = E_n."""
        g, L, w = self.g, self.L, self.w[i]
        E = self.rhs(i, n)
        nxt = np.zeros_like(E)
        if n == 0:
            nxt[L] = E[L] / g
            residual = float(np.max(np.abs(E[:L]))) if L else 0.0
        elif n == 1:
            nxt[:L] = -E[:L] / g
            residual = float(np.max(np.abs(np.einsum("k,kqja->qja", w[:L], nxt[:L]) - E[L])))
        else:
            nxt[:L] = -E[:L] / (n * g)
            nxt[L] = (E[L] - np.einsum("k,kqja->qja", w[:L], nxt[:L])) / ((1 - n) * g)
            residual = None
        if residual is not None:
            self.consistency[(i, n)] = residual
        return nxt

    @property
    def depth(self):
        return len(self.kappa[0]) - 1

    def ensure(self, M):
        """Extend every root's jets to K^(M)."""
        if M <= self.depth:
            return self
        self._pad(M + 2)
        for n in range(self.depth, M):
            for i in range(self.N):
                self.kappa[i].append(self._step(i, n))
        log.info("kernel jets extended to order %d", M)
        return self

    # --- views ---

    def matrix(self, i, m):
        """K^(m)(x0, s_i) as a d2 x d2 nested list of PoleSums in x0."""
        self.ensure(m)
        coeffs = self.kappa[i][m] * math.factorial(m)
        return [[self._polesum(coeffs[p, q]) for q in range(self.d2)] for p in range(self.d2)]

    def A_matrix(self, i):
        return [[self._polesum(self.A[i][p, q]) for q in range(self.d2)] for p in range(self.d2)]

    def _polesum(self, table):
        terms = {(j, a + 1): table[j, a] for j in range(self.N) for a in range(table.shape[1]) if table[j, a] != 0}
        return PoleSum(self.anchors, terms)

    def kderivs(self, i, m_max):
        return [self.matrix(i, m) for m in range(m_max + 1)]

    def to_record(self):
        return {
            "depth": self.depth,
            "roots": [
                {"root": i, "jets": [encode_array(k) for k in self.kappa[i]], "A": encode_array(self.A[i])}
                for i in range(self.N)
            ],
        }


def solve_K(sol, model):
    """K(x0, s_i) for every root from one LU factorization of M and its right-hand-side channels."""
    N, d2 = model.N, model.d2
    L = d2 - 1
    _, M = build_blocks(sol, model)
    lu, piv = linalg.lu_factor(M)
    if np.any(np.diag(lu) == 0):
        raise SolverError("kernel system M is singular")
    Minv = linalg.lu_solve((lu, piv), np.eye(d2 * N, dtype=complex))
    log.info("kernel system solved (dimension %d, cond %.2e)", d2 * N, np.linalg.cond(M))
    kappa0 = []
    for i in range(N):
        k0 = np.zeros((d2, d2, N, 2), dtype=complex)
        for p in range(d2):
            row = Minv[p * N + i]
            for q in range(d2):
                if q < L:
                    k0[p, q, :, 0] = row[q * N:(q + 1) * N]
                k0[p, q, :, 1] = sol.u[q] * row[L * N:]
        kappa0.append(k0)
    return KernelTable(sol, model, kappa0, Minv)


def K_derivatives(sol, model, table, M=DEFAULT_DEPTH):
    """Extend the jets of K(x0, s_i) at every root through K^(M).

    Order h^0 of the kernel equation fixes the last row of K' (the other rows vanish in
    this gauge); order h^1 fixes the first rows of K'' and leaves the last row free, set to
    zero. From n = 2 on, the first rows of kappa_{n+1} come from the order-h^n relation
    divided by -n T/N and the last row from the same relation divided by (1 - n) T/N. Each
    order only needs lower ones, so the table grows in place; see KernelTable._step.
    """
    if M < 1:
        raise ValueError("derivative depth must be at least 1")
    if table.model.digest() != model.digest() or not np.array_equal(table.sol.s, sol.s):
        raise ValueError("kernel table was built for another solution")
    return table.ensure(M)


def verify_G(table, check=True, settings=None):
    """Largest violation of the order h^0 and h^1 Laurent relations of the kernel equation at every root."""
    settings = settings or table.model.settings
    table.ensure(2)
    for i in range(table.N):
        for n in (0, 1):
            table._step(i, n)
    residual = max(table.consistency[(i, n)] for i in range(table.N) for n in (0, 1))
    tol = settings.tol(1e-8, table.sol.scale ** max(table.d2, 1))
    log.info("kernel Laurent relations residual %.3e", residual)
    if check and residual > tol:
        raise VerificationError("kernel Laurent relations", residual, tol)
    return residual
