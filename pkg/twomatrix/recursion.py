"""
Topological recursion on the kernel jets.

Every correlator beyond leading order solves (T/N d/dx + D(x)) u = v, where u stacks the
components U_{n,k}^(g)(x; xi), k = 0..d2-1, and v collects lower-order data. The solution
is u(x0) = sum_i Res_{x -> s_i} K^t(x0, x) v(x); only principal parts of v at the roots
ever matter, so polynomial pieces are dropped as soon as they appear.
"""
import logging
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import SolverError, VerificationError
from .ratfun import (
    Jet,
    PoleTensor,
    inverse_square_jet,
    residue_pairing_tensor,
    tensor_jet,
)

log = logging.getLogger(__name__)


@dataclass
class Entry:
    U: list
    W: PoleTensor
    route: str
    diagnostics: dict = field(default_factory=dict)


class CorrelatorStore:
    """Memoized U_n^(g) and W_{n+1}^(g), filled in increasing 2g + n."""

    def __init__(self, sol, model, leading, table):
        self.sol = sol
        self.model = model
        self.leading = leading
        self.table = table
        self.anchors = sol.anchors
        self.d2 = model.d2
        self.L = model.d2 - 1
        self.lead = model.ttilde[model.d2]
        self.ratio = model.g
        self.entries = {}
        self._pending = set()

    def pole_U(self, n, g):
        """Components k = 0..d2-1 of U_n^(g) as pole tensors (x slot first)."""
        if (n, g) == (0, 0):
            return [f.pole_part().as_tensor() for f in self.leading.U0[: self.d2]]
        return self.get(n, g).U

    def get(self, n, g):
        if (n, g) not in self.entries:
            if (n, g) in self._pending:
                raise SolverError(f"circular dependency while computing U_{n}^({g})")
            self._pending.add((n, g))
            try:
                step_general(self, n, g)
            finally:
                self._pending.discard((n, g))
        return self.entries[(n, g)]

    def W(self, arity, g):
        """W_arity^(g) as a pole tensor."""
        if arity < 1:
            raise ValueError("correlators take at least one argument")
        if (arity, g) == (1, 0):
            return self.leading.W1.as_tensor()
        return self.get(arity - 1, g).W

    def store(self, n, g, U, route):
        W = U[self.L] / self.lead
        entry = Entry(U=U, W=W, route=route)
        if W.arity >= 2:
            defect = W.symmetry_defect()
            entry.diagnostics["symmetry_defect"] = defect
            tol = self.model.settings.tol(1e-8, self.sol.scale)
            if defect > tol:
                warnings.warn(f"W_{n + 1}^({g}) is not symmetric (defect {defect:.2e})", RuntimeWarning, stacklevel=2)
        self.entries[(n, g)] = entry
        log.info("stored U_%d^(%d) via %s", n, g, route)
        return entry


# --- Right-hand side ---

def _order(t, i):
    return t.max_order(i, slots=(0,))


def _zero_jet(i, labels):
    return Jet(i, labels, -1, {})


def _product_jet(a, a_labels, b, b_labels, i):
    """Jet at s_i of a(x, ..) * b(x, ..) accurate through the residue order."""
    oa, ob = _order(a, i), _order(b, i)
    if oa == 0 and ob == 0:
        return None
    ja = tensor_jet(a, i, ob - 1, labels=a_labels)
    jb = tensor_jet(b, i, oa - 1, labels=b_labels)
    return ja * jb


def rhs_principal(store, n, g, i):
    """Principal parts at s_i of v_k, k = 0..d2-1, as tensors in (x; xi_1..xi_n)."""
    labels = tuple(range(1, n + 1))
    anchors = store.anchors
    out = []
    for k in range(store.d2):
        total = _zero_jet(i, labels)
        if g >= 1:
            upper = store.pole_U(n + 1, g - 1)[k]
            total = total - tensor_jet(upper, i, -1, x_slots=(0, 1), labels=labels)
            same = store.pole_U(n, g - 1)[k]
            total = total + tensor_jet(same.derivative(0), i, -1, labels=labels) * (1.0 / store.ratio)
        for h in range(g + 1):
            for size in range(n + 1):
                for I in combinations(labels, size):
                    if (size == 0 and h == g) or (size == n and h == 0):
                        continue
                    J = tuple(l for l in labels if l not in I)
                    W = store.W(1 + size, g - h)
                    U = store.pole_U(len(J), h)[k]
                    prod = _product_jet(W, I, U, J, i)
                    if prod is not None:
                        total = total - prod
        for j in labels:
            rest = tuple(l for l in labels if l != j)
            lower = store.pole_U(n - 1, g)[k]
            order = _order(lower, i)
            if order == 0:
                continue
            jet = tensor_jet(lower, i, -1, labels=rest) * inverse_square_jet(anchors, i, j, order - 1)
            total = total - jet
        out.append(PoleTensor(anchors, n + 1, total.principal_terms()))
    return out


def step_general(store, n, g, save=True):
    """U_n^(g) from the residue formula; stores it together with W_{n+1}^(g)."""
    if (n, g) == (0, 0):
        raise ValueError("U_0^(0) is leading-order data, not a recursion output")
    table = store.table
    total = [PoleTensor(store.anchors, n + 1) for _ in range(store.d2)]
    for i in range(store.sol.N):
        v = rhs_principal(store, n, g, i)
        top = max((_order(c, i) for c in v), default=0)
        if top == 0:
            continue
        kd = table.kderivs(i, top - 1)
        part = residue_pairing_tensor(kd, v, i)
        total = [a + b for a, b in zip(total, part)]
    if not save:
        return total
    return store.store(n, g, total, "recursion")


# --- Closed forms and special cases ---

def U1_0(store, save=True):
    """U_{1,k}^(0)(x0, xi) = -sum_{l,i} K(x0, s_i)_{l,k} u_{l,i} / (xi - s_i)^2."""
    sol, table = store.sol, store.table
    terms = [dict() for _ in range(store.d2)]
    for i in range(sol.N):
        K = table.kappa[i][0]
        for k in range(store.d2):
            coeff = -np.einsum("l,lja->ja", sol.u[: store.d2, i], K[:, k])
            for j in range(sol.N):
                for a in range(coeff.shape[1]):
                    if coeff[j, a] != 0:
                        key = ((j, a + 1), (i, 2))
                        terms[k][key] = terms[k].get(key, 0j) + coeff[j, a]
    U = [PoleTensor(store.anchors, 2, t) for t in terms]
    if not save:
        return U
    return store.store(1, 0, U, "closed form")


def step_g1_n0(store, frame=None, check=True):
    """U_0^(1) and W_1^(1), with the pole-structure diagnostics of W_1^(1)."""
    entry = store.get(0, 1)
    entry.diagnostics.update(w1_genus_one_diagnostics(store, frame, check=check))
    return entry


def w1_genus_one_diagnostics(store, frame=None, check=True):
    W = store.get(0, 1).W.to_polesum()
    N = store.sol.N
    settings = store.model.settings
    tol = settings.tol(1e-8, store.sol.scale ** 3)
    high = max((abs(c) for (i, a), c in W.terms.items() if a >= 4), default=0.0)
    if check and high > tol:
        raise VerificationError("W_1^(1) poles of order 4 or more", high, tol)
    simple = [abs(W.terms.get((i, 1), 0j)) for i in range(N)]
    total_residue = abs(sum(W.terms.get((i, 1), 0j) for i in range(N)))
    diag = {"order4_max": high, "total_residue": total_residue, "simple_pole_max": max(simple, default=0.0)}
    if N >= 2 and diag["simple_pole_max"] > tol:
        warnings.warn(
            f"W_1^(1) carries simple poles at individual roots (max {diag['simple_pole_max']:.2e})",
            RuntimeWarning,
            stacklevel=2,
        )
    if frame is not None:
        triple = np.array([W.terms.get((i, 3), 0j) for i in range(N)])
        expected = np.diag(frame.Hinv)[:N]
        diag["triple_pole_vs_hessian"] = float(np.max(np.abs(triple - expected)))
    return diag


# --- Loop equations ---

QUAD_NODES = 64


def _component(store, n, g, k):
    """U_{n,k}^(g) as a callable of (x, xi_1..xi_n); U_0^(0) keeps its polynomial part."""
    if (n, g) == (0, 0):
        return store.leading.U0[k]
    return store.get(n, g).U[k]


def _component_dx(store, n, g, k):
    if (n, g) == (0, 0):
        return store.leading.U0[k].derivative()
    return store.get(n, g).U[k].derivative(0)


def loop_terms(store, n, g, k, x, xi):
    """Every term of the y**k projection of the loop equation at (n, g), moved to one side.

    Their sum is -P_{n,k}^(g)(x; xi), up to a constant: a polynomial in x. The terms are
    evaluated pointwise from the stored correlators, not from their Laurent expansions.
    """
    xi = tuple(xi)
    ratio, U0 = store.ratio, store.leading.U0
    u = _component(store, n, g, k)
    terms = [
        ratio * _component_dx(store, n, g, k)(x, *xi),
        -store.leading.Y(x) * u(x, *xi),
        store.W(n + 1, g)(x, *xi) * U0[k](x),
    ]
    if k >= 1:
        terms.append(_component(store, n, g, k - 1)(x, *xi))
    for h in range(g + 1):
        for size in range(n + 1):
            for I in combinations(range(n), size):
                if (size == 0 and h == g) or (size == n and h == 0):
                    continue
                J = [j for j in range(n) if j not in I]
                W = store.W(1 + size, g - h)(x, *(xi[j] for j in I))
                terms.append(W * _component(store, len(J), h, k)(x, *(xi[j] for j in J)))
    if g >= 1:
        terms.append(_component(store, n + 1, g - 1, k)(x, x, *xi))
        terms.append(-_component_dx(store, n, g - 1, k)(x, *xi) / ratio)
        if n == 0 and k == 0:
            terms.append(1.0 / ratio)
    for j in range(n):
        rest = xi[:j] + xi[j + 1:]
        lower = _component(store, n - 1, g, k)
        d = x - xi[j]
        divided = (lower(x, *rest) - lower(xi[j], *rest)) / d**2
        terms.append(divided - _component_dx(store, n - 1, g, k)(xi[j], *rest) / d)
    return terms


def spectator_points(sol, count):
    """Fixed xi values, well outside the disc holding the roots."""
    center = complex(np.mean(sol.s))
    spread = float(np.max(np.abs(sol.s - center)))
    radius = 2.0 * spread + 1.5 * sol.scale
    return tuple(center + radius * np.exp(1j * (0.7 + 1.3 * j)) for j in range(count))


def pole_coefficients(values, magnitudes, h, orders):
    """Coefficients of h**-a, a = 1..orders, from samples on a circle, each relative to term sizes."""
    r = float(np.abs(h[0]))
    size = float(np.mean(magnitudes))
    return np.array([np.mean(values * h**a) / max(1.0, r**a * size) for a in range(1, orders + 1)])


def verify_loop_g(store, n, g, samples=None, xi=None, check=True):
    """Largest pole coefficient at the roots of the loop equation at (n, g).

    Each y**k row, and with `samples` the combination sum_k y**k (row k), must be a polynomial
    in x. Pole coefficients come from trapezoidal contour integrals on a small circle around
    each root, normalised by the size of the individual terms.
    """
    sol = store.sol
    xi = spectator_points(sol, n) if xi is None else tuple(xi)
    ys = () if samples is None else tuple(samples)
    orders = 2 * g + n + 4
    theta = 2.0 * np.pi * np.arange(QUAD_NODES) / QUAD_NODES
    worst = 0.0
    for i, s in enumerate(sol.s):
        others = [abs(s - p) for j, p in enumerate(sol.s) if j != i] + [abs(s - p) for p in xi]
        h = 0.3 * min(others, default=1.0) * np.exp(1j * theta)
        rows = []
        for k in range(store.d2):
            terms = np.array([loop_terms(store, n, g, k, s + hq, xi) for hq in h])
            rows.append((terms.sum(axis=1), np.abs(terms).sum(axis=1)))
        combos = list(rows)
        for y in ys:
            values = sum(y**k * row[0] for k, row in enumerate(rows))
            magnitudes = sum(abs(y) ** k * row[1] for k, row in enumerate(rows))
            combos.append((values, magnitudes))
        for values, magnitudes in combos:
            worst = max(worst, float(np.max(np.abs(pole_coefficients(values, magnitudes, h, orders)))))
    tol = store.model.settings.tol(1e-7, sol.scale ** max(store.d2, 1))
    log.info("loop equation (%d, %d) residual %.3e", n, g, worst)
    if check and worst > tol:
        raise VerificationError(f"loop equation ({n}, {g})", worst, tol)
    return worst
