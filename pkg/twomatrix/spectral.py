"""Spectral curve E(x, y), its companion matrix and the leading-order loop equation."""
import logging
from dataclasses import dataclass

import numpy as np
import sympy as sp
from numpy.polynomial import polynomial as npoly
from scipy import linalg

from .errors import VerificationError
from .ratfun import Poly, PoleSum

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SpectralCurve:
    """E[a, k] is the coefficient of x**a y**k."""

    E: np.ndarray

    @property
    def y_degree(self):
        return self.E.shape[1] - 1

    def Ek(self, k):
        if 0 <= k < self.E.shape[1]:
            return Poly(self.E[:, k])
        return Poly()

    def __call__(self, x, y):
        return npoly.polyval2d(x, y, self.E)

    def to_sympy(self):
        x, y = sp.symbols("x y")
        expr = sp.Integer(0)
        for (a, k), c in np.ndenumerate(self.E):
            if c != 0:
                expr += _sympy_number(c) * x**a * y**k
        return sp.expand(expr)

    def to_record(self):
        return {
            "E": [[[float(c.real), float(c.imag)] for c in row] for row in self.E.T],
            "sympy": str(self.to_sympy()),
        }


def _sympy_number(c):
    c = complex(c)
    parts = []
    for value, unit in ((c.real, sp.Integer(1)), (c.imag, sp.I)):
        if value == 0:
            continue
        num = sp.Integer(int(value)) if float(value).is_integer() else sp.Float(value)
        parts.append(num * unit)
    return sum(parts, sp.Integer(0))


def _outer(p, q):
    """Coefficient array of p(x) * q(y)."""
    out = np.zeros((max(p.coeffs.size, 1), max(q.coeffs.size, 1)), dtype=complex)
    if p.coeffs.size and q.coeffs.size:
        out[:] = np.outer(p.coeffs, q.coeffs)
    return out


def _add_into(target, block):
    target[: block.shape[0], : block.shape[1]] += block


def build_E(leading, model):
    """E = (V1'(x) - y)(V2'(y) - x) - P0(x, y) + T + T/N."""
    d1, d2 = model.d1, model.d2
    E = np.zeros((d1 + 2, d2 + 2), dtype=complex)
    x = Poly([0.0, 1.0])
    one = Poly([1.0])
    _add_into(E, _outer(model.V1p, model.V2p))
    _add_into(E, -_outer(x * model.V1p, one))
    _add_into(E, -_outer(one, x * model.V2p))
    _add_into(E, _outer(x, x))
    _add_into(E, -leading.P0)
    E[0, 0] += model.T + model.g
    return SpectralCurve(E)


# --- Quantum curve ---

def verify_quantum_curve(curve, psi, model, check=True, settings=None):
    """Normalized size of sum_k (V1' - (T/N) d/dx)^k [E_k psi], folded right to left."""
    settings = settings or model.settings
    if psi.degree < 1:
        raise ValueError("the wave function needs at least one root (N >= 1)")
    total = Poly()
    norm = 0.0
    for k in range(curve.y_degree + 1):
        term = curve.Ek(k) * psi
        if not term.is_zero():
            norm = max(norm, float(np.max(np.abs(term.coeffs))))
        for _ in range(k):
            term = model.V1p * term - term.deriv() * model.g
        total = total + term
    residual = float(np.max(np.abs(total.coeffs))) / norm if total.coeffs.size and norm else 0.0
    log.info("quantum curve residual %.3e", residual)
    tol = settings.tol(1e-8)
    if check and residual > tol:
        raise VerificationError("quantum curve", residual, tol)
    return residual


# --- Companion form ---

def companion_matrix(curve, model, x):
    """C(x) with -ttilde_{d2} det((y - V1'(x)) Id + C(x)) = E(x, y)."""
    d2 = model.d2
    lead = model.ttilde[d2]
    v1 = model.V1p(x)
    C = np.zeros((d2 + 1, d2 + 1), dtype=complex)
    C[0, 0] = model.ttilde[d2 - 1] / lead
    C[0, 1] = -1.0
    for r in range(1, d2 + 1):
        C[r, 0] = -curve.Ek(d2 - r)(x) / lead
        C[r, r] = v1
        if r < d2:
            C[r, r + 1] = -1.0
    return C


def verify_companion(curve, model, samples, check=True, settings=None):
    settings = settings or model.settings
    lead = model.ttilde[model.d2]
    worst = 0.0
    for x, y in samples:
        C = companion_matrix(curve, model, x)
        lhs = -lead * linalg.det((y - model.V1p(x)) * np.eye(C.shape[0]) + C)
        rhs = curve(x, y)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    log.info("companion identity max relative error %.3e over %d samples", worst, len(samples))
    tol = settings.tol(1e-9)
    if check and worst > tol:
        raise VerificationError("companion determinant", worst, tol)
    return worst


def sample_points(rng, count, radius=2.0):
    """Seeded complex sample points in a disc."""
    r = radius * np.sqrt(rng.random(count))
    phi = 2 * np.pi * rng.random(count)
    return r * np.exp(1j * phi)


# --- Leading loop equation ---

def loop_g0_projections(leading, curve, model):
    """Per power of y: U_{0,k-1} - Y U_{0,k} + (T/N) U_{0,k}' - E_k, for k = 0..d2+1."""
    out = []
    for k in range(model.d2 + 2):
        Uk = leading.U0_at(k)
        prev = leading.U0_at(k - 1) if k > 0 else PoleSum(leading.W1.anchors)
        out.append(prev - leading.Y * Uk + Uk.derivative() * model.g - curve.Ek(k))
    return out


def _magnitude(f):
    mags = [abs(c) for c in f.terms.values()] + list(np.abs(f.poly.coeffs))
    return float(max(mags, default=0.0))


def verify_loop_g0(leading, curve, model, samples, scale=1.0, check=True, settings=None):
    """Max coefficient of (y - Y + (T/N) d/dx) U0(x, y) - E(x, y) over the sampled y."""
    settings = settings or model.settings
    parts = loop_g0_projections(leading, curve, model)
    worst = 0.0
    for y in samples:
        combo = PoleSum(leading.W1.anchors)
        for k, part in enumerate(parts):
            combo = combo + part * (y**k)
        worst = max(worst, _magnitude(combo))
    log.info("leading loop equation residual %.3e", worst)
    tol = settings.tol(1e-9, scale)
    if check and worst > tol:
        raise VerificationError("leading loop equation", worst, tol)
    return worst


def projection_residuals(leading, curve, model):
    return [_magnitude(p) for p in loop_g0_projections(leading, curve, model)]
