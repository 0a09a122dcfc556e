"""
Polynomials and rational functions whose poles sit on a fixed, finite set of anchors
(the Bethe roots), with the Laurent and residue machinery the recursion is built on.

A PoleSum is  poly(x) + sum c[i, a] / (x - s_i)**a ; a PoleTensor is the same idea in
several variables, pole-type in every slot.  A Jet is a truncated Laurent series at one
anchor whose coefficients are pole tensors in the remaining (labelled) slots.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.special import comb

from .config import CLUSTER_TOL, PRUNE_REL
from .errors import AnchorError
from .records import encode_complex

log = logging.getLogger(__name__)

ZERO_DEGREE = -1  # degree reported for the zero polynomial


# --- Anchors and small helpers ---

def make_anchors(points, cluster_tol=CLUSTER_TOL):
    """Freeze pole positions. Two points closer than cluster_tol * scale are an error, never merged."""
    pts = np.array(points, dtype=complex).ravel()
    scale = max(1.0, float(np.max(np.abs(pts)))) if pts.size else 1.0
    for i in range(pts.size):
        for j in range(i + 1, pts.size):
            if abs(pts[i] - pts[j]) < cluster_tol * scale:
                raise AnchorError(f"anchors {i} and {j} coincide within {cluster_tol:g}: {pts[i]}")
    pts.setflags(write=False)
    return pts


def _checked_anchors(anchors):
    """Anchors frozen by make_anchors pass through; anything else is validated and frozen now."""
    if isinstance(anchors, np.ndarray) and not anchors.flags.writeable and anchors.dtype == complex:
        return anchors
    return make_anchors(anchors)


def _same_anchors(a, b):
    if a is b:
        return a
    if a.shape != b.shape or not np.array_equal(a, b):
        raise AnchorError("operands live on different pole anchors")
    return a


def _prune(terms, floor=0.0, rel=PRUNE_REL):
    if not terms:
        return {}
    top = max(floor, max(abs(c) for c in terms.values()))
    cut = rel * top
    return {k: complex(c) for k, c in terms.items() if abs(c) > cut}


def _accumulate(target, key, value):
    target[key] = target.get(key, 0j) + value


def shifted_power(a, m, d):
    """Coefficient of h**m in (h + d)**(-a)."""
    return (-1) ** m * comb(a + m - 1, m, exact=True) / d ** (a + m)


# --- Polynomials ---

@dataclass(frozen=True, eq=False)
class Poly:
    """Complex polynomial, lowest degree first, trailing zeros trimmed."""

    coeffs: np.ndarray = ()

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        if c.ndim != 1:
            raise ValueError("polynomial coefficients must be one-dimensional")
        nz = np.flatnonzero(c)
        c = c[: nz[-1] + 1].copy() if nz.size else np.zeros(0, dtype=complex)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_roots(cls, roots):
        roots = np.asarray(roots, dtype=complex)
        return cls(npoly.polyfromroots(roots) if roots.size else [1.0])

    @property
    def degree(self):
        return self.coeffs.size - 1 if self.coeffs.size else ZERO_DEGREE

    def is_zero(self):
        return self.coeffs.size == 0

    def __call__(self, x):
        if self.is_zero():
            return np.zeros_like(np.asarray(x, dtype=complex)) if np.ndim(x) else 0j
        return npoly.polyval(x, self.coeffs)

    def at_matrix(self, m):
        """p(M) by Horner's rule."""
        m = np.asarray(m, dtype=complex)
        eye = np.eye(m.shape[0], dtype=complex)
        out = np.zeros_like(m)
        for c in self.coeffs[::-1]:
            out = out @ m + c * eye
        return out

    def __add__(self, other):
        other = as_poly(other)
        if other is NotImplemented:
            return NotImplemented
        n = max(self.coeffs.size, other.coeffs.size)
        out = np.zeros(n, dtype=complex)
        out[: self.coeffs.size] += self.coeffs
        out[: other.coeffs.size] += other.coeffs
        return Poly(out)

    __radd__ = __add__

    def __neg__(self):
        return Poly(-self.coeffs)

    def __sub__(self, other):
        other = as_poly(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (PoleSum, PoleTensor, Jet)):
            return NotImplemented
        other = as_poly(other)
        if other is NotImplemented:
            return NotImplemented
        if self.is_zero() or other.is_zero():
            return Poly()
        return Poly(np.convolve(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def deriv(self, m=1):
        if self.coeffs.size <= m:
            return Poly()
        return Poly(npoly.polyder(self.coeffs, m))

    def antideriv(self):
        """Antiderivative with zero constant term."""
        if self.is_zero():
            return Poly()
        return Poly(npoly.polyint(self.coeffs, lbnd=0, k=0))

    def taylor(self, x0, m_max):
        """[p(x0), p'(x0), p''(x0)/2!, ...] up to order m_max."""
        out = np.zeros(m_max + 1, dtype=complex)
        current = self
        for m in range(m_max + 1):
            if current.is_zero():
                break
            out[m] = current(x0) / math.factorial(m)
            current = current.deriv()
        return out

    def allclose(self, other, atol=1e-12):
        diff = self - as_poly(other)
        return diff.is_zero() or float(np.max(np.abs(diff.coeffs))) <= atol

    def to_record(self):
        return [encode_complex(c) for c in self.coeffs]


def as_poly(value):
    if isinstance(value, Poly):
        return value
    if isinstance(value, (int, float, complex, np.number)):
        return Poly([value])
    return NotImplemented


# --- Laurent data ---

@dataclass(frozen=True)
class Laurent:
    """principal[a-1] is the coefficient of (x-s)**(-a); regular[m] that of (x-s)**m."""

    principal: np.ndarray
    regular: np.ndarray

    def series(self):
        return np.concatenate([self.principal[::-1], self.regular])

    def coefficient(self, power):
        if power < 0:
            return self.principal[-power - 1] if -power <= self.principal.size else 0j
        return self.regular[power] if power < self.regular.size else 0j


# --- Single-variable rational functions ---

@dataclass(frozen=True, eq=False)
class PoleSum:
    anchors: np.ndarray
    terms: dict = field(default_factory=dict)
    poly: Poly = field(default_factory=Poly)

    def __post_init__(self):
        object.__setattr__(self, "anchors", _checked_anchors(self.anchors))
        poly = self.poly if isinstance(self.poly, Poly) else Poly(self.poly)
        clean = {}
        for key, c in dict(self.terms).items():
            i, a = int(key[0]), int(key[1])
            if a < 1 or not 0 <= i < len(self.anchors):
                raise ValueError(f"bad pole key {key!r}")
            _accumulate(clean, (i, a), complex(c))
        floor = float(np.max(np.abs(poly.coeffs))) if poly.coeffs.size else 0.0
        object.__setattr__(self, "terms", _prune(clean, floor))
        object.__setattr__(self, "poly", poly)

    @classmethod
    def zero(cls, anchors):
        return cls(anchors)

    def __call__(self, x):
        x = np.asarray(x, dtype=complex)
        out = self.poly(x) + np.zeros_like(x)
        for (i, a), c in self.terms.items():
            out = out + c / (x - self.anchors[i]) ** a
        return out[()] if out.ndim == 0 else out

    def pole_indices(self):
        return {i for i, _ in self.terms}

    def max_order(self, i):
        return max((a for j, a in self.terms if j == i), default=0)

    def __add__(self, other):
        if isinstance(other, PoleSum):
            anchors = _same_anchors(self.anchors, other.anchors)
            terms = dict(self.terms)
            for k, c in other.terms.items():
                _accumulate(terms, k, c)
            return PoleSum(anchors, terms, self.poly + other.poly)
        other = as_poly(other)
        if other is NotImplemented:
            return NotImplemented
        return PoleSum(self.anchors, self.terms, self.poly + other)

    __radd__ = __add__

    def __neg__(self):
        return PoleSum(self.anchors, {k: -c for k, c in self.terms.items()}, -self.poly)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, PoleSum):
            return multiply(self, other)
        if isinstance(other, Poly):
            return multiply(self, PoleSum(self.anchors, {}, other))
        if isinstance(other, (int, float, complex, np.number)):
            return PoleSum(self.anchors, {k: other * c for k, c in self.terms.items()}, self.poly * other)
        return NotImplemented

    __rmul__ = __mul__

    def derivative(self):
        terms = {(i, a + 1): -a * c for (i, a), c in self.terms.items()}
        return PoleSum(self.anchors, terms, self.poly.deriv())

    def pole_part(self):
        return PoleSum(self.anchors, self.terms)

    def laurent(self, i, m_max):
        return laurent_coeffs(self, i, m_max)

    def max_difference(self, other):
        diff = self - other
        mags = [abs(c) for c in diff.terms.values()] + list(np.abs(diff.poly.coeffs))
        return float(max(mags, default=0.0))

    def allclose(self, other, atol=1e-10):
        return self.max_difference(other) <= atol

    def as_tensor(self):
        if not self.poly.is_zero():
            raise ValueError("a pole tensor has no polynomial part")
        return PoleTensor(self.anchors, 1, {(k,): c for k, c in self.terms.items()})

    def to_record(self):
        return {
            "anchors": [encode_complex(s) for s in self.anchors],
            "poly": self.poly.to_record(),
            "terms": [
                {"pole": i, "order": a, "coeff": encode_complex(c)}
                for (i, a), c in sorted(self.terms.items())
            ],
        }


def add(a, b):
    return a + b


def _polynomial_part(p, f):
    """Polynomial part of p(x) * f(x) for a pole-only f."""
    out = Poly()
    if p.is_zero():
        return out
    for (i, a), c in f.terms.items():
        if p.degree < a:
            continue
        quotient, _ = npoly.polydiv(p.coeffs, npoly.polypow([-f.anchors[i], 1.0], a))
        out = out + Poly(quotient) * c
    return out


def multiply(a, b):
    """Exact product, re-expanded in partial fractions through Laurent coefficients at each anchor."""
    anchors = _same_anchors(a.anchors, b.anchors)
    poly = a.poly * b.poly + _polynomial_part(a.poly, b) + _polynomial_part(b.poly, a)
    terms = {}
    for i in sorted(a.pole_indices() | b.pole_indices()):
        oa, ob = a.max_order(i), b.max_order(i)
        top = max(oa, ob)
        prod = np.convolve(a.laurent(i, top).series(), b.laurent(i, top).series())
        for k in range(1, oa + ob + 1):
            terms[(i, k)] = prod[oa + ob - k]
    return PoleSum(anchors, terms, poly)


def laurent_coeffs(f, i, m_max):
    """Principal part of f at s_i and Taylor coefficients of its regular part up to m_max."""
    if m_max < 0:
        raise ValueError("m_max must be non-negative")
    s = f.anchors
    principal = np.zeros(f.max_order(i), dtype=complex)
    regular = f.poly.taylor(s[i], m_max)
    for (j, a), c in f.terms.items():
        if j == i:
            principal[a - 1] += c
            continue
        d = s[i] - s[j]
        for m in range(m_max + 1):
            regular[m] += c * shifted_power(a, m, d)
    return Laurent(principal, regular)


def large_x_moments(f, m_max):
    """mu_k with f(x) = sum_k mu_k x**-(k+1), for k = 0..m_max."""
    if not f.poly.is_zero():
        raise ValueError("large-x moments need a vanishing polynomial part")
    mu = np.zeros(m_max + 1, dtype=complex)
    for (i, a), c in f.terms.items():
        s = f.anchors[i]
        for k in range(a - 1, m_max + 1):
            mu[k] += c * comb(k, a - 1, exact=True) * s ** (k - a + 1)
    return mu


# --- Several variables ---

@dataclass(frozen=True, eq=False)
class PoleTensor:
    """sum over multi-keys of c * prod_slot (x_slot - s_i)**(-a); no polynomial part in any slot."""

    anchors: np.ndarray
    arity: int
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "anchors", _checked_anchors(self.anchors))
        clean = {}
        for key, c in dict(self.terms).items():
            if len(key) != self.arity:
                raise ValueError(f"key {key!r} does not match arity {self.arity}")
            key = tuple((int(i), int(a)) for i, a in key)
            if any(a < 1 for _, a in key):
                raise ValueError(f"pole orders must be positive in {key!r}")
            _accumulate(clean, key, complex(c))
        object.__setattr__(self, "terms", _prune(clean))

    @classmethod
    def zero(cls, anchors, arity):
        return cls(anchors, arity)

    def __call__(self, *xs):
        if len(xs) != self.arity:
            raise ValueError(f"expected {self.arity} arguments")
        total = 0j
        for key, c in self.terms.items():
            value = c
            for (i, a), x in zip(key, xs):
                value = value / (x - self.anchors[i]) ** a
            total += value
        return total

    def __add__(self, other):
        if not isinstance(other, PoleTensor):
            return NotImplemented
        anchors = _same_anchors(self.anchors, other.anchors)
        if other.arity != self.arity:
            raise ValueError("arity mismatch")
        terms = dict(self.terms)
        for k, c in other.terms.items():
            _accumulate(terms, k, c)
        return PoleTensor(anchors, self.arity, terms)

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return PoleTensor(self.anchors, self.arity, {k: other * c for k, c in self.terms.items()})
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / other)

    def permuted(self, order):
        """Tensor T' with T'(y_0, ..) = T(y_order[0], y_order[1], ..)."""
        terms = {}
        for key, c in self.terms.items():
            new = [None] * self.arity
            for k, slot in enumerate(order):
                new[slot] = key[k]
            _accumulate(terms, tuple(new), c)
        return PoleTensor(self.anchors, self.arity, terms)

    def max_difference(self, other):
        keys = set(self.terms) | set(other.terms)
        return float(max((abs(self.terms.get(k, 0j) - other.terms.get(k, 0j)) for k in keys), default=0.0))

    def allclose(self, other, atol=1e-10):
        return self.max_difference(other) <= atol

    def symmetry_defect(self):
        """Largest coefficient change under any permutation of the slots."""
        return max((self.max_difference(self.permuted(p)) for p in permutations(range(self.arity))), default=0.0)

    def derivative(self, slot=0):
        terms = {}
        for key, c in self.terms.items():
            i, a = key[slot]
            new = key[:slot] + ((i, a + 1),) + key[slot + 1:]
            _accumulate(terms, new, -a * c)
        return PoleTensor(self.anchors, self.arity, terms)

    def max_order(self, i, slots=(0,)):
        """Largest combined pole order at s_i over the given slots (they are set equal)."""
        return max((sum(key[s][1] for s in slots if key[s][0] == i) for key in self.terms), default=0)

    def moments(self, slot, m_max):
        """Large-x moments in one slot; each moment is a tensor in the other slots."""
        out = []
        for k in range(m_max + 1):
            terms = {}
            for key, c in self.terms.items():
                i, a = key[slot]
                if k < a - 1:
                    continue
                rest = key[:slot] + key[slot + 1:]
                _accumulate(terms, rest, c * comb(k, a - 1, exact=True) * self.anchors[i] ** (k - a + 1))
            out.append(PoleTensor(self.anchors, self.arity - 1, terms))
        return out

    def to_polesum(self):
        if self.arity != 1:
            raise ValueError("only one-slot tensors convert to PoleSum")
        return PoleSum(self.anchors, {key[0]: c for key, c in self.terms.items()})

    def to_record(self):
        return {
            "anchors": [encode_complex(s) for s in self.anchors],
            "arity": self.arity,
            "terms": [
                {"poles": [i for i, _ in key], "orders": [a for _, a in key], "coeff": encode_complex(c)}
                for key, c in sorted(self.terms.items())
            ],
        }


# --- Jets: Laurent series at one anchor with tensor-valued coefficients ---

@dataclass
class Jet:
    """Laurent series in h = x - s_anchor, valid through power `top`.

    series[p] maps a key over the labelled slots to the coefficient of h**p.
    """

    anchor: int
    labels: tuple
    top: int
    series: dict = field(default_factory=dict)

    @property
    def low(self):
        return min((p for p, d in self.series.items() if d), default=0)

    def __add__(self, other):
        if self.anchor != other.anchor or self.labels != other.labels:
            raise ValueError("jets must share anchor and labels to be added")
        top = min(self.top, other.top)
        series = {}
        for src in (self.series, other.series):
            for p, bucket in src.items():
                if p > top:
                    continue
                out = series.setdefault(p, {})
                for k, c in bucket.items():
                    _accumulate(out, k, c)
        return Jet(self.anchor, self.labels, top, series)

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return Jet(self.anchor, self.labels, self.top,
                       {p: {k: other * c for k, c in d.items()} for p, d in self.series.items()})
        if not isinstance(other, Jet):
            return NotImplemented
        if self.anchor != other.anchor or set(self.labels) & set(other.labels):
            raise ValueError("jets must share the anchor and have disjoint labels")
        labels = tuple(sorted(self.labels + other.labels))
        pick = [(0, self.labels.index(l)) if l in self.labels else (1, other.labels.index(l)) for l in labels]
        top = min(self.top + other.low, other.top + self.low)
        series = {}
        for p, da in self.series.items():
            for q, db in other.series.items():
                if p + q > top:
                    continue
                bucket = series.setdefault(p + q, {})
                for ka, ca in da.items():
                    for kb, cb in db.items():
                        src = (ka, kb)
                        _accumulate(bucket, tuple(src[w][n] for w, n in pick), ca * cb)
        return Jet(self.anchor, labels, top, series)

    __rmul__ = __mul__

    def principal_terms(self):
        """Terms {((anchor, a),) + rest: c} of the principal part, x first."""
        if self.top < -1:
            raise ValueError("jet truncated below the residue order")
        out = {}
        for p, bucket in self.series.items():
            if p >= 0:
                continue
            for rest, c in bucket.items():
                _accumulate(out, ((self.anchor, -p),) + rest, c)
        return out


def _series_product(a, b, top):
    out = {}
    for p, ca in a.items():
        for q, cb in b.items():
            if p + q <= top:
                _accumulate(out, p + q, ca * cb)
    return out


def _factor_series(anchors, i, key, top):
    j, a = key
    if j == i:
        return {-a: 1.0}
    d = anchors[i] - anchors[j]
    return {m: shifted_power(a, m, d) for m in range(top + 1)}


def tensor_jet(t, i, top, x_slots=(0,), labels=None):
    """Expand t at x = s_i with every slot in x_slots set to x.

    The remaining slots keep their order and are tagged with `labels` (default 1, 2, ..).
    """
    rest_slots = [k for k in range(t.arity) if k not in x_slots]
    labels = tuple(range(1, len(rest_slots) + 1)) if labels is None else tuple(labels)
    if len(labels) != len(rest_slots):
        raise ValueError("one label per remaining slot")
    order = sorted(range(len(labels)), key=lambda n: labels[n])
    series = {}
    for key, c in t.terms.items():
        extra = sum(key[s][1] for s in x_slots if key[s][0] == i)
        ser = {0: 1.0}
        for s in x_slots:
            ser = _series_product(ser, _factor_series(t.anchors, i, key[s], top + extra), top + extra)
        rest = tuple(key[rest_slots[n]] for n in order)
        for p, v in ser.items():
            if p <= top:
                _accumulate(series.setdefault(p, {}), rest, c * v)
    return Jet(i, tuple(labels[n] for n in order), top, series)


def inverse_square_jet(anchors, i, label, top):
    """Jet of 1/(x - xi)**2 at s_i, as a pole series in xi (slot `label`)."""
    series = {m: {(((i, m + 2)),): float(m + 1)} for m in range(top + 1)}
    return Jet(i, (label,), top, series)


# --- Residues ---

def residue_pairing_tensor(kderivs, v, i):
    """sum_m K^(m)t(x0, s_i)/m! . v_{-(m+1)}(s_i) for tensor-valued v (x in slot 0).

    kderivs[m] is the d x d matrix of PoleSums K^(m)(x0, s_i); polynomial parts of v never
    reach this function, principal parts at other anchors are ignored.
    """
    d = len(v)
    anchors = kderivs[0][0][0].anchors
    arity = v[0].arity
    out = [dict() for _ in range(d)]
    for l, comp in enumerate(v):
        for key, c in comp.terms.items():
            j, a = key[0]
            if j != i:
                continue
            m = a - 1
            if m >= len(kderivs):
                raise ValueError(f"kernel jet of order {m} needed at root {i}, got {len(kderivs) - 1}")
            weight = c / math.factorial(m)
            rest = key[1:]
            for k in range(d):
                for kk, ck in kderivs[m][l][k].terms.items():
                    _accumulate(out[k], (kk,) + rest, weight * ck)
    return [PoleTensor(anchors, arity, t) for t in out]


def residue_pairing(kderivs, v, i):
    """Res_{x -> s_i} K^t(x0, x) v(x) for a vector of single-variable PoleSums v."""
    comps = [PoleTensor(f.anchors, 1, {(k,): c for k, c in f.terms.items()}) for f in v]
    return [t.to_polesum() for t in residue_pairing_tensor(kderivs, comps, i)]
