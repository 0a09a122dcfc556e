"""Model definition: the two polynomial potentials, temperature, root count and solver settings."""
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import sympy as sp

from .config import DEFAULT_SETTINGS
from .errors import ConfigError
from .ratfun import Poly
from .records import decode_complex, digest, encode_complex

log = logging.getLogger(__name__)

MODEL_KEYS = {"V1_prime", "V2_prime", "T", "N", "bethe", "precision"}
BETHE_KEYS = {"mode", "root_selection", "initial_guesses", "steps", "tol", "max_iter", "max_halvings"}
MODES = ("homotopy", "direct")


@dataclass(frozen=True)
class BetheConfig:
    mode: str = "homotopy"
    root_selection: tuple = None
    initial_guesses: tuple = None
    steps: int = 20
    tol: float = 1e-12
    max_iter: int = 50
    # a failed homotopy step is retried at half the size; no step shrinks below (1/steps) / 2**max_halvings
    max_halvings: int = 10

    def to_record(self):
        rec = {"mode": self.mode, "steps": self.steps, "tol": self.tol, "max_iter": self.max_iter,
               "max_halvings": self.max_halvings}
        if self.root_selection is not None:
            rec["root_selection"] = list(self.root_selection)
        if self.initial_guesses is not None:
            rec["initial_guesses"] = [encode_complex(z) for z in self.initial_guesses]
        return rec


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """V1'(x) = sum t_k x**k, V2'(y) = sum ttilde_k y**k, temperature T and N Bethe roots."""

    t: np.ndarray
    ttilde: np.ndarray
    T: float
    N: int
    bethe: BetheConfig = field(default_factory=BetheConfig)
    precision: float = 1.0

    def __post_init__(self):
        t = Poly(self.t).coeffs
        tt = Poly(self.ttilde).coeffs
        if t.size == 0:
            raise ConfigError("V1' has a zero leading coefficient (it vanishes identically)")
        if tt.size == 0:
            raise ConfigError("V2' has a zero leading coefficient (it vanishes identically)")
        if tt.size < 2:
            raise ConfigError("V2' must have degree at least 1")
        if isinstance(self.N, bool) or int(self.N) != self.N or self.N <= 0:
            raise ConfigError(f"N must be a positive integer, got {self.N!r}")
        if not np.isfinite(self.T) or self.T <= 0:
            raise ConfigError(f"T must be a positive real, got {self.T!r}")
        if self.precision <= 0:
            raise ConfigError("precision factor must be positive")
        if self.bethe.mode not in MODES:
            raise ConfigError(f"unknown bethe mode {self.bethe.mode!r}")
        if self.bethe.tol <= 0 or self.bethe.max_iter < 1 or self.bethe.steps < 1:
            raise ConfigError("bethe tol, max_iter and steps must be positive")
        for name in ("root_selection", "initial_guesses"):
            chosen = getattr(self.bethe, name)
            if chosen is not None and len(chosen) != self.N:
                raise ConfigError(f"{name} has {len(chosen)} entries, expected N = {self.N}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "ttilde", tt)
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "T", float(self.T))

    # --- Derived data ---

    @property
    def d1(self):
        return self.t.size - 1

    @property
    def d2(self):
        return self.ttilde.size - 1

    @property
    def g(self):
        """The ratio T/N that weighs every Vandermonde term."""
        return self.T / self.N

    @property
    def V1p(self):
        return Poly(self.t)

    @property
    def V2p(self):
        return Poly(self.ttilde)

    @property
    def V1(self):
        return self.V1p.antideriv()

    @property
    def V2(self):
        return self.V2p.antideriv()

    def potential(self, which):
        if which not in (1, 2):
            raise ValueError("which must be 1 or 2")
        return self.V1 if which == 1 else self.V2

    @property
    def settings(self):
        return DEFAULT_SETTINGS.with_overrides(precision=self.precision)

    def coefficient(self, which, k):
        coeffs = self.t if which == 1 else self.ttilde
        return complex(coeffs[k]) if 0 <= k < coeffs.size else 0j

    def to_record(self):
        return {
            "V1_prime": [encode_complex(c) for c in self.t],
            "V2_prime": [encode_complex(c) for c in self.ttilde],
            "T": self.T,
            "N": self.N,
            "bethe": self.bethe.to_record(),
            "precision": self.precision,
        }

    def digest(self):
        return digest(self.to_record())

    def with_bethe(self, **changes):
        return replace(self, bethe=replace(self.bethe, **changes))


# --- Loading ---

def _parse_potential(value, var, name):
    """Coefficient list (real or [re, im] entries) or a SymPy polynomial string in `var`."""
    if isinstance(value, str):
        symbol = sp.Symbol(var)
        try:
            expr = sp.sympify(value, locals={var: symbol})
        except (sp.SympifyError, TypeError, SyntaxError) as exc:
            raise ConfigError(f"{name}: cannot parse {value!r}: {exc}") from exc
        extra = expr.free_symbols - {symbol}
        if extra:
            raise ConfigError(f"{name}: unexpected symbols {sorted(map(str, extra))}")
        try:
            poly = sp.Poly(expr, symbol)
        except sp.PolynomialError as exc:
            raise ConfigError(f"{name}: {value!r} is not a polynomial in {var}") from exc
        return [complex(c) for c in reversed(poly.all_coeffs())]
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"{name} must be a non-empty coefficient list or a polynomial string")
    try:
        return [decode_complex(c) for c in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def _parse_bethe(raw):
    if raw is None:
        return BetheConfig()
    if not isinstance(raw, dict):
        raise ConfigError("bethe must be an object")
    unknown = set(raw) - BETHE_KEYS
    if unknown:
        raise ConfigError(f"unknown bethe keys: {sorted(unknown)}")
    kwargs = {}
    if "mode" in raw:
        kwargs["mode"] = raw["mode"]
    if "root_selection" in raw:
        sel = raw["root_selection"]
        if not isinstance(sel, list) or not all(isinstance(k, int) and not isinstance(k, bool) for k in sel):
            raise ConfigError("root_selection must be a list of integer indices")
        kwargs["root_selection"] = tuple(sel)
    if "initial_guesses" in raw:
        try:
            kwargs["initial_guesses"] = tuple(decode_complex(z) for z in raw["initial_guesses"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"initial_guesses: {exc}") from exc
    for key, cast in (("steps", int), ("max_iter", int), ("max_halvings", int), ("tol", float)):
        if key in raw:
            try:
                kwargs[key] = cast(raw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bethe {key}: {exc}") from exc
    return BetheConfig(**kwargs)


def model_from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigError("model document must be a JSON object")
    unknown = set(raw) - MODEL_KEYS
    if unknown:
        raise ConfigError(f"unknown model keys: {sorted(unknown)}")
    missing = {"V1_prime", "V2_prime", "T", "N"} - set(raw)
    if missing:
        raise ConfigError(f"missing model keys: {sorted(missing)}")
    N = raw["N"]
    if isinstance(N, bool) or not isinstance(N, int):
        raise ConfigError(f"N must be an integer, got {N!r}")
    try:
        T = float(raw["T"])
        precision = float(raw.get("precision", 1.0))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"T and precision must be real numbers: {exc}") from exc
    return ModelSpec(
        t=np.array(_parse_potential(raw["V1_prime"], "x", "V1_prime"), dtype=complex),
        ttilde=np.array(_parse_potential(raw["V2_prime"], "y", "V2_prime"), dtype=complex),
        T=T,
        N=N,
        bethe=_parse_bethe(raw.get("bethe")),
        precision=precision,
    )


def load_model(source):
    """Model from a path, a JSON text or an already parsed dict."""
    if isinstance(source, dict):
        return model_from_dict(source)
    text = str(source)
    if not text.lstrip().startswith("{"):
        path = Path(text)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read model file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"model file is not valid JSON: {exc}") from exc
    model = model_from_dict(raw)
    log.info("loaded model d1=%d d2=%d N=%d T=%g", model.d1, model.d2, model.N, model.T)
    return model


# --- Evaluation ---

def eval_V_derivs(model, which, x, max_deriv):
    """[V(x), V'(x), ..., V^(max_deriv)(x)] for V1 (which=1) or V2 (which=2)."""
    if max_deriv < 0:
        raise ValueError("max_deriv must be non-negative")
    current = model.potential(which)
    out = []
    for _ in range(max_deriv + 1):
        out.append(complex(current(x)))
        current = current.deriv()
    return out


def perturb_model(model, which, m, eps):
    """Copy of the model with t_m (which=1) or ttilde_m (which=2) shifted by eps."""
    coeffs = np.array(model.t if which == 1 else model.ttilde, dtype=complex)
    if m >= coeffs.size:
        coeffs = np.concatenate([coeffs, np.zeros(m + 1 - coeffs.size, dtype=complex)])
    coeffs[m] += eps
    return replace(model, t=coeffs) if which == 1 else replace(model, ttilde=coeffs)
