"""Transition-rate families, their primitives and inverses, and the revision cost built from them."""

import math
from dataclasses import dataclass, replace
from typing import Literal, get_args

import numpy as np
from numpy.typing import ArrayLike

from .errors import OutOfRangeError

RateFamily = Literal["power", "logarithmic", "positive_exponential", "negative_exponential"]

RATE_FAMILIES: tuple[str, ...] = get_args(RateFamily)

# Older or shorter names accepted on input
_FAMILY_ALIASES = {
    "replicator": "power",
    "log": "logarithmic",
    "exponential": "positive_exponential",
    "exp": "positive_exponential",
    "negexp": "negative_exponential",
}

# Cost of a revision rate that no transition can realize
INFINITE_COST = math.inf


def normalize_family(name: str) -> RateFamily:
    """Map a family name or alias onto its canonical spelling."""
    key = name.strip().lower().replace("-", "_")
    key = _FAMILY_ALIASES.get(key, key)
    if key not in RATE_FAMILIES:
        raise ValueError(f"Unknown rate family: {name!r} (expected one of {', '.join(RATE_FAMILIES)})")
    return key  # type: ignore[return-value]


@dataclass(frozen=True)
class TransitionRateSpec:
    """A rate C from one of the four closed-form families.

    ``truncation_level`` holds C constant past that argument; ``None`` means no truncation.
    """

    family: RateFamily
    q: float = 1.0
    truncation_level: float | None = None

    def __post_init__(self):
        if self.family not in RATE_FAMILIES:
            raise ValueError(f"Unknown rate family: {self.family!r}")
        if not (self.q > 0 and math.isfinite(self.q)):
            raise ValueError(f"q > 0 required, got q = {self.q}")
        if self.family == "power" and self.q < 1:
            raise ValueError(f"power rates require q >= 1 (not Lipschitz at the origin), got q = {self.q}")
        if self.truncation_level is not None and not self.truncation_level > 0:
            raise ValueError(f"truncation_level > 0 required, got {self.truncation_level}")

    @property
    def sup(self) -> float:
        """Supremum of C over the reals."""
        if self.truncation_level is not None:
            return float(_closed_rate(self.family, self.q, np.float64(self.truncation_level)))
        if self.family == "negative_exponential":
            return 1.0
        return math.inf

    def truncated(self, level: float) -> "TransitionRateSpec":
        """Return a copy held constant beyond ``level``."""
        return replace(self, truncation_level=float(level))

    def describe(self) -> str:
        text = f"{self.family}(q={self.q:g})"
        if self.truncation_level is not None:
            text += f" truncated at {self.truncation_level:g}"
        return text


def _closed_rate(family: str, q: float, x: np.ndarray) -> np.ndarray:
    match family:
        case "power":
            return np.power(x, q)
        case "logarithmic":
            return np.log1p(q * x)
        case "positive_exponential":
            return np.expm1(q * x)
        case _:
            return -np.expm1(-q * x)


def _closed_primitive(family: str, q: float, d: np.ndarray) -> np.ndarray:
    match family:
        case "power":
            return np.power(d, q + 1.0) / (q + 1.0)
        case "logarithmic":
            qd = q * d
            return ((qd + 1.0) * np.log1p(qd) - qd) / q
        case "positive_exponential":
            return (np.expm1(q * d) - q * d) / q
        case _:
            return (np.expm1(-q * d) + q * d) / q


def _closed_inverse(family: str, q: float, v: np.ndarray) -> np.ndarray:
    match family:
        case "power":
            return np.power(v, 1.0 / q)
        case "logarithmic":
            return np.expm1(v) / q
        case "positive_exponential":
            return np.log1p(v) / q
        case _:
            return -np.log1p(-v) / q


def _output(values: np.ndarray, like: ArrayLike) -> float | np.ndarray:
    """Return a Python float for scalar input, the array otherwise."""
    if np.ndim(like) == 0:
        return float(values)
    return values


def eval_rate(spec: TransitionRateSpec, x: ArrayLike) -> float | np.ndarray:
    """Evaluate C(x); zero for x <= 0, constant past the truncation level."""
    arr = np.asarray(x, dtype=np.float64)
    upper = np.inf if spec.truncation_level is None else spec.truncation_level
    clipped = np.clip(arr, 0.0, upper)
    return _output(_closed_rate(spec.family, spec.q, clipped), x)


def eval_primitive(spec: TransitionRateSpec, delta: ArrayLike) -> float | np.ndarray:
    """Evaluate P(delta), the integral of C from 0 to max(delta, 0)."""
    arr = np.maximum(np.asarray(delta, dtype=np.float64), 0.0)
    level = spec.truncation_level
    # Below the level the truncated primitive is the closed form
    if level is None or not np.any(arr > level):
        return _output(_closed_primitive(spec.family, spec.q, arr), delta)

    inside = np.minimum(arr, level)
    beyond = arr - inside
    cap = _closed_rate(spec.family, spec.q, np.float64(level))
    values = _closed_primitive(spec.family, spec.q, inside) + cap * beyond
    return _output(values, delta)


def _attainable(spec: TransitionRateSpec, v: np.ndarray) -> np.ndarray:
    if spec.truncation_level is not None:
        return v <= spec.sup
    if spec.family == "negative_exponential":
        return v < 1.0
    return np.ones_like(v, dtype=bool)


def eval_inverse(spec: TransitionRateSpec, v: ArrayLike) -> float | np.ndarray:
    """Return the unique w >= 0 with C(w) = v.

    Raises:
        ValueError: if v is negative
        OutOfRangeError: if v is at or above the supremum of a bounded C
    """
    arr = np.asarray(v, dtype=np.float64)
    if np.any(arr < 0):
        raise ValueError("eval_inverse requires v >= 0")
    if not np.all(_attainable(spec, arr)):
        raise OutOfRangeError(
            f"{spec.describe()} never reaches {float(np.max(arr)):.6g} (sup C = {spec.sup:.6g})"
        )
    return _output(_closed_inverse(spec.family, spec.q, arr), v)


def revision_cost(spec: TransitionRateSpec, p_z: float, u: ArrayLike) -> float | np.ndarray:
    """Cost of revising toward an action of density ``p_z`` at rate ``u``.

    Evaluates the integral of C^(-1)(v / p_z) over [0, u] through the identity
    p_z * (W C(W) - P(W)) with W = C^(-1)(u / p_z). Rates that C cannot reach,
    and any positive rate toward an unused action (p_z = 0), cost INFINITE_COST.
    """
    arr = np.asarray(u, dtype=np.float64)
    if p_z < 0 or np.any(arr < 0):
        raise ValueError("revision_cost requires p_z >= 0 and u >= 0")

    if p_z == 0:
        return _output(np.where(arr > 0, INFINITE_COST, 0.0), u)

    ratio = arr / p_z
    reachable = _attainable(spec, ratio)
    w = _closed_inverse(spec.family, spec.q, np.where(reachable, ratio, 0.0))
    rate = _closed_rate(spec.family, spec.q, w)
    primitive = _closed_primitive(spec.family, spec.q, w)
    cost = p_z * (w * rate - primitive)
    cost = np.where(arr == 0, 0.0, cost)
    return _output(np.where(reachable, cost, INFINITE_COST), u)


def primitive_lipschitz_bound(spec: TransitionRateSpec, m: float) -> float:
    """Lipschitz constant of P on [0, m], which is C(m) since P' = C is nondecreasing."""
    if not m > 0:
        raise ValueError(f"m > 0 required, got {m}")
    return float(eval_rate(spec, m))
