"""Memory kernel families.

Exponential: g(t) = theta * exp(-theta * t)
Power-law:   g(t) = theta * c**theta * (t + c)**-(1 + theta)

Both are probability densities on [0, inf). All functions accept scalars
or numpy arrays of delays.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

THETA_BOUNDS = (1e-6, 1e4)
C_BOUNDS = (1e-6, 1e6)


class KernelFamily(str, enum.Enum):
    EXPONENTIAL = "exp"
    POWER_LAW = "pl"

    @classmethod
    def parse(cls, value) -> "KernelFamily":
        if isinstance(value, cls):
            return value
        aliases = {"exp": cls.EXPONENTIAL, "exponential": cls.EXPONENTIAL,
                   "pl": cls.POWER_LAW, "powerlaw": cls.POWER_LAW, "power-law": cls.POWER_LAW}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown kernel family {value!r}") from None

    @property
    def n_params(self) -> int:
        return 1 if self is KernelFamily.EXPONENTIAL else 2


@dataclass(frozen=True)
class KernelParams:
    family: KernelFamily
    theta: float
    c: float | None = None

    def __post_init__(self):
        family = KernelFamily.parse(self.family)
        object.__setattr__(self, "family", family)
        theta = float(self.theta)
        if not (theta > 0 and np.isfinite(theta)):
            raise ValueError(f"theta must be positive, got {theta!r}")
        object.__setattr__(self, "theta", theta)
        if family is KernelFamily.POWER_LAW:
            if self.c is None or not (float(self.c) > 0 and np.isfinite(self.c)):
                raise ValueError(f"power-law kernel needs a positive c, got {self.c!r}")
            object.__setattr__(self, "c", float(self.c))
        else:
            object.__setattr__(self, "c", None)

    @classmethod
    def exponential(cls, theta: float) -> "KernelParams":
        return cls(KernelFamily.EXPONENTIAL, theta)

    @classmethod
    def power_law(cls, theta: float, c: float) -> "KernelParams":
        return cls(KernelFamily.POWER_LAW, theta, c)

    def to_log_vector(self) -> np.ndarray:
        if self.family is KernelFamily.EXPONENTIAL:
            return np.array([np.log(self.theta)])
        return np.array([np.log(self.theta), np.log(self.c)])

    @classmethod
    def from_log_vector(cls, family, v) -> "KernelParams":
        family = KernelFamily.parse(family)
        v = np.asarray(v, dtype=float)
        if family is KernelFamily.EXPONENTIAL:
            return cls(family, float(np.exp(v[0])))
        return cls(family, float(np.exp(v[0])), float(np.exp(v[1])))


def log_bounds(family) -> list[tuple[float, float]]:
    """Box constraints on the log-parameter vector used by the optimizers."""
    family = KernelFamily.parse(family)
    bounds = [tuple(np.log(THETA_BOUNDS))]
    if family is KernelFamily.POWER_LAW:
        bounds.append(tuple(np.log(C_BOUNDS)))
    return bounds


def clip_to_bounds(p: KernelParams) -> KernelParams:
    theta = float(np.clip(p.theta, *THETA_BOUNDS))
    c = None if p.c is None else float(np.clip(p.c, *C_BOUNDS))
    return KernelParams(p.family, theta, c)


def _check_delay(tau):
    tau = np.asarray(tau, dtype=np.float64)
    if np.any(tau < 0) or np.any(np.isnan(tau)):
        raise ValueError("kernel delays must be non-negative")
    return tau


def _out(value, like):
    return float(value) if np.ndim(like) == 0 else value


def _log_pdf(p: KernelParams, t: np.ndarray) -> np.ndarray:
    # no validation: callers hold pre-checked delay arrays
    if p.family is KernelFamily.EXPONENTIAL:
        return np.log(p.theta) - p.theta * t
    return (np.log(p.theta) - np.log(p.c)) - (1.0 + p.theta) * np.log1p(t / p.c)


def kernel_log_pdf(p: KernelParams, tau):
    """log g(tau), evaluated without forming g itself."""
    return _out(_log_pdf(p, _check_delay(tau)), tau)


def kernel_pdf(p: KernelParams, tau):
    return _out(np.exp(kernel_log_pdf(p, tau)), tau)


def kernel_log_tail(p: KernelParams, x):
    """log of the survival mass beyond delay x."""
    t = _check_delay(x)
    if p.family is KernelFamily.EXPONENTIAL:
        out = -p.theta * t
    else:
        out = -p.theta * np.log1p(t / p.c)
    return _out(out, x)


def kernel_tail(p: KernelParams, x):
    """Mass of the kernel beyond x; 1 at x=0, non-increasing."""
    return _out(np.exp(kernel_log_tail(p, x)), x)


def kernel_cdf(p: KernelParams, x):
    """1 - kernel_tail(x), computed with expm1 to keep small values exact."""
    return _out(-np.expm1(kernel_log_tail(p, x)), x)


def grad_log_pdf(p: KernelParams, tau) -> np.ndarray:
    """Gradient of log g(tau) w.r.t. the log-parameter vector.

    Returns an array of shape (n_params, len(tau)).
    """
    t = _check_delay(np.atleast_1d(tau))
    if p.family is KernelFamily.EXPONENTIAL:
        return (1.0 - p.theta * t)[None, :]
    d_theta = 1.0 - p.theta * np.log1p(t / p.c)
    d_c = -1.0 + (1.0 + p.theta) * t / (t + p.c)
    return np.vstack([d_theta, d_c])


def sample_delay(p: KernelParams, u):
    """Inverse-CDF draw of parent-child delays from uniforms u in (0, 1]."""
    u = np.asarray(u, dtype=np.float64)
    if p.family is KernelFamily.EXPONENTIAL:
        return -np.log(u) / p.theta
    return p.c * np.expm1(-np.log(u) / p.theta)


def sample_delay_beyond(p: KernelParams, elapsed, u):
    """Draw delays conditioned on exceeding ``elapsed`` (inverse of the tail ratio)."""
    u = np.asarray(u, dtype=np.float64)
    elapsed = np.asarray(elapsed, dtype=np.float64)
    if p.family is KernelFamily.EXPONENTIAL:
        return elapsed - np.log(u) / p.theta
    return (elapsed + p.c) * np.exp(-np.log(u) / p.theta) - p.c
