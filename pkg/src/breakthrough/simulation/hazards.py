"""Breakthrough-infection hazard mechanisms and exact event-time sampling.

Two mechanisms are supported:

waning
    Daily hazard ``a`` for ``d`` days after vaccination, then a linear
    climb at ``r`` per day until it reaches ``b``, flat afterwards.
new_strain
    Daily hazard ``k`` until calendar day ``strain_day`` and ``c`` from
    then on, independent of the vaccination day.

Every function is vectorised over ``v`` (vaccination day), ``m`` (hazard
multiplier) and the time/target argument, and returns a float for scalar
input.
"""

import enum
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

__all__ = ["Mechanism", "HazardSpec", "hazard_at", "cumulative_hazard",
           "invert_cumulative_hazard", "draw_event_time"]


class Mechanism(str, enum.Enum):
    WANING = "waning"
    NEW_STRAIN = "new_strain"


@dataclass(frozen=True)
class HazardSpec:
    mechanism: Mechanism
    a: float = 1e-4
    b: float = 7e-4
    d: float = 180.0
    r: float = 1e-5
    k: float = 1e-4
    c: float = 1e-3
    strain_day: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        if self.mechanism is Mechanism.WANING:
            if not (self.a > 0 and self.b >= self.a and self.r > 0 and self.d >= 0):
                raise ValueError("waning hazard needs a > 0, b >= a, r > 0, d >= 0")
        else:
            if not (self.k > 0 and self.c > 0):
                raise ValueError("new-strain hazard needs k > 0 and c > 0")
            if self.strain_day is not None and self.strain_day < 0:
                raise ValueError("strain_day must be >= 0")

    @classmethod
    def waning(cls, a=1e-4, b=7e-4, d=180.0, r=1e-5):
        return cls(Mechanism.WANING, a=a, b=b, d=d, r=r)

    @classmethod
    def new_strain(cls, c=1e-3, k=1e-4, strain_day=None):
        return cls(Mechanism.NEW_STRAIN, k=k, c=c, strain_day=strain_day)

    @property
    def ramp_end(self):
        """Days after vaccination at which a waning hazard reaches ``b``."""
        return self.d + (self.b - self.a) / self.r

    def anchored(self, landmark_day):
        """Fill a missing ``strain_day`` with the landmark day."""
        if self.mechanism is Mechanism.NEW_STRAIN and self.strain_day is None:
            return replace(self, strain_day=float(landmark_day))
        return self

    def params(self):
        if self.mechanism is Mechanism.WANING:
            return {"a": self.a, "b": self.b, "d": self.d, "r": self.r}
        return {"k": self.k, "c": self.c, "strain_day": self.strain_day}


def _strain_day(spec):
    if spec.strain_day is None:
        raise ValueError("new-strain hazard needs a strain_day (see HazardSpec.anchored)")
    return spec.strain_day


def _out(x, scalar):
    return float(x) if scalar else x


def _prepare(v, m, t):
    scalar = all(np.ndim(z) == 0 for z in (v, m, t))
    v, m, t = np.broadcast_arrays(np.asarray(v, dtype=np.float64),
                                  np.asarray(m, dtype=np.float64),
                                  np.asarray(t, dtype=np.float64))
    return v, m, t, scalar


def hazard_at(spec: HazardSpec, v, m, t):
    """Daily hazard at calendar day ``t`` for a subject vaccinated on ``v``."""
    v, m, t, scalar = _prepare(v, m, t)
    if np.any(t < v):
        raise ValueError("hazard is undefined before vaccination (t < v)")
    if spec.mechanism is Mechanism.WANING:
        u = t - v
        h = np.clip(spec.a + spec.r * (u - spec.d), spec.a, spec.b)
    else:
        h = np.where(t < _strain_day(spec), spec.k, spec.c)
    return _out(m * h, scalar)


def _waning_cumulative(spec, u):
    a, r, d = spec.a, spec.r, spec.d
    s_b = (spec.b - a) / r
    s = np.clip(u - d, 0.0, s_b)
    return a * np.minimum(u, d) + a * s + 0.5 * r * s * s + spec.b * np.maximum(u - d - s_b, 0.0)


def cumulative_hazard(spec: HazardSpec, v, m, t):
    """Integral of :func:`hazard_at` from ``v`` to ``t``."""
    v, m, t, scalar = _prepare(v, m, t)
    if np.any(t < v):
        raise ValueError("cumulative hazard is undefined for t < v")
    if spec.mechanism is Mechanism.WANING:
        out = _waning_cumulative(spec, t - v)
    else:
        sd = _strain_day(spec)
        pre = np.clip(np.minimum(t, sd) - v, 0.0, None)
        post = np.clip(t - np.maximum(v, sd), 0.0, None)
        out = spec.k * pre + spec.c * post
    return _out(m * out, scalar)


def invert_cumulative_hazard(spec: HazardSpec, v, m, target):
    """Smallest calendar day at which the cumulative hazard equals ``target``.

    An infinite target maps to an infinite day.
    """
    v, m, e, scalar = _prepare(v, m, target)
    if np.any(e < 0):
        raise ValueError("target cumulative hazard must be >= 0")
    if np.any(m <= 0):
        raise ValueError("hazard multiplier must be positive")
    e = e / m
    if spec.mechanism is Mechanism.WANING:
        a, b, r, d = spec.a, spec.b, spec.r, spec.d
        s_b = (b - a) / r
        flat_top = a * d
        ramp_top = flat_top + a * s_b + 0.5 * r * s_b * s_b
        with np.errstate(invalid="ignore", divide="ignore"):
            # Rationalised quadratic root; stable when r is tiny.
            x = np.maximum(e - flat_top, 0.0)
            s = 2.0 * x / (a + np.sqrt(a * a + 2.0 * r * x))
            u = np.where(e <= flat_top, e / a,
                         np.where(e <= ramp_top, d + s, d + s_b + (e - ramp_top) / b))
    else:
        sd = _strain_day(spec)
        pre_total = spec.k * np.maximum(sd - v, 0.0)
        u = np.where(e <= pre_total, e / spec.k,
                     np.maximum(sd - v, 0.0) + (e - pre_total) / spec.c)
    return _out(v + u, scalar)


def draw_event_time(spec: HazardSpec, v, m, rng: np.random.Generator):
    """Sample calendar event days by inverting the cumulative hazard.

    Uses ``U = rng.random()`` on [0, 1) and the target ``-log U``; ``U = 1``
    cannot occur, so no event lands exactly on the vaccination day, and
    ``U = 0`` yields an event that never happens (``inf``).
    """
    v = np.asarray(v, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    shape = np.broadcast_shapes(v.shape, m.shape)
    u = rng.random(shape)
    with np.errstate(divide="ignore"):
        target = -np.log(u)
    return invert_cumulative_hazard(spec, v, m, target if shape else float(target))
