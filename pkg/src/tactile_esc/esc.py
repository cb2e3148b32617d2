"""Multi-channel sinusoidal extremum seeking controller.

Block order per sample: high-pass -> demodulate -> low-pass -> gain ->
integrate -> modulate. All internal quantities are SI (m, rad, s, rad/s);
:meth:`EscConfig.from_user_units` accepts mm / deg / Hz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

CHANNELS = ("x", "y", "z", "alpha", "beta", "gamma")

DEFAULT_B_MM = (0.2, 0.2, 0.5)
DEFAULT_B_DEG = (0.675, 0.675, 0.675)
DEFAULT_W_HZ = (0.9, 0.83, 0.7, 1.05, 1.0, 0.95)
DEFAULT_K = (0.7, 1.1, 0.7, 10.0, 10.0, 10.0)
DEFAULT_HPF_HZ = 0.7
DEFAULT_LPF_HZ = 1.59


@dataclass(frozen=True)
class Pose6:
    """Key-tip pose: position in meters, x-y-z intrinsic Euler angles in radians."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_tuple()):
            raise ValueError(f"non-finite pose: {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, ...]:
        return (self.x, self.y, self.z, self.alpha, self.beta, self.gamma)

    def to_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    @classmethod
    def from_array(cls, values) -> "Pose6":
        values = np.asarray(values, dtype=float).reshape(6)
        return cls(*(float(v) for v in values))

    @classmethod
    def from_mm_deg(cls, x=0.0, y=0.0, z=0.0, alpha=0.0, beta=0.0, gamma=0.0) -> "Pose6":
        return cls(x * 1e-3, y * 1e-3, z * 1e-3,
                   math.radians(alpha), math.radians(beta), math.radians(gamma))

    def __add__(self, other: "Pose6") -> "Pose6":
        return Pose6.from_array(self.to_array() + other.to_array())


def _vec6(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (6,):
        raise ValueError(f"{name} must have 6 entries, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class EscConfig:
    """Controller constants in SI units (b in m/rad, w in rad/s, cutoffs in Hz)."""

    b: np.ndarray = field(default_factory=lambda: EscConfig.default().b)
    w: np.ndarray = field(default_factory=lambda: EscConfig.default().w)
    k: np.ndarray = field(default_factory=lambda: EscConfig.default().k)
    hpf_cutoff: float = DEFAULT_HPF_HZ
    lpf_cutoff: float = DEFAULT_LPF_HZ

    def __post_init__(self):
        b, w, k = _vec6(self.b, "b"), _vec6(self.w, "w"), _vec6(self.k, "k")
        if np.any(b < 0):
            raise ValueError("modulation amplitudes must be >= 0")
        if np.any(w <= 0):
            raise ValueError("modulation frequencies must be > 0")
        if np.any(k < 0):
            raise ValueError("integrator gains must be >= 0")
        if len(set(w.tolist())) != 6:
            raise ValueError("modulation frequencies must be pairwise distinct")
        if not (self.hpf_cutoff > 0 and self.lpf_cutoff > 0):
            raise ValueError("filter cutoffs must be > 0")
        for name, arr in (("b", b), ("w", w), ("k", k)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_user_units(cls, b_mm=DEFAULT_B_MM, b_deg=DEFAULT_B_DEG, w_hz=DEFAULT_W_HZ,
                        k=DEFAULT_K, hpf_cutoff=DEFAULT_HPF_HZ,
                        lpf_cutoff=DEFAULT_LPF_HZ) -> "EscConfig":
        b = np.concatenate([np.asarray(b_mm, float) * 1e-3, np.radians(np.asarray(b_deg, float))])
        w = 2.0 * np.pi * np.asarray(w_hz, float)
        return cls(b=b, w=w, k=np.asarray(k, float), hpf_cutoff=float(hpf_cutoff),
                   lpf_cutoff=float(lpf_cutoff))

    @classmethod
    def default(cls) -> "EscConfig":
        return cls.from_user_units()

    def replace(self, **changes) -> "EscConfig":
        values = dict(b=self.b, w=self.w, k=self.k, hpf_cutoff=self.hpf_cutoff,
                      lpf_cutoff=self.lpf_cutoff)
        values.update(changes)
        return EscConfig(**values)

    def __eq__(self, other):
        if not isinstance(other, EscConfig):
            return NotImplemented
        return (np.array_equal(self.b, other.b) and np.array_equal(self.w, other.w)
                and np.array_equal(self.k, other.k) and self.hpf_cutoff == other.hpf_cutoff
                and self.lpf_cutoff == other.lpf_cutoff)

    __hash__ = None


def first_order_coefficients(kind: str, cutoff: float, dt: float) -> tuple[float, float, float]:
    """One-pole/one-zero coefficients ``(b0, b1, p)`` for ``y = b0 x + b1 x[-1] + p y[-1]``.

    The digital magnitude is pinned to the analog prototype at DC, at the
    cutoff and at Nyquist. The cutoff match moves to fs/4 when the cutoff
    is above it.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    nyquist = 0.5 / dt
    fm = min(cutoff, 0.5 * nyquist)
    rn2 = (nyquist / cutoff) ** 2
    rm2 = (fm / cutoff) ** 2
    if kind == "low":
        g0, gn2, hm2 = 1.0, 1.0 / (1.0 + rn2), 1.0 / (1.0 + rm2)
    elif kind == "high":
        g0, gn2, hm2 = 0.0, rn2 / (1.0 + rn2), rm2 / (1.0 + rm2)
    else:
        raise ValueError(f"unknown filter kind {kind!r}")
    u = math.sqrt((g0 * g0 - hm2) / (hm2 - gn2)) / math.tan(math.pi * fm * dt)
    a1 = (1.0 - u) / (1.0 + u)
    s = g0 * (1.0 + a1)
    d = math.sqrt(gn2) * (1.0 - a1)
    return 0.5 * (s + d), 0.5 * (s - d), -a1


class FirstOrderFilter:
    """First-order low/high-pass filter stepped at a (possibly varying) sample interval.

    Works element-wise on scalars or numpy arrays; a 6-vector state is a
    bank of six independent channels.
    """

    def __init__(self, kind: str, cutoff: float):
        if kind not in ("low", "high"):
            raise ValueError(f"kind must be 'low' or 'high', got {kind!r}")
        if not cutoff > 0:
            raise ValueError("cutoff must be > 0")
        self.kind = kind
        self.cutoff = float(cutoff)
        self.prev_input = 0.0
        self.prev_output = 0.0
        self._coef_dt = None
        self._coef = None

    def reset(self):
        self.prev_input = 0.0
        self.prev_output = 0.0

    def prime(self, value):
        """Set the memory to the steady state for a constant input ``value``."""
        self.prev_input = value
        self.prev_output = value if self.kind == "low" else value * 0.0

    def coefficients(self, dt: float) -> tuple[float, float, float]:
        if dt != self._coef_dt:
            self._coef = first_order_coefficients(self.kind, self.cutoff, dt)
            self._coef_dt = dt
        return self._coef

    def step(self, value, dt: float):
        if not dt > 0:
            raise ValueError(f"dt must be > 0, got {dt}")
        b0, b1, p = self.coefficients(dt)
        out = b0 * value + b1 * self.prev_input + p * self.prev_output
        self.prev_input = value
        self.prev_output = out
        return out

    def magnitude(self, freq_hz, dt: float):
        """Digital magnitude response at ``freq_hz`` for sample interval ``dt``."""
        b0, b1, p = self.coefficients(dt)
        z = np.exp(-2j * np.pi * np.asarray(freq_hz, float) * dt)
        return np.abs((b0 + b1 * z) / (1.0 - p * z))


def analog_magnitude(kind: str, cutoff: float, freq_hz):
    r = np.asarray(freq_hz, float) / cutoff
    if kind == "low":
        return 1.0 / np.sqrt(1.0 + r * r)
    return r / np.sqrt(1.0 + r * r)


def filter_step(f: FirstOrderFilter, value, dt: float):
    return f.step(value, dt)


def modulate(theta_hat, t: float, config: EscConfig) -> np.ndarray:
    """theta = theta_hat + b * sin(w t), element-wise."""
    return np.asarray(theta_hat, float) + config.b * np.sin(config.w * t)


def demodulate(filtered: float, t: float, config: EscConfig) -> np.ndarray:
    return filtered * np.sin(config.w * t)


class ExtremumSeekingController(BaseEstimator):
    """Sinusoidal-dither extremum seeking over the 6-DoF key-tip pose.

    Parameters
    ----------
    config : EscConfig, optional
        Amplitudes, frequencies, gains and cutoffs. Defaults to the
        published constants.
    lower, upper : array-like of 6, optional
        Box bounds clamping the parameter estimate. Unbounded by default.
    trace_hook : callable, optional
        Called after every step with a dict ``t, theta, theta_hat, loss,
        hpf, demod, lpf``.

    Attributes
    ----------
    theta_hat_ : ndarray of shape (6,)
    t_ : float
    hpf_ : FirstOrderFilter
        Scalar high-pass on the sampled loss.
    lpf_ : FirstOrderFilter
        Six-channel low-pass after demodulation.
    """

    def __init__(self, config: EscConfig | None = None, lower=None, upper=None, trace_hook=None):
        self.config = config
        self.lower = lower
        self.upper = upper
        self.trace_hook = trace_hook
        self.reset(Pose6())

    @property
    def config_(self) -> EscConfig:
        return self.config if self.config is not None else _DEFAULT_CONFIG

    def reset(self, theta0=None) -> "ExtremumSeekingController":
        cfg = self.config_
        if theta0 is None:
            theta0 = Pose6()
        theta0 = theta0.to_array() if isinstance(theta0, Pose6) else _vec6(theta0, "theta0")
        self.theta_hat_ = theta0.astype(float).copy()
        self.t_ = 0.0
        self.hpf_ = FirstOrderFilter("high", cfg.hpf_cutoff)
        self.lpf_ = FirstOrderFilter("low", cfg.lpf_cutoff)
        self.lpf_.prime(np.zeros(6))
        self._primed = False
        self._lo = None if self.lower is None else _vec6(self.lower, "lower")
        self._hi = None if self.upper is None else _vec6(self.upper, "upper")
        return self

    @property
    def theta_hat(self) -> Pose6:
        return Pose6.from_array(self.theta_hat_)

    def modulate(self) -> np.ndarray:
        cfg = self.config_
        return self.theta_hat_ + cfg.b * np.sin(cfg.w * self.t_)

    def step(self, loss_sample: float, dt: float) -> np.ndarray:
        """Feed the loss measured at the currently applied parameters.

        The carrier is evaluated at the time the sample was taken (before
        the clock advances). Returns the parameters to apply next.
        """
        loss_sample = float(loss_sample)
        if not math.isfinite(loss_sample):
            raise ValueError(f"loss sample must be finite, got {loss_sample}")
        if not dt > 0:
            raise ValueError(f"dt must be > 0, got {dt}")
        cfg = self.config_
        if not self._primed:
            self.hpf_.prime(loss_sample)
            self._primed = True
        hp = self.hpf_.step(loss_sample, dt)
        demod = hp * np.sin(cfg.w * self.t_)
        lp = self.lpf_.step(demod, dt)
        theta_hat = self.theta_hat_ - cfg.k * lp * dt
        if self._lo is not None or self._hi is not None:
            theta_hat = np.clip(theta_hat, self._lo, self._hi)
        self.theta_hat_ = theta_hat
        self.t_ += dt
        theta = self.modulate()
        if self.trace_hook is not None:
            self.trace_hook(dict(t=self.t_, theta=theta, theta_hat=theta_hat.copy(),
                                 loss=loss_sample, hpf=hp, demod=demod, lpf=lp))
        return theta

    def run(self, loss_fn, theta0, duration: float, dt: float) -> np.ndarray:
        """Close the loop on ``loss_fn(theta)``; returns the theta_hat trajectory."""
        self.reset(theta0)
        n = int(round(duration / dt))
        out = np.empty((n + 1, 6))
        out[0] = self.theta_hat_
        theta = self.modulate()
        for i in range(n):
            theta = self.step(loss_fn(theta), dt)
            out[i + 1] = self.theta_hat_
        return out


_DEFAULT_CONFIG = EscConfig.from_user_units()


def esc_step(controller: ExtremumSeekingController, loss_sample: float, dt: float) -> np.ndarray:
    return controller.step(loss_sample, dt)
