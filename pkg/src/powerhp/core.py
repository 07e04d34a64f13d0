"""Homotopy schedules, RNG streams, and the surrogate parameterization.

Everything here is immutable and pure: schedules are closed-form functions
of the step index, so trajectories can be resumed or audited without
replaying accumulator state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SurrogateParams",
    "ScheduleConfig",
    "RngStream",
    "power_at",
    "smoothing_at",
    "learning_rate_at",
]


@dataclass(frozen=True)
class SurrogateParams:
    """The (power, smoothing) pair defining the surrogate at one step.

    ``power`` is the exponent scale applied to the fitness before averaging;
    ``smoothing`` is the std-dev of the Gaussian parameter perturbation.
    """

    power: float
    smoothing: float

    def __post_init__(self):
        if not self.power > 0:
            raise ValueError(f"power must be > 0, got {self.power}")
        if not self.smoothing > 0:
            raise ValueError(f"smoothing must be > 0, got {self.smoothing}")


@dataclass(frozen=True)
class ScheduleConfig:
    """Parameters of the coupled power-increase / smoothing-decay schedules.

    The power ramp uses a geometric increment split: with ratio ``phi_ratio``
    = q, step t receives the fraction phi_t = (1-q) q^(t-1) of the total
    increment ``delta``, so the cumulative power has the closed form
    n0 + delta * (1 - q^t) and tends to n0 + delta.

    The smoothing radius decays as b + sigma0 * beta^t toward the floor b,
    and the step size is alpha_scale * t^-(1/2 + gamma).
    """

    n0: float = 1.0
    delta: float = 4.0
    sigma0: float = 1.0
    b: float = 0.1
    beta: float = 0.999
    gamma: float = 0.05
    phi_ratio: float = 0.99
    alpha_scale: float = 1.0

    def __post_init__(self):
        if not self.n0 > 0:
            raise ValueError(f"n0 must be > 0, got {self.n0}")
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if not self.sigma0 >= 0:
            raise ValueError(f"sigma0 must be >= 0, got {self.sigma0}")
        if not self.b > 0:
            raise ValueError(f"b must be > 0, got {self.b}")
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must be in (0,1), got {self.beta}")
        if not 0 < self.gamma < 0.5:
            raise ValueError(f"gamma must be in (0,1/2), got {self.gamma}")
        if not 0 < self.phi_ratio < 1:
            raise ValueError(f"phi_ratio must be in (0,1), got {self.phi_ratio}")
        if not self.alpha_scale > 0:
            raise ValueError(f"alpha_scale must be > 0, got {self.alpha_scale}")

    def params_at(self, t: int) -> SurrogateParams:
        return SurrogateParams(power=power_at(self, t), smoothing=smoothing_at(self, t))

    @staticmethod
    def phi_ratio_for_horizon(T: int, applied_fraction: float = 0.99) -> float:
        """Ratio q such that ``applied_fraction`` of delta is applied by t = T/2."""
        if T < 2:
            raise ValueError("horizon must be >= 2")
        return float((1.0 - applied_fraction) ** (2.0 / T))


def power_at(cfg: ScheduleConfig, t: int) -> float:
    """Power exponent at step t >= 1: n0 + delta * (1 - q^t)."""
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    return cfg.n0 + cfg.delta * (1.0 - cfg.phi_ratio ** t)


def smoothing_at(cfg: ScheduleConfig, t: int) -> float:
    """Smoothing radius at step t >= 1: b + sigma0 * beta^t."""
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    return cfg.b + cfg.sigma0 * cfg.beta ** t


def learning_rate_at(cfg: ScheduleConfig, t: int) -> float:
    """Step size at step t >= 1: alpha_scale * t^-(1/2 + gamma)."""
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    return cfg.alpha_scale * float(t) ** -(0.5 + cfg.gamma)


# Fixed role offsets for per-trial sub-streams.  Keeping these disjoint
# guarantees that adding a consumer never perturbs another consumer's draws.
ROLE_INIT = 0
ROLE_DATA = 1
ROLE_NOISE = 2
ROLE_PROBLEM = 3
ROLE_VALIDATION = 4

_ROLE_SPACE = 16  # max sub-streams per parent


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream.

    Backed by the counter-based Philox generator keyed on (seed, stream_id),
    so identical (seed, stream_id) pairs reproduce identical sequences across
    runs and platforms, and distinct stream_ids are statistically independent.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = (np.uint64(self.seed), np.uint64(self.stream_id))
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, role: int) -> "RngStream":
        """Derived stream for one role within this stream's scope."""
        if not 0 <= role < _ROLE_SPACE:
            raise ValueError(f"role must be in [0,{_ROLE_SPACE}), got {role}")
        child = (int(self.stream_id) * _ROLE_SPACE + role + 1) % (1 << 64)
        return RngStream(seed=self.seed, stream_id=child)
