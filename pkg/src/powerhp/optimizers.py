"""The power-homotopy ascent method, six baselines, and the shared run loop.

All optimizers mutate a single iterate vector through ``step`` and are
driven by :func:`run`, which owns mini-batch sampling, validation scoring,
and best-iterate tracking.  Within a trial every method sees the same
initial point and the same data sub-stream, so comparisons are paired.
"""

from __future__ import annotations

import abc
import csv
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .core import (ROLE_DATA, ROLE_NOISE, RngStream, ScheduleConfig,
                   SurrogateParams, learning_rate_at, power_at, smoothing_at)
from .problems import StochasticProblem

__all__ = [
    "TrialAbort",
    "StepRecord",
    "PowerHPConfig",
    "powerhp_grad_estimate",
    "PowerHP",
    "SGD",
    "Momentum",
    "Adam",
    "AdamW",
    "SAM",
    "SLGHr",
    "SLGHd",
    "RunResult",
    "run",
    "make_optimizer",
    "export_trajectory",
]

# exp() underflows harmlessly below this; clamping avoids -inf * 0 traps
_EXP_FLOOR = -700.0


class TrialAbort(RuntimeError):
    """Raised when an iterate or gradient goes non-finite mid-trial."""

    def __init__(self, message: str, t: int):
        super().__init__(f"{message} (step {t})")
        self.t = t


@dataclass
class StepRecord:
    t: int
    n_t: float
    sigma_t: float
    alpha_t: float
    grad_norm: float
    validation: Optional[float] = None


@dataclass(frozen=True)
class PowerHPConfig:
    """Population/batch sizes and safety bounds for the homotopy method."""

    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    k_pop: int = 4
    j_batch: Optional[int] = None   # None: use the problem's batch size
    exponent_guard: float = 50.0    # positive exponent beyond this aborts

    def __post_init__(self):
        if self.k_pop < 1:
            raise ValueError("k_pop must be >= 1")
        if self.j_batch is not None and self.j_batch < 1:
            raise ValueError("j_batch must be >= 1")


def powerhp_grad_estimate(problem: StochasticProblem, mu: np.ndarray,
                          params: SurrogateParams, k_pop: int, j_batch: int,
                          rng: np.random.Generator,
                          batch=None, exponent_guard: float = 50.0,
                          ) -> np.ndarray:
    """Unbiased sample estimate of the smoothed power-surrogate gradient.

    Averages N * exp(N * fitness) * grad(fitness) over ``k_pop`` Gaussian
    parameter perturbations of scale ``params.smoothing`` and a data batch
    of size ``j_batch`` (or the supplied ``batch``).
    """
    mu = np.asarray(mu, dtype=float)
    if batch is None:
        batch = problem.sample_data(rng, j_batch)
    N = params.power
    eps = rng.normal(size=(k_pop,) + mu.shape)
    many = getattr(problem, "fitness_and_grad_many", None)
    if many is not None:
        vals, grads = many(mu + params.smoothing * eps, batch)  # (K,m),(K,m,d)
    else:
        vals_list, grads_list = [], []
        for k in range(k_pop):
            v, g = problem.fitness_and_grad(mu + params.smoothing * eps[k],
                                            batch)
            vals_list.append(v)
            grads_list.append(g)
        vals, grads = np.stack(vals_list), np.stack(grads_list)
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(grads))):
        raise FloatingPointError("non-finite fitness or gradient in estimator")
    expo = N * vals
    worst = float(expo.max()) if expo.size else 0.0
    if worst > exponent_guard:
        raise FloatingPointError(
            f"exponent {worst:.3g} exceeds guard {exponent_guard:.3g}; "
            "fitness is expected to be <= 0")
    weights = N * np.exp(np.maximum(expo, _EXP_FLOOR))
    total = np.einsum("km,km...->...", weights, grads)
    return total / (k_pop * j_batch)


class Optimizer(abc.ABC):
    """Single-trial stateful optimizer over a flat parameter vector."""

    name: str = "base"
    uses_noise = False

    def __init__(self):
        self.mu: Optional[np.ndarray] = None
        self.t = 0

    def reset(self, mu0: np.ndarray) -> None:
        self.mu = np.array(mu0, dtype=float)
        self.t = 0

    def batch_size(self, problem: StochasticProblem) -> int:
        return getattr(problem, "batch_size", 32)

    @abc.abstractmethod
    def step(self, problem: StochasticProblem, batch,
             noise_rng: np.random.Generator) -> StepRecord:
        """Advance one iteration on the given mini-batch."""

    def _check_finite(self):
        if not np.all(np.isfinite(self.mu)):
            raise TrialAbort(f"{self.name}: non-finite iterate", self.t)

    def _loss_grad(self, problem, batch, at=None) -> np.ndarray:
        point = self.mu if at is None else at
        return -problem.fitness_grad_mean(point, batch)


class PowerHP(Optimizer):
    """Stochastic ascent on the power-transformed, smoothed surrogate."""

    name = "powerhp"
    uses_noise = True

    def __init__(self, config: Optional[PowerHPConfig] = None):
        super().__init__()
        self.config = config or PowerHPConfig()

    def batch_size(self, problem):
        if self.config.j_batch is not None:
            return self.config.j_batch
        return super().batch_size(problem)

    def step(self, problem, batch, noise_rng) -> StepRecord:
        self.t += 1
        cfg = self.config
        n_t = power_at(cfg.schedule, self.t)
        sigma_t = smoothing_at(cfg.schedule, self.t)
        alpha_t = learning_rate_at(cfg.schedule, self.t)
        j = np.asarray(batch).shape[0]
        try:
            est = powerhp_grad_estimate(
                problem, self.mu, SurrogateParams(n_t, sigma_t),
                cfg.k_pop, j, noise_rng, batch=batch,
                exponent_guard=cfg.exponent_guard)
        except FloatingPointError as exc:
            raise TrialAbort(f"{self.name}: {exc}", self.t) from exc
        self.mu += alpha_t * est
        self._check_finite()
        return StepRecord(self.t, n_t, sigma_t, alpha_t,
                          float(np.linalg.norm(est)))


class SGD(Optimizer):
    name = "sgd"

    def __init__(self, lr: float = 1e-3):
        super().__init__()
        if lr <= 0:
            raise ValueError("lr must be > 0")
        self.lr = lr

    def step(self, problem, batch, noise_rng) -> StepRecord:
        self.t += 1
        g = self._loss_grad(problem, batch)
        self.mu -= self.lr * g
        self._check_finite()
        return StepRecord(self.t, np.nan, np.nan, self.lr, float(np.linalg.norm(g)))


class Momentum(Optimizer):
    name = "momentum"

    def __init__(self, lr: float = 1e-3, momentum: float = 0.9):
        super().__init__()
        if lr <= 0 or not 0 <= momentum < 1:
            raise ValueError("need lr > 0 and momentum in [0,1)")
        self.lr = lr
        self.momentum = momentum
        self.v = None

    def reset(self, mu0):
        super().reset(mu0)
        self.v = np.zeros_like(self.mu)

    def step(self, problem, batch, noise_rng) -> StepRecord:
        self.t += 1
        g = self._loss_grad(problem, batch)
        self.v = self.momentum * self.v + g
        self.mu -= self.lr * self.v
        self._check_finite()
        return StepRecord(self.t, np.nan, np.nan, self.lr, float(np.linalg.norm(g)))


class Adam(Optimizer):
    name = "adam"

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        super().__init__()
        if lr <= 0 or not 0 <= beta1 < 1 or not 0 <= beta2 < 1:
            raise ValueError("invalid Adam hyperparameters")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None

    def reset(self, mu0):
        super().reset(mu0)
        self.m = np.zeros_like(self.mu)
        self.v = np.zeros_like(self.mu)

    def _update(self, g: np.ndarray) -> np.ndarray:
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def step(self, problem, batch, noise_rng) -> StepRecord:
        self.t += 1
        g = self._loss_grad(problem, batch)
        self.mu -= self._update(g)
        self._check_finite()
        return StepRecord(self.t, np.nan, np.nan, self.lr, float(np.linalg.norm(g)))


class AdamW(Adam):
    name = "adamw"

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 1e-2):
        super().__init__(lr, beta1, beta2, eps)
        if weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        self.weight_decay = weight_decay

    def step(self, problem, batch, noise_rng) -> StepRecord:
        self.t += 1
        g = self._loss_grad(problem, batch)
        # decoupled decay: applied to the parameters, not folded into g
        self.mu -= self.lr * self.weight_decay * self.mu
        self.mu -= self._update(g)
        self._check_finite()
        return StepRecord(self.t, np.nan, np.nan, self.lr, float(np.linalg.norm(g)))


class SAM(Optimizer):
    """Sharpness-aware two-stage step over a plain SGD base update."""

    name = "sam"

    def __init__(self, lr: float = 1e-3, rho: float = 0.05):
        super().__init__()
        if lr <= 0 or rho < 0:
            raise ValueError("need lr > 0 and rho >= 0")
        self.lr = lr
        self.rho = rho

    def step(self, problem, batch, noise_rng) -> StepRecord:
        self.t += 1
        g = self._loss_grad(problem, batch)
        norm = float(np.linalg.norm(g))
        if self.rho > 0 and norm > 0:
            # evaluate the descent gradient at the worst-case nearby point,
            # on the same mini-batch
            g = self._loss_grad(problem, batch, at=self.mu + self.rho * g / norm)
        self.mu -= self.lr * g
        self._check_finite()
        return StepRecord(self.t, np.nan, np.nan, self.lr, float(np.linalg.norm(g)))


class _SLGHBase(Optimizer):
    uses_noise = True

    def __init__(self, lr: float, sigma0: float, k_pop: int):
        super().__init__()
        if lr <= 0 or sigma0 < 0 or k_pop < 1:
            raise ValueError("invalid SLGH hyperparameters")
        self.lr = lr
        self.sigma0 = sigma0
        self.k_pop = k_pop
        self.sigma = sigma0

    def reset(self, mu0):
        super().reset(mu0)
        self.sigma = self.sigma0

    def _smoothed_grads(self, problem, batch, noise_rng):
        """Loss gradients at perturbed points; also the sigma-derivative sum."""
        j = np.asarray(batch).shape[0]
        mu_grad = np.zeros_like(self.mu)
        sigma_grad = 0.0
        for _ in range(self.k_pop):
            if self.sigma > 0:
                eps = noise_rng.normal(size=self.mu.shape)
                w = self.mu + self.sigma * eps
            else:
                eps = np.zeros_like(self.mu)
                w = self.mu
            _, grads = problem.fitness_and_grad(w, batch)
            g_loss = -grads  # (j, d)
            mu_grad += g_loss.sum(axis=0)
            sigma_grad += float((g_loss @ eps).sum())
        scale = self.k_pop * j
        return mu_grad / scale, sigma_grad / scale


class SLGHr(_SLGHBase):
    """Gaussian-smoothed descent with geometric smoothing decay."""

    name = "slghr"

    def __init__(self, lr: float = 1e-3, sigma0: float = 0.5,
                 gamma_decay: float = 0.9999, k_pop: int = 1):
        super().__init__(lr, sigma0, k_pop)
        if not 0 < gamma_decay < 1:
            raise ValueError("gamma_decay must be in (0,1)")
        self.gamma_decay = gamma_decay

    def step(self, problem, batch, noise_rng) -> StepRecord:
        self.t += 1
        g, _ = self._smoothed_grads(problem, batch, noise_rng)
        self.mu -= self.lr * g
        self.sigma *= self.gamma_decay
        self._check_finite()
        return StepRecord(self.t, np.nan, self.sigma, self.lr,
                          float(np.linalg.norm(g)))


class SLGHd(_SLGHBase):
    """Gaussian-smoothed descent with a clipped gradient-driven sigma update."""

    name = "slghd"

    def __init__(self, lr: float = 1e-3, sigma0: float = 0.5,
                 eta: float = 1e-3, gamma_decay: float = 0.9999,
                 eps_floor: float = 1e-3, k_pop: int = 1):
        super().__init__(lr, sigma0, k_pop)
        if eps_floor <= 0 or not 0 < gamma_decay < 1 or eta < 0:
            raise ValueError("invalid SLGHd hyperparameters")
        self.eta = eta
        self.gamma_decay = gamma_decay
        self.eps_floor = eps_floor

    def step(self, problem, batch, noise_rng) -> StepRecord:
        self.t += 1
        g, g_sigma = self._smoothed_grads(problem, batch, noise_rng)
        self.mu -= self.lr * g
        self.sigma = max(min(self.sigma - self.eta * g_sigma,
                             self.gamma_decay * self.sigma), self.eps_floor)
        self._check_finite()
        return StepRecord(self.t, np.nan, self.sigma, self.lr,
                          float(np.linalg.norm(g)))


@dataclass
class RunResult:
    """Trajectory and selected iterates from one (method, trial) run."""

    records: List[StepRecord]
    final_mu: np.ndarray
    best_mu: Optional[np.ndarray]       # argmax of validation score
    best_validation: float
    best_t: int
    best_metric: float                  # min oracle metric over scored iterates
    best_metric_t: int
    aborted: bool = False
    abort_step: Optional[int] = None


def run(optimizer: Optimizer, problem: StochasticProblem, T: int,
        trial_stream: RngStream, validation_every: int = 50,
        metric_fn: Optional[Callable[[np.ndarray], float]] = None,
        mu0: Optional[np.ndarray] = None,
        record_trajectory: bool = True) -> RunResult:
    """Run T steps, scoring validation (and the oracle metric) on a cadence.

    The returned best point maximizes the validation score among scored
    iterates, earliest step winning ties.  ``best_metric`` tracks the
    minimum of ``metric_fn`` over the same scored iterates.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if mu0 is not None:
        optimizer.reset(mu0)
    if optimizer.mu is None:
        raise ValueError("optimizer must be reset with an initial point")
    data_rng = trial_stream.substream(ROLE_DATA).generator()
    noise_rng = trial_stream.substream(ROLE_NOISE).generator()
    j = optimizer.batch_size(problem)
    if metric_fn is None:
        metric_fn = getattr(problem, "metric", None)

    records: List[StepRecord] = []
    best_mu, best_val, best_t = None, -np.inf, -1
    best_metric, best_metric_t = np.inf, -1
    aborted, abort_step = False, None
    try:
        for t in range(1, T + 1):
            batch = problem.sample_data(data_rng, j)
            # overflow on a diverging trajectory is expected and handled by
            # the explicit finiteness checks, so keep it out of the warning log
            with np.errstate(over="ignore", invalid="ignore"):
                rec = optimizer.step(problem, batch, noise_rng)
            if t % validation_every == 0 or t == T:
                score = problem.validation_score(optimizer.mu)
                rec.validation = score
                if score > best_val:
                    best_val, best_t = score, t
                    best_mu = optimizer.mu.copy()
                if metric_fn is not None:
                    m = metric_fn(optimizer.mu)
                    if m < best_metric:
                        best_metric, best_metric_t = m, t
            if record_trajectory:
                records.append(rec)
    except TrialAbort as exc:
        aborted, abort_step = True, exc.t
    return RunResult(records=records, final_mu=optimizer.mu.copy(),
                     best_mu=best_mu, best_validation=best_val, best_t=best_t,
                     best_metric=best_metric, best_metric_t=best_metric_t,
                     aborted=aborted, abort_step=abort_step)


_FACTORY = {
    "powerhp": PowerHP,
    "sgd": SGD,
    "momentum": Momentum,
    "adam": Adam,
    "adamw": AdamW,
    "sam": SAM,
    "slghr": SLGHr,
    "slghd": SLGHd,
}


def make_optimizer(name: str, **hyper) -> Optimizer:
    """Build an optimizer by registry name; powerhp takes schedule kwargs."""
    key = name.lower()
    if key not in _FACTORY:
        raise ValueError(f"unknown optimizer {name!r}; "
                         f"choose from {sorted(_FACTORY)}")
    if key == "powerhp":
        schedule_kwargs = {k: hyper.pop(k) for k in list(hyper)
                           if k in ScheduleConfig.__dataclass_fields__}
        if schedule_kwargs or "schedule" not in hyper:
            hyper["schedule"] = ScheduleConfig(**schedule_kwargs)
        return PowerHP(PowerHPConfig(**hyper))
    return _FACTORY[key](**hyper)


def export_trajectory(records: List[StepRecord], path) -> None:
    """One CSV row per step: t,n_t,sigma_t,alpha_t,grad_norm,validation."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "n_t", "sigma_t", "alpha_t",
                         "grad_norm", "validation"])
        for rec in records:
            writer.writerow([rec.t, rec.n_t, rec.sigma_t, rec.alpha_t,
                             rec.grad_norm,
                             "" if rec.validation is None else rec.validation])
