"""Stochastic benchmark problems sharing one evaluation contract.

Every problem exposes fitness as a *negated* loss (maximization convention),
per-datum analytic gradients, mini-batch sampling from an explicit RNG, and
a held-out validation score used to select the returned iterate.
"""

from __future__ import annotations

import abc
import json
from typing import Optional, Tuple

import numpy as np

from .core import RngStream, ROLE_INIT, ROLE_PROBLEM, ROLE_VALIDATION

__all__ = [
    "StochasticProblem",
    "PhaseRetrievalProblem",
    "TwoLayerProblem",
    "Landscape1DProblem",
    "pr_generate",
    "pr_metric",
    "tl_generate",
    "landscape1d_f",
    "landscape1d_f_grad",
]


class StochasticProblem(abc.ABC):
    """Contract every benchmark problem implements.

    ``fitness_and_grad`` returns per-datum values and gradients in one call
    so the exponential-weighting estimator can reweight datum-level terms.
    """

    dim: int

    @abc.abstractmethod
    def sample_data(self, rng: np.random.Generator, count: int):
        """Draw a mini-batch object consumable by the evaluation methods."""

    @abc.abstractmethod
    def fitness_and_grad(self, w: np.ndarray, batch) -> Tuple[np.ndarray, np.ndarray]:
        """Per-datum fitness values (m,) and gradients (m, dim) at w."""

    def fitness(self, w: np.ndarray, batch) -> float:
        vals, _ = self.fitness_and_grad(w, batch)
        return float(np.mean(vals))

    def fitness_grad_mean(self, w: np.ndarray, batch) -> np.ndarray:
        _, grads = self.fitness_and_grad(w, batch)
        return grads.mean(axis=0)

    @abc.abstractmethod
    def validation_score(self, w: np.ndarray) -> float:
        """Mean fitness on the frozen held-out validation batch."""

    @property
    def bounds_hint(self) -> Optional[Tuple[float, float]]:
        """(upper bound on fitness, Lipschitz constant) when known, else None."""
        return None


# ---------------------------------------------------------------------------
# Phase retrieval
# ---------------------------------------------------------------------------

class PhaseRetrievalProblem(StochasticProblem):
    """Recover x0 from quadratic measurements (<a_n, x>^2 - y_n^2)^2.

    The sign of x0 is unidentifiable, so both the loss and the quality
    metric are invariant under x -> -x.
    """

    def __init__(self, x0: np.ndarray, sensing: np.ndarray, y: np.ndarray,
                 sensing_val: np.ndarray, y_val: np.ndarray,
                 batch_size: int = 32, seed_meta: Optional[dict] = None):
        x0 = np.asarray(x0, dtype=float)
        sensing = np.asarray(sensing, dtype=float)
        y = np.asarray(y, dtype=float)
        if sensing.shape != (y.shape[0], x0.shape[0]):
            raise ValueError("sensing matrix shape inconsistent with x0/y")
        self.x0 = x0
        self.sensing = sensing
        self.y = y
        self.sensing_val = np.asarray(sensing_val, dtype=float)
        self.y_val = np.asarray(y_val, dtype=float)
        self.batch_size = int(batch_size)
        self.seed_meta = seed_meta or {}
        self.dim = x0.shape[0]
        self.n_samples = y.shape[0]
        self._y2 = y ** 2
        self._y2_val = self.y_val ** 2

    # -- loss surface ------------------------------------------------------

    def loss(self, x: np.ndarray, batch_idx: np.ndarray) -> float:
        """Mean quartic residual over the indexed measurements."""
        idx = np.asarray(batch_idx)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_samples):
            raise IndexError("measurement index out of range")
        z = self.sensing[idx] @ x
        return float(np.mean((z ** 2 - self._y2[idx]) ** 2))

    def loss_grad(self, x: np.ndarray, n: int) -> np.ndarray:
        """Gradient of the single-measurement loss: 4(z^2 - y^2) z a."""
        a = self.sensing[n]
        z = float(a @ x)
        return 4.0 * (z * z - self._y2[n]) * z * a

    # -- stochastic-problem contract --------------------------------------

    def sample_data(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.integers(0, self.n_samples, size=count)

    def fitness_and_grad(self, w, batch):
        idx = np.asarray(batch)
        A = self.sensing[idx]
        z = A @ w
        r = z * z - self._y2[idx]
        vals = -(r ** 2)
        grads = (-4.0 * r * z)[:, None] * A
        return vals, grads

    def fitness_and_grad_many(self, W, batch):
        """Vectorized fitness_and_grad over a stack of candidates (K, dim)."""
        idx = np.asarray(batch)
        A = self.sensing[idx]
        Z = W @ A.T                         # (K, m)
        r = Z * Z - self._y2[idx]
        vals = -(r ** 2)
        grads = (-4.0 * r * Z)[:, :, None] * A[None, :, :]
        return vals, grads

    def fitness(self, w, batch) -> float:
        return -self.loss(w, batch)

    def validation_score(self, w) -> float:
        z = self.sensing_val @ w
        return -float(np.mean((z * z - self._y2_val) ** 2))

    def metric(self, x: np.ndarray) -> float:
        return pr_metric(x, self.x0)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "kind": "phase_retrieval",
            "x0": self.x0.tolist(),
            "sensing": self.sensing.tolist(),
            "y": self.y.tolist(),
            "sensing_val": self.sensing_val.tolist(),
            "y_val": self.y_val.tolist(),
            "batch_size": self.batch_size,
            "seed_meta": self.seed_meta,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "PhaseRetrievalProblem":
        doc = json.loads(text)
        if doc.get("kind") != "phase_retrieval":
            raise ValueError(f"not a phase_retrieval document: {doc.get('kind')!r}")
        return cls(
            x0=np.array(doc["x0"]), sensing=np.array(doc["sensing"]),
            y=np.array(doc["y"]), sensing_val=np.array(doc["sensing_val"]),
            y_val=np.array(doc["y_val"]), batch_size=doc["batch_size"],
            seed_meta=doc.get("seed_meta"),
        )


def pr_metric(x: np.ndarray, x0: np.ndarray) -> float:
    """Sign-invariant relative recovery error min(|x-x0|, |x+x0|) / |x0|."""
    nx0 = np.linalg.norm(x0)
    if nx0 == 0:
        raise ValueError("reference solution must be nonzero")
    return float(min(np.linalg.norm(x - x0), np.linalg.norm(x + x0)) / nx0)


def pr_generate(d: int, n_samples: int, stream: RngStream,
                n_validation: int = 128, batch_size: int = 32,
                ) -> Tuple[PhaseRetrievalProblem, np.ndarray]:
    """Fresh instance plus shared initial point.

    x0 ~ N(0, 0.1 I), initial candidate ~ N(0, I/sqrt(d)), sensing rows
    ~ N(0, I); exact y at construction.  Deterministic in (seed, stream).
    """
    if d < 1 or n_samples < 1:
        raise ValueError("d and n_samples must be >= 1")
    gen = stream.substream(ROLE_PROBLEM).generator()
    x0 = gen.normal(0.0, np.sqrt(0.1), size=d)
    sensing = gen.normal(0.0, 1.0, size=(n_samples, d))
    y = sensing @ x0
    vgen = stream.substream(ROLE_VALIDATION).generator()
    sensing_val = vgen.normal(0.0, 1.0, size=(n_validation, d))
    y_val = sensing_val @ x0
    igen = stream.substream(ROLE_INIT).generator()
    x_init = igen.normal(0.0, d ** -0.25, size=d)
    meta = {"seed": stream.seed, "stream_id": stream.stream_id,
            "d": d, "n_samples": n_samples}
    problem = PhaseRetrievalProblem(x0, sensing, y, sensing_val, y_val,
                                    batch_size=batch_size, seed_meta=meta)
    return problem, x_init


# ---------------------------------------------------------------------------
# Two-layer ReLU teacher-student
# ---------------------------------------------------------------------------

class TwoLayerProblem(StochasticProblem):
    """Width-n student fitting a width-k orthonormal ReLU teacher.

    Student weights are handled as a flat vector of length n*k; rows of the
    reshaped (n, k) matrix are the student neurons.
    """

    def __init__(self, teacher: np.ndarray, width: int,
                 test_set: np.ndarray, validation_set: np.ndarray,
                 batch_size: int = 30, seed_meta: Optional[dict] = None):
        teacher = np.asarray(teacher, dtype=float)
        if teacher.shape[0] != teacher.shape[1]:
            raise ValueError("teacher must be k x k (k orthonormal vectors in R^k)")
        self.teacher = teacher
        self.k = teacher.shape[0]
        self.width = int(width)
        self.test_set = np.asarray(test_set, dtype=float)
        self.validation_set = np.asarray(validation_set, dtype=float)
        self.batch_size = int(batch_size)
        self.seed_meta = seed_meta or {}
        self.dim = self.width * self.k
        # teacher outputs are fixed; precompute on the frozen evaluation sets
        self._teacher_test = self._teacher_sum(self.test_set)
        self._teacher_val = self._teacher_sum(self.validation_set)

    def _teacher_sum(self, X: np.ndarray) -> np.ndarray:
        return np.maximum(X @ self.teacher.T, 0.0).sum(axis=1)

    def _residual(self, W: np.ndarray, X: np.ndarray,
                  teacher_sum: Optional[np.ndarray] = None):
        Z = X @ W.T
        student = np.maximum(Z, 0.0).sum(axis=1)
        if teacher_sum is None:
            teacher_sum = self._teacher_sum(X)
        return Z, student - teacher_sum

    # -- loss surface ------------------------------------------------------

    def loss(self, W_flat: np.ndarray, X: np.ndarray) -> float:
        """Mean squared ReLU-sum mismatch over the batch."""
        X = np.atleast_2d(X)
        if X.size == 0:
            raise ValueError("batch must be nonempty")
        if X.shape[1] != self.k:
            raise ValueError(f"batch dimension {X.shape[1]} != k={self.k}")
        W = np.asarray(W_flat, dtype=float).reshape(self.width, self.k)
        _, r = self._residual(W, X)
        return float(np.mean(0.5 * r ** 2))

    def loss_grad(self, W_flat: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Per-datum gradient: row j is r(x) * 1[w_j'x > 0] * x (flat)."""
        W = np.asarray(W_flat, dtype=float).reshape(self.width, self.k)
        z = W @ x
        r = float(np.maximum(z, 0.0).sum() - np.maximum(self.teacher @ x, 0.0).sum())
        return (r * (z > 0.0).astype(float)[:, None] * x[None, :]).ravel()

    def test_error(self, W_flat: np.ndarray) -> float:
        """Population-loss estimate on the frozen test set."""
        W = np.asarray(W_flat, dtype=float).reshape(self.width, self.k)
        _, r = self._residual(W, self.test_set, self._teacher_test)
        return float(np.mean(0.5 * r ** 2))

    # -- stochastic-problem contract --------------------------------------

    def sample_data(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.normal(0.0, 1.0, size=(count, self.k))

    def fitness_and_grad(self, w, batch):
        X = np.atleast_2d(batch)
        W = np.asarray(w, dtype=float).reshape(self.width, self.k)
        Z, r = self._residual(W, X)
        vals = -0.5 * r ** 2
        active = (Z > 0.0).astype(float) * (-r)[:, None]       # (m, n)
        grads = (active[:, :, None] * X[:, None, :]).reshape(X.shape[0], self.dim)
        return vals, grads

    def fitness_and_grad_many(self, W_stack, batch):
        """Vectorized fitness_and_grad over a stack of candidates (K, dim)."""
        X = np.atleast_2d(batch)
        Ws = np.asarray(W_stack, dtype=float).reshape(-1, self.width, self.k)
        Z = np.einsum("mj,kwj->kmw", X, Ws)
        student = np.maximum(Z, 0.0).sum(axis=2)
        r = student - self._teacher_sum(X)[None, :]          # (K, m)
        vals = -0.5 * r ** 2
        active = (Z > 0.0) * (-r)[:, :, None]                # (K, m, w)
        grads = np.einsum("kmw,mj->kmwj", active, X)
        return vals, grads.reshape(Ws.shape[0], X.shape[0], self.dim)

    def fitness(self, w, batch) -> float:
        return -self.loss(w, batch)

    def validation_score(self, w) -> float:
        W = np.asarray(w, dtype=float).reshape(self.width, self.k)
        _, r = self._residual(W, self.validation_set, self._teacher_val)
        return -float(np.mean(0.5 * r ** 2))

    def metric(self, w: np.ndarray) -> float:
        return self.test_error(w)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "kind": "two_layer",
            "teacher": self.teacher.tolist(),
            "width": self.width,
            "test_set": self.test_set.tolist(),
            "validation_set": self.validation_set.tolist(),
            "batch_size": self.batch_size,
            "seed_meta": self.seed_meta,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "TwoLayerProblem":
        doc = json.loads(text)
        if doc.get("kind") != "two_layer":
            raise ValueError(f"not a two_layer document: {doc.get('kind')!r}")
        return cls(
            teacher=np.array(doc["teacher"]), width=doc["width"],
            test_set=np.array(doc["test_set"]),
            validation_set=np.array(doc["validation_set"]),
            batch_size=doc["batch_size"], seed_meta=doc.get("seed_meta"),
        )


def tl_generate(k: int, n: int, stream: RngStream,
                n_test: int = 5000, n_validation: int = 512,
                batch_size: int = 30) -> Tuple[TwoLayerProblem, np.ndarray]:
    """Fresh teacher-student instance plus shared student initialization.

    Teacher = Q factor of a k x k standard-normal matrix (orthonormal rows);
    student rows ~ N(0, I/k), one shared draw per trial.
    """
    if k < 1 or n < 1:
        raise ValueError("k and n must be >= 1")
    gen = stream.substream(ROLE_PROBLEM).generator()
    q, _ = np.linalg.qr(gen.normal(size=(k, k)))
    teacher = q.T  # rows are the k orthonormal teacher vectors
    test_set = gen.normal(size=(n_test, k))
    vgen = stream.substream(ROLE_VALIDATION).generator()
    validation_set = vgen.normal(size=(n_validation, k))
    igen = stream.substream(ROLE_INIT).generator()
    w_init = igen.normal(0.0, 1.0 / np.sqrt(k), size=n * k)
    meta = {"seed": stream.seed, "stream_id": stream.stream_id, "k": k, "n": n}
    problem = TwoLayerProblem(teacher, n, test_set, validation_set,
                              batch_size=batch_size, seed_meta=meta)
    return problem, w_init


# ---------------------------------------------------------------------------
# 1-D illustrative landscape
# ---------------------------------------------------------------------------

_PEAK_A = -0.5   # dominant, narrow peak
_PEAK_B = 0.5    # shallow, wide peak


def landscape1d_f(mu):
    """Two-peak log landscape on [-1, 1], zero outside.

    The peak near -0.5 is far taller but much narrower than the one near
    +0.5, which is what makes the surface a useful homotopy stress test.
    """
    mu = np.asarray(mu, dtype=float)
    inside = np.abs(mu) <= 1.0
    val = (-np.log((mu - _PEAK_A) ** 2 + 1e-5)
           - np.log((mu - _PEAK_B) ** 2 + 1e-2) + 10.0)
    out = np.where(inside, val, 0.0)
    return float(out) if out.ndim == 0 else out


def landscape1d_f_grad(mu):
    """Derivative of the landscape; zero outside [-1, 1]."""
    mu = np.asarray(mu, dtype=float)
    inside = np.abs(mu) <= 1.0
    g = (-2.0 * (mu - _PEAK_A) / ((mu - _PEAK_A) ** 2 + 1e-5)
         - 2.0 * (mu - _PEAK_B) / ((mu - _PEAK_B) ** 2 + 1e-2))
    out = np.where(inside, g, 0.0)
    return float(out) if out.ndim == 0 else out


class Landscape1DProblem(StochasticProblem):
    """The two-peak landscape as a stochastic problem with uniform jitter.

    Data are jitter offsets eps ~ U[-noise, noise]; the fitness of w on a
    datum is (f(w + eps) - fitness_offset) / fitness_offset.  The affine
    rescaling maps the raw landscape (max about 21.5) into [-1, 0], which
    keeps the optimizer's exponential weighting in its safe f <= 0 regime
    *and* at an O(1) dynamic range — with the raw scale, exp(N f) spans
    hundreds of orders of magnitude and the gradient signal underflows away
    from the peaks.  An affine map leaves every maximizer unchanged.
    """

    dim = 1

    def __init__(self, noise: float = 0.1, fitness_offset: float = 21.6,
                 n_validation: int = 64, validation_seed: int = 0):
        if fitness_offset <= 0:
            raise ValueError("fitness_offset must be > 0")
        self.noise = float(noise)
        self.fitness_offset = float(fitness_offset)
        vgen = RngStream(validation_seed).substream(ROLE_VALIDATION).generator()
        self.validation_eps = vgen.uniform(-self.noise, self.noise, size=n_validation)

    def sample_data(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(-self.noise, self.noise, size=count)

    def fitness_and_grad(self, w, batch):
        eps = np.asarray(batch, dtype=float)
        pts = float(np.asarray(w).ravel()[0]) + eps
        vals = (landscape1d_f(pts) - self.fitness_offset) / self.fitness_offset
        grads = landscape1d_f_grad(pts)[:, None] / self.fitness_offset
        return vals, grads

    def fitness_and_grad_many(self, W, batch):
        """Vectorized fitness_and_grad over a stack of candidates (K, 1)."""
        eps = np.asarray(batch, dtype=float)
        pts = np.asarray(W, dtype=float).reshape(-1, 1) + eps[None, :]
        vals = (landscape1d_f(pts) - self.fitness_offset) / self.fitness_offset
        grads = landscape1d_f_grad(pts)[:, :, None] / self.fitness_offset
        return vals, grads

    def validation_score(self, w) -> float:
        pts = float(np.asarray(w).ravel()[0]) + self.validation_eps
        return (float(np.mean(landscape1d_f(pts)))
                - self.fitness_offset) / self.fitness_offset

    def metric(self, w) -> float:
        """Distance of the iterate to the dominant peak."""
        return abs(float(np.asarray(w).ravel()[0]) - _PEAK_A)
