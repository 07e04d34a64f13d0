"""End-to-end acceptance gate.

Each test exercises one numbered acceptance criterion and records a
PASS/FAIL line that the conftest prints in the terminal summary.  The
benchmark criteria (5-7) run the shipped protocol configs under
``configs/`` at full desk scale, so this module dominates suite runtime.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from conftest import record_criterion
from powerhp.analysis import gauss_hermite_expectation, surrogate_curve_1d, \
    curve_argmax
from powerhp.core import RngStream, SurrogateParams
from powerhp.harness import (AGGREGATE_HEADER, TRIALS_HEADER, load_spec,
                             run_protocol)
from powerhp.optimizers import powerhp_grad_estimate
from powerhp.problems import StochasticProblem, landscape1d_f

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def check(number, description, condition):
    record_criterion(number, description, bool(condition))
    assert condition, f"criterion {number} failed: {description}"


class GaussianQuadratic(StochasticProblem):
    """f(w) = -(w - c)^2/2 with a closed-form smoothed power surrogate."""

    dim = 1
    batch_size = 1

    def __init__(self, c=0.0):
        self.c = float(c)

    def sample_data(self, rng, count):
        return np.zeros(count)

    def fitness_and_grad(self, w, batch):
        m = np.asarray(batch).shape[0]
        w0 = float(np.asarray(w).ravel()[0])
        return (np.full(m, -0.5 * (w0 - self.c) ** 2),
                np.full((m, 1), -(w0 - self.c)))

    def fitness_and_grad_many(self, W, batch):
        m = np.asarray(batch).shape[0]
        w = np.asarray(W, dtype=float).reshape(-1, 1)
        vals = np.repeat(-0.5 * (w - self.c) ** 2, m, axis=1)
        grads = np.repeat(-(w - self.c)[:, None, :], m, axis=1)
        return vals, grads

    def validation_score(self, w):
        w0 = float(np.asarray(w).ravel()[0])
        return -0.5 * (w0 - self.c) ** 2

    def surrogate(self, mu, power, sigma):
        s = 1.0 + power * sigma ** 2
        return s ** -0.5 * np.exp(-power * (mu - self.c) ** 2 / (2.0 * s))

    def surrogate_grad(self, mu, power, sigma):
        s = 1.0 + power * sigma ** 2
        return -power * (mu - self.c) * s ** -1.5 \
            * np.exp(-power * (mu - self.c) ** 2 / (2.0 * s))


class BoundedLipschitz(StochasticProblem):
    """f(w) = cos(w) - 1: certified f <= 0 and |f'| <= 1 everywhere."""

    dim = 1
    batch_size = 1

    def sample_data(self, rng, count):
        return np.zeros(count)

    def fitness_and_grad(self, w, batch):
        m = np.asarray(batch).shape[0]
        w0 = float(np.asarray(w).ravel()[0])
        return np.full(m, np.cos(w0) - 1.0), np.full((m, 1), -np.sin(w0))

    def validation_score(self, w):
        return 0.0


def test_criterion_1_closed_form_quadrature():
    start = time.time()
    rng = np.random.default_rng(1001)
    worst = 0.0
    for _ in range(50):
        power = rng.uniform(0.1, 10.0)
        sigma = rng.uniform(0.05, 2.0)
        mu = rng.uniform(-1.0, 1.0)
        c = rng.uniform(-1.0, 1.0)
        prob = GaussianQuadratic(c)
        got = gauss_hermite_expectation(
            lambda w: np.exp(power * (-0.5 * (w - c) ** 2)),
            np.array([mu]), sigma)[0]
        want = prob.surrogate(mu, power, sigma)
        worst = max(worst, abs(got - want) / abs(want))
    elapsed = time.time() - start
    check(1, f"quadrature matches closed-form surrogate "
             f"(max rel err {worst:.2e}, {elapsed:.2f}s)",
          worst <= 1e-8 and elapsed < 1.0)


def test_criterion_2_estimator_unbiasedness():
    start = time.time()
    configs = [(2.0, 0.5, 0.0, 0.3), (5.0, 0.2, 0.8, 0.0),
               (1.0, 1.0, -0.5, 0.5), (8.0, 0.1, 0.2, 0.2),
               (3.0, 0.7, 1.0, -1.0)]
    n_chunks, chunk = 400, 500      # 2e5 draws per configuration
    ok = True
    worst_z = 0.0
    rng = RngStream(1002, 1).generator()
    for power, sigma, mu, c in configs:
        prob = GaussianQuadratic(c)
        params = SurrogateParams(power, sigma)
        means = np.array([
            powerhp_grad_estimate(prob, np.array([mu]), params,
                                  k_pop=chunk, j_batch=1, rng=rng)[0]
            for _ in range(n_chunks)])
        want = prob.surrogate_grad(mu, power, sigma)
        se = means.std(ddof=1) / np.sqrt(n_chunks)
        z = abs(means.mean() - want) / se
        worst_z = max(worst_z, z)
        ok &= z <= 4.0
    elapsed = time.time() - start
    check(2, f"estimator mean within 4 SE of analytic gradient "
             f"(worst z {worst_z:.2f}, {elapsed:.1f}s)",
          ok and elapsed < 30.0)


def test_criterion_3_norm_bound():
    start = time.time()
    prob = BoundedLipschitz()
    rng = RngStream(1003, 1).generator()
    power, sigma = 3.0, 0.7
    params = SurrogateParams(power, sigma)
    bound_sq = power ** 2 * np.exp(2.0 * power * 0.0) * 1.0 ** 2
    violations = 0
    for _ in range(10_000):
        mu = np.array([rng.uniform(-4.0, 4.0)])
        est = powerhp_grad_estimate(prob, mu, params, k_pop=1, j_batch=1,
                                    rng=rng)
        if float(est @ est) > bound_sq * (1 + 1e-12):
            violations += 1
    elapsed = time.time() - start
    check(3, f"squared-norm bound N^2 e^(2 N max f) L^2 holds on 1e4 "
             f"estimates ({violations} violations, {elapsed:.1f}s)",
          violations == 0 and elapsed < 10.0)


def test_criterion_4_alignment_monotone_in_power():
    start = time.time()
    grid = (-1.0, 1.0, 4001)        # 5e-4 spacing
    distances = []
    for power in (0.5, 1.0, 2.0, 4.0):
        samples = surrogate_curve_1d(landscape1d_f, power, 0.8, grid,
                                     f_support=(-1.0, 1.0))
        distances.append(abs(curve_argmax(samples, "f_value") - (-0.5)))
    elapsed = time.time() - start
    monotone = all(b <= a + 1e-12 for a, b in zip(distances, distances[1:]))
    check(4, "surrogate argmax distance to the tall peak non-increasing in "
             f"power (distances {['%.4g' % d for d in distances]}, "
             f"{elapsed:.1f}s)",
          monotone and elapsed < 5.0)


def _run_config(name, tmp_path):
    spec = load_spec(CONFIG_DIR / name)
    return spec, run_protocol(spec, out_dir=tmp_path / name.replace(".json", ""))


def test_criterion_5_phase_retrieval_d100(tmp_path):
    spec, report = _run_config("pr_d100.json", tmp_path)
    ours = report.per_method["powerhp"]
    ok = ours.success_rate >= 0.70
    detail = [f"powerhp SR {ours.success_rate:.2f}"]
    for m in spec.methods:
        if m.display == "powerhp":
            continue
        agg = report.per_method[m.display]
        detail.append(f"{m.display} SR {agg.success_rate:.2f} "
                      f"t {agg.t_vs_reference:+.2f}")
        ok &= ours.success_rate - agg.success_rate >= 0.20
        ok &= agg.t_vs_reference is not None and agg.t_vs_reference < 0.0
    check(5, "phase retrieval d=100: SR >= 0.70, margin >= 0.20 over each "
             "baseline, negative Welch t (" + ", ".join(detail) + ")", ok)


def test_criterion_6_two_layer_20_19(tmp_path):
    spec, report = _run_config("tl_20_19.json", tmp_path)
    ours = report.per_method["powerhp"]
    ok = True
    detail = [f"powerhp mean {ours.mean_metric:.4g}"]
    for m in spec.methods:
        if m.display == "powerhp":
            continue
        agg = report.per_method[m.display]
        detail.append(f"{m.display} mean {agg.mean_metric:.4g} "
                      f"t {agg.t_vs_reference:+.2f}")
        ok &= ours.mean_metric < agg.mean_metric
        ok &= agg.t_vs_reference is not None and agg.t_vs_reference <= -1.0
    check(6, "two-layer (20,19): mean test error strictly below each "
             "baseline with Welch t <= -1 (" + ", ".join(detail) + ")", ok)


def test_criterion_7_two_layer_null_protocol(tmp_path):
    spec, report = _run_config("tl_20_20.json", tmp_path)
    out = tmp_path / "tl_20_20"
    import csv
    with open(out / "trials.csv") as fh:
        rows = list(csv.reader(fh))
    with open(out / "aggregate.csv") as fh:
        arows = list(csv.reader(fh))
    ok = rows[0] == TRIALS_HEADER
    ok &= arows[0] == AGGREGATE_HEADER
    ok &= len(rows) - 1 == spec.n_trials * len(spec.methods)
    ok &= len(arows) - 1 == len(spec.methods)
    ok &= spec.success_threshold == 1e-3
    for r in report.trials:
        ok &= r.success == (not r.aborted and r.best_metric <= 1e-3)
    check(7, f"two-layer (20,20) null protocol completes with the full CSV "
             f"schema and e <= 0.001 success rule "
             f"({spec.n_trials} trials x {len(spec.methods)} methods)", ok)


def test_criterion_8_property_suite(tmp_path):
    from powerhp.analysis import finite_diff_grad, welch_t
    from powerhp.core import (ScheduleConfig, learning_rate_at, power_at,
                              smoothing_at)
    from powerhp.harness import MethodSpec, ProtocolSpec
    from powerhp.optimizers import make_optimizer, run
    from powerhp.problems import pr_generate, pr_metric, tl_generate

    start = time.time()
    ok = True

    # schedule closed forms
    cfg = ScheduleConfig(n0=1.0, delta=4.0, phi_ratio=0.5, b=0.1, sigma0=1.0,
                         beta=0.5, alpha_scale=1.0, gamma=0.25)
    ok &= power_at(cfg, 2) == pytest.approx(4.0)
    ok &= smoothing_at(cfg, 10) == pytest.approx(0.1009765625)
    ok &= learning_rate_at(cfg, 16) == pytest.approx(0.125)

    # metric symmetry
    rng = np.random.default_rng(1008)
    x, x0 = rng.normal(size=8), rng.normal(size=8)
    ok &= pr_metric(x, x0) == pr_metric(-x, x0)

    # finite-difference gradient checks at rel err <= 1e-4
    prob, _ = pr_generate(6, 24, RngStream(1008, 1 << 20))
    idx = np.arange(prob.n_samples)
    for _ in range(5):
        w = rng.normal(size=prob.dim)
        exact = -prob.fitness_grad_mean(w, idx)
        approx = finite_diff_grad(lambda v: prob.loss(v, idx), w, 1e-5)
        ok &= (np.linalg.norm(approx - exact)
               / max(np.linalg.norm(exact), 1e-12)) <= 1e-4
    tprob, _ = tl_generate(4, 3, RngStream(1008, 2 << 20))
    checked = 0
    while checked < 5:
        w = rng.normal(size=tprob.dim)
        xx = rng.normal(size=tprob.k)
        z = w.reshape(tprob.width, tprob.k) @ xx
        if min(np.abs(z).min(), np.abs(tprob.teacher @ xx).min()) < 1e-2:
            continue
        exact = tprob.loss_grad(w, xx)
        approx = finite_diff_grad(lambda v: tprob.loss(v, xx[None, :]), w, 1e-6)
        ok &= (np.linalg.norm(approx - exact)
               / max(np.linalg.norm(exact), 1e-12)) <= 1e-4
        checked += 1

    # optimizer degenerations
    stream = RngStream(1008, 3 << 20)
    prob2, w0 = pr_generate(6, 24, stream)
    base = run(make_optimizer("sgd", lr=1e-3), prob2, 30, stream, mu0=w0)
    sam0 = run(make_optimizer("sam", lr=1e-3, rho=0.0), prob2, 30, stream,
               mu0=w0)
    slgh0 = run(make_optimizer("slghr", lr=1e-3, sigma0=0.0, k_pop=1), prob2,
                30, stream, mu0=w0)
    ok &= np.array_equal(base.final_mu, sam0.final_mu)
    ok &= np.array_equal(base.final_mu, slgh0.final_mu)

    # welch antisymmetry
    a, b = rng.normal(size=10), rng.normal(0.5, 1.5, size=12)
    ok &= welch_t(a, b)[0] == pytest.approx(-welch_t(b, a)[0])

    # determinism / replay bit-equality
    spec = ProtocolSpec(
        problem_kind="landscape1d", problem_params={}, n_trials=2, T=40,
        success_threshold=0.05,
        methods=(MethodSpec("powerhp", hyper={"alpha_scale": 0.05}),
                 MethodSpec("sgd", hyper={"lr": 1e-4})),
        seed=1008, validation_every=10)
    run_protocol(spec, out_dir=tmp_path / "a")
    run_protocol(load_spec(tmp_path / "a" / "spec.json"),
                 out_dir=tmp_path / "b")
    ok &= (tmp_path / "a" / "trials.csv").read_bytes() == \
        (tmp_path / "b" / "trials.csv").read_bytes()

    elapsed = time.time() - start
    check(8, f"property suite: schedules, symmetries, gradient checks, "
             f"optimizer degenerations, Welch antisymmetry, replay "
             f"bit-equality ({elapsed:.1f}s)", ok and elapsed < 120.0)
