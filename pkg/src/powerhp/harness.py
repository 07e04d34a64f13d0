"""Multi-trial experiment protocols: paired optimizer runs, success
accounting, aggregation with Welch t statistics, and CSV/JSON persistence.

Every trial generates one problem instance and one shared initial point;
all methods then consume identical data sub-streams so that between-method
differences are paired.  The whole protocol is a deterministic function of
the resolved spec (seed included).
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .analysis import welch_t
from .core import RngStream
from .optimizers import export_trajectory, make_optimizer, run
from .problems import Landscape1DProblem, pr_generate, tl_generate

__all__ = [
    "MethodSpec",
    "ProtocolSpec",
    "TrialReport",
    "MethodAggregate",
    "AggregateReport",
    "run_protocol",
    "run_trial",
    "persist",
    "load_spec",
]

PROBLEM_KINDS = ("phase_retrieval", "two_layer", "landscape1d")

# trial sub-streams are spaced out so each trial's role sub-streams
# can never collide with a neighbour's
_TRIAL_STRIDE = 1 << 20

TRIALS_HEADER = ["trial_id", "method", "best_metric", "success",
                 "time_to_best", "aborted"]
AGGREGATE_HEADER = ["method", "mean_metric", "success_rate",
                    "mean_time_to_best", "t_vs_reference", "dof"]


@dataclass(frozen=True)
class MethodSpec:
    """One optimizer entry: registry name, display label, hyperparameters."""

    name: str
    label: Optional[str] = None
    hyper: dict = field(default_factory=dict)

    @property
    def display(self) -> str:
        return self.label or self.name

    def build(self):
        return make_optimizer(self.name, **self.hyper)


@dataclass(frozen=True)
class ProtocolSpec:
    """Fully resolved description of one benchmark protocol."""

    problem_kind: str
    problem_params: dict
    n_trials: int
    T: int
    success_threshold: float
    methods: Tuple[MethodSpec, ...]
    seed: int
    validation_every: int = 50
    reference_method: Optional[str] = None   # default: first method
    save_trajectories: bool = False

    def __post_init__(self):
        if self.problem_kind not in PROBLEM_KINDS:
            raise ValueError(f"problem_kind must be one of {PROBLEM_KINDS}, "
                             f"got {self.problem_kind!r}")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.success_threshold <= 0:
            raise ValueError("success_threshold must be > 0")
        if not self.methods:
            raise ValueError("methods must be nonempty")
        labels = [m.display for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate method labels: {labels}")

    @property
    def reference(self) -> str:
        return self.reference_method or self.methods[0].display

    def to_json(self) -> str:
        doc = asdict(self)
        doc["methods"] = [asdict(m) for m in self.methods]
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ProtocolSpec":
        doc = json.loads(text)
        try:
            methods = tuple(MethodSpec(**m) for m in doc.pop("methods"))
            return cls(methods=methods, **doc)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed protocol spec: {exc}") from exc


@dataclass
class TrialReport:
    """Outcome of one (trial, method) run."""

    trial_id: int
    method: str
    best_metric: float        # min oracle metric over scored iterates
    success: bool
    time_to_best: int         # step index of the best-metric iterate
    aborted: bool
    selected_metric: float = float("nan")   # metric of the validation-chosen point
    best_validation_t: int = -1


@dataclass
class MethodAggregate:
    method: str
    mean_metric: float
    success_rate: float
    mean_time_to_best: float
    t_vs_reference: Optional[float]
    dof: Optional[float]
    n_aborted: int = 0


@dataclass
class AggregateReport:
    spec: ProtocolSpec
    trials: List[TrialReport]
    per_method: Dict[str, MethodAggregate]


def _trial_stream(seed: int, trial_id: int) -> RngStream:
    return RngStream(seed=seed, stream_id=(trial_id + 1) * _TRIAL_STRIDE)


def make_problem(spec: ProtocolSpec, trial_id: int):
    """Instance + shared initial point for one trial, from the trial stream."""
    stream = _trial_stream(spec.seed, trial_id)
    p = dict(spec.problem_params)
    if spec.problem_kind == "phase_retrieval":
        return pr_generate(d=int(p.pop("d")), n_samples=int(p.pop("n_samples")),
                           stream=stream, **p)
    if spec.problem_kind == "two_layer":
        return tl_generate(k=int(p.pop("k")), n=int(p.pop("n")),
                           stream=stream, **p)
    problem = Landscape1DProblem(validation_seed=spec.seed, **p)
    igen = stream.substream(0).generator()
    return problem, np.array([igen.uniform(-1.0, 1.0)])


def run_trial(spec: ProtocolSpec, trial_id: int,
              out_dir: Optional[str] = None) -> List[TrialReport]:
    """Run every method of the spec on one freshly generated instance."""
    problem, mu0 = make_problem(spec, trial_id)
    stream = _trial_stream(spec.seed, trial_id)
    reports = []
    for method in spec.methods:
        optimizer = method.build()
        optimizer.reset(mu0)
        want_traj = spec.save_trajectories and out_dir is not None
        result = run(optimizer, problem, spec.T, stream,
                     validation_every=spec.validation_every,
                     record_trajectory=want_traj)
        if result.aborted:
            # divergence is a result: keep the worst recorded metric
            best_metric = result.best_metric if np.isfinite(result.best_metric) \
                else float("nan")
            success = False
        else:
            best_metric = result.best_metric
            success = best_metric <= spec.success_threshold
        selected = float("nan")
        if result.best_mu is not None and hasattr(problem, "metric"):
            selected = problem.metric(result.best_mu)
        reports.append(TrialReport(
            trial_id=trial_id, method=method.display, best_metric=best_metric,
            success=bool(success), time_to_best=result.best_metric_t,
            aborted=result.aborted, selected_metric=selected,
            best_validation_t=result.best_t))
        if want_traj:
            traj_dir = Path(out_dir) / "trajectories"
            traj_dir.mkdir(parents=True, exist_ok=True)
            export_trajectory(result.records,
                              traj_dir / f"{method.display}_trial{trial_id:03d}.csv")
    return reports


def aggregate(spec: ProtocolSpec,
              trials: List[TrialReport]) -> Dict[str, MethodAggregate]:
    by_method: Dict[str, List[TrialReport]] = {m.display: [] for m in spec.methods}
    for rep in trials:
        by_method[rep.method].append(rep)

    def metrics_of(reports):
        return [r.best_metric for r in reports if np.isfinite(r.best_metric)]

    ref_metrics = metrics_of(by_method[spec.reference])
    out = {}
    for method in spec.methods:
        reports = by_method[method.display]
        vals = metrics_of(reports)
        mean_metric = float(np.mean(vals)) if vals else float("nan")
        sr = sum(r.success for r in reports) / len(reports)
        mean_time = float(np.mean([r.time_to_best for r in reports
                                   if r.time_to_best >= 0])) \
            if any(r.time_to_best >= 0 for r in reports) else float("nan")
        t_stat = dof = None
        if method.display != spec.reference and len(ref_metrics) >= 2 \
                and len(vals) >= 2:
            try:
                t_stat, dof = welch_t(ref_metrics, vals)
            except ValueError:
                t_stat = dof = None
        out[method.display] = MethodAggregate(
            method=method.display, mean_metric=mean_metric, success_rate=sr,
            mean_time_to_best=mean_time, t_vs_reference=t_stat, dof=dof,
            n_aborted=sum(r.aborted for r in reports))
    return out


def _trial_worker(args):
    spec_json, trial_id, out_dir = args
    spec = ProtocolSpec.from_json(spec_json)
    return run_trial(spec, trial_id, out_dir)


def run_protocol(spec: ProtocolSpec, out_dir: Optional[str] = None,
                 threads: int = 1, progress: bool = False) -> AggregateReport:
    """Execute all trials (optionally in parallel) and aggregate.

    Per-trial determinism makes the result independent of the schedule, so
    ``threads`` only affects wall time.
    """
    trials: List[TrialReport] = []
    if threads > 1 and spec.n_trials > 1:
        args = [(spec.to_json(), i, out_dir) for i in range(spec.n_trials)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for i, reports in enumerate(pool.map(_trial_worker, args)):
                trials.extend(reports)
                if progress:
                    print(f"trial {i + 1}/{spec.n_trials} done", flush=True)
    else:
        for i in range(spec.n_trials):
            trials.extend(run_trial(spec, i, out_dir))
            if progress:
                print(f"trial {i + 1}/{spec.n_trials} done", flush=True)
    report = AggregateReport(spec=spec, trials=trials,
                             per_method=aggregate(spec, trials))
    if out_dir is not None:
        persist(report, out_dir)
    return report


def persist(report: AggregateReport, out_dir) -> None:
    """Write spec.json, trials.csv, aggregate.csv (and a detail CSV)."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "spec.json").write_text(report.spec.to_json())
        with open(out / "trials.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRIALS_HEADER)
            for r in report.trials:
                writer.writerow([r.trial_id, r.method, r.best_metric,
                                 int(r.success), r.time_to_best, int(r.aborted)])
        with open(out / "trials_detail.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRIALS_HEADER + ["selected_metric",
                                             "best_validation_t"])
            for r in report.trials:
                writer.writerow([r.trial_id, r.method, r.best_metric,
                                 int(r.success), r.time_to_best, int(r.aborted),
                                 r.selected_metric, r.best_validation_t])
        with open(out / "aggregate.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(AGGREGATE_HEADER)
            for m in report.spec.methods:
                agg = report.per_method[m.display]
                writer.writerow([
                    agg.method, agg.mean_metric, agg.success_rate,
                    agg.mean_time_to_best,
                    "" if agg.t_vs_reference is None else agg.t_vs_reference,
                    "" if agg.dof is None else agg.dof])
    except OSError as exc:
        raise OSError(f"failed writing results under {out}: {exc}") from exc


def load_spec(path) -> ProtocolSpec:
    try:
        return ProtocolSpec.from_json(Path(path).read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid JSON in {path}: {exc}") from exc
