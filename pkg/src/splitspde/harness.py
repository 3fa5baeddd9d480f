"""Monte Carlo strong-convergence studies of the splitting schemes."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import __version__
from .noise import generate
from .operators import AssumptionReport, Model, check_assumptions, to_ito
from .presets import PRESETS, model_from_spec, preset
from .solvers import (
    DEFAULT_REF_MULTIPLIER,
    NumericalBlowUp,
    Trajectory,
    grid_times,
    oracle_trajectory,
    q_method,
    reference_solve,
    run_splitting,
)
from .spectral import coeff_norm

CSV_COLUMNS = ("n", "mean_error_p", "root_error", "std_err", "sum_stat")
# root errors at or below this are treated as exact and kept out of the fit
EXACT_TOLERANCE = 1e-10


class AssumptionFailure(RuntimeError):
    def __init__(self, report: AssumptionReport):
        super().__init__("; ".join(report.messages))
        self.report = report


class StudyBlowUp(RuntimeError):
    def __init__(self, path_index: int, n, message: str):
        super().__init__(f"path {path_index}, n={n}: {message}")
        self.path_index = path_index
        self.n = n
        self.detail = message

    def __reduce__(self):
        # worker processes ship this back to the parent
        return (StudyBlowUp, (self.path_index, self.n, self.detail))


@dataclass
class StudyConfig:
    preset: str | None = "transport"
    model: dict | None = None
    params: dict = field(default_factory=dict)
    grid: int = 64
    horizon: float = 1.0
    sobolev: int = 0
    moment: float = 2.0
    steps: list = field(default_factory=lambda: [4, 8, 16, 32, 64])
    ref_multiplier: int = DEFAULT_REF_MULTIPLIER
    fine_steps: int | None = None
    paths: int = 100
    seed: int = 0
    scheme: str = "lie"
    use_oracle: bool = True
    out: str | None = None

    def __post_init__(self):
        self.steps = [int(n) for n in self.steps]
        self.validate()

    def validate(self):
        if (self.preset is None) == (self.model is None):
            raise ValueError("give exactly one of preset / model")
        if self.preset is not None and self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        if not self.steps or any(b <= a for a, b in zip(self.steps, self.steps[1:])):
            raise ValueError("steps must be a non-empty strictly increasing list")
        if self.steps[0] < 1:
            raise ValueError("step counts must be >= 1")
        if self.paths < 1:
            raise ValueError("paths (Monte Carlo sample count M) must be >= 1")
        if self.moment < 2:
            raise ValueError("moment p must be >= 2")
        if self.sobolev < 0:
            raise ValueError("sobolev index must be >= 0")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.scheme not in ("lie", "strang"):
            raise ValueError("scheme must be 'lie' or 'strang'")
        if self.ref_multiplier < 1:
            raise ValueError("ref_multiplier must be >= 1")

    @property
    def ref_steps(self) -> int:
        return self.ref_multiplier * max(self.steps)

    @property
    def path_steps(self) -> int:
        return self.fine_steps or self.ref_steps

    def build_model(self) -> Model:
        if self.preset is not None:
            return preset(self.preset, self.grid, self.horizon, self.sobolev, self.moment, **self.params)
        return model_from_spec(self.model, self.grid, self.horizon, self.sobolev, self.moment)


@dataclass
class ConvergenceReport:
    ns: list
    mean_error_p: list
    root_error: list
    std_err: list
    sum_stat: list
    slope: float | None
    intercept: float | None
    r_squared: float | None
    exact: bool
    excluded: list
    metadata: dict

    def rows(self):
        return zip(self.ns, self.mean_error_p, self.root_error, self.std_err, self.sum_stat)


class RateFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float


def fit_rate(ns, errors) -> RateFit:
    """Least squares line through (log n, log error), ignoring non-positive errors."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = errors > 0
    if keep.sum() < 2:
        raise ValueError("need at least two positive errors to fit a rate")
    x, y = np.log(ns[keep]), np.log(errors[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), float(r2))


def _shared_indices(ta: Trajectory, tb: Trajectory):
    ia, ib = [], []
    for i, t in enumerate(ta.times):
        j = int(np.argmin(np.abs(tb.times - t)))
        if abs(tb.times[j] - t) <= 1e-12 * max(1.0, abs(t)):
            ia.append(i)
            ib.append(j)
    if not ia:
        raise ValueError("trajectories share no times")
    return ia, ib


def _norms_of_difference(ta: Trajectory, tb: Trajectory, m: int) -> np.ndarray:
    ia, ib = _shared_indices(ta, tb)
    diff = ta.coeffs[ia] - tb.coeffs[ib]
    return np.array([coeff_norm(ta.grid, d, m) for d in diff])


def path_error(traj_a: Trajectory, traj_b: Trajectory, m: int, p: float) -> float:
    """(max over shared times of ||a(t) - b(t)||_m)^p."""
    return float(np.max(_norms_of_difference(traj_a, traj_b, m)) ** p)


def path_sum_error(traj_a: Trajectory, traj_b: Trajectory, m: int, p: float) -> float:
    """sum over shared times of ||a(t) - b(t)||_m^p."""
    return float(np.sum(_norms_of_difference(traj_a, traj_b, m) ** p))


# -- per-path work (module level so worker processes can run it) ---------------

_WORK: dict = {}


def _init_worker(model: Model, settings: dict):
    _WORK["model"] = model
    _WORK["settings"] = settings


def _lcm(values):
    out = 1
    for v in values:
        out = out * v // math.gcd(out, v)
    return out


def _one_path(path_index: int):
    model: Model = _WORK["model"]
    s = _WORK["settings"]
    path = generate(s["seed"], len(model.noises), model.horizon, s["path_steps"], path_index)
    ns = s["ns"]
    try:
        if s["use_oracle"]:
            times = grid_times(model.horizon, _lcm(ns))
            truth = oracle_trajectory(model, path, times)
        else:
            truth = reference_solve(model, s["ref_steps"], path, record_steps=_lcm(ns))
    except NumericalBlowUp as exc:
        raise StudyBlowUp(path_index, "reference", str(exc)) from None
    errs, sums = [], []
    for n in ns:
        try:
            traj = run_splitting(model, n, path, s["scheme"])
        except NumericalBlowUp as exc:
            raise StudyBlowUp(path_index, n, str(exc)) from None
        norms = _norms_of_difference(traj, truth, model.sobolev)
        errs.append(float(np.max(norms) ** model.moment))
        sums.append(float(np.sum(norms**model.moment)))
    return errs, sums


def _validate_steps(config: StudyConfig, model: Model):
    fine = config.path_steps
    if fine & (fine - 1):
        raise ValueError(f"path resolution {fine} must be a power of two")
    if fine % config.ref_steps:
        raise ValueError(f"reference steps {config.ref_steps} must divide path steps {fine}")
    for n in config.steps:
        if model.noises and fine % n:
            raise ValueError(f"n={n} does not divide path steps {fine}")
    if config.ref_steps % _lcm(config.steps):
        raise ValueError("every n must divide the reference step count")


def run_study(config: StudyConfig, jobs: int = 1, progress=None) -> ConvergenceReport:
    """Strong-error study: E max_t ||Z^(n)(t) - Z(t)||_m^p for each n in config.steps."""
    config.validate()
    model = to_ito(config.build_model())
    report = check_assumptions(model)
    if not report.ok:
        raise AssumptionFailure(report)
    _validate_steps(config, model)
    use_oracle = bool(config.use_oracle and model.oracle is not None)
    settings = dict(seed=config.seed, ns=list(config.steps), path_steps=config.path_steps,
                    ref_steps=config.ref_steps, scheme=config.scheme, use_oracle=use_oracle)
    M = config.paths
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(model, settings)) as ex:
            results = list(ex.map(_one_path, range(M), chunksize=max(1, M // (4 * jobs))))
    else:
        _init_worker(model, settings)
        results = []
        for i in range(M):
            results.append(_one_path(i))
            if progress:
                progress(i + 1, M)
    # ordered fold: results are in path-index order regardless of worker count
    errs = np.array([r[0] for r in results])
    sums = np.array([r[1] for r in results])
    p = model.moment
    mean = errs.mean(axis=0)
    std_err = errs.std(axis=0, ddof=1) / math.sqrt(M) if M > 1 else np.zeros_like(mean)
    root = mean ** (1.0 / p)
    sum_stat = sums.mean(axis=0)
    fit_mask = root > EXACT_TOLERANCE
    excluded = [n for n, k in zip(config.steps, fit_mask) if not k]
    exact = not fit_mask.any()
    slope = intercept = r2 = None
    if fit_mask.sum() >= 2:
        slope, intercept, r2 = fit_rate(np.array(config.steps)[fit_mask], root[fit_mask])
    metadata = {
        "library_version": __version__,
        "master_seed": config.seed,
        "config": dataclasses.asdict(config),
        "truth": "oracle" if use_oracle else "reference",
        "q_method": q_method(model),
        "ref_steps": config.ref_steps,
        "path_steps": config.path_steps,
        "exact_tolerance": EXACT_TOLERANCE,
        "fit_target": "root_error",
        "assumptions": report.messages,
    }
    return ConvergenceReport(
        ns=list(config.steps),
        mean_error_p=mean.tolist(),
        root_error=root.tolist(),
        std_err=std_err.tolist(),
        sum_stat=sum_stat.tolist(),
        slope=slope,
        intercept=intercept,
        r_squared=r2,
        exact=bool(exact),
        excluded=excluded,
        metadata=metadata,
    )


def _fmt(x: float) -> str:
    return f"{x:.16e}"


def write_report(report: ConvergenceReport, directory) -> Path:
    """report.csv (per-n table) and report.json (everything) in ``directory``."""
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "report.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for n, *vals in report.rows():
                w.writerow([n] + [_fmt(v) for v in vals])
        with open(d / "report.json", "w", encoding="utf-8") as fh:
            json.dump(dataclasses.asdict(report), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write report to {d}: {exc}") from exc
    return d


def read_report(directory) -> ConvergenceReport:
    d = Path(directory)
    try:
        meta = json.loads((d / "report.json").read_text(encoding="utf-8"))
        with open(d / "report.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise OSError(f"cannot read report from {d}: {exc}") from exc
    meta["ns"] = [int(r["n"]) for r in rows]
    for col in CSV_COLUMNS[1:]:
        meta[col] = [float(r[col]) for r in rows]
    return ConvergenceReport(**meta)


PLOT_SCRIPT = '''"""Log-log plot of the strong error against the step count."""
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{csv}"
with open(path) as fh:
    rows = list(csv.DictReader(fh))
n = [int(r["n"]) for r in rows]
err = [float(r["root_error"]) for r in rows]
plt.loglog(n, err, "o-", label="splitting error")
plt.loglog(n, [err[0] * n[0] / k for k in n], "k--", label="slope -1")
plt.xlabel("n")
plt.ylabel("(E max_t ||Z_n - Z||^p)^(1/p)")
plt.legend()
plt.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
'''


def write_plot_script(directory) -> Path:
    target = Path(directory) / "plot_convergence.py"
    target.write_text(PLOT_SCRIPT.format(csv="report.csv"), encoding="utf-8")
    return target
