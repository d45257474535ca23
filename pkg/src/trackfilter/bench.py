"""Scaling sweeps over (tracks, layers), power-law fits and report export."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats
from scipy.optimize import least_squares

from . import __version__
from .dss import count_lowered
from .filtering import CapacityError, FilterConfig, build_filter_circuit, run_exact_filter, run_sampled_filter
from .hamiltonian import DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_EPSILON, build_system, truth_segment_ids
from .toysim import DetectorGeometry, GenConfig, generate_event

MODES = ("count_only", "exact", "sampled")
CSV_COLUMNS = ("m", "l", "N", "k", "M", "two_q_all_to_all", "two_q_linear_chain", "p_succ", "runtime_ms")


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    epsilon: float = DEFAULT_EPSILON
    seed: int = 0
    shots: int = 100_000
    max_qubits: int = 24
    exact_max_N: int = 2**14
    layer_spacing: float = 30.0
    workers: int = 1
    timing: bool = False

    def config_hash(self) -> str:
        # worker count and timing do not change the results
        d = asdict(self)
        d.pop("workers")
        d.pop("timing")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class SweepRecord:
    m: int
    l: int
    N: int = 0
    k: int = 0
    M: int = 0
    two_q_all_to_all: int = 0
    two_q_linear_chain: int = 0
    p_succ: float | None = None
    runtime_ms: float = 0.0
    error: str | None = None

    def row(self) -> list[str]:
        return ["" if getattr(self, c) is None else repr(getattr(self, c)) for c in CSV_COLUMNS]


def point_seed(seed: int, m: int, l: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(m, l)).generate_state(1)[0])


def sweep_point(m: int, l: int, mode: str, config: SweepConfig) -> SweepRecord:
    start = time.perf_counter()
    rec = SweepRecord(m, l)
    try:
        seed = point_seed(config.seed, m, l)
        geometry = DetectorGeometry.regular(l, spacing=config.layer_spacing)
        event = generate_event(GenConfig(tracks_per_vertex=m, seed=seed), geometry)
        system = build_system(event, config.alpha, config.beta, config.epsilon)
        rec.N, rec.k, rec.M = system.N, system.k, len(truth_segment_ids(system, event))
        fcfg = FilterConfig.for_system(system, shots=config.shots, max_qubits=config.max_qubits)
        circuit = build_filter_circuit(system, fcfg)
        rec.two_q_all_to_all = count_lowered(circuit, "all_to_all")[1]
        rec.two_q_linear_chain = count_lowered(circuit, "linear_chain")[2]
        if mode == "exact":
            if system.N > config.exact_max_N:
                raise CapacityError(f"N={system.N} above the exact-mode ceiling {config.exact_max_N}")
            rec.p_succ = run_exact_filter(system, fcfg).p_succ
        elif mode == "sampled":
            rec.p_succ = run_sampled_filter(system, fcfg, seed=seed).p_succ
    except (CapacityError, ValueError, MemoryError) as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
    if config.timing:
        rec.runtime_ms = round((time.perf_counter() - start) * 1e3, 3)
    return rec


def _point(args: tuple) -> SweepRecord:
    return sweep_point(*args)


def run_sweep(grid: Sequence[tuple[int, int]], mode: str, config: SweepConfig | None = None,
              stream_path: str | Path | None = None) -> list[SweepRecord]:
    """One record per (m, l) point, returned sorted by (l, m).

    Failed points carry an ``error`` and do not stop the sweep. When
    ``stream_path`` is given each record is appended there as a JSON line as
    soon as it is available (in grid order).
    """
    config = config or SweepConfig()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if not grid:
        raise ValueError("empty grid")
    jobs = [(int(m), int(l), mode, config) for m, l in grid]
    stream = open(stream_path, "w") if stream_path else None
    records: list[SweepRecord] = []
    try:
        if config.workers > 1:
            with ProcessPoolExecutor(config.workers) as pool:
                results = pool.map(_point, jobs)
                for rec in results:
                    records.append(rec)
                    if stream:
                        stream.write(json.dumps(asdict(rec), sort_keys=True) + "\n")
                        stream.flush()
        else:
            for job in jobs:
                rec = _point(job)
                records.append(rec)
                if stream:
                    stream.write(json.dumps(asdict(rec), sort_keys=True) + "\n")
                    stream.flush()
    finally:
        if stream:
            stream.close()
    return sorted(records, key=lambda r: (r.l, r.m))


@dataclass
class FitResult:
    model_id: str
    a: float
    b: float
    c: float
    stderr: tuple[float, ...]
    r_squared: float
    covariance: list[list[float]] = field(default_factory=list)
    n_points: int = 0
    degenerate: bool = False

    def predict(self, N) -> np.ndarray:
        N = np.asarray(N, dtype=float)
        if self.model_id == "gate":
            return self.a * N**self.b * np.log(N) + self.c
        return self.a * N**self.b

    def band(self, N) -> tuple[np.ndarray, np.ndarray]:
        """1-sigma band from the parameter covariance (delta method)."""
        N = np.asarray(N, dtype=float)
        y = self.predict(N)
        cov = np.asarray(self.covariance)
        if self.model_id == "gate":
            jac = np.stack([N**self.b * np.log(N), self.a * N**self.b * np.log(N) ** 2,
                            np.ones_like(N)], axis=-1)
        else:
            # covariance is on (log a, b)
            jac = np.stack([y, y * np.log(N)], axis=-1)
        sigma = np.sqrt(np.einsum("...i,ij,...j->...", jac, cov, jac))
        return y - sigma, y + sigma

    def to_dict(self) -> dict:
        return asdict(self)


def _check_points(points: Sequence[tuple[float, float]]) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 4:
        raise FitError("need at least 4 (N, y) points")
    N, y = arr[:, 0], arr[:, 1]
    if np.any(N <= 1) or np.any(y <= 0):
        raise FitError("N must exceed 1 and y must be positive")
    if N.max() / N.min() < 100:
        raise FitError("points must span at least two decades in N")
    return N, y


def _log_r2(y: np.ndarray, yhat: np.ndarray) -> tuple[float, bool]:
    ly = np.log(y)
    ss_res = float(np.sum((ly - np.log(yhat)) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    if ss_tot <= 1e-24:
        return 0.0, True
    return 1.0 - ss_res / ss_tot, False


def fit_power_law(points: Sequence[tuple[float, float]], model_id: str = "power") -> FitResult:
    """Fit ``a N^b log N + c`` (``gate``) or ``a N^b`` (``power``)."""
    model_id = model_id.removesuffix("_model")
    N, y = _check_points(points)
    if model_id == "power":
        lr = stats.linregress(np.log(N), np.log(y))
        a = math.exp(lr.intercept)
        if not np.isfinite(lr.stderr):
            raise FitError("power-law fit is ill-conditioned")
        var_b = float(lr.stderr) ** 2
        var_la = float(lr.intercept_stderr) ** 2
        x = np.log(N)
        cov_lab = float(-x.mean() * var_b)
        r2, degenerate = _log_r2(y, a * N**lr.slope)
        return FitResult("power", a, float(lr.slope), 0.0, (a * float(lr.intercept_stderr), float(lr.stderr), 0.0),
                         r2, [[var_la, cov_lab], [cov_lab, var_b]], len(N), degenerate)
    if model_id != "gate":
        raise ValueError(f"unknown model {model_id!r}")

    def resid(p: np.ndarray) -> np.ndarray:
        # trial steps with large exponents overflow and are rejected by the solver
        with np.errstate(over="ignore", invalid="ignore"):
            return (p[0] * N ** p[1] * np.log(N) + p[2] - y) / y

    i = int(np.argmax(N))
    p0 = np.array([y[i] / (math.sqrt(N[i]) * math.log(N[i])), 0.5, 0.0])
    # 200 iterations, each costing 4 evaluations with a finite-difference Jacobian
    sol = least_squares(resid, p0, method="lm", xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=200 * 4)
    if not sol.success:
        raise FitError(f"gate-model fit did not converge: {sol.message}")
    jtj = sol.jac.T @ sol.jac
    if np.linalg.cond(jtj) > 1e14:
        raise FitError("gate-model fit is ill-conditioned")
    dof = max(len(N) - 3, 1)
    cov = np.linalg.inv(jtj) * float(sol.fun @ sol.fun) / dof
    yhat = sol.x[0] * N ** sol.x[1] * np.log(N) + sol.x[2]
    if np.any(yhat <= 0):
        raise FitError("gate-model prediction is non-positive")
    r2, degenerate = _log_r2(y, yhat)
    a, b, c = (float(v) for v in sol.x)
    return FitResult("gate", a, b, c, tuple(float(s) for s in np.sqrt(np.diag(cov))), r2,
                     cov.tolist(), len(N), degenerate)


def records_to_csv(records: Iterable[SweepRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        if r.error is None:
            w.writerow(r.row())
    return buf.getvalue()


def records_from_csv(text: str) -> list[SweepRecord]:
    types = {f.name: f.type for f in fields(SweepRecord)}
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        kw = {}
        for c in CSV_COLUMNS:
            v = row[c]
            if v == "":
                kw[c] = None
            elif "float" in str(types[c]):
                kw[c] = float(v)
            else:
                kw[c] = int(v)
        out.append(SweepRecord(**kw))
    return out


def report_metadata(config: SweepConfig | None, mode: str | None = None, **extra) -> dict:
    meta = {"version": __version__}
    if config is not None:
        meta.update(seed=config.seed, config_hash=config.config_hash(), config=asdict(config))
        meta["config"].pop("workers")
        meta["config"].pop("timing")
    if mode is not None:
        meta["mode"] = mode
    meta.update(extra)
    return meta


def export_report(records: Sequence[SweepRecord], fits: dict[str, FitResult], path: str | Path,
                  metadata: dict | None = None) -> tuple[Path, Path]:
    """Write ``sweep.csv`` and ``report.json`` into directory ``path``."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out / "sweep.csv", out / "report.json"
        csv_path.write_text(records_to_csv(records))
        doc = {
            "metadata": metadata or {"version": __version__},
            "fits": {k: v.to_dict() for k, v in sorted(fits.items())},
            "failures": [asdict(r) for r in records if r.error is not None],
        }
        json_path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc}") from exc
    return csv_path, json_path


def series(records: Iterable[SweepRecord], y: str, layers: int | None = None) -> list[tuple[float, float]]:
    return [(r.N, getattr(r, y)) for r in records
            if r.error is None and getattr(r, y) is not None and (layers is None or r.l == layers)]


def parse_grid(text: str) -> list[tuple[int, int]]:
    """``"1:3,2:3"`` or ``"1,2,4x3,5"`` (tracks x layers product)."""
    text = text.strip()
    if "x" in text:
        ms, ls = text.split("x")
        return [(int(m), int(l)) for l in ls.split(",") for m in ms.split(",")]
    grid = []
    for item in text.split(","):
        m, l = item.split(":")
        grid.append((int(m), int(l)))
    return grid


def grid_powers_of_two(layers: Iterable[int], max_N: int, min_m: int = 2) -> list[tuple[int, int]]:
    """Track counts 2, 4, 8, ... per layer count with N = m^2 (l-1) <= max_N."""
    grid = []
    for l in layers:
        m = min_m
        while m * m * (l - 1) <= max_N:
            grid.append((m, l))
            m *= 2
    return grid
