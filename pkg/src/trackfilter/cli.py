"""Command-line entry point.

Settings resolve as: explicit flag, then the ``--config`` TOML file, then the
built-in default. The TOML file has one table per stage::

    [gen]        # GenConfig fields plus n_layers, spacing
    [hamiltonian]  # alpha, beta, epsilon
    [filter]     # lambda_c, selection_tau, shots, max_qubits
    [bench]      # SweepConfig fields

Exit codes: 0 success, 2 validation error, 3 capacity exceeded.
"""

from __future__ import annotations

import functools
import json
import sys
from dataclasses import asdict, fields
from pathlib import Path

import click

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .bench import (FitError, SweepConfig, export_report, fit_power_law, parse_grid, records_from_csv,
                    report_metadata, run_sweep, series)
from .filtering import (CapacityError, FilterConfig, accepted_hit_pairs, noisy_filter_distribution,
                        run_exact_filter, run_sampled_filter)
from .hamiltonian import TrackingSystem, build_system, gershgorin_bounds, solve_classical
from .qsim.noise import NoiseParams
from .toysim import DetectorGeometry, Event, GenConfig, config_dict, generate_events, segment_metrics

EXIT_VALIDATION = 2
EXIT_CAPACITY = 3

_SECTIONS = {
    "gen": {f.name for f in fields(GenConfig)} | {"n_layers", "spacing", "n_events"},
    "hamiltonian": {"alpha", "beta", "epsilon"},
    "filter": {f.name for f in fields(FilterConfig)} | {"trajectories"},
    "bench": {f.name for f in fields(SweepConfig)},
}


def load_config(path: str | None) -> dict[str, dict]:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise click.BadParameter(f"{path}: {exc}", param_hint="--config") from exc
    for section, body in doc.items():
        if section not in _SECTIONS or not isinstance(body, dict):
            raise click.BadParameter(f"{path}: unknown section [{section}]", param_hint="--config")
        unknown = set(body) - _SECTIONS[section]
        if unknown:
            raise click.BadParameter(f"{path}: unknown keys {sorted(unknown)} in [{section}]",
                                     param_hint="--config")
    return doc


def _pick(ctx: click.Context, section: str, flags: dict, defaults: dict) -> dict:
    """Merge flags (non-None) over the config section over ``defaults``."""
    cfg = (ctx.obj or {}).get("config", {}).get(section, {})
    out = dict(defaults)
    out.update({k: v for k, v in cfg.items() if k in defaults})
    out.update({k: v for k, v in flags.items() if v is not None and k in defaults})
    return out


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CapacityError as exc:
            click.echo(f"capacity exceeded: {exc}", err=True)
            sys.exit(EXIT_CAPACITY)
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            click.echo(f"invalid input: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
    return wrapper


def _emit(text: str, out: str | None) -> None:
    if out is None:
        click.echo(text)
    else:
        Path(out).write_text(text + "\n")


def _dump(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2)


@click.group()
@click.version_option(__version__)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="TOML file with [gen], [hamiltonian], [filter], [bench] tables.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    """Track-segment filtering on a simulated quantum circuit."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = load_config(config_path)


@main.command()
@click.option("--tracks", "tracks_per_vertex", type=int, help="Tracks per vertex.")
@click.option("--layers", "n_layers", type=int, help="Number of detector layers.")
@click.option("--spacing", type=float, help="Layer spacing along z.")
@click.option("--vertices", "n_vertices", type=int)
@click.option("--sigma-meas", type=float)
@click.option("--sigma-scatt", "sigma_scatt_coeff", type=float)
@click.option("--ghost-rate", type=float)
@click.option("--dropout-rate", type=float)
@click.option("--events", "n_events", type=int, help="Events to generate (JSON lines when > 1).")
@click.option("--seed", type=int)
@click.option("-o", "--out", type=click.Path(dir_okay=False), help="Output file (stdout if omitted).")
@click.pass_context
@_guard
def generate(ctx, out, **flags):
    """Generate toy detector events."""
    defaults = config_dict(GenConfig()) | {"n_layers": 3, "spacing": 30.0, "n_events": 1}
    s = _pick(ctx, "gen", flags, defaults)
    geometry = DetectorGeometry.regular(int(s.pop("n_layers")), spacing=float(s.pop("spacing")))
    n_events = int(s.pop("n_events"))
    s["momentum_range"] = tuple(s["momentum_range"])
    s["vertex_z_window"] = tuple(s["vertex_z_window"])
    events = generate_events(GenConfig(**s), geometry, n_events)
    _emit("\n".join(e.to_json() for e in events), out)


@main.command()
@click.argument("event_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", type=float)
@click.option("--beta", type=float)
@click.option("--epsilon", type=float)
@click.option("-o", "--out", type=click.Path(dir_okay=False))
@click.pass_context
@_guard
def build(ctx, event_file, out, **flags):
    """Build the tracking system (segments and couplings) for an event."""
    s = _pick(ctx, "hamiltonian", flags, {"alpha": 2.0, "beta": 1.0, "epsilon": 1e-6})
    event = Event.from_json(Path(event_file).read_text())
    _emit(build_system(event, **s).to_json(), out)


@main.command()
@click.argument("system_file", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--out", type=click.Path(dir_okay=False))
@_guard
def solve(system_file, out):
    """Classical solve of A x = b."""
    system = TrackingSystem.from_json(Path(system_file).read_text())
    x = solve_classical(system)
    lo, hi = gershgorin_bounds(system)
    _emit(_dump({"N": system.N, "x": x.tolist(), "gershgorin": [lo, hi]}), out)


@main.command()
@click.argument("system_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["exact", "sampled", "noisy"]), default="exact", show_default=True)
@click.option("--shots", type=int)
@click.option("--trajectories", type=int, help="Noisy mode: average this many trajectories instead of sampling shots.")
@click.option("--p1", type=float, default=0.0, show_default=True)
@click.option("--p2", type=float, default=0.0, show_default=True)
@click.option("--pro", "p_ro", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--tau", "selection_tau", type=float)
@click.option("--max-qubits", type=int)
@click.option("--event", "event_file", type=click.Path(exists=True, dir_okay=False),
              help="Source event; adds efficiency and fake rate of the selection.")
@click.option("-o", "--out", type=click.Path(dir_okay=False))
@click.pass_context
@_guard
def simulate(ctx, system_file, mode, p1, p2, p_ro, seed, event_file, out, **flags):
    """Run the spectral filter on a tracking system."""
    system = TrackingSystem.from_json(Path(system_file).read_text())
    defaults = {f.name: getattr(FilterConfig(), f.name) for f in fields(FilterConfig)}
    defaults["lambda_c"] = system.diag_c
    defaults["trajectories"] = 0
    s = _pick(ctx, "filter", flags, defaults)
    trajectories = int(s.pop("trajectories"))
    config = FilterConfig(**s)
    noise = NoiseParams(p1, p2, p_ro)
    if mode == "exact":
        result = run_exact_filter(system, config)
    elif mode == "sampled":
        result = run_sampled_filter(system, config, seed=seed)
    elif noise.is_zero or trajectories <= 0:
        result = run_sampled_filter(system, config, noise, seed=seed)
    else:
        result = noisy_filter_distribution(system, config, noise, trajectories, seed)
    doc = json.loads(result.to_json())
    doc.update(mode=mode, seed=seed, noise=asdict(noise), config=asdict(config))
    if event_file is not None and not result.empty:
        event = Event.from_json(Path(event_file).read_text())
        eff, fake = segment_metrics(accepted_hit_pairs(system, result.accepted_segments), event)
        doc.update(efficiency=eff, fake_rate=fake)
    _emit(_dump(doc), out)


@main.command()
@click.option("--grid", required=True, help='Points as "m:l,m:l" or a product "1,2,4x3,5".')
@click.option("--mode", type=click.Choice(["count_only", "exact", "sampled"]), default="count_only",
              show_default=True)
@click.option("--workers", type=int)
@click.option("--seed", type=int)
@click.option("--shots", type=int)
@click.option("--alpha", type=float)
@click.option("--beta", type=float)
@click.option("--epsilon", type=float)
@click.option("--max-qubits", type=int)
@click.option("--timing/--no-timing", default=None, help="Record wall-clock runtime (breaks byte determinism).")
@click.option("-o", "--out", "outdir", type=click.Path(file_okay=False), required=True)
@click.pass_context
@_guard
def benchmark(ctx, grid, mode, outdir, **flags):
    """Sweep (m, l) points and write sweep.csv, records.jsonl and report.json."""
    s = _pick(ctx, "bench", flags, asdict(SweepConfig()))
    config = SweepConfig(**s)
    Path(outdir).mkdir(parents=True, exist_ok=True)
    records = run_sweep(parse_grid(grid), mode, config, Path(outdir) / "records.jsonl")
    export_report(records, {}, outdir, report_metadata(config, mode))
    failed = [r for r in records if r.error]
    for r in failed:
        click.echo(f"point (m={r.m}, l={r.l}) failed: {r.error}", err=True)
    if failed and all(r.error.startswith("CapacityError") for r in failed) and len(failed) == len(records):
        sys.exit(EXIT_CAPACITY)


def _fits(records, y: str, model: str, layers: int | None) -> dict:
    if layers is not None:
        return {f"{y}_{model}_l{layers}": fit_power_law(series(records, y, layers), model)}
    by_layer = sorted({r.l for r in records})
    if len(by_layer) > 1:
        return {f"{y}_{model}_l{l}": fit_power_law(series(records, y, l), model) for l in by_layer}
    return {f"{y}_{model}": fit_power_law(series(records, y), model)}


@main.command()
@click.argument("csv_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--model", type=click.Choice(["gate", "power"]), default="gate", show_default=True)
@click.option("--y", "column", default=None, help="Column to fit (gate: two_q_all_to_all, power: p_succ).")
@click.option("--layers", type=int, default=None, help="Restrict to one layer count.")
@click.option("-o", "--out", type=click.Path(dir_okay=False))
@_guard
def fit(csv_file, model, column, layers, out):
    """Fit a power law to one sweep column."""
    records = records_from_csv(Path(csv_file).read_text())
    column = column or ("two_q_all_to_all" if model == "gate" else "p_succ")
    if layers is None and model == "gate":
        fits = {f"{column}_gate": fit_power_law(series(records, column), model)}
    else:
        fits = _fits(records, column, model, layers)
    _emit(_dump({k: v.to_dict() for k, v in fits.items()}), out)


@main.command()
@click.argument("csv_file", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--out", "outdir", type=click.Path(file_okay=False), required=True)
@_guard
def report(csv_file, outdir):
    """Re-export a sweep with the standard fits (gate law, and sampling law when present)."""
    records = records_from_csv(Path(csv_file).read_text())
    fits, skipped = {}, {}
    jobs = [(f"{topo}_gate", lambda topo=topo: {f"{topo}_gate": fit_power_law(series(records, topo), "gate")})
            for topo in ("two_q_all_to_all", "two_q_linear_chain")]
    if any(r.p_succ is not None for r in records):
        jobs.append(("p_succ_power", lambda: _fits(records, "p_succ", "power", None)))
    for name, job in jobs:
        try:
            fits.update(job())
        except FitError as exc:
            skipped[name] = str(exc)
    meta = report_metadata(None, source=Path(csv_file).name, skipped_fits=skipped)
    export_report(records, fits, outdir, meta)


if __name__ == "__main__":
    main()
