"""Command-line entry point: ``countingstars validate|run|sweep``.

Exit codes: 0 success, 1 configuration error, 2 runtime invariant breach.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

from . import __version__
from .errors import ConfigError, CountingStarsError, MissingGridPoint
from .flows import write_flow_sets_csv
from .metrics import REPORT_COLUMNS, SWEEP_COLUMNS, read_rows_csv, sweep, write_rows_csv
from .scenario import SCHEMES, Scenario, load_scenario, reference_config
from .seeds import write_seed_records
from .sim import Simulation, measure, report_row, report_rows, run, simulate
from .sketch import write_readback_csv
from .topology import write_adjacency_csv
from .traffic import write_traffic_csv

log = logging.getLogger("countingstars")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
SUMMARY_COLUMNS = ("scenario", "scheme", "load", "memory_bytes", "epochs", "are", "wmre", "re", "saturations", "prediction_misses")
ESTIMATE_HEADER = ("epoch", "sat_id", "src", "dst", "port", "units")


@dataclass
class RunManifest:
    scenario_hash: str
    tool_version: str
    rng_seed: int
    start_time: str
    end_time: str | None = None
    status: str = "running"
    outputs: list[str] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed_stats: dict = field(default_factory=dict)

    def write(self, path: Path) -> None:
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        os.replace(tmp, path)


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


# ---------------------------------------------------------------------------
# scenario loading with command-line overrides


def _resolve_config(spec: str) -> Path:
    p = Path(spec)
    if p.exists():
        return p
    try:
        return reference_config(spec)
    except FileNotFoundError:
        raise ConfigError(f"config not found: {spec}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _scheme_list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def load_with_overrides(args) -> Scenario:
    sc = load_scenario(_resolve_config(args.config))
    changes = {}
    if getattr(args, "schemes", None):
        changes["schemes"] = args.schemes
        mem = sc.raw.get("memory_bytes")
        if isinstance(mem, dict):
            changes["memory_bytes"] = {s: mem.get(s, next(iter(mem.values()))) for s in args.schemes}
    if getattr(args, "epoch_s", None) is not None:
        changes["epoch_s"] = args.epoch_s
    if getattr(args, "seed_period", None) is not None:
        changes["seed_period_s"] = args.seed_period
    if changes:
        sc = sc.with_overrides(**changes)
    memory = getattr(args, "memory", None)
    if memory and len(memory) == 1 and args.command == "run":
        sc = sc.with_overrides(memory_bytes={s: memory[0] for s in sc.schemes})
    seeds = getattr(args, "seeds", None)
    if seeds and args.command == "run":
        if len(seeds) != 1:
            raise ConfigError("run takes a single --seeds value; use sweep for several")
        sc = sc.with_overrides(rng_seed=seeds[0])
    return sc


# ---------------------------------------------------------------------------
# run directory


def write_run_outputs(sc: Scenario, sim: Simulation, reports, out: Path) -> list[str]:
    """Write every artifact of one run; returns paths relative to ``out``."""
    written = []

    def open_out(rel: str):
        p = out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        written.append(rel)
        return open(p, "w", newline="")

    with open_out("topology/adjacency.csv") as fh:
        write_adjacency_csv([s for pt in sim.periods for s in pt.snapshots], fh)
    with open_out("seeds/seeds.csv") as fh:
        write_seed_records([t for pt in sim.periods for t in pt.seeds], fh)
    with open_out("seeds/flow_sets.csv") as fh:
        write_flow_sets_csv([fs for pt in sim.periods for fs in pt.flow_sets], fh)
    with open_out("traffic/satellite_traffic.csv") as fh:
        times = [pt.t_s + k * sc.epoch_s for pt in sim.periods for k in range(len(pt.satellite_demand))]
        mats = [m for pt in sim.periods for m in pt.satellite_demand]
        write_traffic_csv(zip(times, mats), fh)
    with open_out("truth/truth.csv") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ESTIMATE_HEADER)
        for pt in sim.periods:
            for key in sorted(pt.truth):
                w.writerow((pt.period, *key, pt.truth[key]))
    for scheme in sc.schemes:
        with open_out(f"estimates/{scheme}.csv") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ESTIMATE_HEADER)
            for rep in reports:
                est = rep.results[scheme].estimates
                for key in sorted(est):
                    w.writerow((rep.epoch, *key, est[key]))
        if scheme == "cs":
            with open_out("estimates/cs_readback.csv") as fh:
                write_readback_csv([rb for rep in reports for rb in rep.results["cs"].readbacks], fh)
    rows = report_rows(sc, reports)
    with open_out("report.csv") as fh:
        write_rows_csv(rows, fh, REPORT_COLUMNS)
    with open_out("summary.csv") as fh:
        write_rows_csv(summarize(rows), fh, SUMMARY_COLUMNS)
    return written


def summarize(rows) -> list[dict]:
    """Run mean per scheme next to the per-epoch rows."""
    out = []
    by_scheme: dict[str, list] = {}
    for r in rows:
        by_scheme.setdefault(r["scheme"], []).append(r)
    for scheme, rs in by_scheme.items():
        def mean(k):
            vals = [float(r[k]) for r in rs if not math.isnan(float(r[k]))]
            return math.fsum(vals) / len(vals) if vals else math.nan
        out.append({
            "scenario": rs[0]["scenario"], "scheme": scheme, "load": rs[0]["load"],
            "memory_bytes": rs[0]["memory_bytes"], "epochs": len(rs),
            "are": mean("are"), "wmre": mean("wmre"), "re": mean("re"),
            "saturations": sum(int(r["saturations"]) for r in rs),
            "prediction_misses": sum(int(r["prediction_misses"]) for r in rs),
        })
    return out


def seed_stats(sim: Simulation) -> dict:
    """Empirical modulus growth h/n over all non-empty seed tables."""
    ratios = [t.modulus / t.flow_count for pt in sim.periods for t in pt.seeds if t.flow_count]
    if not ratios:
        return {"tables": 0}
    return {
        "tables": len(ratios),
        "h_over_n_mean": round(statistics.fmean(ratios), 4),
        "h_over_n_max": round(max(ratios), 4),
        "max_flows": max(t.flow_count for pt in sim.periods for t in pt.seeds),
    }


def execute_run(sc: Scenario, out: Path) -> RunManifest:
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(sc.digest(), __version__, sc.rng_seed, _now(), config=sc.raw)
    manifest.write(out / "manifest.json")
    sim = simulate(sc)
    reports = run(sc, sim, keep_readbacks=True)
    manifest.outputs = write_run_outputs(sc, sim, reports, out)
    manifest.seed_stats = seed_stats(sim)
    manifest.end_time = _now()
    manifest.status = "complete"
    manifest.write(out / "manifest.json")
    return manifest


# ---------------------------------------------------------------------------
# sweep


def _sweep_cell(raw: dict, seed: int, memories: list[int], schemes: list[str]) -> list[dict]:
    from .scenario import from_dict

    sc = from_dict(raw).with_overrides(rng_seed=seed)
    sim = simulate(sc)
    rows = []
    for scheme in schemes:
        for mem in memories:
            for r in measure(sim, scheme, mem):
                row = report_row(sc, r, sim.periods[r.period].prediction_misses)
                row["seed"] = seed
                rows.append(row)
    return rows


def execute_sweep(sc: Scenario, out: Path, memories: list[int], seeds: list[int], workers: int = 1) -> list[dict]:
    """Run the memory x seed x scheme cross product; resumable per seed."""
    if not memories or not seeds:
        raise ConfigError("sweep needs non-empty --memory and --seeds lists")
    out.mkdir(parents=True, exist_ok=True)
    cells_dir = out / "cells"
    cells_dir.mkdir(exist_ok=True)
    mpath = out / "manifest.json"
    key = {"scenario_hash": sc.digest(), "memories": memories, "schemes": list(sc.schemes)}
    done: dict[str, str] = {}
    if mpath.exists():
        old = json.loads(mpath.read_text())
        if {k: old.get(k) for k in key} == key:
            done = {c: f for c, f in old.get("cells", {}).items() if (out / f).exists()}
    manifest = {
        **key, "tool_version": __version__, "seeds": seeds, "start_time": _now(),
        "end_time": None, "cells": done, "outputs": [],
    }

    def save():
        tmp = mpath.with_suffix(".tmp")
        tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, mpath)

    save()
    todo = [s for s in seeds if f"seed={s}" not in done]
    cols = REPORT_COLUMNS + ("seed",)

    def finish(seed, rows):
        rel = f"cells/seed-{seed}.csv"
        with open(out / rel, "w", newline="") as fh:
            write_rows_csv(rows, fh, cols)
        manifest["cells"][f"seed={seed}"] = rel
        save()
        log.info("sweep cell seed=%d done (%d rows)", seed, len(rows))

    args = (sc.raw, memories, list(sc.schemes))
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {s: pool.submit(_sweep_cell, args[0], s, args[1], args[2]) for s in todo}
            for s in todo:
                finish(s, futures[s].result())
    else:
        for s in todo:
            finish(s, _sweep_cell(args[0], s, args[1], args[2]))

    rows = []
    for s in seeds:
        rel = manifest["cells"].get(f"seed={s}")
        if rel is None:
            raise MissingGridPoint(f"no results for seed {s}")
        with open(out / rel, newline="") as fh:
            rows.extend(read_rows_csv(fh))
    table = sweep(rows, memories, list(sc.schemes))
    with open(out / "sweep.csv", "w", newline="") as fh:
        write_rows_csv(table, fh, SWEEP_COLUMNS)
    manifest["outputs"] = sorted(manifest["cells"].values()) + ["sweep.csv"]
    manifest["end_time"] = _now()
    save()
    return table


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="countingstars", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", required=True, help="scenario YAML or a reference config name")
        if out:
            sp.add_argument("--out", required=True, type=Path, help="output directory")
        sp.add_argument("--schemes", type=_scheme_list, help=f"comma list from {','.join(SCHEMES)}")
        sp.add_argument("--epoch-s", type=float, dest="epoch_s")
        sp.add_argument("--seed-period", type=float, dest="seed_period", help="seconds per seed/measurement period")

    common(sub.add_parser("validate", help="check a scenario without running it"), out=False)
    r = sub.add_parser("run", help="run one scenario")
    common(r)
    r.add_argument("--memory", type=_int_list, help="per-satellite budget in bytes (all schemes)")
    r.add_argument("--seeds", type=_int_list, help="rng seed override")
    s = sub.add_parser("sweep", help="memory x seed x scheme cross product")
    common(s)
    s.add_argument("--memory", type=_int_list, required=True, help="comma list of budgets in bytes")
    s.add_argument("--seeds", type=_int_list, required=True, help="comma list of rng seeds")
    s.add_argument("--workers", type=int, default=min(4, os.cpu_count() or 1))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        sc = load_with_overrides(args)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"ok: {sc.name} ({sc.constellation.total} satellites, {sc.n_periods} periods, schemes {','.join(sc.schemes)})")
        return EXIT_OK
    try:
        if args.command == "run":
            m = execute_run(sc, args.out)
            print(f"wrote {len(m.outputs)} files to {args.out}")
        else:
            table = execute_sweep(sc, args.out, args.memory, args.seeds, max(1, args.workers))
            print(f"wrote {len(table)} sweep rows to {args.out / 'sweep.csv'}")
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    except CountingStarsError as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
