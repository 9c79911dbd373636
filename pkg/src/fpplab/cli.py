"""Experiment runner: ``fpp-lab <experiment> [flags]`` and ``fpp-lab emit-plot``.

Each run writes ``results.csv`` (one raw row per replicate and parameter),
``summary.json`` and ``manifest.json`` into its output directory. Results
depend only on the config minus ``workers`` and ``out``; that reduced config
is what ``config_hash`` identifies.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__, stats
from . import estimators as est
from .bridges import check_invariants, find_broken_bridges
from .geodesics import RegionCertificationError, auto_region, auto_time
from .oriented import NEG_INF, right_edges
from .pool import ordered_map, resolve_workers
from .weights import Configuration, delta3_of, derive_seed, parse_distribution, threshold_z

EXPERIMENTS = ("geodesic", "bridge-stats", "right-edge", "variance-scan", "shape", "theorem1")
PLOT_KINDS = ("variance", "right-edge", "shape", "census")
OUTPUT_FILES = ("results.csv", "summary.json", "manifest.json")

EXIT_OK, EXIT_INVALID, EXIT_UNCERTIFIED = 0, 2, 3


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------ config


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    dist: str = "two_point(p=0.8, b=3.0)"
    direction: str = "axis"
    n: tuple = (100,)
    m: tuple = ()
    M: int = 3
    z: float | None = None
    delta: float | None = None
    N: float | None = None
    t: float = 60.0
    angles: int = 17
    reps: int = 100
    seed: int = 0
    workers: int = 1
    out: str = ""

    # keys that cannot change a result
    NON_RESULT = ("workers", "out")

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_fmt_value(getattr(self, f.name))}\n" for f in fields(self))

    def result_text(self) -> str:
        return "".join(f"{f.name} = {_fmt_value(getattr(self, f.name))}\n" for f in fields(self)
                       if f.name not in self.NON_RESULT)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.result_text().encode()).hexdigest()

    @classmethod
    def from_text(cls, text: str, base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        kv = parse_kv(text)
        if base is None:
            if "kind" not in kv:
                raise ConfigError("config file has no 'kind'")
            base = default_config(kv["kind"])
        return base.override(kv)

    def override(self, kv: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(self)}
        upd = {}
        for k, v in kv.items():
            if k not in known:
                raise ConfigError(f"unknown config key {k!r}")
            upd[k] = _coerce(k, v)
        if "kind" in upd and upd["kind"] != self.kind:
            # switching experiment: start again from that experiment's defaults
            return default_config(upd["kind"]).override({k: v for k, v in kv.items() if k != "kind"})
        return dataclasses.replace(self, **upd)


_INT_TUPLES = ("n", "m")
_INTS = ("M", "angles", "reps", "seed", "workers")
_FLOATS = ("t",)
_OPT_FLOATS = ("z", "delta", "N")


def _fmt_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(key, v):
    if not isinstance(v, str):
        return tuple(int(x) for x in v) if key in _INT_TUPLES else v
    v = v.strip()
    try:
        if key in _INT_TUPLES:
            return tuple(int(x) for x in v.split(",") if x.strip())
        if key in _INTS:
            return int(v)
        if key in _FLOATS:
            return float(v)
        if key in _OPT_FLOATS:
            return float(v) if v else None
    except ValueError:
        raise ConfigError(f"bad value for {key}: {v!r}") from None
    if key == "dist":
        try:
            return parse_distribution(v).to_text()
        except ValueError as e:
            raise ConfigError(f"bad distribution {v!r}: {e}") from None
    return v


def parse_kv(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


_DEFAULTS = {
    "geodesic": dict(n=(100,)),
    "bridge-stats": dict(n=(200,), M=3),
    "right-edge": dict(n=(100, 200, 400)),
    "variance-scan": dict(n=(32, 64, 128, 256), reps=400),
    "shape": dict(t=60.0, angles=17, reps=50),
    "theorem1": dict(n=(200,), m=(60, 80, 100), M=3),
}


def default_config(kind: str) -> ExperimentConfig:
    if kind not in _DEFAULTS:
        raise ConfigError(f"unknown experiment {kind!r}; expected one of {', '.join(EXPERIMENTS)}")
    return ExperimentConfig(kind=kind, **_DEFAULTS[kind])


def load_config_file(path) -> ExperimentConfig:
    """A ``key = value`` file, or a run manifest (its embedded config is used)."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        text = json.loads(text)["config"]
    return ExperimentConfig.from_text(text)


def spec_of(cfg: ExperimentConfig):
    return parse_distribution(cfg.dist)


def resolve_z(cfg: ExperimentConfig) -> float:
    if cfg.z is not None:
        return cfg.z
    return threshold_z(spec_of(cfg), delta3_of(cfg.delta, cfg.M, cfg.N))


def validate(cfg: ExperimentConfig) -> None:
    """Check every precondition up front; raise ConfigError naming the first violation."""
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.kind in EXPERIMENTS, f"unknown experiment {cfg.kind!r}")
    spec_of(cfg)
    need(cfg.reps >= 1, "reps must be >= 1")
    need(0 <= cfg.seed < 2**64, "seed must be a 64-bit unsigned integer")
    need(cfg.workers >= 1, "workers must be >= 1")
    if cfg.kind != "shape":
        need(len(cfg.n) > 0, "n must list at least one value")
        need(all(n >= 1 for n in cfg.n), f"n must be >= 1 (got {','.join(map(str, cfg.n))})")
        need(all(b > a for a, b in zip(cfg.n, cfg.n[1:])), "n list must be strictly increasing")
    if cfg.kind in ("geodesic", "bridge-stats", "variance-scan"):
        try:
            est.parse_direction(cfg.direction)
        except ValueError as e:
            raise ConfigError(str(e)) from None
    if cfg.kind == "bridge-stats":
        need(cfg.M >= 1, "M must be >= 1")
    if cfg.kind == "variance-scan":
        need(cfg.reps >= 200, "variance-scan needs reps >= 200")
        need(len(cfg.n) >= 2, "variance-scan needs at least two values of n")
    if cfg.kind == "shape":
        need(cfg.t >= 30, "shape needs t >= 30")
        need(cfg.angles >= 2, "shape needs angles >= 2")
        need(cfg.reps >= 2, "shape needs reps >= 2")
    if cfg.kind == "theorem1":
        need(len(cfg.n) == 1, "theorem1 takes a single n")
        need(cfg.n[0] >= 2, "theorem1 needs n >= 2")
        need(len(cfg.m) > 0 and min(cfg.m) >= 1, "theorem1 needs m >= 1")
        need(max(cfg.m) <= cfg.n[0], "theorem1 needs m <= n (the census box must reach the path end)")
        need(cfg.M >= 1, "M must be >= 1")
        need(cfg.reps >= 3, "theorem1 needs reps >= 3")
        if cfg.z is None:
            need(cfg.delta is not None and cfg.N is not None, "theorem1 needs z, or delta and N")
            try:
                resolve_z(cfg)
            except (ValueError, ArithmeticError) as e:
                raise ConfigError(f"cannot derive z: {e}") from None
        need(resolve_z(cfg) > 1, "z must exceed 1")


# ------------------------------------------------------------ per-replicate rows


def _fmt_cell(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v == NEG_INF:
            return "-inf"
        return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)
    return str(v)


COLUMNS = {
    "geodesic": ["rep", "n", "target_x", "target_y", "time", "n_edges", "n_one_edges", "boundary_margin"],
    "bridge-stats": ["rep", "n", "M", "n_bridges", "max_loop_vertices", "mean_loop_vertices", "invariants_ok"],
    "right-edge": ["rep", "n", "r"],
    "variance-scan": ["rep", "n", "time"],
    "shape": ["rep", "angle_index", "theta", "x", "y", "time"],
    "theorem1": ["rep", "m", "count", "count_z", "r_total", "renorm_bound"],
}


def _geodesic_rows(cfg, spec, r):
    rows = []
    for n in cfg.n:
        target = est.directional_target(n, cfg.direction)
        c = Configuration(derive_seed(cfg.seed, "geodesic", est.direction_label(cfg.direction), n), spec, r)
        _, res = auto_region(c, (0, 0), target)
        ones = int((res.path.edge_times(c) == 1.0).sum())
        rows.append([r, n, target[0], target[1], res.time, res.path.n_edges, ones, res.boundary_margin])
    return rows


def _bridge_rows(cfg, spec, r):
    rows = []
    for n in cfg.n:
        target = est.directional_target(n, cfg.direction)
        c = Configuration(derive_seed(cfg.seed, "bridge-stats", est.direction_label(cfg.direction), n), spec, r)
        _, res = auto_region(c, (0, 0), target)
        bbl = find_broken_bridges(res.path, cfg.M)
        loops = [b - a + 1 for a, b in bbl.spans]
        ok = all(check_invariants(bbl, c).values())
        rows.append([r, n, cfg.M, len(bbl), max(loops, default=0),
                     float(np.mean(loops)) if loops else 0.0, ok])
    return rows


def _right_edge_rows(cfg, spec, r):
    tr = right_edges(spec.p, derive_seed(cfg.seed, "right-edge"), [r], max(cfg.n))[0]
    return [[r, n, float(tr[n])] for n in cfg.n]


def _variance_rows(cfg, spec, r):
    rows = []
    for n in cfg.n:
        c = Configuration(est.variance_seed(cfg.seed, cfg.direction, n), spec, r)
        t, _ = auto_time(c, (0, 0), est.directional_target(n, cfg.direction))
        rows.append([r, n, t])
    return rows


def _shape_grid(cfg):
    return est.ShapeGrid.build(cfg.t, cfg.angles)


def _shape_rows(cfg, spec, r):
    grid = _shape_grid(cfg)
    vals = est.shape_replicate(spec, est.shape_seed(cfg.seed, cfg.t), grid, r)
    rows, k = [], 0
    for a, ray in enumerate(grid.rays):
        for q in ray:
            rows.append([r, a, grid.angles[a], q[0], q[1], float(vals[k])])
            k += 1
    return rows


def _theorem1_rows(cfg, spec, r):
    n = cfg.n[0]
    rows = est.census_replicate(spec, est.theorem1_seed(cfg.seed, n), n, cfg.m, cfg.M, resolve_z(cfg), r)
    return [[d["rep"], d["m"], d["count"], d["count_z"], d["r_total"], d["renorm_bound"]] for d in rows]


ROW_FUNCS = {
    "geodesic": _geodesic_rows, "bridge-stats": _bridge_rows, "right-edge": _right_edge_rows,
    "variance-scan": _variance_rows, "shape": _shape_rows, "theorem1": _theorem1_rows,
}


def _task(cfg, r):
    try:
        return ("ok", ROW_FUNCS[cfg.kind](cfg, spec_of(cfg), r))
    except RegionCertificationError as e:
        return ("uncertified", str(e))


# ------------------------------------------------------------ summaries


def _col(rows, cols, name):
    k = cols.index(name)
    return [row[k] for row in rows]


def _by(rows, cols, key, value):
    k, j = cols.index(key), cols.index(value)
    out = {}
    for row in rows:
        out.setdefault(row[k], []).append(row[j])
    return {a: np.array(b, dtype=float) for a, b in out.items()}


def summarize(cfg: ExperimentConfig, rows) -> dict:
    cols = COLUMNS[cfg.kind]
    if not rows:
        return {}
    if cfg.kind == "geodesic":
        per = _by(rows, cols, "n", "time")
        return {"mean_time_over_n": {str(n): stats.mean_ci(x / n, cfg.seed, n).to_record() for n, x in per.items()}}
    if cfg.kind == "bridge-stats":
        per = _by(rows, cols, "n", "n_bridges")
        bad = sum(1 for ok in _col(rows, cols, "invariants_ok") if not ok)
        return {"mean_bridges": {str(n): float(x.mean()) for n, x in per.items()}, "invariant_violations": bad}
    if cfg.kind == "right-edge":
        out = {}
        for n, x in _by(rows, cols, "n", "r").items():
            if np.isinf(x).any():
                out[str(n)] = {"status": "subcritical", "n_neg_inf": int(np.isinf(x).sum())}
            else:
                ci = stats.mean_ci(x / n, cfg.seed, n)
                out[str(n)] = {"status": "supercritical" if ci.ci_low > 0 else "inconclusive", **ci.to_record()}
        return {"r_over_n": out}
    if cfg.kind == "variance-scan":
        per = _by(rows, cols, "n", "time")
        S = np.stack([per[n] for n in cfg.n], axis=1)
        return est.summarize_variance(S, cfg.n, cfg.direction, cfg.seed).to_record()
    if cfg.kind == "shape":
        grid = _shape_grid(cfg)
        T = np.array(_col(rows, cols, "time"), dtype=float).reshape(-1, len(grid.points))
        sh = est.shape_from_samples(grid, T)
        return {"angles": list(grid.angles), "radius": sh.radius.tolist(), "l1_radius": sh.l1_radius.tolist(),
                "reach": [list(q) for q in sh.reach_points], **sh.flat_report()}
    if cfg.kind == "theorem1":
        dicts = [dict(zip(cols, row)) for row in rows]
        n = cfg.n[0]
        rep = est.summarize_census(dicts, n, cfg.m, cfg.M, resolve_z(cfg), est.theorem1_seed(cfg.seed, n),
                                   warns=est.window_warnings(n, cfg.m))
        return rep.to_record()
    raise ConfigError(cfg.kind)


# ------------------------------------------------------------ files


def rows_to_csv(cfg: ExperimentConfig, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config_hash", "master_seed", *COLUMNS[cfg.kind]])
    h = cfg.config_hash
    for row in rows:
        w.writerow([h, cfg.seed, *(_fmt_cell(v) for v in row)])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _sanitize(o):
    # JSON has no infinities; write them as the CSV token
    if isinstance(o, float) and math.isinf(o):
        return "-inf" if o < 0 else "inf"
    if isinstance(o, float) and math.isnan(o):
        return None
    if isinstance(o, dict):
        return {str(k): _sanitize(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_sanitize(v) for v in o]
    return o


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    master_seed: int
    started: str
    finished: str
    files: dict  # name -> sha256
    config: str  # full key = value text

    def to_json(self) -> str:
        return _json(dataclasses.asdict(self))


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def default_out_dir(cfg: ExperimentConfig, root: Path = Path("runs")) -> Path:
    base = root / f"{cfg.kind}-{cfg.config_hash[:12]}"
    k = 1
    while (base / f"run-{k:03d}").exists():
        k += 1
    return base / f"run-{k:03d}"


def _write_new(path: Path, data: str):
    with open(path, "x", newline="\n") as f:
        f.write(data)


@dataclass
class RunOutcome:
    status: int
    out_dir: Path
    message: str = ""


def run(cfg: ExperimentConfig) -> RunOutcome:
    """Validate, execute and write the run's artifacts. Never raises for expected failures."""
    try:
        validate(cfg)
    except (ConfigError, ValueError) as e:
        return RunOutcome(EXIT_INVALID, Path(cfg.out or "."), str(e))
    out = Path(cfg.out) if cfg.out else default_out_dir(cfg)
    clash = [f for f in OUTPUT_FILES if (out / f).exists()] + (["quarantine"] if (out / "quarantine").exists() else [])
    if clash:
        return RunOutcome(EXIT_INVALID, out, f"refusing to overwrite {', '.join(clash)} in {out}")
    started = _now()
    workers = resolve_workers(cfg.workers)
    results = ordered_map(partial(_task, cfg), range(cfg.reps), workers)
    rows = [row for st, payload in results if st == "ok" for row in payload]
    failures = [payload for st, payload in results if st != "ok"]
    target = out / "quarantine" if failures else out
    target.mkdir(parents=True, exist_ok=True)
    csv_text = rows_to_csv(cfg, rows)
    files = {"results.csv": csv_text}
    if failures:
        files["failures.json"] = _json({"config_hash": cfg.config_hash, "master_seed": cfg.seed,
                                        "failures": failures})
    else:
        summary = {"config_hash": cfg.config_hash, "master_seed": cfg.seed, "kind": cfg.kind,
                   "reps": cfg.reps, "summary": _sanitize(summarize(cfg, rows))}
        files["summary.json"] = _json(summary)
    for name, data in files.items():
        _write_new(target / name, data)
    man = RunManifest(cfg.config_hash, __version__, cfg.seed, started, _now(),
                      {k: _sha256(v.encode()) for k, v in files.items()}, cfg.to_text())
    _write_new(target / "manifest.json", man.to_json())
    if failures:
        return RunOutcome(EXIT_UNCERTIFIED, out, f"{len(failures)} replicate(s) failed certification; "
                                                  f"partial output in {target}")
    return RunOutcome(EXIT_OK, out)


# ------------------------------------------------------------ plot data


_PLOT_NEEDS = {
    "variance": ["rep", "n", "time"],
    "right-edge": ["rep", "n", "r"],
    "shape": ["rep", "angle_index", "theta", "x", "y", "time"],
    "census": ["rep", "m", "count", "count_z", "r_total", "renorm_bound"],
}


def emit_plot_data(results_file, plot_kind: str) -> str:
    """Plot-ready CSV with columns ``x, y, ci_low, ci_high``.

    variance: x = log n, y = sample variance (jackknife CI).
    right-edge: x = n, y = mean r_n / n.
    shape: x = angle, y = mean per-replicate l1 reach / t (needs the run's summary for t).
    census: x = m, y = mean z-marked count.
    """
    if plot_kind not in PLOT_KINDS:
        raise ConfigError(f"unknown plot kind {plot_kind!r}; expected one of {', '.join(PLOT_KINDS)}")
    path = Path(results_file)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        body = list(reader)
    if header is None or header[2:] != _PLOT_NEEDS[plot_kind]:
        raise ConfigError(f"{path} does not hold {plot_kind} data")
    cols = header[2:]
    rows = [[_parse_cell(c) for c in row[2:]] for row in body]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "ci_low", "ci_high"])
    for x, ci in _plot_points(plot_kind, cols, rows, path):
        w.writerow([_fmt_cell(float(x)), _fmt_cell(ci.point), _fmt_cell(ci.ci_low), _fmt_cell(ci.ci_high)])
    return buf.getvalue()


def _parse_cell(c: str):
    if c == "-inf":
        return NEG_INF
    try:
        return int(c)
    except ValueError:
        return float(c)


def _plot_points(kind, cols, rows, path):
    if not rows:
        return []
    if kind == "variance":
        per = _by(rows, cols, "n", "time")
        return [(math.log(n), stats.variance_ci(x)) for n, x in sorted(per.items())]
    if kind == "right-edge":
        pts = []
        for n, x in sorted(_by(rows, cols, "n", "r").items()):
            if np.isinf(x).any():
                pts.append((n, stats.EstimateCI(NEG_INF, NEG_INF, NEG_INF, len(x))))
            else:
                pts.append((n, stats.mean_ci(x / n)))
        return pts
    if kind == "census":
        return [(m, stats.mean_ci(x)) for m, x in sorted(_by(rows, cols, "m", "count_z").items())]
    # shape: recover t from the run's manifest next to the results file
    man = path.with_name("manifest.json")
    cfg = ExperimentConfig.from_text(json.loads(man.read_text())["config"])
    grid = _shape_grid(cfg)
    T = np.array([r[cols.index("time")] for r in rows], dtype=float).reshape(-1, len(grid.points))
    sh = est.shape_from_samples(grid, T)
    return [(grid.angles[a], stats.mean_ci(sh.rep_l1[:, a])) for a in range(len(grid.angles))]


# ------------------------------------------------------------ argparse


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fpp-lab", description="First-passage percolation experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENTS:
        p = sub.add_parser(kind)
        p.add_argument("--config", help="key = value file or a previous run's manifest.json")
        p.add_argument("--dist")
        p.add_argument("--direction")
        p.add_argument("--n", help="comma-separated list")
        p.add_argument("--m", help="comma-separated list")
        p.add_argument("--M")
        p.add_argument("--z")
        p.add_argument("--delta")
        p.add_argument("--N")
        p.add_argument("--t")
        p.add_argument("--angles")
        p.add_argument("--reps")
        p.add_argument("--seed")
        p.add_argument("--workers")
        p.add_argument("--out")
        p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    p = sub.add_parser("emit-plot")
    p.add_argument("results")
    p.add_argument("--kind", required=True, choices=PLOT_KINDS)
    p.add_argument("--out")
    return ap


_FLAG_KEYS = ("dist", "direction", "n", "m", "M", "z", "delta", "N", "t", "angles", "reps", "seed",
              "workers", "out")


def config_from_args(args) -> ExperimentConfig:
    cfg = default_config(args.command)
    if args.config:
        filecfg = load_config_file(args.config)
        if filecfg.kind != args.command:
            raise ConfigError(f"config is for {filecfg.kind!r}, not {args.command!r}")
        cfg = filecfg
    flags = {k: getattr(args, k) for k in _FLAG_KEYS if getattr(args, k) is not None}
    return cfg.override(flags)  # flags win over the file


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "emit-plot":
            res = Path(args.results)
            out = Path(args.out) if args.out else res.with_name(f"plot_{args.kind}.csv")
            if out.exists():
                raise ConfigError(f"refusing to overwrite {out}")
            data = emit_plot_data(res, args.kind)
            _write_new(out, data)
            print(out)
            return EXIT_OK
        cfg = config_from_args(args)
    except (ConfigError, OSError) as e:
        print(f"fpp-lab: error: {e}", file=sys.stderr)
        return EXIT_INVALID
    if args.print_config:
        sys.stdout.write(cfg.to_text())
        return EXIT_OK
    outcome = run(cfg)
    if outcome.status == EXIT_INVALID:
        print(f"fpp-lab: error: {outcome.message}", file=sys.stderr)
    elif outcome.status == EXIT_UNCERTIFIED:
        print(f"fpp-lab: certification failure: {outcome.message}", file=sys.stderr)
    else:
        print(outcome.out_dir)
    return outcome.status


if __name__ == "__main__":
    sys.exit(main())
