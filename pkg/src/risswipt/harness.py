"""Config loading, single runs, Monte-Carlo sweeps and the command-line entry point.

Config files are UTF-8 ``key = value`` lines; ``#`` starts a comment. Keys
ending in ``_db``/``_dbm`` are converted to linear units (mW for dBm) when
loaded. See ``configs/reference.cfg`` for the full key list.
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .channels import GeometryConfig, sample_channels
from .model import ReflectionModel, SystemConfig
from .optimizer import SolveOptions, SolveResult, no_ris_baseline, penalty_solve, random_phase_baseline
from .surrogate import ScaOptions

COLUMNS = (
    "param", "value", "drop", "seed", "method", "sum_rate_bpshz", "rate_ph", "harvested_power_mw_total",
    "objective", "inner_iters", "outer_stages", "c4_violation", "max_residual", "wall_ms", "status",
)
AGG_COLUMNS = (
    "param", "value", "method", "rows", "infeasible", "mean_sum_rate_bpshz", "mean_rate_ph",
    "mean_harvested_power_mw_total", "mean_objective",
)
METHODS = ("full", "no_ris", "random_phase")
PARAMS = ("n_ris", "lambda_bar", "f_min", "k_users")
AXIS_LABELS = {
    "n_ris": "Number of RIS elements N",
    "lambda_bar": "Combining weight lambda",
    "f_min": "Minimum reflection amplitude f_min",
    "k_users": "Number of UEs K",
}


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


# key -> (section, field, converter)
_KEYS = {
    "M": ("system", "M", int),
    "K": ("system", "K", int),
    "N": ("system", "N", int),
    "p_t_dbm": ("system", "P_T", lambda s: dbm_to_mw(float(s))),
    "sigma2_dbm": ("system", "sigma2", lambda s: dbm_to_mw(float(s))),
    "delta2_dbm": ("system", "delta2", lambda s: dbm_to_mw(float(s))),
    "gamma_min_db": ("system", "gamma_min", lambda s: db_to_linear(float(s))),
    "p_min_mw": ("system", "p_min", float),
    "eta": ("system", "eta", float),
    "xi": ("system", "xi", float),
    "lambda_bar": ("system", "lambda_bar", float),
    "f_min": ("reflection", "f_min", float),
    "alpha": ("reflection", "alpha", float),
    "phi_over_pi": ("reflection", "phi", lambda s: float(s) * math.pi),
    "bs_x": ("geometry", "bs_x", float),
    "bs_y": ("geometry", "bs_y", float),
    "ris_x": ("geometry", "ris_x", float),
    "ris_y": ("geometry", "ris_y", float),
    "ue_x": ("geometry", "ue_x", float),
    "ue_y": ("geometry", "ue_y", float),
    "ue_radius": ("geometry", "ue_radius", float),
    "pathloss_ris": ("geometry", "pathloss_ris", float),
    "pathloss_direct": ("geometry", "pathloss_direct", float),
    "c0_db": ("geometry", "c0_db", float),
    "d0": ("geometry", "d0", float),
    "rician_eps_db": ("geometry", "rician_eps_db", float),
    "d_over_lambda": ("geometry", "d_over_lambda", float),
    "angles": ("geometry", "angles", str),
    "gamma0": ("solver", "gamma0", float),
    "gamma_factor": ("solver", "gamma_factor", float),
    "gamma_max": ("solver", "gamma_max", float),
    "inner_tol": ("solver", "inner_tol", float),
    "inner_cap": ("solver", "inner_cap", int),
    "c4_tol": ("solver", "c4_tol", float),
    "ramp_stages": ("solver", "ramp_stages", int),
    "ramp_inner_cap": ("solver", "ramp_inner_cap", int),
    "audit_tol": ("solver", "audit_tol", float),
    "sca_max_iter": ("sca", "max_iter", int),
    "sca_tol": ("sca", "tol", float),
    "qcqp_tol": ("sca", "qcqp_tol", float),
}
REQUIRED = ("M", "K", "N", "p_t_dbm", "sigma2_dbm", "gamma_min_db")


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig
    geometry: GeometryConfig
    solver: SolveOptions

    def __iter__(self):
        return iter((self.system, self.geometry, self.solver))


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    values: dict[str, tuple[object, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = (_KEYS[key][2](val), lineno)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: cannot parse value {val!r} for {key!r}") from None
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"{source}: missing required key(s): {', '.join(missing)}")

    sections: dict[str, dict] = {"system": {}, "reflection": {}, "geometry": {}, "solver": {}, "sca": {}}
    for key, (val, _) in values.items():
        section, name, _ = _KEYS[key]
        sections[section][name] = val
    geo = sections["geometry"]
    for point in ("bs", "ris", "ue"):
        xy = (geo.pop(f"{point}_x", None), geo.pop(f"{point}_y", None))
        if xy != (None, None):
            name = "ue_center" if point == "ue" else f"{point}_pos"
            default = getattr(GeometryConfig(), name)
            geo[name] = tuple(d if v is None else v for v, d in zip(xy, default))
    try:
        reflection = ReflectionModel(**sections["reflection"])
        system = SystemConfig(reflection=reflection, **sections["system"])
        geometry = GeometryConfig(**geo)
        sca = ScaOptions(**sections["sca"])
        solver = SolveOptions(sca_w=sca, sca_v=sca, **sections["solver"])
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return RunConfig(system, geometry, solver)


def load_config(path) -> RunConfig:
    """Read a config file; returns ``(SystemConfig, GeometryConfig, SolveOptions)`` (unpackable)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, str(path))


# --------------------------------------------------------------------------- runs


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple
    drops: int
    master_seed: int

    def __post_init__(self):
        if self.parameter not in PARAMS:
            raise ValueError(f"parameter must be one of {PARAMS}, got {self.parameter!r}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if list(self.values) != sorted(self.values):
            raise ValueError("sweep values must be sorted")
        if self.drops < 1:
            raise ValueError("drops must be >= 1")


def apply_parameter(cfg: RunConfig, parameter: str, value) -> RunConfig:
    sys_cfg = cfg.system
    if parameter == "n_ris":
        sys_cfg = sys_cfg.with_(N=int(value))
    elif parameter == "k_users":
        sys_cfg = sys_cfg.with_(K=int(value))
    elif parameter == "lambda_bar":
        sys_cfg = sys_cfg.with_(lambda_bar=float(value))
    elif parameter == "f_min":
        sys_cfg = sys_cfg.with_(reflection=replace(sys_cfg.reflection, f_min=float(value)))
    else:
        raise ValueError(f"unknown sweep parameter {parameter!r}")
    return replace(cfg, system=sys_cfg)


def drop_seed(master_seed: int, parameter: str, drop: int) -> int:
    """64-bit seed for one drop; independent of the swept value, so values share channel draws."""
    ss = np.random.SeedSequence([int(master_seed), PARAMS.index(parameter), int(drop)])
    return int(ss.generate_state(1, np.uint64)[0])


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def result_row(res: SolveResult, method: str, timing: bool) -> dict:
    m = res.metrics
    return {
        "method": method,
        "sum_rate_bpshz": m.rate_id,
        "rate_ph": m.rate_ph,
        "harvested_power_mw_total": float(np.sum(m.p_harv)),
        "objective": m.objective,
        "inner_iters": res.trace.inner_iters,
        "outer_stages": res.trace.outer_stages,
        "c4_violation": m.c4_violation,
        "max_residual": res.trace.max_residual,
        "wall_ms": round(res.trace.wall_ms, 3) if timing else "",
        "status": res.trace.status,
    }


def run_single(config: RunConfig, seed: int, methods=METHODS, timing: bool = False) -> list[dict]:
    """Sample one channel realization and solve it with each method; one row per method."""
    cfg, geo, opts = config
    s_chan, s_init = np.random.SeedSequence(int(seed)).spawn(2)
    ch = sample_channels(cfg, geo, s_chan)
    rows = []
    for method in methods:
        if method == "full":
            res = penalty_solve(cfg, ch, opts, np.random.default_rng(s_init))
        elif method == "random_phase":
            # same starting phases as the full solve
            res = random_phase_baseline(cfg, ch, opts, np.random.default_rng(s_init))
        elif method == "no_ris":
            res = no_ris_baseline(cfg, ch, opts)
        else:
            raise ValueError(f"unknown method {method!r}")
        rows.append({"seed": int(seed), **result_row(res, method, timing)})
    return rows


def _cell(args):
    config, parameter, value, drop, seed, methods, timing = args
    rows = run_single(apply_parameter(config, parameter, value), seed, methods, timing)
    return [{"param": parameter, "value": value, "drop": drop, **r} for r in rows]


def default_workers() -> int:
    return os.cpu_count() or 1


def aggregate(rows: list[dict]) -> list[dict]:
    """Per (value, method) means over rows whose status is not ``infeasible``."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["param"], r["value"], r["method"]), []).append(r)
    out = []
    for (param, value, method), grp in groups.items():
        ok = [r for r in grp if r["status"] != "infeasible"]

        def mean(col):
            return math.fsum(float(r[col]) for r in ok) / len(ok) if ok else float("nan")

        out.append({
            "param": param, "value": value, "method": method, "rows": len(grp),
            "infeasible": len(grp) - len(ok),
            "mean_sum_rate_bpshz": mean("sum_rate_bpshz"),
            "mean_rate_ph": mean("rate_ph"),
            "mean_harvested_power_mw_total": mean("harvested_power_mw_total"),
            "mean_objective": mean("objective"),
        })
    return out


def write_csv(path: Path, rows: list[dict], columns) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(columns)
        for r in rows:
            writer.writerow([_fmt(r.get(c, "")) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def plot_script(parameter: str, methods, data_file: str = "aggregate.csv") -> str:
    """gnuplot script drawing mean sum rate and mean harvested power against the swept value."""
    cols = {c: i + 1 for i, c in enumerate(AGG_COLUMNS)}
    lines = [
        "# generated; run with: gnuplot plot.gp",
        "set datafile separator ','",
        "set terminal pngcairo size 1100,450",
        f"set output '{parameter}.png'",
        "set key top left",
        "set grid",
        "set multiplot layout 1,2",
        f"set xlabel '{AXIS_LABELS[parameter]}'",
    ]
    for ylabel, col in (("Sum rate (bps/Hz)", "mean_sum_rate_bpshz"),
                        ("Harvested power (mW)", "mean_harvested_power_mw_total")):
        lines.append(f"set ylabel '{ylabel}'")
        plots = [
            f"'{data_file}' using {cols['value']}:(strcol({cols['method']}) eq '{m}' ? ${cols[col]} : 1/0) "
            f"every ::1 with linespoints title '{m}'"
            for m in methods
        ]
        lines.append("plot " + ", \\\n     ".join(plots))
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


def run_sweep(config: RunConfig, sweep: SweepSpec, out_dir, methods=METHODS, workers: int | None = None,
              timing: bool = False) -> Path:
    """Run every (value, drop) cell; writes ``sweep.csv``, ``aggregate.csv`` and ``plot.gp`` into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from None
    tasks = [
        (config, sweep.parameter, value, drop, drop_seed(sweep.master_seed, sweep.parameter, drop), tuple(methods),
         timing)
        for value in sweep.values for drop in range(sweep.drops)
    ]
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell, tasks))
    else:
        results = [_cell(t) for t in tasks]
    rows = [r for cell in results for r in cell]
    path = out / "sweep.csv"
    write_csv(path, rows, COLUMNS)
    write_csv(out / "aggregate.csv", aggregate(rows), AGG_COLUMNS)
    (out / "plot.gp").write_text(plot_script(sweep.parameter, methods), encoding="utf-8")
    return path


# --------------------------------------------------------------------------- CLI


def _value_list(text: str) -> tuple:
    try:
        return tuple(float(v) if any(c in v for c in ".eE") else int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="risswipt", description="RIS-aided SWIPT joint design simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int, required=True)
        sp.add_argument("--out", required=True)
        sp.add_argument("--timing", action="store_true", help="fill the wall_ms column (breaks byte-identical reruns)")

    common(sub.add_parser("run", help="one drop, all methods"))
    sw = sub.add_parser("sweep", help="Monte-Carlo sweep over one parameter")
    common(sw)
    sw.add_argument("--param", required=True, choices=PARAMS)
    sw.add_argument("--values", required=True, type=_value_list)
    sw.add_argument("--drops", required=True, type=int)
    sw.add_argument("--workers", type=int, default=None)
    bl = sub.add_parser("baseline", help="one drop, one baseline")
    common(bl)
    bl.add_argument("--mode", required=True, choices=("no-ris", "random-phase"))
    return p


def _single_rows(rows):
    return [{"param": "", "value": "", "drop": 0, **r} for r in rows]


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        config = load_config(args.config)
        if args.command == "sweep":
            spec = SweepSpec(args.param, args.values, args.drops, args.seed)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    try:
        if args.command == "sweep":
            path = run_sweep(config, spec, out, workers=args.workers, timing=args.timing)
            rows = read_csv(path)
        else:
            methods = METHODS if args.command == "run" else (args.mode.replace("-", "_"),)
            rows = _single_rows(run_single(config, args.seed, methods, args.timing))
            out.mkdir(parents=True, exist_ok=True)
            path = out / "results.csv"
            write_csv(path, rows, COLUMNS)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 2 if any(r["status"] != "converged" for r in rows) else 0


if __name__ == "__main__":
    sys.exit(main())
