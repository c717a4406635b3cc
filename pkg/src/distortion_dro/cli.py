"""Command-line entry point: JSON experiment configs in, CSV / Markdown files out.

    distortion-dro envelope --config tk.json --out out/
    distortion-dro table --config t3.json --out out/ --seed 7 --format md

Every subcommand reads one JSON object; unknown fields are rejected.  Numeric
CSV cells carry 6 significant digits.  Wall times go to a separate
``*_timing.csv`` so the main outputs are byte-identical across reruns.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import distortion as dist
from . import quantile as qm
from .envelope import concave_envelope, convex_envelope, tk_tangency
from .moments import MomentConstraint, bound_report
from .oracle import concentration_identity, random_discrete, random_distortion
from .portfolio import SearchParams
from .rearrange import RAParams
from .tables import MARGINAL_ROWS_TK, MARGINAL_ROWS_VAR, PrefRobustSettings, build_table, marginal_row

COMMON = {"command", "format", "tolerances"}
SCHEMA = {
    "envelope": {"h", "samples"},
    "bound": {"h", "p", "m", "v"},
    "concentrate": {"model", "intervals", "levels", "samples"},
    "oracle": {"h", "model", "random"},
    "table": {"table", "ra", "search", "pref", "normal_param", "rows", "convex_grid"},
}
REQUIRED = {
    "envelope": {"h"},
    "bound": {"h", "p", "m", "v"},
    "concentrate": {"model", "intervals"},
    "oracle": set(),
    "table": {"table"},
}
RA_FIELDS = {"N", "eps", "max_sweeps", "seed", "body_top"}
SEARCH_FIELDS = {"starts", "seed", "search_N", "maxfev", "polish"}
PREF_FIELDS = {"gamma_range", "penalty_offset", "grid"}


class ConfigError(ValueError):
    pass


def validate(command: str, cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    allowed = SCHEMA[command] | COMMON
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown field(s) for {command!r}: {', '.join(sorted(unknown))}")
    missing = REQUIRED[command] - set(cfg)
    if missing:
        raise ConfigError(f"missing field(s) for {command!r}: {', '.join(sorted(missing))}")
    if cfg.get("command", command) != command:
        raise ConfigError(f"config is for {cfg['command']!r}, not {command!r}")
    for key, fields in (("ra", RA_FIELDS), ("search", SEARCH_FIELDS), ("pref", PREF_FIELDS)):
        extra = set(cfg.get(key, {})) - fields
        if extra:
            raise ConfigError(f"unknown field(s) in {key!r}: {', '.join(sorted(extra))}")
    if command == "table" and cfg["table"] not in (1, 2, 3, 4, 5, 6):
        raise ConfigError("table must be an integer 1-6")
    return cfg


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, np.ndarray) and x.ndim == 0:
        x = x.item()
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        s = f"{x:.6g}"
        return "0" if s == "-0" else s
    if isinstance(x, (list, tuple, np.ndarray)):
        return "(" + " ".join(fmt(v) for v in x) + ")"
    return str(x)


def to_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def to_markdown(rows: list[dict], columns: list[str]) -> str:
    lines = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
    for r in rows:
        lines.append("| " + " | ".join(fmt(r.get(c)) for c in columns) + " |")
    return "\n".join(lines) + "\n"


def write_rows(out: Path, stem: str, rows: list[dict], columns: list[str], form: str) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{stem}.csv"]
    paths[0].write_text(to_csv(rows, columns))
    if form == "md":
        paths.append(out / f"{stem}.md")
        paths[1].write_text(to_markdown(rows, columns))
    return paths


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_envelope(cfg: dict, out: Path, form: str, **_) -> bool:
    h = dist.from_dict(cfg["h"])
    upper, lower = concave_envelope(h), convex_envelope(h)
    info = upper.to_dict()
    summary = [
        {"quantity": "divergence_interval", "a": a, "b": b} for a, b in upper.divergence
    ] + [{"quantity": "I_h", "a": a, "b": b} for a, b in upper.reflected]
    if cfg["h"].get("kind") == "tk":
        summary.append({"quantity": "t0", "a": tk_tangency(cfg["h"]["gamma"]), "b": None})
    write_rows(out, "envelope_summary", summary, ["quantity", "a", "b"], form)
    knots = [{"t": t, "h_star": v, "linear_after": f} for t, v, f in zip(info["knots"], info["values"], info["linear"] + [None])]
    write_rows(out, "envelope_knots", knots, ["t", "h_star", "linear_after"], form)
    h_hat = dist.usc_modification(h)
    t = np.linspace(0.0, 1.0, int(cfg.get("samples", 201)))
    samples = [
        {"t": x, "h": h(x), "h_hat": h_hat(x), "h_star": upper.envelope(x), "h_lower": lower.envelope(x)} for x in t
    ]
    write_rows(out, "envelope_samples", samples, ["t", "h", "h_hat", "h_star", "h_lower"], form)
    return True


def cmd_bound(cfg: dict, out: Path, form: str, **_) -> bool:
    h = dist.from_dict(cfg["h"])
    rep = bound_report(h, MomentConstraint(float(cfg["p"]), float(cfg["m"]), float(cfg["v"])))
    cols = ["p", "m", "v", "value_sup", "value_inf", "attained_sup", "attained_inf"]
    write_rows(out, "bound", [rep], cols, form)
    for side in ("sup", "inf"):
        pts = [{"u": u, "quantile": x} for u, x in rep[f"extremal_quantile_{side}"]]
        write_rows(out, f"extremal_quantile_{side}", pts, ["u", "quantile"], form)
    return True


def cmd_concentrate(cfg: dict, out: Path, form: str, **_) -> bool:
    F = qm.from_dict(cfg["model"])
    I = qm.IntervalSet(tuple(tuple(float(x) for x in c) for c in cfg["intervals"]))
    G = qm.concentrate_multi(F, I)
    if "levels" in cfg:
        u = np.asarray(cfg["levels"], dtype=float)
    else:
        k = int(cfg.get("samples", 199))
        u = (np.arange(k) + 1.0) / (k + 1.0)
    rows = [{"u": x, "quantile": F.quantile(x), "concentrated": G.quantile(x)} for x in u]
    write_rows(out, "concentrate", rows, ["u", "quantile", "concentrated"], form)
    write_rows(out, "concentrate_summary", [{"mean": F.mean, "mean_concentrated": G.mean}], ["mean", "mean_concentrated"], form)
    return True


def cmd_oracle(cfg: dict, out: Path, form: str, seed: int | None = None, **_) -> bool:
    rows = []
    seed = 0 if seed is None else seed
    if "random" in cfg:
        rng = np.random.default_rng(seed)
        for i in range(int(cfg["random"])):
            h, F = random_distortion(rng), random_discrete(rng)
            lhs, rhs = concentration_identity(h, F)
            rows.append({"case": i, "rho_h_star": lhs, "rho_h_hat_concentrated": rhs, "abs_diff": abs(lhs - rhs)})
    if "h" in cfg or "model" in cfg:
        if not ("h" in cfg and "model" in cfg):
            raise ConfigError("oracle needs both 'h' and 'model' (or 'random')")
        lhs, rhs = concentration_identity(dist.from_dict(cfg["h"]), qm.from_dict(cfg["model"]))
        rows.append({"case": len(rows), "rho_h_star": lhs, "rho_h_hat_concentrated": rhs, "abs_diff": abs(lhs - rhs)})
    if not rows:
        raise ConfigError("oracle needs 'h' and 'model', or 'random'")
    write_rows(out, "oracle", rows, ["case", "rho_h_star", "rho_h_hat_concentrated", "abs_diff"], form)
    return True


TABLE_COLUMNS = {
    1: ["n", "Sigma", "a_star", "D", "status"],
    2: ["n", "c", "mu", "Sigma", "a_star", "gamma_hat", "V", "status"],
    3: ["family", "n", "c", "V_VaR", "V_ES", "n_delta_a", "delta_V", "delta_V_rel_pct", "a_star_lb", "a_star_convex", "status"],
    5: ["family", "n", "c", "V_h", "V_h*", "n_delta_a", "delta_V", "delta_V_rel_pct", "a_star_lb", "a_star_convex", "status"],
}
TABLE_COLUMNS[4], TABLE_COLUMNS[6] = TABLE_COLUMNS[3], TABLE_COLUMNS[5]
TIME_COLUMNS = {1: ["time"], 2: ["time"], 3: ["time_lb", "time_convex"]}
TIME_COLUMNS[4] = TIME_COLUMNS[5] = TIME_COLUMNS[6] = TIME_COLUMNS[3]


def cmd_table(cfg: dict, out: Path, form: str, seed: int | None = None, threads: int = 1, **_) -> bool:
    tid = int(cfg["table"])
    ra_cfg, search_cfg = dict(cfg.get("ra", {})), dict(cfg.get("search", {}))
    if seed is not None:
        ra_cfg["seed"] = search_cfg["seed"] = seed
    ra, search = RAParams(**ra_cfg), SearchParams(**search_cfg)
    pref_cfg = dict(cfg.get("pref", {}))
    if "gamma_range" in pref_cfg:
        pref_cfg["gamma_range"] = tuple(pref_cfg["gamma_range"])
    normal_param = cfg.get("normal_param", "variance")
    convex_grid = cfg.get("convex_grid")
    if tid in (3, 4, 5, 6) and threads > 1:
        spec = MARGINAL_ROWS_VAR if tid in (3, 4) else MARGINAL_ROWS_TK
        idx = cfg.get("rows", range(len(spec)))
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(marginal_row, tid, *spec[i], ra, search, normal_param, convex_grid) for i in idx]
            rows = [f.result() for f in futures]  # ordered merge
    else:
        rows = build_table(
            tid,
            pref=PrefRobustSettings(**pref_cfg),
            ra_params=ra,
            search=search,
            normal_param=normal_param,
            rows=cfg.get("rows"),
            convex_grid=convex_grid,
        )
    write_rows(out, f"table{tid}", rows, TABLE_COLUMNS[tid], form)
    timing = [{k: r.get(k) for k in ["n", "c", "family"] + TIME_COLUMNS[tid]} for r in rows]
    write_rows(out, f"table{tid}_timing", timing, [c for c in ("family", "n", "c") if c in rows[0]] + TIME_COLUMNS[tid], "csv")
    return all(r.get("status") == "ok" for r in rows)


COMMANDS = {
    "envelope": cmd_envelope,
    "bound": cmd_bound,
    "concentrate": cmd_concentrate,
    "oracle": cmd_oracle,
    "table": cmd_table,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="distortion-dro", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="seed for random starts and RA shuffles")
    p.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    p.add_argument("--format", choices=("csv", "md"), default=None, help="md also writes a Markdown table")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("seed must be non-negative")
        cfg = json.loads(Path(args.config).read_text())
        validate(args.command, cfg)
        form = args.format or cfg.get("format", "csv")
        if form not in ("csv", "md"):
            raise ConfigError("format must be 'csv' or 'md'")
        ok = COMMANDS[args.command](
            cfg, Path(args.out), form, seed=args.seed, threads=max(1, args.threads)
        )
    except (ConfigError, json.JSONDecodeError, KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not ok:
        print("warning: some rows did not complete; see the status column", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
