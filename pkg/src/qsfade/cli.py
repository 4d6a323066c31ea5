"""Command-line runner: ``qsfade <command> --config PATH [--seed N] [--out DIR] [--threads N]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(missing or corrupt input files, unwritable output).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .channels import CorrelationMatrix, estimate_correlation, gaussianity_pvalues
from .code import EnumerationLimitError, ErrorSet, enumerate_error_set, free_distance
from .config import (ConfigError, ExperimentConfig, config_hash, dump_config, load_config, make_code,
                     make_constellation_cfg, make_ensemble, make_permutation, n_tones, shadow_sigma_db,
                     snr_grid_db, snr_points)
from .events import build_events, make_reference
from .method1 import ber_curve_method1, outage_ber
from .method2 import method2_ber, method2_ber_shadowed, prepare_method2
from .simulator import Link, StopRule, ber_curve_sim, results_matrix

log = logging.getLogger("qsfade")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv_columns(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    cols = {}
    for k, name in enumerate(header):
        vals = [r[k] for r in body]
        try:
            cols[name] = np.array([float(v) if v != "" else np.nan for v in vals])
        except ValueError:
            cols[name] = np.array(vals)
    return cols


def write_manifest(out: Path, command: str, cfg: ExperimentConfig, outputs: list[Path], extra=None) -> Path:
    import scipy

    manifest = {
        "command": command,
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "outputs": sorted(p.name for p in outputs),
        "versions": {"qsfade": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "config": dump_config(cfg),
    }
    if extra:
        manifest.update(extra)
    path = out / f"{command}.manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# shared pipeline pieces


def _error_set(cfg: ExperimentConfig, code):
    return enumerate_error_set(code, cfg.analysis.w_max)


def _event_table(cfg: ExperimentConfig):
    code = make_code(cfg.code)
    const = make_constellation_cfg(cfg)
    perm = make_permutation(cfg)
    E = _error_set(cfg, code)
    ref = make_reference(code, perm, const, n_tones(cfg), seed=cfg.analysis.reference_seed)
    return code, build_events(ref, E, perm, const, edge=cfg.analysis.edge)


def _summary_rows(grid, per_real: np.ndarray, x: float):
    for s, db in enumerate(grid):
        col = per_real[:, s]
        yield db, x, outage_ber(col, x), float(col.mean())


SUMMARY_HEADER = ["ebn0_db", "outage_x", "outage_ber", "avg_ber"]


# ---------------------------------------------------------------------------
# commands


def cmd_enumerate(cfg: ExperimentConfig, out: Path) -> tuple[list[Path], dict]:
    code = make_code(cfg.code)
    E = _error_set(cfg, code)
    path = out / "errorset.csv"
    E.save(path)
    info = {"L": E.L, "free_distance": free_distance(code), "max_length": E.max_length,
            "code_id": code.code_id}
    print(f"{code.code_id}: L={E.L} d_free={info['free_distance']} max_length={E.max_length}")
    return [path], info


def cmd_gen_channels(cfg: ExperimentConfig, out: Path) -> tuple[list[Path], dict]:
    ens = make_ensemble(cfg)
    path = out / "channels.bin"
    ens.save(path)
    return [path], {"count": ens.count, "N": ens.N, "model_id": ens.model_id}


def cmd_estimate_corr(cfg: ExperimentConfig, out: Path) -> tuple[list[Path], dict]:
    ens = make_ensemble(cfg).normalized()
    corr = estimate_correlation(ens.h)
    corr.check()
    path = out / "correlation.bin"
    corr.save(path)
    p = gaussianity_pvalues(ens.h)
    gpath = write_csv(out / "gaussianity.csv", ["tone", "p_real", "p_imag"],
                      ((k, p[k, 0], p[k, 1]) for k in range(len(p))))
    return [path, gpath], {"sample_count": corr.sample_count, "min_ks_p": float(p.min())}


def cmd_analyze_m1(cfg: ExperimentConfig, out: Path) -> tuple[list[Path], dict]:
    code, table = _event_table(cfg)
    ens = make_ensemble(cfg)
    pts = snr_points(cfg, code)
    curves = ber_curve_method1(table, ens.h, pts, cfg.analysis.outage_x, threads=cfg.threads)
    grid = snr_grid_db(cfg)
    per = write_csv(out / "m1_per_realization.csv", ["ebn0_db", "realization_index", "ber"],
                    ((grid[s], r, curves.per_realization[r, s])
                     for s in range(len(grid)) for r in range(ens.count)))
    summ = write_csv(out / "m1_summary.csv", SUMMARY_HEADER,
                     _summary_rows(grid, curves.per_realization, cfg.analysis.outage_x))
    return [per, summ], {"events": table.n_events}


def _correlation_for_m2(cfg: ExperimentConfig) -> CorrelationMatrix:
    if cfg.channel.correlation is not None:
        corr = CorrelationMatrix.load(cfg.channel.correlation)
    elif cfg.channel.model == "rayleigh":
        corr = CorrelationMatrix(sigma=np.eye(n_tones(cfg), dtype=complex))
    else:
        corr = estimate_correlation(make_ensemble(cfg).normalized().h)
    if corr.N != n_tones(cfg):
        raise ValueError(f"correlation matrix is {corr.N}x{corr.N}, config uses {n_tones(cfg)} tones")
    corr.check()
    return corr


def cmd_analyze_m2(cfg: ExperimentConfig, out: Path) -> tuple[list[Path], dict]:
    code, table = _event_table(cfg)
    prep = prepare_method2(table, _correlation_for_m2(cfg))
    es = np.array([p.es_n0 for p in snr_points(cfg, code)])
    avg = method2_ber(prep, es, cfg.analysis.nodes)
    shadow = method2_ber_shadowed(prep, es, shadow_sigma_db(cfg), cfg.analysis.nodes,
                                  cfg.analysis.shadow_nodes)
    grid = snr_grid_db(cfg)
    path = write_csv(out / "m2.csv", ["ebn0_db", "avg_ber", "avg_ber_lognormal"],
                     zip(grid, avg, shadow))
    return [path], {"events": table.n_events}


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> tuple[list[Path], dict]:
    code = make_code(cfg.code)
    const = make_constellation_cfg(cfg)
    link = Link(code=code, perm=make_permutation(cfg), const=const, N=n_tones(cfg))
    ens = make_ensemble(cfg)
    pts = snr_points(cfg, code)
    sc = cfg.simulation
    stop = StopRule(min_errors=sc.min_errors, max_bits=sc.max_bits, max_packets=sc.max_packets)
    results = ber_curve_sim(link, ens.h, pts, stop, master_seed=cfg.seed, threads=cfg.threads)
    rows = sorted(results, key=lambda r: (r.eb_n0_db, r.realization_index))
    path = write_csv(out / "sim.csv", ["ebn0_db", "realization_index", "bits", "errors", "ber", "seed"],
                     ((r.eb_n0_db, r.realization_index, r.bits_sent, r.bit_errors, r.ber, r.seed)
                      for r in rows))
    bers = results_matrix(results, len(pts))
    summ = write_csv(out / "sim_summary.csv", SUMMARY_HEADER,
                     _summary_rows(snr_grid_db(cfg), bers, cfg.analysis.outage_x))
    return [path, summ], {}


def crossing_db(ebn0_db, ber, level: float) -> float:
    """Eb/N0 where the curve first falls to ``level``; linear in log10(BER).

    Returns NaN when the curve never crosses the level on its grid.
    """
    x = np.asarray(ebn0_db, dtype=float)
    y = np.log10(np.clip(np.asarray(ber, dtype=float), 1e-300, None))
    t = np.log10(level)
    for k in range(len(x) - 1):
        if y[k] >= t >= y[k + 1] and y[k] != y[k + 1]:
            return float(x[k] + (y[k] - t) / (y[k] - y[k + 1]) * (x[k + 1] - x[k]))
        if y[k] == t:
            return float(x[k])
    if len(x) and y[-1] == t:
        return float(x[-1])
    return float("nan")


def horizontal_gap_db(ebn0_a, ber_a, ebn0_b, ber_b, level: float) -> float:
    return crossing_db(ebn0_b, ber_b, level) - crossing_db(ebn0_a, ber_a, level)


def _default_curves(out: Path) -> list[tuple[str, Path, str]]:
    known = [("m1_outage", "m1_summary.csv", "outage_ber"), ("m1_avg", "m1_summary.csv", "avg_ber"),
             ("m2_avg", "m2.csv", "avg_ber"), ("m2_avg_lognormal", "m2.csv", "avg_ber_lognormal"),
             ("sim_outage", "sim_summary.csv", "outage_ber"), ("sim_avg", "sim_summary.csv", "avg_ber")]
    return [(n, out / f, c) for n, f, c in known if (out / f).exists()]


def cmd_compare(cfg: ExperimentConfig, out: Path) -> tuple[list[Path], dict]:
    if cfg.compare.curves:
        refs = [(c.name, Path(c.path), c.column) for c in cfg.compare.curves]
    else:
        refs = _default_curves(out)
    if not refs:
        raise FileNotFoundError(f"no curves to compare in {out}")
    curves = {}
    for name, path, column in refs:
        cols = read_csv_columns(path)
        if column not in cols or "ebn0_db" not in cols:
            raise ValueError(f"{path}: needs columns ebn0_db and {column}")
        curves[name] = (cols["ebn0_db"], cols[column])
    grid = sorted({float(x) for xs, _ in curves.values() for x in xs})

    def value_at(name, db):
        xs, ys = curves[name]
        hit = np.flatnonzero(np.isclose(xs, db))
        return ys[hit[0]] if len(hit) else ""

    names = list(curves)
    joined = write_csv(out / "compare.csv", ["ebn0_db"] + names,
                       ([db] + [value_at(n, db) for n in names] for db in grid))
    base = names[0]
    gap_rows, max_gap = [], {}
    for lvl in cfg.compare.ber_levels:
        for n in names[1:]:
            g = horizontal_gap_db(*curves[base], *curves[n], lvl)
            gap_rows.append((lvl, base, n, g))
            if np.isfinite(g):
                max_gap[n] = max(max_gap.get(n, 0.0), abs(g))
    gaps = write_csv(out / "gaps.csv", ["ber_level", "reference", "curve", "gap_db"], gap_rows)
    for n, g in max_gap.items():
        print(f"{n} vs {base}: max |gap| {g:.3f} dB")
    return [joined, gaps], {"max_gap_db": max_gap}


def cmd_variability(cfg: ExperimentConfig, out: Path) -> tuple[list[Path], dict]:
    code, table = _event_table(cfg)
    pts = snr_points(cfg, code)
    grid = snr_grid_db(cfg)
    k = cfg.variability.subsets
    total = k * sum(cfg.variability.sizes)
    ens = make_ensemble(cfg, count=total)
    per_real = ber_curve_method1(table, ens.h, pts, threads=cfg.threads).per_realization
    rows, spread_rows = [], []
    offset = 0
    for size in cfg.variability.sizes:
        avgs = np.empty((k, len(grid)))
        outs = np.empty((k, len(grid)))
        for s in range(k):
            block = per_real[offset: offset + size]
            offset += size
            avgs[s] = block.mean(axis=0)
            outs[s] = [outage_ber(block[:, q], cfg.analysis.outage_x) for q in range(len(grid))]
            rows += [(size, s, grid[q], avgs[s, q], outs[s, q]) for q in range(len(grid))]
        for q in range(len(grid)):
            spread_rows.append((size, grid[q], log_spread(avgs[:, q]), log_spread(outs[:, q])))
    a = write_csv(out / "variability.csv", ["subset_size", "subset_index", "ebn0_db", "avg_ber", "outage_ber"],
                  rows)
    b = write_csv(out / "variability_spread.csv", ["subset_size", "ebn0_db", "avg_spread", "outage_spread"],
                  spread_rows)
    return [a, b], {}


def log_spread(values) -> float:
    """Decades between the largest and smallest value."""
    v = np.asarray(values, dtype=float)
    return float(np.log10(v.max()) - np.log10(v.min()))


COMMANDS = {
    "enumerate": cmd_enumerate,
    "gen-channels": cmd_gen_channels,
    "estimate-corr": cmd_estimate_corr,
    "analyze-m1": cmd_analyze_m1,
    "analyze-m2": cmd_analyze_m2,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "variability": cmd_variability,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qsfade", description="Coded OFDM BER analysis over quasi-static fading.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="YAML experiment file")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--threads", type=int, help="worker threads")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"qsfade: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["output"] = args.out
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads", "must be at least 1")
            overrides["threads"] = args.threads
        cfg = dataclasses.replace(cfg, **overrides)
    except FileNotFoundError as exc:
        print(f"qsfade: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"qsfade: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        outputs, info = COMMANDS[args.command](cfg, out)
        write_manifest(out, args.command, cfg, outputs, info)
    except ConfigError as exc:
        print(f"qsfade: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, EnumerationLimitError) as exc:
        print(f"qsfade: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
