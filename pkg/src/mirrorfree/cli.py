"""Command-line experiment runner.

Subcommands
-----------
run       run the experiments of a config file, one CSV trace per seed
certify   Jacobian certificates and conservativeness estimates
antilip   relative-Lipschitz obstruction table
plotdata  merge trace CSVs into one long-format file

Exit codes: 0 success, 1 a certificate failed (certify only), 2 invalid
config or input, 3 a run diverged, 4 a prox solve failed.
"""
import argparse
import configparser
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import algorithms as alg
from .geometry import (
    DEFAULT_CONTEXT,
    anti_lipschitz_ratio,
    box_sampler,
    co_conservativeness_estimate,
    conservativeness_estimate,
    norelip_triangle,
    three_point_residual,
)
from .operators import combine
from .problems import KINDS, certify_instance, norelip_closed_form, norelip_pair, random_instance

log = logging.getLogger("mirrorfree")

EXIT_OK, EXIT_CERT, EXIT_CONFIG, EXIT_DIVERGED, EXIT_PROX = 0, 1, 2, 3, 4
OUT_ENV = "MIRRORFREE_OUT"
TRACE_SCHEMA_VERSION = 1
TRACE_COLUMNS = (
    "k", "op_norm_half", "op_norm_next", "monitor_norm", "omega_to_ref", "E_k",
    "prox_residual_1", "prox_residual_2", "lemma_mfmp_slack",
)
CHECKS = ("three-point", "certificates", "contraction", "lemma-mfmp", "anti-lipschitz")
ALGORITHMS = ("mfmp", "mfmp-sm")
INSTANCE_OPTIONS = {
    "tau": float, "M": float, "M_factor": float, "L3": float, "hess_coef": float,
    "min_kappa": float, "mirror": str, "alpha": float, "eta": float,
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config


@dataclass
class ExperimentConfig:
    name: str
    kind: str
    algorithm: str
    n: int
    K: int
    seeds: list
    prox_tol: float = 1e-10
    checks: list = field(default_factory=list)
    start: str = "normal"
    start_scale: float = 1.0
    recalibrate: bool = True
    cert_samples: int = 200
    cert_tol: float = 1e-9
    gap_radius: float = 1.0
    L: float = None
    m: float = None
    instance: dict = field(default_factory=dict)


def parse_seeds(text):
    """``"0-4"`` or ``"0, 3, 7"`` or a mix of both."""
    seeds = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part:
            a, b = part.split("-", 1)
            try:
                lo, hi = int(a), int(b)
            except ValueError:
                raise ConfigError(f"bad seed range {part!r}") from None
            if hi < lo:
                raise ConfigError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            try:
                seeds.append(int(part))
            except ValueError:
                raise ConfigError(f"bad seed {part!r}") from None
    if not seeds:
        raise ConfigError("no seeds given")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("duplicate seeds")
    if any(s < 0 for s in seeds):
        raise ConfigError("seeds must be nonnegative")
    return seeds


_FIELDS = {
    "kind": str, "algorithm": str, "n": int, "K": int, "seeds": parse_seeds,
    "prox_tol": float, "checks": str, "start": str, "start_scale": float,
    "recalibrate": "bool", "cert_samples": int, "cert_tol": float, "gap_radius": float,
    "L": float, "m": float, "out": str,
}


def _convert(section, key, raw, conv):
    try:
        if conv == "bool":
            return section.getboolean(key)
        return conv(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{section.name}] {key} = {raw!r}: {exc}") from None


def load_config(text, source="<config>"):
    """Parse and validate a config; returns ``(experiments, defaults)``."""
    cp = configparser.ConfigParser(interpolation=None, default_section="defaults")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for key in cp.defaults():
        known = key in _FIELDS or (key.startswith("instance.") and key[9:] in INSTANCE_OPTIONS)
        if not known:
            raise ConfigError(f"[defaults] unknown key {key!r}")
    experiments = []
    for sec_name in cp.sections():
        if not sec_name.startswith("experiment:"):
            raise ConfigError(f"unknown section [{sec_name}]")
        name = sec_name.split(":", 1)[1].strip()
        if not name or any(c in name for c in "/\\") or name.startswith("."):
            raise ConfigError(f"bad experiment name {name!r}")
        sec = cp[sec_name]
        vals, inst_opts = {}, {}
        for key in sec:
            raw = sec[key]
            if key.startswith("instance."):
                opt = key.split(".", 1)[1]
                if opt not in INSTANCE_OPTIONS:
                    raise ConfigError(f"[{sec_name}] unknown instance option {opt!r}")
                inst_opts[opt] = _convert(sec, key, raw, INSTANCE_OPTIONS[opt])
            elif key in _FIELDS:
                if key != "out":
                    vals[key] = _convert(sec, key, raw, _FIELDS[key])
            else:
                raise ConfigError(f"[{sec_name}] unknown key {key!r}")
        for req in ("kind", "algorithm", "n", "K", "seeds"):
            if req not in vals:
                raise ConfigError(f"[{sec_name}] missing required key {req!r}")
        if vals["kind"] not in KINDS:
            raise ConfigError(f"[{sec_name}] kind must be one of {', '.join(KINDS)}")
        if vals["algorithm"] not in ALGORITHMS:
            raise ConfigError(f"[{sec_name}] algorithm must be mfmp or mfmp-sm")
        if vals["n"] < 1 or vals["K"] < 1:
            raise ConfigError(f"[{sec_name}] n and K must be >= 1")
        if not vals.get("prox_tol", 1.0) > 0 or not vals.get("cert_tol", 1.0) > 0:
            raise ConfigError(f"[{sec_name}] tolerances must be positive")
        if vals.get("cert_samples", 1) < 1:
            raise ConfigError(f"[{sec_name}] cert_samples must be >= 1")
        if vals.get("start", "normal") not in ("normal", "zero"):
            raise ConfigError(f"[{sec_name}] start must be normal or zero")
        if inst_opts.get("mirror", "standard") not in ("standard", "conservative"):
            raise ConfigError(f"[{sec_name}] instance.mirror must be standard or conservative")
        checks = [c.strip() for c in vals.pop("checks", "").split(",") if c.strip()]
        bad = [c for c in checks if c not in CHECKS]
        if bad:
            raise ConfigError(f"[{sec_name}] unknown checks {bad}; choose from {', '.join(CHECKS)}")
        experiments.append(ExperimentConfig(name=name, checks=checks, instance=inst_opts, **vals))
    if not experiments:
        raise ConfigError(f"{source}: no [experiment:NAME] sections")
    out = cp.defaults().get("out")
    return experiments, {"out": out}


def read_config(path):
    if path is None:
        text = resources.files("mirrorfree").joinpath("configs/default.ini").read_text()
        return load_config(text, "default.ini")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return load_config(text, str(path))


def output_root(cli_out, cfg_out):
    return Path(cli_out or cfg_out or os.environ.get(OUT_ENV) or "runs")


# ---------------------------------------------------------------------------
# runs


def fmt(v):
    if v is None:
        return ""
    return format(float(v), ".17g")


def build_instance(exp, seed):
    inst = random_instance(exp.kind, exp.n, seed, **exp.instance)
    if exp.L is not None:
        inst.L = exp.L
    if exp.m is not None:
        inst.m = exp.m
    return inst


def start_point(exp, inst, seed):
    if exp.start == "zero":
        return np.zeros(inst.dim)
    rng = np.random.default_rng([seed, 1])
    return exp.start_scale * rng.standard_normal(inst.dim)


def trace_csv(trace, timing=False):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS + (("wall_time",) if timing else ()))
    for r in trace.records:
        row = [str(r.k), fmt(r.op_norm_half), fmt(r.op_norm_next), fmt(r.monitor_norm),
               fmt(r.omega_to_ref), fmt(r.E_k), fmt(r.prox_residuals[0]),
               fmt(r.prox_residuals[1]), fmt(r.lemma_mfmp_slack)]
        if timing:
            row.append(fmt(r.wall_time))
        w.writerow(row)
    return buf.getvalue()


def _sample_triples(dim, seed, n=100):
    return box_sampler(dim, -2.0, 2.0, seed)(3 * n).reshape(3, n, dim)


def run_checks(exp, inst, trace, z_star, seed, certs):
    ctx = DEFAULT_CONTEXT
    out = {}
    if "three-point" in exp.checks:
        A, B, C = _sample_triples(inst.dim, seed)
        out["three-point"] = {
            name: max(three_point_residual(ctx, f, a, b, c) for a, b, c in zip(A, B, C))
            for name, f in (("F", inst.field_f), ("H", inst.field_h))
        }
    if "certificates" in exp.checks:
        out["certificates"] = certs
    if "contraction" in exp.checks and trace is not None and trace.algorithm == "mfmp-sm":
        om = alg.omega_sequence(trace, inst.field_h, z_star)
        E = [r.E_k for r in trace.records]
        out["contraction"] = {
            "worst_slack": float(np.min(alg.contraction_slacks(trace, inst.L, inst.m, om, E))),
            "corollary_slack": alg.corollary_slack(trace, inst.L, inst.m, om, E),
            "unrolled_slack": alg.unrolled_slack(trace, inst.L, inst.m, om, E),
        }
    if "lemma-mfmp" in exp.checks and trace is not None and trace.algorithm == "mfmp":
        probes = box_sampler(inst.dim, -2.0, 2.0, seed + 7)(50)
        out["lemma-mfmp"] = {"worst_slack": float(min(
            alg.lemma_mfmp_slack(r, inst.field_f, inst.field_h, inst.L, p)
            for r in trace.records for p in probes))}
    if "anti-lipschitz" in exp.checks:
        out["anti-lipschitz"] = antilip_table(1.0, 1.0, [1.0, 0.1, 0.01])
    return out


def certificate_summary(inst, rs, rm, seed, n_loops=100):
    sampler = box_sampler(inst.dim, -2.0, 2.0, seed + 3)
    ctx = DEFAULT_CONTEXT
    LH = combine([inst.field_h], [inst.L], name="L*H")
    return {
        "L": inst.L,
        "m": inst.m,
        "rel_smooth": rs.as_dict(),
        "rel_strong_mono": rm.as_dict(),
        "conservativeness_F": conservativeness_estimate(ctx, inst.field_f, sampler, n_loops),
        "conservativeness_H": conservativeness_estimate(ctx, inst.field_h, sampler, n_loops),
        "co_conservativeness_F_LH": co_conservativeness_estimate(ctx, inst.field_f, LH, sampler, n_loops),
        "notes": list(inst.notes),
    }


def run_one(exp, seed, out_dir, timing=False):
    """Run one (experiment, seed); returns its summary dict (never raises on run errors)."""
    inst = build_instance(exp, seed)
    inst, rs, rm = certify_instance(inst, n=exp.cert_samples, tol=exp.cert_tol, seed=seed,
                                    recalibrate=exp.recalibrate)
    certs = certificate_summary(inst, rs, rm, seed)
    use_sm = exp.algorithm == "mfmp-sm"
    z_star = None
    if use_sm or "contraction" in exp.checks:
        z_star = alg.solve_reference(inst)
    cfg = alg.RunConfig(inst, start_point(exp, inst, seed), exp.K, prox_tol=exp.prox_tol,
                        seed=seed, use_sm=use_sm, z_star=z_star, comparison_radius=exp.gap_radius)
    status, message, trace = "ok", "", None
    try:
        trace = alg.run(cfg)
    except alg.DivergenceError as exc:
        status, message, trace = "diverged", str(exc), exc.trace
    except alg.ProxFailure as exc:
        status, message, trace = "prox-failure", str(exc), exc.trace
    path = out_dir / f"seed_{seed}.csv"
    if trace is not None:
        path.write_text(trace_csv(trace, timing))
    summary = {
        "experiment": exp.name,
        "seed": seed,
        "kind": exp.kind,
        "algorithm": exp.algorithm,
        "n": exp.n,
        "K": exp.K,
        "status": status,
        "message": message,
        "iterations": 0 if trace is None else trace.K,
        "L": inst.L,
        "m": inst.m,
        "params": {k: v for k, v in inst.params.items() if isinstance(v, (int, float, str, bool))},
        "trace": path.name,
    }
    if trace is not None and trace.records:
        last = trace.records[-1]
        summary.update(final_op_norm=last.op_norm_next, final_monitor_norm=last.monitor_norm)
        if status == "ok":
            summary["gap_estimate"] = trace.gap_estimate
        summary["checks"] = run_checks(exp, inst, trace if status == "ok" else None, z_star, seed, certs)
    return summary


def _run_task(args):
    exp, seed, out_dir, timing = args
    return run_one(exp, seed, Path(out_dir), timing)


def _status_code(summaries):
    codes = {"ok": EXIT_OK, "diverged": EXIT_DIVERGED, "prox-failure": EXIT_PROX}
    return max((codes[s["status"]] for s in summaries), default=EXIT_OK)


def cmd_run(args):
    experiments, defaults = read_config(args.config)
    if args.experiment:
        experiments = [e for e in experiments if e.name in args.experiment]
        if not experiments:
            raise ConfigError("no experiment matches --experiment")
    if args.seeds:
        seeds = parse_seeds(args.seeds)
        for e in experiments:
            e.seeds = seeds
    root = output_root(args.out, defaults["out"])
    tasks = []
    for exp in experiments:
        d = root / exp.name
        d.mkdir(parents=True, exist_ok=True)
        tasks.extend((exp, s, str(d), args.timing) for s in exp.seeds)
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            summaries = list(pool.map(_run_task, tasks))
    else:
        summaries = [_run_task(t) for t in tasks]
    for s in summaries:
        log.info("%s seed %d: %s, final |F| = %s", s["experiment"], s["seed"], s["status"],
                 fmt(s.get("final_op_norm")))
    by_exp = {}
    for s in summaries:
        by_exp.setdefault(s["experiment"], []).append(s)
    for name, rows in by_exp.items():
        write_json(root / name / "summary.json", {"schema": TRACE_SCHEMA_VERSION, "runs": rows})
    return _status_code(summaries)


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


# ---------------------------------------------------------------------------
# certify / antilip / plotdata


def cmd_certify(args):
    experiments, defaults = read_config(args.config)
    if args.seeds:
        seeds = parse_seeds(args.seeds)
        for e in experiments:
            e.seeds = seeds
    reports, failed = [], False
    for exp in experiments:
        for seed in exp.seeds:
            inst = build_instance(exp, seed)
            inst, rs, rm = certify_instance(inst, n=exp.cert_samples, tol=exp.cert_tol, seed=seed,
                                            recalibrate=False)
            rep = certificate_summary(inst, rs, rm, seed)
            rep.update(experiment=exp.name, seed=seed)
            reports.append(rep)
            failed |= not (rs.holds and rm.holds)
            if not args.quiet:
                for r in (rs, rm):
                    line = f"{exp.name} seed {seed} {r.label}: {'holds' if r.holds else 'FAILS'}" \
                           f" (worst margin {r.worst_margin:.6g})"
                    if not r.holds:
                        line += " at z = [" + ", ".join(f"{v:.6g}" for v in r.worst_point) + "]"
                    print(line)
                print(f"{exp.name} seed {seed} conservativeness F {rep['conservativeness_F']:.3g},"
                      f" H {rep['conservativeness_H']:.3g}, F vs L*H {rep['co_conservativeness_F_LH']:.3g}")
    if args.out or defaults["out"] or os.environ.get(OUT_ENV):
        root = output_root(args.out, defaults["out"])
        root.mkdir(parents=True, exist_ok=True)
        write_json(root / "certificates.json", {"schema": TRACE_SCHEMA_VERSION, "reports": reports})
    return EXIT_CERT if failed else EXIT_OK


def antilip_table(B, E, thetas, scaling="game"):
    F, H = norelip_pair(B, E, scaling)
    rows = []
    for t in thetas:
        if not t > 0:
            raise ConfigError("theta values must be positive")
        ratio = anti_lipschitz_ratio(DEFAULT_CONTEXT, F, H, norelip_triangle(t))
        closed = norelip_closed_form(B, E, t, scaling)
        rel = abs(ratio - closed) / max(1.0, abs(closed))
        rows.append({"theta": t, "ratio": ratio, "closed_form": closed, "rel_diff": rel})
    return rows


def cmd_antilip(args):
    try:
        thetas = [float(t) for t in args.theta.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"bad theta list {args.theta!r}") from None
    if not thetas:
        raise ConfigError("no theta values")
    rows = antilip_table(args.B, args.E, thetas, args.scaling)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("theta", "ratio", "closed_form", "rel_diff"))
    for r in rows:
        w.writerow([fmt(r["theta"]), fmt(r["ratio"]), fmt(r["closed_form"]), fmt(r["rel_diff"])])
    if not args.quiet:
        sys.stdout.write(buf.getvalue())
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(buf.getvalue())
    return EXIT_OK


PLOT_COLUMNS = ("config", "seed", "k", "metric", "value")


def _log10(v):
    return math.log10(v) if v > 0 else -math.inf


def cmd_plotdata(args):
    src = Path(args.trace_dir)
    if not src.is_dir():
        raise ConfigError(f"{src} is not a directory")
    files = sorted(src.rglob("seed_*.csv"))
    if not files:
        raise ConfigError(f"no traces under {src}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_COLUMNS)
    for path in files:
        config = path.parent.relative_to(src).as_posix() if path.parent != src else src.name
        try:
            seed = int(path.stem.split("_", 1)[1])
            with path.open(newline="") as fh:
                rows = list(csv.DictReader(fh))
        except (ValueError, OSError, csv.Error) as exc:
            raise ConfigError(f"corrupt trace {path}: {exc}") from None
        if not rows or tuple(rows[0].keys())[:len(TRACE_COLUMNS)] != TRACE_COLUMNS:
            raise ConfigError(f"corrupt trace {path}: unexpected header or no rows")
        metrics = [c for c in rows[0] if c != "k" and all(r[c] != "" for r in rows)]
        for r in rows:
            try:
                vals = {c: float(r[c]) for c in metrics}
            except (TypeError, ValueError):
                raise ConfigError(f"corrupt trace {path}: non-numeric value") from None
            vals["log10_op_norm_next"] = _log10(vals["op_norm_next"])
            vals["log10_monitor_norm"] = _log10(vals["monitor_norm"])
            for name, v in vals.items():
                w.writerow([config, seed, r["k"], name, fmt(v)])
    dest = Path(args.out) if args.out else src / "plotdata.csv"
    dest.write_text(buf.getvalue())
    if not args.quiet:
        print(f"wrote {dest} from {len(files)} traces")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    p = argparse.ArgumentParser(prog="mirrorfree", description="Mirror-free mirror prox experiments.")
    p.add_argument("--quiet", action="store_true", help="only report errors")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run experiments and write traces")
    r.add_argument("--config", help="INI config (default: the built-in suite)")
    r.add_argument("--out", help=f"output root (default: config 'out', ${OUT_ENV}, or ./runs)")
    r.add_argument("--seeds", help="override seeds, e.g. 0-4 or 1,3")
    r.add_argument("--experiment", action="append", help="only run this experiment (repeatable)")
    r.add_argument("--jobs", type=int, default=1, help="concurrent runs")
    r.add_argument("--timing", action="store_true", help="append a wall_time column to traces")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("certify", help="certificate reports for each instance")
    c.add_argument("--config")
    c.add_argument("--out")
    c.add_argument("--seeds")
    c.set_defaults(func=cmd_certify)

    a = sub.add_parser("antilip", help="relative-Lipschitz obstruction table")
    a.add_argument("--B", type=float, default=1.0)
    a.add_argument("--E", type=float, default=1.0)
    a.add_argument("--theta", default="1,0.1,0.01")
    a.add_argument("--scaling", choices=("game", "smooth"), default="game")
    a.add_argument("--out", help="also write the table to this CSV file")
    a.set_defaults(func=cmd_antilip)

    d = sub.add_parser("plotdata", help="merge traces into long format")
    d.add_argument("trace_dir")
    d.add_argument("--out", help="destination (default: TRACE_DIR/plotdata.csv)")
    d.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None):
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    # accept --quiet after the subcommand too
    if "--quiet" in rest:
        rest.remove("--quiet")
        args.quiet = True
    if rest:
        parser.error(f"unrecognized arguments: {' '.join(rest)}")
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
