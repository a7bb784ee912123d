"""Acceptance criteria, each at its stated tolerance.

Every test prints one line ``criterion N: PASS|FAIL ...`` (also collected in
the terminal summary) and then asserts the criterion.
"""
import csv
import json
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from mirrorfree import cli
from mirrorfree.algorithms import RunConfig, comparison_set, run_mfmp, run_mfmp_sm, solve_reference
from mirrorfree.geometry import (
    DEFAULT_CONTEXT as CTX, anti_lipschitz_ratio, box_sampler, gbd, norelip_triangle,
    rel_smooth_certificate, rel_strong_mono_certificate, three_point_residual,
)
from mirrorfree.problems import (
    bilinear_game, certify_instance, norelip_closed_form, norelip_pair, random_instance,
)
from mirrorfree.prox import ProxSpec, prox_generic, third_order_prox


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def _library_fields():
    sm = random_instance("smooth", 2, 0)
    eg = random_instance("eg2-subproblem", 2, 0)
    cg = random_instance("cgo", 2, 0)
    return {
        "quartic-saddle F": sm.field_f,
        "quartic mirror H": sm.field_h,
        "quartic game": eg.model.phi,
        "third-order model F": eg.field_f,
        "third-order mirror H": eg.field_h,
        "cgo Phi_alpha": cg.field_f,
    }


@pytest.fixture(scope="module")
def default_suite(tmp_path_factory):
    """The built-in suite run twice into separate directories."""
    roots = []
    for name in ("first", "second"):
        root = tmp_path_factory.mktemp(name)
        code = cli.main(["--quiet", "run", "--out", str(root)])
        roots.append((root, code))
    return roots


def _summaries(root):
    out = {}
    for name in ("smooth-inseparable", "smooth-separable", "eg2-subproblem"):
        out[name] = json.loads((root / name / "summary.json").read_text())["runs"]
    return out


def test_criterion_01_three_point_identity():
    t0 = time.perf_counter()
    P = box_sampler(4, -2.0, 2.0, 11)(300).reshape(3, 100, 4)
    worst = {name: max(three_point_residual(CTX, f, a, b, c) for a, b, c in zip(*P))
             for name, f in _library_fields().items()}
    elapsed = time.perf_counter() - t0
    top = max(worst.values())
    report(1, top <= 1e-10 and elapsed < 5.0,
           f"max three-point residual {top:.2e} over 6 fields x 100 triples (<= 1e-10), {elapsed:.2f} s (< 5 s)")


def test_criterion_02_positivity():
    P = box_sampler(4, -2.0, 2.0, 12)(200).reshape(2, 100, 4)
    gmin = min(min(gbd(CTX, f, a, b) for a, b in zip(*P)) for f in _library_fields().values())
    pairs = []
    for kind, seed in (("smooth", 0), ("smooth-separable", 1), ("eg2-subproblem", 2), ("cgo", 3), ("bilinear", 4)):
        inst, rs, rm = certify_instance(random_instance(kind, 2, seed), seed=seed)
        assert rs.holds and rm.holds
        pairs.append(inst)
    slack = min(inst.L * gbd(CTX, inst.field_h, a, b) - gbd(CTX, inst.field_f, a, b)
                for inst in pairs for a, b in zip(*P))
    report(2, gmin >= -1e-10 and slack >= -1e-9,
           f"min gbd {gmin:.3g} (>= -1e-10); min L*w_H - w_F {slack:.3g} over 5 certified pairs (>= -1e-9)")


def test_criterion_03_certificates_with_stated_constants():
    failures, total = [], 0
    for kind in ("smooth", "smooth-separable"):
        for n in (2, 5, 10):
            for seed in range(5):
                inst = random_instance(kind, n, seed)
                s = box_sampler(2 * n, -2.0, 2.0, seed)
                rs = rel_smooth_certificate(inst.field_f, inst.field_h, inst.L, s, 200)
                rm = rel_strong_mono_certificate(inst.field_f, inst.field_h, inst.m, s, 200)
                total += 1
                if not (rs.holds and rm.holds):
                    failures.append((kind, n, seed, rs.worst_margin, rm.worst_margin))
    report(3, not failures, f"{total - len(failures)}/{total} instances pass both certificates"
                            f" with the stated L and m on 200 samples in [-2,2]^d")


def test_criterion_04_prox_oracle_equivalence():
    tol = 1e-10
    worst_gap, worst_res, worst_it = 0.0, 0.0, 0
    for seed in range(20):
        n = 1 + seed % 3
        inst = random_instance("eg2-subproblem", n, seed, mirror=("standard", "conservative")[seed % 2])
        rng = np.random.default_rng(100 + seed)
        zk, zb = rng.standard_normal(2 * n), rng.standard_normal(2 * n)
        a, sol = third_order_prox(inst.model, inst.L, zk, tol, z_b=zb, conservative=inst.conservative_mirror)
        b = prox_generic(ProxSpec(inst.field_f, inst.field_h, inst.L, zk, zb, tolerance=tol))
        worst_gap = max(worst_gap, float(np.linalg.norm(a.z_prime - b.z_prime)))
        worst_res = max(worst_res, sol.fixed_point_residual)
        worst_it = max(worst_it, sol.newton_iters)
    ok = worst_gap <= 10 * tol and worst_res <= 1e-10 and worst_it <= 40
    report(4, ok, f"max |closed-form - Newton| {worst_gap:.2e} (<= 1e-9); lambda residual {worst_res:.2e}"
                  f" (<= 1e-10); max iterations {worst_it} (<= 40)")


def test_criterion_05_rate_on_bilinear_game():
    t0 = time.perf_counter()
    rows = []
    games = ((bilinear_game(), np.array([1.0, 0.0])),
             (random_instance("bilinear", 2, 0), np.full(4, 0.5)),
             (random_instance("bilinear", 3, 1), np.full(6, 6 ** -0.5)))
    for inst, z1 in games:
        for K in (10, 100, 1000):
            # a radius-2 ball around the unit-norm start contains the solution in its interior
            cfg = RunConfig(inst, z1, K, z_star=np.zeros(inst.dim), comparison_radius=2.0)
            tr = run_mfmp(cfg)
            bound = 1.05 * inst.L * max(gbd(CTX, inst.field_h, z, cfg.z_1) for z in comparison_set(cfg))
            rows.append((K, tr.gap_estimate * K, bound))
    elapsed = time.perf_counter() - t0
    ok = all(g <= b for _, g, b in rows) and elapsed < 10.0
    worst = max(g / b for _, g, b in rows)
    report(5, ok, f"max gap*K / (1.05 L max w_H) = {worst:.3g} (<= 1) over 3 games x K in 10, 100, 1000;"
                  f" {elapsed:.2f} s (< 10 s)")


def test_criterion_06_contraction_on_default_suite(default_suite):
    root, code = default_suite[0]
    assert code == 0
    step, cumulative, unrolled, bad = np.inf, np.inf, np.inf, []
    for name, runs in _summaries(root).items():
        for r in runs:
            c = r["checks"]["contraction"]
            step = min(step, c["worst_slack"])
            cumulative = min(cumulative, c["corollary_slack"])
            unrolled = min(unrolled, c["unrolled_slack"])
            if c["corollary_slack"] < -1e-8:
                bad.append(f"{name}/{r['seed']}")
    ok = step >= -1e-8 and cumulative >= -1e-8
    report(6, ok, f"per-step slack min {step:.2e} (>= -1e-8); cumulative bound as written min {cumulative:.3g}"
                  f" (>= -1e-8), violated on {len(bad)} runs {bad[:4]}; exact unrolled bound min {unrolled:.2e}")


def test_criterion_07_quartic_saddle_convergence():
    finals, times = [], []
    for kind in ("smooth", "smooth-separable"):
        for seed in range(5):
            t0 = time.perf_counter()
            inst, _, _ = certify_instance(random_instance(kind, 10, seed), seed=seed)
            z1 = np.random.default_rng([seed, 1]).standard_normal(inst.dim)
            tr = run_mfmp_sm(RunConfig(inst, z1, 200, seed=seed, z_star=solve_reference(inst)))
            times.append(time.perf_counter() - t0)
            finals.append(tr.records[-1].op_norm_next)
    ok = max(finals) <= 1e-8 and max(times) < 30.0
    report(7, ok, f"final |F(z_200)| ranges {min(finals):.3g} .. {max(finals):.3g} over 10 runs (<= 1e-8);"
                  f" slowest run {max(times):.2f} s (< 30 s)")


def test_criterion_08_plateau_on_subproblem(default_suite):
    root, _ = default_suite[0]
    runs = _summaries(root)["eg2-subproblem"]
    assert len(runs) == 10 and all(r["params"]["kappa"] >= 0.25 for r in runs)
    finals, changes, model_final = [], [], []
    for r in runs:
        with (root / "eg2-subproblem" / r["trace"]).open() as fh:
            rows = list(csv.DictReader(fh))
        mon = [float(row["monitor_norm"]) for row in rows]
        finals.append(mon[-1])
        changes.append(abs(mon[-1] - mon[-21]) / mon[-1])
        model_final.append(float(rows[-1]["op_norm_next"]))
    ok = min(finals) > 1e-6 and max(changes) <= 0.05
    report(8, ok, f"original operator norm at the iterates plateaus at {min(finals):.3g} .. {max(finals):.3g}"
                  f" (> 1e-6), relative change over the last 20 steps <= {max(changes):.1e} (<= 0.05);"
                  f" model operator norm reaches {max(model_final):.1e}")


def test_criterion_09_anti_lipschitz():
    F, H = norelip_pair(1.0, 1.0)
    rel = 0.0
    for theta in (1.0, 0.1, 0.01):
        r = anti_lipschitz_ratio(CTX, F, H, norelip_triangle(theta))
        d = norelip_closed_form(1.0, 1.0, theta)
        rel = max(rel, abs(r - d) / max(1.0, abs(d)))
    t = 1e-3
    growth = (anti_lipschitz_ratio(CTX, F, H, norelip_triangle(t / 2))
              / anti_lipschitz_ratio(CTX, F, H, norelip_triangle(t)))
    ok = rel <= 1e-8 and 3.9 <= growth <= 4.1
    report(9, ok, f"max rel. error vs d(theta) {rel:.2e} (<= 1e-8); d(theta/2)/d(theta) at 1e-3 = {growth:.6f} (in [3.9, 4.1])")


def test_criterion_10_determinism(default_suite):
    (a, _), (b, _) = default_suite
    files = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
    same = [(a / f).read_bytes() == (b / f).read_bytes() for f in files]
    ok = len(files) == 20 and all(same)
    report(10, ok, f"{sum(same)}/{len(files)} trace CSVs byte-identical across two runs of the default suite")
