"""MFMP and MFMP-SM iterations with per-iteration bookkeeping."""
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.stats import norm, qmc

from .geometry import DEFAULT_CONTEXT, TrianglePath, gbd, loop_integral
from .operators import as_point, jacobian
from .prox import (
    ProxSpec,
    newton_zero,
    prox_generic,
    third_order_prox,
    third_order_prox_sm,
)

log = logging.getLogger(__name__)

DIVERGENCE_RADIUS = 1e6


class RunError(RuntimeError):
    """Base class for aborted runs; ``trace`` holds the iterations so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class DivergenceError(RunError):
    pass


class ProxFailure(RunError):
    pass


@dataclass
class RunConfig:
    instance: object
    z_1: np.ndarray
    K: int
    prox_tol: float = 1e-10
    seed: int = 0
    use_sm: bool = False
    z_star: Optional[np.ndarray] = None
    comparison: Optional[np.ndarray] = None
    comparison_radius: float = 1.0
    comparison_points: int = 64
    solver: str = "auto"
    record_omega: bool = True
    ctx: object = DEFAULT_CONTEXT

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        self.z_1 = as_point(self.z_1, self.instance.dim)
        if self.solver not in ("auto", "generic", "closed-form"):
            raise ValueError(f"unknown solver {self.solver!r}")


@dataclass
class IterRecord:
    k: int
    z_k: np.ndarray
    z_half: np.ndarray
    z_next: np.ndarray
    op_norm_half: float
    op_norm_next: float
    monitor_norm: float
    omega_to_ref: Optional[float]
    E_k: Optional[float]
    prox_residuals: tuple
    lemma_mfmp_slack: Optional[float]
    wall_time: float


@dataclass
class RunTrace:
    records: List[IterRecord]
    z_out: np.ndarray
    gap_estimate: float
    algorithm: str
    L: float
    m: float
    z_star: Optional[np.ndarray] = None
    omega_final: Optional[float] = None
    notes: list = field(default_factory=list)

    @property
    def K(self):
        return len(self.records)


# ---------------------------------------------------------------------------
# prox dispatch


def _use_closed_form(cfg):
    inst = cfg.instance
    if cfg.solver == "generic":
        return False
    if cfg.solver == "closed-form":
        if inst.model is None:
            raise ValueError("closed-form solver needs a third-order model instance")
        return True
    return inst.model is not None


def _prox(cfg, z_a, z_b, m=0.0):
    inst = cfg.instance
    if _use_closed_form(cfg):
        if m == 0.0:
            res, _ = third_order_prox(inst.model, inst.L, z_a, cfg.prox_tol, z_b=z_b,
                                      conservative=inst.conservative_mirror)
        else:
            res, _ = third_order_prox_sm(inst.model, inst.L, m, z_a, z_b, cfg.prox_tol,
                                         conservative=inst.conservative_mirror)
        if res.converged:
            return res
        log.debug("closed-form prox residual %.3g; polishing with Newton", res.residual_norm)
        start = res.z_prime
    else:
        start = z_b
    spec = ProxSpec(inst.field_f, inst.field_h, inst.L, z_a, z_b, m=m, tolerance=cfg.prox_tol)
    return prox_generic(spec, z0=start)


def solve_reference(instance, z0=None, tol=1e-12, max_iter=200):
    """Zero of ``field_f`` by damped Newton (the reference point ``z*``)."""
    if instance.z_star is not None:
        return np.array(instance.z_star, dtype=float)
    F = instance.field_f
    z0 = np.zeros(F.dim) if z0 is None else as_point(z0, F.dim)
    z, rn, _, ok = newton_zero(F, lambda z: jacobian(F, z), z0, tol, max_iter)
    if not ok:
        log.warning("%s: reference solve stopped at residual %.3g", instance.label, rn)
    return z


# ---------------------------------------------------------------------------
# main loops


def comparison_set(cfg):
    """Quasi-random points on the sphere of radius ``comparison_radius`` around ``z_1``."""
    if cfg.comparison is not None:
        pts = np.atleast_2d(np.asarray(cfg.comparison, dtype=float))
    else:
        d = cfg.instance.dim
        sob = qmc.Sobol(d, scramble=True, seed=cfg.seed)
        u = sob.random(cfg.comparison_points)
        g = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        pts = cfg.z_1 + cfg.comparison_radius * g
    if cfg.z_star is not None:
        pts = np.vstack([pts, cfg.z_star])
    return pts


def _run(cfg, use_sm):
    inst = cfg.instance
    F = inst.field_f
    L, m = inst.L, (inst.m if use_sm else 0.0)
    z_star = cfg.z_star
    records = []
    z = cfg.z_1.copy()
    half_sum = np.zeros_like(z)
    name = "mfmp-sm" if use_sm else "mfmp"

    def partial():
        return RunTrace(records, z.copy(), float("nan"), name, L, m, z_star, notes=list(inst.notes))

    for k in range(1, cfg.K + 1):
        t0 = time.perf_counter()
        first = _prox(cfg, z, z)
        if not first.converged:
            raise ProxFailure(f"iteration {k}: first prox residual {first.residual_norm:.3g}", partial())
        z_half = first.z_prime
        second = _prox(cfg, z, z_half, m=m)
        if not second.converged:
            raise ProxFailure(f"iteration {k}: second prox residual {second.residual_norm:.3g}", partial())
        z_next = second.z_prime
        omega = None
        if z_star is not None and cfg.record_omega:
            omega = gbd(cfg.ctx, inst.field_h, z_star, z)
        E_k = None
        if use_sm and z_star is not None:
            E_k = error_term(cfg.ctx, F, inst.field_h, L, m, z, z_half, z_next, z_star)
        rec = IterRecord(
            k, z.copy(), z_half.copy(), z_next.copy(),
            float(np.linalg.norm(F(z_half))), float(np.linalg.norm(F(z_next))),
            inst.monitor_norm(z_next), omega, E_k,
            (first.residual_norm, second.residual_norm), None, 0.0,
        )
        if not use_sm:
            probe = cfg.z_1 if z_star is None else z_star
            rec.lemma_mfmp_slack = lemma_mfmp_slack(rec, F, inst.field_h, L, probe)
        rec.wall_time = time.perf_counter() - t0
        records.append(rec)
        half_sum += z_half
        z = z_next
        if not np.all(np.isfinite(z)) or np.linalg.norm(z) > DIVERGENCE_RADIUS:
            raise DivergenceError(f"iteration {k}: iterate left the radius-{DIVERGENCE_RADIUS:g} ball",
                                  partial())
    if use_sm:
        # the returned point is the last computed iterate
        z_out = records[-1].z_next.copy()
    else:
        z_out = half_sum / cfg.K
    trace = RunTrace(records, z_out, float("nan"), name, L, m, z_star, notes=list(inst.notes))
    if z_star is not None:
        trace.omega_final = gbd(cfg.ctx, inst.field_h, z_star, records[-1].z_next)
    trace.gap_estimate = gap_estimate(trace, F, comparison_set(cfg))
    return trace


def run_mfmp(cfg):
    """Mirror-free mirror prox; ``z_out`` is the average of the half iterates."""
    return _run(cfg, use_sm=False)


def run_mfmp_sm(cfg):
    """Strongly monotone variant; ``z_out`` is the last iterate."""
    return _run(cfg, use_sm=True)


def run(cfg):
    return run_mfmp_sm(cfg) if cfg.use_sm else run_mfmp(cfg)


# ---------------------------------------------------------------------------
# diagnostics


def gap_estimate(trace, field_f, comparison):
    """``max_z <F(z), z_out - z>`` over the comparison points."""
    comparison = np.atleast_2d(np.asarray(comparison, dtype=float))
    if comparison.shape[0] == 0:
        raise ValueError("comparison set is empty")
    vals = np.einsum("ij,ij->i", field_f.many(comparison), trace.z_out[None, :] - comparison)
    return float(np.max(vals))


def error_term(ctx, field_f, field_h, L, m, z_k, z_half, z_next, z_star):
    """Signed sum of the four triangle loop integrals of the contraction bound."""
    return (
        L * loop_integral(ctx, field_h, TrianglePath(z_next, z_k, z_half))
        + L * loop_integral(ctx, field_h, TrianglePath(z_star, z_k, z_half))
        + m * loop_integral(ctx, field_h, TrianglePath(z_star, z_half, z_next))
        - L * loop_integral(ctx, field_f, TrianglePath(z_k, z_half, z_next))
    )


def error_terms(trace, field_f, field_h, L, m, z_star, ctx=DEFAULT_CONTEXT):
    return [error_term(ctx, field_f, field_h, L, m, r.z_k, r.z_half, r.z_next, z_star)
            for r in trace.records]


def omega_sequence(trace, field_h, z_star, ctx=DEFAULT_CONTEXT):
    """``w_H(z*, z_k)`` for k = 1..K+1."""
    pts = [r.z_k for r in trace.records] + [trace.records[-1].z_next]
    return np.array([gbd(ctx, field_h, z_star, p) for p in pts])


def contraction_slacks(trace, L, m, omegas, E):
    """Per-iteration ``L/(m+L) w_k + E_k/(m+L) - w_{k+1}``."""
    omegas = np.asarray(omegas, dtype=float)
    E = np.asarray(E, dtype=float)
    return L / (m + L) * omegas[:-1] + E / (m + L) - omegas[1:]


def contraction_check(trace, L, m, omega_fn, E=None):
    """Worst per-iteration slack of the contraction inequality.

    ``omega_fn(z)`` returns ``w_H(z*, z)``; ``E`` defaults to the ``E_k``
    stored on the trace records.
    """
    pts = [r.z_k for r in trace.records] + [trace.records[-1].z_next]
    omegas = np.array([omega_fn(p) for p in pts])
    if E is None:
        E = [r.E_k for r in trace.records]
    return float(np.min(contraction_slacks(trace, L, m, omegas, E)))


def corollary_slack(trace, L, m, omegas, E):
    """Cumulative bound after K steps, with the error sum indexed as written.

    ``w(z*, z_K) <= (L/(m+L))^K w(z*, z_0) + sum_{k=0}^{K-1} E_k / (m+L)^k``
    where the trace's first iterate plays ``z_0`` and its ``E`` list is
    ``E_0 .. E_{K-1}``; ``z_K`` is the K-th iterate after it.
    """
    omegas = np.asarray(omegas, dtype=float)
    E = np.asarray(E, dtype=float)
    K = len(E)
    k = np.arange(K)
    rhs = (L / (m + L)) ** K * omegas[0] + float(np.sum(E * np.exp(-k * np.log(m + L))))
    return float(rhs - omegas[K])


def unrolled_slack(trace, L, m, omegas, E):
    """Cumulative bound obtained by unrolling the per-step inequality exactly:
    ``sum_k E_k L^{K-1-k} / (m+L)^{K-k}``."""
    omegas = np.asarray(omegas, dtype=float)
    E = np.asarray(E, dtype=float)
    K = len(E)
    q = L / (m + L)
    k = np.arange(K)
    w = np.exp((K - 1 - k) * np.log(q)) / (m + L)
    rhs = q ** K * omegas[0] + float(np.sum(E * w))
    return float(rhs - omegas[K])


def lemma_mfmp_slack(record, field_f, field_h, L, z):
    """Right side minus left side of the per-iteration MFMP inequality at probe ``z``."""
    zk, zh, zn = record.z_k, record.z_half, record.z_next
    Hk = field_h(zk)
    lhs = float(field_f(zh) @ (zh - z))
    rhs = (L * float((Hk - field_h(zn)) @ (zn - z))
           - float((field_f(zk) - field_f(zh)) @ (zh - zn))
           + L * float((Hk - field_h(zh)) @ (zh - zn)))
    return rhs - lhs


def theorem1_bounds(L, K, omega, delta1, delta2):
    """Both readings of the relative-smoothness bound: stated and as proved."""
    base = L / K * omega
    return {"stated": base + delta1 / L + 3 * delta2, "proof": base + delta2 + 3 * L * delta1}


def theorem2_bound(L, K, omega, delta):
    return L / K * omega + 2 * L * delta
