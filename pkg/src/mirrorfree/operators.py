"""Operators on R^d and their derivatives.

A :class:`VectorField` is a closure ``z -> F(z)`` plus optional derivative
closures.  Everything in the library (objective operators, mirror operators,
model operators of the third-order sub-problem) is expressed through it.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels

_EPS = np.finfo(float).eps
FD_STEP = np.cbrt(_EPS)


class FieldError(ValueError):
    """Raised on dimension mismatch or non-finite operator values."""


def as_point(z, dim=None):
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        z = z.reshape(1)
    if z.ndim != 1:
        raise FieldError(f"points are 1-d vectors, got shape {z.shape}")
    if dim is not None and z.shape[0] != dim:
        raise FieldError(f"expected dimension {dim}, got {z.shape[0]}")
    if not np.all(np.isfinite(z)):
        raise FieldError("point has non-finite entries")
    return z


@dataclass(frozen=True)
class MinMaxSplit:
    dim_x: int
    dim_y: int

    def __post_init__(self):
        if self.dim_x < 1 or self.dim_y < 1:
            raise FieldError("both blocks need at least one coordinate")

    @property
    def dim(self):
        return self.dim_x + self.dim_y

    def split(self, z):
        return z[: self.dim_x], z[self.dim_x:]


@dataclass(frozen=True)
class VectorField:
    """An operator ``R^d -> R^d``.

    ``jac(z)`` returns the d x d Jacobian, ``second(z, h)`` returns the second
    directional derivative ``D^2 F(z)[h, h]`` and ``batch(Z)`` evaluates the
    field on the rows of an ``(N, d)`` array.  All three are optional.
    """

    dim: int
    fn: Callable[[np.ndarray], np.ndarray]
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    second: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = field(default="field", compare=False)

    def __post_init__(self):
        if int(self.dim) < 1:
            raise FieldError("field dimension must be positive")

    def __call__(self, z):
        return eval_field(self, z)

    def many(self, Z):
        """Evaluate on every row of ``Z``."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.dim:
            raise FieldError(f"expected rows of length {self.dim}, got {Z.shape[1]}")
        if self.batch is not None:
            out = np.asarray(self.batch(Z), dtype=float)
        else:
            out = np.array([self.fn(row) for row in Z], dtype=float).reshape(Z.shape)
        if not np.all(np.isfinite(out)):
            raise FieldError(f"{self.name}: non-finite values")
        return out


def eval_field(field, z):
    z = as_point(z, field.dim)
    out = np.asarray(field.fn(z), dtype=float).reshape(-1)
    if out.shape[0] != field.dim:
        raise FieldError(f"{field.name}: output dimension {out.shape[0]} != {field.dim}")
    if not np.all(np.isfinite(out)):
        raise FieldError(f"{field.name}: non-finite value at z={z}")
    return out


def fd_step(z):
    return FD_STEP * max(1.0, float(np.linalg.norm(z)))


def jacobian_fd(field, z, step=None):
    """Central-difference Jacobian; column j is the derivative along ``e_j``."""
    z = as_point(z, field.dim)
    if step is None:
        step = fd_step(z)
    if step <= 0:
        raise FieldError("step must be positive")
    d = field.dim
    J = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        J[:, j] = (field.fn(z + e) - field.fn(z - e)) / (2.0 * step)
    return J


def jacobian(field, z):
    z = as_point(z, field.dim)
    if field.jac is not None:
        J = np.asarray(field.jac(z), dtype=float)
    else:
        J = jacobian_fd(field, z)
    if J.shape != (field.dim, field.dim):
        raise FieldError(f"{field.name}: Jacobian has shape {J.shape}")
    if not np.all(np.isfinite(J)):
        raise FieldError(f"{field.name}: non-finite Jacobian at z={z}")
    return J


def second_directional_fd(field, z, h):
    """Second difference ``(F(z+th) - 2F(z) + F(z-th)) / t^2``."""
    z = as_point(z, field.dim)
    h = as_point(h, field.dim)
    nh = float(np.linalg.norm(h))
    if nh == 0.0:
        return np.zeros(field.dim)
    t = _EPS ** 0.25 * max(1.0, float(np.linalg.norm(z))) / nh
    return (field.fn(z + t * h) - 2.0 * field.fn(z) + field.fn(z - t * h)) / (t * t)


def second_directional(field, z, h):
    z = as_point(z, field.dim)
    h = as_point(h, field.dim)
    if field.second is not None:
        out = np.asarray(field.second(z, h), dtype=float)
    else:
        out = second_directional_fd(field, z, h)
    if not np.all(np.isfinite(out)):
        raise FieldError(f"{field.name}: non-finite second derivative")
    return out


def symmetric_min_eig(M):
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise FieldError("matrix has non-finite entries")
    try:
        return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
    except np.linalg.LinAlgError as exc:
        raise FieldError("eigenvalue solver failed") from exc


def build_minmax_field(grad_x, grad_y, split, jac=None, name="minmax"):
    """The operator ``(grad_x f, -grad_y f)`` of a min-max objective ``f(x, y)``."""

    def fn(z):
        x, y = split.split(z)
        gx = np.atleast_1d(np.asarray(grad_x(x, y), dtype=float))
        gy = np.atleast_1d(np.asarray(grad_y(x, y), dtype=float))
        if gx.shape[0] != split.dim_x or gy.shape[0] != split.dim_y:
            raise FieldError("partial gradients do not match the split")
        return np.concatenate([gx, -gy])

    return VectorField(split.dim, fn, jac=jac, name=name)


# ---------------------------------------------------------------------------
# building blocks


def identity_field(dim):
    return VectorField(
        dim,
        lambda z: z.copy(),
        jac=lambda z: np.eye(dim),
        second=lambda z, h: np.zeros(dim),
        batch=lambda Z: np.array(Z, dtype=float),
        name="identity",
    )


def linear_field(M, c=None, name="linear"):
    """``z -> M z + c``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    d = M.shape[0]
    c = np.zeros(d) if c is None else np.asarray(c, dtype=float)
    return VectorField(
        d,
        lambda z: M @ z + c,
        jac=lambda z: M.copy(),
        second=lambda z, h: np.zeros(d),
        batch=lambda Z: Z @ M.T + c,
        name=name,
    )


def constant_field(c, name="constant"):
    c = np.asarray(c, dtype=float)
    return linear_field(np.zeros((c.shape[0], c.shape[0])), c, name=name)


def bilinear_field(B, name="bilinear"):
    """``(B y, -B^T x)``: the min-max operator of ``x^T B y``."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    nx, ny = B.shape
    M = np.zeros((nx + ny, nx + ny))
    M[:nx, nx:] = B
    M[nx:, :nx] = -B.T
    return linear_field(M, name=name)


def rotation_field():
    """``F(x, y) = (y, -x)`` on R^2."""
    return bilinear_field([[1.0]], name="rotation")


def _cubic_block_jac(v, cubic, linear):
    k = v.shape[0]
    return (cubic * (v @ v) + linear) * np.eye(k) + 2.0 * cubic * np.outer(v, v)


def _cubic_block_second(v, h, cubic):
    # D^2 (||v||^2 v)[h, h] = 2||h||^2 v + 4 (v.h) h
    return cubic * (2.0 * (h @ h) * v + 4.0 * (v @ h) * h)


def cubic_block_field(split, cubic=1.0, linear=0.0, name="cubic-blocks"):
    """``(cubic ||x||^2 x + linear x, cubic ||y||^2 y + linear y)``.

    With ``cubic=1, linear=0`` and a single block this is the gradient of
    ``||h||^4 / 4``; with ``linear=1`` on two blocks it is the mirror operator
    of the quartic saddle family.
    """
    if isinstance(split, MinMaxSplit):
        d, cut = split.dim, split.dim_x
    else:
        d = cut = int(split)
    blocks = [slice(0, cut), slice(cut, d)] if cut < d else [slice(0, d)]

    def fn(z):
        out = np.empty(d)
        for sl in blocks:
            v = z[sl]
            out[sl] = (cubic * (v @ v) + linear) * v
        return out

    def jac(z):
        J = np.zeros((d, d))
        for sl in blocks:
            J[sl, sl] = _cubic_block_jac(z[sl], cubic, linear)
        return J

    def second(z, h):
        out = np.zeros(d)
        for sl in blocks:
            out[sl] = _cubic_block_second(z[sl], h[sl], cubic)
        return out

    def batch(Z):
        return kernels.cubic_blocks(Z, cut, cubic, linear)

    return VectorField(d, fn, jac=jac, second=second, batch=batch, name=name)


def d4_gradient_field(dim):
    """Gradient of ``d4(h) = ||h||^4 / 4``, i.e. ``||h||^2 h``."""
    if int(dim) < 1:
        raise FieldError("field dimension must be positive")
    return cubic_block_field(int(dim), 1.0, 0.0, name="d4-gradient")


def d4_hessian(h):
    return (h @ h) * np.eye(h.shape[0]) + 2.0 * np.outer(h, h)


def combine(fields: Sequence[VectorField], coefs: Sequence[float], name="combination"):
    """The linear combination ``sum_i coefs[i] * fields[i]``."""
    fields = list(fields)
    coefs = [float(c) for c in coefs]
    if not fields or len(fields) != len(coefs):
        raise FieldError("need one coefficient per field")
    d = fields[0].dim
    if any(f.dim != d for f in fields):
        raise FieldError("fields have different dimensions")

    def fn(z):
        return sum(c * f.fn(z) for c, f in zip(coefs, fields))

    def jac(z):
        return sum(c * jacobian(f, z) for c, f in zip(coefs, fields))

    def second(z, h):
        return sum(c * second_directional(f, z, h) for c, f in zip(coefs, fields))

    def stacked(Z):
        return sum(c * f.batch(Z) for c, f in zip(coefs, fields))

    batch = stacked if all(f.batch is not None for f in fields) else None

    return VectorField(d, fn, jac=jac, second=second, batch=batch, name=name)
