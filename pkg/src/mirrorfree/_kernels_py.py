"""Pure NumPy implementations of the batched hot kernels.

Every function takes row-stacked points ``Z`` of shape ``(N, d)`` and returns
an array of the same shape.  The compiled module ``_ckernels`` exposes the
same names and signatures.
"""
import numpy as np


def cubic_blocks(Z, split, cubic, linear):
    """Blockwise ``cubic * ||v||^2 v + linear * v`` with blocks ``[:split]``, ``[split:]``."""
    Z = np.ascontiguousarray(Z, dtype=float)
    out = np.empty_like(Z)
    for sl in (slice(0, split), slice(split, Z.shape[1])):
        V = Z[:, sl]
        sq = np.einsum("ij,ij->i", V, V)
        out[:, sl] = (cubic * sq + linear)[:, None] * V
    return out


def quartic_saddle(Z, E, A, b, C, d, B):
    """Min-max field of ``f(x) - f(y) + x^T B y`` with the quartic ``f``."""
    Z = np.ascontiguousarray(Z, dtype=float)
    n = E.shape[0]
    X, Y = Z[:, :n], Z[:, n:]

    def grad_f(V):
        EV = V @ E.T
        R = V @ A.T - b
        CV = V @ C.T - d
        sq = np.einsum("ij,ij->i", EV, EV)
        return (sq[:, None] * EV) @ E + (R ** 3) @ A + CV @ C

    out = np.empty_like(Z)
    out[:, :n] = grad_f(X) + Y @ B.T
    out[:, n:] = grad_f(Y) - X @ B
    return out


def quartic_game(Z, A):
    """``(4||x||^2 x + A y, 4||y||^2 y - A^T x)`` row by row."""
    Z = np.ascontiguousarray(Z, dtype=float)
    n = A.shape[0]
    out = cubic_blocks(Z, n, 4.0, 0.0)
    out[:, :n] += Z[:, n:] @ A.T
    out[:, n:] -= Z[:, :n] @ A
    return out


def segment_sums(V, dz, weights):
    """``sum_i w_i <V[s, i], dz[s]>`` for every segment ``s``.

    ``V`` has shape ``(S, q, d)``, ``dz`` shape ``(S, d)``, ``weights`` shape ``(q,)``.
    """
    return np.einsum("sqd,sd,q->s", V, dz, weights)
