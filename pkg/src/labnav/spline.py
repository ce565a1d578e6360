"""Differentiable natural cubic-spline densification of key-point paths.

With uniform knot parameters the natural spline is a fixed linear map of the
knot values, so densification is a single matmul on the tape and its Jacobian
is exact.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@lru_cache(maxsize=64)
def spline_matrix(n: int, m: int) -> np.ndarray:
    """Matrix B of shape (m*n + 1, n + 1): trajectory = B @ knots.

    Knots sit at parameters 0..n; gap j is sampled at j + i/m for i = 1..m.
    """
    if n < 1 or m < 1:
        raise ValueError("need n >= 1 key points and m >= 1 samples per gap")
    K = n + 1
    # second derivatives at interior knots: (M_{i-1} + 4 M_i + M_{i+1}) = 6 (q_{i+1} - 2 q_i + q_{i-1})
    second = np.zeros((K, K))
    if n >= 2:
        A = np.diag(np.full(n - 1, 4.0)) + np.diag(np.ones(n - 2), 1) + np.diag(np.ones(n - 2), -1)
        D = np.zeros((n - 1, K))
        for r in range(n - 1):
            D[r, r : r + 3] = (6.0, -12.0, 6.0)
        second[1:-1] = np.linalg.solve(A, D)
    eye = np.eye(K)
    rows = [eye[0]]
    for j in range(n):
        for i in range(1, m + 1):
            t = i / m
            s = 1.0 - t
            row = s * eye[j] + t * eye[j + 1]
            row = row + ((s**3 - s) * second[j] + (t**3 - t) * second[j + 1]) / 6.0
            if i == m:
                row = eye[j + 1]  # knots are interpolated exactly
            rows.append(row)
    return np.array(rows)


def spline_interpolate(keypoints, m: int, start) -> Tensor:
    """Densify ``keypoints`` (n, 3) or (N, n, 3) from ``start`` into (m*n + 1, 3) points."""
    K = ad.as_tensor(keypoints)
    S = ad.as_tensor(start)
    if K.ndim not in (2, 3) or K.shape[-1] != 3:
        raise ad.ShapeError("spline_interpolate", K.shape, detail="expected (n, 3) or (N, n, 3)")
    if not (np.all(np.isfinite(K.data)) and np.all(np.isfinite(S.data))):
        raise ValueError("spline_interpolate: non-finite knots")
    n = K.shape[-2]
    if K.ndim == 2:
        knots = ad.concat([ad.reshape(S, (1, 3)), K], axis=0)
    else:
        N = K.shape[0]
        start_rows = S.data.reshape(-1, 1, 3)
        if start_rows.shape[0] == 1:
            start_rows = np.broadcast_to(start_rows, (N, 1, 3))
        S_b = ad.reshape(S, start_rows.shape) if S.data.size == start_rows.size else Tensor(start_rows)
        knots = ad.concat([S_b, K], axis=1)
    return ad.matmul(Tensor(spline_matrix(n, m)), knots)


def segment_trajectory(trajectory, keypoints, m: int | None = None) -> list[np.ndarray]:
    """Split a densified trajectory into one segment per key-point gap.

    Segment j spans points ``[j*m, (j+1)*m]`` inclusive, so neighbours share
    their endpoint.
    """
    tau = np.asarray(getattr(trajectory, "data", trajectory))
    K = np.asarray(getattr(keypoints, "data", keypoints))
    n = K.shape[-2]
    if (tau.shape[0] - 1) % n:
        raise ValueError(f"trajectory of {tau.shape[0]} points does not match {n} key points")
    mm = (tau.shape[0] - 1) // n
    if m is not None and m != mm:
        raise ValueError(f"trajectory length {tau.shape[0]} inconsistent with n={n}, m={m}")
    return [tau[j * mm : (j + 1) * mm + 1].copy() for j in range(n)]
