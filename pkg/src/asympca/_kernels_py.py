"""Pure-numpy implementations of the hot kernels.

Mirrors the compiled module `_kernels_c`. The two backends implement the
same update rules and tie conventions so results agree to floating-point
reordering; `asympca.backend` picks one at import time.
"""
from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def expectile_sorted(ys: np.ndarray, tau: float, max_iter: int = 200):
    """Scalar expectile of pre-sorted values by the weight-set fixed point.

    Given a label split, the candidate is the ratio
    {tau*sum_above + (1-tau)*sum_below} / {tau*n_above + (1-tau)*n_below};
    labels are then refreshed from the sign of y - e (ties labeled below).
    Stops once the label split repeats.

    Returns (value, iterations, converged).
    """
    n = ys.shape[0]
    prefix = np.empty(n + 1)
    prefix[0] = 0.0
    np.cumsum(ys, out=prefix[1:])
    total = prefix[n]
    e = total / n
    # idx = number of values <= e; values above e carry weight tau
    idx = int(np.searchsorted(ys, e, side="right"))
    iterations = 0
    converged = False
    for _ in range(max_iter):
        iterations += 1
        n_above = n - idx
        s_above = total - prefix[idx]
        num = tau * s_above + (1.0 - tau) * prefix[idx]
        den = tau * n_above + (1.0 - tau) * idx
        e = num / den
        new_idx = int(np.searchsorted(ys, e, side="right"))
        if new_idx == idx:
            converged = True
            break
        idx = new_idx
    return float(e), iterations, converged


def sign_weights(resid: np.ndarray, tau: float) -> np.ndarray:
    """tau where the residual is strictly positive, 1-tau otherwise."""
    return np.where(resid > 0.0, tau, 1.0 - tau)


def _chol_factor_batched(G: np.ndarray, rank_rtol: float):
    """Tolerant Cholesky of a stack of symmetric systems.

    A pivot at or below rank_rtol times the largest original diagonal entry
    marks the system singular. Returns (L, ok_mask).
    """
    nsys, k, _ = G.shape
    L = np.zeros_like(G)
    diag = np.einsum("nii->ni", G)
    thresh = rank_rtol * np.maximum(diag.max(axis=1), 0.0)
    ok = np.ones(nsys, dtype=bool)
    for j in range(k):
        pivot = G[:, j, j] - np.einsum("nm,nm->n", L[:, j, :j], L[:, j, :j])
        bad = pivot <= thresh
        ok &= ~bad
        pivot = np.where(bad, 1.0, pivot)
        L[:, j, j] = np.sqrt(pivot)
        if j + 1 < k:
            rest = G[:, j + 1 :, j] - np.einsum(
                "nim,nm->ni", L[:, j + 1 :, :j], L[:, j, :j]
            )
            L[:, j + 1 :, j] = rest / L[:, j, j][:, None]
    return L, ok


def _chol_solve_batched(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    nsys, k, _ = L.shape
    y = np.zeros_like(b)
    for j in range(k):
        y[:, j] = (b[:, j] - np.einsum("nm,nm->n", L[:, j, :j], y[:, :j])) / L[:, j, j]
    x = np.zeros_like(b)
    for j in range(k - 1, -1, -1):
        x[:, j] = (
            y[:, j] - np.einsum("nm,nm->n", L[:, j + 1 :, j], x[:, j + 1 :])
        ) / L[:, j, j]
    return x


def solve_rows(Y: np.ndarray, V: np.ndarray, W: np.ndarray,
               rank_rtol: float = 1e-12, ridge_scale: float = 1e-10):
    """Row-wise weighted least squares: per row i minimize
    sum_j W[i,j] * (Y[i,j] - u . V[j])^2.

    Singular normal equations fall back to a ridge of
    ridge_scale*trace(G) on the diagonal. Returns (U, used_ridge).
    """
    G = np.einsum("ij,jk,jl->ikl", W, V, V, optimize=True)
    b = np.einsum("ij,jk->ik", W * Y, V, optimize=True)
    L, ok = _chol_factor_batched(G, rank_rtol)
    used_ridge = False
    if not ok.all():
        used_ridge = True
        bad = ~ok
        Gb = G[bad].copy()
        k = G.shape[1]
        trace = np.einsum("nii->n", Gb)
        Gb[:, np.arange(k), np.arange(k)] += (ridge_scale * trace)[:, None]
        Lb, okb = _chol_factor_batched(Gb, rank_rtol)
        if not okb.all():
            # zero normal matrix: the zero vector minimizes
            still = ~okb
            Lb[still] = np.eye(k)[None, :, :]
            bbad = b[bad]
            bbad[still] = 0.0
            b = b.copy()
            b[bad] = bbad
        L[bad] = Lb
    U = _chol_solve_batched(L, b)
    return U, used_ridge


def _row_objectives(resid: np.ndarray, tau: float) -> np.ndarray:
    w = np.where(resid > 0.0, tau, 1.0 - tau)
    return np.einsum("ij,ij,ij->i", w, resid, resid)


def rows_irls(Y: np.ndarray, V: np.ndarray, W0: np.ndarray, tau: float,
              max_iter: int = 60, rank_rtol: float = 1e-12,
              ridge_scale: float = 1e-10, U0: np.ndarray | None = None):
    """Stabilized row-wise asymmetric least squares.

    Repeats (solve given weights, refresh weights from residual signs)
    until the weight pattern stops changing. Each row's stable point is the
    exact minimizer of its convex asymmetric objective. If the pattern cycles
    past max_iter, the best-objective iterate per row is returned instead;
    an entry iterate `U0` joins the candidate set so a capped row can never
    end worse than it started.

    Returns (U, W, iterations, stable, used_ridge).
    """
    W = W0
    used_ridge = False
    stable = False
    iterations = 0
    if U0 is not None:
        best_U = U0
        best_resid = Y - U0 @ V.T
        best_obj = _row_objectives(best_resid, tau)
    else:
        best_obj = None
        best_U = None
        best_resid = None
    for _ in range(max_iter):
        iterations += 1
        U, ridge = solve_rows(Y, V, W, rank_rtol, ridge_scale)
        used_ridge = used_ridge or ridge
        resid = Y - U @ V.T
        obj = _row_objectives(resid, tau)
        if best_obj is None:
            best_obj = obj
            best_U = U
            best_resid = resid
        else:
            better = obj < best_obj
            if better.any():
                best_obj = np.where(better, obj, best_obj)
                best_U = np.where(better[:, None], U, best_U)
                best_resid = np.where(better[:, None], resid, best_resid)
        W_new = np.where(resid > 0.0, tau, 1.0 - tau)
        if np.array_equal(W_new, W):
            stable = True
            best_U = U
            best_resid = resid
            break
        W = W_new
    W_out = np.where(best_resid > 0.0, tau, 1.0 - tau)
    return best_U, W_out, iterations, stable, used_ridge
