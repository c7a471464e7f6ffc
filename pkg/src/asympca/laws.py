"""Asymmetric weighted least-squares low-rank factorization.

Fits Y ~ 1 m^T + U V^T under the asymmetric squared norm by alternating
row-wise (loadings) and column-wise (basis and center) weighted
least-squares blocks, refreshing the sign weights after each solve. Each
block is iterated to its own weight fixed point, which makes it an exact
minimizer of the convex block subproblem and keeps the recorded objective
sequence nonincreasing. Supports freezing leading basis columns to a given
subspace and restricting the basis span to a given subspace.
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .core import as_tau
from .exceptions import ContractError, DomainError

__all__ = [
    "SubspaceConstraint",
    "Factorization",
    "laws_fit",
    "objective_value",
    "weighted_ls_update_rows",
    "weighted_ls_update_cols",
    "as_data_matrix",
    "capture_objective_histories",
]

_RANK_RTOL = 1e-12
_RIDGE_SCALE = 1e-10
_DRIFT_RTOL = 1e-13

# optional sink for per-fit objective histories (used by verification suites)
_history_sink: list | None = None


@contextmanager
def capture_objective_histories():
    """Collect the objective history of every laws_fit run in this scope."""
    global _history_sink
    prev = _history_sink
    _history_sink = []
    try:
        yield _history_sink
    finally:
        _history_sink = prev


def as_data_matrix(Y) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(Y, dtype=float))
    if arr.ndim != 2:
        raise ContractError("data matrix must be two-dimensional")
    n, p = arr.shape
    if n < 2 or p < 1:
        raise ContractError(f"data matrix must be at least 2x1, got {n}x{p}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("data matrix contains non-finite entries")
    return arr


def _check_basis(M, p: int, name: str) -> np.ndarray:
    arr = np.asarray(M, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != p:
        raise ContractError(f"{name} basis must be a {p}xr matrix")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} basis contains non-finite entries")
    s = np.linalg.svd(arr, compute_uv=False)
    if arr.shape[1] == 0 or s[-1] <= _RANK_RTOL * max(s[0], 1.0):
        raise ContractError(f"{name} basis must have full column rank")
    return arr


@dataclass(frozen=True)
class SubspaceConstraint:
    """Span constraints for the fitted basis.

    `contains` freezes the leading columns of V to the given p x r basis;
    `within` restricts the basis to the span of the given p x R basis
    (r < k < R when both are present). `fixed_intercept` disables center
    estimation; callers pre-center the data.
    """

    contains: np.ndarray | None = None
    within: np.ndarray | None = None
    fixed_intercept: bool = False


@dataclass
class Factorization:
    """Result of a LAWS fit.

    `center` is None for pure linear fits. `weights` holds the sign
    weights of the final residuals (tau above zero, 1-tau otherwise);
    `objective_history` records the asymmetric objective after each sweep.
    """

    center: np.ndarray | None
    loadings: np.ndarray
    basis: np.ndarray
    weights: np.ndarray
    objective: float
    iterations: int
    converged: bool
    objective_history: list = field(default_factory=list)
    used_ridge: bool = False
    tau: float = 0.5

    @property
    def rank(self) -> int:
        return self.basis.shape[1]


def objective_value(Y, m, U, V, tau) -> float:
    """Asymmetric squared objective of the factorization (sign-rule weights)."""
    t = as_tau(tau)
    Y = np.asarray(Y, dtype=float)
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
        raise ContractError("loadings and basis must share the component count")
    if Y.shape != (U.shape[0], V.shape[0]):
        raise ContractError("data shape does not match the factors")
    R = Y - U @ V.T
    if m is not None:
        m = np.asarray(m, dtype=float).ravel()
        if m.shape[0] != V.shape[0]:
            raise ContractError("center length must match the column count")
        R = R - m[None, :]
    return float(np.sum(np.where(R > 0.0, t, 1.0 - t) * R * R))


def weighted_ls_update_rows(Y, V, W):
    """Exact row-wise weighted least squares for the loadings, given weights."""
    Y = np.ascontiguousarray(Y, dtype=float)
    V = np.ascontiguousarray(V, dtype=float)
    W = np.ascontiguousarray(W, dtype=float)
    if Y.shape != W.shape or V.shape[0] != Y.shape[1]:
        raise ContractError("shape mismatch in row update")
    U, used_ridge = backend.solve_rows(Y, V, W, _RANK_RTOL, _RIDGE_SCALE)
    return np.asarray(U), used_ridge


def weighted_ls_update_cols(Y, U, W):
    """Exact column-wise weighted least squares for the basis, given weights."""
    Y = np.ascontiguousarray(Y, dtype=float)
    U = np.ascontiguousarray(U, dtype=float)
    W = np.ascontiguousarray(W, dtype=float)
    if Y.shape != W.shape or U.shape[0] != Y.shape[0]:
        raise ContractError("shape mismatch in column update")
    V, used_ridge = backend.solve_rows(
        np.ascontiguousarray(Y.T), U, np.ascontiguousarray(W.T),
        _RANK_RTOL, _RIDGE_SCALE,
    )
    return np.asarray(V), used_ridge


def _svd_init(Y, k: int) -> np.ndarray:
    # k <= min(n, p) is enforced by callers
    Yc = Y - Y.mean(axis=0, keepdims=True)
    _, _, Vt = np.linalg.svd(Yc, full_matrices=False)
    return np.ascontiguousarray(Vt[:k].T)


def _objective_of(resid, tau) -> float:
    return float(np.sum(np.where(resid > 0.0, tau, 1.0 - tau) * resid * resid))


class _WithinBlock:
    """Column block when the basis is parameterized as V = B Vp (+ frozen F).

    The free unknowns (center, vec(Vp)) couple all columns, so the block is
    one joint weighted least-squares system, iterated to weight stability.
    """

    def __init__(self, B, F, intercept: bool):
        self.B = B
        self.F = F
        self.intercept = intercept

    def solve(self, Y, U, W, m, Vp, tau, max_iter):
        B, F = self.B, self.F
        p = Y.shape[1]
        R = B.shape[1]
        r = 0 if F is None else F.shape[1]
        kf = Vp.shape[1]
        nm = p if self.intercept else 0
        Ufree = U[:, r:]
        T = Y if r == 0 else Y - U[:, :r] @ F.T
        size = nm + R * kf
        stable = False
        # entry state joins the candidate set: a capped block never regresses
        resid0 = T - Ufree @ (B @ Vp).T
        if self.intercept:
            resid0 = resid0 - m[None, :]
        best = (_objective_of(resid0, tau), m, Vp, resid0)
        iterations = 0
        for _ in range(max_iter):
            iterations += 1
            A = np.zeros((size, size))
            rhs = np.zeros(size)
            G = np.einsum("ij,il,im->jlm", W, Ufree, Ufree, optimize=True)
            h = np.einsum("ij,ij,il->jl", W, T, Ufree, optimize=True)
            Avv = np.einsum("ja,jb,jlm->albm", B, B, G, optimize=True)
            A[nm:, nm:] = Avv.reshape(R * kf, R * kf)
            rhs[nm:] = (B.T @ h).reshape(R * kf)
            if self.intercept:
                A[:nm, :nm] = np.diag(W.sum(axis=0))
                S = W.T @ Ufree
                cross = (B[:, :, None] * S[:, None, :]).reshape(p, R * kf)
                A[:nm, nm:] = cross
                A[nm:, :nm] = cross.T
                rhs[:nm] = np.einsum("ij,ij->j", W, T)
            x = _solve_sym(A, rhs)
            m_new = x[:nm] if self.intercept else m
            Vp_new = x[nm:].reshape(R, kf)
            resid = T - Ufree @ (B @ Vp_new).T
            if self.intercept:
                resid = resid - m_new[None, :]
            obj = _objective_of(resid, tau)
            if obj < best[0]:
                best = (obj, m_new, Vp_new, resid)
            W_new = np.where(resid > 0.0, tau, 1.0 - tau)
            if np.array_equal(W_new, W):
                stable = True
                best = (obj, m_new, Vp_new, resid)
                break
            W = W_new
        _, m_out, Vp_out, resid = best
        W_out = np.where(resid > 0.0, tau, 1.0 - tau)
        return m_out, Vp_out, W_out, iterations, stable


def _solve_sym(A, rhs):
    """Symmetric solve with the same ridge fallback as the row kernels."""
    diag = np.diag(A)
    thresh = _RANK_RTOL * max(diag.max(initial=0.0), 0.0)
    try:
        L = np.linalg.cholesky(A + 0.0)
        if np.min(np.diag(L)) ** 2 <= thresh:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        ridged = A + np.eye(A.shape[0]) * (_RIDGE_SCALE * max(diag.sum(), 0.0))
        try:
            L = np.linalg.cholesky(ridged)
        except np.linalg.LinAlgError:
            return np.zeros_like(rhs)
    y = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, y)


def laws_fit(Y, k: int, tau, constraint: SubspaceConstraint | None = None,
             intercept: bool = True, *, max_sweeps: int = 200,
             inner_max: int = 60, v_init: np.ndarray | None = None) -> Factorization:
    """Fit the rank-k asymmetric weighted least-squares factorization.

    Alternates an exact loadings block (rows) and an exact basis/center
    block (columns), each driven to its weight fixed point, and stops when
    the sign-weight matrix survives a full sweep unchanged and the factors
    have stopped moving. Initial basis: top-k right singular vectors of the
    column-demeaned data (or `v_init`); initial weights 1/2 everywhere.

    Constraint handling: `contains` freezes the leading basis columns,
    `within` reparameterizes the basis inside the given span,
    `fixed_intercept` disables the center (callers pre-center).

    Returns a Factorization; `converged` is False when the sweep cap is hit.
    """
    t = as_tau(tau)
    Y = as_data_matrix(Y)
    n, p = Y.shape
    cons = constraint or SubspaceConstraint()
    if not 1 <= k < p:
        raise ContractError(f"rank k={k} must satisfy 1 <= k < p={p}")
    if k > n:
        raise ContractError(f"rank k={k} exceeds the number of rows n={n}")

    F = None if cons.contains is None else _check_basis(cons.contains, p, "contains")
    B = None if cons.within is None else _check_basis(cons.within, p, "within")
    r = 0 if F is None else F.shape[1]
    R = None if B is None else B.shape[1]
    if r >= k:
        raise ContractError("contains basis dimension must be below k")
    if B is not None:
        if R <= k:
            raise ContractError("within basis dimension must exceed k")
        if F is not None:
            proj = F - B @ np.linalg.lstsq(B, F, rcond=None)[0]
            if np.max(np.abs(proj)) > 1e-8 * (1.0 + np.max(np.abs(F))):
                raise ContractError("contains basis must lie within the within span")
    fit_center = intercept and not cons.fixed_intercept
    kf = k - r

    if v_init is not None:
        free0 = np.asarray(v_init, dtype=float)
        if free0.shape != ((R, kf) if B is not None else (p, kf)):
            raise ContractError("v_init has the wrong shape for this constraint")
    elif B is not None:
        cand = _svd_init(Y, kf)
        free0 = np.linalg.lstsq(B, cand, rcond=None)[0]
    else:
        free0 = _svd_init(Y, k)[:, r:] if r else _svd_init(Y, k)

    Vp = np.ascontiguousarray(free0)
    m = Y.mean(axis=0) if fit_center else np.zeros(p)
    W = np.full((n, p), 0.5)
    within_block = _WithinBlock(B, F, fit_center) if B is not None else None

    def v_full(Vp_cur):
        free = B @ Vp_cur if B is not None else Vp_cur
        return np.ascontiguousarray(np.hstack([F, free]) if r else free)

    state = _FitState(Y, F, B, r, fit_center, v_full, within_block,
                      t, inner_max)
    U = np.zeros((n, k))
    history: list[float] = []
    converged = False
    sweeps = 0
    obj = np.inf
    polish_allowed = True
    exact_floor = 1e-24 * (1.0 + float(np.sum(Y * Y)))

    for _ in range(max_sweeps):
        sweeps += 1
        W_entry = W
        U, m, Vp, W, stable = state.full_sweep(U, m, Vp, W)
        resid = Y - m[None, :] - U @ v_full(Vp).T
        obj = _objective_of(resid, t)
        history.append(obj)

        if obj <= exact_floor:
            # exact representation: zero residuals make every weight
            # pattern optimal, so sign noise must not block termination
            converged = True
            break

        if stable and polish_allowed and np.array_equal(W, W_entry):
            # weight pattern survived a full sweep; polish the factors
            # to the fixed point of the frozen weighted problem
            U2, m2, Vp2, polished = state.polish(U, m, Vp, W)
            resid2 = Y - m2[None, :] - U2 @ v_full(Vp2).T
            W2 = np.where(resid2 > 0.0, t, 1.0 - t)
            obj2 = _objective_of(resid2, t)
            improved = obj2 <= obj * (1 + 1e-12) + 1e-300
            if polished and improved and np.array_equal(W2, W):
                U, m, Vp, W = U2, m2, Vp2, W2
                obj = min(obj, obj2)
                history.append(obj)
                converged = True
                break
            if improved:
                # pattern moved under the polished factors: keep the
                # progress and keep sweeping
                U, m, Vp, W = U2, m2, Vp2, W2
                obj = min(obj, obj2)
                history.append(obj)
            if not polished or not improved:
                # a polish that stalls or regresses will do so again;
                # do not pay for it on every remaining sweep
                polish_allowed = False

    V_final = v_full(Vp)
    resid = Y - m[None, :] - U @ V_final.T
    W_final = np.where(resid > 0.0, t, 1.0 - t)
    result = Factorization(
        center=m.copy() if fit_center else None,
        loadings=U,
        basis=V_final,
        weights=W_final,
        objective=obj,
        iterations=sweeps,
        converged=converged,
        objective_history=history,
        used_ridge=state.used_ridge,
        tau=t,
    )
    if _history_sink is not None:
        _history_sink.append(list(history))
    return result


class _FitState:
    """Block solvers for one fit configuration."""

    def __init__(self, Y, F, B, r, fit_center, v_full, within_block,
                 tau, inner_max):
        self.Y = Y
        self.F = F
        self.B = B
        self.r = r
        self.fit_center = fit_center
        self.v_full = v_full
        self.within_block = within_block
        self.tau = tau
        self.inner_max = inner_max
        self.used_ridge = False

    def full_sweep(self, U, m, Vp, W):
        """One weight-learning sweep: stabilized U block then V block."""
        Y, t = self.Y, self.tau
        n = Y.shape[0]
        r = self.r
        V_eff = self.v_full(Vp)
        target = Y - m[None, :] if self.fit_center else Y
        U, W, _, stable_u, ridge_u = backend.rows_irls(
            np.ascontiguousarray(target), V_eff, np.ascontiguousarray(W),
            t, self.inner_max, _RANK_RTOL, _RIDGE_SCALE,
            np.ascontiguousarray(U))
        U = np.asarray(U)
        W = np.asarray(W)
        self.used_ridge = self.used_ridge or ridge_u

        if self.within_block is not None:
            m, Vp, W, _, stable_v = self.within_block.solve(
                Y, U, W, m, Vp, t, self.inner_max)
        else:
            F = self.F
            offset = U[:, :r] @ F.T if r else 0.0
            targetT = np.ascontiguousarray((Y - offset).T)
            design_cols = [np.ones((n, 1))] if self.fit_center else []
            design_cols.append(U[:, r:])
            design = np.ascontiguousarray(np.hstack(design_cols))
            x_cols = [m[:, None]] if self.fit_center else []
            x_cols.append(Vp)
            X0 = np.ascontiguousarray(np.hstack(x_cols))
            X, WT, _, stable_v, ridge_v = backend.rows_irls(
                targetT, design, np.ascontiguousarray(W.T),
                t, self.inner_max, _RANK_RTOL, _RIDGE_SCALE, X0)
            X = np.asarray(X)
            W = np.ascontiguousarray(np.asarray(WT).T)
            self.used_ridge = self.used_ridge or ridge_v
            if self.fit_center:
                m = X[:, 0]
                Vp = X[:, 1:]
            else:
                Vp = X
        return U, m, Vp, W, stable_u and stable_v

    def _u_solve(self, m, Vp, W):
        Y = self.Y
        target = Y - m[None, :] if self.fit_center else Y
        U, ridge = backend.solve_rows(
            np.ascontiguousarray(target), self.v_full(Vp),
            np.ascontiguousarray(W), _RANK_RTOL, _RIDGE_SCALE)
        self.used_ridge = self.used_ridge or ridge
        return np.asarray(U)

    def _v_solve(self, U, m, Vp, W):
        Y, r = self.Y, self.r
        n = Y.shape[0]
        if self.within_block is not None:
            m_new, Vp_new, _, _, _ = self.within_block.solve(
                Y, U, W, m, Vp, self.tau, 1)
            # max_iter=1 performs exactly one frozen-weight joint solve
            return m_new, Vp_new
        F = self.F
        offset = U[:, :r] @ F.T if r else 0.0
        targetT = np.ascontiguousarray((Y - offset).T)
        design_cols = [np.ones((n, 1))] if self.fit_center else []
        design_cols.append(U[:, r:])
        design = np.ascontiguousarray(np.hstack(design_cols))
        X, ridge = backend.solve_rows(
            targetT, design, np.ascontiguousarray(W.T),
            _RANK_RTOL, _RIDGE_SCALE)
        X = np.asarray(X)
        self.used_ridge = self.used_ridge or ridge
        if self.fit_center:
            return X[:, 0], X[:, 1:]
        return m, X

    def polish(self, U, m, Vp, W, max_polish: int = 1000):
        """Frozen-weight alternation to the interior fixed point."""
        Wc = np.ascontiguousarray(W)
        for _ in range(max_polish):
            U_new = self._u_solve(m, Vp, Wc)
            m_new, Vp_new = self._v_solve(U_new, m, Vp, Wc)
            drift = max(_max_abs_diff(U_new, U), _max_abs_diff(m_new, m),
                        _max_abs_diff(Vp_new, Vp))
            U, m, Vp = U_new, m_new, Vp_new
            scale = 1.0 + max(np.max(np.abs(U)), np.max(np.abs(Vp)),
                              np.max(np.abs(m)))
            if drift <= _DRIFT_RTOL * scale:
                return U, m, Vp, True
        return U, m, Vp, False


def _max_abs_diff(a, b) -> float:
    if a is None or b is None or np.shape(a) != np.shape(b):
        return np.inf
    if np.size(a) == 0:
        return 0.0
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
