"""Principal component constructions in asymmetric norms.

Three constructions of an ordered orthonormal component basis:

* top_down: fit the full k-dimensional subspace first, then carve a nested
  sequence of best j-dimensional subspaces inside it.
* bottom_up: grow the subspace one dimension at a time, re-estimating the
  center at each step.
* principal_expectile: eigen-iteration maximizing the tau-variance of the
  projected data, with label fixed-point detection, cycle restarts and a
  tau-path warm start.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import as_tau, expectile_1d, tau_variance
from .exceptions import ContractError, DegenerateInputError
from .laws import (
    Factorization,
    SubspaceConstraint,
    as_data_matrix,
    laws_fit,
    objective_value,
)
from . import backend

__all__ = [
    "ComponentSet",
    "PecState",
    "top_down",
    "bottom_up",
    "principal_expectile",
    "pec_center",
    "pec_cov",
    "explained_variance",
]

TOPDOWN = "topdown"
BOTTOMUP = "bottomup"
PEC = "pec"


@dataclass(frozen=True)
class PecState:
    """Converged state of one principal-expectile component.

    `phi` keeps the orientation the iteration converged to; the component
    stored in the ComponentSet may be sign-flipped by the orientation
    convention, and the two differ for asymmetric data.
    """

    weights: np.ndarray
    e_hat: np.ndarray
    c_matrix: np.ndarray
    phi: np.ndarray
    mu: float
    stable: bool


@dataclass
class ComponentSet:
    """Ordered orthonormal components with loadings and center.

    `per_component_stats` holds one (tau-variance captured, converged,
    iterations) triple per component. The orientation convention makes each
    component's largest-magnitude entry positive.
    """

    center: np.ndarray
    components: np.ndarray
    loadings: np.ndarray
    per_component_stats: list[tuple[float, bool, int]]
    algorithm: str
    tau: float
    fits: list[Factorization] = field(default_factory=list)
    pec_states: list[PecState] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.components.shape[1]

    @property
    def converged(self) -> bool:
        return all(flag for _, flag, _ in self.per_component_stats)


def _orient(components: np.ndarray, loadings: np.ndarray | None = None):
    """Largest-magnitude entry positive, per column; loadings flip along."""
    comps = components.copy()
    loads = None if loadings is None else loadings.copy()
    for j in range(comps.shape[1]):
        idx = int(np.argmax(np.abs(comps[:, j])))
        if comps[idx, j] < 0:
            comps[:, j] = -comps[:, j]
            if loads is not None:
                loads[:, j] = -loads[:, j]
    return comps, loads


def _orth_extend(D: np.ndarray | None, candidates: np.ndarray) -> np.ndarray:
    """Dominant unit direction of span(candidates) outside span(D)."""
    resid = np.asarray(candidates, dtype=float)
    scale = np.linalg.svd(resid, compute_uv=False)[0]
    if D is not None and D.shape[1]:
        resid = resid - D @ (D.T @ resid)
    u, s, _ = np.linalg.svd(resid, full_matrices=False)
    if s[0] <= 1e-10 * max(1.0, scale):
        raise DegenerateInputError("fitted subspace added no new direction")
    return u[:, 0]


def _fit_with_restarts(Y, k, tau, constraint, intercept, max_sweeps,
                       restarts, rng):
    """laws_fit plus random re-initializations on nonconvergence."""
    fit = laws_fit(Y, k, tau, constraint, intercept, max_sweeps=max_sweeps)
    attempts = 0
    best = fit
    while not fit.converged and attempts < restarts:
        attempts += 1
        if rng is None:
            break
        if constraint is not None and constraint.within is not None:
            shape = (constraint.within.shape[1],
                     k - (0 if constraint.contains is None
                          else constraint.contains.shape[1]))
        else:
            shape = (Y.shape[1],
                     k - (0 if constraint is None or constraint.contains is None
                          else constraint.contains.shape[1]))
        v0 = rng.standard_normal(shape)
        fit = laws_fit(Y, k, tau, constraint, intercept,
                       max_sweeps=max_sweeps, v_init=v0)
        if fit.converged or fit.objective < best.objective:
            best = fit
        if fit.converged:
            return fit
    return best if not fit.converged else fit


def top_down(Y, k: int, tau, *, max_sweeps: int = 200, restarts: int = 0,
             rng: np.random.Generator | None = None) -> ComponentSet:
    """Nested components carved inside the best k-dimensional affine fit.

    The outer fit determines the center and the k-dimensional subspace; the
    inner fits re-use that center and find, for each j < k, the best
    j-dimensional subspace containing the previous one and contained in the
    outer span.
    """
    t = as_tau(tau)
    Y = as_data_matrix(Y)
    n, p = Y.shape
    _check_k(k, n, p)
    outer = _fit_with_restarts(Y, k, t, None, True, max_sweeps, restarts, rng)
    m = outer.center
    B = np.linalg.qr(outer.basis)[0]
    Yc = Y - m[None, :]
    fits = [outer]
    D = np.empty((p, 0))
    stats: list[tuple[float, bool, int]] = []
    for j in range(1, k):
        cons = SubspaceConstraint(
            contains=D if j > 1 else None, within=B, fixed_intercept=True)
        fit_j = _fit_with_restarts(Yc, j, t, cons, False, max_sweeps,
                                   restarts, rng)
        fits.append(fit_j)
        new_dir = _orth_extend(D if j > 1 else None, fit_j.basis)
        D = np.hstack([D, new_dir[:, None]])
        stats.append((0.0, fit_j.converged, fit_j.iterations))
    # the last direction completes the outer span
    last = _orth_extend(D if k > 1 else None, B)
    D = np.hstack([D, last[:, None]])
    stats.append((0.0, outer.converged, outer.iterations))
    loadings = outer.loadings @ (outer.basis.T @ D)
    D, loadings = _orient(D, loadings)
    stats = [(tau_variance(loadings[:, j], t), c, i)
             for j, (_, c, i) in enumerate(stats)]
    return ComponentSet(center=m.copy(), components=D, loadings=loadings,
                        per_component_stats=stats, algorithm=TOPDOWN, tau=t,
                        fits=fits)


def bottom_up(Y, k: int, tau, *, max_sweeps: int = 200, restarts: int = 0,
              rng: np.random.Generator | None = None) -> ComponentSet:
    """Components grown one dimension at a time, center re-estimated each step."""
    t = as_tau(tau)
    Y = as_data_matrix(Y)
    n, p = Y.shape
    _check_k(k, n, p)
    D = np.empty((p, 0))
    fits = []
    stats: list[tuple[float, bool, int]] = []
    fit = None
    for j in range(1, k + 1):
        cons = SubspaceConstraint(contains=D) if j > 1 else None
        fit = _fit_with_restarts(Y, j, t, cons, True, max_sweeps,
                                 restarts, rng)
        fits.append(fit)
        new_dir = _orth_extend(D if j > 1 else None, fit.basis)
        D = np.hstack([D, new_dir[:, None]])
        stats.append((0.0, fit.converged, fit.iterations))
    m = fit.center
    loadings = fit.loadings @ (fit.basis.T @ D)
    D, loadings = _orient(D, loadings)
    stats = [(tau_variance(loadings[:, j], t), c, i)
             for j, (_, c, i) in enumerate(stats)]
    return ComponentSet(center=m.copy(), components=D, loadings=loadings,
                        per_component_stats=stats, algorithm=BOTTOMUP, tau=t,
                        fits=fits)


def _check_k(k, n, p):
    if not 1 <= k < p:
        raise ContractError(f"k={k} must satisfy 1 <= k < p={p}")
    if k > n:
        raise ContractError(f"k={k} exceeds the sample count n={n}")


def pec_center(Y, positive: np.ndarray, tau) -> np.ndarray:
    """Label-weighted center: tau-weighted mean of the positive set and
    (1-tau)-weighted mean of the rest, jointly normalized."""
    t = as_tau(tau)
    Y = np.asarray(Y, dtype=float)
    pos = np.asarray(positive, dtype=bool)
    if pos.shape != (Y.shape[0],):
        raise ContractError("labels must be a boolean vector of length n")
    w = np.where(pos, t, 1.0 - t)
    return (w[:, None] * Y).sum(axis=0) / w.sum()


def pec_cov(Y, positive: np.ndarray, e_hat, tau) -> np.ndarray:
    """Label-weighted second-moment matrix about the label-weighted center."""
    t = as_tau(tau)
    Y = np.asarray(Y, dtype=float)
    pos = np.asarray(positive, dtype=bool)
    if pos.shape != (Y.shape[0],):
        raise ContractError("labels must be a boolean vector of length n")
    e = np.asarray(e_hat, dtype=float)
    Z = Y - e[None, :]
    w = np.where(pos, t, 1.0 - t) / Y.shape[0]
    return (Z * w[:, None]).T @ Z


def _leading_eigvec(Y, pos, e_hat, tau):
    """Leading eigenvector of the label-weighted covariance, via the thin SVD
    of the weighted centered data (same eigenvector, better conditioning)."""
    t = tau
    Z = Y - e_hat[None, :]
    w = np.where(pos, t, 1.0 - t) / Y.shape[0]
    M = Z * np.sqrt(w)[:, None]
    _, _, Vt = np.linalg.svd(M, full_matrices=False)
    return Vt[0]


def _skew_orient(phi, Y):
    """Data-driven initial orientation: positive projection skewness wins;
    symmetric projections fall back to the largest-entry convention."""
    z = Y @ phi
    zc = z - z.mean()
    m2 = float(np.mean(zc * zc))
    m3 = float(np.mean(zc ** 3))
    if m2 > 0 and abs(m3) > 1e-8 * m2 ** 1.5:
        return phi if m3 > 0 else -phi
    oriented, _ = _orient(phi[:, None])
    return oriented[:, 0]


def _tau_path(tau, step):
    """Levels from 1/2 toward tau in increments of `step`."""
    if tau == 0.5:
        return [0.5]
    sign = 1.0 if tau > 0.5 else -1.0
    levels = [0.5]
    cur = 0.5
    while True:
        cur = cur + sign * step
        if (tau - cur) * sign <= 1e-12:
            break
        levels.append(cur)
    levels.append(tau)
    return levels


class _PecAttempt:
    """One run of the label fixed-point iteration at a fixed tau level."""

    def __init__(self, Y, tau, max_iterations):
        self.Y = Y
        self.tau = tau
        self.max_iterations = max_iterations

    def run(self, labels, phi_prev):
        """Iterate until the labels repeat; returns
        (converged, labels, state_tuple, iterations, best_tuple)."""
        Y, t = self.Y, self.tau
        seen = {labels.tobytes()}
        best = None  # (objective, labels, state)
        state = None
        for it in range(1, self.max_iterations + 1):
            e_hat = pec_center(Y, labels, t)
            phi = _leading_eigvec(Y, labels, e_hat, t)
            if phi_prev is not None:
                dot = float(phi @ phi_prev)
                if dot < 0:
                    phi = -phi
                elif dot == 0:
                    phi = _orient(phi[:, None])[0][:, 0]
            z = Y @ phi
            mu = expectile_1d(z, t).value
            objective = tau_variance(z, t)
            new_labels = z > mu
            state = (e_hat, phi, mu)
            if best is None or objective > best[0]:
                best = (objective, new_labels, state)
            if np.array_equal(new_labels, labels):
                return True, labels, state, it, best
            key = new_labels.tobytes()
            if key in seen:
                return False, new_labels, state, it, best
            seen.add(key)
            labels = new_labels
            phi_prev = phi
        return False, labels, state, self.max_iterations, best


def principal_expectile(Y, k: int, tau, *, max_iterations: int = 30,
                        restarts: int = 50, rng: np.random.Generator | None = None,
                        tau_path_step: float = 0.05, residual_shift: bool = True,
                        initial_labels: np.ndarray | None = None,
                        initial_direction: np.ndarray | None = None) -> ComponentSet:
    """Principal expectile components by the label fixed-point iteration.

    Each iteration recenters at the label-weighted mean, takes the leading
    eigenvector of the label-weighted covariance, relocates the projection
    expectile and relabels by its sign. Labels repeat exactly at a fixed
    point; a repeat of any earlier label vector is a cycle and triggers a
    random relabel restart (up to `restarts`, `max_iterations` each).
    Initial labels come from a tau-path warm start in steps of
    `tau_path_step` from 1/2; orientation follows the previous iterate,
    seeded by projection skewness.

    Higher components iterate on the residuals; `residual_shift` keeps the
    expectile offset term in the residual (the default), dropping it removes
    the projection only. Unconverged components carry the best-objective
    iterate and a False flag.
    """
    t = as_tau(tau)
    Y = as_data_matrix(Y)
    n, p = Y.shape
    _check_k(k, n, p)
    if rng is None:
        rng = np.random.default_rng(0)

    Z = Y
    comps = []
    states = []
    stats: list[tuple[float, bool, int]] = []
    center = None
    for comp_idx in range(k):
        if comp_idx == 0 and initial_labels is not None:
            labels = np.asarray(initial_labels, dtype=bool)
            if labels.shape != (n,):
                raise ContractError("initial labels must have length n")
            phi_prev = initial_direction
        else:
            # classical start: leading eigenvector at tau = 1/2
            mean = Z.mean(axis=0)
            phi0 = _leading_eigvec(Z, np.ones(n, bool), mean, 0.5)
            phi0 = _skew_orient(phi0, Z)
            labels = (Z @ phi0) > float(np.mean(Z @ phi0))
            phi_prev = phi0
            for level in _tau_path(t, tau_path_step)[1:-1] if t != 0.5 else []:
                ok, labels, state, _, best = _PecAttempt(
                    Z, level, max_iterations).run(labels, phi_prev)
                if state is not None:
                    phi_prev = state[1]
                elif best is not None:
                    phi_prev = best[2][1]

        attempt = _PecAttempt(Z, t, max_iterations)
        total_iters = 0
        best_overall = None
        converged = False
        for trial in range(restarts + 1):
            if trial > 0:
                # a restart randomizes the labels and the orientation seed
                labels = rng.random(n) < 0.5
                if phi_prev is not None and rng.random() < 0.5:
                    phi_prev = -phi_prev
            ok, labels_out, state, iters, best = attempt.run(labels, phi_prev)
            total_iters += iters
            if best is not None and (best_overall is None
                                     or best[0] > best_overall[0]):
                best_overall = best
            if ok:
                converged = True
                labels = labels_out
                break
        if converged:
            e_hat, phi, mu = state
        else:
            _, labels, (e_hat, phi, mu) = best_overall
        cert = np.array_equal((Z @ phi) > float(phi @ e_hat), labels)
        w = np.where(labels, t, 1.0 - t)
        states.append(PecState(weights=w, e_hat=e_hat,
                               c_matrix=pec_cov(Z, labels, e_hat, t),
                               phi=phi, mu=mu, stable=bool(cert and converged)))
        stats.append((tau_variance(Z @ phi, t), converged, total_iters))
        comps.append(phi)
        if comp_idx == 0:
            center = e_hat
        proj = Z @ phi
        Z = Z - proj[:, None] * phi[None, :]
        if residual_shift:
            Z = Z - mu * phi[None, :]

    D = np.column_stack(comps)
    D, _ = _orient(D)
    loadings = (Y - center[None, :]) @ D
    return ComponentSet(center=center.copy(), components=D, loadings=loadings,
                        per_component_stats=stats, algorithm=PEC, tau=t,
                        pec_states=states)


def explained_variance(Y, cs: ComponentSet) -> list[float]:
    """Explained-variance proportions for a fitted ComponentSet.

    Principal expectile components report per-component proportions:
    tau-variance of the projections on each (as-converged) component over
    the summed coordinatewise tau-variance. TopDown/BottomUp report
    cumulative proportions: one minus the ratio of the j-component
    asymmetric objective to the center-only objective.
    """
    Y = as_data_matrix(Y)
    t = cs.tau
    if cs.algorithm == PEC:
        total = sum(tau_variance(Y[:, j], t) for j in range(Y.shape[1]))
        if total <= 0:
            raise DegenerateInputError("data carries no tau-variance")
        Yc = Y - cs.center[None, :]
        out = []
        for state in cs.pec_states:
            out.append(min(1.0, max(0.0, tau_variance(Yc @ state.phi, t) / total)))
        return out
    m0 = np.array([expectile_1d(Y[:, j], t).value for j in range(Y.shape[1])])
    base = objective_value(Y, m0, np.zeros((Y.shape[0], 1)),
                           np.zeros((Y.shape[1], 1)), t)
    if base <= 0:
        raise DegenerateInputError("data carries no tau-variance")
    Yc = np.ascontiguousarray(Y - cs.center[None, :])
    out = []
    for j in range(1, cs.k + 1):
        D = np.ascontiguousarray(cs.components[:, :j])
        W0 = np.full(Y.shape, 0.5)
        U, W, _, _, _ = backend.rows_irls(Yc, D, W0, t)
        resid = Yc - np.asarray(U) @ D.T
        obj = float(np.sum(np.where(resid > 0, t, 1 - t) * resid * resid))
        out.append(min(1.0, max(0.0, 1.0 - obj / base)))
    return out
