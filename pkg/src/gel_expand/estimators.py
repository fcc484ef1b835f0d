"""Stacked moment systems for ETEL and EL and their solvers.

The stacked parameter is beta = (tau, kappa', lambda', theta')'. Both
systems share the first two blocks (tau-dot - tau and tau-dot g with
tau-dot = exp(lambda'g)); they differ in how the third and fourth blocks
tie kappa to the data. Solving n^-1 sum phi(x_i, beta) = 0 for either
system yields the estimator, with beta* = (1, 0, 0, theta*')' the
population root.

Solver layout:

* ``et_inner_solve`` / ``el_inner_solve`` are damped Newton methods on
  the strictly convex inner duals (log of the tilt normalizer, and the
  negative log empirical likelihood). Step halving keeps EL iterates in
  the region 1 - kappa'g > 0.
* ``solve_stacked`` initializes by profiling (pilot theta from the
  just-identified sub-moments, inner duals for the multipliers, tau from
  the tilt mean) and then runs a full Newton iteration on all blocks
  with an analytic Jacobian.

Evaluation helpers accept complex beta so that complex-step
differentiation can be driven through them; feasibility guards are then
applied to real parts only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import (
    ConvergenceError,
    DimensionError,
    DomainError,
    HullError,
    OverflowGuardError,
    SingularMatrixError,
)
from .models import Dataset, IndexLayout, MomentModel

__all__ = [
    "EXP_CAP",
    "BetaVector",
    "SolveReport",
    "phi_etel",
    "phi_el",
    "phi_rows",
    "stacked_residual",
    "stacked_jacobian",
    "et_inner_solve",
    "el_inner_solve",
    "pilot_theta",
    "solve_stacked",
]

EXP_CAP = 700.0
"""Raw exponent cap for exp(lambda'g); above this a diagnostic error is raised."""

_ARMIJO = 1e-4
_MAX_HALVINGS = 60


@dataclass(frozen=True)
class BetaVector:
    """Stacked parameter (tau, kappa', lambda', theta')' with block accessors."""

    values: np.ndarray
    layout: IndexLayout

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.shape != (self.layout.dim_beta,):
            raise DimensionError(
                f"beta has length {values.shape}, expected ({self.layout.dim_beta},)"
            )
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def tau(self) -> float:
        return self.values[0]

    @property
    def kappa(self) -> np.ndarray:
        return self.values[self.layout.kappa_slice]

    @property
    def lam(self) -> np.ndarray:
        return self.values[self.layout.lambda_slice]

    @property
    def theta(self) -> np.ndarray:
        return self.values[self.layout.theta_slice]

    @classmethod
    def from_blocks(
        cls,
        tau: float,
        kappa: Sequence[float],
        lam: Sequence[float],
        theta: Sequence[float],
        layout: IndexLayout,
    ) -> "BetaVector":
        values = np.concatenate(
            [[tau], np.asarray(kappa, dtype=float), np.asarray(lam, dtype=float),
             np.asarray(theta, dtype=float)]
        )
        return cls(values, layout)

    @classmethod
    def star(cls, model: MomentModel) -> "BetaVector":
        layout = model.layout
        m, p = layout.dim_g, layout.dim_theta
        return cls.from_blocks(1.0, np.zeros(m), np.zeros(m), model.theta_star, layout)

    @staticmethod
    def star_values(model: MomentModel) -> np.ndarray:
        """Plain array form of beta* = (1, 0, 0, theta*')'."""
        return np.concatenate([[1.0], np.zeros(2 * model.dim_g), model.theta_star])


def _beta_parts(beta: np.ndarray, layout: IndexLayout):
    beta = np.asarray(beta)
    return (
        beta[0],
        beta[layout.kappa_slice],
        beta[layout.lambda_slice],
        beta[layout.theta_slice],
    )


def phi_rows(
    system: str,
    model: MomentModel,
    rows: np.ndarray,
    beta: np.ndarray,
    layout: IndexLayout | None = None,
) -> np.ndarray:
    """Per-observation stacked moment rows, shape (n, dim_beta).

    Guards (exp cap, EL domain) act on real parts, so complex-step
    probes pass through untouched.
    """
    layout = layout or model.layout
    tau, kappa, lam, theta = _beta_parts(beta, layout)
    g = model.g_rows(rows, theta)
    gjac = model.g_jacobian(np.atleast_2d(rows), theta)

    s = g @ lam
    if np.max(np.abs(s.real), initial=0.0) > EXP_CAP:
        raise OverflowGuardError(
            f"exponent lambda'g exceeded {EXP_CAP:g}; iterate far outside tilt range"
        )
    tdot = np.exp(s)
    u = g @ kappa
    gk = np.einsum("nmp,m->np", gjac, kappa)
    gl = np.einsum("nmp,m->np", gjac, lam)

    out = np.empty((g.shape[0], layout.dim_beta), dtype=np.result_type(g, tdot))
    out[:, 0] = tdot - tau
    out[:, layout.kappa_slice] = tdot[:, None] * g
    if system == "etel":
        c = tau - tdot * (1.0 - u)
        out[:, layout.lambda_slice] = c[:, None] * g
        out[:, layout.theta_slice] = tdot[:, None] * gk + c[:, None] * gl
    elif system == "el":
        denom = 1.0 - u
        if np.min(denom.real, initial=np.inf) <= 0.0:
            raise DomainError("EL evaluation outside the region 1 - kappa'g > 0")
        eps = 1.0 / denom
        out[:, layout.lambda_slice] = (eps - tdot)[:, None] * g
        out[:, layout.theta_slice] = eps[:, None] * gk
    else:
        raise DimensionError(f"unknown system {system!r}; use 'etel' or 'el'")
    return out


def phi_etel(x: np.ndarray, beta: BetaVector, model: MomentModel) -> np.ndarray:
    """Evaluate the ETEL stacked moment vector at one observation."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return phi_rows("etel", model, x, beta.values, beta.layout)[0]


def phi_el(x: np.ndarray, beta: BetaVector, model: MomentModel) -> np.ndarray:
    """Evaluate the EL stacked moment vector at one observation."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return phi_rows("el", model, x, beta.values, beta.layout)[0]


def stacked_residual(
    system: str,
    model: MomentModel,
    rows: np.ndarray,
    beta: np.ndarray,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Weighted mean of the stacked moment rows (uniform weights by default)."""
    rows = np.atleast_2d(rows)
    values = phi_rows(system, model, rows, beta)
    if weights is None:
        return values.mean(axis=0)
    return weights @ values


def stacked_jacobian(
    system: str,
    model: MomentModel,
    rows: np.ndarray,
    beta: np.ndarray,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Weighted mean of the per-observation Jacobian d phi / d beta'.

    Requires the model to supply g_hessian (the theta block of the
    fourth row needs second derivatives of g).
    """
    rows = np.atleast_2d(rows)
    layout = model.layout
    tau, kappa, lam, theta = _beta_parts(np.asarray(beta), layout)
    n = rows.shape[0]
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights)

    g = model.g_rows(rows, theta)
    gjac = model.g_jacobian(rows, theta)
    if model.g_hessian is None:
        raise DimensionError(f"{model.name}: g_hessian required for stacked Jacobian")
    ghess = model.g_hessian(rows, theta)

    s = g @ lam
    if np.max(np.abs(s.real), initial=0.0) > EXP_CAP:
        raise OverflowGuardError("exponent lambda'g exceeded the safety cap")
    tdot = np.exp(s)
    u = g @ kappa
    gk = np.einsum("nmp,m->np", gjac, kappa)
    gl = np.einsum("nmp,m->np", gjac, lam)
    hk = np.einsum("nmqr,m->nqr", ghess, kappa)
    hl = np.einsum("nmqr,m->nqr", ghess, lam)

    dtype = np.result_type(g, tdot)
    D = layout.dim_beta
    jac = np.zeros((D, D), dtype=dtype)
    ks, ls, ts = layout.kappa_slice, layout.lambda_slice, layout.theta_slice
    wt = w * tdot

    # tau row: phi1 = tdot - tau
    jac[0, 0] = -w.sum()
    jac[0, ls] = wt @ g
    jac[0, ts] = wt @ gl

    # kappa rows: phi2 = tdot g
    jac[ks, ls] = np.einsum("n,na,nb->ab", wt, g, g)
    jac[ks, ts] = np.einsum("n,nap->ap", wt, gjac) + np.einsum(
        "n,na,np->ap", wt, g, gl
    )

    if system == "etel":
        c = tau - tdot * (1.0 - u)
        wc = w * c
        dc_dth = tdot[:, None] * (gk - (1.0 - u)[:, None] * gl)
        jac[ls, 0] = w @ g
        jac[ls, ks] = np.einsum("n,na,nb->ab", wt, g, g)
        jac[ls, ls] = -np.einsum("n,na,nb->ab", wt * (1.0 - u), g, g)
        jac[ls, ts] = np.einsum("n,nap->ap", wc, gjac) + np.einsum(
            "n,na,np->ap", w, g, dc_dth
        )
        jac[ts, 0] = w @ gl
        jac[ts, ks] = np.einsum("n,naq->qa", wt, gjac) + np.einsum(
            "n,nq,na->qa", wt, gl, g
        )
        jac[ts, ls] = (
            np.einsum("n,nq,na->qa", wt, gk, g)
            + np.einsum("n,naq->qa", wc, gjac)
            - np.einsum("n,nq,na->qa", wt * (1.0 - u), gl, g)
        )
        jac[ts, ts] = (
            np.einsum("n,nqr->qr", wt, hk)
            + np.einsum("n,nqr->qr", wc, hl)
            + np.einsum("n,nq,nr->qr", wt, gk, gl)
            + np.einsum("n,nq,nr->qr", w, gl, dc_dth)
        )
    elif system == "el":
        denom = 1.0 - u
        if np.min(denom.real, initial=np.inf) <= 0.0:
            raise DomainError("EL Jacobian outside the region 1 - kappa'g > 0")
        eps = 1.0 / denom
        weps = w * eps
        jac[ls, ks] = np.einsum("n,na,nb->ab", w * eps**2, g, g)
        jac[ls, ls] = -np.einsum("n,na,nb->ab", wt, g, g)
        jac[ls, ts] = np.einsum("n,nap->ap", w * (eps - tdot), gjac) + np.einsum(
            "n,na,np->ap", w, g, eps[:, None] ** 2 * gk - tdot[:, None] * gl
        )
        jac[ts, ks] = np.einsum("n,naq->qa", weps, gjac) + np.einsum(
            "n,nq,na->qa", w * eps**2, gk, g
        )
        jac[ts, ts] = np.einsum("n,nqr->qr", weps, hk) + np.einsum(
            "n,nq,nr->qr", w * eps**2, gk, gk
        )
    else:
        raise DimensionError(f"unknown system {system!r}; use 'etel' or 'el'")
    return jac


# ---------------------------------------------------------------------------
# Inner dual solvers
# ---------------------------------------------------------------------------


def _hull_separated(g: np.ndarray) -> bool:
    """True when a hyperplane strictly separates the origin from {g_i}."""
    m = g.shape[1]
    if m == 1:
        return bool(g.min() > 0.0 or g.max() < 0.0)
    res = linprog(
        c=np.zeros(m),
        A_ub=-g,
        b_ub=-np.ones(g.shape[0]),
        bounds=[(None, None)] * m,
        method="highs",
    )
    return bool(res.status == 0)


def _classify_failure(g: np.ndarray, what: str) -> Exception:
    if _hull_separated(g):
        return HullError(
            f"{what}: origin outside the convex hull of the moment values"
        )
    return ConvergenceError(f"{what}: iteration budget exhausted before tolerance")


def _et_core(
    g: np.ndarray,
    base_weights: np.ndarray,
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Damped Newton on the log tilt normalizer L(lam) = log sum w exp(lam'g).

    Returns (lam, tilted weights). Convergence is declared on the raw
    gradient norm || sum w exp(lam'g) g || <= tol.
    """
    n, m = g.shape
    if m == 1 and (g.min() > 0.0 or g.max() < 0.0):
        raise HullError("ET inner solve: all moment values on one side of the origin")
    gscale = max(float(np.max(np.abs(g))), 1e-12)
    lam = np.zeros(m)

    def state(lam_):
        s = g @ lam_
        smax = float(np.max(s))
        e = base_weights * np.exp(s - smax)
        z = float(e.sum())
        wt = e / z
        logval = smax + np.log(z)
        grad = wt @ g
        return logval, grad, wt

    logval, grad, wt = state(lam)
    for _ in range(max_iter):
        raw = np.exp(min(logval, EXP_CAP)) * np.linalg.norm(grad)
        if logval < EXP_CAP and raw <= tol:
            return lam, wt
        hess = np.einsum("n,na,nb->ab", wt, g, g) - np.outer(grad, grad)
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            step = -grad
        if grad @ step >= 0.0:
            step = -grad
        # local phase: a full Newton step that shrinks the gradient is
        # accepted outright (the objective decrement drops below fp
        # resolution near the optimum, where Armijo cannot decide)
        cand = lam + step
        logc, gradc, wtc = state(cand)
        if np.linalg.norm(gradc) <= 0.9 * np.linalg.norm(grad):
            lam, logval, grad, wt = cand, logc, gradc, wtc
        else:
            t = 1.0
            for _ in range(_MAX_HALVINGS):
                cand = lam + t * step
                logc, gradc, wtc = state(cand)
                if logc <= logval + _ARMIJO * t * (grad @ step):
                    lam, logval, grad, wt = cand, logc, gradc, wtc
                    break
                t *= 0.5
            else:
                raise _classify_failure(g, "ET inner solve")
        if np.linalg.norm(lam, np.inf) * gscale > 2.0 * EXP_CAP:
            raise _classify_failure(g, "ET inner solve")
    raise _classify_failure(g, "ET inner solve")


def _el_core(
    g: np.ndarray,
    base_weights: np.ndarray,
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Damped Newton on M(kappa) = -sum w log(1 - kappa'g), restricted to its domain."""
    n, m = g.shape
    if m == 1 and (g.min() > 0.0 or g.max() < 0.0):
        raise HullError("EL inner solve: all moment values on one side of the origin")
    gscale = max(float(np.max(np.abs(g))), 1e-12)
    kappa = np.zeros(m)

    def state(kappa_):
        denom = 1.0 - g @ kappa_
        if denom.min() <= 0.0:
            return None
        eps = 1.0 / denom
        value = -float(base_weights @ np.log(denom))
        grad = (base_weights * eps) @ g
        return value, grad, eps

    value, grad, eps = state(kappa)
    for _ in range(max_iter):
        if np.linalg.norm(grad) <= tol:
            wt = base_weights * eps
            return kappa, wt / wt.sum()
        hess = np.einsum("n,na,nb->ab", base_weights * eps**2, g, g)
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            step = -grad
        if grad @ step >= 0.0:
            step = -grad
        # local phase, as in the tilt solve: accept a domain-feasible
        # Newton step on gradient decrease alone
        nxt = state(kappa + step)
        if nxt is not None and np.linalg.norm(nxt[1]) <= 0.9 * np.linalg.norm(grad):
            kappa, (value, grad, eps) = kappa + step, nxt
        else:
            t = 1.0
            moved = False
            for _ in range(_MAX_HALVINGS):
                cand = kappa + t * step
                nxt = state(cand)
                if nxt is not None and nxt[0] <= value + _ARMIJO * t * (grad @ step):
                    kappa, (value, grad, eps) = cand, nxt
                    moved = True
                    break
                t *= 0.5
            if not moved:
                raise _classify_failure(g, "EL inner solve")
        if np.linalg.norm(kappa, np.inf) * gscale > 2.0 * EXP_CAP:
            raise _classify_failure(g, "EL inner solve")
    raise _classify_failure(g, "EL inner solve")


def et_inner_solve(
    model: MomentModel,
    data: Dataset,
    theta: np.ndarray,
    tol: float = 1e-11,
    max_iter: int = 100,
) -> tuple[np.ndarray, np.ndarray]:
    """Exponential-tilting multiplier and weights at a fixed theta.

    Solves n^-1 sum exp(lam'g_i) g_i = 0; returns (lam, weights) with
    weights proportional to exp(lam'g_i) and summing to one.
    """
    g = model.g_rows(data.rows, np.asarray(theta, dtype=float))
    base = np.full(data.n, 1.0 / data.n)
    return _et_core(g, base, tol, max_iter)


def el_inner_solve(
    model: MomentModel,
    data: Dataset,
    theta: np.ndarray,
    tol: float = 1e-11,
    max_iter: int = 100,
) -> tuple[np.ndarray, np.ndarray]:
    """EL multiplier and weights at a fixed theta.

    Solves n^-1 sum g_i / (1 - kappa'g_i) = 0 with every factor
    1 - kappa'g_i positive; weights are proportional to those inverses.
    """
    g = model.g_rows(data.rows, np.asarray(theta, dtype=float))
    base = np.full(data.n, 1.0 / data.n)
    return _el_core(g, base, tol, max_iter)


# ---------------------------------------------------------------------------
# Stacked solver
# ---------------------------------------------------------------------------


def pilot_theta(
    model: MomentModel,
    data: Dataset,
    tol: float = 1e-12,
    max_iter: int = 50,
) -> np.ndarray:
    """Just-identified pilot: Newton root of the first p moment components."""
    p = model.dim_theta
    theta = np.zeros(p)
    for _ in range(max_iter):
        g = model.g_rows(data.rows, theta)[:, :p]
        r = g.mean(axis=0)
        if np.linalg.norm(r) <= tol * (1.0 + np.linalg.norm(theta)):
            return theta
        jac = model.g_jacobian(data.rows, theta)[:, :p, :].mean(axis=0)
        try:
            theta = theta - np.linalg.solve(jac, r)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError("pilot Jacobian singular") from exc
    raise ConvergenceError("pilot theta iteration did not converge")


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a stacked solve; converged implies residual_norm <= tol."""

    system: str
    beta_hat: BetaVector
    residual_norm: float
    iterations: int
    converged: bool
    tol: float
    init_distance: float
    reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "beta_hat": [float(v) for v in self.beta_hat.values],
            "tau": float(self.beta_hat.tau),
            "kappa": [float(v) for v in self.beta_hat.kappa],
            "lambda": [float(v) for v in self.beta_hat.lam],
            "theta": [float(v) for v in self.beta_hat.theta],
            "residual_norm": float(self.residual_norm),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "tol": float(self.tol),
            "init_distance": float(self.init_distance),
            "reason": self.reason,
        }


def _profile_init(
    system: str,
    model: MomentModel,
    data: Dataset,
    theta0: np.ndarray,
    inner_tol: float,
    max_iter: int,
) -> np.ndarray:
    """Profile initialization: inner multipliers and tau at a fixed theta."""
    layout = model.layout
    g = model.g_rows(data.rows, theta0)
    base = np.full(data.n, 1.0 / data.n)
    lam, _ = _et_core(g, base, inner_tol, max_iter)
    tdot = np.exp(g @ lam)
    tau = float(tdot.mean())
    if system == "etel":
        lhs = np.einsum("n,na,nb->ab", tdot / data.n, g, g)
        rhs = ((tdot - tau) / data.n) @ g
        try:
            kappa = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError("tilted second-moment matrix singular") from exc
    else:
        kappa, _ = _el_core(g, base, inner_tol, max_iter)
    beta = np.concatenate([[tau], kappa, lam, theta0])
    return beta


def _newton_stacked(
    system: str,
    model: MomentModel,
    data: Dataset,
    beta0: np.ndarray,
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, float, int, bool]:
    beta = beta0.copy()
    resid = stacked_residual(system, model, data.rows, beta)
    norm = float(np.linalg.norm(resid))
    for it in range(max_iter):
        if norm <= tol:
            return beta, norm, it, True
        try:
            jac = stacked_jacobian(system, model, data.rows, beta)
            step = np.linalg.solve(jac, -resid)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError(
                f"stacked Jacobian singular at iteration {it}"
            ) from exc
        t = 1.0
        moved = False
        for _ in range(_MAX_HALVINGS):
            cand = beta + t * step
            try:
                cand_resid = stacked_residual(system, model, data.rows, cand)
            except (DomainError, OverflowGuardError):
                t *= 0.5
                continue
            cand_norm = float(np.linalg.norm(cand_resid))
            if cand_norm <= (1.0 - _ARMIJO * t) * norm:
                beta, resid, norm = cand, cand_resid, cand_norm
                moved = True
                break
            t *= 0.5
        if not moved:
            return beta, norm, it + 1, norm <= tol
    return beta, norm, max_iter, norm <= tol


def solve_stacked(
    system: str,
    data: Dataset,
    model: MomentModel,
    init: BetaVector | None = None,
    tol: float = 1e-9,
    max_iter: int = 100,
    inner_tol: float = 1e-11,
) -> SolveReport:
    """Solve the full stacked system for beta-hat.

    Without an explicit init the solver profiles: pilot theta from the
    just-identified sub-moments, inner dual multipliers, tau from the
    tilt mean, then full Newton. If the first attempt stalls it retries
    the profile from a small grid of perturbed pilot values.

    Returns a SolveReport; plain failure to reach tolerance is reported
    via converged=False, while hull / domain / singularity problems
    raise their typed errors.
    """
    if system not in ("etel", "el"):
        raise DimensionError(f"unknown system {system!r}; use 'etel' or 'el'")
    if data.n < model.dim_g + 1:
        raise DimensionError(
            f"need n >= dim_g + 1 = {model.dim_g + 1} observations, got {data.n}"
        )

    last_failure: Exception | None = None
    if init is not None:
        pending = [np.asarray(init.values, dtype=float)]
        retry_thetas: list[np.ndarray] = []
    else:
        theta0 = pilot_theta(model, data)
        g0 = model.g_rows(data.rows, theta0)[:, : model.dim_theta]
        spread = g0.std(axis=0) / np.sqrt(data.n)
        retry_thetas = [theta0 + k * spread for k in (-2.0, -1.0, 1.0, 2.0)]
        pending = []
        try:
            pending.append(_profile_init(system, model, data, theta0, inner_tol, max_iter))
        except (HullError, ConvergenceError, DomainError, SingularMatrixError) as exc:
            last_failure = exc

    init_beta = pending[0] if pending else None
    best: tuple[np.ndarray, float, int, bool] | None = None
    while True:
        while pending:
            beta0 = pending.pop(0)
            if init_beta is None:
                init_beta = beta0
            try:
                result = _newton_stacked(system, model, data, beta0, tol, max_iter)
            except (DomainError, OverflowGuardError) as exc:
                if init is not None:
                    raise
                last_failure = exc
                continue
            if result[3]:
                beta, norm, its, _ = result
                return SolveReport(
                    system=system,
                    beta_hat=BetaVector(beta, model.layout),
                    residual_norm=norm,
                    iterations=its,
                    converged=True,
                    tol=tol,
                    init_distance=float(np.linalg.norm(beta - init_beta)),
                )
            if best is None or result[1] < best[1]:
                best = result
        if not retry_thetas:
            break
        for theta_try in retry_thetas:
            try:
                pending.append(
                    _profile_init(system, model, data, theta_try, inner_tol, max_iter)
                )
            except (HullError, ConvergenceError, DomainError, SingularMatrixError) as exc:
                last_failure = exc
        retry_thetas = []
        if not pending:
            break

    if best is None:
        if last_failure is not None:
            raise last_failure
        raise ConvergenceError(f"{system}: no usable start for the stacked solve")
    beta, norm, its, _ = best
    return SolveReport(
        system=system,
        beta_hat=BetaVector(beta, model.layout),
        residual_norm=norm,
        iterations=its,
        converged=False,
        tol=tol,
        init_distance=float(np.linalg.norm(beta - init_beta)),
        reason="max_iter",
    )
