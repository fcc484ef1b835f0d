"""Moment-condition models, built-in test models and data simulation.

A :class:`MomentModel` bundles the moment function g(x, theta), its
theta-derivatives, the true parameter used in verification mode, and a
sampler. The three built-ins cover the cases the identity suites need:

* ``MeanVarModel``   mean/variance moments of a unit normal, m=2 > p=1,
  so the projection residual P is nonzero but all odd moments vanish.
* ``JustIdentModel`` a single mean moment, m=p=1, the degenerate P=0 case.
* ``SkewModel``      the same moments driven by a standardized chi-square,
  so third-moment tensors are nonzero and every cubic term is exercised.

All moment callables are vectorized over observations: they accept an
(n, dim_x) array and return (n, m), (n, m, p) or (n, m, p, p) arrays.
They must also accept complex theta, which the finite-difference oracles
rely on for complex-step differentiation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import roots_genlaguerre, roots_hermite

from .errors import DimensionError
from .rng import philox_generator

__all__ = [
    "IndexLayout",
    "Dataset",
    "AnalyticMoments",
    "MomentModel",
    "eval_g",
    "simulate",
    "dataset_to_csv",
    "dataset_from_csv",
    "make_mean_var_model",
    "make_just_ident_model",
    "make_skew_model",
    "build_model",
    "MODEL_NAMES",
    "jacobian_fd_error",
]


@dataclass(frozen=True)
class IndexLayout:
    """Zero-based block offsets of the stacked parameter (tau, kappa, lambda, theta)."""

    dim_g: int
    dim_theta: int

    @property
    def l_tau(self) -> int:
        return 0

    @property
    def l_kappa(self) -> int:
        return 1

    @property
    def l_lambda(self) -> int:
        return 1 + self.dim_g

    @property
    def l_theta(self) -> int:
        return 1 + 2 * self.dim_g

    @property
    def dim_beta(self) -> int:
        return 1 + 2 * self.dim_g + self.dim_theta

    def __post_init__(self) -> None:
        if self.dim_g < 1 or self.dim_theta < 1:
            raise DimensionError("dim_g and dim_theta must be positive")
        if self.dim_theta > self.dim_g:
            raise DimensionError("require dim_theta <= dim_g (p <= m)")

    @property
    def kappa_slice(self) -> slice:
        return slice(self.l_kappa, self.l_kappa + self.dim_g)

    @property
    def lambda_slice(self) -> slice:
        return slice(self.l_lambda, self.l_lambda + self.dim_g)

    @property
    def theta_slice(self) -> slice:
        return slice(self.l_theta, self.l_theta + self.dim_theta)


@dataclass(frozen=True)
class Dataset:
    """An immutable matrix of observations, one row per draw."""

    rows: np.ndarray

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2:
            raise DimensionError("Dataset rows must be a 2-d array (n, dim_x)")
        if rows.shape[0] < 1:
            raise DimensionError("Dataset needs at least one observation")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim_x(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class AnalyticMoments:
    """Closed-form population G = E[dg/dtheta'] and Omega = E[g g'] at theta_star."""

    G: np.ndarray
    Omega: np.ndarray


@dataclass(frozen=True)
class MomentModel:
    """A moment-condition model E[g(x, theta_star)] = 0.

    Parameters
    ----------
    name : str
        Registry name, e.g. ``"MeanVarModel"``.
    dim_x, dim_g, dim_theta : int
        Sizes of one observation, of g, and of theta (p <= m).
    theta_star : ndarray, shape (p,)
        True parameter used by the simulator and all population quantities.
    g : callable
        ``g(rows, theta) -> (n, m)``, vectorized over rows.
    g_jacobian : callable
        ``(rows, theta) -> (n, m, p)`` derivative of g in theta.
    sampler : callable
        ``(generator, n) -> (n, dim_x)`` i.i.d. draws from the DGP.
    g_hessian : callable, optional
        ``(rows, theta) -> (n, m, p, p)`` second theta-derivative. Needed
        by the analytic stacked Jacobian and the derivative tensors.
    gauss_rule : callable, optional
        ``(n_nodes) -> (points, weights)`` quadrature rule that integrates
        smooth functions of x essentially exactly under the DGP. Used to
        build the plug-in population measure.
    analytic : AnalyticMoments, optional
        Closed-form G and Omega where the model provides them.
    """

    name: str
    dim_x: int
    dim_g: int
    dim_theta: int
    theta_star: np.ndarray
    g: Callable[[np.ndarray, np.ndarray], np.ndarray]
    g_jacobian: Callable[[np.ndarray, np.ndarray], np.ndarray]
    sampler: Callable[[np.random.Generator, int], np.ndarray]
    g_hessian: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    gauss_rule: Callable[[int], tuple[np.ndarray, np.ndarray]] | None = None
    analytic: AnalyticMoments | None = None

    def __post_init__(self) -> None:
        if self.dim_theta > self.dim_g:
            raise DimensionError(f"{self.name}: dim_theta must not exceed dim_g")
        theta = np.asarray(self.theta_star, dtype=float).reshape(-1)
        if theta.shape[0] != self.dim_theta:
            raise DimensionError(f"{self.name}: theta_star has wrong length")
        theta.setflags(write=False)
        object.__setattr__(self, "theta_star", theta)

    @property
    def layout(self) -> IndexLayout:
        return IndexLayout(self.dim_g, self.dim_theta)

    def g_rows(self, rows: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Evaluate g on an (n, dim_x) batch with shape checks."""
        rows = np.atleast_2d(rows)
        if rows.shape[1] != self.dim_x:
            raise DimensionError(
                f"{self.name}: observation has dim {rows.shape[1]}, expected {self.dim_x}"
            )
        theta = np.asarray(theta).reshape(-1)
        if theta.shape[0] != self.dim_theta:
            raise DimensionError(
                f"{self.name}: theta has dim {theta.shape[0]}, expected {self.dim_theta}"
            )
        out = self.g(rows, theta)
        if out.shape != (rows.shape[0], self.dim_g):
            raise DimensionError(f"{self.name}: g returned shape {out.shape}")
        return out


def eval_g(model: MomentModel, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Evaluate g(x, theta) for a single observation."""
    x = np.asarray(x, dtype=float).reshape(-1)
    return model.g_rows(x[None, :], theta)[0]


def simulate(model: MomentModel, n: int, seed: int) -> Dataset:
    """Draw n i.i.d. observations; deterministic in (model, n, seed)."""
    if n < 1:
        raise DimensionError(f"sample size must be >= 1, got {n}")
    rng = philox_generator(seed)
    rows = model.sampler(rng, n)
    return Dataset(np.asarray(rows, dtype=float).reshape(n, model.dim_x))


def dataset_to_csv(dataset: Dataset, path: str | Path) -> None:
    """Write one observation per row with header x1,...,xd."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j + 1}" for j in range(dataset.dim_x)])
        for row in dataset.rows:
            writer.writerow([repr(float(v)) for v in row])


def dataset_from_csv(path: str | Path) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header != [f"x{j + 1}" for j in range(len(header))]:
            raise DimensionError(f"{path}: expected header x1,...,xd, got {header}")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise DimensionError(f"{path}: no observations")
    return Dataset(np.asarray(rows, dtype=float))


# ---------------------------------------------------------------------------
# Built-in models
# ---------------------------------------------------------------------------


def _mean_var_g(rows: np.ndarray, theta: np.ndarray) -> np.ndarray:
    z = rows[:, 0] - theta[0]
    return np.stack([z, z * z - 1.0], axis=1)


def _mean_var_jac(rows: np.ndarray, theta: np.ndarray) -> np.ndarray:
    z = rows[:, 0] - theta[0]
    out = np.empty((rows.shape[0], 2, 1), dtype=np.result_type(rows, theta))
    out[:, 0, 0] = -1.0
    out[:, 1, 0] = -2.0 * z
    return out


def _mean_var_hess(rows: np.ndarray, theta: np.ndarray) -> np.ndarray:
    out = np.zeros((rows.shape[0], 2, 1, 1), dtype=np.result_type(rows, theta))
    out[:, 1, 0, 0] = 2.0
    return out


def _hermite_rule(theta_star: float, sigma: float = 1.0):
    def rule(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
        nodes, weights = roots_hermite(n_nodes)
        x = theta_star + sigma * math.sqrt(2.0) * nodes
        w = weights / math.sqrt(math.pi)
        return x[:, None], w / w.sum()

    return rule


def _chi2_rule(theta_star: float, df: int):
    # chi2_df expectation as generalized Gauss-Laguerre with alpha = df/2 - 1
    # after w = 2t; nodes mapped to the standardized variable.
    alpha = df / 2.0 - 1.0
    scale = math.sqrt(2.0 * df)

    def rule(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
        t, w = roots_genlaguerre(n_nodes, alpha)
        x = theta_star + (2.0 * t - df) / scale
        w = w / w.sum()
        return x[:, None], w

    return rule


def make_mean_var_model(theta_star: float = 0.0) -> MomentModel:
    """x ~ Normal(theta_star, 1) with g = (x - theta, (x - theta)^2 - 1)."""

    def sampler(rng: np.random.Generator, n: int) -> np.ndarray:
        return theta_star + rng.standard_normal((n, 1))

    return MomentModel(
        name="MeanVarModel",
        dim_x=1,
        dim_g=2,
        dim_theta=1,
        theta_star=np.array([theta_star]),
        g=_mean_var_g,
        g_jacobian=_mean_var_jac,
        g_hessian=_mean_var_hess,
        sampler=sampler,
        gauss_rule=_hermite_rule(theta_star),
        analytic=AnalyticMoments(
            G=np.array([[-1.0], [0.0]]),
            Omega=np.array([[1.0, 0.0], [0.0, 2.0]]),
        ),
    )


def make_just_ident_model(theta_star: float = 0.0, sigma: float = 1.0) -> MomentModel:
    """x ~ Normal(theta_star, sigma^2) with the single moment g = x - theta."""

    def g(rows: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return rows[:, :1] - theta[0]

    def jac(rows: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return np.full((rows.shape[0], 1, 1), -1.0, dtype=np.result_type(rows, theta))

    def hess(rows: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return np.zeros((rows.shape[0], 1, 1, 1), dtype=np.result_type(rows, theta))

    def sampler(rng: np.random.Generator, n: int) -> np.ndarray:
        return theta_star + sigma * rng.standard_normal((n, 1))

    return MomentModel(
        name="JustIdentModel",
        dim_x=1,
        dim_g=1,
        dim_theta=1,
        theta_star=np.array([theta_star]),
        g=g,
        g_jacobian=jac,
        g_hessian=hess,
        sampler=sampler,
        gauss_rule=_hermite_rule(theta_star, sigma),
        analytic=AnalyticMoments(
            G=np.array([[-1.0]]), Omega=np.array([[sigma**2]])
        ),
    )


def _chi2_std_moments(df: int) -> tuple[float, float]:
    """Third and fourth raw moments of the standardized chi-square."""
    m3 = math.sqrt(8.0 / df)
    m4 = 3.0 + 12.0 / df
    return m3, m4


def make_skew_model(theta_star: float = 0.0, df: int = 4) -> MomentModel:
    """Centered, unit-variance chi-square data with the mean/variance moments.

    The standardized chi-square has skewness sqrt(8/df), so all
    third-moment tensors are nonzero and cubic cancellation checks are
    non-trivial.
    """
    if df < 1:
        raise DimensionError("SkewModel df must be >= 1")
    scale = math.sqrt(2.0 * df)

    def sampler(rng: np.random.Generator, n: int) -> np.ndarray:
        w = rng.chisquare(df, size=(n, 1))
        return theta_star + (w - df) / scale

    m3, m4 = _chi2_std_moments(df)
    return MomentModel(
        name="SkewModel",
        dim_x=1,
        dim_g=2,
        dim_theta=1,
        theta_star=np.array([theta_star]),
        g=_mean_var_g,
        g_jacobian=_mean_var_jac,
        g_hessian=_mean_var_hess,
        sampler=sampler,
        gauss_rule=_chi2_rule(theta_star, df),
        analytic=AnalyticMoments(
            G=np.array([[-1.0], [0.0]]),
            Omega=np.array([[1.0, m3], [m3, m4 - 1.0]]),
        ),
    )


_MODEL_FACTORIES: dict[str, Callable[..., MomentModel]] = {
    "MeanVarModel": make_mean_var_model,
    "JustIdentModel": make_just_ident_model,
    "SkewModel": make_skew_model,
}

MODEL_NAMES = tuple(sorted(_MODEL_FACTORIES))


def build_model(name: str, **params) -> MomentModel:
    """Instantiate a built-in model by registry name."""
    if name not in _MODEL_FACTORIES:
        raise DimensionError(
            f"unknown model {name!r}; valid models: {', '.join(MODEL_NAMES)}"
        )
    return _MODEL_FACTORIES[name](**params)


def jacobian_fd_error(
    model: MomentModel, n_points: int = 100, seed: int = 11, scale: float = 1.0
) -> float:
    """Max relative error of g_jacobian against central differences of g.

    Points are drawn around the simulator's range and theta around
    theta_star so the check exercises the region the solvers visit.
    """
    rng = philox_generator(seed)
    rows = model.sampler(rng, n_points)
    thetas = model.theta_star + scale * rng.standard_normal((n_points, model.dim_theta))
    worst = 0.0
    for i in range(n_points):
        x = rows[i : i + 1]
        theta = thetas[i]
        jac = model.g_jacobian(x, theta)[0]
        for j in range(model.dim_theta):
            h = 1e-6 * (1.0 + abs(theta[j]))
            tp = theta.copy()
            tp[j] += h
            tm = theta.copy()
            tm[j] -= h
            col = (model.g(x, tp)[0] - model.g(x, tm)[0]) / (2.0 * h)
            denom = 1.0 + np.abs(jac[:, j])
            worst = max(worst, float(np.max(np.abs(col - jac[:, j]) / denom)))
    return worst
