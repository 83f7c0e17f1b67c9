"""Independent component analysis by minimizing a smoothed rank statistic.

Pipeline: whiten the data, parameterize rotations by Givens angles, map every
rotated component through a kernel-smoothed CDF, and minimize the product
form of the joint statistic over the angles by gradient descent.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import expit

from ._kernels import logistic_ica

__all__ = [
    "SingularCovariance",
    "SingularMixing",
    "NonConvergenceWarning",
    "WhiteningResult",
    "KernelCdfConfig",
    "IcaEstimate",
    "angle_pairs",
    "whiten",
    "rotation_matrix",
    "rotation_derivatives",
    "wrap_angles",
    "smoothed_cdf",
    "ica_objective",
    "ica_objective_ecdf",
    "ica_gradient",
    "fit_ica",
    "recovery_error",
]

MIN_SAMPLES = 50


class SingularCovariance(ValueError):
    """Sample covariance is numerically singular."""


class SingularMixing(ValueError):
    """Estimated mixing matrix cannot be inverted."""


class NonConvergenceWarning(RuntimeWarning):
    """Optimizer stopped at the iteration cap before meeting its tolerances."""


# ---------------------------------------------------------------- whitening


@dataclass(frozen=True)
class WhiteningResult:
    """``whitened = (data - mean) @ O.T`` has identity sample covariance."""

    O: np.ndarray
    mean: np.ndarray
    whitened: np.ndarray


def whiten(data) -> WhiteningResult:
    """Center the data and apply ``O = Lambda^{-1/2} P^T`` from ``cov = P Lambda P^T``."""
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("data must be an (n, r) array with n >= 2")
    mean = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    lam, P = np.linalg.eigh(cov)
    if lam[0] <= 1e-10 * max(lam[-1], 0.0) or lam[-1] <= 0.0:
        raise SingularCovariance("sample covariance is singular")
    O = (P / np.sqrt(lam)).T
    return WhiteningResult(O, mean, (x - mean) @ O.T)


# ---------------------------------------------------------------- rotations


def angle_pairs(r: int) -> list[tuple[int, int]]:
    """Angle index order ``(0,1), (0,2), ..., (0,r-1), (1,2), ...`` (0-based)."""
    return list(itertools.combinations(range(r), 2))


def _n_angles_to_r(m: int) -> int:
    r = int(round((1 + math.sqrt(1 + 8 * m)) / 2))
    if r * (r - 1) // 2 != m:
        raise ValueError(f"{m} angles do not match any dimension")
    return r


def _givens(r: int, i: int, j: int, t: float) -> np.ndarray:
    q = np.eye(r)
    c, s = math.cos(t), math.sin(t)
    q[i, i] = q[j, j] = c
    q[i, j] = -s
    q[j, i] = s
    return q


def _givens_prime(r: int, i: int, j: int, t: float) -> np.ndarray:
    q = np.zeros((r, r))
    c, s = math.cos(t), math.sin(t)
    q[i, i] = q[j, j] = -s
    q[i, j] = -c
    q[j, i] = c
    return q


def rotation_matrix(theta) -> np.ndarray:
    """``W = Q^(r-1) ... Q^(1)`` with ``Q^(i) = Q_{i,r} ... Q_{i,i+1}``.

    The rightmost factor is the rotation in plane ``(1, 2)``; each later
    pair in :func:`angle_pairs` order multiplies from the left.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    r = _n_angles_to_r(theta.size)
    w = np.eye(r)
    for (i, j), t in zip(angle_pairs(r), theta):
        w = _givens(r, i, j, t) @ w
    return w


def rotation_derivatives(theta) -> np.ndarray:
    """Array ``dW[p] = dW / dtheta_p`` of shape ``(m, r, r)``."""
    theta = np.asarray(theta, dtype=float).ravel()
    r = _n_angles_to_r(theta.size)
    pairs = angle_pairs(r)
    factors = [_givens(r, i, j, t) for (i, j), t in zip(pairs, theta)]
    m = len(factors)
    # right[p] = F_{p-1} ... F_0, left[p] = F_{m-1} ... F_{p+1}
    right = [np.eye(r)]
    for f in factors[:-1]:
        right.append(f @ right[-1])
    left = [np.eye(r)] * m
    acc = np.eye(r)
    for p in range(m - 1, -1, -1):
        left[p] = acc
        acc = acc @ factors[p]
    out = np.empty((m, r, r))
    for p, ((i, j), t) in enumerate(zip(pairs, theta)):
        out[p] = left[p] @ _givens_prime(r, i, j, t) @ right[p]
    return out


def wrap_angles(theta) -> np.ndarray:
    """Map angles into ``[0, 2pi)`` for pairs ``(1, j)`` and ``[0, pi)`` otherwise.

    Shifting ``theta_ij`` (``i >= 2``) by ``pi`` flips the signs of two rows
    of ``W``; the angles of later factors sharing one index with ``(i, j)``
    are negated so that the result equals ``D W`` for a diagonal sign matrix
    ``D`` with ``det D = 1``. The components change sign only, which leaves
    the rank objective unchanged.
    """
    return _wrap(theta)[0]


def _wrap(theta) -> tuple[np.ndarray, bool]:
    theta = np.array(theta, dtype=float).ravel()
    r = _n_angles_to_r(theta.size)
    pairs = angle_pairs(r)
    two_pi = 2.0 * math.pi
    flipped = False
    for p, (i, j) in enumerate(pairs):
        t = theta[p] % two_pi
        if i > 0 and t >= math.pi:
            t -= math.pi
            flipped = True
            for q in range(p + 1, len(pairs)):
                if len({i, j} & set(pairs[q])) == 1:
                    theta[q] = -theta[q]
        theta[p] = t
    # Guard against t % 2pi rounding up to exactly 2pi.
    theta[theta >= two_pi] = 0.0
    return theta, flipped


# ---------------------------------------------------------------- objective

_LOGISTIC_SCALE = math.pi / math.sqrt(3.0)


def logistic_cdf(x):
    """Unit-variance logistic CDF."""
    return expit(_LOGISTIC_SCALE * np.asarray(x))


def logistic_pdf(x):
    g = logistic_cdf(x)
    return _LOGISTIC_SCALE * g * (1.0 - g)


@dataclass(frozen=True)
class KernelCdfConfig:
    """Kernel CDF smoothing.

    ``bandwidth`` is either a positive float used for every component, or
    ``"silverman"`` for ``factor * s * n**(-1/5)``, where ``s`` is the
    root-mean component variance of the whitened data (1 after whitening).
    The kernel CDF ``G`` must satisfy ``G(-x) = 1 - G(x)``.
    """

    bandwidth: float | str = "silverman"
    factor: float = 1.06
    G: Callable = field(default=logistic_cdf, repr=False)
    G_prime: Callable = field(default=logistic_pdf, repr=False)

    def __post_init__(self):
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "silverman":
                raise ValueError(f"unknown bandwidth rule {self.bandwidth!r}")
        elif not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")

    def h(self, whitened: np.ndarray) -> float:
        if not isinstance(self.bandwidth, str):
            return float(self.bandwidth)
        n, r = whitened.shape
        s = math.sqrt(np.trace(np.atleast_2d(np.cov(whitened, rowvar=False))) / r)
        return self.factor * s * n ** (-0.2)

    def describe(self) -> dict:
        return {"bandwidth": self.bandwidth, "factor": self.factor}


def smoothed_cdf(y: np.ndarray, h: float, config: KernelCdfConfig) -> np.ndarray:
    """``F(y_a) = (1/n) sum_v G((y_a - y_v) / h)``."""
    return config.G((y[:, None] - y[None, :]) / h).mean(axis=1)


def _centered_abs(u: np.ndarray) -> np.ndarray:
    d = np.abs(u[:, None] - u[None, :])
    m = d.mean(axis=1)
    return m[:, None] + m[None, :] - d - m.mean()


def _compact(mats, c: float) -> float:
    prod = np.ones_like(mats[0])
    for e in mats:
        prod *= e + c
    return float(prod.mean()) - c ** len(mats)


def _check(theta, whitened):
    z = np.asarray(whitened, dtype=float)
    w = rotation_matrix(theta)
    if z.ndim != 2 or z.shape[1] != w.shape[0]:
        raise ValueError("whitened data must have one column per component")
    return z, w


def ica_objective(theta, whitened, config: KernelCdfConfig | None = None, c: float = 1.0) -> float:
    """Product-form statistic of the smoothed-CDF transformed components."""
    config = config or KernelCdfConfig()
    z, w = _check(theta, whitened)
    h = config.h(z)
    y = z @ w.T
    return _compact([_centered_abs(smoothed_cdf(y[:, i], h, config)) for i in range(w.shape[0])], c)


def ica_objective_ecdf(theta, whitened, c: float = 1.0) -> float:
    """Same statistic with exact empirical CDF values ``rank / n``."""
    z, w = _check(theta, whitened)
    y = z @ w.T
    n = y.shape[0]
    mats = []
    for i in range(w.shape[0]):
        ranks = np.empty(n)
        ranks[np.argsort(y[:, i], kind="stable")] = np.arange(1, n + 1)
        mats.append(_centered_abs(ranks / n))
    return _compact(mats, c)


def _value_and_grad(theta, z, h, config, c, approximate=False, want_grad=True):
    n, r = z.shape
    if not approximate and config.G is logistic_cdf and config.G_prime is logistic_pdf:
        value, g_y = logistic_ica(
            np.ascontiguousarray(z @ rotation_matrix(theta).T), h, c, _LOGISTIC_SCALE, want_grad
        )
        if not want_grad:
            return value, None
        grad_w = (z.T @ g_y).T
        return value, np.einsum("ij,pij->p", grad_w, rotation_derivatives(theta))
    return _value_and_grad_numpy(theta, z, h, config, c, approximate)


def _value_and_grad_numpy(theta, z, h, config, c, approximate=False):
    n, r = z.shape
    w = rotation_matrix(theta)
    y = z @ w.T
    diffs = [(y[:, i][:, None] - y[:, i][None, :]) / h for i in range(r)]
    us = [config.G(dm).mean(axis=1) for dm in diffs]
    es = [_centered_abs(u) for u in us]
    shifted = [e + c for e in es]
    prod = np.ones((n, n))
    for s in shifted:
        prod *= s
    value = float(prod.mean()) - c**r

    grad_w = np.zeros((r, r))
    for i in range(r):
        others = np.ones((n, n))
        for k in range(r):
            if k != i:
                others *= shifted[k]
        gmat = others / (n * n)
        sgn = np.sign(us[i][:, None] - us[i][None, :])
        gp = config.G_prime(diffs[i])
        if approximate:
            # Simplified form: dE(a,b)/dF(a) ~ mean_v sign(F_a - F_v) - sign(F_a - F_b),
            # and dF(a)/dW_i ~ (1/n) sum_v G'((y_a - y_v)/h) Z_a / h.
            dE = sgn.mean(axis=1)[:, None] - sgn
            g_u = 2.0 * (gmat * dE).sum(axis=1)
            g_y = g_u * gp.sum(axis=1) / (n * h)
        else:
            # dJ/dD = -H G H for E = -H D H, then chain through |u_a - u_b|.
            rm = gmat.mean(axis=1)
            k_mat = -(gmat - rm[:, None] - rm[None, :] + rm.mean())
            g_u = 2.0 * (k_mat * sgn).sum(axis=1)
            g_y = (g_u * gp.sum(axis=1) - gp.T @ g_u) / (n * h)
        grad_w[i] = z.T @ g_y
    dws = rotation_derivatives(theta)
    grad = np.einsum("ij,pij->p", grad_w, dws)
    return value, grad


def ica_gradient(
    theta,
    whitened,
    config: KernelCdfConfig | None = None,
    c: float = 1.0,
    approximate: bool = False,
) -> np.ndarray:
    """Gradient of :func:`ica_objective` with respect to the angles.

    The default is the exact chain rule, including each point's effect on the
    smoothed CDF values of all other points. ``approximate=True`` uses the
    simplified rule that drops ``O(1/n)`` terms and the cross-point
    dependence of the smoothed CDF.
    """
    config = config or KernelCdfConfig()
    z, _ = _check(theta, whitened)
    return _value_and_grad(np.asarray(theta, dtype=float), z, config.h(z), config, c, approximate)[1]


# ---------------------------------------------------------------- fitting


@dataclass(frozen=True)
class IcaEstimate:
    theta_hat: np.ndarray
    W_hat: np.ndarray
    unmixing: np.ndarray
    mixing: np.ndarray
    whitening: np.ndarray
    mean: np.ndarray
    objective: float
    converged: bool
    trace: list
    restart_objectives: list
    bandwidth: float
    c: float

    def sources(self, data) -> np.ndarray:
        return (np.asarray(data, dtype=float) - self.mean) @ self.unmixing.T

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "ica",
            "theta_hat": self.theta_hat.tolist(),
            "W_hat": self.W_hat.tolist(),
            "unmixing": self.unmixing.tolist(),
            "mixing": self.mixing.tolist(),
            "whitening": self.whitening.tolist(),
            "mean": self.mean.tolist(),
            "objective": self.objective,
            "converged": self.converged,
            "trace": [
                {"iteration": it, "value": v, "grad_norm": g} for it, v, g in self.trace
            ],
            "restart_objectives": self.restart_objectives,
            "bandwidth": self.bandwidth,
            "c": self.c,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _random_angles(r: int, rng: np.random.Generator) -> np.ndarray:
    return np.array(
        [rng.uniform(0, 2 * math.pi) if i == 0 else rng.uniform(0, math.pi) for i, _ in angle_pairs(r)]
    )


def _descend(theta, z, h, config, c, max_iter, gtol, ftol, window):
    value, grad = _value_and_grad(theta, z, h, config, c)
    trace = [(0, value, float(np.max(np.abs(grad))) if grad.size else 0.0)]
    history = [value]
    prev_step = None
    for it in range(1, max_iter + 1):
        gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
        if gnorm < gtol:
            return theta, value, trace, True
        if len(history) > window:
            old = history[-1 - window]
            if old - value <= ftol * max(abs(old), 1e-300):
                return theta, value, trace, True
        # Trial step: Barzilai-Borwein ratio from the last accepted move,
        # capped so that no angle moves by more than 0.5 rad.
        cap = 0.5 / gnorm
        step = cap if prev_step is None else min(prev_step, cap)
        g2 = float(grad @ grad)
        while True:
            cand = theta - step * grad
            cand_value, _ = _value_and_grad(cand, z, h, config, c, want_grad=False)
            if cand_value <= value - 1e-4 * step * g2 or step < 1e-14:
                break
            step *= 0.5
        if cand_value > value:
            # No descent even for a vanishing step: treat as stationary.
            return theta, value, trace, True
        cand_value, cand_grad = _value_and_grad(cand, z, h, config, c)
        s_vec = cand - theta
        y_vec = cand_grad - grad
        sy = float(s_vec @ y_vec)
        prev_step = float(s_vec @ s_vec) / sy if sy > 0 else None
        theta, value, grad = cand, cand_value, cand_grad
        theta, flipped = _wrap(theta)
        if flipped:
            # Same objective value, but the angles now describe D W for a
            # sign matrix D; the gradient lives in the new chart.
            value, grad = _value_and_grad(theta, z, h, config, c)
            prev_step = None
        history.append(value)
        trace.append((it, value, float(np.max(np.abs(grad)))))
    gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
    return theta, value, trace, gnorm < gtol


def fit_ica(
    data,
    config: KernelCdfConfig | None = None,
    c: float = 1.0,
    restarts: int = 8,
    max_iter: int = 500,
    gtol: float = 1e-5,
    ftol: float = 1e-9,
    window: int = 5,
    seed=0,
    min_samples: int = MIN_SAMPLES,
) -> IcaEstimate:
    """Whiten, then minimize :func:`ica_objective` from several starting points.

    Restart 0 starts at ``theta = 0``; restart ``k`` draws uniform angles
    from ``SeedSequence(seed, spawn_key=(k,))``. Each run stops when the
    largest gradient component drops below ``gtol`` or the objective falls
    by less than a relative ``ftol`` over ``window`` iterations. The run
    with the lowest objective is returned; if it hit ``max_iter`` instead,
    a :class:`NonConvergenceWarning` is issued and ``converged`` is False.
    """
    config = config or KernelCdfConfig()
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError("data must be an (n, r) array with r >= 2")
    if x.shape[0] < min_samples:
        raise ValueError(f"need at least {min_samples} observations")
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    wr = whiten(x)
    z = wr.whitened
    r = z.shape[1]
    h = config.h(z)

    best = None
    finals = []
    for k in range(restarts):
        if k == 0:
            theta0 = np.zeros(r * (r - 1) // 2)
        else:
            theta0 = _random_angles(r, np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,))))
        run = _descend(theta0, z, h, config, c, max_iter, gtol, ftol, window)
        finals.append(run[1])
        if best is None or run[1] < best[1]:
            best = run
    theta, value, trace, converged = best
    if not converged:
        warnings.warn(
            f"ICA optimizer reached max_iter={max_iter} without meeting its tolerances",
            NonConvergenceWarning,
            stacklevel=2,
        )
    w = rotation_matrix(theta)
    unmixing = w @ wr.O
    return IcaEstimate(
        theta_hat=theta,
        W_hat=w,
        unmixing=unmixing,
        mixing=np.linalg.inv(unmixing),
        whitening=wr.O,
        mean=wr.mean,
        objective=value,
        converged=converged,
        trace=trace,
        restart_objectives=finals,
        bandwidth=h,
        c=c,
    )


# ---------------------------------------------------------------- error metric


def recovery_error(M_hat, M) -> float:
    """``D(M_hat, M) = min_C ||C M_hat^{-1} M - I||_F / sqrt(r - 1)``.

    ``C`` ranges over signed permutations times positive diagonals. For
    ``V = M_hat^{-1} M``, sending row ``j`` of ``V`` to ``e_k`` with the best
    scale costs ``1 - V_jk^2 / |V_j|^2``; the assignment is found exhaustively
    for ``r <= 8`` and by a linear assignment solver beyond.
    """
    M_hat = np.asarray(M_hat, dtype=float)
    M = np.asarray(M, dtype=float)
    if M_hat.ndim != 2 or M_hat.shape[0] != M_hat.shape[1] or M_hat.shape != M.shape:
        raise ValueError("M_hat and M must be square matrices of the same size")
    r = M.shape[0]
    if r < 2:
        raise ValueError("need r >= 2")
    try:
        if np.linalg.cond(M_hat) > 1e14:
            raise np.linalg.LinAlgError
        V = np.linalg.solve(M_hat, M)
    except np.linalg.LinAlgError as exc:
        raise SingularMixing("M_hat is singular") from exc
    norms = np.sum(V * V, axis=1)
    cost = 1.0 - V * V / norms[:, None]
    if r <= 8:
        perms = np.array(list(itertools.permutations(range(r))))
        totals = cost[np.arange(r), perms].sum(axis=1)
        best = float(totals.min())
    else:
        rows, cols = linear_sum_assignment(cost)
        best = float(cost[rows, cols].sum())
    return math.sqrt(max(best, 0.0) / (r - 1))
