"""Damped weighted least-squares fitting (Levenberg-Marquardt schedule).

Contract:

* residual_norm = sum of squared weighted residuals, monotone
  non-increasing across accepted steps;
* damping starts at 1e-3 times the largest normal-matrix diagonal and
  moves by factors of 10 (up on reject, down on accept);
* convergence when the relative residual change drops below ``rel_tol``
  (default 1e-10) or the gradient infinity-norm drops below ``grad_tol``
  (default 1e-8); hard cap ``max_iter`` solves (default 500), after which
  the best point so far is returned with ``converged=False``;
* covariance is the inverse of the weighted normal matrix at the optimum,
  reported in natural parameter units;
* strictly positive parameters can be fit through a log
  reparameterization (``log_mask``), keeping them positive without
  constraints;
* data are processed in ascending-x order regardless of input order, so
  results are bit-identical under any permutation of the points.

Jacobians are analytic when the caller provides one, otherwise central
finite differences with relative step 1e-6.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import SingularJacobian

FD_REL_STEP = 1e-6


@dataclass
class FitResult:
    """Outcome of a weighted least-squares fit."""

    names: tuple
    values: np.ndarray
    covariance: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    info: dict = field(default_factory=dict)

    def value(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def sigma(self, name: str) -> float:
        i = self.names.index(name)
        return float(np.sqrt(self.covariance[i, i]))

    def sigmas(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def as_dict(self) -> dict:
        return {n: float(v) for n, v in zip(self.names, self.values)}


def finite_difference_jacobian(model, x, p):
    """Central differences d model / d p with relative step 1e-6."""
    p = np.asarray(p, dtype=float)
    jac = np.empty((x.size, p.size))
    for j in range(p.size):
        h = FD_REL_STEP * max(abs(p[j]), 1e-30)
        pp = p.copy()
        pp[j] = p[j] + h
        fp = model(x, pp)
        pp[j] = p[j] - h
        fm = model(x, pp)
        jac[:, j] = (fp - fm) / (2.0 * h)
    return jac


def _sort_by_x(x, y, sigma):
    order = np.lexsort((y, x))
    return x[order], y[order], sigma[order]


def fit_nonlinear(
    model,
    x,
    y,
    sigma,
    p0,
    names=None,
    jac=None,
    log_mask=None,
    max_iter: int = 500,
    rel_tol: float = 1e-10,
    grad_tol: float = 1e-8,
) -> FitResult:
    """Fit model(x, p) to (x, y, sigma) starting from p0.

    ``jac(x, p)`` returns d model / d p with shape (len(x), len(p));
    omit it to fall back to finite differences.  ``log_mask`` flags
    parameters handled internally as log values (must start positive).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("all sigma must be > 0")
    p = np.asarray(p0, dtype=float).copy()
    npar = p.size
    if names is None:
        names = tuple(f"p{i}" for i in range(npar))
    if x.size < npar:
        raise ValueError(f"need at least {npar} points, got {x.size}")
    log_mask = np.zeros(npar, bool) if log_mask is None else np.asarray(log_mask, bool)
    if np.any(log_mask & (p <= 0)):
        raise ValueError("log-reparameterized parameters must start positive")

    x, y, sigma = _sort_by_x(x, y, sigma)
    w = 1.0 / sigma

    # internal coordinates: log for positive params, init-magnitude scaling
    # for the rest, so the normal matrix stays comparably conditioned
    scale = np.where(log_mask, 1.0, np.maximum(np.abs(p), 1e-30))

    def to_internal(pn):
        u = pn / scale
        u[log_mask] = np.log(pn[log_mask])
        return u

    def to_natural(u):
        pn = u * scale
        pn[log_mask] = np.exp(u[log_mask])
        return pn

    def jac_natural(pn):
        j = jac(x, pn) if jac is not None else finite_difference_jacobian(model, x, pn)
        return np.asarray(j, dtype=float)

    def internal_grad_factor(pn):
        # d p / d u per parameter
        f = scale.copy()
        f[log_mask] = pn[log_mask]
        return f

    u = to_internal(p)
    r = (y - model(x, p)) * w
    cost = float(r @ r)
    iterations = 0
    converged = False
    lam = None
    message = "max iterations reached"

    while iterations < max_iter:
        jn = jac_natural(p)
        if not np.all(np.isfinite(jn)):
            raise SingularJacobian("Jacobian contains non-finite entries")
        ju = jn * internal_grad_factor(p)  # chain rule to internal coords
        jw = ju * w[:, None]
        normal = jw.T @ jw
        grad = jw.T @ r
        gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
        if gnorm < grad_tol:
            converged = True
            message = "gradient below tolerance"
            break
        if lam is None:
            lam = 1e-3 * float(np.max(np.diag(normal)))
            if lam <= 0:
                raise SingularJacobian("normal matrix has no positive diagonal")

        accepted = False
        while iterations < max_iter:
            iterations += 1
            try:
                step = np.linalg.solve(normal + lam * np.eye(npar), grad)
            except np.linalg.LinAlgError as exc:
                raise SingularJacobian("damped normal matrix is singular") from exc
            u_try = u + step
            p_try = to_natural(u_try)
            r_try = (y - model(x, p_try)) * w
            cost_try = float(r_try @ r_try)
            if np.isfinite(cost_try) and cost_try <= cost:
                rel_change = abs(cost - cost_try) / max(cost, 1e-300)
                u, p, r, cost = u_try, p_try, r_try, cost_try
                lam = max(lam / 10.0, 1e-300)
                accepted = True
                if rel_change < rel_tol:
                    converged = True
                    message = "residual change below tolerance"
                break
            lam *= 10.0
            if lam > 1e100:
                converged = True  # no direction improves: at a minimum
                message = "damping exhausted"
                break
        if converged or not accepted:
            break

    jn = jac_natural(p)
    jw = jn * w[:, None]
    normal_nat = jw.T @ jw
    try:
        covariance = np.linalg.inv(normal_nat)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobian("normal matrix singular at the optimum") from exc

    return FitResult(
        names=tuple(names),
        values=p,
        covariance=covariance,
        residual_norm=cost,
        iterations=iterations,
        converged=converged,
        info={"message": message, "grad_inf_norm": gnorm},
    )


def fit_weighted_line(x, y, sigma, through_origin: bool = True):
    """Weighted linear least squares, y = k*x (+ b).

    Returns (values, covariance, residual_norm) with values = [k] or
    [k, b].  Exact normal-equation solution; points are processed in
    ascending-x order for bit-reproducibility.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    x, y, sigma = _sort_by_x(x, y, sigma)
    w = 1.0 / sigma**2
    if through_origin:
        sxx = float(np.sum(w * x * x))
        if sxx <= 0:
            raise SingularJacobian("no abscissa information for a line through origin")
        k = float(np.sum(w * x * y)) / sxx
        cov = np.array([[1.0 / sxx]])
        resid = float(np.sum(w * (y - k * x) ** 2))
        return np.array([k]), cov, resid
    a = np.stack([x, np.ones_like(x)], axis=1)
    aw = a * np.sqrt(w)[:, None]
    normal = aw.T @ aw
    rhs = aw.T @ (y * np.sqrt(w))
    try:
        cov = np.linalg.inv(normal)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobian("normal matrix singular in linear fit") from exc
    beta = cov @ rhs
    resid = float(np.sum(w * (y - a @ beta) ** 2))
    return beta, cov, resid
