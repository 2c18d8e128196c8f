"""Kriging Gaussian process with a generalised-least-squares trend.

Covariance ``K = s2 * (R + nugget * I) + diag(noise)`` where ``R`` is an ARD
correlation (squared- or absolute-exponential) and ``noise`` holds per-record
aleatoric variances. The trend coefficients are profiled out by GLS; the
log-lengthscale weights and ``log s2`` are found by L-BFGS-B on the negative log
marginal likelihood from several starting points. Targets are standardised
internally; every returned quantity is on the original scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import minimize

from surrex.errors import NotPositiveDefiniteError

SQEXP = "squared_exponential"
ABSEXP = "absolute_exponential"
KERNELS = (SQEXP, ABSEXP)

LOG_THETA_BOUNDS = (np.log(1e-4), np.log(1e3))
LOG_S2_BOUNDS = (np.log(1e-6), np.log(1e4))
_BAD = 1e25


def _pair_terms(A: np.ndarray, B: np.ndarray, groups: list[list[int]], kernel: str) -> np.ndarray:
    """Per weight group, the summed squared (or absolute) coordinate differences, shape (g, |A|, |B|)."""
    out = np.empty((len(groups), A.shape[0], B.shape[0]))
    for g, cols in enumerate(groups):
        d = A[:, None, cols] - B[None, :, cols]
        out[g] = (d * d).sum(-1) if kernel == SQEXP else np.abs(d).sum(-1)
    return out


def _correlation(terms: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return np.exp(-np.tensordot(theta, terms, axes=1))


def trend_basis(Z: np.ndarray, trend: str) -> np.ndarray:
    if trend == "constant":
        return np.ones((Z.shape[0], 1))
    if trend == "linear":
        return np.column_stack([np.ones(Z.shape[0]), Z])
    raise ValueError(f"unknown trend {trend!r}")


@dataclass
class _Factor:
    chol: tuple
    beta: np.ndarray
    alpha: np.ndarray   # K^-1 (y - F beta)
    Kinv_F: np.ndarray
    FtKiF_chol: tuple
    nll: float


def _factorize(K, F, y) -> _Factor:
    c = cho_factor(K, lower=True, check_finite=False)
    Kinv_F = cho_solve(c, F, check_finite=False)
    FtKiF = F.T @ Kinv_F
    fc = cho_factor(FtKiF, lower=True, check_finite=False)
    beta = cho_solve(fc, Kinv_F.T @ y, check_finite=False)
    r = y - F @ beta
    alpha = cho_solve(c, r, check_finite=False)
    logdet = 2.0 * np.log(np.diag(c[0])).sum()
    nll = 0.5 * float(r @ alpha) + 0.5 * logdet + 0.5 * y.size * np.log(2 * np.pi)
    return _Factor(c, beta, alpha, Kinv_F, fc, nll)


@dataclass
class KrigingModel:
    Z: np.ndarray
    y: np.ndarray          # standardised targets
    noise: np.ndarray      # standardised per-record noise variances
    groups: list[list[int]]
    kernel: str
    trend: str
    theta: np.ndarray
    s2: float
    nugget: float
    y_shift: float
    y_scale: float
    nll: float = float("nan")

    # --- fitting -----------------------------------------------------------------
    @classmethod
    def fit(cls, Z, y, groups, kernel=SQEXP, trend="constant", noise=None, nugget=1e-10,
            restarts=5, seed=0, max_nugget=1e-2) -> "KrigingModel":
        if kernel not in KERNELS:
            raise ValueError(f"unknown kernel {kernel!r}")
        Z = np.asarray(Z, dtype=float)
        y = np.asarray(y, dtype=float)
        m = y.size
        shift = float(y.mean())
        scale = float(y.std()) or 1.0
        ys = (y - shift) / scale
        ns = np.zeros(m) if noise is None else np.asarray(noise, dtype=float) / scale**2
        terms = _pair_terms(Z, Z, groups, kernel)
        F = trend_basis(Z, trend)
        g = len(groups)
        eye = np.eye(m)

        def objective(p, nug):
            theta, s2 = np.exp(p[:g]), np.exp(p[g])
            R = _correlation(terms, theta)
            K = s2 * (R + nug * eye) + np.diag(ns)
            try:
                fac = _factorize(K, F, ys)
            except np.linalg.LinAlgError:
                return _BAD, np.zeros_like(p)
            Kinv = cho_solve(fac.chol, eye, check_finite=False)
            W = np.outer(fac.alpha, fac.alpha) - Kinv
            grad = np.empty_like(p)
            sR = s2 * R
            for k in range(g):
                dK = -theta[k] * terms[k] * sR
                grad[k] = -0.5 * np.sum(W * dK)
            grad[g] = -0.5 * np.sum(W * (s2 * (R + nug * eye)))
            return fac.nll, grad

        rng = np.random.default_rng(seed)
        lo = np.r_[np.full(g, LOG_THETA_BOUNDS[0]), LOG_S2_BOUNDS[0]]
        hi = np.r_[np.full(g, LOG_THETA_BOUNDS[1]), LOG_S2_BOUNDS[1]]
        # first start: unit lengthscale per standardised coordinate, unit process variance
        starts = [np.r_[np.log(np.full(g, 1.0 / max(1, len(groups)))), 0.0]]
        starts += [rng.uniform(lo, hi) for _ in range(max(0, restarts - 1))]
        nug = nugget
        while True:
            best = None
            for x0 in starts:
                res = minimize(objective, x0, args=(nug,), jac=True, method="L-BFGS-B",
                               bounds=list(zip(lo, hi)))
                if res.fun < _BAD and (best is None or res.fun < best.fun):
                    best = res
            if best is not None:
                p = best.x
                model = cls(Z, ys, ns, groups, kernel, trend, np.exp(p[:g]), float(np.exp(p[g])), nug,
                            shift, scale, float(best.fun))
                try:
                    model._factor()
                    return model
                except np.linalg.LinAlgError:
                    pass
            nug *= 10.0
            if nug > max_nugget:
                raise NotPositiveDefiniteError("GP covariance stayed singular after nugget escalation")

    # --- prediction ----------------------------------------------------------------
    def _factor(self) -> _Factor:
        fac = getattr(self, "_cache", None)
        if fac is None:
            R = _correlation(_pair_terms(self.Z, self.Z, self.groups, self.kernel), self.theta)
            K = self.s2 * (R + self.nugget * np.eye(self.y.size)) + np.diag(self.noise)
            fac = _factorize(K, trend_basis(self.Z, self.trend), self.y)
            self._cache = fac
        return fac

    def predict(self, Zq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance of the latent function (noise-free) on the original scale."""
        fac = self._factor()
        Zq = np.atleast_2d(Zq)
        mean = np.empty(Zq.shape[0])
        var = np.empty(Zq.shape[0])
        chunk = max(1, 2_000_000 // max(1, self.y.size * len(self.groups)))
        L = fac.chol[0]
        for s in range(0, Zq.shape[0], chunk):
            zq = Zq[s:s + chunk]
            k = self.s2 * _correlation(_pair_terms(zq, self.Z, self.groups, self.kernel), self.theta)
            f = trend_basis(zq, self.trend)
            mean[s:s + chunk] = f @ fac.beta + k @ fac.alpha
            v = solve_triangular(L, k.T, lower=True, check_finite=False)
            u = f.T - fac.Kinv_F.T @ k.T
            trend_var = (u * cho_solve(fac.FtKiF_chol, u, check_finite=False)).sum(0)
            var[s:s + chunk] = self.s2 - (v * v).sum(0) + trend_var
        return self.y_shift + self.y_scale * mean, np.maximum(var, 0.0) * self.y_scale**2

    @property
    def trend_value(self) -> float:
        """Constant-trend estimate on the original scale."""
        return self.y_shift + self.y_scale * float(self._factor().beta[0])

    @property
    def prior_variance(self) -> float:
        """Far-field variance limit: process variance plus the constant-trend estimation variance."""
        fac = self._factor()
        if self.trend != "constant":
            raise ValueError("the far-field limit is only finite for a constant trend")
        trend_var = 1.0 / float(np.ones(self.y.size) @ cho_solve(fac.chol, np.ones(self.y.size)))
        return (self.s2 + trend_var) * self.y_scale**2

    @property
    def lengthscales(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.theta) if self.kernel == SQEXP else 1.0 / self.theta

    def to_params(self) -> dict:
        return {"kernel": self.kernel, "trend": self.trend, "theta": self.theta.tolist(), "s2": self.s2,
                "nugget": self.nugget, "y_shift": self.y_shift, "y_scale": self.y_scale, "nll": self.nll,
                "groups": self.groups, "beta": self._factor().beta.tolist(),
                "Z": self.Z.tolist(), "y": self.y.tolist(), "noise": self.noise.tolist()}

    @classmethod
    def from_params(cls, d: dict) -> "KrigingModel":
        model = cls(np.asarray(d["Z"], dtype=float), np.asarray(d["y"], dtype=float),
                    np.asarray(d["noise"], dtype=float), [list(g) for g in d["groups"]], d["kernel"],
                    d["trend"], np.asarray(d["theta"], dtype=float), float(d["s2"]), float(d["nugget"]),
                    float(d["y_shift"]), float(d["y_scale"]), float(d["nll"]))
        model._factor()
        return model
