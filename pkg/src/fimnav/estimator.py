"""Source-position estimates fed to the information-driven controller.

Two modes: an oracle that perturbs the true position with isotropic Gaussian
jitter, and a maximum-likelihood fit of the ranging/bearing observations in a
view (Gauss-Newton with step halving).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import wrap_angle
from .network import NetworkView
from .sensing import ChannelParams

ML_MAX_ITER = 50
ML_TOL = 1e-4


@dataclass(frozen=True)
class SourceEstimate:
    position: np.ndarray
    valid: bool = True


def oracle_estimate(true_source, jitter_std: float, rng: np.random.Generator | None = None) -> SourceEstimate:
    if jitter_std < 0:
        raise ValueError("jitter std must be non-negative")
    p = np.array(true_source, dtype=float)
    if jitter_std > 0:
        p = p + jitter_std * rng.standard_normal(3)
    return SourceEstimate(p, True)


def _observations(view: NetworkView, params: ChannelParams):
    """Flatten the usable observations of a view.

    Returns a list of ``(kind, uav_position, value, los)`` with kind in
    ``{"range", "azimuth", "elevation"}``. NLOS bearings are dropped.
    """
    obs = []
    for j in sorted(view.entries):
        m = view.entries[j]
        if m.range_est is not None:
            obs.append(("range", m.uav_position, m.range_est, m.los))
        if m.bearing_est is not None and m.los:
            obs.append(("azimuth", m.uav_position, m.bearing_est.azimuth, 1))
            obs.append(("elevation", m.uav_position, m.bearing_est.elevation, 1))
    return obs


def _linearize(obs, p0, params: ChannelParams):
    """Whitened residuals, Jacobian rows and negative log-likelihood at ``p0``."""
    res, rows = [], []
    nll = 0.0
    sb = params.sigma_bearing
    for kind, q, value, los in obs:
        delta = p0 - q
        rho2 = delta[0] ** 2 + delta[1] ** 2
        d = math.sqrt(rho2 + delta[2] ** 2)
        if d < 1e-9:
            continue
        if kind == "range":
            sigma = params.sigma_r0(los) * d ** (params.gamma / 2)
            r = (value - d) / sigma
            nll += 0.5 * r * r + math.log(sigma)
            res.append(r)
            rows.append(delta / d / sigma)
            continue
        rho = math.sqrt(rho2)
        if rho < 1e-9:
            continue
        if kind == "azimuth":
            r = wrap_angle(value - math.atan2(delta[1], delta[0])) / sb
            grad = np.array([-delta[1], delta[0], 0.0]) / rho2
        else:
            r = (value - math.asin(max(-1.0, min(1.0, delta[2] / d)))) / sb
            grad = np.array([-delta[0] * delta[2] / rho, -delta[1] * delta[2] / rho, rho]) / d ** 2
        nll += 0.5 * r * r
        res.append(r)
        rows.append(grad / sb)
    return np.array(res), np.array(rows).reshape(-1, 3), nll


def ml_estimate(view: NetworkView, params: ChannelParams, init=None) -> SourceEstimate:
    """Maximum-likelihood source position from the observations stored in ``view``.

    ``init`` defaults to the centroid of the stored UAV positions. Returns an
    invalid estimate when the geometry is not identifiable or the iteration
    fails to converge.
    """
    obs = _observations(view, params)
    if not obs:
        return SourceEstimate(np.full(3, np.nan), False)
    if init is None:
        init = np.mean([q for _, q, _, _ in obs], axis=0)
    p = np.array(init, dtype=float)
    for _ in range(ML_MAX_ITER):
        r, F, nll = _linearize(obs, p, params)
        if len(r) < 3:
            return SourceEstimate(p, False)
        H = F.T @ F
        s = np.linalg.svd(H, compute_uv=False)
        if s[-1] <= 1e-12 * s[0]:
            return SourceEstimate(p, False)
        step = np.linalg.solve(H, F.T @ r)
        t = 1.0
        while t > 1e-6:
            cand = p + t * step
            _, _, cand_nll = _linearize(obs, cand, params)
            if cand_nll <= nll:
                break
            t *= 0.5
        else:
            # no decrease along the Gauss-Newton direction: at a stationary point
            return SourceEstimate(p, bool(np.linalg.norm(step) < ML_TOL))
        p = cand
        if np.linalg.norm(t * step) < ML_TOL:
            # one more full step polishes the solution below the tolerance
            r, F, _ = _linearize(obs, p, params)
            H = F.T @ F
            if np.linalg.matrix_rank(H) == 3:
                p = p + np.linalg.solve(H, F.T @ r)
            return SourceEstimate(p, bool(np.all(np.isfinite(p))))
    return SourceEstimate(p, False)
