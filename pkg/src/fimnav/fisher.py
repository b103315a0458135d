"""Fisher information about the source position and the A-/D-optimality costs.

Each view entry contributes ``kappa * A_r * G_r`` for ranging and, when in
LOS, ``beta * A_b * (G_az + G_el)`` for bearing, where the ``G`` matrices are
outer products of the gradients of distance, azimuth and elevation with
respect to the source position.
"""

from __future__ import annotations

import enum
import logging
import math
from typing import NamedTuple

import numpy as np

from .geometry import SphericalDirection, direction_vector, relative_geometry
from .network import NetworkView
from .sensing import ChannelParams

log = logging.getLogger(__name__)

SINGULAR_RTOL = 1e-12
COINCIDENT_TOL = 1e-9

Fim = np.ndarray


class SingularFimError(ArithmeticError):
    """The information matrix is (numerically) singular."""


class Criterion(str, enum.Enum):
    A = "A"
    D = "D"

    @classmethod
    def parse(cls, value) -> "Criterion":
        if isinstance(value, Criterion):
            return value
        key = str(value).strip().upper()
        aliases = {"A": "A", "A-OPT": "A", "A_OPT": "A", "A-OPTIMALITY": "A",
                   "D": "D", "D-OPT": "D", "D_OPT": "D", "D-OPTIMALITY": "D"}
        if key not in aliases:
            raise ValueError(f"unknown criterion {value!r}")
        return cls(aliases[key])


class Cofactors(NamedTuple):
    xx: float
    yy: float
    zz: float
    yx: float
    zx: float

    @property
    def xy(self) -> float:
        return self.yx

    @property
    def zy(self) -> float:
        # not needed by the costs; provided for symmetric use
        return self.zx


def geometric_matrix_range(direction: SphericalDirection) -> np.ndarray:
    a = direction_vector(direction)
    return np.outer(a, a)


def geometric_matrix_azimuth(direction: SphericalDirection, d: float) -> np.ndarray:
    phi, theta = direction
    c = math.cos(theta)
    if d <= 0:
        raise ValueError("distance must be positive")
    if abs(c) < 1e-15:
        raise ValueError("azimuth information undefined at elevation +-pi/2")
    return geometric_matrix_range(SphericalDirection(phi + math.pi / 2, 0.0)) / (d * c) ** 2


def geometric_matrix_elevation(direction: SphericalDirection, d: float) -> np.ndarray:
    phi, theta = direction
    if d <= 0:
        raise ValueError("distance must be positive")
    # the elevation gradient points along (phi, theta + pi/2); the outer product of
    # (phi, -theta - pi/2) only agrees with it at theta = 0
    return geometric_matrix_range(SphericalDirection(phi, theta + math.pi / 2)) / d ** 2


def range_coefficient(d: float, params: ChannelParams, los: int) -> float:
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    g = params.gamma
    s0sq = params.sigma_r0(los) ** 2
    var = s0sq * d ** g
    return (1.0 / var) * (1.0 + 2.0 * g * g * s0sq * d ** g / (4.0 * d * d))


def bearing_coefficient(params: ChannelParams) -> float:
    return 1.0 / params.sigma_bearing ** 2


def view_arrays(view: NetworkView):
    """Stack a view into ``(positions, kappa, beta, los)`` arrays, ordered by peer id."""
    ms = [view.entries[j] for j in sorted(view.entries)]
    pos = np.array([m.uav_position for m in ms], dtype=float).reshape(-1, 3)
    kappa = np.array([m.kappa for m in ms], dtype=float)
    beta = np.array([m.beta for m in ms], dtype=float)
    los = np.array([m.los for m in ms], dtype=float)
    return pos, kappa, beta, los


def fim_terms(positions, kappa, beta, los, source, params: ChannelParams) -> np.ndarray:
    """Per-entry information matrices, shape ``positions.shape[:-1] + (3, 3)``.

    Broadcasts over leading axes of ``positions``. Entries coincident with the
    source contribute nothing.
    """
    delta = np.asarray(source, dtype=float) - positions
    rho2 = delta[..., 0] ** 2 + delta[..., 1] ** 2
    d2 = rho2 + delta[..., 2] ** 2
    d = np.sqrt(d2)
    ok = d > COINCIDENT_TOL
    d_safe = np.where(ok, d, 1.0)
    a = delta / d_safe[..., None]

    g = params.gamma
    s0los = params.sigma_r0(1) ** 2
    s0nlos = params.sigma_r0(0) ** 2
    s0sq = np.where(los > 0, s0los, s0nlos)
    dg = d_safe ** g
    a_r = (1.0 / (s0sq * dg)) * (1.0 + 2.0 * g * g * s0sq * dg / (4.0 * d_safe ** 2))
    w_r = np.where(ok, kappa * a_r, 0.0)
    terms = w_r[..., None, None] * (a[..., :, None] * a[..., None, :])

    w_b = np.where(ok, beta * los, 0.0) * bearing_coefficient(params)
    if np.any(w_b):
        rho = np.sqrt(rho2)
        bear_ok = rho > COINCIDENT_TOL * np.maximum(d_safe, 1.0)
        rho_safe = np.where(bear_ok, rho, 1.0)
        # azimuth gradient direction (-sin phi, cos phi, 0) scaled by 1 / (d cos theta) = 1 / rho
        az = np.stack([-delta[..., 1], delta[..., 0], np.zeros_like(rho)], axis=-1)
        az = az / (rho_safe ** 2)[..., None]
        # elevation gradient direction (-sin th cos phi, -sin th sin phi, cos th) / d
        el = np.stack([-delta[..., 0] * delta[..., 2] / rho_safe,
                       -delta[..., 1] * delta[..., 2] / rho_safe,
                       rho], axis=-1) / d_safe[..., None] ** 2
        g_b = az[..., :, None] * az[..., None, :] + el[..., :, None] * el[..., None, :]
        w_b = np.where(bear_ok, w_b, 0.0)
        terms = terms + w_b[..., None, None] * g_b
    return terms


def fim_from_arrays(positions, kappa, beta, los, source, params: ChannelParams) -> np.ndarray:
    """Sum of ``fim_terms`` over the entry axis (the second to last axis of ``positions``)."""
    return fim_terms(positions, kappa, beta, los, source, params).sum(axis=-3)


def assemble_fim(view: NetworkView, source_estimate, params: ChannelParams) -> Fim:
    """Information matrix of ``view`` evaluated at ``source_estimate``.

    Uses the stored peer positions, so stale entries count where they were
    measured. An entry coincident with the source is skipped.
    """
    if not view.entries:
        raise ValueError("cannot assemble a FIM from an empty view")
    pos, kappa, beta, los = view_arrays(view)
    src = np.asarray(source_estimate, dtype=float)
    d = np.linalg.norm(pos - src, axis=1)
    if np.any(d <= COINCIDENT_TOL):
        log.debug("view of UAV %s: skipped %d entries at the source", view.owner,
                  int(np.sum(d <= COINCIDENT_TOL)))
    return fim_from_arrays(pos, kappa, beta, los, src, params)


def entry_fim(position, kappa: int, beta: int, los: int, source, params: ChannelParams) -> Fim:
    """Reference per-entry FIM written directly in terms of the geometric matrices."""
    d, direction = relative_geometry(position, source)
    J = np.zeros((3, 3))
    if kappa:
        J += range_coefficient(d, params, los) * geometric_matrix_range(direction)
    if beta and los:
        J += bearing_coefficient(params) * (geometric_matrix_azimuth(direction, d)
                                            + geometric_matrix_elevation(direction, d))
    return J


def cofactors(J) -> Cofactors:
    J = np.asarray(J, dtype=float)
    jxx, jyy, jzz = J[0, 0], J[1, 1], J[2, 2]
    jxy, jxz, jyz = J[0, 1], J[0, 2], J[1, 2]
    return Cofactors(
        xx=jyy * jzz - jyz ** 2,
        yy=jxx * jzz - jxz ** 2,
        zz=jxx * jyy - jxy ** 2,
        yx=jyz * jxz - jxy * jzz,
        zx=jxy * jyz - jyy * jxz,
    )


def _cholesky_parts(J):
    """Batched closed-form 3x3 Cholesky ``J = L L^T``.

    Returns ``(log det J, tr J^-1, tr J, ok)``; ``ok`` is False where a pivot is
    not positive. Algebraically these are the cofactor expressions
    ``-ln det`` and ``(C_xx + C_yy + C_zz) / det``, but the factorization stays
    accurate for ill-conditioned matrices where the first-row cofactor
    expansion loses digits to cancellation.
    """
    J = np.asarray(J, dtype=float)
    a, b, c = J[..., 0, 0], J[..., 1, 0], J[..., 2, 0]
    e, f, i = J[..., 1, 1], J[..., 2, 1], J[..., 2, 2]
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        l11 = np.sqrt(np.where(a > 0, a, np.nan))
        l21, l31 = b / l11, c / l11
        p22 = e - l21 * l21
        l22 = np.sqrt(np.where(p22 > 0, p22, np.nan))
        l32 = (f - l21 * l31) / l22
        p33 = i - l31 * l31 - l32 * l32
        l33 = np.sqrt(np.where(p33 > 0, p33, np.nan))
        logdet = 2.0 * (np.log(l11) + np.log(l22) + np.log(l33))
        # entries of L^-1; tr J^-1 is its squared Frobenius norm
        m11, m22, m33 = 1.0 / l11, 1.0 / l22, 1.0 / l33
        m21 = -l21 * m11 * m22
        m32 = -l32 * m22 * m33
        m31 = -(l31 * m11 + l32 * m21) * m33
        tr_inv = m11 ** 2 + m22 ** 2 + m33 ** 2 + m21 ** 2 + m32 ** 2 + m31 ** 2
    ok = np.isfinite(logdet) & np.isfinite(tr_inv)
    return logdet, tr_inv, a + e + i, ok


def _singular(logdet, tr, ok):
    with np.errstate(invalid="ignore", divide="ignore"):
        limit = math.log(SINGULAR_RTOL) + 3.0 * np.log(np.where(tr > 0, tr / 3.0, np.nan))
        return ~ok | ~(tr > 0) | ~(logdet > limit)


def singular_mask(J) -> np.ndarray:
    """True where ``det J <= 1e-12 * (tr J / 3)^3`` (relative, scale-aware test)
    or where ``J`` is not positive definite."""
    logdet, _, tr, ok = _cholesky_parts(J)
    return _singular(logdet, tr, ok)


def is_singular(J) -> bool:
    return bool(singular_mask(J))


def cost_values(J, criterion: Criterion) -> np.ndarray:
    """Batched costs; ``nan`` where the matrix is singular."""
    logdet, tr_inv, tr, ok = _cholesky_parts(J)
    singular = _singular(logdet, tr, ok)
    out = -logdet if Criterion.parse(criterion) is Criterion.D else tr_inv
    return np.where(singular, np.nan, out)


def cost(J, criterion: Criterion) -> float:
    """D: ``-ln det J``; A: ``tr J^-1 = (C_xx + C_yy + C_zz) / det J``."""
    value = float(cost_values(J, criterion))
    if math.isnan(value):
        raise SingularFimError("FIM is singular")
    return value


def peb_values(J) -> np.ndarray:
    """Batched position error bound; ``inf`` where singular."""
    a = cost_values(J, Criterion.A)
    return np.where(np.isnan(a), np.inf, np.sqrt(np.maximum(a, 0.0)))


def peb(J) -> float:
    return float(peb_values(J))
