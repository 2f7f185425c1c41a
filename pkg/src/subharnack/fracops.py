"""Discrete causal convolution, the fractional time derivative, and
numerical verifiers for the product-rule identities of convolution
operators d/dt (k * u) with regular kernels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import DomainError, GridMismatchError, SingularKernelError
from .kernels import KernelTable, _as_alpha, rl_kernel_table

__all__ = [
    "TimeGrid",
    "SampledPath",
    "causal_convolve",
    "l1_weights",
    "rl_derivative",
    "fundamental_identity_residual",
    "fundamental_identity_history",
    "commutation_residual_1",
    "commutation_inequality_margin",
    "commutation_residual_2",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid 0, dt, ..., m*dt."""

    dt: float
    m: int

    def __post_init__(self):
        if self.dt <= 0.0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.m < 2:
            raise DomainError(f"need at least 2 steps, got {self.m}")

    @property
    def horizon(self) -> float:
        return self.m * self.dt

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.m + 1) * self.dt

    @classmethod
    def from_horizon(cls, T: float, m: int) -> "TimeGrid":
        return cls(dt=T / m, m=m)


@dataclass(frozen=True)
class SampledPath:
    """A time trace sampled at every node of a TimeGrid (t = 0 included)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).copy()
        if vals.shape != (self.grid.m + 1,):
            raise GridMismatchError(
                f"path has {vals.size} samples, grid has {self.grid.m + 1} nodes"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: TimeGrid, fn) -> "SampledPath":
        return cls(grid, np.asarray([fn(t) for t in grid.nodes], dtype=float))


def _match_grids(k: KernelTable, grid: TimeGrid) -> None:
    if k.m != grid.m or abs(k.dt - grid.dt) > 1e-12 * grid.dt:
        raise GridMismatchError(
            f"kernel grid (dt={k.dt}, m={k.m}) does not match path grid "
            f"(dt={grid.dt}, m={grid.m})"
        )


def _match_grids_path(v: SampledPath, w: SampledPath) -> None:
    if v.grid != w.grid:
        raise GridMismatchError("paths live on different grids")


def causal_convolve(k: KernelTable, v: SampledPath) -> SampledPath:
    """Product-integration approximation of (k * v) at the grid nodes.

    The path is treated as piecewise constant per cell with its right-node
    value, the kernel through its per-cell representatives, so the rule is
    exact whenever v really is piecewise constant and k is stored by cell
    averages.  Output node 0 is 0 (an empty integral).
    """
    _match_grids(k, v.grid)
    m = v.grid.m
    cells = k.cell_values()
    out = np.zeros(m + 1)
    out[1:] = np.convolve(cells, v.values[1:])[:m] * v.grid.dt
    return SampledPath(v.grid, out)


def l1_weights(alpha: float, m: int) -> np.ndarray:
    """Weights b_j = (j+1)^(1-alpha) - j^(1-alpha); b_0 = 1, strictly decreasing."""
    j = np.arange(0, m, dtype=float)
    return (j + 1.0) ** (1.0 - alpha) - j ** (1.0 - alpha)


def rl_derivative(v: SampledPath, v0: float, alpha) -> SampledPath:
    """Fractional derivative of order alpha of (v - v0), by the L1 scheme.

    At t_n the scheme returns
        dt^(-alpha)/Gamma(2-alpha) * sum_j b_j (v_{n-j} - v_{n-j-1})
    which is the product integration of the memory integral with piecewise
    linear v anchored at v0.  Node 0 carries 0.
    """
    a = _as_alpha(alpha, classical_ok=True)
    grid = v.grid
    vals = np.concatenate([[v0], v.values[1:]])
    b = l1_weights(a, grid.m)
    c0 = grid.dt ** (-a) / gamma_fn(2.0 - a)
    out = np.zeros(grid.m + 1)
    out[1:] = c0 * np.convolve(b, np.diff(vals))[: grid.m]
    return SampledPath(grid, out)


# ---------------------------------------------------------------------------
# identity verifiers
# ---------------------------------------------------------------------------

def _require_regular(k: KernelTable) -> np.ndarray:
    if k.kind == "riemann_liouville" and k.params and k.params[0] < 1.0:
        raise SingularKernelError(
            "identity checks need an H^1 kernel; power kernels with beta < 1 "
            "are singular at t = 0"
        )
    if k.sampling != "node" or not np.all(np.isfinite(k.values)):
        raise SingularKernelError("identity checks need finite node samples")
    return k.values


def _centered(y: np.ndarray, dt: float) -> np.ndarray:
    d = np.empty_like(y)
    d[1:-1] = (y[2:] - y[:-2]) / (2.0 * dt)
    d[0] = (y[1] - y[0]) / dt
    d[-1] = (y[-1] - y[-2]) / dt
    return d


def _trapezoid_convolve(k: np.ndarray, v: np.ndarray, dt: float) -> np.ndarray:
    full = np.convolve(k, v)[: v.size]
    return dt * (full - 0.5 * k * v[0] - 0.5 * k[0] * v)


def _interior_mask(grid: TimeGrid, t_min: float) -> np.ndarray:
    mask = np.zeros(grid.m + 1, dtype=bool)
    mask[1: grid.m] = True
    return mask & (grid.nodes >= t_min)


def fundamental_identity_history(u: SampledPath, k: KernelTable, H, Hp) -> np.ndarray:
    """History term of the convolution product rule, per node.

    Discretized by the trapezoid rule on the lag variable with the kernel
    derivative taken by centered differences; term-by-term nonnegative when
    H is convex and the kernel table is nonincreasing.
    """
    kv = _require_regular(k)
    _match_grids(k, u.grid)
    dt, m = u.grid.dt, u.grid.m
    uu = u.values
    kdot = _centered(kv, dt)
    out = np.zeros(m + 1)
    for j in range(1, m + 1):
        lag = np.arange(0, j + 1)
        bracket = H(uu[j - lag]) - H(uu[j]) - Hp(uu[j]) * (uu[j - lag] - uu[j])
        w = np.ones(j + 1)
        w[0] = 0.5
        w[-1] = 0.5
        out[j] = dt * np.dot(w, bracket * (-kdot[lag]))
    return out


def fundamental_identity_residual(
    u: SampledPath, k: KernelTable, H, Hp, t_min: float = 0.0
) -> float:
    """Max interior-node residual of the convolution product rule.

    Both sides are discretized consistently: trapezoidal convolutions,
    centered time differences, trapezoidal history integral.  With linear H
    the two sides collapse to the same discrete expression and the residual
    is at rounding level.  Nodes with t < t_min are excluded from the max;
    near t = 0 the kernel derivative of the regularized kernels is steep and
    the pointwise rate degrades there.
    """
    kv = _require_regular(k)
    _match_grids(k, u.grid)
    dt = u.grid.dt
    uu = u.values
    lhs = Hp(uu) * _centered(_trapezoid_convolve(kv, uu, dt), dt)
    rhs = (
        _centered(_trapezoid_convolve(kv, H(uu), dt), dt)
        + (-H(uu) + Hp(uu) * uu) * kv
        + fundamental_identity_history(u, k, H, Hp)
    )
    mask = _interior_mask(u.grid, t_min)
    return float(np.abs(lhs - rhs)[mask].max())


def _neg_gdot_pi(alpha: float, dt: float, m: int):
    """Cell moments of -d/dt g_alpha for the linear product-integration rule.

    M0[l], M1[l] are the zeroth/first moments over the lag cell
    [l dt, (l+1) dt] for l >= 1; w_first weights the s = dt node across the
    first cell, where the data vanishes linearly at s = 0 and only the first
    moment of the (non-integrable) derivative is needed.
    """
    ga = gamma_fn(alpha)
    t = np.arange(1, m + 2) * dt
    g_nodes = t ** (alpha - 1.0) / ga
    G_cells = np.diff(np.arange(0, m + 2, dtype=float) ** alpha) \
        * dt ** alpha / gamma_fn(alpha + 1.0)
    M0 = g_nodes[:m] - g_nodes[1: m + 1]
    M1 = -g_nodes[1: m + 1] * dt + G_cells[1: m + 1]
    w_first = (-g_nodes[0] * dt + G_cells[0]) / dt
    return M0, M1, w_first


def _comm1_terms(v: SampledPath, phi: SampledPath, alpha: float):
    _match_grids_path(v, phi)
    a = _as_alpha(alpha)
    grid = v.grid
    dt, m = grid.dt, grid.m
    vv, ph = v.values, phi.values
    scale = max(np.abs(vv).max(), 1.0)
    if abs(vv[0]) > 1e-12 * scale:
        raise DomainError("commutation identity requires v(0) = 0")
    vdot = _centered(vv, dt)
    phid = _centered(ph, dt)
    gcells = rl_kernel_table(a, dt, m, sampling="cell_average").cell_values()

    def conv_mid(data):
        mid = 0.5 * (data[:-1] + data[1:])
        out = np.zeros(m + 1)
        out[1:] = np.convolve(gcells, mid)[:m] * dt
        return out

    lhs = conv_mid(ph * vdot)
    term1 = ph * conv_mid(vdot)
    corr2 = conv_mid(phid * vv)
    M0, M1, w_first = _neg_gdot_pi(a, dt, m)
    corr1 = np.zeros(m + 1)
    for j in range(1, m + 1):
        lag = np.arange(0, j + 1)
        D = (ph[j] - ph[j - lag]) * vv[j - lag]  # D[0] = 0
        acc = w_first * D[1]
        if j >= 2:
            ll = np.arange(1, j)
            DL, DR = D[ll], D[ll + 1]
            acc += np.dot(DL, M0[ll - 1]) + np.dot((DR - DL) / dt, M1[ll - 1])
        corr1[j] = acc
    return lhs, term1, corr1, corr2


def commutation_residual_1(v: SampledPath, phi: SampledPath, alpha,
                           t_min: float = 0.0) -> float:
    """Max nodal residual of the convolution/multiplication exchange rule
    for the power kernel acting on phi*vdot, with v(0) = 0.

    The correction integral carries the (non-integrable) kernel derivative;
    it is discretized by linear product integration with exact derivative
    moments, which keeps the residual first-order accurate.
    """
    lhs, term1, corr1, corr2 = _comm1_terms(v, phi, alpha)
    rhs = term1 + corr1 - corr2
    mask = _interior_mask(v.grid, t_min)
    return float(np.abs(lhs - rhs)[mask].max())


def commutation_inequality_margin(v: SampledPath, phi: SampledPath, alpha) -> float:
    """Most negative nodal margin of the one-sided form of the exchange rule,
    valid for nonnegative v and nondecreasing phi (should be >= -O(dt))."""
    if np.any(v.values < 0.0):
        raise DomainError("inequality form requires v >= 0")
    if np.any(np.diff(phi.values) < -1e-14 * max(1.0, np.abs(phi.values).max())):
        raise DomainError("inequality form requires nondecreasing phi")
    lhs, term1, _, corr2 = _comm1_terms(v, phi, alpha)
    margin = lhs - (term1 - corr2)
    mask = _interior_mask(v.grid, 0.0)
    return float(margin[mask].min())


def commutation_residual_2(k: KernelTable, v: SampledPath, phi: SampledPath,
                           t_min: float = 0.0) -> float:
    """Max nodal residual of the product rule for phi(t) d/dt (k * v) with a
    regular (H^1) kernel table; trapezoidal quadratures and centered
    differences throughout."""
    kv = _require_regular(k)
    _match_grids(k, v.grid)
    _match_grids_path(v, phi)
    dt, m = v.grid.dt, v.grid.m
    vv, ph = v.values, phi.values
    kdot = _centered(kv, dt)
    lhs = ph * _centered(_trapezoid_convolve(kv, vv, dt), dt)
    d2 = _centered(_trapezoid_convolve(kv, ph * vv, dt), dt)
    corr = np.zeros(m + 1)
    for j in range(1, m + 1):
        lag = np.arange(0, j + 1)
        integrand = kdot[lag] * (ph[j] - ph[j - lag]) * vv[j - lag]
        w = np.ones(j + 1)
        w[0] = 0.5
        w[-1] = 0.5
        corr[j] = dt * np.dot(w, integrand)
    rhs = d2 + corr
    mask = _interior_mask(v.grid, t_min)
    return float(np.abs(lhs - rhs)[mask].max())
