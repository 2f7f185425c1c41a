"""Implicit finite-difference solver for time-fractional diffusion
with measurable bounded coefficients on an interval or rectangle.

Space: vertex-centered differences with harmonic-mean face coefficients,
which keeps fluxes consistent across coefficient jumps.  Time: product
integration of the memory term with positive decreasing weights, so every
time level solves an M-matrix system and the discrete comparison principle
holds exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import cg
from scipy.special import gamma as gamma_fn

from .errors import DomainError, GridMismatchError, LinearSolveError
from .fracops import SampledPath, TimeGrid, l1_weights
from .kernels import _as_alpha, rl_kernel_table, solve_volterra

__all__ = [
    "SpaceGrid",
    "CoefficientField",
    "checkerboard_coefficients",
    "constant_coefficients",
    "ProblemSpec",
    "SolveResult",
    "solve_subdiffusion",
    "solve_scalar_relaxation",
    "supersolution_residual",
    "tent_test_fields",
]

BoundaryData = Union[None, float, Callable[[float, np.ndarray], np.ndarray]]
Forcing = Union[None, float, Callable[[float, np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform vertex grid on an interval (N=1) or axis-aligned rectangle (N=2)."""

    lower: tuple
    upper: tuple
    cells: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in np.atleast_1d(self.lower))
        hi = tuple(float(x) for x in np.atleast_1d(self.upper))
        nc = tuple(int(n) for n in np.atleast_1d(self.cells))
        if not (len(lo) == len(hi) == len(nc)):
            raise DomainError("lower/upper/cells must have matching lengths")
        if len(lo) not in (1, 2):
            raise DomainError(f"dimension must be 1 or 2, got {len(lo)}")
        for a, b, n in zip(lo, hi, nc):
            if b <= a:
                raise DomainError("upper bound must exceed lower bound")
            if n < 4:
                raise DomainError("need at least 4 cells per axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "cells", nc)

    @classmethod
    def interval(cls, a: float, b: float, cells: int) -> "SpaceGrid":
        return cls((a,), (b,), (cells,))

    @classmethod
    def rectangle(cls, lower, upper, cells) -> "SpaceGrid":
        return cls(tuple(lower), tuple(upper), tuple(cells))

    @property
    def dimension(self) -> int:
        return len(self.cells)

    @property
    def h(self) -> tuple:
        return tuple((b - a) / n for a, b, n in
                     zip(self.lower, self.upper, self.cells))

    @property
    def shape(self) -> tuple:
        return tuple(n + 1 for n in self.cells)

    def axes(self) -> list:
        return [np.linspace(a, b, n + 1) for a, b, n in
                zip(self.lower, self.upper, self.cells)]

    def node_points(self) -> np.ndarray:
        """All node coordinates, shape self.shape + (N,)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.dimension):
            sl = [slice(None)] * self.dimension
            sl[ax] = 0
            mask[tuple(sl)] = True
            sl[ax] = -1
            mask[tuple(sl)] = True
        return mask


@dataclass
class CoefficientField:
    """Diffusion coefficient A(t, x): scalar or per-axis diagonal values.

    ``evaluate(time_index, points)`` takes points of shape (..., N) and
    returns either (...,) for isotropic fields or (..., N) for diagonal
    tensors.  ``nu`` and ``lambda_bound`` are the claimed ellipticity and
    magnitude bounds; they are spot-checked on random space-time samples at
    validation time.
    """

    evaluate: Callable[[int, np.ndarray], np.ndarray]
    nu: float
    lambda_bound: float
    time_dependent: bool = True
    name: str = "custom"

    def diag_at(self, time_index: int, points: np.ndarray, dim: int) -> np.ndarray:
        vals = np.asarray(self.evaluate(time_index, points), dtype=float)
        if vals.shape == points.shape[:-1]:
            vals = np.repeat(vals[..., None], dim, axis=-1)
        if vals.shape != points.shape[:-1] + (dim,):
            raise DomainError(
                f"coefficient evaluator returned shape {vals.shape}; expected "
                f"{points.shape[:-1]} or {points.shape[:-1] + (dim,)}"
            )
        return vals

    def validate(self, space: SpaceGrid, n_time: int = 4, samples: int = 200,
                 seed: int = 1789) -> None:
        """Randomized spot check of ellipticity and the Frobenius bound."""
        rng = np.random.default_rng(seed)
        dim = space.dimension
        lo = np.asarray(space.lower)
        hi = np.asarray(space.upper)
        pts = rng.uniform(lo, hi, size=(samples, dim))
        for ti in range(n_time):
            vals = self.diag_at(ti * 7, pts, dim)
            xi = rng.standard_normal((samples, dim))
            quad = np.sum(vals * xi * xi, axis=-1)
            if np.any(quad < self.nu * np.sum(xi * xi, axis=-1) - 1e-12):
                raise DomainError("coefficient field violates its ellipticity bound")
            frob = np.sqrt(np.sum(vals * vals, axis=-1))
            if np.any(frob > self.lambda_bound + 1e-12):
                raise DomainError("coefficient field violates its magnitude bound")


def constant_coefficients(value: float = 1.0, dim: int = 1) -> CoefficientField:
    """Spatially and temporally constant isotropic coefficient."""
    if value <= 0.0:
        raise DomainError("coefficient must be positive")

    def evaluate(_ti, points):
        return np.full(points.shape[:-1], value)

    return CoefficientField(evaluate=evaluate, nu=value,
                            lambda_bound=value * np.sqrt(dim),
                            time_dependent=False, name=f"constant({value})")


def checkerboard_coefficients(
    space: SpaceGrid,
    period: int,
    low: float,
    high: float,
    time_flip: Optional[int] = None,
) -> CoefficientField:
    """Piecewise-constant scalar field alternating low/high per block of
    ``period`` cells along each axis, optionally swapping the two values
    every ``time_flip`` time steps (discontinuous in time)."""
    if not (0.0 < low <= high):
        raise DomainError("need 0 < low <= high")
    if period < 1:
        raise DomainError("period must be at least one cell")
    lo = np.asarray(space.lower)
    h = np.asarray(space.h)
    ncells = np.asarray(space.cells)

    def evaluate(time_index, points):
        block = np.floor((points - lo) / (period * h)).astype(int)
        block = np.minimum(block, (ncells - 1) // period)
        block = np.maximum(block, 0)
        parity = np.sum(block, axis=-1) % 2
        if time_flip is not None:
            parity = (parity + (time_index // time_flip)) % 2
        return np.where(parity == 0, low, high)

    fld = CoefficientField(
        evaluate=evaluate,
        nu=low,
        lambda_bound=high * np.sqrt(space.dimension),
        time_dependent=time_flip is not None,
        name=f"checkerboard(period={period}, low={low}, high={high})",
    )
    fld.validate(space)
    return fld


@dataclass
class ProblemSpec:
    """Full description of one initial-boundary value problem."""

    alpha: float
    space: SpaceGrid
    time: TimeGrid
    u0: np.ndarray
    boundary: BoundaryData = None
    forcing: Forcing = None
    coefficients: CoefficientField = None

    def __post_init__(self):
        self.alpha = _as_alpha(self.alpha, classical_ok=True)
        self.u0 = np.asarray(self.u0, dtype=float)
        if self.u0.shape != self.space.shape:
            raise GridMismatchError(
                f"u0 has shape {self.u0.shape}, grid nodes are {self.space.shape}"
            )
        if self.coefficients is None:
            self.coefficients = constant_coefficients(1.0, self.space.dimension)
        self.coefficients.validate(self.space)

    def boundary_values(self, t: float, points: np.ndarray) -> np.ndarray:
        if self.boundary is None:
            return np.zeros(points.shape[:-1])
        if callable(self.boundary):
            return np.asarray(self.boundary(t, points), dtype=float)
        return np.full(points.shape[:-1], float(self.boundary))

    def forcing_values(self, t: float, points: np.ndarray) -> np.ndarray:
        if self.forcing is None:
            return np.zeros(points.shape[:-1])
        if callable(self.forcing):
            return np.asarray(self.forcing(t, points), dtype=float)
        return np.full(points.shape[:-1], float(self.forcing))


@dataclass
class SolveResult:
    """Space-time solution array plus the problem that produced it."""

    spec: ProblemSpec
    u: np.ndarray
    diagnostics: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return self.spec.time.nodes

    def export_csv(self, path) -> None:
        """Long-format CSV: t,x[,y],u with one row per space-time node."""
        pts = self.spec.space.node_points()
        dim = self.spec.space.dimension
        with open(path, "w", newline="") as fh:
            fh.write("t,x,u\n" if dim == 1 else "t,x,y,u\n")
            for n, t in enumerate(self.times):
                flat_u = self.u[n].reshape(-1)
                flat_p = pts.reshape(-1, dim)
                for p, val in zip(flat_p, flat_u):
                    coords = ",".join(repr(float(c)) for c in p)
                    fh.write(f"{t!r},{coords},{val!r}\n")

    def export_binary(self, path) -> None:
        """Binary layout (little endian), documented byte-exactly in README:
        magic "SUBHARN1", uint32 dim, uint32 time levels, uint32 nodes per
        axis, float64 dt, float64 lower bounds, float64 cell widths, then the
        solution as row-major float64."""
        space = self.spec.space
        with open(path, "wb") as fh:
            fh.write(b"SUBHARN1")
            fh.write(struct.pack("<II", space.dimension, self.u.shape[0]))
            for nnodes in space.shape:
                fh.write(struct.pack("<I", nnodes))
            fh.write(struct.pack("<d", self.spec.time.dt))
            for a in space.lower:
                fh.write(struct.pack("<d", a))
            for h in space.h:
                fh.write(struct.pack("<d", h))
            fh.write(np.ascontiguousarray(self.u, dtype="<f8").tobytes())


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _face_coefficients(spec: ProblemSpec, time_index: int) -> list:
    """Per-axis face coefficients: harmonic mean of the field at the two
    quarter points flanking each face (exact for cell-constant fields)."""
    space = spec.space
    dim = space.dimension
    axes = space.axes()
    out = []
    for ax in range(dim):
        h = space.h[ax]
        face_axes = list(axes)
        face_axes[ax] = axes[ax][:-1]
        mesh = np.meshgrid(*face_axes, indexing="ij")
        pts = np.stack(mesh, axis=-1)
        q1 = pts.copy()
        q1[..., ax] += 0.25 * h
        q2 = pts.copy()
        q2[..., ax] += 0.75 * h
        a1 = spec.coefficients.diag_at(time_index, q1, dim)[..., ax]
        a2 = spec.coefficients.diag_at(time_index, q2, dim)[..., ax]
        out.append(2.0 * a1 * a2 / (a1 + a2))
    return out


def _assemble_1d(spec: ProblemSpec, faces, c0: float):
    """Banded matrix (ab form) and boundary-flux rhs for the interior nodes."""
    nx = spec.space.cells[0]
    h = spec.space.h[0]
    kappa = faces[0]  # length nx
    inv_h2 = 1.0 / (h * h)
    diag = c0 + (kappa[:-1] + kappa[1:]) * inv_h2
    lowr = -kappa[1:-1] * inv_h2
    uppr = -kappa[1:-1] * inv_h2
    ab = np.zeros((3, nx - 1))
    ab[0, 1:] = uppr
    ab[1, :] = diag
    ab[2, :-1] = lowr
    flux = np.zeros(nx - 1)
    flux[0] = kappa[0] * inv_h2
    flux[-1] = kappa[-1] * inv_h2
    return ab, flux


def _assemble_2d(spec: ProblemSpec, faces, c0: float):
    nx, ny = spec.space.cells
    hx, hy = spec.space.h
    kx, ky = faces  # shapes (nx, ny+1) and (nx+1, ny)
    ivx, ivy = 1.0 / (hx * hx), 1.0 / (hy * hy)
    ni, nj = nx - 1, ny - 1
    size = ni * nj

    def idx(i, j):
        return (i - 1) * nj + (j - 1)

    diag = np.zeros(size)
    rows, cols, vals = [], [], []
    for i in range(1, nx):
        for j in range(1, ny):
            k = idx(i, j)
            kw = kx[i - 1, j] * ivx
            ke = kx[i, j] * ivx
            ks = ky[i, j - 1] * ivy
            kn = ky[i, j] * ivy
            diag[k] = c0 + kw + ke + ks + kn
            if i > 1:
                rows.append(k); cols.append(idx(i - 1, j)); vals.append(-kw)
            if i < nx - 1:
                rows.append(k); cols.append(idx(i + 1, j)); vals.append(-ke)
            if j > 1:
                rows.append(k); cols.append(idx(i, j - 1)); vals.append(-ks)
            if j < ny - 1:
                rows.append(k); cols.append(idx(i, j + 1)); vals.append(-kn)
    A = sp.csr_matrix(
        (np.concatenate([vals, diag]),
         (np.concatenate([rows, np.arange(size)]),
          np.concatenate([cols, np.arange(size)]))),
        shape=(size, size),
    )
    return A, diag


def _boundary_flux_2d(spec: ProblemSpec, faces, gb: np.ndarray) -> np.ndarray:
    """Contribution of Dirichlet nodes to the interior rhs (gb: full node array)."""
    nx, ny = spec.space.cells
    hx, hy = spec.space.h
    kx, ky = faces
    ivx, ivy = 1.0 / (hx * hx), 1.0 / (hy * hy)
    flux = np.zeros((nx - 1, ny - 1))
    flux[0, :] += kx[0, 1:ny] * ivx * gb[0, 1:ny]
    flux[-1, :] += kx[nx - 1, 1:ny] * ivx * gb[nx, 1:ny]
    flux[:, 0] += ky[1:nx, 0] * ivy * gb[1:nx, 0]
    flux[:, -1] += ky[1:nx, ny - 1] * ivy * gb[1:nx, ny]
    return flux.reshape(-1)


def solve_subdiffusion(spec: ProblemSpec) -> SolveResult:
    """March the implicit scheme through all time levels.

    Each level solves (c0 I + L^n) u = c0 * history + f + boundary flux where
    L^n is the five-point (three-point) operator with harmonic-mean faces.
    The matrix is strictly diagonally dominant with nonpositive off-diagonal
    entries, and the history weights are a convex combination, which gives
    the discrete comparison principle.
    """
    space, time = spec.space, spec.time
    dim = space.dimension
    alpha = spec.alpha
    dt, m = time.dt, time.m
    c0 = dt ** (-alpha) / gamma_fn(2.0 - alpha)
    b = l1_weights(alpha, m)
    db = b[:-1] - b[1:]

    pts = space.node_points()
    bmask = space.boundary_mask()
    interior = ~bmask

    U = np.zeros((m + 1,) + space.shape)
    U[0] = spec.u0
    diagnostics = []

    faces = _face_coefficients(spec, 0)
    if dim == 1:
        ab, flux_w = _assemble_1d(spec, faces, c0)
    else:
        A2, diag2 = _assemble_2d(spec, faces, c0)

    prev_sol = None
    for n in range(1, m + 1):
        t = n * dt
        if spec.coefficients.time_dependent:
            faces = _face_coefficients(spec, n)
            if dim == 1:
                ab, flux_w = _assemble_1d(spec, faces, c0)
            else:
                A2, diag2 = _assemble_2d(spec, faces, c0)
        hist = b[n - 1] * U[0]
        if n >= 2:
            hist = hist + np.tensordot(db[: n - 1], U[n - 1:0:-1], axes=(0, 0))
        gb = np.zeros(space.shape)
        gb[bmask] = spec.boundary_values(t, pts[bmask])
        f_int = spec.forcing_values(t, pts[interior])
        rhs = c0 * hist[interior] + f_int
        if dim == 1:
            rhs = rhs + np.concatenate([
                [flux_w[0] * gb[0]], np.zeros(space.cells[0] - 3),
                [flux_w[-1] * gb[-1]],
            ])
            sol = solve_banded((1, 1), ab, rhs)
            resid = 0.0
        else:
            rhs = rhs + _boundary_flux_2d(spec, faces, gb)
            x0 = prev_sol if prev_sol is not None else U[n - 1][interior]
            M = sp.diags(1.0 / diag2)
            sol, info = cg(A2, rhs, x0=x0, rtol=1e-12, atol=0.0, M=M,
                           maxiter=20 * rhs.size)
            if info != 0:
                raise LinearSolveError(f"CG failed at level {n} (info={info})")
            resid = float(np.linalg.norm(A2 @ sol - rhs)
                          / max(np.linalg.norm(rhs), 1e-300))
            prev_sol = sol
        level = np.empty(space.shape)
        level[bmask] = gb[bmask]
        level[interior] = sol
        U[n] = level
        diagnostics.append(resid)
    return SolveResult(spec=spec, u=U, diagnostics=diagnostics)


def solve_scalar_relaxation(alpha, sigma: float, u0: float,
                            time: TimeGrid) -> SampledPath:
    """Relaxation problem with memory: the fractional derivative of (u - u0)
    balances -sigma*u.

    Solved in integrated form u + sigma*(g_alpha * u) = u0 by implicit
    piecewise-linear product integration; at fixed positive time the error
    decays like dt^(1+alpha), and alpha = 1 reduces to the trapezoid rule
    for the classical exponential decay.
    """
    a = _as_alpha(alpha, classical_ok=True)
    if sigma < 0.0:
        raise DomainError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0.0:
        return SampledPath(time, np.full(time.m + 1, float(u0)))
    kern = rl_kernel_table(a, time.dt, time.m, sampling="cell_average",
                           scale=sigma)
    table = solve_volterra(kern, np.full(time.m + 1, float(u0)),
                           rule="trapezoid")
    return SampledPath(time, table.values)


# ---------------------------------------------------------------------------
# discrete weak form
# ---------------------------------------------------------------------------

def tent_test_fields(spec: ProblemSpec) -> list:
    """Nonnegative product tent fields vanishing on the spatial boundary and
    at the final time; returned as arrays on the space-time nodes."""
    space, time = spec.space, spec.time
    axes = space.axes()
    T = time.horizon
    tn = time.nodes

    def hat(x, c, w):
        return np.maximum(0.0, 1.0 - np.abs(x - c) / w)

    temporal = [
        np.maximum(0.0, 1.0 - tn / T),
        hat(tn, T / 3.0, T / 3.0),
        hat(tn, T / 2.0, T / 2.0 - 1e-12 * T),
    ]
    spatial = []
    for frac_c, frac_w in ((0.5, 0.45), (0.35, 0.25), (0.65, 0.25)):
        parts = []
        for ax, xs in enumerate(axes):
            a, bnd = space.lower[ax], space.upper[ax]
            L = bnd - a
            parts.append(hat(xs, a + frac_c * L, frac_w * L))
        if space.dimension == 1:
            spatial.append(parts[0])
        else:
            spatial.append(np.multiply.outer(parts[0], parts[1]))
    fields = []
    for tt in temporal:
        for ss in spatial:
            eta = tt.reshape((-1,) + (1,) * space.dimension) * ss[None, ...]
            fields.append(eta)
    return fields


def supersolution_residual(result: SolveResult, test_fields=None) -> float:
    """Most negative value of the discrete weak form over the test family.

    The form pairs the memory derivative with the test field and adds the
    discrete Dirichlet energy; by exact summation by parts it equals the
    forcing paired with the test field, so it is nonnegative (up to solver
    tolerance) exactly when the run is a supersolution.
    """
    spec = result.spec
    space, time = spec.space, spec.time
    dim = space.dimension
    dt, m = time.dt, time.m
    alpha = spec.alpha
    c0 = dt ** (-alpha) / gamma_fn(2.0 - alpha)
    b = l1_weights(alpha, m)
    db = b[:-1] - b[1:]
    hN = float(np.prod(space.h))
    U = result.u
    if test_fields is None:
        test_fields = tent_test_fields(spec)

    deriv = np.zeros_like(U)
    for n in range(1, m + 1):
        hist = b[n - 1] * U[0]
        if n >= 2:
            hist = hist + np.tensordot(db[: n - 1], U[n - 1:0:-1], axes=(0, 0))
        deriv[n] = c0 * (U[n] - hist)

    face_cache = {n: _face_coefficients(spec, n) for n in range(1, m + 1)} \
        if spec.coefficients.time_dependent else None
    faces0 = _face_coefficients(spec, 1)

    worst = np.inf
    for eta in test_fields:
        if eta.shape != U.shape:
            raise GridMismatchError("test field shape does not match solution")
        total = 0.0
        for n in range(1, m + 1):
            faces = face_cache[n] if face_cache is not None else faces0
            pair = np.sum(deriv[n] * eta[n]) * hN
            energy = 0.0
            for ax in range(dim):
                du = np.diff(U[n], axis=ax)
                de = np.diff(eta[n], axis=ax)
                energy += np.sum(faces[ax] * du * de) * hN / space.h[ax] ** 2
            total += dt * (pair + energy)
        norm = np.sum(np.abs(eta)) * hN * dt
        worst = min(worst, total / max(norm, 1e-300))
    return float(worst)
