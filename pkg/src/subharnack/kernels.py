"""Scalar convolution kernels on uniform time grids.

Power kernels t^(beta-1)/Gamma(beta), the generalized Mittag-Leffler function,
Yosida-regularized kernels obtained from scalar Volterra equations, and the
bounded resolvent kernel.  A generic product-integration Volterra solver acts
as the brute-force cross-check for every closed form in this module.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.interpolate import CubicSpline
from scipy.special import gamma as gamma_fn
from scipy.special import gammaln, rgamma

from .errors import (
    AccuracyError,
    DomainError,
    SingularStepError,
)

__all__ = [
    "FractionalOrder",
    "KernelTable",
    "MittagLefflerParams",
    "rl_kernel",
    "rl_kernel_table",
    "mittag_leffler",
    "ml_on_negative_axis",
    "ml_negative_tail_bound",
    "solve_volterra",
    "yosida_kernels",
    "yosida_l1_distance",
    "resolvent_kernel",
]

#: switch point between the power series and the integral representation
Z_SWITCH = 5.0

KINDS = ("riemann_liouville", "yosida_g", "yosida_h", "resolvent", "custom")
SAMPLINGS = ("grunwald", "cell_average", "node")


@dataclass(frozen=True)
class FractionalOrder:
    """Time order alpha, restricted to the strictly fractional range (0, 1)."""

    alpha: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise DomainError(f"fractional order must lie in (0, 1), got {self.alpha}")

    def __float__(self) -> float:
        return self.alpha


def _as_alpha(alpha, *, classical_ok: bool = False) -> float:
    """Normalize alpha to float; alpha = 1 passes only where a classical limit is documented."""
    a = float(alpha)
    hi_ok = (a == 1.0 and classical_ok) or a < 1.0
    if not (0.0 < a and hi_ok):
        rng = "(0, 1]" if classical_ok else "(0, 1)"
        raise DomainError(f"alpha must lie in {rng}, got {a}")
    return a


@dataclass(frozen=True)
class KernelTable:
    """A causal kernel sampled on a uniform time grid.

    ``values[j]`` represents the kernel near ``t = j*dt`` for ``j >= 1``.  The
    ``sampling`` tag fixes the first-cell convention:

    * ``"grunwald"``      -- backward-difference quadrature weights whose
      generating function is ``dt**(beta-1) * (1-z)**(-beta)``; chosen so that
      the discrete convolution of complementary power kernels is exactly the
      constant 1 at every node.
    * ``"cell_average"``  -- exact cell means over ``[(j-1)*dt, j*dt]``; makes
      causal convolution against piecewise-constant data exact.
    * ``"node"``          -- plain point samples at the nodes.

    ``values[0]`` is the value at ``t = 0+`` when that limit is finite and NaN
    for kernels singular at the origin.
    """

    dt: float
    values: np.ndarray
    kind: str = "custom"
    sampling: str = "node"
    params: tuple = field(default=())

    def __post_init__(self):
        if self.dt <= 0.0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        vals = np.asarray(self.values, dtype=float).copy()
        if vals.ndim != 1 or vals.size < 2:
            raise ValueError("values must be a 1-d sequence of length >= 2")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.sampling not in SAMPLINGS:
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if not np.all(np.isfinite(vals[1:])):
            raise ValueError("values must be finite for j >= 1")
        if self.kind in ("yosida_g", "resolvent"):
            body = vals[1:] if not np.isfinite(vals[0]) else vals
            scale = max(abs(body[0]), 1.0)
            if np.any(body < -1e-14 * scale):
                raise ValueError(f"{self.kind} table must be nonnegative")
            if np.any(np.diff(body) > 1e-13 * scale):
                raise ValueError(f"{self.kind} table must be nonincreasing")
        if self.kind == "yosida_h":
            if np.any(vals[1:] < -1e-13 * max(abs(vals[1]), 1.0)):
                raise ValueError("yosida_h table must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def m(self) -> int:
        return self.values.size - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.dt

    def cell_values(self) -> np.ndarray:
        """Per-cell representative values used by causal convolution (cells 1..m)."""
        if self.sampling in ("grunwald", "cell_average"):
            return self.values[1:]
        if not np.isfinite(self.values[0]):
            raise ValueError(
                "node-sampled table is singular at t=0; no cell representation"
            )
        return 0.5 * (self.values[:-1] + self.values[1:])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value"])
            for t, v in zip(self.times, self.values):
                w.writerow([repr(float(t)), repr(float(v))])

    @classmethod
    def from_csv(cls, path, kind: str = "custom", sampling: str = "node") -> "KernelTable":
        t, v = [], []
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            if header[:2] != ["t", "value"]:
                raise ValueError(f"expected header t,value, got {header}")
            for row in r:
                t.append(float(row[0]))
                v.append(float(row[1]))
        t = np.asarray(t)
        dts = np.diff(t)
        if not np.allclose(dts, dts[0], rtol=1e-12, atol=0.0):
            raise ValueError("grid in CSV is not uniform")
        return cls(dt=float(dts[0]), values=np.asarray(v), kind=kind, sampling=sampling)


def rl_kernel(beta: float, t: float) -> float:
    """Power kernel t**(beta-1)/Gamma(beta); strictly positive for t > 0."""
    if beta <= 0.0:
        raise DomainError(f"beta must be positive, got {beta}")
    if t <= 0.0:
        raise DomainError(f"t must be positive, got {t}")
    return t ** (beta - 1.0) / gamma_fn(beta)


def _grunwald_coeffs(beta: float, m: int) -> np.ndarray:
    """Coefficients of (1-z)**(-beta), c_0..c_{m-1}; positive, monotone for beta<1."""
    c = np.empty(m)
    c[0] = 1.0
    if m > 1:
        k = np.arange(1.0, m)
        c[1:] = np.cumprod((k - 1.0 + beta) / k)
    return c


def rl_kernel_table(
    beta: float,
    dt: float,
    m: int,
    sampling: str = "grunwald",
    scale: float = 1.0,
) -> KernelTable:
    """Tabulate scale * g_beta on m steps of width dt under the given sampling."""
    if beta <= 0.0:
        raise DomainError(f"beta must be positive, got {beta}")
    if m < 1:
        raise ValueError("need at least one step")
    j = np.arange(0, m + 1, dtype=float)
    if sampling == "grunwald":
        body = dt ** (beta - 1.0) * _grunwald_coeffs(beta, m)
    elif sampling == "cell_average":
        body = np.diff((j * dt) ** beta) / (gamma_fn(beta + 1.0) * dt)
    elif sampling == "node":
        body = (j[1:] * dt) ** (beta - 1.0) / gamma_fn(beta)
    else:
        raise ValueError(f"unknown sampling {sampling!r}")
    if beta < 1.0:
        head = math.nan
    elif beta == 1.0:
        head = scale
    else:
        head = 0.0
    values = np.concatenate([[head], scale * body])
    return KernelTable(dt=dt, values=values, kind="riemann_liouville",
                       sampling=sampling, params=(beta, scale))


# ---------------------------------------------------------------------------
# Mittag-Leffler function
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MittagLefflerParams:
    """Parameter pair (alpha, beta) of the two-parameter Mittag-Leffler function."""

    alpha: float
    beta: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0.0 or self.beta <= 0.0:
            raise DomainError("Mittag-Leffler parameters must be strictly positive")

    def evaluate(self, z: float, rtol: float = 1e-11) -> float:
        return mittag_leffler(self.alpha, self.beta, z, rtol=rtol)


_SERIES_NMAX = 20000


def _ml_series(alpha: float, beta: float, z: float, rtol: float):
    """Sum the defining power series; returns (value, ok).

    ok is False when the alternating-term cancellation makes the float error
    floor exceed rtol, or when terms would overflow.
    """
    if z == 0.0:
        return 1.0 / gamma_fn(beta), True
    logz = math.log(abs(z))
    n = np.arange(0, _SERIES_NMAX, dtype=float)
    logs = n * logz - gammaln(alpha * n + beta)
    peak = int(np.argmax(logs))
    if logs[peak] > 690.0:
        return math.nan, False
    # truncate once terms are negligible in absolute terms past the peak
    tail = np.nonzero(logs[peak:] < -45.0)[0]
    if tail.size == 0:
        return math.nan, False
    stop = peak + int(tail[0]) + 1
    terms = np.exp(logs[:stop])
    if z < 0.0:
        terms[1::2] *= -1.0
    total = math.fsum(terms.tolist())
    if z > 0.0:
        return total, True
    err_floor = 5e-16 * math.exp(logs[peak])
    if abs(total) < 1e-290 or err_floor > rtol * abs(total):
        return total, False
    return total, True


def _ml_integral(alpha: float, beta: float, z: float, rtol: float) -> float:
    """Contour-collapse integral for 0 < alpha < 1 and real nonzero z.

    For z > 0 the exponentially growing part enters separately.  The
    integrand has an integrable endpoint singularity u**(alpha-beta) (handed
    to an algebraic-weight rule when strong) and a Lorentzian peak that
    sharpens as alpha approaches 1 (passed as a quadrature breakpoint).
    """
    if beta >= 1.0 + alpha:
        # lower beta until the endpoint u**(alpha-beta) is integrable
        inner = _ml_integral(alpha, beta - alpha, z, rtol)
        return (inner - rgamma(beta - alpha)) / z
    spb = math.sin(math.pi * (1.0 - beta))
    spba = math.sin(math.pi * (1.0 - beta + alpha))
    cpa = math.cos(math.pi * alpha)
    z2 = z * z

    def regular_part(u):
        ua = u ** alpha
        num = ua * spb - z * spba
        den = ua * ua - 2.0 * ua * z * cpa + z2
        return math.exp(-u) * num / (den * math.pi)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        if alpha <= 0.5 and alpha - beta <= -0.25:
            # peak is broad here; let the weight carry the singular factor
            val, est = quad(regular_part, 0.0, 750.0, weight="alg",
                            wvar=(alpha - beta, 0.0), limit=400,
                            epsabs=1e-300, epsrel=min(rtol, 1e-12))
        else:
            points = None
            if z < 0.0:
                with np.errstate(over="ignore"):
                    u_peak = abs(z) ** (1.0 / alpha)
                if 1e-8 < u_peak < 740.0:
                    points = [u_peak]
            val, est = quad(lambda u: regular_part(u) * u ** (alpha - beta),
                            0.0, 750.0, points=points, limit=400,
                            epsabs=1e-300, epsrel=min(rtol, 1e-12))
    if est > 100.0 * rtol * max(abs(val), 1e-280) and est > 1e-11:
        raise AccuracyError(
            f"integral representation of E_({alpha},{beta})({z}) reports "
            f"error estimate {est:.1e}"
        )
    if z > 0.0:
        expo = z ** (1.0 / alpha)
        if expo > 700.0:
            raise AccuracyError(
                f"E_({alpha},{beta})({z}) overflows double precision"
            )
        val += (1.0 / alpha) * z ** ((1.0 - beta) / alpha) * math.exp(expo)
    return val


def mittag_leffler(alpha: float, beta: float, z: float, rtol: float = 1e-11) -> float:
    """Generalized Mittag-Leffler function E_{alpha,beta}(z) for real z.

    The power series is used wherever its rounding floor certifies ``rtol``;
    otherwise the integral representation takes over (0 < alpha < 1).  The
    classical limits alpha = 1, beta = 1 (exponential) and alpha > 1 on the
    series' safe range are supported as documented special cases.
    """
    if alpha <= 0.0 or beta <= 0.0:
        raise DomainError("Mittag-Leffler parameters must be strictly positive")
    if not math.isfinite(z):
        raise DomainError(f"z must be finite, got {z}")
    if alpha == 1.0 and beta == 1.0:
        return math.exp(z)
    if z == 0.0:
        return 1.0 / gamma_fn(beta)
    if abs(z) <= Z_SWITCH or z > 0.0 or alpha >= 1.0:
        val, ok = _ml_series(alpha, beta, z, rtol)
        if ok:
            return val
    if 0.0 < alpha < 1.0:
        return _ml_integral(alpha, beta, z, rtol)
    if alpha == 1.0 and beta > 2.0 and z != 0.0:
        # step beta down into the series-friendly range
        inner = mittag_leffler(alpha, beta - 1.0, z, rtol)
        return (inner - rgamma(beta - 1.0)) / z
    raise AccuracyError(
        f"no convergent evaluation path for E_({alpha},{beta})({z})"
    )


def ml_negative_tail_bound(alpha: float, beta: float, s: float) -> float:
    """Conservative envelope for |E_{alpha,beta}(-s)|, valid for large s."""
    if s <= 0.0:
        raise DomainError("tail bound needs s > 0")
    b = 0.0
    for k in (1, 2, 3):
        b += abs(rgamma(beta - alpha * k)) / s ** k
    return 1.5 * b + 2.0 / s ** 4


class _NegativeAxisML:
    """Fast vectorized evaluator of s -> E_{alpha,beta}(-s) on s >= 0.

    Interpolates log E on a dense grid (E is positive and completely monotone
    in s) and switches to the algebraic expansion beyond ``s_hi``.
    """

    def __init__(self, alpha: float, beta: float, s_hi: float = 64.0):
        self.alpha = alpha
        self.beta = beta
        self.s_hi = s_hi
        if alpha == 1.0 and beta == 1.0:
            self._spline = None
            return
        nodes = np.concatenate([
            np.linspace(0.0, 4.0, 201),
            np.geomspace(4.0, s_hi, 220)[1:],
        ])
        vals = np.array([mittag_leffler(alpha, beta, -s) for s in nodes])
        if np.any(vals <= 0.0):
            raise AccuracyError("Mittag-Leffler ray lost positivity")
        self._spline = CubicSpline(nodes, np.log(vals))

    def _tail(self, s: np.ndarray) -> np.ndarray:
        out = np.zeros_like(s)
        sign = 1.0
        for k in range(1, 9):
            out += sign * rgamma(self.beta - self.alpha * k) * s ** (-float(k))
            sign = -sign
        return out

    def __call__(self, s) -> np.ndarray:
        s_in = np.asarray(s, dtype=float)
        s1 = np.atleast_1d(s_in)
        if np.any(s1 < 0.0):
            raise DomainError("negative-axis evaluator takes s >= 0")
        if self._spline is None:
            out = np.exp(-s1)
        else:
            out = np.empty_like(s1)
            low = s1 <= self.s_hi
            out[low] = np.exp(self._spline(s1[low]))
            if np.any(~low):
                out[~low] = self._tail(s1[~low])
        return out.reshape(s_in.shape)


@lru_cache(maxsize=32)
def _ml_ray_cached(alpha_key: float, beta_key: float) -> _NegativeAxisML:
    return _NegativeAxisML(alpha_key, beta_key)


def ml_on_negative_axis(alpha: float, beta: float) -> _NegativeAxisML:
    """Cached vectorized evaluator for E_{alpha,beta}(-s), s >= 0."""
    if not (0.0 < alpha <= 1.0) or beta <= 0.0:
        raise DomainError("ray evaluator supports 0 < alpha <= 1, beta > 0")
    if alpha == 1.0 and beta != 1.0:
        raise DomainError("alpha = 1 ray is only available for beta = 1")
    return _ml_ray_cached(round(alpha, 12), round(beta, 12))


# ---------------------------------------------------------------------------
# Volterra solver (the brute-force oracle) and the regularized kernels
# ---------------------------------------------------------------------------

def _pi_moments(kernel: KernelTable, need_first: bool):
    """Zeroth (and optionally first) moments of the kernel over lag cells.

    Exact for power-kernel tables; piecewise-linear reconstruction otherwise.
    Returns (M0, M1) with M0[l] = int over [l dt, (l+1) dt] of k and
    M1[l] = int of (s - l dt) k(s) ds.
    """
    dt, m = kernel.dt, kernel.m
    if kernel.kind == "riemann_liouville":
        beta, scale = kernel.params
        edges = np.arange(0, m + 2, dtype=float) * dt
        M0 = scale * np.diff(edges ** beta) / gamma_fn(beta + 1.0)
        if not need_first:
            return M0, None
        I2 = scale * np.diff(edges ** (beta + 1.0)) / ((beta + 1.0) * gamma_fn(beta))
        M1 = I2 - np.arange(0, m + 1, dtype=float) * dt * M0
        return M0, M1
    if kernel.sampling == "node" and np.all(np.isfinite(kernel.values)):
        k = kernel.values
        M0 = dt * 0.5 * (k[:-1] + k[1:])
        M1 = dt * dt * (k[:-1] / 6.0 + k[1:] / 3.0)
        return M0, (M1 if need_first else None)
    if kernel.sampling in ("cell_average", "grunwald"):
        if need_first:
            raise ValueError(
                "first moments unavailable for cell tables; use rule='rectangle'"
            )
        return dt * kernel.cell_values(), None
    raise ValueError("kernel table does not support product-integration moments")


def _solve_nodes(kernel: KernelTable, f: np.ndarray, rule: str) -> np.ndarray:
    dt, m = kernel.dt, kernel.m
    if rule == "trapezoid":
        M0, M1 = _pi_moments(kernel, need_first=True)
        # tau-cell at lag l: x is linear between its endpoints; the node at the
        # smaller lag (s = l dt side) carries weight B, the other one weight A
        A = M1 / dt
        B = M0 - M1 / dt
        diag = 1.0 + B[0]
        if abs(diag) < 1e-13 * max(1.0, abs(B[0])):
            raise SingularStepError("degenerate diagonal weight in implicit step")
        x = np.empty(m + 1)
        x[0] = f[0]
        for n in range(1, m + 1):
            lags = n - np.arange(1, n + 1)
            hist = np.dot(A[lags], x[0:n])
            if n >= 2:
                hist += np.dot(B[lags[:-1]], x[1:n])
            x[n] = (f[n] - hist) / diag
        return x
    if rule == "rectangle":
        M0, _ = _pi_moments(kernel, need_first=False)
        diag = 1.0 + M0[0]
        if abs(diag) < 1e-13 * max(1.0, abs(M0[0])):
            raise SingularStepError("degenerate diagonal weight in implicit step")
        x = np.empty(m + 1)
        x[0] = f[0]
        for n in range(1, m + 1):
            hist = np.dot(M0[n - 1:0:-1], x[1:n]) if n >= 2 else 0.0
            x[n] = (f[n] - hist) / diag
        return x
    raise ValueError(f"unknown rule {rule!r}")


def solve_volterra(kernel: KernelTable, f, rule: str = "trapezoid") -> KernelTable:
    """Solve x + (kernel * x) = f by implicit product integration.

    ``f`` may be a finite node-sampled array (length kernel.m + 1), or a
    power-kernel table (singular right-hand side); in the latter case the
    equation is integrated once, solved for the bounded cumulative unknown,
    and differenced back, so the solution is returned as a cell-average table.

    The implicit "trapezoid" rule treats the unknown as piecewise linear with
    exact kernel moments; "rectangle" treats it as piecewise constant, which
    preserves positivity and monotonicity for stiff kernels.
    """
    if isinstance(f, KernelTable):
        if f.kind != "riemann_liouville":
            raise ValueError("singular right-hand sides must be power-kernel tables")
        if abs(f.dt - kernel.dt) > 1e-12 * kernel.dt or f.m != kernel.m:
            raise ValueError("kernel and right-hand side live on different grids")
        beta, scale = f.params
        t = f.times
        f_int = scale * t ** beta / gamma_fn(beta + 1.0)
        y = _solve_nodes(kernel, f_int, rule)
        cells = np.diff(y) / kernel.dt
        values = np.concatenate([[math.nan], cells])
        return KernelTable(dt=kernel.dt, values=values, kind="custom",
                           sampling="cell_average")
    f_arr = np.asarray(f, dtype=float)
    if f_arr.shape != (kernel.m + 1,):
        raise ValueError(
            f"f must have length {kernel.m + 1}, got shape {f_arr.shape}"
        )
    if not np.all(np.isfinite(f_arr)):
        raise ValueError("f must be finite; pass singular data as a KernelTable")
    x = _solve_nodes(kernel, f_arr, rule)
    return KernelTable(dt=kernel.dt, values=x, kind="custom", sampling="node")


def yosida_kernels(alpha, n: int, dt: float, m: int):
    """Regularized kernel pair for the Yosida approximation at level n.

    Solves the defining scalar Volterra equation for the bounded kernel by the
    monotone rectangle rule; the companion singular kernel is its negated
    derivative, recovered as exact cell averages of the discrete solution.
    Returns (g_n, h_n) where g_n = n * s_n.
    """
    a = _as_alpha(alpha)
    if n < 1 or int(n) != n:
        raise DomainError(f"n must be a positive integer, got {n}")
    base = rl_kernel_table(a, dt, m, sampling="cell_average", scale=float(n))
    s = solve_volterra(base, np.ones(m + 1), rule="rectangle").values
    g_vals = float(n) * s
    g_table = KernelTable(dt=dt, values=g_vals, kind="yosida_g",
                          sampling="node", params=(a, int(n)))
    h_cells = -np.diff(s) / dt
    h_vals = np.concatenate([[math.nan], h_cells])
    h_table = KernelTable(dt=dt, values=h_vals, kind="yosida_h",
                          sampling="cell_average", params=(a, int(n)))
    return g_table, h_table


def yosida_l1_distance(alpha, n: int, T: float = 1.0) -> float:
    """L1([0, T]) distance between the level-n regularized kernel and its limit.

    Uses the closed form of the bounded kernel through the Mittag-Leffler
    function, with graded Gauss panels toward the origin where the limit
    kernel is singular; grid tables cannot resolve the initial layer once
    n is large, this quadrature can.
    """
    a = _as_alpha(alpha)
    ray = ml_on_negative_axis(a, 1.0)
    from numpy.polynomial.legendre import leggauss

    xg, wg = leggauss(40)
    a0 = T * 1e-14
    # analytic head: on [0, a0] the bounded kernel is ~ n, the limit dominates
    head = a0 ** (1.0 - a) / gamma_fn(2.0 - a) - n * a0
    edges = np.concatenate([[a0], np.geomspace(a0 * 10.0, T, 140)])
    total = abs(head)
    for lo, hi in zip(edges[:-1], edges[1:]):
        tm = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xg
        diff = tm ** (-a) / gamma_fn(1.0 - a) - n * ray(n * tm ** a)
        total += 0.5 * (hi - lo) * np.dot(wg, np.abs(diff))
    return float(total)


def resolvent_kernel(alpha, theta: float, dt: float, m: int) -> KernelTable:
    """Bounded-perturbation resolvent of the power kernel, via its closed form.

    The table holds Gamma(alpha) * g_alpha(t) * E_{alpha,alpha}(-theta t^alpha)
    at the nodes; strictly positive and nonincreasing.  theta = 0 reproduces
    the plain power kernel samples; alpha = 1 is the classical limit exp(-theta t).
    """
    a = _as_alpha(alpha, classical_ok=True)
    if theta < 0.0:
        raise DomainError(f"theta must be nonnegative, got {theta}")
    t = np.arange(1, m + 1) * dt
    if a == 1.0:
        values = np.concatenate([[1.0], np.exp(-theta * t)])
    else:
        # Gamma(alpha) * g_alpha(t) = t**(alpha-1)
        ray = ml_on_negative_axis(a, a)
        body = t ** (a - 1.0) * ray(theta * t ** a)
        values = np.concatenate([[math.nan], body])
    return KernelTable(dt=dt, values=values, kind="resolvent",
                       sampling="node", params=(a, float(theta)))
