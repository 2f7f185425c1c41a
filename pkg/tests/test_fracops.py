import math

import numpy as np
import pytest
from scipy.special import gamma

from subharnack import fracops as F
from subharnack import kernels as K
from subharnack.errors import DomainError, GridMismatchError, SingularKernelError


def make_grid(m, T=1.0):
    return F.TimeGrid.from_horizon(T, m)


# ---------------------------------------------------------------------------
# causal convolution
# ---------------------------------------------------------------------------

def test_convolve_inverse_identity():
    m = 512
    grid = make_grid(m)
    ka = K.rl_kernel_table(0.5, grid.dt, m)
    kb = K.rl_kernel_table(0.5, grid.dt, m)
    v = F.SampledPath(grid, np.concatenate([[0.0], kb.values[1:]]))
    out = F.causal_convolve(ka, v)
    assert out.values[0] == 0.0
    assert np.abs(out.values[1:] - 1.0).max() <= 1e-12


def test_convolve_unit_kernel_integrates():
    m = 128
    grid = make_grid(m)
    one = K.rl_kernel_table(1.0, grid.dt, m)
    out = F.causal_convolve(one, F.SampledPath(grid, np.ones(m + 1)))
    assert np.abs(out.values - grid.nodes).max() == 0.0


def test_convolve_commutativity():
    m = 64
    grid = make_grid(m)
    ka = K.rl_kernel_table(0.4, grid.dt, m, sampling="cell_average")
    kb = K.rl_kernel_table(0.8, grid.dt, m, sampling="cell_average")
    va = F.SampledPath(grid, np.concatenate([[0.0], ka.cell_values()]))
    vb = F.SampledPath(grid, np.concatenate([[0.0], kb.cell_values()]))
    ab = F.causal_convolve(ka, vb).values
    ba = F.causal_convolve(kb, va).values
    assert np.abs(ab - ba).max() < 1e-14 * np.abs(ab).max()


def test_convolve_exact_for_piecewise_constant_data():
    # cell-average kernel against per-cell-constant data: product integration
    # reproduces the exact integral of g * v
    m, beta = 40, 0.5
    grid = make_grid(m, T=2.0)
    rng = np.random.default_rng(3)
    cells = rng.uniform(-1.0, 2.0, size=m)
    v = F.SampledPath(grid, np.concatenate([[0.0], cells]))
    kern = K.rl_kernel_table(beta, grid.dt, m, sampling="cell_average")
    got = F.causal_convolve(kern, v).values
    G = lambda s: np.maximum(s, 0.0) ** beta / gamma(beta + 1.0)
    t = grid.nodes
    exact = np.zeros(m + 1)
    for j in range(1, m + 1):
        i = np.arange(1, j + 1)
        exact[j] = np.sum(cells[: j] * (G(t[j] - t[i - 1]) - G(t[j] - t[i])))
    assert np.abs(got - exact).max() < 1e-13 * np.abs(exact).max()


def test_convolve_grid_mismatch():
    kern = K.rl_kernel_table(0.5, 0.01, 64)
    path = F.SampledPath(make_grid(32), np.ones(33))
    with pytest.raises(GridMismatchError):
        F.causal_convolve(kern, path)


# ---------------------------------------------------------------------------
# fractional derivative (L1 scheme)
# ---------------------------------------------------------------------------

def test_l1_weights_monotone():
    b = F.l1_weights(0.5, 200)
    assert b[0] == 1.0
    assert np.all(b > 0.0)
    assert np.all(np.diff(b) < 0.0)


def test_derivative_of_constant_is_zero():
    grid = make_grid(64)
    path = F.SampledPath(grid, np.full(65, 3.7))
    out = F.rl_derivative(path, 3.7, 0.5)
    assert np.abs(out.values).max() == 0.0


def quadrature_derivative_oracle(grid, values, v0, alpha):
    """Independent route: convolve the cell-averaged complementary kernel
    with (v - v0), then difference in time."""
    kern = K.rl_kernel_table(1.0 - alpha, grid.dt, grid.m,
                             sampling="cell_average")
    shifted = F.SampledPath(grid, values - v0)
    cum = F.causal_convolve(kern, shifted).values
    return np.diff(cum) / grid.dt


def test_derivative_of_power_reaches_gamma():
    # d^alpha t^alpha -> Gamma(1 + alpha) pointwise away from the origin
    alpha = 0.5
    errs = []
    for m in (256, 512, 1024):
        grid = make_grid(m)
        path = F.SampledPath(grid, 1.0 + grid.nodes ** alpha)
        out = F.rl_derivative(path, 1.0, alpha)
        window = grid.nodes >= 0.1
        errs.append(np.abs(out.values - gamma(1.0 + alpha))[window].max())
        oracle = quadrature_derivative_oracle(grid, path.values, 1.0, alpha)
        assert np.abs(oracle[m // 2:] - gamma(1.0 + alpha)).max() < 0.05
    assert errs[0] > errs[1] > errs[2]
    assert math.log2(errs[1] / errs[2]) > 1.2  # observed rate ~ 2 - alpha


def test_derivative_of_linear_path():
    alpha, m = 0.5, 512
    grid = make_grid(m)
    path = F.SampledPath(grid, 5.0 + grid.nodes)
    out = F.rl_derivative(path, 5.0, alpha)
    exact = 2.0 * np.sqrt(grid.nodes / math.pi)
    assert np.abs(out.values - exact)[1:].max() < 1e-12


def test_derivative_inverse_property():
    # convolving the derivative with the complementary kernel recovers v - v0;
    # the composed rule is first-order (rectangle history quadrature)
    alpha = 0.5
    errs = []
    for m in (256, 512, 1024):
        grid = make_grid(m)
        path = F.SampledPath(grid, np.sin(2.0 * grid.nodes))
        d = F.rl_derivative(path, 0.0, alpha)
        kern = K.rl_kernel_table(alpha, grid.dt, m, sampling="cell_average")
        rec = F.causal_convolve(kern, d)
        errs.append(np.abs(rec.values - path.values).max())
    assert math.log2(errs[0] / errs[1]) > 0.9
    assert math.log2(errs[1] / errs[2]) > 0.9


# ---------------------------------------------------------------------------
# fundamental identity
# ---------------------------------------------------------------------------

H2 = (lambda y: y * y, lambda y: 2.0 * y)
HLIN = (lambda y: y, lambda y: np.ones_like(y))


def smooth_path(grid):
    return F.SampledPath(grid, 1.0 + 0.3 * np.sin(3.0 * grid.nodes)
                         + 0.2 * grid.nodes ** 2)


def test_fundamental_identity_linear_h_collapses():
    grid = make_grid(128)
    g_t, _ = K.yosida_kernels(0.5, 4, grid.dt, grid.m)
    res = F.fundamental_identity_residual(smooth_path(grid), g_t, *HLIN)
    assert res <= 1e-12


def test_fundamental_identity_refines():
    vals = {}
    for m in (256, 512):
        grid = make_grid(m)
        g_t, _ = K.yosida_kernels(0.5, 4, grid.dt, m)
        vals[m] = F.fundamental_identity_residual(
            smooth_path(grid), g_t, *H2, t_min=0.1)
    assert vals[256] / vals[512] >= 1.7


def test_fundamental_identity_history_nonnegative_for_convex_h():
    grid = make_grid(256)
    g_t, _ = K.yosida_kernels(0.5, 4, grid.dt, grid.m)
    hist = F.fundamental_identity_history(smooth_path(grid), g_t, *H2)
    assert hist.min() >= -1e-12


def test_fundamental_identity_rejects_singular_kernel():
    grid = make_grid(64)
    raw = K.rl_kernel_table(0.5, grid.dt, grid.m)
    with pytest.raises(SingularKernelError):
        F.fundamental_identity_residual(smooth_path(grid), raw, *H2)


# ---------------------------------------------------------------------------
# commutation identities
# ---------------------------------------------------------------------------

def test_commutation_1_unit_multiplier_collapses():
    grid = make_grid(128)
    v = F.SampledPath(grid, grid.nodes + 0.3 * np.sin(2.0 * grid.nodes))
    phi = F.SampledPath(grid, np.ones(129))
    assert F.commutation_residual_1(v, phi, 0.5) <= 1e-12


def test_commutation_1_linear_data_exact():
    # all quadrature pieces are moment-exact for linear v and phi
    grid = make_grid(256)
    v = F.SampledPath(grid, grid.nodes.copy())
    phi = F.SampledPath(grid, grid.nodes.copy())
    assert F.commutation_residual_1(v, phi, 0.5) <= 1e-12


def test_commutation_1_refines():
    res = []
    for m in (128, 256, 512):
        grid = make_grid(m)
        v = F.SampledPath(grid, grid.nodes + 0.3 * np.sin(2.0 * grid.nodes))
        phi = F.SampledPath(grid, 1.0 + 0.5 * grid.nodes ** 2)
        res.append(F.commutation_residual_1(v, phi, 0.5))
    assert res[0] > res[1] > res[2]
    assert math.log2(res[1] / res[2]) > 0.8


def test_commutation_1_requires_zero_start():
    grid = make_grid(32)
    v = F.SampledPath(grid, np.ones(33))
    with pytest.raises(DomainError):
        F.commutation_residual_1(v, v, 0.5)


def test_commutation_1_inequality_margin():
    # nonnegative v, nondecreasing phi: one-sided form up to O(dt)
    for m in (128, 256):
        grid = make_grid(m)
        v = F.SampledPath(grid, grid.nodes + 0.3 * np.sin(2.0 * grid.nodes))
        phi = F.SampledPath(grid, 1.0 + 0.5 * grid.nodes ** 2)
        assert F.commutation_inequality_margin(v, phi, 0.5) >= -5.0 * grid.dt


def test_commutation_2_constant_multiplier_collapses():
    grid = make_grid(128)
    g_t, _ = K.yosida_kernels(0.5, 2, grid.dt, grid.m)
    v = F.SampledPath(grid, 1.0 + 0.5 * np.cos(3.0 * grid.nodes))
    phi = F.SampledPath(grid, np.full(129, 2.0))
    assert F.commutation_residual_2(g_t, v, phi) <= 1e-12


def test_commutation_2_two_grid_rate():
    rng = np.random.default_rng(11)
    c = rng.standard_normal(3) * 0.2
    res = []
    for m in (128, 256, 512):
        grid = make_grid(m)
        g_t, _ = K.yosida_kernels(0.5, 2, grid.dt, m)
        v = F.SampledPath(grid, 1.0 + c[0] * np.cos(3.0 * grid.nodes)
                          + c[1] * grid.nodes)
        phi = F.SampledPath(grid, 1.0 + c[2] * grid.nodes ** 2)
        res.append(F.commutation_residual_2(g_t, v, phi))
    # residual bounded by C*dt with the constant estimated on the coarse pair
    C = res[0] * 128
    assert math.log2(res[0] / res[1]) > 0.8
    assert res[2] <= 1.3 * C / 512
