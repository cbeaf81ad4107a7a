import numpy as np
import pytest

from isgrid.grid import KernelSpec, kernel_eval, make_plan
from isgrid.kgrid import (
    KSpaceGridder,
    backproject_core_k,
    kgrid_forward,
    kgrid_inverse,
    project_core_k,
)
from oracles import adjoint_gap, crandn, dense_spread, ndft_matrix, rel


def cartesian_coords(shape):
    axes = [np.arange(n) - n // 2 for n in shape]
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(shape)).astype(float)


def random_coords(rng, m, shape):
    half = np.asarray(shape) / 2.0
    return rng.uniform(-half, half, (m, len(shape)))


def test_single_sample_on_node_width2():
    spec = KernelSpec(width=2, oversampling=2.0)
    plan = make_plan((8, 8), spec)
    g = KSpaceGridder(plan, np.array([[1.0, -2.0]]))
    grid = project_core_k(g, np.array([3.0 + 1j]))
    # k = (1, -2) sits on oversampled node (1*2 + 8, -2*2 + 8) = (10, 4)
    c0 = kernel_eval(spec, 0.0)
    assert grid[10, 4] == pytest.approx((3 + 1j) * c0**2, rel=1e-15)
    assert grid[11, 4] == pytest.approx((3 + 1j) * c0 * kernel_eval(spec, 1.0), abs=1e-15)
    assert np.count_nonzero(grid) == 1


def test_empty_samples_give_zero_grid():
    plan = make_plan((16, 16))
    g = KSpaceGridder(plan, np.zeros((0, 2)))
    assert not np.any(project_core_k(g, np.zeros(0)))
    assert not np.any(kgrid_forward(g, np.zeros(0)))


def test_project_matches_dense_oracle(rng):
    plan = make_plan((16, 16))
    coords = random_coords(rng, 50, (16, 16))
    w = rng.uniform(0.2, 2.0, 50)
    g = KSpaceGridder(plan, coords, w)
    s = crandn(rng, 50)
    over = np.array(plan.oversampled_shape, float)
    u = coords * over / 16 + over / 2
    want = dense_spread(u, s * w, plan.oversampled_shape, lambda d: kernel_eval(plan.kernel, d), 4)
    assert rel(project_core_k(g, s), want) < 1e-13


def test_backproject_matches_dense_oracle(rng):
    plan = make_plan((16, 16))
    coords = random_coords(rng, 50, (16, 16))
    g = KSpaceGridder(plan, coords)
    over = np.array(plan.oversampled_shape, float)
    u = coords * over / 16 + over / 2
    # dense oracle matrix, one column per sample
    cols = [dense_spread(u[i:i + 1], [1.0], plan.oversampled_shape,
                         lambda d: kernel_eval(plan.kernel, d), 4).reshape(-1) for i in range(50)]
    mat = np.stack(cols, axis=0)
    grid = crandn(rng, plan.oversampled_shape)
    assert rel(backproject_core_k(g, grid), mat @ grid.reshape(-1)) < 1e-13


def test_core_pair_adjoint(rng):
    plan = make_plan((16, 16))
    g = KSpaceGridder(plan, random_coords(rng, 100, (16, 16)), rng.uniform(0, 2, 100))
    s = crandn(rng, 100)
    grid = crandn(rng, plan.oversampled_shape)
    gap = adjoint_gap(lambda v: project_core_k(g, v), lambda v: backproject_core_k(g, v), s, grid)
    assert gap < 1e-13


def test_backproject_constant_grid():
    spec = KernelSpec(width=2, oversampling=2.0)
    plan = make_plan((8, 8), spec)
    g = KSpaceGridder(plan, np.array([[0.0, 0.0]]))
    out = backproject_core_k(g, np.full(plan.oversampled_shape, 2.0 + 0j))
    taps = sum(kernel_eval(spec, d) for d in (-1.0, 0.0, 1.0))
    assert out[0] == pytest.approx(2.0 * taps**2, rel=1e-15)


def test_forward_recovers_image_from_cartesian_dft(rng):
    shape = (16, 16)
    plan = make_plan(shape)
    coords = cartesian_coords(shape)
    x = crandn(rng, shape)
    y = ndft_matrix(coords, shape) @ x.reshape(-1)
    g = KSpaceGridder(plan, coords)
    assert rel(kgrid_forward(g, y), x) < 1e-3


def test_single_center_sample_gives_flat_image():
    plan = make_plan((16, 16))
    g = KSpaceGridder(plan, np.zeros((1, 2)))
    img = np.abs(kgrid_forward(g, np.ones(1)))
    assert img.max() / img.min() - 1 < 1e-3
    assert img.mean() == pytest.approx(1 / 16, rel=1e-3)


def test_single_center_sample_flat_with_wider_kernel():
    plan = make_plan((16, 16), KernelSpec(width=6, oversampling=2.0))
    g = KSpaceGridder(plan, np.zeros((1, 2)))
    img = np.abs(kgrid_forward(g, np.ones(1)))
    assert img.max() / img.min() - 1 < 1e-3


def test_inverse_matches_ndft_at_cartesian_points(rng):
    shape = (16, 16)
    coords = cartesian_coords(shape)
    x = crandn(rng, shape)
    g = KSpaceGridder(make_plan(shape), coords)
    assert rel(kgrid_inverse(g, x), ndft_matrix(coords, shape) @ x.reshape(-1)) < 1e-3


def test_zero_image_gives_zero_samples(rng):
    g = KSpaceGridder(make_plan((16, 16)), random_coords(rng, 30, (16, 16)))
    assert not np.any(kgrid_inverse(g, np.zeros((16, 16))))


def test_full_pair_adjoint_16(rng):
    g = KSpaceGridder(make_plan((16, 16)), random_coords(rng, 100, (16, 16)))
    for _ in range(5):
        x = crandn(rng, (16, 16))
        y = crandn(rng, 100)
        assert adjoint_gap(lambda v: kgrid_inverse(g, v), lambda v: kgrid_forward(g, v), x, y) < 1e-12


@pytest.mark.parametrize("shape", [(64,), (32, 32), (16, 16, 16)])
def test_full_pair_adjoint_dims(rng, shape):
    m = 200
    g = KSpaceGridder(make_plan(shape), random_coords(rng, m, shape), rng.uniform(0.1, 3, m))
    x = crandn(rng, shape)
    y = crandn(rng, m)
    assert adjoint_gap(lambda v: kgrid_inverse(g, v), lambda v: kgrid_forward(g, v), x, y) < 1e-12


def test_nufft_accuracy_vs_ndft(rng):
    shape = (32, 32)
    coords = random_coords(rng, 200, shape)
    e = ndft_matrix(coords, shape)
    g = KSpaceGridder(make_plan(shape), coords)
    x = crandn(rng, shape)
    y = crandn(rng, 200)
    assert rel(kgrid_inverse(g, x), e @ x.reshape(-1)) < 1e-3
    assert rel(kgrid_forward(g, y).reshape(-1), e.conj().T @ y) < 1e-3


def test_nufft_accuracy_1d_and_3d(rng):
    for shape in [(64,), (16, 16, 16)]:
        coords = random_coords(rng, 200, shape)
        g = KSpaceGridder(make_plan(shape), coords)
        x = crandn(rng, shape)
        assert rel(kgrid_inverse(g, x), ndft_matrix(coords, shape) @ x.reshape(-1)) < 1e-3


def test_samples_on_extent_boundary(rng):
    shape = (16, 16)
    coords = np.array([[8.0, 8.0], [-8.0, 3.5], [8.0, -8.0]])
    g = KSpaceGridder(make_plan(shape), coords)
    x = crandn(rng, shape)
    assert rel(kgrid_inverse(g, x), ndft_matrix(coords, shape) @ x.reshape(-1)) < 1e-3


def test_linearity(rng):
    g = KSpaceGridder(make_plan((16, 16)), random_coords(rng, 60, (16, 16)))
    x, z = crandn(rng, (16, 16)), crandn(rng, (16, 16))
    a, b = 0.3 - 2j, 1.7
    assert rel(kgrid_inverse(g, a * x + b * z), a * kgrid_inverse(g, x) + b * kgrid_inverse(g, z)) < 1e-13
    y, w = crandn(rng, 60), crandn(rng, 60)
    assert rel(kgrid_forward(g, a * y + b * w), a * kgrid_forward(g, y) + b * kgrid_forward(g, w)) < 1e-13


def test_batch_axes_match_loop(rng):
    g = KSpaceGridder(make_plan((16, 16)), random_coords(rng, 40, (16, 16)))
    x = crandn(rng, (3, 16, 16))
    out = kgrid_inverse(g, x)
    assert out.shape == (3, 40)
    for c in range(3):
        np.testing.assert_allclose(out[c], kgrid_inverse(g, x[c]), rtol=1e-14)
    back = kgrid_forward(g, out)
    assert back.shape == (3, 16, 16)
    np.testing.assert_allclose(back[1], kgrid_forward(g, out[1]), rtol=1e-14)


def test_deterministic(rng):
    coords = random_coords(rng, 80, (16, 16))
    y = crandn(rng, 80)
    a = kgrid_forward(KSpaceGridder(make_plan((16, 16)), coords), y)
    b = kgrid_forward(KSpaceGridder(make_plan((16, 16)), coords), y)
    assert a.tobytes() == b.tobytes()


def test_validation():
    plan = make_plan((16, 16))
    with pytest.raises(ValueError):
        KSpaceGridder(plan, np.array([[9.0, 0.0]]))
    with pytest.raises(ValueError):
        KSpaceGridder(plan, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        KSpaceGridder(plan, np.zeros((3, 2)), [1.0, -1.0, 1.0])
    with pytest.raises(ValueError):
        KSpaceGridder(plan, np.zeros((3, 2)), [1.0, 1.0])
    g = KSpaceGridder(plan, np.zeros((3, 2)))
    with pytest.raises(ValueError):
        kgrid_forward(g, np.zeros(4))
    with pytest.raises(ValueError):
        kgrid_inverse(g, np.zeros((8, 8)))
    with pytest.raises(ValueError):
        backproject_core_k(g, np.zeros((16, 16)))
