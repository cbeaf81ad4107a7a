import numpy as np
import pytest

from isgrid.grid import make_plan
from isgrid.igrid import DisplacementField, ImageGridder, igrid_adjoint, igrid_forward, warp_oracle
from isgrid.sim import PhantomSpec, make_field, make_phantom, random_field_spec
from oracles import adjoint_gap, crandn, dirichlet_warp, materialize, rel


def smooth_field(shape, seed=0, amplitude=3.0):
    return make_field(random_field_spec(shape, n_bumps=3, amplitude=amplitude,
                                        radius=min(shape) / 8, seed=seed))


def shift_field(shape, axis, amount):
    off = np.zeros((len(shape),) + shape)
    off[axis] = amount
    return DisplacementField(off)


def test_zero_field_is_identity(rng):
    shape = (32, 32)
    w = ImageGridder(make_plan(shape), DisplacementField.zeros(shape))
    x = crandn(rng, shape)
    assert rel(igrid_forward(w, x), x) < 1e-3
    assert rel(igrid_adjoint(w, x), x) < 1e-3


def test_integer_shift_is_circular_shift(rng):
    shape = (32, 32)
    w = ImageGridder(make_plan(shape), shift_field(shape, 1, 3.0))
    x = crandn(rng, shape)
    # pull-style: m_j[r] = m(r + 3 e_x)
    assert rel(igrid_forward(w, x), np.roll(x, -3, axis=1)) < 1e-3


def test_matches_dirichlet_oracle(rng):
    shape = (32, 32)
    fld = smooth_field(shape, seed=3)
    w = ImageGridder(make_plan(shape), fld)
    x = crandn(rng, shape)
    assert rel(igrid_forward(w, x), dirichlet_warp(x, fld.offsets)) < 1e-3


def test_adjoint_identity_32(rng):
    shape = (32, 32)
    w = ImageGridder(make_plan(shape), smooth_field(shape, seed=1))
    for _ in range(5):
        x, y = crandn(rng, shape), crandn(rng, shape)
        assert adjoint_gap(lambda v: igrid_forward(w, v), lambda v: igrid_adjoint(w, v), x, y) < 1e-12


def test_adjoint_identity_3d_random_field(rng):
    shape = (16, 16, 16)
    fld = DisplacementField(rng.uniform(-4, 4, (3,) + shape))
    w = ImageGridder(make_plan(shape), fld)
    x, y = crandn(rng, shape), crandn(rng, shape)
    assert adjoint_gap(lambda v: igrid_forward(w, v), lambda v: igrid_adjoint(w, v), x, y) < 1e-12


def test_dense_materialization_8x8(rng):
    shape = (8, 8)
    w = ImageGridder(make_plan(shape), DisplacementField(rng.uniform(-2, 2, (2,) + shape)))
    fwd = materialize(lambda v: igrid_forward(w, v), shape)
    adj = materialize(lambda v: igrid_adjoint(w, v), shape)
    assert np.linalg.norm(adj - fwd.conj().T) / np.linalg.norm(fwd) < 1e-12
    x = crandn(rng, shape)
    assert rel(igrid_forward(w, x).reshape(-1), fwd @ x.reshape(-1)) < 1e-12


def test_linearity(rng):
    shape = (16, 16)
    w = ImageGridder(make_plan(shape), smooth_field(shape))
    x, z = crandn(rng, shape), crandn(rng, shape)
    a, b = 2 - 1j, -0.5
    assert rel(igrid_forward(w, a * x + b * z), a * igrid_forward(w, x) + b * igrid_forward(w, z)) < 1e-13
    assert rel(igrid_adjoint(w, a * x + b * z), a * igrid_adjoint(w, x) + b * igrid_adjoint(w, z)) < 1e-13


def test_negated_field_is_not_the_inverse():
    shape = (64, 64)
    plan = make_plan(shape)
    fld = smooth_field(shape, seed=2, amplitude=4.0)
    x = make_phantom(PhantomSpec(shape, blur=1.0))
    there = igrid_forward(ImageGridder(plan, fld), x)
    back = igrid_forward(ImageGridder(plan, -fld), there)
    assert rel(back, x) > 1e-2


def test_warp_oracle_zero_field_bit_exact(rng):
    x = crandn(rng, (16, 16))
    zero = DisplacementField.zeros((16, 16))
    for method in ("nearest", "linear"):
        out = warp_oracle(x, zero, method)
        assert out.tobytes() == x.tobytes()


def test_warp_oracle_nearest_integer_shift(rng):
    x = crandn(rng, (16, 16))
    out = warp_oracle(x, shift_field((16, 16), 0, -2.0), "nearest")
    assert np.array_equal(out, np.roll(x, 2, axis=0))


def test_igrid_vs_linear_oracle_on_band_limited_phantom():
    shape = (128, 128)
    x = make_phantom(PhantomSpec(shape, blur=1.0, margin=8))
    fld = make_field(random_field_spec(shape, 3, 4.0, radius=10, seed=0))
    q = igrid_forward(ImageGridder(make_plan(shape), fld), x)
    assert rel(q, warp_oracle(x, fld, "linear")) < 5e-2


def test_batch_axes(rng):
    shape = (16, 16)
    w = ImageGridder(make_plan(shape), smooth_field(shape))
    x = crandn(rng, (2,) + shape)
    out = igrid_forward(w, x)
    np.testing.assert_allclose(out[1], igrid_forward(w, x[1]), rtol=1e-14)


def test_gridder_caches_coordinates():
    shape = (16, 16)
    w = ImageGridder(make_plan(shape), smooth_field(shape))
    assert w.warped_coords.shape == (256, 2)
    with pytest.raises(ValueError):
        w.warped_coords[0, 0] = 1.0


def test_field_validation():
    with pytest.raises(ValueError):
        DisplacementField(np.zeros((3, 8, 8)))
    bad = np.zeros((2, 8, 8))
    bad[0, 1, 1] = np.nan
    with pytest.raises(ValueError):
        DisplacementField(bad)
    with pytest.raises(ValueError):
        ImageGridder(make_plan((16, 16)), DisplacementField.zeros((8, 8)))
    w = ImageGridder(make_plan((8, 8)), DisplacementField.zeros((8, 8)))
    with pytest.raises(ValueError):
        igrid_forward(w, np.zeros((4, 4)))
    with pytest.raises(ValueError):
        warp_oracle(np.zeros((8, 8)), DisplacementField.zeros((8, 8)), "cubic")
