import numpy as np
import pytest
from scipy import ndimage

from isgrid.grid import fft_unitary
from isgrid.igrid import DisplacementField
from isgrid.io import write_fields
from isgrid.motion import (
    MotionEstimate,
    apply_phase_shift,
    estimate_motion,
    estimate_translation,
    ingest_displacement_fields,
    kmeans,
    kmeans_bin,
    write_motion_table,
)
from oracles import crandn


def smooth_image(rng, shape=(16, 16), sigma=1.5):
    img = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    return img - img.min() + 0.1


def fourier_shift(img, shift):
    """Move ``img`` by ``+shift`` voxels with an exact linear phase."""
    k = fft_unitary(img)
    freqs = np.meshgrid(*[np.arange(n) - n // 2 for n in img.shape], indexing="ij")
    phase = sum(f * s / n for f, s, n in zip(freqs, shift, img.shape))
    return fft_unitary(k * np.exp(-2j * np.pi * phase), inverse=True)


def scan_integer_shift(a, b):
    """Exhaustive integer-shift correlation scan."""
    best, arg = -np.inf, None
    for s0 in range(a.shape[0]):
        for s1 in range(a.shape[1]):
            c = np.sum(np.roll(np.abs(a), (s0, s1), axis=(0, 1)) * np.abs(b))
            if c > best:
                best, arg = c, (s0, s1)
    return np.array([s if s < n // 2 else s - n for s, n in zip(arg, a.shape)], float)


def test_identical_images_zero_shift(rng):
    img = smooth_image(rng)
    assert np.array_equal(estimate_translation(img, img), [0.0, 0.0])


def test_integer_shift_exact(rng):
    img = smooth_image(rng)
    moved = np.roll(img, (2, 0), axis=(0, 1))
    s = estimate_translation(img, moved)
    assert np.array_equal(s, [2.0, 0.0])
    assert np.array_equal(s, scan_integer_shift(img, moved))


def test_integer_shifts_match_scan(rng):
    for _ in range(5):
        img = smooth_image(rng)
        shift = tuple(rng.integers(-5, 6, 2))
        moved = np.roll(img, shift, axis=(0, 1))
        s = estimate_translation(img, moved)
        assert np.array_equal(s, np.array(shift, float))
        assert np.array_equal(s, scan_integer_shift(img, moved))


def test_antisymmetric_at_integer_shifts(rng):
    img = smooth_image(rng)
    moved = np.roll(img, (-3, 1), axis=(0, 1))
    assert np.array_equal(estimate_translation(img, moved), -estimate_translation(moved, img))


def test_subvoxel_fourier_shift(rng):
    for _ in range(20):
        img = smooth_image(rng)
        shift = rng.choice([-1.5, 1.5], 2)
        s = estimate_translation(img, fourier_shift(img, shift))
        assert np.all(np.abs(s - shift) < 0.1)


def test_upsampled_correlation_is_finer(rng):
    img = smooth_image(rng)
    shift = np.array([0.3, -1.2])
    moved = fourier_shift(img, shift)
    coarse = np.abs(estimate_translation(img, moved, upsample=1) - shift).max()
    fine = np.abs(estimate_translation(img, moved) - shift).max()
    assert fine <= coarse + 1e-12 and fine < 0.1


def test_flat_correlation_gives_zero():
    a = np.ones((8, 8))
    assert np.array_equal(estimate_translation(a, a), [0.0, 0.0])


def test_estimate_translation_errors():
    with pytest.raises(ValueError):
        estimate_translation(np.ones((8, 8)), np.ones((8, 4)))
    with pytest.raises(ValueError):
        estimate_translation(np.ones((8, 8)), np.ones((8, 8)), upsample=0)


def test_estimate_motion_scale_and_reference(rng):
    img = smooth_image(rng)
    navs = [img, np.roll(img, 1, axis=0), np.roll(img, -2, axis=1)]
    est = estimate_motion(navs, reference_index=0, scale=4.0)
    np.testing.assert_array_equal(est.shifts, [[0, 0], [4, 0], [0, -8]])
    assert est.reference_index == 0


def test_motion_estimate_invariants():
    with pytest.raises(ValueError):
        MotionEstimate(np.ones((3, 2)), 0)
    with pytest.raises(ValueError):
        MotionEstimate(np.zeros((3, 2)), 5)
    with pytest.raises(ValueError):
        MotionEstimate(np.zeros(3), 0)


def test_phase_shift_zero_is_bit_exact(rng):
    k = rng.uniform(-8, 8, (20, 2))
    v = crandn(rng, 20)
    out = apply_phase_shift(k, v, [0.0, 0.0], (16, 16))
    assert out.tobytes() == v.tobytes()


def test_phase_shift_roundtrip_and_magnitude(rng):
    k = rng.uniform(-8, 8, (50, 2))
    v = crandn(rng, (3, 50))
    s = np.array([1.3, -0.7])
    fwd = apply_phase_shift(k, v, s, (16, 16))
    back = apply_phase_shift(k, fwd, -s, (16, 16))
    assert np.linalg.norm(back - v) / np.linalg.norm(v) < 1e-13
    np.testing.assert_allclose(np.abs(fwd), np.abs(v), rtol=1e-15)


def test_phase_shift_moves_object(rng):
    img = crandn(rng, (16, 16))
    k = np.stack(np.meshgrid(*[np.arange(16) - 8] * 2, indexing="ij"), -1).reshape(-1, 2)
    vals = fft_unitary(img).reshape(-1)
    moved = apply_phase_shift(k, vals, [2.0, -3.0], (16, 16)).reshape(16, 16)
    np.testing.assert_allclose(fft_unitary(moved, inverse=True), np.roll(img, (2, -3), (0, 1)), atol=1e-13)


def clusters(rng, centers, per=10, spread=0.1):
    pts, labels = [], []
    for j, c in enumerate(centers):
        pts.append(np.asarray(c) + spread * rng.standard_normal((per, len(c))))
        labels += [j] * per
    return np.concatenate(pts), np.array(labels)


def same_partition(a, b):
    pairs = set(zip(a.tolist(), b.tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))


def test_kmeans_identical_points_single_bin():
    est = MotionEstimate(np.zeros((6, 2)), 0)
    bins = kmeans_bin(est, 1)
    assert bins.K == 1 and np.all(bins.labels == 0)
    np.testing.assert_array_equal(bins.centroids[0], [0, 0])


def test_kmeans_recovers_separated_clusters(rng):
    pts, truth = clusters(rng, [[0, 0], [3, 0], [6, 1], [9, 0]], spread=0.1)
    pts -= pts[0]
    bins = kmeans_bin(MotionEstimate(pts, 0), 4, seed=0)
    assert same_partition(bins.labels, truth)


def test_kmeans_deterministic(rng):
    pts, _ = clusters(rng, [[0, 0], [1, 1], [2, 0]], spread=0.4)
    a, ca = kmeans(pts, 3, seed=7)
    b, cb = kmeans(pts, 3, seed=7)
    assert np.array_equal(a, b) and ca.tobytes() == cb.tobytes()


def test_kmeans_order_invariant(rng):
    pts, _ = clusters(rng, [[0, 0], [1, 1], [2, 0], [0, 2]], spread=0.3)
    a, _ = kmeans(pts, 4, seed=3)
    perm = rng.permutation(len(pts))
    b, _ = kmeans(pts[perm], 4, seed=3)
    assert same_partition(a[perm], b)


def test_kmeans_rejects_too_many_bins():
    with pytest.raises(ValueError):
        kmeans(np.zeros((5, 2)), 2)
    with pytest.raises(ValueError):
        kmeans_bin(MotionEstimate(np.zeros((3, 1)), 0), 4)


def test_reference_bin_least_variance(rng):
    tight = 0.01 * rng.standard_normal((8, 2))
    loose = np.array([5.0, 0.0]) + 0.5 * rng.standard_normal((8, 2))
    pts = np.concatenate([tight, loose])
    pts -= pts[0]
    bins = kmeans_bin(MotionEstimate(pts, 0), 2)
    assert bins.reference_bin == bins.labels[0]


def test_reference_tie_goes_to_larger_bin():
    pts = np.array([[0.0], [0.0], [0.0], [5.0], [5.0]])
    bins = kmeans_bin(MotionEstimate(pts, 0), 2)
    assert len(bins.members(bins.reference_bin)) == 3


def test_ingest_roundtrip(tmp_path, rng):
    fields = {0: DisplacementField.zeros((8, 8)),
              1: DisplacementField(rng.standard_normal((2, 8, 8)))}
    write_fields(tmp_path / "f", fields, reference_bin=0)
    got = ingest_displacement_fields(tmp_path / "f", (8, 8))
    assert set(got) == {0, 1}
    for b in fields:
        assert got[b].offsets.tobytes() == fields[b].offsets.tobytes()


def test_ingest_rejects_nonzero_reference(tmp_path, rng):
    fields = {0: DisplacementField(rng.standard_normal((2, 8, 8))),
              1: DisplacementField.zeros((8, 8))}
    write_fields(tmp_path / "f", fields, reference_bin=0)
    with pytest.raises(ValueError, match="not zero"):
        ingest_displacement_fields(tmp_path / "f")
    write_fields(tmp_path / "g", fields, reference_bin=1)
    assert len(ingest_displacement_fields(tmp_path / "g")) == 2


def test_ingest_rejects_shape_and_nonfinite(tmp_path):
    fields = {0: DisplacementField.zeros((8, 8)), 1: DisplacementField.zeros((8, 8))}
    write_fields(tmp_path / "f", fields)
    with pytest.raises(ValueError, match="shape"):
        ingest_displacement_fields(tmp_path / "f", (16, 16))
    raw = tmp_path / "f.bin"
    data = np.frombuffer(raw.read_bytes(), "<f8").copy()
    data[-1] = np.inf
    raw.write_bytes(data.tobytes())
    with pytest.raises(ValueError, match="non-finite"):
        ingest_displacement_fields(tmp_path / "f")


def test_motion_table(tmp_path):
    est = MotionEstimate(np.array([[0.0, 0.0], [1.5, -2.0]]), 0)
    bins = kmeans_bin(est, 2)
    write_motion_table(tmp_path / "m.csv", est, bins)
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "heartbeat,shift_0,shift_1,bin"
    row = lines[2].split(",")
    assert row[0] == "1" and float(row[1]) == 1.5 and float(row[2]) == -2.0
    assert int(row[3]) == bins.labels[1]
