import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grrail.clustering import cluster_values
from grrail.phantoms import PhantomError, PhantomSpec, RegionTexture, generate_phantom, sample_spec


def test_homogeneous_zero_noise_constant_mean_is_constant():
    spec = PhantomSpec("homogeneous", (RegionTexture(42.0, 0.0, 0.0),), (8, 7, 6), (24, 24, 24))
    grid, mask, label = generate_phantom(spec)
    assert label == 0 and np.all(grid.values[mask.flags] == 42.0)
    assert np.all(grid.values[~mask.flags] == 0.0)


def test_same_seed_same_volume():
    spec = sample_spec(1, 123)
    a, b = generate_phantom(spec), generate_phantom(spec)
    assert a[0].values.tobytes() == b[0].values.tobytes()
    assert np.array_equal(a[1].flags, b[1].flags) and a[2] == b[2] == 1


def test_different_seeds_differ():
    a = generate_phantom(sample_spec(0, 1))[0].values
    b = generate_phantom(sample_spec(0, 2))[0].values
    assert not np.array_equal(a, b)


def test_mask_is_the_ellipsoid():
    spec = PhantomSpec("homogeneous", (RegionTexture(0, 1, 1),), (10, 8, 6), (32, 32, 32), seed=1)
    _, mask, _ = generate_phantom(spec)
    c = np.array([15.5, 15.5, 15.5])
    idx = np.argwhere(mask.flags)
    r = (((idx - c) / np.array([10, 8, 6])) ** 2).sum(axis=1)
    assert np.all(r <= 1)
    assert abs(mask.count - 4 / 3 * np.pi * 10 * 8 * 6) / mask.count < 0.05


def test_heterogeneous_k3_recovered_by_bic():
    hits = 0
    for seed in range(100):
        spec = PhantomSpec(
            "heterogeneous",
            (RegionTexture(0.0, 1.0, 0.0), RegionTexture(5.0, 1.0, 0.0), RegionTexture(10.0, 1.0, 0.0)),
            (9, 8, 7), (20, 20, 20), seed=seed,
        )
        grid, mask, _ = generate_phantom(spec)
        hits += cluster_values(grid.values, mask.flags, 5, seed).u == 3
    assert hits >= 90


def test_spec_validation():
    tex = RegionTexture(0.0, 1.0, 1.0)
    with pytest.raises(PhantomError, match="at least 3"):
        PhantomSpec("heterogeneous", (tex, RegionTexture(10, 1, 1)))
    with pytest.raises(PhantomError, match="closer than"):
        PhantomSpec("heterogeneous", (tex, RegionTexture(2.0, 1, 1), RegionTexture(10, 1, 1)))
    with pytest.raises(PhantomError, match="exactly one"):
        PhantomSpec("homogeneous", (tex, tex))
    with pytest.raises(PhantomError, match="unknown"):
        PhantomSpec("striped", (tex,))
    with pytest.raises(PhantomError):
        PhantomSpec("homogeneous", (RegionTexture(0, -1, 0),))
    with pytest.raises(PhantomError, match="1..5"):
        PhantomSpec("heterogeneous", tuple(RegionTexture(10.0 * i, 1, 0) for i in range(6)))


def test_too_small_to_host_regions():
    regions = tuple(RegionTexture(10.0 * i, 1, 0) for i in range(5))
    with pytest.raises(PhantomError, match="too small"):
        generate_phantom(PhantomSpec("heterogeneous", regions, (3, 3, 3), (12, 12, 12)))
    with pytest.raises(PhantomError, match="too small"):
        generate_phantom(PhantomSpec("homogeneous", regions[:1], (2, 9, 9), (24, 24, 24)))


@settings(max_examples=30)
@given(st.integers(0, 1), st.integers(0, 2 ** 40))
def test_sampled_specs_are_valid(label, seed):
    spec = sample_spec(label, seed)
    assert spec.label == label
    if label:
        assert 3 <= len(spec.regions) <= 5
    else:
        assert len(spec.regions) == 1


def test_heterogeneous_cells_are_balanced():
    spec = sample_spec(1, 77)
    grid, mask, _ = generate_phantom(spec)
    k = len(spec.regions)
    # every cell's mean appears in the ROI: count voxels nearest each cell mean
    vals = grid.values[mask.flags]
    means = np.array([r.mean for r in spec.regions])
    owner = np.argmin(np.abs(vals[:, None] - means[None, :]), axis=1)
    assert np.bincount(owner, minlength=k).min() >= mask.count // (8 * k)
