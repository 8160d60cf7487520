import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_pair
from grrail.config import RunConfig
from grrail.descriptors import (
    GRRAIL_NAMES,
    INTENSITY_NAMES,
    RADIOMICS_NAMES,
    Descriptor,
    RoiTooSmallError,
    describe,
    grrail,
    intensity_graph,
    radiomics_aggregate,
    radiomics_from_maps,
)
from grrail.glcm import FEATURE_NAMES, FeatureMap
from grrail.graph_metrics import METRIC_NAMES, SINGLE_NODE_ROW
from oracles import streaming_moments

S = {name: i for i, name in enumerate(("mean", "median", "std", "kurtosis", "skewness"))}


def textured(seed=0, shape=(10, 10, 10)):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=shape)
    v[shape[0] // 2:] += 4
    mask = np.zeros(shape, bool)
    mask[1:-1, 1:-1, 1:-1] = True
    return make_pair(v, mask)


def one_map(values, mask=None):
    values = np.asarray(values, float)
    mask = np.ones(values.shape, bool) if mask is None else mask
    return FeatureMap("energy", np.where(mask, values, np.nan), mask, 16)


def test_canonical_names():
    assert len(GRRAIL_NAMES) == 195 == len(set(GRRAIL_NAMES))
    assert len(RADIOMICS_NAMES) == 65 == len(set(RADIOMICS_NAMES))
    assert len(INTENSITY_NAMES) == 15 == len(set(INTENSITY_NAMES))
    assert GRRAIL_NAMES[0] == "energy_size" and GRRAIL_NAMES[-1] == "imc2_resilience"
    assert "entropy_avg_path_length" in GRRAIL_NAMES
    assert GRRAIL_NAMES[15 * 3 + 4] == f"{FEATURE_NAMES[3]}_{METRIC_NAMES[4]}"
    assert RADIOMICS_NAMES[:5] == tuple(f"energy_{s}" for s in S)
    assert INTENSITY_NAMES[0] == "intensity_size"


def test_descriptor_length_is_asserted():
    with pytest.raises(AssertionError):
        Descriptor("grrail", np.zeros(194))
    with pytest.raises(AssertionError):
        Descriptor("intensity", np.full(15, np.nan))


def test_grrail_on_textured_volume():
    g, m = textured()
    d = grrail(g, m, RunConfig(), seed=1)
    assert d.values.shape == (195,) and d.names == GRRAIL_NAMES
    assert np.all(np.isfinite(d.values))
    assert d.provenance["bins"] == 16 and d.provenance["seed"] == 1 and d.provenance["edge_policy"] == "rag26"
    assert set(d.as_dict()) == set(GRRAIL_NAMES)


def test_constant_volume_gives_single_node_blocks():
    g, m = make_pair(np.full((6, 6, 6), 4.0))
    d = grrail(g, m, RunConfig(), seed=0)
    assert np.array_equal(d.values.reshape(13, 15), np.tile(SINGLE_NODE_ROW, (13, 1)))


def test_grrail_thread_count_bit_identical():
    g, m = textured(3)
    a = grrail(g, m, RunConfig(threads=1), seed=5)
    b = grrail(g, m, RunConfig(threads=3), seed=5)
    assert a.values.tobytes() == b.values.tobytes()


def test_grrail_translation_invariance():
    rng = np.random.default_rng(4)
    block = rng.normal(size=(8, 8, 8))
    block[4:] += 3
    v1, v2 = np.zeros((14, 14, 14)), np.zeros((14, 14, 14))
    m1, m2 = np.zeros((14, 14, 14), bool), np.zeros((14, 14, 14), bool)
    v1[1:9, 1:9, 1:9] = block
    m1[1:9, 1:9, 1:9] = True
    v2[5:13, 3:11, 4:12] = block
    m2[5:13, 3:11, 4:12] = True
    a = grrail(*make_pair(v1, m1), RunConfig(), seed=2)
    b = grrail(*make_pair(v2, m2), RunConfig(), seed=2)
    assert a.values.tobytes() == b.values.tobytes()


def test_roi_too_small_is_named():
    mask = np.zeros((5, 5, 5), bool)
    mask[2, 2, :3] = True
    with pytest.raises(RoiTooSmallError, match="min_roi_voxels"):
        grrail(*make_pair(np.zeros((5, 5, 5)), mask), RunConfig())


def test_keep_exposes_intermediates():
    g, m = textured(1, (8, 8, 8))
    keep = {}
    grrail(g, m, RunConfig(), seed=0, keep=keep)
    assert len(keep["maps"]) == len(keep["clusters"]) == len(keep["graphs"]) == 13
    assert all(gr.n_nodes == cm.u for gr, cm in zip(keep["graphs"], keep["clusters"]))


# --------------------------------------------------------------------------- #
# radiomics


def test_radiomics_constant_map():
    d = radiomics_from_maps([one_map(np.full((3, 3, 3), 2.0))] * 13)
    assert d.values[:5].tolist() == [2.0, 2.0, 0.0, 0.0, 0.0]


def test_radiomics_symmetric_bimodal():
    v = np.zeros((4, 4, 4))
    v[2:] = 1
    d = radiomics_from_maps([one_map(v)] * 13)
    assert d.values[S["mean"]] == 0.5 and d.values[S["std"]] == 0.5 and d.values[S["skewness"]] == 0.0


@given(st.integers(0, 2 ** 31))
def test_radiomics_matches_streaming_oracle(seed):
    rng = np.random.default_rng(seed)
    v = rng.gamma(2.0, 3.0, (5, 6, 7))
    mask = rng.random(v.shape) < 0.7
    mask[0, 0, 0] = True
    d = radiomics_from_maps([one_map(v, mask)] * 13)
    x = v[mask]
    mean, sd, kurt, skew = streaming_moments(x.tolist())
    want = [mean, float(np.median(x)), sd, kurt, skew]
    np.testing.assert_allclose(d.values[:5], want, rtol=1e-10, atol=1e-10)


def test_radiomics_aggregate_length():
    d = radiomics_aggregate(*textured(2, (7, 7, 7)))
    assert d.values.shape == (65,) and d.names == RADIOMICS_NAMES


# --------------------------------------------------------------------------- #
# intensity graph


def test_intensity_constant_roi_single_node():
    d = intensity_graph(*make_pair(np.full((4, 4, 4), 1.0)))
    assert d.values.tolist() == list(SINGLE_NODE_ROW) and len(d.values) == 15


def test_intensity_two_blocks():
    v = np.zeros((6, 6, 6))
    v[3:] = 50
    keep = {}
    d = intensity_graph(*make_pair(v), RunConfig(), seed=0, keep=keep)
    q = dict(zip(METRIC_NAMES, d.values))
    assert keep["intensity_cluster"].u == 2
    assert q["size"] == 2 and q["density"] == 1 and q["connected_components"] == 1


def test_describe_matches_individual_calls():
    g, m = textured(6, (8, 8, 8))
    cfg = RunConfig()
    out = describe(g, m, cfg, 9, kinds=("grrail", "radiomics", "intensity"))
    assert out["grrail"].values.tobytes() == grrail(g, m, cfg, 9).values.tobytes()
    assert out["radiomics"].values.tobytes() == radiomics_aggregate(g, m, cfg).values.tobytes()
    assert out["intensity"].values.tobytes() == intensity_graph(g, m, cfg, 9).values.tobytes()


@settings(max_examples=8)
@given(st.integers(0, 2 ** 31))
def test_grrail_deterministic_and_finite(seed):
    g, m = textured(seed % 1000, (7, 7, 7))
    a, b = grrail(g, m, RunConfig(), seed), grrail(g, m, RunConfig(), seed)
    assert a.values.tobytes() == b.values.tobytes()
    blocks = a.values.reshape(13, 15)
    assert np.all(blocks[:, 0] >= 1) and np.all(blocks[:, 7] >= 1)
