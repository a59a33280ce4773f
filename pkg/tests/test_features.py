import math

import numpy as np
import pytest

from fovmatch.correlation import CorrConfig
from fovmatch.errors import DimensionMismatch, MismatchedLengths
from fovmatch.features import (
    EgoStream,
    FeatureConfig,
    build_ego_graph,
    build_top_graph,
    gist_similarity,
    ingest_detections,
    load_counts_csv,
    load_descriptor_file,
    resample,
    resample_trajectory,
    save_counts_csv,
    save_descriptor_file,
)
from fovmatch.geometry import GeometryConfig, Trajectory, cone_at, cone_iou, count_in_cone

GEO = GeometryConfig(range_m=3.0, grid_resolution_m=0.2)
FCFG = FeatureConfig(resample_rate=10.0)


def walker(vid, start, velocity, n=12, rate=10.0):
    start = np.asarray(start, float)
    velocity = np.asarray(velocity, float)
    pos = start[None, :] + np.arange(n)[:, None] * velocity[None, :]
    return Trajectory(vid, pos, rate)


def test_top_graph_single_walker_band_diagonal():
    g = build_top_graph([walker("0", (0, 0), (0.1, 0.0))], GEO, FCFG)
    iou = g.node_features["0"].iou_matrix
    assert np.allclose(np.diag(iou), 1.0)
    assert np.allclose(iou, iou.T)
    off1 = np.diag(iou, k=1)
    assert (off1 > 0.5).all()  # adjacent frames overlap heavily
    assert iou[0, -1] < off1.min()  # far frames overlap less


def test_top_graph_lockstep_pair_unit_diagonal_edge():
    a = walker("0", (0, 0), (0.1, 0.05))
    b = walker("1", (0, 0), (0.1, 0.05))
    g = build_top_graph([a, b], GEO, FCFG)
    edge = g.edge_features[("0", "1")].iou_matrix
    assert np.allclose(np.diag(edge), 1.0)


def test_top_graph_matches_scalar_recomputation():
    trajs = [
        walker("0", (0, 0), (0.12, 0.0), n=8),
        walker("1", (1.0, 0.5), (0.0, 0.1), n=8),
        walker("2", (-0.5, 1.0), (0.08, -0.06), n=8),
    ]
    g = build_top_graph(trajs, GEO, FCFG)
    rs = [resample_trajectory(t, FCFG.resample_rate) for t in trajs]
    by_id = {t.viewer_id: t for t in rs}
    t_n = 8
    for vid in g.node_ids:
        node = g.node_features[vid]
        for p in range(t_n):
            for q in range(t_n):
                expect = cone_iou(
                    cone_at(by_id[vid], p, GEO), cone_at(by_id[vid], q, GEO), GEO
                )
                assert node.iou_matrix[p, q] == expect
        others = [t for t in rs if t.viewer_id != vid]
        for t in range(t_n):
            pts = [o.positions[t] for o in others]
            assert node.counts[t] == count_in_cone(cone_at(by_id[vid], t, GEO), pts)
    for (a, b), edge in g.edge_features.items():
        for p in range(t_n):
            for q in range(t_n):
                expect = cone_iou(
                    cone_at(by_id[a], p, GEO), cone_at(by_id[b], q, GEO), GEO
                )
                assert edge.iou_matrix[p, q] == expect


def test_top_graph_rejects_mismatched_lengths():
    with pytest.raises(MismatchedLengths):
        build_top_graph(
            [walker("0", (0, 0), (0.1, 0), n=10), walker("1", (0, 0), (0.1, 0), n=12)],
            GEO,
            FCFG,
        )


def test_gist_similarity_identunits():
    d = np.array([0.3, 0.4, 0.5])
    assert gist_similarity(d, d, 0.5) == 1.0


def test_gist_similarity_unit_distance_paper_value():
    d1 = np.zeros(4)
    d2 = np.array([1.0, 0.0, 0.0, 0.0])
    assert np.isclose(gist_similarity(d1, d2, 0.5), math.exp(-0.5))
    assert np.isclose(gist_similarity(d1, d2, 0.5), 0.6065, atol=5e-4)


def test_gist_similarity_monotone_in_distance():
    rng = np.random.default_rng(0)
    base = rng.normal(size=8)
    dirn = rng.normal(size=8)
    dirn /= np.linalg.norm(dirn)
    sims = [gist_similarity(base, base + r * dirn, 0.5) for r in np.linspace(0, 3, 10)]
    assert all(a > b for a, b in zip(sims, sims[1:]))
    with pytest.raises(DimensionMismatch):
        gist_similarity(np.zeros(3), np.zeros(4), 0.5)


def rand_stream(vid, rng, n=15, dim=6):
    return EgoStream(
        vid,
        rng.normal(size=(n, dim)),
        np.abs(rng.normal(size=n)),
        frame_rate=10.0,
    )


def test_ego_graph_self_pair_edge_equals_node():
    rng = np.random.default_rng(1)
    s = rand_stream("a", rng)
    twin = EgoStream("b", s.descriptors.copy(), s.counts.copy(), s.frame_rate)
    g = build_ego_graph([s, twin], FCFG)
    assert np.allclose(
        g.edge_features[("a", "b")].gist_sim, g.node_features["a"].gist_sim, atol=1e-12
    )


def test_ego_graph_constant_descriptors_all_ones():
    desc = np.tile([0.6, 0.8], (10, 1))
    s = EgoStream("a", desc, np.zeros(10), 10.0)
    g = build_ego_graph([s], FCFG)
    assert np.allclose(g.node_features["a"].gist_sim, 1.0)


def test_ego_graph_matches_pointwise_similarity():
    rng = np.random.default_rng(2)
    s1 = rand_stream("a", rng, n=9)
    s2 = rand_stream("b", rng, n=11)
    g = build_ego_graph([s1, s2], FCFG)

    def unit(x):
        n = np.linalg.norm(x)
        return x / n if n > 0 else x

    edge = g.edge_features[("a", "b")].gist_sim
    for p in range(9):
        for q in range(11):
            expect = gist_similarity(
                unit(s1.descriptors[p]), unit(s2.descriptors[q]), FCFG.gamma
            )
            assert np.isclose(edge[p, q], expect, atol=1e-12)
    node = g.node_features["a"].gist_sim
    assert np.array_equal(node, node.T)
    assert (np.diag(node) == 1.0).all()


def test_ego_graph_rejects_dim_mismatch():
    rng = np.random.default_rng(3)
    with pytest.raises(DimensionMismatch):
        build_ego_graph([rand_stream("a", rng, dim=4), rand_stream("b", rng, dim=5)], FCFG)


def test_matrix_entries_bounded():
    rng = np.random.default_rng(4)
    g = build_ego_graph([rand_stream("a", rng), rand_stream("b", rng)], FCFG)
    for feats in list(g.node_features.values()) + list(g.edge_features.values()):
        sim = feats.similarity
        assert (sim > 0).all() and (sim <= 1.0).all()
    top = build_top_graph(
        [walker("0", (0, 0), (0.1, 0)), walker("1", (1, 1), (0, 0.1))], GEO, FCFG
    )
    for feats in list(top.node_features.values()) + list(top.edge_features.values()):
        sim = feats.similarity
        assert (sim >= 0).all() and (sim <= 1.0).all()


def test_ingest_detections_empty_and_single():
    assert np.array_equal(ingest_detections([], 5, FCFG), np.zeros(5))
    out = ingest_detections([(2, -3.7, 0.2)], 5, FCFG)
    expect = np.zeros(5)
    expect[2] = 1.0  # degenerate min-max range maps to 1
    assert np.array_equal(out, expect)


def test_ingest_detections_hand_traced():
    rows = [
        (0, 2.0, 0.10),  # kept, rescaled (2-1)/(5-1)=0.25
        (0, 5.0, 0.30),  # kept, 1.0
        (1, 1.0, 0.50),  # kept, 0.0
        (1, 4.0, 0.02),  # dropped: box too small
        (2, 3.0, 0.04),  # kept (boundary fraction), 0.5
        (2, 1.0, 0.039),  # dropped
        (3, 2.0, 0.08),  # kept, 0.25
        (3, 3.0, 0.20),  # kept, 0.5
        (4, 5.0, 0.90),  # kept, 1.0
        (4, 1.0, 0.01),  # dropped
    ]
    out = ingest_detections(rows, 6, FCFG)
    assert np.allclose(out, [1.25, 0.0, 0.5, 0.75, 1.0, 0.0])
    assert (out >= 0).all()
    counts_per_frame = np.bincount([r[0] for r in rows], minlength=6)
    assert (out <= counts_per_frame).all()
    with pytest.raises(ValueError):
        ingest_detections([(9, 1.0, 0.5)], 6, FCFG)


def test_resample_identity_and_decimation():
    x = np.arange(100.0)
    assert np.array_equal(resample(x, 30.0, 30.0), x)
    half = resample(x, 30.0, 15.0)
    assert half.shape == (50,)
    assert np.array_equal(half, x[np.floor(np.arange(50) * 2 + 0.5).astype(int)])


def test_resample_upsample_matches_index_map():
    x = np.arange(100.0)
    up = resample(x, 24.0, 30.0)
    assert up.shape == (125,)
    expect = x[np.clip(np.floor(np.arange(125) * 24.0 / 30.0 + 0.5).astype(int), 0, 99)]
    assert np.array_equal(up, expect)


def test_resample_matrix_both_axes():
    m = np.arange(36.0).reshape(6, 6)
    out = resample(m, 10.0, 5.0, axes=(0, 1))
    assert out.shape == (3, 3)
    src = np.floor(np.arange(3) * 2 + 0.5).astype(int)
    assert np.array_equal(out, m[np.ix_(src, src)])


def test_descriptor_and_counts_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    mat = rng.normal(size=(20, 8))
    path = tmp_path / "ego_0.desc"
    save_descriptor_file(path, mat, "e0", 10.0)
    back, meta = load_descriptor_file(path)
    assert np.allclose(back, mat, atol=1e-6)
    assert meta["video_id"] == "e0" and meta["frame_rate"] == 10.0
    counts = np.abs(rng.normal(size=20))
    cpath = tmp_path / "ego_0.counts.csv"
    save_counts_csv(cpath, counts)
    assert np.allclose(load_counts_csv(cpath), counts, atol=1e-6)
