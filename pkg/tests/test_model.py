import json

import numpy as np
import pytest

from groupsync.gen import GraphConfig, NoiseConfig, gen_graph, gen_instance, make_rngs
from groupsync.groups import GroupSpec
from groupsync.model import (
    DisconnectedGraphError,
    GroundTruthMissing,
    Instance,
    MeasurementGraph,
    assemble_C,
    block_column_from_dict,
    block_column_to_dict,
    connectivity_stats,
    degree_inverse_apply,
    delta_matrix,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    save_instance,
)


def mu_oracle(graph):
    """O(n^3) triple loop over the definition of mu_jk, kappa1, kappa2."""
    n = graph.n
    w = [[0.0] * n for _ in range(n)]
    for i in range(n):
        w[i][i] = 1.0
    for i, j in graph.edges:
        w[i][j] = w[j][i] = 1.0
    r = [sum(row) for row in w]
    mu = [[sum(w[i][j] * w[i][k] / r[i] ** 2 for i in range(n)) for k in range(n)] for j in range(n)]
    kappa1 = n * max(abs(mu[j][k] - 1.0 / n) for j in range(n) for k in range(j + 1, n))
    kappa2 = max(mu[j][j] - 1.0 / n for j in range(n))
    return kappa1, kappa2


# --- graph -----------------------------------------------------------------


def test_graph_normalises_edges():
    g = MeasurementGraph(3, [(1, 2), (0, 1), (0, 1)])
    np.testing.assert_array_equal(g.edges, [[0, 1], [1, 2]])
    assert g.num_edges == 2
    np.testing.assert_array_equal(g.degrees, [2, 3, 2])


def test_graph_rejects_bad_edges():
    with pytest.raises(ValueError):
        MeasurementGraph(3, [(1, 0), (1, 2)])
    with pytest.raises(ValueError):
        MeasurementGraph(3, [(0, 1), (1, 3)])


def test_graph_rejects_disconnected():
    with pytest.raises(DisconnectedGraphError):
        MeasurementGraph(4, [(0, 1), (2, 3)])


def test_adjacency_has_self_loops():
    g = MeasurementGraph(3, [(0, 1), (1, 2)])
    np.testing.assert_array_equal(g.adjacency, [[1, 1, 0], [1, 1, 1], [0, 1, 1]])


# --- connectivity ----------------------------------------------------------


@pytest.mark.parametrize("n", [2, 3, 10, 57, 300])
def test_kappa_complete_graph_exactly_zero(n):
    stats = connectivity_stats(MeasurementGraph.complete(n))
    assert stats.kappa == 0.0 and stats.kappa1 == 0.0 and stats.kappa2 == 0.0


def test_kappa_single_edge():
    stats = connectivity_stats(MeasurementGraph(2, [(0, 1)]))
    assert stats.kappa1 == 0.0 and stats.kappa2 == 0.0


def test_kappa_star_graph_matches_oracle():
    g = MeasurementGraph(4, [(0, 1), (0, 2), (0, 3)])
    k1, k2 = mu_oracle(g)
    stats = connectivity_stats(g)
    assert stats.kappa1 == pytest.approx(k1, abs=1e-12)
    assert stats.kappa2 == pytest.approx(k2, abs=1e-12)
    # hand value: leaves 1 and 2 share only the hub, mu_12 = 1/16
    assert k1 == pytest.approx(4 * abs(1 / 16 - 1 / 4), abs=1e-15)


@pytest.mark.parametrize("seed", range(6))
def test_kappa_er_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    g = gen_graph(GraphConfig(int(rng.integers(5, 51)), float(rng.uniform(0.2, 0.9))), rng)
    k1, k2 = mu_oracle(g)
    stats = connectivity_stats(g)
    assert stats.kappa1 == pytest.approx(k1, abs=1e-12)
    assert stats.kappa2 == pytest.approx(k2, abs=1e-12)
    assert stats.kappa == pytest.approx(k1 + k2, abs=1e-12)


def test_degree_inverse_apply():
    g = MeasurementGraph(3, [(0, 1), (1, 2)])  # degrees 2, 3, 2
    Y = np.ones((3, 2, 2))
    out = degree_inverse_apply(g, Y)
    np.testing.assert_allclose(out[:, 0, 0], [1 / 2, 1 / 3, 1 / 2])
    np.testing.assert_allclose(degree_inverse_apply(g, Y.reshape(6, 2)), out.reshape(6, 2))
    full = MeasurementGraph.complete(5)
    np.testing.assert_allclose(degree_inverse_apply(full, np.ones((5, 3, 3))), 0.2)


# --- data matrix -----------------------------------------------------------


def test_assemble_single_edge_identity():
    C = assemble_C(MeasurementGraph(2, [(0, 1)]), np.eye(3)[None], 3)
    np.testing.assert_array_equal(C.to_dense(), np.tile(np.eye(3), (2, 2)))


def test_assemble_path_zero_blocks(rng):
    g = MeasurementGraph(3, [(0, 1), (1, 2)])
    C = assemble_C(g, rng.standard_normal((2, 2, 2)), 2).to_dense()
    np.testing.assert_array_equal(C[0:2, 4:6], 0)
    np.testing.assert_array_equal(C[4:6, 0:2], 0)
    np.testing.assert_array_equal(C[0:2, 0:2], np.eye(2))


def test_assemble_noiseless_complete(rng):
    inst = gen_instance(GroupSpec.orthogonal(3), GraphConfig(6), NoiseConfig(), seed=3)
    Gs = inst.ground_truth.reshape(18, 3)
    np.testing.assert_allclose(inst.C.to_dense(), Gs @ Gs.T, atol=1e-12)


def test_observation_mapping_checks():
    g = MeasurementGraph(3, [(0, 1), (1, 2)])
    obs = {(0, 1): np.eye(2), (1, 2): np.eye(2)}
    np.testing.assert_array_equal(assemble_C(g, obs, 2).blocks, [np.eye(2)] * 2)
    with pytest.raises(ValueError, match="missing"):
        assemble_C(g, {(0, 1): np.eye(2)}, 2)
    with pytest.raises(ValueError, match="not an edge"):
        assemble_C(g, {**obs, (0, 2): np.eye(2)}, 2)
    with pytest.raises(ValueError):
        assemble_C(g, np.zeros((3, 2, 2)), 2)
    with pytest.raises(ValueError):
        assemble_C(g, np.full((2, 2, 2), np.inf), 2)


# --- delta -----------------------------------------------------------------


def test_delta_noiseless_is_zero():
    inst = gen_instance(GroupSpec.special_orthogonal(3), GraphConfig(12, 0.5), NoiseConfig(), seed=1)
    np.testing.assert_allclose(delta_matrix(inst).to_dense(), 0.0, atol=1e-12)


def test_delta_equals_sampled_gaussian():
    spec, seed = GroupSpec.orthogonal(3), 11
    inst = gen_instance(spec, GraphConfig(10, 0.6), NoiseConfig(sigma=0.3), seed)
    # replay the noise stream: it is drawn once, in sorted edge order
    noise = 0.3 * make_rngs(seed)[2].standard_normal((inst.graph.num_edges, 3, 3))
    np.testing.assert_allclose(delta_matrix(inst).blocks, noise, atol=1e-12)


def test_delta_frobenius_by_summation():
    inst = gen_instance(GroupSpec.orthogonal(2), GraphConfig(8, 0.7), NoiseConfig(sigma=0.5), 4)
    G = inst.ground_truth
    total = 0.0
    for (i, j), block in inst.observation_map().items():
        total += 2 * np.sum((block - G[i] @ G[j].T) ** 2)
    assert np.linalg.norm(delta_matrix(inst).to_dense()) ** 2 == pytest.approx(total, rel=1e-12)


def test_delta_requires_ground_truth():
    inst = Instance(GroupSpec.orthogonal(2), MeasurementGraph(2, [(0, 1)]), np.eye(2)[None])
    with pytest.raises(GroundTruthMissing):
        delta_matrix(inst)


# --- serialisation ---------------------------------------------------------


def test_instance_roundtrip(tmp_path):
    inst = gen_instance(GroupSpec.cyclic(5), GraphConfig(9, 0.5), NoiseConfig(model="outlier", q=0.7), 2)
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    back = load_instance(path)
    assert back.spec == inst.spec
    np.testing.assert_array_equal(back.graph.edges, inst.graph.edges)
    np.testing.assert_array_equal(back.observations, inst.observations)
    np.testing.assert_array_equal(back.ground_truth, inst.ground_truth)
    assert instance_to_dict(back) == json.loads(path.read_text())


def test_instance_from_dict_errors():
    base = instance_to_dict(Instance(GroupSpec.orthogonal(2), MeasurementGraph(2, [(0, 1)]), np.eye(2)[None]))
    assert "ground_truth" not in base
    for key in ("spec", "obs"):
        with pytest.raises(ValueError):
            instance_from_dict({k: v for k, v in base.items() if k != key})
    dup = dict(base, obs=base["obs"] * 2)
    with pytest.raises(ValueError, match="duplicate"):
        instance_from_dict(dup)
    short = dict(base, obs=[{"i": 0, "j": 1, "block": [1.0]}])
    with pytest.raises(ValueError):
        instance_from_dict(short)


def test_block_column_roundtrip(rng):
    G = rng.standard_normal((4, 3, 3))
    np.testing.assert_array_equal(block_column_from_dict(block_column_to_dict(G)), G)
    with pytest.raises(ValueError):
        block_column_from_dict({"n": 2, "d": 3, "blocks": [0.0]})
