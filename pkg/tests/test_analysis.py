import json
import math

import numpy as np
import pytest

from groupsync.analysis import (
    contraction_check,
    contraction_samples,
    estimation_error,
    master_report,
    projection_inequality_gap,
    recovery_rate,
)
from groupsync.gen import GraphConfig, NoiseConfig, gen_instance
from groupsync.groups import GroupSpec, cyclic_element, rho, sample_uniform
from groupsync.model import GroundTruthMissing, Instance, delta_matrix
from groupsync.solver import SolveConfig, SolveTrace, gpm, solve

from .conftest import ALL_SPECS, all_permutations, enumerate_group


def test_error_zero_under_gauge(rng):
    for spec in ALL_SPECS:
        G = sample_uniform(spec, rng, size=8)
        Q0 = sample_uniform(spec, rng)
        eps, Q = estimation_error(spec, G @ Q0, G)
        assert eps <= 1e-12
        np.testing.assert_allclose(Q, Q0, atol=1e-12)


@pytest.mark.parametrize("spec", [GroupSpec.permutation(3), GroupSpec.permutation(4), GroupSpec.cyclic(5), GroupSpec.cyclic(12)], ids=str)
def test_error_matches_exhaustive_alignment(spec, rng):
    elements = enumerate_group(spec)
    for _ in range(30):
        Gstar = sample_uniform(spec, rng, size=6)
        G = Gstar @ sample_uniform(spec, rng)
        G[rng.integers(6)] = sample_uniform(spec, rng)
        G[rng.integers(6)] = sample_uniform(spec, rng)
        brute = min(np.linalg.norm(G - Gstar @ Q) for Q in elements)
        assert estimation_error(spec, G, Gstar)[0] == pytest.approx(brute, abs=1e-12)


def test_error_shape_check():
    with pytest.raises(ValueError):
        estimation_error(GroupSpec.orthogonal(2), np.zeros((3, 2, 2)), np.zeros((4, 2, 2)))


def test_recovery_rate_examples(rng):
    spec = GroupSpec.permutation(3)
    Gstar = sample_uniform(spec, rng, size=10)
    assert recovery_rate(spec, Gstar @ all_permutations(3)[4], Gstar) == 1.0
    G = Gstar.copy()
    G[3] = Gstar[3] @ all_permutations(3)[1]
    assert recovery_rate(spec, G, Gstar) == 0.9


def test_recovery_rate_noiseless_cyclic():
    spec = GroupSpec.cyclic(8)
    inst = gen_instance(spec, GraphConfig(50, 0.5), NoiseConfig(model="outlier", q=1.0), seed=0)
    G, _, _ = solve(inst)
    assert recovery_rate(spec, G, inst.ground_truth) == 1.0


@pytest.mark.parametrize("spec", [GroupSpec.permutation(4), GroupSpec.cyclic(9)], ids=str)
def test_recovery_one_iff_small_error(spec, rng):
    n = 12
    Gstar = sample_uniform(spec, rng, size=n)
    for _ in range(20):
        G = Gstar @ sample_uniform(spec, rng)
        if rng.random() < 0.5:
            G[rng.integers(n)] = sample_uniform(spec, rng)
        eps, _ = estimation_error(spec, G, Gstar)
        assert 0.0 <= recovery_rate(spec, G, Gstar) <= 1.0
        assert (recovery_rate(spec, G, Gstar) == 1.0) == (eps <= 1e-6 * math.sqrt(n))


@pytest.mark.parametrize(
    "spec",
    [GroupSpec.orthogonal(3), GroupSpec.special_orthogonal(3), GroupSpec.permutation(5)]
    + [GroupSpec.cyclic(m) for m in (1, 2, 3, 6, 12)],
    ids=str,
)
def test_projection_inequality_random_pairs(spec, rng):
    n, r = 20, rho(spec)
    for _ in range(200):
        A = np.einsum("nji,njk->ik", sample_uniform(spec, rng, size=n), sample_uniform(spec, rng, size=n))
        assert projection_inequality_gap(spec, A, n, r) <= 1e-6


@pytest.mark.parametrize("m", [6, 12])
def test_projection_inequality_cyclic_needs_rho(m):
    # estimates off by one rotation step on k of n blocks break the rho = 1 inequality
    spec, n = GroupSpec.cyclic(m), 20
    rng = np.random.default_rng(0)
    gaps_one, gaps_rho = [], []
    for k in range(n + 1):
        Gstar = sample_uniform(spec, rng, size=n)
        G = Gstar.copy()
        G[:k] = Gstar[:k] @ cyclic_element(1, m)
        A = np.einsum("nji,njk->ik", Gstar, G)
        gaps_one.append(projection_inequality_gap(spec, A, n, 1.0))
        gaps_rho.append(projection_inequality_gap(spec, A, n, rho(spec)))
    assert max(gaps_one) > 0
    assert max(gaps_rho) <= 1e-9


def test_report_noiseless_complete(tmp_path):
    inst = gen_instance(GroupSpec.special_orthogonal(3), GraphConfig(30), NoiseConfig(), seed=1)
    _, trace, _ = solve(inst)
    report = master_report(inst, trace)
    assert report.kappa.kappa == 0.0
    assert report.op_norm_dinv_delta <= 1e-12 and report.frob_norm_dinv_delta_gstar <= 1e-12
    assert report.cond_ii and report.cond_iii and report.cond_iv and report.cond_i
    assert max(trace.epsilon) <= 1e-8
    assert report.envelope_violations == []
    path = tmp_path / "report.json"
    report.write_json(path)
    data = json.loads(path.read_text())
    assert data["all_conditions_hold"] is True and data["kappa"]["kappa"] == 0.0


def test_report_opnorm_matches_dense():
    inst = gen_instance(GroupSpec.orthogonal(2), GraphConfig(15, 0.6), NoiseConfig(sigma=0.2), seed=2)
    _, trace, _ = solve(inst)
    report = master_report(inst, trace)
    Dinv = np.diag(np.repeat(1.0 / inst.graph.degrees, 2))
    M = Dinv @ delta_matrix(inst).to_dense()
    assert report.op_norm_dinv_delta == pytest.approx(np.linalg.norm(M, 2), rel=1e-6)
    Gs = inst.ground_truth.reshape(-1, 2)
    assert report.frob_norm_dinv_delta_gstar == pytest.approx(np.linalg.norm(M @ Gs), rel=1e-12)


@pytest.mark.parametrize("spec", [GroupSpec.orthogonal(3), GroupSpec.special_orthogonal(3), GroupSpec.permutation(3)], ids=str)
def test_condition_i_holds_on_random_runs(spec):
    noise = NoiseConfig(sigma=0.5) if spec.kind != "P" else NoiseConfig(model="projected_additive", delta=0.5)
    inst = gen_instance(spec, GraphConfig(40, 0.5), noise, seed=3)
    _, trace, _ = solve(inst, SolveConfig(max_iters=30))
    assert master_report(inst, trace).cond_i


def test_report_high_noise_flags_cond_iii():
    inst = gen_instance(GroupSpec.special_orthogonal(3), GraphConfig(30), NoiseConfig(sigma=10.0), seed=4)
    _, trace, _ = solve(inst, SolveConfig(max_iters=20))
    report = master_report(inst, trace)
    assert not report.cond_iii and not report.all_conditions_hold
    assert len(report.envelope) == len(trace.epsilon)


def test_report_requires_truth_and_trace():
    inst = gen_instance(GroupSpec.orthogonal(2), GraphConfig(5), NoiseConfig(), seed=5)
    with pytest.raises(GroundTruthMissing):
        master_report(Instance(inst.spec, inst.graph, inst.observations), SolveTrace())
    with pytest.raises(ValueError):
        master_report(inst, SolveTrace())


def test_envelope_uses_t_plus_one_exponent():
    inst = gen_instance(GroupSpec.orthogonal(3), GraphConfig(40), NoiseConfig(sigma=0.05), seed=6)
    G0 = inst.ground_truth.copy()
    G0[:4] = sample_uniform(inst.spec, np.random.default_rng(1), size=4)
    _, trace = gpm(inst, G0)
    report = master_report(inst, trace)
    for t, bound in enumerate(report.envelope):
        assert bound == pytest.approx((5 / 8) ** (t + 1) * trace.epsilon[0] + 16 / 3 * report.frob_norm_dinv_delta_gstar)


# --- contraction -----------------------------------------------------------


def test_contraction_exact_scaled_member(rng):
    for spec in ALL_SPECS:
        Q = sample_uniform(spec, rng)
        assert contraction_check(spec, [(r, r * Q, Q) for r in (0.1, 1.0, 10.0)])


@pytest.mark.parametrize("spec", ALL_SPECS, ids=str)
def test_contraction_random_samples(spec):
    assert contraction_check(spec, contraction_samples(spec, 3000, np.random.default_rng(7)))


def test_contraction_cyclic_boundaries_present():
    spec = GroupSpec.cyclic(6)
    samples = list(contraction_samples(spec, 30, np.random.default_rng(0)))
    # the third kind lies on a Voronoi boundary: equidistant from two neighbours
    _, X, _ = samples[2]
    dists = np.sort(np.linalg.norm(X - cyclic_element(np.arange(6), 6), axis=(1, 2)))
    assert dists[1] - dists[0] <= 1e-12
    assert contraction_check(spec, samples)


def test_contraction_requires_samples():
    with pytest.raises(ValueError):
        contraction_check(GroupSpec.orthogonal(2), [])

