import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpb.problem import (
    NoiseKind,
    ProblemInstance,
    Scenario,
    ScenarioSpec,
    derive_truth,
    generate_synthetic,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    save_instance,
    scenario_layout,
    simulate_output,
)

ALL_SCENARIOS = list(Scenario)


def test_baseline_layout_truth():
    cond, probs = scenario_layout("baseline")
    # 1-based layout: solution l on 5l-4..5l for l<=7, 8 on 36..41, 10 on 42..50
    expected = [l for l in range(1, 8) for _ in range(5)] + [8] * 6 + [10] * 9
    assert (cond + 1).tolist() == expected
    np.testing.assert_allclose(probs, 1 / 50)
    truth = derive_truth(generate_synthetic(ScenarioSpec("baseline", 3)))
    assert truth.mpb == 9
    assert truth.pref_probs[9] == pytest.approx(0.18)
    assert truth.pref_probs[7] == pytest.approx(0.12)
    np.testing.assert_allclose(truth.gaps[:7], 0.08, atol=1e-12)
    assert truth.gaps[7] == pytest.approx(0.06)
    assert truth.gaps[8] == pytest.approx(0.18)


def test_single_parameter_dominance():
    truth = derive_truth(ProblemInstance([1.0], [[1.0], [2.0]], 1.0))
    assert truth.cond_opt.tolist() == [0]
    assert truth.pref_probs.tolist() == [1.0, 0.0]
    assert truth.mpb == 0
    assert truth.gaps.tolist() == [0.0, 1.0]
    assert truth.unique


def test_scenario1_gaps():
    truth = derive_truth(generate_synthetic(ScenarioSpec("s1", 0)))
    np.testing.assert_allclose(truth.gaps[:7], 0.2, atol=1e-12)


def test_scenario4_layout():
    cond, probs = scenario_layout("s4")
    for l in range(2, 10):
        p = 0.016 if l <= 7 else 0.032
        for b in range(5 * l - 9, 5 * l - 4):  # 1-based 5l-9..5l-5
            assert cond[b - 1] + 1 == l
            assert probs[b - 1] == pytest.approx(p)
    for b in range(41, 51):
        assert cond[b - 1] + 1 == 10
        assert probs[b - 1] == pytest.approx(0.02)
    assert probs.sum() == pytest.approx(1.0)
    truth = derive_truth(generate_synthetic(ScenarioSpec("s4", 0)))
    assert truth.pref_probs[9] == pytest.approx(0.2)


def test_scenario5_layout():
    cond, probs = scenario_layout("s5")
    assert probs.sum() == pytest.approx(1.0)
    truth = derive_truth(generate_synthetic(ScenarioSpec("s5", 0)))
    assert truth.mpb == 9 and truth.unique


@pytest.mark.parametrize("name", ALL_SCENARIOS)
def test_every_scenario_has_mpb_ten(name):
    for seed in range(3):
        inst = generate_synthetic(ScenarioSpec(name, seed))
        truth = derive_truth(inst)
        assert truth.mpb == 9
        assert truth.unique
        assert (inst.k, inst.B) == (10, 50)


@pytest.mark.parametrize("name", ALL_SCENARIOS)
def test_columns_are_permutations(name):
    inst = generate_synthetic(ScenarioSpec(name, 7))
    cond, _ = scenario_layout(name)
    for b in range(inst.B):
        assert sorted(inst.means[:, b].tolist()) == list(range(1, 11))
        assert inst.means[cond[b], b] == 1


def test_noise_ranges():
    base = generate_synthetic(ScenarioSpec("baseline", 1))
    assert base.lam.min() >= 4 and base.lam.max() <= 6
    assert (base.noise_kind == NoiseKind.GAUSSIAN_KNOWN_VAR).all()
    s2 = generate_synthetic(ScenarioSpec("s2", 1))
    assert s2.lam.min() >= 8 and s2.lam.max() <= 12
    s3 = generate_synthetic(ScenarioSpec("s3", 1))
    assert (s3.noise_kind == NoiseKind.SHIFTED_EXPONENTIAL).all()


def test_same_seed_same_instance():
    a = generate_synthetic(ScenarioSpec("s3", 42))
    b = generate_synthetic(ScenarioSpec("s3", 42))
    assert instance_to_dict(a) == instance_to_dict(b)
    c = generate_synthetic(ScenarioSpec("s3", 43))
    assert instance_to_dict(a) != instance_to_dict(c)


def test_unknown_scenario():
    with pytest.raises(ValueError):
        Scenario.parse("S9")


def _single(kind):
    return ProblemInstance([1.0], [[1.0], [3.0]], 5.0, kind)


def test_gaussian_output_mean():
    y = simulate_output(_single(NoiseKind.GAUSSIAN_KNOWN_VAR), 0, 0, np.random.default_rng(1), size=1_000_000)
    assert abs(y.mean() - 1.0) <= 0.02


def test_shifted_exponential_support_and_variance():
    y = simulate_output(_single(NoiseKind.SHIFTED_EXPONENTIAL), 0, 0, np.random.default_rng(2), size=1_000_000)
    assert y.min() >= -4.0
    assert abs(y.var() - 25.0) <= 1.0
    assert abs(y.mean() - 1.0) <= 0.02


@pytest.mark.parametrize("kind", list(NoiseKind))
def test_vector_draws_match_scalar_stream(kind):
    inst = _single(kind)
    vec = simulate_output(inst, 1, 0, np.random.default_rng(9), size=50)
    rng = np.random.default_rng(9)
    scal = [simulate_output(inst, 1, 0, rng) for _ in range(50)]
    np.testing.assert_array_equal(vec, scal)


def test_instance_validation():
    with pytest.raises(ValueError):
        ProblemInstance([0.5, 0.6], [[1, 2], [2, 1]], 1.0)
    with pytest.raises(ValueError):
        ProblemInstance([0.5, 0.5], [[1, np.nan], [2, 1]], 1.0)
    with pytest.raises(ValueError):
        ProblemInstance([0.5, 0.5], [[1, 2], [2, 1]], [[1, 0], [1, 1]])
    with pytest.raises(ValueError):
        ProblemInstance([1.0], [[1.0]], 1.0)  # one solution


def test_instance_is_immutable():
    inst = ProblemInstance([1.0], [[1.0], [2.0]], 1.0)
    with pytest.raises(ValueError):
        inst.means[0, 0] = 5.0


def test_ties_are_flagged_not_raised():
    truth = derive_truth(ProblemInstance([0.5, 0.5], [[1, 2], [1, 1]], 1.0))
    assert truth.cond_opt.tolist() == [0, 1]
    assert truth.unique_inner.tolist() == [False, True]
    assert not truth.unique
    outer = derive_truth(ProblemInstance([0.5, 0.5], [[1, 2], [2, 1]], 1.0))
    assert not outer.unique_outer
    assert outer.mpb == 0


def test_instance_round_trip(tmp_path):
    inst = generate_synthetic(ScenarioSpec("s3", 5))
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    data = json.loads(path.read_text())
    assert set(data) >= {"k", "B", "probs", "means", "noise"}
    assert data["noise"][0][0]["kind"] == "shifted_exponential"
    back = load_instance(path)
    np.testing.assert_array_equal(back.means, inst.means)
    np.testing.assert_array_equal(back.lam, inst.lam)
    np.testing.assert_array_equal(back.noise_kind, inst.noise_kind)
    assert instance_to_dict(instance_from_dict(data)) == data


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    k=st.integers(2, 5),
    B=st.integers(1, 6),
    shift=st.floats(-10, 10),
    scale=st.floats(0.1, 2),
)
def test_pref_invariant_under_increasing_transform(seed, k, B, shift, scale):
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(k, B))
    probs = rng.dirichlet(np.ones(B))
    base = derive_truth(ProblemInstance(probs, means, 1.0))
    moved = derive_truth(ProblemInstance(probs, np.exp(scale * means) + shift, 1.0))
    np.testing.assert_array_equal(base.cond_opt, moved.cond_opt)
    np.testing.assert_allclose(base.pref_probs, moved.pref_probs)
    assert base.mpb == moved.mpb


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(2, 6), B=st.integers(1, 8))
def test_truth_invariants(seed, k, B):
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(k, B))
    probs = rng.dirichlet(np.ones(B))
    t = derive_truth(ProblemInstance(probs, means, 1.0))
    assert t.pref_probs.sum() == pytest.approx(1.0)
    assert (t.gaps >= 0).all() and t.gaps[t.mpb] == 0
    for i, fav in enumerate(t.favorable_sets):
        assert all(t.cond_opt[b] == i for b in fav)
    assert sum(len(f) for f in t.favorable_sets) == B
