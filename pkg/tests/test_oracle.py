import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsn.errors import (
    DegenerateSupportError,
    DomainError,
    ErgodicityError,
    ParameterError,
    ShapeError,
)
from gsn.numkit import RngStream
from gsn.oracle import (
    FiniteSystem,
    bayes_posterior,
    check_clamp_condition,
    check_local_ergodicity,
    check_mutual_compatibility,
    check_necessity,
    check_transition_matrix,
    dae_transition,
    posterior_nll_gap_vs_kl,
    propagate_slice_joint,
    random_compatible_pair,
    random_conditional,
    random_finite_system,
    random_transition,
    schweitzer_bound,
    stationary,
    stationary_linear_solve,
    total_variation,
)


def test_total_variation_frozen():
    assert total_variation(np.array([1.0, 0.0]), np.array([0.5, 0.5])) == pytest.approx(0.5)
    assert total_variation(np.array([0.2, 0.8]), np.array([0.2, 0.8])) == 0.0


def test_total_variation_shape_error():
    with pytest.raises(ShapeError):
        total_variation(np.zeros(2), np.zeros(3))


def test_check_transition_matrix_errors():
    with pytest.raises(ShapeError):
        check_transition_matrix(np.zeros((2, 3)))
    with pytest.raises(DomainError):
        check_transition_matrix(np.array([[1.1, 0.0], [-0.1, 1.0]]))
    with pytest.raises(DomainError):
        check_transition_matrix(np.array([[0.5, 0.5], [0.4, 0.5]]))


def test_finite_system_validation():
    with pytest.raises(DomainError):
        FiniteSystem(p_x=np.array([0.7, 0.7]), c=np.eye(2))
    with pytest.raises(ShapeError):
        FiniteSystem(p_x=np.array([0.5, 0.5]), c=np.full((2, 3), 1.0 / 2))
    with pytest.raises(ShapeError):
        FiniteSystem(p_x=np.array([0.5, 0.5]), c=np.eye(2), f=np.eye(2))


def test_bayes_posterior_two_state_by_hand():
    # p = (0.6, 0.4); corruption columns (0.9, 0.1) and (0.2, 0.8).
    sys = FiniteSystem(
        p_x=np.array([0.6, 0.4]),
        c=np.array([[0.9, 0.2], [0.1, 0.8]]),
    )
    post = bayes_posterior(sys)
    expected = np.array([[27 / 31, 3 / 19], [4 / 31, 16 / 19]])
    assert np.allclose(post, expected, atol=1e-14)
    assert np.allclose(post.sum(axis=0), 1.0)


def test_bayes_posterior_unreachable_corrupted_state():
    sys = FiniteSystem(p_x=np.array([0.5, 0.5]), c=np.array([[1.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(DegenerateSupportError):
        bayes_posterior(sys)


def test_dae_transition_composes_posterior_and_corruption():
    rng = RngStream(1)
    sys = random_finite_system(rng, 4)
    post = bayes_posterior(sys)
    k = dae_transition(sys, post)
    assert np.allclose(k, post @ sys.c, atol=1e-14)
    assert np.allclose(k.sum(axis=0), 1.0, atol=1e-12)


def test_stationary_two_state_by_hand():
    # Balance: pi_0 * 0.1 = pi_1 * 0.3.
    k = np.array([[0.9, 0.3], [0.1, 0.7]])
    assert np.allclose(stationary(k), [0.75, 0.25], atol=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_stationary_agrees_with_linear_solve(seed):
    k = random_transition(RngStream(seed), 6)
    pi_iter = stationary(k)
    pi_solve = stationary_linear_solve(k)
    assert total_variation(pi_iter, pi_solve) < 1e-11
    assert np.allclose(k @ pi_iter, pi_iter, atol=1e-10)


def test_stationary_rejects_periodic_chain():
    with pytest.raises(ErgodicityError):
        stationary(np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_stationary_rejects_reducible_chain():
    with pytest.raises(ErgodicityError):
        stationary(np.eye(2))


@pytest.mark.parametrize("seed", range(10))
def test_posterior_chain_recovers_data_distribution(seed):
    # The Bayes-optimal denoiser's chain has the data distribution as its
    # stationary distribution, for any positive corruption.
    rng = RngStream(1000 + seed)
    sys = random_finite_system(rng, int(rng.integers(2, 11)))
    k = dae_transition(sys, bayes_posterior(sys))
    assert total_variation(stationary(k), sys.p_x) < 1e-10


def test_schweitzer_identical_chains():
    k = random_transition(RngStream(5), 5)
    lhs, rhs = schweitzer_bound(k, k)
    assert lhs == pytest.approx(0.0, abs=1e-12)
    assert rhs == pytest.approx(0.0, abs=1e-12)


def test_schweitzer_lhs_is_stationary_gap():
    rng = RngStream(6)
    k = random_transition(rng, 4)
    k_tilde = random_transition(rng, 4)
    lhs, _ = schweitzer_bound(k, k_tilde)
    gap = float(np.abs(stationary(k) - stationary(k_tilde)).sum())
    assert lhs == pytest.approx(gap, rel=1e-9)


@pytest.mark.parametrize("seed", range(30))
def test_schweitzer_bound_holds(seed):
    rng = RngStream(2000 + seed)
    n = int(rng.integers(2, 9))
    k = random_transition(rng, n)
    # Small perturbation keeps the pair in the regime the bound describes.
    noise = rng.uniform((n, n)) * 0.05
    k_tilde = k + noise
    k_tilde /= k_tilde.sum(axis=0, keepdims=True)
    lhs, rhs = schweitzer_bound(k, k_tilde)
    assert lhs <= rhs + 1e-12


def test_schweitzer_shape_error():
    with pytest.raises(ShapeError):
        schweitzer_bound(np.eye(2) * 0.5 + 0.25, np.full((3, 3), 1 / 3))


def test_compatible_pair_reconstructs_its_joint():
    f, g, joint = random_compatible_pair(RngStream(7), 5, 3)
    report = check_mutual_compatibility(f, g)
    assert report.compatible
    assert report.residual < 1e-10
    assert np.allclose(report.joint, joint, atol=1e-10)
    assert report.joint.sum() == pytest.approx(1.0)


def test_incompatible_pair_detected():
    rng = RngStream(8)
    f = random_conditional(rng, 3, 5)
    g = random_conditional(rng, 5, 3)
    report = check_mutual_compatibility(f, g)
    assert not report.compatible
    assert report.joint is None
    assert report.residual > 1e-6


def test_compatibility_shape_error():
    with pytest.raises(ShapeError):
        check_mutual_compatibility(np.full((3, 4), 1.0 / 3), np.full((4, 2), 0.25))


def make_system_with_pair(rng, n_x, n_h):
    f, g, joint = random_compatible_pair(rng, n_x, n_h)
    p_x = joint.sum(axis=1)
    return FiniteSystem(p_x=p_x, c=random_conditional(rng, n_x, n_x), f=f, g=g), joint


@pytest.mark.parametrize("seed", range(6))
def test_clamp_condition_holds_for_compatible_pairs(seed):
    rng = RngStream(3000 + seed)
    sys, _ = make_system_with_pair(rng, 4, 3)
    for mask in range(1, 15):  # proper nonempty subsets of 4 states
        subset = [i for i in range(4) if mask & (1 << i)]
        report = check_clamp_condition(sys, subset)
        assert report.holds
        assert report.max_violation < 1e-10
        assert total_variation(report.clamped_stationary, report.restricted_conditional) < 1e-8


def test_clamp_condition_violated_for_incompatible_pair():
    rng = RngStream(9)
    f = random_conditional(rng, 3, 4)
    g = random_conditional(rng, 4, 3)
    sys = FiniteSystem(
        p_x=np.full(4, 0.25), c=random_conditional(rng, 4, 4), f=f, g=g
    )
    violations = [
        check_clamp_condition(sys, [i for i in range(4) if mask & (1 << i)]).max_violation
        for mask in range(1, 15)
    ]
    assert max(violations) > 1e-6


def test_clamp_condition_errors():
    rng = RngStream(10)
    sys = random_finite_system(rng, 3)
    with pytest.raises(DomainError):
        check_clamp_condition(sys, [0])
    sys2, _ = make_system_with_pair(RngStream(11), 3, 2)
    with pytest.raises(DomainError):
        check_clamp_condition(sys2, [])
    with pytest.raises(DomainError):
        check_clamp_condition(sys2, [5])


def test_clamp_condition_degenerate_decoder():
    # Hidden state 1 never decodes into the clamped set.
    f = np.full((2, 2), 0.5)
    g = np.array([[0.5, 1.0], [0.5, 0.0]])
    sys = FiniteSystem(
        p_x=np.array([0.5, 0.5]), c=np.full((2, 2), 0.5), f=f, g=g
    )
    with pytest.raises(DegenerateSupportError):
        check_clamp_condition(sys, [1])


def test_necessity_full_rank_pair():
    # Subset larger than the hidden space keeps the restricted decoder
    # rows full rank for a generic pair.
    sys, _ = make_system_with_pair(RngStream(12), 4, 2)
    assert check_necessity(sys, [0, 1, 2])


def test_necessity_warns_on_dependent_columns():
    rng = RngStream(13)
    f = random_conditional(rng, 2, 4)
    # Rows 0 and 1 of the decoder coincide, so restricting to them drops rank.
    g = np.array([[0.2, 0.3], [0.2, 0.3], [0.3, 0.2], [0.3, 0.2]])
    sys = FiniteSystem(p_x=np.full(4, 0.25), c=random_conditional(rng, 4, 4), f=f, g=g)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = check_necessity(sys, [0, 1])
    assert result is False
    assert len(caught) == 1


def test_local_ergodicity_connected_path():
    pts = np.arange(8) * 0.5
    assert check_local_ergodicity(pts, 0.6)


def test_local_ergodicity_split_clusters():
    pts = np.concatenate([np.arange(4) * 0.1, 10.0 + np.arange(4) * 0.1])
    assert not check_local_ergodicity(pts, 1.0)


def test_local_ergodicity_errors():
    with pytest.raises(ParameterError):
        check_local_ergodicity([0.0, 1.0], 0.0)
    with pytest.raises(ParameterError):
        check_local_ergodicity([], 1.0)


@pytest.mark.parametrize("seed", range(8))
def test_posterior_minimizes_expected_nll(seed):
    # The gap over the Bayes posterior equals the averaged KL divergence,
    # hence is nonnegative and zero only at the posterior.
    rng = RngStream(4000 + seed)
    sys = random_finite_system(rng, 5)
    candidate = random_conditional(rng, 5, 5)
    gap, expected_kl = posterior_nll_gap_vs_kl(sys, candidate)
    assert gap == pytest.approx(expected_kl, rel=1e-9, abs=1e-12)
    assert gap >= 0.0
    zero_gap, zero_kl = posterior_nll_gap_vs_kl(sys, bayes_posterior(sys))
    assert abs(zero_gap) < 1e-12
    assert abs(zero_kl) < 1e-12


def test_propagate_slice_joint_conserves_mass_and_fixes_stationary():
    f, g, joint = random_compatible_pair(RngStream(14), 4, 3)
    pi_x = joint.sum(axis=1)
    joints = propagate_slice_joint(f, g, pi_x, steps=5)
    for j in joints:
        assert j.sum() == pytest.approx(1.0, abs=1e-12)
        assert total_variation(j.sum(axis=1), pi_x) < 1e-10


def test_propagate_slice_joint_converges_from_any_start():
    f, g, joint = random_compatible_pair(RngStream(15), 4, 3)
    pi_x = joint.sum(axis=1)
    start = np.array([1.0, 0.0, 0.0, 0.0])
    joints = propagate_slice_joint(f, g, start, steps=200)
    assert total_variation(joints[-1].sum(axis=1), pi_x) < 1e-8


def test_random_finite_system_properties():
    rng = RngStream(16)
    sys = random_finite_system(rng, 6, 4)
    assert sys.p_x.shape == (6,)
    assert sys.c.shape == (4, 6)
    assert np.all(sys.c > 0)
    assert sys.p_x.sum() == pytest.approx(1.0)
    assert sys.n_x == 6
    assert sys.n_h is None


@given(seed=st.integers(min_value=0, max_value=10_000))
@settings(max_examples=25, deadline=None)
def test_total_variation_bounds_property(seed):
    rng = RngStream(seed)
    p = rng.uniform(6) + 1e-3
    p /= p.sum()
    q = rng.uniform(6) + 1e-3
    q /= q.sum()
    tv = total_variation(p, q)
    assert 0.0 <= tv <= 1.0
    assert tv == pytest.approx(total_variation(q, p))


@given(seed=st.integers(min_value=0, max_value=10_000))
@settings(max_examples=20, deadline=None)
def test_stationary_is_fixed_point_property(seed):
    k = random_transition(RngStream(seed), 5)
    pi = stationary(k)
    assert np.all(pi >= 0)
    assert pi.sum() == pytest.approx(1.0, abs=1e-10)
    assert np.max(np.abs(k @ pi - pi)) < 1e-10
