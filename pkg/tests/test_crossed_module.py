"""Crossed-module axioms, pushforwards, and exp/log behaviour."""

import numpy as np
import pytest
import scipy.linalg

from gerbe import crossed_module as cmod
from gerbe.crossed_module import (
    TAG_G, TAG_H, TAG_LG, TAG_LH,
    AlgebraElement, GroupElement,
    act, act_pushforward_g, act_pushforward_h, alg_act, bracket,
    check_axioms, corrupt_target, exp, get_crossed_module, inv, log, mul,
    target_group,
)
from gerbe.errors import TagMismatchError
from gerbe.linalg import fro

ALL = ["bs1", "heisenberg", "su2_ad"]


@pytest.fixture(params=ALL)
def cm(request):
    return get_crossed_module(request.param)


def test_axioms_all_instances(cm):
    rep = check_axioms(cm, n_samples=1000, seed=7)
    assert rep.max_residual() <= 1e-10
    assert rep.push_g_consistency <= 1e-8


def test_corrupted_target_is_flagged():
    for name in ("heisenberg", "su2_ad"):
        bad = corrupt_target(get_crossed_module(name))
        rep = check_axioms(bad, n_samples=50, seed=3)
        assert rep.eq_t_act > 1e-2


def test_axiom_report_deterministic(cm):
    a = check_axioms(cm, n_samples=64, seed=11).to_dict()
    b = check_axioms(cm, n_samples=64, seed=11).to_dict()
    assert a == b


def test_target_is_homomorphism(cm):
    rng = np.random.default_rng(0)
    for _ in range(20):
        h1 = cm.random_group(rng, TAG_H)
        h2 = cm.random_group(rng, TAG_H)
        assert fro(cm.t(h1 @ h2) - cm.t(h1) @ cm.t(h2)) < 1e-10


def test_bs1_target_and_action():
    cm = get_crossed_module("bs1")
    h = GroupElement(np.array([[np.exp(0.7j)]]), TAG_H, "bs1")
    assert np.allclose(target_group(cm, h).matrix, [[1.0]])
    g = GroupElement(np.array([[1.0]]), TAG_G, "bs1")
    assert np.allclose(act(cm, g, h).matrix, h.matrix)


def test_su2_target_matches_basis_conjugation():
    cm = get_crossed_module("su2_ad")
    rng = np.random.default_rng(5)
    for _ in range(50):
        h = cm.random_group(rng, TAG_H)
        R = cm.t(h)
        # brute-force adjoint action on the su(2) basis
        for b, eb in enumerate(cm.basis_h):
            image = h @ eb @ np.linalg.inv(h)
            recon = sum(R[a, b] * cm.basis_h[a] for a in range(3))
            assert fro(image - recon) < 1e-12
        assert fro(R @ R.T - np.eye(3)) < 1e-12
        assert abs(np.linalg.det(R) - 1) < 1e-12


def test_su2_lift_roundtrip():
    cm = get_crossed_module("su2_ad")
    rng = np.random.default_rng(9)
    for _ in range(200):
        R = cm.random_group(rng, TAG_G, scale=1.5)
        u = cm.t_section(R)
        assert fro(cm.t(u) - R) < 1e-10
        assert fro(u @ u.conj().T - np.eye(2)) < 1e-12


def test_act_is_group_automorphism(cm):
    rng = np.random.default_rng(1)
    for _ in range(20):
        g1 = cm.random_group(rng, TAG_G)
        g2 = cm.random_group(rng, TAG_G)
        h1 = cm.random_group(rng, TAG_H)
        h2 = cm.random_group(rng, TAG_H)
        assert fro(cm.act(g1, h1 @ h2) - cm.act(g1, h1) @ cm.act(g1, h2)) < 1e-10
        assert fro(cm.act(g1 @ g2, h1) - cm.act(g1, cm.act(g2, h1))) < 1e-10


def test_act_identity(cm):
    rng = np.random.default_rng(2)
    h = cm.random_group(rng, TAG_H)
    assert fro(cm.act(cm.identity(TAG_G), h) - h) < 1e-12


def test_act_forced_by_peiffer(cm):
    rng = np.random.default_rng(3)
    h0 = cm.random_group(rng, TAG_H)
    h = cm.random_group(rng, TAG_H)
    assert fro(cm.act(cm.t(h0), h) - h0 @ h @ np.linalg.inv(h0)) < 1e-10


@pytest.mark.parametrize("eps", [1e-4, 5e-5])
def test_push_g_matches_fd_at_second_order(cm, eps):
    rng = np.random.default_rng(4)
    g = cm.random_group(rng, TAG_G)
    Y = cm.random_algebra(rng, TAG_LH)
    fd = (cm.act(g, cm.exp(TAG_H, eps * Y)) - cm.act(g, cm.exp(TAG_H, -eps * Y))) / (2 * eps)
    assert fro(fd - cm.act_push_g(g, Y)) < 50 * eps**2


def test_push_g_fd_order_two():
    cm = get_crossed_module("su2_ad")
    rng = np.random.default_rng(8)
    g = cm.random_group(rng, TAG_G)
    Y = cm.random_algebra(rng, TAG_LH)

    def err(eps):
        fd = (cm.act(g, cm.exp(TAG_H, eps * Y)) - cm.act(g, cm.exp(TAG_H, -eps * Y))) / (2 * eps)
        return fro(fd - cm.act_push_g(g, Y))

    assert err(1e-3) / err(5e-4) >= 3.5


def test_push_h_matches_fd(cm):
    rng = np.random.default_rng(6)
    X = cm.random_algebra(rng, TAG_LG)
    h = cm.random_group(rng, TAG_H)
    eps = 1e-5
    fd = (cm.act(cm.exp(TAG_G, eps * X), h) - cm.act(cm.exp(TAG_G, -eps * X), h)) / (2 * eps)
    assert fro(fd - cm.act_push_h(X, h)) < 1e-8


def test_push_h_trivial_cases(cm):
    rng = np.random.default_rng(7)
    h = cm.random_group(rng, TAG_H)
    assert fro(cm.act_push_h(cm.zero(TAG_LG), h)) == 0.0
    # at h = identity the pushforward embeds the algebra action's tangent
    X = cm.random_algebra(rng, TAG_LG)
    Y = cm.random_algebra(rng, TAG_LH)
    at_identity = cm.act_push_h(X, cm.identity(TAG_H))
    eps = 1e-6
    via_exp = (cm.act_push_h(X, cm.exp(TAG_H, eps * Y)) - at_identity) / eps
    assert fro(via_exp - cm.alg_act(X, Y)) < 1e-5


def test_alg_act_bilinear_and_peiffer(cm):
    rng = np.random.default_rng(8)
    X = cm.random_algebra(rng, TAG_LG)
    Y1 = cm.random_algebra(rng, TAG_LH)
    Y2 = cm.random_algebra(rng, TAG_LH)
    assert fro(cm.alg_act(X, Y1 + Y2) - cm.alg_act(X, Y1) - cm.alg_act(X, Y2)) < 1e-12
    assert fro(cm.alg_act(cm.zero(TAG_LG), Y1)) == 0.0
    assert fro(cm.alg_act(cm.t_alg(Y1), Y2) - cm.bracket(Y1, Y2)) < 1e-12


def test_exp_log_roundtrip(cm):
    rng = np.random.default_rng(9)
    for tag, alg in ((TAG_G, TAG_LG), (TAG_H, TAG_LH)):
        for _ in range(50):
            X = cm.random_algebra(rng, alg, scale=0.4)
            g = cm.exp(tag, X)
            assert fro(cm.log(tag, g) - X) < 1e-10
            assert cm.manifold_residual(tag, g) < 1e-12


def test_heisenberg_exp_vs_scaling_and_squaring():
    cm = get_crossed_module("heisenberg")
    rng = np.random.default_rng(10)
    for _ in range(50):
        X = cm.random_algebra(rng, TAG_LH, scale=1.0)
        assert fro(cm.exp(TAG_H, X) - scipy.linalg.expm(X)) < 1e-13


def test_bracket_antisymmetry(cm):
    rng = np.random.default_rng(11)
    X = cm.random_algebra(rng, TAG_LH)
    assert fro(cm.bracket(X, X)) == 0.0


def test_exp_zero_is_identity(cm):
    assert fro(cm.exp(TAG_H, cm.zero(TAG_LH)) - cm.identity(TAG_H)) < 1e-14


def test_drift_control_long_products(cm):
    rng = np.random.default_rng(12)
    g = cm.identity(TAG_H)
    factor = [cm.random_group(rng, TAG_H, scale=0.05) for _ in range(16)]
    for k in range(10_000):
        g = g @ factor[k % 16]
        if (k + 1) % 64 == 0:
            g = cm.project(TAG_H, g)
    assert cm.manifold_residual(TAG_H, cm.project(TAG_H, g)) < 1e-9


def test_tag_mismatch_errors():
    cm = get_crossed_module("heisenberg")
    rng = np.random.default_rng(13)
    g = GroupElement(cm.random_group(rng, TAG_G), TAG_G, cm.name)
    with pytest.raises(TagMismatchError):
        target_group(cm, g)
    with pytest.raises(TagMismatchError):
        act(cm, g, g)
    X = AlgebraElement(cm.random_algebra(rng, TAG_LG), TAG_LG, cm.name)
    with pytest.raises(TagMismatchError):
        act_pushforward_g(cm, g, X)
    with pytest.raises(TagMismatchError):
        alg_act(cm, X, X)
    other = GroupElement(np.array([[1.0]]), TAG_H, "bs1")
    with pytest.raises(TagMismatchError):
        mul(cm, g, other)


def test_tagged_wrappers_roundtrip():
    cm = get_crossed_module("su2_ad")
    rng = np.random.default_rng(14)
    X = AlgebraElement(cm.random_algebra(rng, TAG_LH), TAG_LH, cm.name)
    g = exp(cm, X)
    assert g.group == TAG_H
    back = log(cm, g)
    assert back.algebra == TAG_LH
    assert fro(back.matrix - X.matrix) < 1e-10
    h = exp(cm, AlgebraElement(cm.random_algebra(rng, TAG_LH), TAG_LH, cm.name))
    assert fro(mul(cm, g, inv(cm, g)).matrix - np.eye(2)) < 1e-12
    Xg = AlgebraElement(cm.random_algebra(rng, TAG_LG), TAG_LG, cm.name)
    tangent = act_pushforward_h(cm, Xg, h)
    assert tangent.shape == (2, 2)
    Y1 = log(cm, g)
    Y2 = log(cm, h)
    br = bracket(cm, Y1, Y2)
    assert br.algebra == TAG_LH


def test_ker_t_samples_are_in_kernel(cm):
    rng = np.random.default_rng(15)
    for z in cm.ker_t_group_samples(rng, 10):
        assert fro(cm.t(z) - cm.identity(TAG_G)) < 1e-12


def test_exp_batch_matches_scalar(cm):
    rng = np.random.default_rng(16)
    stack = np.stack([cm.random_algebra(rng, TAG_LH, 0.3) for _ in range(5)])
    batched = cm.exp_batch(TAG_H, stack)
    for k in range(5):
        assert fro(batched[k] - cm.exp(TAG_H, stack[k])) < 1e-12
