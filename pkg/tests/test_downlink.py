"""Downlink precoding-placement primitives: selection plumbing, power and
fronthaul costs, tangent surrogates, clustering, and rank reduction.

Hand-derived scalar cases anchor every cost; surrogate tangency/dominance
and gradient correctness are checked on random draws.
"""

import math
import warnings

import numpy as np
import pytest

from cran_split.downlink.costs import (
    AntennaLayout,
    ClusterAssignment,
    cluster_assign,
    downlink_rate,
    fronthaul_cost_alt,
    fronthaul_cost_conventional,
    fronthaul_upper_bound,
    logdet_linearize,
    omega_diag,
    rank_reduce,
    rate_lower_bound,
    rrh_power,
    selection_matrices,
)
from cran_split.downlink import solvers as dls
from cran_split.optim import directional_gradient_check

LN2 = math.log(2.0)


def _rand_psd(rng, n, scale=1.0):
    b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (b @ b.conj().T) / n


# ---------------------------------------------------------------------------
# selection matrices


def test_selectors_single_cell_are_identities():
    layout = AntennaLayout(n_t=(3,), n_r=(2,))
    sel = selection_matrices(layout, ClusterAssignment.full(1, 1))
    assert np.array_equal(sel.rows[0], np.eye(3))
    assert np.array_equal(sel.cols[0], np.eye(2))
    assert np.array_equal(sel.embed[0], np.eye(3))


def test_selectors_orthonormal_columns():
    layout = AntennaLayout(n_t=(2, 3), n_r=(1, 2))
    sel = selection_matrices(layout, ClusterAssignment.full(2, 2))
    for d in sel.rows + sel.cols:
        assert np.allclose(d.T @ d, np.eye(d.shape[1]), atol=1e-15)


def test_selectors_cluster_embedding_structure():
    # RRH0 serves UE0 only; RRH1 serves both UEs
    layout = AntennaLayout(n_t=(2, 3), n_r=(1, 1))
    a = ClusterAssignment(served=((0,), (0, 1)), n_ue=2)
    sel = selection_matrices(layout, a)
    assert sel.embed[0].shape == (5, 5)   # UE0 cluster = both RRHs
    assert sel.embed[1].shape == (5, 3)   # UE1 cluster = RRH1 only
    # embedding a tagged covariance lands on RRH1's antenna block
    v_small = np.arange(9.0).reshape(3, 3)
    v_full = sel.embed[1] @ v_small @ sel.embed[1].T
    assert np.array_equal(v_full[2:, 2:], v_small)
    assert np.all(v_full[:2, :] == 0.0) and np.all(v_full[:, :2] == 0.0)


def test_empty_cluster_warns():
    layout = AntennaLayout(n_t=(2,), n_r=(1, 1))
    a = ClusterAssignment(served=((0,),), n_ue=2)
    with pytest.warns(UserWarning, match="empty serving cluster"):
        selection_matrices(layout, a)


# ---------------------------------------------------------------------------
# per-RRH power


def test_rrh_power_zero_point():
    layout = AntennaLayout(n_t=(2,), n_r=(1,))
    v = [np.zeros((2, 2), dtype=complex)]
    assert rrh_power(v, 0.0, selection_matrices(
        layout, ClusterAssignment.full(1, 1)).rows[0]) == 0.0


def test_rrh_power_identity_plus_noise():
    # tr(I_2) + 2 * 0.5 = 3
    layout = AntennaLayout(n_t=(2,), n_r=(1,))
    d = selection_matrices(layout, ClusterAssignment.full(1, 1)).rows[0]
    assert abs(rrh_power([np.eye(2, dtype=complex)], 0.5, d) - 3.0) < 1e-12


def test_rrh_power_additive_in_covariances():
    rng = np.random.default_rng(1)
    layout = AntennaLayout(n_t=(2, 2), n_r=(1, 1))
    d = selection_matrices(layout, ClusterAssignment.full(2, 2)).rows[1]
    v1, v2 = _rand_psd(rng, 4), _rand_psd(rng, 4)
    p12 = rrh_power([v1, v2], 0.3, d)
    p1 = rrh_power([v1], 0.3, d)
    p2 = rrh_power([v2], 0.0, d)
    assert abs(p12 - (p1 + p2)) < 1e-12


# ---------------------------------------------------------------------------
# achievable rates


def _scalar_layout():
    return AntennaLayout(n_t=(1,), n_r=(1, 1))


def test_downlink_rate_scalar_reference():
    layout = _scalar_layout()
    h = [np.ones((1, 1), dtype=complex), np.ones((1, 1), dtype=complex)]
    v = [np.ones((1, 1), dtype=complex), np.ones((1, 1), dtype=complex)]
    r = downlink_rate(h, v, np.array([0.5]), layout)
    want = math.log2(3.5) - math.log2(2.5)
    assert abs(r[0] - want) < 1e-12
    assert abs(r[1] - want) < 1e-12
    assert abs(want - 0.4854268271702417) < 1e-12


def test_downlink_rate_zero_covariances():
    layout = AntennaLayout(n_t=(2, 2), n_r=(1, 2))
    rng = np.random.default_rng(2)
    h = [rng.standard_normal((layout.n_r[j], 4)) for j in range(2)]
    v = [np.zeros((4, 4), dtype=complex) for _ in range(2)]
    assert np.all(downlink_rate(h, v, np.array([0.1, 0.2]), layout) == 0.0)


def test_downlink_rate_single_ue_clean_fronthaul():
    layout = AntennaLayout(n_t=(1,), n_r=(1,))
    h = [np.array([[2.0]], dtype=complex)]
    v = [np.array([[0.75]], dtype=complex)]
    r = downlink_rate(h, v, np.array([0.0]), layout)
    assert abs(r[0] - math.log2(1.0 + 4.0 * 0.75)) < 1e-12


# ---------------------------------------------------------------------------
# fronthaul costs


def test_fronthaul_cost_zero_covariance_is_free():
    layout = AntennaLayout(n_t=(2,), n_r=(1,))
    v = [np.zeros((2, 2), dtype=complex)]
    for s in (0.1, 1.0, 7.3):
        assert abs(fronthaul_cost_conventional(v, s, 0, layout)) < 1e-12


def test_fronthaul_cost_scalar_reference():
    layout = AntennaLayout(n_t=(1,), n_r=(1,))
    v = [np.ones((1, 1), dtype=complex)]
    assert abs(fronthaul_cost_conventional(v, 1.0, 0, layout) - 1.0) < 1e-12
    assert abs(fronthaul_cost_alt(v, 1.0, 0, layout, T=10) - 0.1) < 1e-12


def test_fronthaul_cost_decreasing_in_quantization_noise():
    layout = AntennaLayout(n_t=(2,), n_r=(1,))
    v = [_rand_psd(np.random.default_rng(3), 2)]
    costs = [fronthaul_cost_conventional(v, s, 0, layout)
             for s in (0.05, 0.2, 1.0, 5.0)]
    assert all(a > b for a, b in zip(costs, costs[1:]))


def test_fronthaul_cost_unquantized_is_infinite():
    layout = AntennaLayout(n_t=(1,), n_r=(1,))
    v = [np.ones((1, 1), dtype=complex)]
    assert fronthaul_cost_conventional(v, 0.0, 0, layout) == math.inf


def test_fronthaul_cost_alt_is_conventional_over_block_length():
    rng = np.random.default_rng(4)
    layout = AntennaLayout(n_t=(2, 2), n_r=(1, 1))
    v = [_rand_psd(rng, 4), _rand_psd(rng, 4)]
    for T in (5, 20):
        for i in range(2):
            conv = fronthaul_cost_conventional(v, 0.4, i, layout)
            assert abs(fronthaul_cost_alt(v, 0.4, i, layout, T) - conv / T) \
                < 1e-12


def test_conventional_rate_unitary_invariance():
    # rotating a covariance by a unitary that commutes with the channel
    # rows leaves the conventional rate untouched
    rng = np.random.default_rng(5)
    layout = AntennaLayout(n_t=(2,), n_r=(1, 1))
    h_row = rng.standard_normal((1, 2)) + 1j * rng.standard_normal((1, 2))
    h = [h_row, h_row * 0.5]
    v = [_rand_psd(rng, 2), _rand_psd(rng, 2)]
    base = downlink_rate(h, v, np.array([0.2]), layout)
    # unitary fixing h_row: reflection across the channel direction
    u_vec = h_row.conj().T / np.linalg.norm(h_row)
    q = 2.0 * (u_vec @ u_vec.conj().T) - np.eye(2)
    h_rot = [hh @ q.conj().T for hh in h]
    v_rot = [q @ vv @ q.conj().T for vv in v]
    rot = downlink_rate(h_rot, v_rot, np.array([0.2]), layout)
    assert np.allclose(base, rot, atol=1e-10)


# ---------------------------------------------------------------------------
# tangent surrogates


def test_logdet_linearize_trivial_points():
    a = np.diag([2.0, 3.0]).astype(complex)
    assert abs(logdet_linearize(a, a) - math.log2(6.0)) < 1e-12
    b = np.diag([1.5, 0.5]).astype(complex)
    assert abs(logdet_linearize(np.eye(2, dtype=complex), b)
               - np.trace(b - np.eye(2)).real / LN2) < 1e-12


def test_logdet_linearize_reference_point():
    a = np.diag([1.0, 2.0]).astype(complex)
    b = np.diag([2.0, 2.0]).astype(complex)
    want = 1.0 + 1.0 / LN2
    assert abs(logdet_linearize(a, b) - want) < 1e-12
    assert abs(want - 2.4426950408889634) < 1e-12


def test_logdet_linearize_dominates_logdet():
    rng = np.random.default_rng(6)
    for _ in range(50):
        a = _rand_psd(rng, 3) + 0.1 * np.eye(3)
        b = _rand_psd(rng, 3) + 0.1 * np.eye(3)
        lin = logdet_linearize(a, b)
        true = float(np.linalg.slogdet(b)[1]) / LN2
        assert lin >= true - 1e-9


def _random_instance(rng, layout):
    h = [(rng.standard_normal((layout.n_r[j], layout.total_tx))
          + 1j * rng.standard_normal((layout.n_r[j], layout.total_tx)))
         for j in range(layout.n_ue)]
    v = [_rand_psd(rng, layout.total_tx) for _ in range(layout.n_ue)]
    s = rng.uniform(0.05, 1.0, size=layout.n_rrh)
    return h, v, s


def test_rate_lower_bound_tangent_and_dominated():
    rng = np.random.default_rng(7)
    layout = AntennaLayout(n_t=(2, 2), n_r=(1, 2))
    for _ in range(100):
        h, v_a, s_a = _random_instance(rng, layout)
        true_a = downlink_rate(h, v_a, s_a, layout)
        for j in range(layout.n_ue):
            at_anchor = rate_lower_bound(h, v_a, s_a, j, v_a, s_a, layout)
            assert abs(at_anchor - true_a[j]) < 1e-10
        v_q, s_q = _random_instance(rng, layout)[1:]
        true_q = downlink_rate(h, v_q, s_q, layout)
        for j in range(layout.n_ue):
            lb = rate_lower_bound(h, v_q, s_q, j, v_a, s_a, layout)
            assert lb <= true_q[j] + 1e-9


def test_rate_lower_bound_scalar_hand_check():
    layout = _scalar_layout()
    h = [np.ones((1, 1), dtype=complex), np.ones((1, 1), dtype=complex)]
    anchor = [np.array([[1.0 + 0j]]), np.array([[1.0 + 0j]])]
    query = [np.array([[1.0 + 0j]]), np.array([[2.0 + 0j]])]
    s = np.array([0.5])
    got = rate_lower_bound(h, query, s, 0, anchor, s, layout)
    want = math.log2(4.5) - (math.log2(2.5) + 1.0 / (2.5 * LN2))
    assert abs(got - want) < 1e-12


def test_fronthaul_upper_bound_tangent_and_dominating():
    rng = np.random.default_rng(8)
    layout = AntennaLayout(n_t=(2, 3), n_r=(1, 1))
    for _ in range(100):
        _, v_a, s_a = _random_instance(rng, layout)
        for i in range(layout.n_rrh):
            at_anchor = fronthaul_upper_bound(v_a, float(s_a[i]), v_a,
                                              float(s_a[i]), i, layout)
            true_a = fronthaul_cost_conventional(v_a, float(s_a[i]), i,
                                                 layout)
            assert abs(at_anchor - true_a) < 1e-10
        _, v_q, s_q = _random_instance(rng, layout)
        for i in range(layout.n_rrh):
            ub = fronthaul_upper_bound(v_q, float(s_q[i]), v_a,
                                       float(s_a[i]), i, layout)
            true_q = fronthaul_cost_conventional(v_q, float(s_q[i]), i,
                                                 layout)
            assert ub >= true_q - 1e-9


def test_fronthaul_upper_bound_scalar_hand_check():
    layout = AntennaLayout(n_t=(1,), n_r=(1,))
    anchor = [np.array([[1.0 + 0j]])]
    query = [np.array([[2.0 + 0j]])]
    got = fronthaul_upper_bound(query, 0.5, anchor, 0.5, 0, layout)
    want = math.log2(1.5) + 1.0 / (1.5 * LN2) + 1.0
    assert abs(got - want) < 1e-12


# ---------------------------------------------------------------------------
# clustering


def test_cluster_assign_full_when_budget_covers_everyone():
    norms = np.array([[3.0, 1.0], [1.0, 3.0]])
    a = cluster_assign(norms, n_c=2)
    assert a.served == ((0, 1), (0, 1))
    assert a.unserved() == ()


def test_cluster_assign_strongest_user_wins():
    # per-RRH norms: RRH0 hears UE0 at 3, UE1 at 1; RRH1 the reverse
    norms = np.array([[3.0, 1.0], [1.0, 3.0]])
    a = cluster_assign(norms, n_c=1)
    assert a.served == ((0,), (1,))


def test_cluster_assign_tie_breaks_to_lower_index():
    norms = np.ones((2, 2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # UE1 goes unserved
        a = cluster_assign(norms, n_c=1)
    assert a.served == ((0,), (0,))
    assert a.unserved() == (1,)


def test_cluster_assign_warns_on_unserved_users():
    norms = np.array([[5.0, 4.0], [1.0, 2.0]])
    with pytest.warns(UserWarning, match="served by no RRH"):
        cluster_assign(norms, n_c=1)


# ---------------------------------------------------------------------------
# rank reduction


def test_rank_reduce_binding_power_and_rate_loss():
    rng = np.random.default_rng(9)
    layout = AntennaLayout(n_t=(2, 2), n_r=(1, 1))
    sel = selection_matrices(layout, ClusterAssignment.full(2, 2))
    p_max = np.array([4.0, 4.0])
    sigma2 = np.array([0.1, 0.1])
    h, v, _ = _random_instance(rng, layout)
    # scale covariances to sit inside the power budget
    scale = min(float(p_max[i] - layout.n_t[i] * sigma2[i])
                / rrh_power(v, 0.0, sel.rows[i]) for i in range(2))
    v = [0.9 * scale * vv for vv in v]
    w_list, gamma = rank_reduce(v, m_list=(1, 1), sigma2=sigma2,
                                p_max=p_max, layout=layout)
    assert gamma > 0.0
    w_cov = [w @ w.conj().T for w in w_list]
    powers = [rrh_power(w_cov, float(sigma2[i]), sel.rows[i])
              for i in range(2)]
    assert max(powers) == pytest.approx(float(p_max.max()), abs=1e-8)
    assert all(p <= p_max[i] + 1e-8 for i, p in enumerate(powers))
    # single-stream extraction keeps most of the relaxed-covariance rate
    r_v = downlink_rate(h, v, sigma2, layout).sum()
    r_w = downlink_rate(h, w_cov, sigma2, layout).sum()
    assert r_w >= 0.6 * r_v


def test_rank_reduce_rank_and_eigen_structure():
    rng = np.random.default_rng(10)
    layout = AntennaLayout(n_t=(3,), n_r=(2,))
    v = [_rand_psd(rng, 3) + 0.2 * np.eye(3)]
    w_list, gamma = rank_reduce(v, m_list=(1,), sigma2=(0.0,),
                                p_max=(5.0,), layout=layout)
    w = w_list[0]
    assert w.shape == (3, 1)
    # the kept column aligns with the dominant eigenvector
    lam, vec = np.linalg.eigh(v[0])
    top = vec[:, -1]
    cos = abs(np.vdot(top, w[:, 0])) / np.linalg.norm(w[:, 0])
    assert abs(cos - 1.0) < 1e-9
    assert abs(np.linalg.norm(w[:, 0]) ** 2 - 5.0) < 1e-8  # binding budget


def test_rank_reduce_rejects_impossible_budget():
    layout = AntennaLayout(n_t=(2,), n_r=(1,))
    with pytest.raises(ValueError):
        rank_reduce([np.eye(2, dtype=complex)], m_list=(1,), sigma2=(3.0,),
                    p_max=(1.0,), layout=layout)


# ---------------------------------------------------------------------------
# surrogate gradients (analytic vs central differences)


def _subproblem_at_random_point(approach, rng):
    layout = AntennaLayout(n_t=(2, 2), n_r=(1, 2))
    problem = dls.DownlinkProblem(layout=layout, p_max=(10.0, 10.0),
                                  c_max=(4.0, 4.0), T=10)
    assignment = ClusterAssignment.full(2, 2)
    emb = dls._Embedding(layout, assignment)
    h = [(rng.standard_normal((layout.n_r[j], 4))
          + 1j * rng.standard_normal((layout.n_r[j], 4))) / 2.0
         for j in range(2)]
    anchor_v = [_rand_psd(rng, 4, 0.5) + 0.2 * np.eye(4) for _ in range(2)]
    anchor_s = rng.uniform(0.3, 0.8, size=2)
    bank = dls._RateSurrogateBank(emb, use_omega=True)
    bank.add_sample(h, anchor_v, anchor_s)
    fsur = dls._FronthaulSurrogate(emb, anchor_v, anchor_s)
    r0 = np.zeros(2)
    sub, r_off, has_sigma, has_r = dls._build_subproblem(
        approach, emb, problem, bank, fsur, anchor_v, anchor_s, r0)
    blocks = [_rand_psd(rng, 4, 0.5) + 0.3 * np.eye(4) for _ in range(2)]
    scalars = np.abs(rng.uniform(0.4, 1.0, size=sub.n_scalars))
    return sub, blocks, scalars


@pytest.mark.parametrize("approach", [dls.CONVENTIONAL, dls.ALT_INSTANT])
def test_surrogate_gradients_match_finite_differences(approach):
    rng = np.random.default_rng(123)
    worst = 0.0
    for trial in range(10):
        sub, blocks, scalars = _subproblem_at_random_point(approach, rng)

        def wrap(evaluator):
            def fn(b, s):
                return evaluator(b, s, sub.precompute(b, s))
            return fn

        worst = max(worst, directional_gradient_check(
            wrap(sub.objective), blocks, scalars, n_dirs=2,
            rng=rng.integers(2 ** 31)))
        for con in sub.constraints:
            worst = max(worst, directional_gradient_check(
                wrap(con), blocks, scalars, n_dirs=2,
                rng=rng.integers(2 ** 31)))
    assert worst < 1e-4
