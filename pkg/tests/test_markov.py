"""Closed-form chain metrics: frozen defaults, algebraic identities,
fixed points and the brute-force oracle."""
import math
from dataclasses import replace

import numpy as np
import pytest

from nanoflow import markov as mk
from nanoflow.params import NetworkParams, ValidationError, VolumeSet

# frozen outputs at the default point (r=1mm, D=6mm, V_t=5L, T=60s,
# t_f=64us, f=1Hz, eta=0.1, n=1e4, k=2), quadrature volumes
P_TX = 3.9060189320851527e-07
P_CX = 3.946741192071377e-07
P_S = 3.903217300085493e-07
P_S_RND = 2.3419303800512962e-05
TH_TWO_ROUND = 0.00039044777857484466
TH_RAW = 0.0007096758727428171
TH_EFF = 0.00035483793640751895
QOD_M60 = 0.7212445391019611
K10_TH_EFF = 0.0018463776519402136
K10_TAU = 359.99064489592126
QOD_N6246_K11 = 0.9875426733103508


def test_link_probabilities_frozen(defaults, default_volumes):
    lp = mk.link_probabilities(defaults, default_volumes)
    assert lp.p_tx == pytest.approx(P_TX, rel=1e-12)
    assert lp.p_cx == pytest.approx(P_CX, rel=1e-12)
    assert lp.p_rx == 0.1
    assert lp.p_frame == pytest.approx(2 * 0.1 / 1.1, rel=1e-12)
    assert lp.p_empty == pytest.approx(1.0 - lp.p_frame, abs=1e-15)
    assert lp.p_s == pytest.approx(P_S, rel=1e-12)
    assert lp.p_s_rnd == pytest.approx(P_S_RND, rel=1e-12)
    assert not lp.clamped


def test_throughputs_frozen(defaults, default_volumes):
    assert mk.two_round_throughput(defaults, default_volumes) == pytest.approx(
        TH_TWO_ROUND, rel=1e-12)
    assert mk.raw_throughput(defaults, default_volumes) == pytest.approx(
        TH_RAW, rel=1e-12)
    assert mk.effective_throughput(defaults, default_volumes) == pytest.approx(
        TH_EFF, rel=1e-12)
    p10 = replace(defaults, k=10)
    assert mk.effective_throughput(p10, default_volumes) == pytest.approx(
        K10_TH_EFF, rel=1e-12)


def test_effective_never_exceeds_raw(defaults, default_volumes):
    for k in (2, 5, 10, 100):
        p = replace(defaults, k=k)
        assert mk.effective_throughput(p, default_volumes) <= \
            mk.raw_throughput(p, default_volumes)


def test_qod_frozen(defaults, default_volumes):
    assert mk.qod(defaults, default_volumes, 60) == pytest.approx(
        QOD_M60, rel=1e-12)
    p = replace(defaults, n=6246, k=11)
    assert mk.qod(p, default_volumes, 60) == pytest.approx(
        QOD_N6246_K11, rel=1e-12)


def test_average_delay_frozen(defaults, default_volumes):
    tau, dist = mk.average_delay(defaults, default_volumes)
    # k = 2 leaves a single possible delay: exactly two rounds
    assert tau == 120.0
    assert dist.weights == (1.0,)
    p10 = replace(defaults, k=10)
    tau10, dist10 = mk.average_delay(p10, default_volumes)
    assert tau10 == pytest.approx(K10_TAU, rel=1e-12)
    assert len(dist10.weights) == 9
    assert sum(dist10.weights) == pytest.approx(1.0, abs=1e-12)


def test_analyze_bundles_metrics(defaults, default_volumes):
    m = mk.analyze(defaults, default_volumes, m=60)
    assert m.th_eff == pytest.approx(TH_EFF, rel=1e-12)
    assert m.qod == pytest.approx(QOD_M60, rel=1e-12)
    assert m.tau_av == 120.0
    assert m.m == 60


# --- storage chain ---

def test_stationary_examples():
    assert mk.stationary_storage(1.0, 3).pi == (0.0, 1 / 3, 1 / 3, 1 / 3)
    assert mk.stationary_storage(0.5, 2).pi == (1 / 3, 1 / 3, 1 / 3)
    # p_rx = 1: a node always holds a frame
    assert 1.0 - mk.stationary_storage(1.0, 2).pi[0] == 1.0


def test_p_frame_exact_arithmetic():
    # k p_rx / (1 + p_rx (k-1)) = 1.1 / 2.0 at p_rx = 0.1, k = 11
    assert 1.0 - mk.stationary_storage(0.1, 11).pi[0] == 0.55


def test_stationary_validation():
    with pytest.raises(ValidationError):
        mk.stationary_storage(0.0, 2)
    with pytest.raises(ValidationError):
        mk.stationary_storage(1.2, 2)
    with pytest.raises(ValidationError):
        mk.stationary_storage(0.5, 1)


@pytest.mark.parametrize("p_rx,k", [(0.1, 2), (0.5, 5), (0.9, 11), (1.0, 3)])
def test_stationary_is_fixed_point(p_rx, k):
    t = mk.storage_transition_matrix(p_rx, k)
    pi = np.array(mk.stationary_storage(p_rx, k).pi)
    assert np.abs(pi @ t - pi).max() < 1e-12
    assert np.abs(t.sum(axis=1) - 1.0).max() < 1e-15


# --- throughput identities ---

def test_two_round_n1_exact(defaults, default_volumes):
    p1 = replace(defaults, n=1)
    lp = mk.link_probabilities(p1, default_volumes)
    # exponent n-1 = 0: no collision term survives
    assert mk.two_round_throughput(p1, default_volumes) == \
        p1.f * lp.p_tx * p1.eta


def test_two_round_linear_in_small_eta(defaults, default_volumes):
    lo = mk.two_round_throughput(replace(defaults, eta=1e-9), default_volumes)
    hi = mk.two_round_throughput(replace(defaults, eta=2e-9), default_volumes)
    assert hi / lo == pytest.approx(2.0, rel=1e-4)


def test_raw_equals_two_round_at_p_frame(defaults, default_volumes):
    # k = 2: Th_raw is the two-round form evaluated at p_rx -> p_frame(2)
    lp = mk.link_probabilities(defaults, default_volumes)
    manual = defaults.n * defaults.f * lp.p_tx * lp.p_frame * \
        (1.0 - lp.p_cx * lp.p_frame) ** (defaults.n - 1)
    assert mk.raw_throughput(defaults, default_volumes) == pytest.approx(
        manual, rel=1e-11)
    # as eta -> 0, p_frame(2)/eta -> 2: the two counters separate by
    # exactly that factor (they agree only in the both-vanish limit)
    p = replace(defaults, eta=1e-8)
    ratio = mk.raw_throughput(p, default_volumes) / \
        mk.two_round_throughput(p, default_volumes)
    assert ratio == pytest.approx(2.0, rel=1e-6)


def test_two_round_over_effective_identity(defaults, default_volumes):
    # two_round / th_eff at k = 2 collapses to (1+eta) times the ratio of
    # collision factors
    lp = mk.link_probabilities(defaults, default_volumes)
    ratio = mk.two_round_throughput(defaults, default_volumes) / \
        mk.effective_throughput(defaults, default_volumes)
    pred = (1.0 + defaults.eta) * (
        (1.0 - lp.p_cx * defaults.eta) /
        (1.0 - lp.p_cx * lp.p_frame)) ** (defaults.n - 1)
    assert ratio == pytest.approx(pred, rel=1e-8)


def test_effective_matches_quotient_form(defaults, default_volumes):
    # the implementation uses the stable form; the raw quotient must agree
    lp = mk.link_probabilities(defaults, default_volumes)
    p_s, k, eta = lp.p_s, defaults.k, defaults.eta
    quot = defaults.n * defaults.f * eta * ((1 - p_s) ** k + p_s - 1) / \
        ((1 + eta * (k - 1)) * (p_s - 1))
    assert mk.effective_throughput(defaults, default_volumes) == \
        pytest.approx(quot, rel=1e-9)


# --- QoD recursion ---

def test_qod_m0_is_zero(defaults, default_volumes):
    assert mk.qod(defaults, default_volumes, 0) == 0.0


def test_qod_recursion_conserves_mass():
    st = mk.qod_recursion(0.1, 2.3e-5, 11, 10_000)
    assert sum(st.pi_m) == pytest.approx(1.0, abs=1e-9)
    assert st.pi_m[-1] > 0


def test_qod_monotone_in_m(defaults, default_volumes):
    vals = [mk.qod(defaults, default_volumes, m) for m in (0, 1, 5, 20, 60, 200)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert all(0.0 <= v <= 1.0 for v in vals)


def test_qod_monotone_in_n(defaults, default_volumes):
    vals = [mk.qod(replace(defaults, n=n), default_volumes, 60)
            for n in (10, 100, 1000, 10_000, 100_000)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


# --- average delay ---

def test_delay_support_and_normalization(defaults, default_volumes):
    for k in (2, 3, 10, 50):
        tau, dist = mk.average_delay(replace(defaults, k=k), default_volumes)
        w = np.array(dist.weights)
        assert w.size == k - 1 and (w >= 0).all()
        assert float(w.sum()) == pytest.approx(1.0, abs=1e-12)
        assert 2 * defaults.T <= tau <= k * defaults.T + 1e-9


def test_delay_k2_is_two_rounds_any_n(defaults, default_volumes):
    for n in (1, 100, 10_000, 10**6):
        tau, _ = mk.average_delay(replace(defaults, n=n), default_volumes)
        assert tau == 120.0


def test_delay_clamped_saturated_link(defaults, default_volumes):
    # tiny V_t at n = 2 pushes T f p_tx above 1: clamped flag, instant delay
    pc = replace(defaults, V_t=5e-9, n=2, k=5)
    lp = mk.link_probabilities(pc, default_volumes)
    assert lp.clamped and lp.p_s_rnd == 1.0
    tau, dist = mk.average_delay(pc, default_volumes)
    assert tau == 2 * pc.T
    assert dist.weights[0] == 1.0


def test_delay_n_independence(defaults, default_volumes):
    taus = [mk.average_delay(replace(defaults, n=n, k=10), default_volumes)[0]
            for n in (100, 1000, 10_000, 100_000)]
    t = np.array(taus)
    assert (t.max() - t.min()) / t.max() < 1e-4


def test_delay_undefined_without_transmissions(defaults):
    with pytest.raises(ValidationError):
        mk.average_delay(defaults, VolumeSet(0.0, 0.0, 0.0))


def test_delay_weights_match_stationary_telescoping():
    # stationary Q-masses telescope into the delay weights
    for (p_rx, p, k) in [(0.3, 0.15, 5), (0.1, 0.5, 3), (0.7, 0.01, 11)]:
        pi = mk.delay_stationary(p_rx, p, k)
        q = pi[k + 1:]
        w_tel = np.diff(np.concatenate([[0.0], q])) / q[-1]
        i = np.arange(2, k + 1, dtype=float)
        w_closed = p * (1 - p) ** (i - 2) / (1 - (1 - p) ** (k - 1))
        assert np.abs(w_tel - w_closed).max() < 1e-12


@pytest.mark.parametrize("p_rx,p,k", [(0.3, 0.15, 5), (0.1, 0.5, 3),
                                      (0.9, 0.99, 4), (0.5, 0.2, 11)])
def test_delay_stationary_is_fixed_point(p_rx, p, k):
    td = mk.delay_transition_matrix(p_rx, p, k)
    pi = mk.delay_stationary(p_rx, p, k)
    assert np.abs(td.sum(axis=1) - 1.0).max() < 1e-15
    assert np.abs(pi @ td - pi).max() < 1e-12
    assert pi.sum() == pytest.approx(1.0, abs=1e-12)


# --- brute-force oracle ---

def test_chain_oracle_validation():
    eye = np.eye(3)
    res = mk.chain_oracle(eye, [0.0, 1.0, 0.0], steps=50, replications=100,
                          seed=0)
    assert res.final_distribution == (0.0, 1.0, 0.0)
    assert res.occupancy == (0.0, 1.0, 0.0)
    with pytest.raises(ValidationError):
        mk.chain_oracle(np.ones((2, 3)), [1.0, 0.0], 10)
    with pytest.raises(ValidationError):
        mk.chain_oracle(np.full((2, 2), 0.7), [1.0, 0.0], 10)  # rows sum 1.4
    with pytest.raises(ValidationError):
        mk.chain_oracle(eye, [0.5, 0.0, 0.0], 10)  # start mass != 1
    with pytest.raises(ValidationError):
        mk.chain_oracle(eye, [0.0, 1.0, 0.0], 0)


def test_chain_oracle_deterministic_per_seed():
    t = mk.storage_transition_matrix(0.3, 3)
    a = mk.chain_oracle(t, [1.0, 0, 0, 0], steps=200, replications=500, seed=4)
    b = mk.chain_oracle(t, [1.0, 0, 0, 0], steps=200, replications=500, seed=4)
    assert a == b


def test_chain_oracle_occupancy_long_run():
    # brute-force pin: one chain, 1e7 steps (about a minute; the iid
    # 3-sigma band 4.5e-4 is conservative because successive storage
    # states are anticorrelated)
    t1 = mk.storage_transition_matrix(0.5, 2)
    res = mk.chain_oracle(t1, [1.0, 0.0, 0.0], steps=10**7, replications=1,
                          seed=7)
    occ = np.array(res.occupancy)
    assert np.abs(occ - 1 / 3).max() < 3 * math.sqrt((1 / 3) * (2 / 3) / 10**7)


def test_chain_oracle_confirms_p_frame():
    # empirical holding fraction at p_rx = 0.1, k = 11 vs the exact 0.55
    t = mk.storage_transition_matrix(0.1, 11)
    start = np.zeros(12)
    start[0] = 1.0
    res = mk.chain_oracle(t, start, steps=200, replications=200_000, seed=3)
    emp = 1.0 - res.final_distribution[0]
    se = math.sqrt(0.55 * 0.45 / 200_000)
    assert abs(emp - 0.55) < 3 * se
