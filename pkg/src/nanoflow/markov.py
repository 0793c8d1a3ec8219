"""Markov-chain performance metrics of the nano-network.

Three chains drive everything: the storage chain (is a frame held?), the
delivery chain with an absorbing delivered state (transient analysis for
the quality of delivery), and the delay chain whose stationary
distribution yields the average frame delay. Closed forms are implemented
directly; explicit transition matrices and a brute-force chain oracle
exist for verification.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import (AnalyticMetrics, LinkProbabilities, NetworkParams,
                     ValidationError, VolumeSet)


@dataclass(frozen=True)
class StorageChain:
    """Stationary storage occupancy: state 0 empty, states 1..k holding."""

    k: int
    p_rx: float
    pi: tuple

    def __post_init__(self):
        if abs(sum(self.pi) - 1.0) > 1e-12:
            raise ValidationError("stationary distribution must sum to 1")


@dataclass(frozen=True)
class QodState:
    """Delivery-chain distribution after m transitions (states 0..k, Q)."""

    m: int
    pi_m: tuple


@dataclass(frozen=True)
class DelayDistribution:
    """Delay weights over round counts i = 2..k (units of rounds)."""

    k: int
    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.size != self.k - 1:
            raise ValidationError("need one weight per round index 2..k")
        if (w < -1e-15).any() or abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValidationError("weights must be nonnegative and sum to 1")


def _pow_1m(p: float, e: float) -> float:
    # (1 - p)^e without underflow-driven error for large e
    if p >= 1.0:
        return 0.0 if e > 0 else 1.0
    return math.exp(e * math.log1p(-p))


def stationary_storage(p_rx: float, k: int) -> StorageChain:
    """Stationary distribution of the frame-storage chain."""
    if not (0.0 < p_rx <= 1.0):
        raise ValidationError(f"p_rx must be in (0, 1], got {p_rx}")
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    denom = 1.0 + p_rx * (k - 1)
    pi0 = (1.0 - p_rx) / denom
    pi1 = p_rx / denom
    pi = np.full(k + 1, pi1)
    pi[0] = pi0
    pi /= pi.sum()  # remove accumulated rounding so the 1e-12 invariant holds at any k
    return StorageChain(k=k, p_rx=p_rx, pi=tuple(pi.tolist()))


def link_probabilities(params: NetworkParams, volumes: VolumeSet) -> LinkProbabilities:
    """All per-round link probabilities for one parameter point."""
    if volumes.v_tx > volumes.v_cx + volumes.err_tx + volumes.err_cx:
        raise ValidationError("inconsistent volumes: v_tx > v_cx")
    p_tx = volumes.v_tx / params.V_t
    p_cx = volumes.v_cx / params.V_t
    p_rx = params.eta
    chain = stationary_storage(p_rx, params.k)
    p_empty = chain.pi[0]
    p_frame = 1.0 - p_empty
    collision_free = _pow_1m(p_cx * p_frame, params.n - 1)
    p_s = p_tx * collision_free
    p_s_rnd = params.T * params.f * p_tx * collision_free
    clamped = p_s_rnd > 1.0
    if clamped:
        p_s_rnd = 1.0
    return LinkProbabilities(
        p_tx=p_tx, p_cx=p_cx, p_rx=p_rx, p_frame=p_frame, p_empty=p_empty,
        p_s=p_s, p_s_rnd=p_s_rnd, pi=chain.pi, clamped=clamped,
    )


def two_round_throughput(params: NetworkParams, volumes: VolumeSet) -> float:
    """Frames/second delivered under the two-round receive-then-send model."""
    p_tx = volumes.v_tx / params.V_t
    p_cx = volumes.v_cx / params.V_t
    p_rx = params.eta
    return params.n * params.f * p_tx * p_rx * _pow_1m(p_cx * p_rx, params.n - 1)


def raw_throughput(params: NetworkParams, volumes: VolumeSet) -> float:
    """Frames/second counting every delivery, repeated frames included."""
    lp = link_probabilities(params, volumes)
    return params.n * params.f * lp.p_tx * lp.p_frame * _pow_1m(lp.p_cx * lp.p_frame, params.n - 1)


def effective_throughput(params: NetworkParams, volumes: VolumeSet) -> float:
    """Frames/second counting each frame once (first successful delivery).

    Equals n f pi_1 (1 - (1 - p_s)^(k-1)), the stable form of the
    quotient n f eta ((1-p_s)^k + p_s - 1) / ((1 + eta (k-1)) (p_s - 1)).
    """
    lp = link_probabilities(params, volumes)
    pi1 = lp.pi[1]
    return params.n * params.f * pi1 * (1.0 - _pow_1m(lp.p_s, params.k - 1))


def qod(params: NetworkParams, volumes: VolumeSet, m: int) -> float:
    """Probability some node delivers a frame within m rounds.

    Transient analysis of the delivery chain: per-state vector recursion
    from the stationary storage distribution (delivered mass starts at 0),
    then 1 - (1 - pi_mQ)^n across independent nodes.
    """
    pi_mq = _qod_absorbed_mass(params, volumes, m)
    return -math.expm1(params.n * math.log1p(-pi_mq)) if pi_mq < 1.0 else 1.0


def _qod_absorbed_mass(params: NetworkParams, volumes: VolumeSet, m: int) -> float:
    if m < 0:
        raise ValidationError("m must be >= 0")
    lp = link_probabilities(params, volumes)
    state = qod_recursion(lp.p_rx, lp.p_s_rnd, params.k, m)
    return state.pi_m[-1]


def qod_recursion(p_rx: float, p_s_rnd: float, k: int, m: int) -> QodState:
    """Run m steps of the delivery-chain recursion; last entry is delivered mass."""
    chain = stationary_storage(p_rx, k)
    st = np.zeros(k + 2)
    st[: k + 1] = chain.pi  # delivered mass starts empty
    p = p_s_rnd
    for _ in range(m):
        new = np.empty_like(st)
        new[k + 1] = p * st[1:k].sum() + st[k + 1]
        recycle = st[0] + st[k]
        new[0] = (1.0 - p_rx) * recycle
        new[1] = p_rx * recycle
        new[2 : k + 1] = (1.0 - p) * st[1:k]
        st = new
        total = st.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"recursion lost probability mass: sum = {total}")
    return QodState(m=m, pi_m=tuple(st.tolist()))


def average_delay(params: NetworkParams, volumes: VolumeSet) -> tuple[float, DelayDistribution]:
    """Mean time from frame reception to first delivery, in seconds.

    The stationary delay chain puts weight p (1-p)^(i-2) / (1 - (1-p)^(k-1))
    on a delay of i rounds, i = 2..k, with p the per-round delivery
    probability.
    """
    lp = link_probabilities(params, volumes)
    p = lp.p_s_rnd
    if p <= 0.0:
        raise ValidationError("p_s_rnd = 0: no frame is ever delivered, delay undefined")
    k = params.k
    i = np.arange(2, k + 1, dtype=float)
    if p < 1.0:
        logq = math.log1p(-p)
        w = p * np.exp((i - 2.0) * logq) / -math.expm1((k - 1) * logq)
    else:
        w = np.zeros(k - 1)
        w[0] = 1.0
    dist = DelayDistribution(k=k, weights=tuple(w.tolist()))
    tau = float((w * i).sum()) * params.T
    return tau, dist


def analyze(params: NetworkParams, volumes: VolumeSet, m: int) -> AnalyticMetrics:
    """All closed-form metrics for one parameter point."""
    tau, _ = average_delay(params, volumes)
    return AnalyticMetrics(
        th_two_round=two_round_throughput(params, volumes),
        th_raw=raw_throughput(params, volumes),
        th_eff=effective_throughput(params, volumes),
        qod=qod(params, volumes, m),
        tau_av=tau,
        m=m,
    )


# --- explicit transition matrices (verification targets) ---

def storage_transition_matrix(p_rx: float, k: int) -> np.ndarray:
    """Storage chain: 0 empty, 1..k holding for i rounds."""
    t = np.zeros((k + 1, k + 1))
    t[0, 0] = 1.0 - p_rx
    t[0, 1] = p_rx
    for i in range(1, k):
        t[i, i + 1] = 1.0
    t[k, 0] = 1.0 - p_rx
    t[k, 1] = p_rx
    return t


def qod_transition_matrix(p_rx: float, p_s_rnd: float, k: int) -> np.ndarray:
    """Delivery chain: storage states 0..k plus absorbing delivered state Q."""
    q = k + 1
    t = np.zeros((k + 2, k + 2))
    t[0, 0] = 1.0 - p_rx
    t[0, 1] = p_rx
    for i in range(1, k):
        t[i, q] = p_s_rnd
        t[i, i + 1] = 1.0 - p_s_rnd
    t[k, 0] = 1.0 - p_rx
    t[k, 1] = p_rx
    t[q, q] = 1.0
    return t


def delay_transition_matrix(p_rx: float, p_s_rnd: float, k: int) -> np.ndarray:
    """Delay chain: states 0..k then Q_2..Q_k; Q_i records delivery at round i.

    Delivered walkers ride Q_i -> Q_(i+1) deterministically until Q_k,
    which recycles like state k, so the chain is recurrent and its
    stationary mass on Q_i telescopes into the delay weights.
    """
    size = 2 * k
    t = np.zeros((size, size))

    def qi(i):  # Q_i index for i in 2..k
        return k + i - 1

    t[0, 0] = 1.0 - p_rx
    t[0, 1] = p_rx
    for i in range(1, k):
        t[i, qi(i + 1)] = p_s_rnd
        t[i, i + 1] = 1.0 - p_s_rnd
    t[k, 0] = 1.0 - p_rx
    t[k, 1] = p_rx
    for i in range(2, k):
        t[qi(i), qi(i + 1)] = 1.0
    t[qi(k), 0] = 1.0 - p_rx
    t[qi(k), 1] = p_rx
    return t


def delay_stationary(p_rx: float, p_s_rnd: float, k: int) -> np.ndarray:
    """Closed-form stationary vector of the delay chain (same state order)."""
    p = p_s_rnd
    pi = np.empty(2 * k)
    pi[0] = (1.0 - p_rx) / p_rx  # in units of pi_1
    pi[1 : k + 1] = (1.0 - p) ** np.arange(k, dtype=float)
    pi[k + 1 :] = 1.0 - (1.0 - p) ** np.arange(1, k, dtype=float)
    return pi / pi.sum()


@dataclass(frozen=True)
class OracleResult:
    """Empirical statistics from brute-force chain simulation."""

    occupancy: tuple  # time-average state frequencies across all steps and walkers
    final_distribution: tuple  # state frequencies at the last step
    absorbed_fraction: float  # walkers that ended in the designated absorbing state
    absorption_steps: tuple  # per-walker step of absorption (absorbed walkers only)
    steps: int
    replications: int


def chain_oracle(matrix: np.ndarray, start: np.ndarray, steps: int,
                 replications: int = 1, seed: int = 0,
                 absorbing_state: int | None = None) -> OracleResult:
    """Simulate a finite chain forward and report empirical statistics.

    Vectorized over replications; deterministic per seed. The occupancy
    counts every visited state over all steps; absorption statistics are
    collected for absorbing_state when given.
    """
    t = np.asarray(matrix, dtype=float)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ValidationError("matrix must be square")
    if (t < 0).any() or np.abs(t.sum(axis=1) - 1.0).max() > 1e-9:
        raise ValidationError("rows must be probability vectors (sum 1 within 1e-9)")
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    n_states = t.shape[0]
    start = np.asarray(start, dtype=float)
    if start.shape != (n_states,) or abs(start.sum() - 1.0) > 1e-9:
        raise ValidationError("start must be a distribution over states")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    cum = np.cumsum(t, axis=1)
    state = rng.choice(n_states, size=replications, p=start / start.sum())
    occupancy = np.zeros(n_states, dtype=np.int64)
    absorbed_at = np.full(replications, -1, dtype=np.int64)
    for step in range(1, steps + 1):
        u = rng.random(replications)
        state = np.minimum((u[:, None] > cum[state]).sum(axis=1), n_states - 1)
        occupancy += np.bincount(state, minlength=n_states)
        if absorbing_state is not None:
            newly = (state == absorbing_state) & (absorbed_at < 0)
            absorbed_at[newly] = step
    final = np.bincount(state, minlength=n_states) / replications
    absorbed = absorbed_at[absorbed_at > 0]
    return OracleResult(
        occupancy=tuple((occupancy / occupancy.sum()).tolist()),
        final_distribution=tuple(final.tolist()),
        absorbed_fraction=float(absorbed.size / replications),
        absorption_steps=tuple(absorbed.tolist()),
        steps=steps,
        replications=replications,
    )
