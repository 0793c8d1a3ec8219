"""Application-driven sizing of the nano-network.

Searches the analytic metrics for the smallest deployment meeting an
application's deadline (QoD target) or throughput requirement, and picks
the storage duration k via the equilibrium metric tau_av * n_min.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .markov import average_delay, effective_throughput
from .params import (ApplicationSpec, DimensioningResult, NetworkParams,
                     ValidationError, VolumeSet)

_N_CAP = 10**8


class InfeasibleError(ValueError):
    """Target unreachable; carries the attained maximum for diagnostics."""

    def __init__(self, message: str, attained: float | None = None,
                 at_n: int | None = None):
        super().__init__(message)
        self.attained = attained
        self.at_n = at_n


def m_target(tau_target: float, T: float) -> int:
    """Round budget for a deadline: floor(tau_target / T)."""
    if tau_target < 2 * T:
        raise ValidationError(f"deadline {tau_target} s is shorter than 2 rounds")
    return int(tau_target // T)


def _qod_fast(params: NetworkParams, volumes: VolumeSet, m: int, n: int) -> float:
    """Delivery probability within m rounds at node count n.

    Scalar O(m) reformulation of the per-state delivery recursion (the
    states 2..k form a shift register, so only the recycling mass and the
    transmittable total need tracking). Verified against the per-state
    recursion to 1e-12 in the test suite.
    """
    k = params.k
    p_rx = params.eta
    p_tx = volumes.v_tx / params.V_t
    p_cx = volumes.v_cx / params.V_t
    denom = 1.0 + p_rx * (k - 1)
    p_frame = k * p_rx / denom
    arg = p_cx * p_frame
    collision_free = math.exp((n - 1) * math.log1p(-arg)) if arg < 1.0 else 0.0
    p = min(params.T * params.f * p_tx * collision_free, 1.0)

    pi1 = p_rx / denom
    pi0 = (1.0 - p_rx) / denom
    q = 1.0 - p
    # ridge of the initial distribution: states i <= k hold pi1 * q^j
    b = [0.0] * (m + 1)  # recycling mass st0 + stk per step
    b[0] = pi0 + pi1
    s_prev = (k - 1) * pi1  # transmittable mass at step 0
    absorbed = 0.0
    qk1 = q ** (k - 1)
    qk2 = q ** (k - 2) if k >= 2 else 1.0
    for j in range(1, m + 1):
        absorbed += p * s_prev
        st1 = p_rx * b[j - 1]
        # state k-1 at step j-1 feeds out of the transmittable window
        if j - 1 <= k - 2:
            stk1_prev = pi1 * q ** (j - 1)
        else:
            stk1_prev = p_rx * qk2 * b[j - k]
        s_prev = st1 + q * (s_prev - stk1_prev)
        # state k at step j
        if j <= k - 1:
            stk = pi1 * q**j
        else:
            stk = p_rx * qk1 * b[j - k]
        b[j] = (1.0 - p_rx) * b[j - 1] + stk
    if absorbed >= 1.0:
        return 1.0
    return -math.expm1(n * math.log1p(-absorbed))


def n_min_for_qod(params: NetworkParams, volumes: VolumeSet, m: int,
                  qod_target: float, hint: int | None = None) -> int:
    """Smallest n with qod(n) >= qod_target (params.n is ignored).

    Exponential bracketing then integer bisection over the regime where
    qod grows with n; detects the collision-driven turnover and reports
    infeasibility with the attained maximum.
    """
    if not (0.0 < qod_target < 1.0):
        raise ValidationError("qod_target must be in (0, 1)")
    if params.k > m:
        raise ValidationError(f"k = {params.k} exceeds the round budget m = {m}")

    def q_at(n: int) -> float:
        return _qod_fast(params, volumes, m, n)

    # bracket lo < n_min <= hi with qod(lo) < target <= qod(hi); lo = 0 virtual
    lo, hi = 0, None
    if hint is not None and hint >= 1 and q_at(hint) >= qod_target:
        hi = hint
    else:
        n, prev = 1, -1.0
        while n <= _N_CAP:
            cur = q_at(n)
            if cur >= qod_target:
                hi = n
                break
            if cur < prev:  # past the collision turnover and still short
                break
            prev, lo, n = cur, n, n * 2
        if hi is None:
            n_best, q_best = _argmax_unimodal(q_at, 1, min(n, _N_CAP))
            if q_best >= qod_target:  # doubling stepped over the target window
                lo, hi = 0, n_best  # rising flank is monotone
            else:
                raise InfeasibleError(
                    f"qod target {qod_target} unreachable: maximum {q_best:.6f} "
                    f"at n = {n_best}", attained=q_best, at_n=n_best)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if q_at(mid) >= qod_target:
            hi = mid
        else:
            lo = mid
    # minimality postcondition
    if hi > 1 and q_at(hi - 1) >= qod_target:
        raise ValidationError(f"search lost minimality at n = {hi}")
    return hi


def _argmax_unimodal(fn, lo: int, hi: int) -> tuple[int, float]:
    # integer ternary search for the peak of a unimodal function
    while hi - lo > 2:
        m1 = lo + (hi - lo) // 3
        m2 = hi - (hi - lo) // 3
        if fn(m1) < fn(m2):
            lo = m1 + 1
        else:
            hi = m2
    best_n = max(range(lo, hi + 1), key=fn)
    return best_n, fn(best_n)


@dataclass(frozen=True)
class KTableRow:
    k: int
    n_min: int | None  # None when the target is unreachable at this k
    tau_av: float  # seconds, at n_min
    metric: float  # tau_av * n_min, range-max normalized
    feasible: bool


@dataclass(frozen=True)
class KSearch:
    """Outcome of the storage-duration search."""

    k_opt: int
    n_min: int
    tau_av: float
    rows: tuple  # KTableRow per k in [2, m_target]


def optimal_k(app: ApplicationSpec, base_params: NetworkParams,
              volumes: VolumeSet) -> KSearch:
    """Pick k in [2, m_target] maximizing the normalized tau_av * n_min.

    Rows whose delivered tau_av would bust the deadline are excluded.
    Ties take the smallest k. The full table is returned for inspection.
    """
    if not app.is_deadline:
        raise ValidationError("optimal_k needs a deadline-variant application")
    params = replace(base_params, eta=app.eta)
    mt = m_target(app.tau_target, params.T)
    raw_rows = []
    hint = None
    for k in range(2, mt + 1):
        pk = replace(params, k=k)
        try:
            n_k = n_min_for_qod(pk, volumes, mt, app.qod_target, hint=hint)
        except InfeasibleError:
            raw_rows.append((k, None, math.nan, math.nan))
            continue
        hint = n_k  # n_min is non-increasing in k
        tau_k, _ = average_delay(replace(pk, n=n_k), volumes)
        raw_rows.append((k, n_k, tau_k, tau_k * n_k))

    feasible = [(k, n_k, tau_k, met) for k, n_k, tau_k, met in raw_rows
                if n_k is not None and tau_k <= app.tau_target]
    if not feasible:
        raise InfeasibleError("no feasible k in [2, m_target]")
    norm = max(met for *_r, met in feasible)
    rows = []
    for k, n_k, tau_k, met in raw_rows:
        ok = n_k is not None and tau_k <= app.tau_target
        rows.append(KTableRow(k=k, n_min=n_k, tau_av=tau_k,
                              metric=met / norm if ok else math.nan, feasible=ok))
    best = max(feasible, key=lambda row: (row[3], -row[0]))  # ties: smallest k
    return KSearch(k_opt=best[0], n_min=best[1], tau_av=best[2], rows=tuple(rows))


def dimension(app: ApplicationSpec, base_params: NetworkParams,
              volumes: VolumeSet) -> DimensioningResult:
    """Full sizing of one application."""
    params = replace(base_params, eta=app.eta)
    if app.is_deadline:
        mt = m_target(app.tau_target, params.T)
        if app.qod_target == 0.0:
            # no constraint at all: minimal deployment
            pk = replace(params, k=2, n=1)
            tau, _ = average_delay(pk, volumes)
            return DimensioningResult(k_opt=2, n_min=1,
                                      throughput=effective_throughput(pk, volumes),
                                      tau_av=tau, m_target=mt)
        search = optimal_k(app, params, volumes)
        pk = replace(params, k=search.k_opt, n=search.n_min)
        return DimensioningResult(
            k_opt=search.k_opt, n_min=search.n_min,
            throughput=effective_throughput(pk, volumes),
            tau_av=search.tau_av, m_target=mt,
            per_k=search.rows,
        )
    return _dimension_throughput(app, params, volumes)


def _n_min_for_throughput(params: NetworkParams, volumes: VolumeSet,
                          target: float) -> int | None:
    """Smallest n with Th_eff >= target at fixed k, None when unreachable."""

    def th(n: int) -> float:
        return effective_throughput(replace(params, n=n), volumes)

    lo, hi, prev = 0, None, -1.0
    n = 1
    while n <= _N_CAP:
        cur = th(n)
        if cur >= target:
            hi = n
            break
        if cur < prev:  # collision turnover: Th_eff is unimodal in n
            return None
        prev, lo, n = cur, n, n * 2
    if hi is None:
        return None
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if mid < 1:
            break
        if th(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def _dimension_throughput(app: ApplicationSpec, params: NetworkParams,
                          volumes: VolumeSet) -> DimensioningResult:
    """Smallest n (then k) with Th_eff >= target and tau_av <= tau_av_target.

    Larger k raises Th_eff at fixed n, so n shrinks with k until the
    average delay busts its cap; the scan stops there.
    """
    best = None
    rows = []
    for k in range(2, NetworkParams.K_CAP + 1):
        pk = replace(params, k=k)
        n_k = _n_min_for_throughput(pk, volumes, app.throughput_target)
        if n_k is None:
            rows.append(KTableRow(k=k, n_min=None, tau_av=math.nan,
                                  metric=math.nan, feasible=False))
            continue
        tau_k, _ = average_delay(replace(pk, n=n_k), volumes)
        ok = tau_k <= app.tau_av_target
        rows.append(KTableRow(k=k, n_min=n_k, tau_av=tau_k, metric=math.nan,
                              feasible=ok))
        if ok and (best is None or (n_k, k) < (best[0], best[1])):
            best = (n_k, k, tau_k)
        if not ok and tau_k > app.tau_av_target:
            break  # tau_av grows with k; nothing feasible further out
    if best is None:
        raise InfeasibleError("throughput target unreachable under the delay cap")
    n_best, k_best, tau_best = best
    pk = replace(params, k=k_best, n=n_best)
    return DimensioningResult(
        k_opt=k_best, n_min=n_best,
        throughput=effective_throughput(pk, volumes),
        tau_av=tau_best, m_target=None,
        per_k=tuple(rows),
    )
