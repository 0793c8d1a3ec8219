"""Round-structured Monte-Carlo simulator of circulating nano-nodes.

Nodes circulate a branched closed loop once per round, picking a branch
with probability equal to its flow fraction. Frames load at the sensor
branch, age out after k rounds, and can be delivered only while a
charge-cycle firing geometrically falls inside the router's transmission
region. Nothing here reuses the analytic probabilities: reception,
transmission and collisions all emerge from branch draws, cross-section
positions and firing-grid offsets.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .params import AnalyticMetrics, NetworkParams, ValidationError


class Branch(NamedTuple):
    name: str
    flow_fraction: float


class Estimate(NamedTuple):
    value: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class CircuitConfig:
    """Closed-loop circuit: branch flow fractions plus router-vein geometry."""

    branches: tuple  # of Branch
    router_branch: str
    sensor_branch: str | None  # None: sensor never loads (degenerate checks)
    router_diameter: float  # m
    router_length: float  # m
    router_velocity: float  # m/s
    total_volume: float  # m^3
    round_time: float  # s

    def __post_init__(self):
        object.__setattr__(self, "branches",
                           tuple(Branch(*b) if not isinstance(b, Branch) else b
                                 for b in self.branches))
        errors = []
        names = [b.name for b in self.branches]
        if len(set(names)) != len(names):
            errors.append("branch names must be unique")
        fracs = np.array([b.flow_fraction for b in self.branches], dtype=float)
        if (fracs <= 0).any() or (fracs > 1).any():
            errors.append("flow fractions must lie in (0, 1]")
        if abs(fracs.sum() - 1.0) > 1e-9:
            errors.append(f"flow fractions sum to {fracs.sum()}, not 1")
        if self.router_branch not in names:
            errors.append(f"router branch {self.router_branch!r} not in branches")
        if self.sensor_branch is not None and self.sensor_branch not in names:
            errors.append(f"sensor branch {self.sensor_branch!r} not in branches")
        if self.sensor_branch == self.router_branch:
            errors.append("router and sensor must sit on distinct branches")
        for name in ("router_diameter", "router_length", "router_velocity",
                     "total_volume", "round_time"):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be positive")
        if errors:
            raise ValidationError("; ".join(errors))

    def fraction(self, name: str | None) -> float:
        for b in self.branches:
            if b.name == name:
                return b.flow_fraction
        return 0.0


def default_circuit(params: NetworkParams) -> CircuitConfig:
    """Sensor branch (fraction eta), router vein, remainder lumped.

    The router fraction is the share of the circuit flow its vein carries,
    v * A_c * T / V_t: the unique value consistent with nodes being
    uniformly distributed over the total volume.
    """
    a_c = math.pi * (params.D / 2.0) ** 2
    f_router = params.v * a_c * params.T / params.V_t
    f_rest = 1.0 - params.eta - f_router
    if f_router <= 0 or f_rest <= 0:
        raise ValidationError("default circuit needs eta + router fraction < 1")
    return CircuitConfig(
        branches=(Branch("sensor", params.eta), Branch("router", f_router),
                  Branch("rest", f_rest)),
        router_branch="router",
        sensor_branch="sensor",
        router_diameter=params.D,
        router_length=params.v * params.T,
        router_velocity=params.v,
        total_volume=params.V_t,
        round_time=params.T,
    )


@dataclass(frozen=True)
class SimConfig:
    """Run control: measurement window, replications, warm-up."""

    seed: int = 0
    sim_duration: float = 3600.0  # measured window, s
    replications: int = 10
    warmup: float | None = None  # s excluded from statistics; default (k+2) rounds
    threads: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ValidationError("replications must be >= 1")
        if self.sim_duration <= 0:
            raise ValidationError("sim_duration must be positive")
        if self.warmup is not None and self.warmup < 0:
            raise ValidationError("warmup must be >= 0")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")


@dataclass(frozen=True)
class SimResult:
    """Aggregated simulation outcome over all replications."""

    replications: int
    measure_rounds: int
    warmup_rounds: int
    round_time: float
    k: int
    effective_frames: int  # first deliveries inside the window
    raw_frames: int  # all deliveries inside the window
    collisions: int  # window transmissions lost to overlap
    throughput_eff: Estimate  # frames/s with 95% CI across replications
    throughput_raw: Estimate
    delays: tuple  # seconds, one entry per first delivery in the window
    per_rep_effective: tuple
    per_rep_raw: tuple
    per_rep_collisions: tuple
    first_fresh_delivery_round: tuple  # per rep; inf when none
    loaded_frames: int  # whole run
    delivered_frames: int  # whole run, first deliveries
    expired_frames: int  # whole run, discarded undelivered
    in_flight_frames: int  # undelivered and still stored at the end
    sensor_passes_full: int  # reception opportunities lost to a full memory

    def __post_init__(self):
        if self.effective_frames > self.raw_frames:
            raise ValidationError("effective_frames cannot exceed raw_frames")
        lo, hi = 2 * self.round_time, self.k * self.round_time
        for d in self.delays:
            if not (lo - 1e-9 <= d <= hi + 1e-9):
                raise ValidationError(f"delay {d} outside [{lo}, {hi}]")
        booked = self.delivered_frames + self.expired_frames + self.in_flight_frames
        if booked != self.loaded_frames:
            raise ValidationError(
                f"conservation violated: loaded {self.loaded_frames} != "
                f"delivered {self.delivered_frames} + expired {self.expired_frames} "
                f"+ in flight {self.in_flight_frames}"
            )

    def empirical_qod(self, m: int):
        return empirical_qod(self, m)


class _RepOutcome(NamedTuple):
    effective: int
    raw: int
    collisions: int
    delays: list
    first_fresh_round: float
    loaded: int
    delivered: int
    expired: int
    in_flight: int
    sensor_full: int


def _simulate_one(params: NetworkParams, circuit: CircuitConfig,
                  rounds: int, warmup_rounds: int, seq: np.random.SeedSequence) -> _RepOutcome:
    rng = np.random.default_rng(seq)
    n, k = params.n, params.k
    half = circuit.router_diameter / 2.0
    r2 = params.r * params.r
    shift = circuit.router_velocity * params.t_f  # v * t_f, m
    grid_dz = circuit.router_velocity / params.f  # firing spacing along z, m
    t_cycle = 1.0 / params.f
    T = circuit.round_time

    # branch intervals on [0, 1) in declaration order
    edges = np.concatenate([[0.0], np.cumsum([b.flow_fraction for b in circuit.branches])])
    names = [b.name for b in circuit.branches]
    router_i = names.index(circuit.router_branch)
    router_lo, router_hi = edges[router_i], edges[router_i + 1]
    if circuit.sensor_branch is not None:
        sensor_i = names.index(circuit.sensor_branch)
        sensor_lo, sensor_hi = edges[sensor_i], edges[sensor_i + 1]
    else:
        sensor_lo = sensor_hi = 0.0

    phase = rng.random(n) * t_cycle  # persistent per-node charge phase
    holding = np.zeros(n, dtype=bool)
    rounds_held = np.zeros(n, dtype=np.int32)
    load_round = np.full(n, -1, dtype=np.int64)
    delivered = np.zeros(n, dtype=bool)

    effective = raw = collisions = 0
    loaded_all = delivered_all = expired_all = sensor_full = 0
    delays: list = []
    first_fresh = math.inf

    # equilibrium start: an empty population needs thousands of rounds at
    # large k to forget its synchronized fill/expire waves. Each node cycles
    # through k storage rounds plus a geometric (eta) empty wait, so holding
    # ages 1..k-1 carry occupancy eta/(1 + eta*(k-1)) each, and the round-0
    # sensor draw then supplies exactly the missing fresh-load inflow. The
    # inflow is the circuit's sensor fraction (zero when no sensor loads).
    eta_in = circuit.fraction(circuit.sensor_branch)
    occ = eta_in / (1.0 + eta_in * (k - 1))
    seeded = rng.random(n) < (k - 1) * occ
    if seeded.any():
        ages = rng.integers(1, k, size=int(seeded.sum()))
        holding[seeded] = True
        rounds_held[seeded] = ages
        load_round[seeded] = -ages
        loaded_all = int(seeded.sum())  # conservation counts seeded frames

    for rnd in range(rounds):
        measured = rnd >= warmup_rounds
        u_branch = rng.random(n)
        if circuit.sensor_branch is not None:
            in_sensor = (u_branch >= sensor_lo) & (u_branch < sensor_hi)
        else:
            in_sensor = np.zeros(n, dtype=bool)
        in_router = (u_branch >= router_lo) & (u_branch < router_hi)

        loads = in_sensor & ~holding
        if loads.any():
            holding[loads] = True
            rounds_held[loads] = 0
            load_round[loads] = rnd
            delivered[loads] = False
            loaded_all += int(loads.sum())
        sensor_full += int((in_sensor & ~loads).sum())

        cand = np.flatnonzero(in_router & holding)
        if cand.size:
            # uniform position on the vein cross-section, offset to the wall
            rad = half * np.sqrt(rng.random(cand.size))
            ang = rng.random(cand.size) * (2.0 * math.pi)
            x = rad * np.cos(ang)
            y = rad * np.sin(ang) - half
            s2 = r2 - x * x - y * y
            geom = s2 > 0.0
            cand = cand[geom]
            if cand.size:
                s = np.sqrt(s2[geom])
                # firing-grid offset from the collision-region start; entry
                # time is uniform per traversal, so (phase + entry) mod the
                # cycle is uniform as well
                entry = rng.random(cand.size) * grid_dz
                offset = (entry + phase[cand] * circuit.router_velocity) % grid_dz
                win_coll = 2.0 * s + shift
                in_coll = offset < win_coll
                in_tx = (offset >= shift) & (offset <= 2.0 * s)

                fire_nodes = cand[in_coll]
                if fire_nodes.size:
                    t_fire = rng.random(fire_nodes.size) * T
                    victims = in_tx[in_coll]
                    blocked = np.zeros(fire_nodes.size, dtype=bool)
                    if fire_nodes.size > 1:
                        order = np.argsort(t_fire)
                        ts = t_fire[order]
                        near = np.zeros(fire_nodes.size, dtype=bool)
                        gap = np.diff(ts) < params.t_f
                        near[:-1] |= gap
                        near[1:] |= gap
                        blocked[order] = near
                    ok = victims & ~blocked
                    if measured:
                        collisions += int((victims & blocked).sum())
                        raw += int(ok.sum())
                    winners = fire_nodes[ok]
                    fresh_first = winners[~delivered[winners]]
                    if fresh_first.size:
                        delivered[fresh_first] = True
                        delivered_all += fresh_first.size
                        if measured:
                            effective += fresh_first.size
                            d_rounds = rnd - load_round[fresh_first] + 1
                            delays.extend((d_rounds * T).tolist())
                            # first first-time delivery after the origin; the
                            # frame may predate it, mirroring a population that
                            # starts the detection clock in steady state
                            if not math.isfinite(first_fresh):
                                first_fresh = float(rnd - warmup_rounds + 1)

        rounds_held[holding] += 1
        dead = holding & (rounds_held >= k)
        if dead.any():
            expired_all += int((dead & ~delivered).sum())
            holding[dead] = False

    in_flight = int((holding & ~delivered).sum())
    return _RepOutcome(effective, raw, collisions, delays, first_fresh,
                       loaded_all, delivered_all, expired_all, in_flight, sensor_full)


def run(params: NetworkParams, circuit: CircuitConfig | None = None,
        sim: SimConfig | None = None) -> SimResult:
    """Simulate the network and aggregate replication statistics."""
    circuit = circuit if circuit is not None else default_circuit(params)
    sim = sim if sim is not None else SimConfig()
    _check_consistency(params, circuit)

    T = circuit.round_time
    measure_rounds = max(1, int(round(sim.sim_duration / T)))
    if sim.warmup is None:
        warmup_rounds = params.k + 2  # long enough to carry pre-window loads
    else:
        warmup_rounds = int(round(sim.warmup / T))
    rounds = warmup_rounds + measure_rounds

    seqs = np.random.SeedSequence(sim.seed).spawn(sim.replications)
    if sim.threads > 1:
        with ThreadPoolExecutor(max_workers=sim.threads) as pool:
            outcomes = list(pool.map(
                lambda sq: _simulate_one(params, circuit, rounds, warmup_rounds, sq),
                seqs))
    else:
        outcomes = [_simulate_one(params, circuit, rounds, warmup_rounds, sq)
                    for sq in seqs]

    duration = measure_rounds * T
    eff = np.array([o.effective for o in outcomes], dtype=float)
    rawc = np.array([o.raw for o in outcomes], dtype=float)
    delays: list = []
    for o in outcomes:
        delays.extend(o.delays)
    return SimResult(
        replications=sim.replications,
        measure_rounds=measure_rounds,
        warmup_rounds=warmup_rounds,
        round_time=T,
        k=params.k,
        effective_frames=int(eff.sum()),
        raw_frames=int(rawc.sum()),
        collisions=int(sum(o.collisions for o in outcomes)),
        throughput_eff=_rate_estimate(eff, duration),
        throughput_raw=_rate_estimate(rawc, duration),
        delays=tuple(delays),
        per_rep_effective=tuple(int(v) for v in eff),
        per_rep_raw=tuple(int(v) for v in rawc),
        per_rep_collisions=tuple(o.collisions for o in outcomes),
        first_fresh_delivery_round=tuple(o.first_fresh_round for o in outcomes),
        loaded_frames=sum(o.loaded for o in outcomes),
        delivered_frames=sum(o.delivered for o in outcomes),
        expired_frames=sum(o.expired for o in outcomes),
        in_flight_frames=sum(o.in_flight for o in outcomes),
        sensor_passes_full=sum(o.sensor_full for o in outcomes),
    )


def _check_consistency(params: NetworkParams, circuit: CircuitConfig) -> None:
    errors = []
    if abs(circuit.router_diameter - params.D) > 1e-12:
        errors.append("circuit router diameter differs from params.D")
    if abs(circuit.router_velocity - params.v) > 1e-12:
        errors.append("circuit router velocity differs from params.v")
    if abs(circuit.total_volume - params.V_t) > 1e-12:
        errors.append("circuit total volume differs from params.V_t")
    if abs(circuit.round_time - params.T) > 1e-9:
        errors.append("circuit round time differs from params.T")
    if circuit.sensor_branch is not None:
        fs = circuit.fraction(circuit.sensor_branch)
        if abs(fs - params.eta) > 1e-12:
            errors.append(f"sensor branch fraction {fs} differs from eta {params.eta}")
    if circuit.router_length < 2.0 * params.r:
        errors.append("router branch shorter than the coverage zone")
    # one firing at most inside the collision region per traversal
    if 2.0 * params.r + params.v * params.t_f >= params.v / params.f:
        errors.append("collision region must fit inside one charge cycle")
    if errors:
        raise ValidationError("; ".join(errors))


def _rate_estimate(per_rep_counts: np.ndarray, duration: float) -> Estimate:
    rates = per_rep_counts / duration
    mean = float(rates.mean())
    if rates.size > 1:
        se = float(rates.std(ddof=1) / math.sqrt(rates.size))
    else:
        se = 0.0
    return Estimate(mean, mean - 1.96 * se, mean + 1.96 * se)


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054):
    """Wilson 95% score interval for a binomial proportion."""
    if trials <= 0:
        raise ValidationError("trials must be positive")
    phat = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2.0 * trials)) / denom
    hw = z * math.sqrt(phat * (1.0 - phat) / trials + z2 / (4.0 * trials * trials)) / denom
    return max(0.0, center - hw), min(1.0, center + hw)


def empirical_qod(result: SimResult, m: int):
    """Fraction of replications with a first-time frame delivery within m
    rounds of the measurement origin.

    Duplicate deliveries of an already-delivered frame do not count. Returns
    (estimate, (wilson_low, wilson_high)). Requires >= 30 replications for a
    meaningful interval.
    """
    if m < 1:
        raise ValidationError("m must be >= 1")
    if result.replications < 30:
        raise ValidationError("need >= 30 replications for a CI")
    hits = sum(1 for rr in result.first_fresh_delivery_round if rr <= m)
    return hits / result.replications, wilson_interval(hits, result.replications)


def compare(analytic: AnalyticMetrics, sim: SimResult) -> dict:
    """Per-metric z-scores (3-sigma gate) between analytics and simulation.

    Gated metrics: th_eff, tau_av and the fresh-frame delivery probability.
    The raw-repeat counter is reported elsewhere but not gated: its closed
    form charges all k storage rounds with the transmission probability
    while only k-1 of them can meet the router (delays span 2T..kT).
    """
    report: dict = {"metrics": {}, "pass": True}

    def add(name, sim_value, ana_value, se, note=None):
        if se > 0:
            z = (sim_value - ana_value) / se
        else:
            z = 0.0 if abs(sim_value - ana_value) < 1e-12 else math.inf
        ok = abs(z) <= 3.0
        entry = {"sim": sim_value, "analytic": ana_value, "se": se,
                 "z": z, "pass": ok}
        if note:
            entry["note"] = note
        report["metrics"][name] = entry
        if not ok:
            report["pass"] = False

    duration = sim.measure_rounds * sim.round_time
    reps = sim.replications
    rates = np.array(sim.per_rep_effective, dtype=float) / duration
    se = float(rates.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    if se == 0.0:
        # degenerate spread; fall back on a Poisson scale (>= 1 count)
        se = math.sqrt(max(rates.mean() * duration, 1.0)) / duration / math.sqrt(reps)
    add("th_eff", sim.throughput_eff.value, analytic.th_eff, se)

    d = np.array(sim.delays, dtype=float)
    if d.size >= 2 and d.std() > 0:
        add("tau_av", float(d.mean()), analytic.tau_av, float(d.std(ddof=1) / math.sqrt(d.size)))
    elif d.size >= 1:
        add("tau_av", float(d.mean()), analytic.tau_av,
            0.0, note="degenerate delay spread")
    else:
        # vacuous: nothing delivered, nothing to compare
        report["metrics"]["tau_av"] = {"sim": math.nan, "analytic": analytic.tau_av,
                                       "se": math.nan, "z": math.nan, "pass": True,
                                       "note": "no delivered frames to measure delay"}

    m = analytic.m
    hits = sum(1 for rr in sim.first_fresh_delivery_round if rr <= m)
    phat = hits / reps
    p0 = analytic.qod
    lo, hi = wilson_interval(hits, reps)
    hw = max((hi - lo) / 2.0, 1e-9)  # replication CI half-width, binomial
    add("qod", phat, p0, hw, note=f"m = {m}, first deliveries")
    return report
