"""Finite-duration planning by successive convex approximation.

The discretized joint problem maximizes the per-slot received power clipped
at the SNR threshold (a smooth stand-in for the outage count) over the
trajectory and the power schedule.  Each round alternates two convex
subproblems obtained from two global tangent bounds:

* per-sensor amplitude versus UAV position: the map
  w -> (w + h^2)^(-alpha/4) of the squared planar distance is convex, so
  its tangent at the current position is a global lower bound that is
  concave (quadratic) in position;
* received power versus summed amplitude: x -> x^2 bounded below by its
  tangent at the current amplitude sum.

Both subproblems therefore maximize a lower bound that is tight at the
current iterate, which makes the clipped objective monotone across
accepted steps.  Steps are solved with the log-barrier Newton method; a
step is rejected (iterate kept) if the solver fails to converge or the
exact objective would regress beyond rounding tolerance.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from outage_planner.channel import gain_at
from outage_planner.convex_core import (
    BoundBlock,
    GenericBlock,
    STATUS_OPTIMAL,
    SmoothConvexProgram,
    solve_barrier,
)
from outage_planner.relaxed_optimum import HoverPlan
from outage_planner.scenario import PowerSchedule, Scenario, Trajectory

OBJ_TOL_REL = 1e-9     # accepted steps may regress at most this (relative)
DEFAULT_ROUNDS = 50
DEFAULT_REL_IMPROVEMENT = 1e-4


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    objective: float
    step_kind: str   # "trajectory" | "power"
    accepted: bool


@dataclass
class ScaState:
    """Current iterate of the alternating optimization.

    ``amplitudes`` always holds the exact received amplitudes of the
    current plan (the linearization point of the next step) and
    ``slot_received`` the per-slot received power clipped at the threshold
    scale gamma_min * noise.  ``objective`` is the mean clipped SNR,
    a number in [0, gamma_min] that increases weakly across accepted steps.
    """

    trajectory: Trajectory
    powers: np.ndarray        # (K, N) watts
    amplitudes: np.ndarray    # (K, N)
    slot_received: np.ndarray  # (N,) min(received power, gamma * noise)
    objective: float
    trace: list[TraceEntry] = field(default_factory=list)

    @property
    def schedule(self) -> PowerSchedule:
        return PowerSchedule(self.powers)


def amplitude_lower_bound(
    power: float, q, q_ref, sensor_xy, scenario: Scenario
) -> float:
    """Global lower bound on the received amplitude from one sensor.

    Tangent (in the squared planar distance) at q_ref of
    sqrt(power * beta0) * (|q - s|^2 + h^2)^(-alpha/4); exact whenever
    |q - s| = |q_ref - s|.
    """
    s = np.asarray(sensor_xy, dtype=float)
    w = float(np.sum((np.asarray(q, dtype=float) - s) ** 2))
    w_ref = float(np.sum((np.asarray(q_ref, dtype=float) - s) ** 2))
    u = w_ref + scenario.altitude**2
    quarter = scenario.alpha / 4.0
    base = u**-quarter
    slope = quarter * u ** (-quarter - 1.0)
    return math.sqrt(power * scenario.beta0) * (base - slope * (w - w_ref))


def square_sum_lower_bound(amplitudes, amplitudes_ref) -> float:
    """Tangent bound (sum a_ref)^2 + 2 (sum a_ref)(sum a - sum a_ref)."""
    s = float(np.sum(amplitudes))
    s_ref = float(np.sum(amplitudes_ref))
    return s_ref**2 + 2.0 * s_ref * (s - s_ref)


def _state_from_plan(
    trajectory: Trajectory,
    powers: np.ndarray,
    scenario: Scenario,
    trace: list[TraceEntry] | None = None,
) -> ScaState:
    gains = gain_at(trajectory.slot_positions, scenario)  # (N, K)
    amps = np.sqrt(powers * gains.T)
    received = amps.sum(axis=0) ** 2
    cap = scenario.gamma_min * scenario.noise_power
    clipped = np.minimum(received, cap)
    objective = float(clipped.mean() / scenario.noise_power)
    return ScaState(
        trajectory, powers.copy(), amps, clipped, objective,
        trace if trace is not None else [],
    )


def _accept(old: ScaState, candidate: ScaState) -> bool:
    return candidate.objective >= old.objective - OBJ_TOL_REL * max(
        1.0, abs(old.objective)
    )


def trajectory_step(state: ScaState, scenario: Scenario) -> tuple[ScaState, bool]:
    """One SCA trajectory update with the power schedule held fixed.

    Maximizes the slot-mean of auxiliary received powers A_n subject to
    A_n <= gamma * noise, A_n below the tangent-bound surrogate of the
    received power at waypoint n, and the per-slot speed constraints.
    Summed-amplitude variables are eliminated exactly: the surrogate is
    affine and increasing in them, so they sit at their position-dependent
    upper bounds, leaving a concave quadratic cap in the waypoint.
    """
    n = scenario.n_slots
    k = scenario.n_sensors
    wp = state.trajectory.waypoints
    delta = state.trajectory.slot_length
    leg = scenario.v_max * delta
    q_i = np.asarray(scenario.q_start)
    q_f = np.asarray(scenario.q_final)
    cap = scenario.gamma_min * scenario.noise_power

    if n == 1:
        # both waypoints pinned; nothing to optimize
        new = _state_from_plan(state.trajectory, state.powers, scenario, state.trace)
        return new, True

    direct = np.linalg.norm(q_f - q_i) / n
    if leg - direct <= 1e-6 * leg:
        return state, False  # speed budget leaves no interior to search

    # tangent data at the current iterate
    pos = state.trajectory.slot_positions          # (N, 2)
    w_ref = (
        (pos[:, None, :] - scenario.sensor_xy[None, :, :]) ** 2
    ).sum(axis=2)                                  # (N, K) squared distances
    u_ref = w_ref + scenario.altitude**2
    quarter = scenario.alpha / 4.0
    sqrt_pb = np.sqrt(state.powers.T * scenario.beta0)   # (N, K)
    slope = sqrt_pb * quarter * u_ref ** (-quarter - 1.0)  # m_k[n] >= 0
    const = sqrt_pb * u_ref**-quarter + slope * w_ref      # amp0_k[n]
    a0 = const.sum(axis=1)                         # (N,)
    msum = slope.sum(axis=1)                       # (N,)
    msens = slope[:, :, None] * scenario.sensor_xy[None, :, :]
    msens = msens.sum(axis=1)                      # (N, 2)
    mconst = (slope * (scenario.sensor_xy**2).sum(axis=1)[None, :]).sum(axis=1)
    s_ref = state.amplitudes.sum(axis=0)           # (N,)
    c0 = 2.0 * s_ref * a0 - s_ref**2               # cap constant term

    n_free = n - 1                                 # waypoints 1..N-1 vary
    nq = 2 * n_free
    nv = nq + n                                    # plus A' per slot

    def q_of(z):
        return z[:nq].reshape(n_free, 2)

    def cap_norm(slot, q):                         # G_n(q) in units of cap
        w = msum[slot] * (q * q).sum(-1) - 2.0 * (msens[slot] * q).sum(-1) \
            + mconst[slot]
        return (c0[slot] - 2.0 * s_ref[slot] * w) / cap

    slots_var = np.arange(1, n)                    # slots with a free waypoint
    idx_a = nq + np.arange(n)

    def surrogate_value(z):
        q = q_of(z)
        return z[idx_a[slots_var - 1]] - cap_norm(slots_var - 1, q)

    def surrogate_jacobian(z):
        q = q_of(z)
        jac = np.zeros((n_free, nv))
        coef = (4.0 * s_ref[slots_var - 1] / cap)[:, None] * (
            msum[slots_var - 1][:, None] * q - msens[slots_var - 1]
        )
        rows = np.arange(n_free)
        jac[rows, 2 * rows] = coef[:, 0]
        jac[rows, 2 * rows + 1] = coef[:, 1]
        jac[rows, idx_a[slots_var - 1]] = 1.0
        return jac

    def surrogate_hessian(z, w):
        h = np.zeros((nv, nv))
        diag = h.ravel()[:: nv + 1]
        per_q = w * 4.0 * s_ref[slots_var - 1] * msum[slots_var - 1] / cap
        diag[0:nq:2] += per_q
        diag[1:nq:2] += per_q
        return h

    leg2 = leg * leg

    def chain(z):
        q = q_of(z)
        return np.vstack([q_i[None, :], q, q_f[None, :]])

    def speed_value(z):
        diffs = np.diff(chain(z), axis=0)
        return (diffs * diffs).sum(axis=1) / leg2 - 1.0

    def speed_jacobian(z):
        diffs = np.diff(chain(z), axis=0)          # (N, 2)
        jac = np.zeros((n, nv))
        for row in range(n):                       # segment row: q[row] -> q[row+1]
            d = 2.0 * diffs[row] / leg2
            if 1 <= row + 1 <= n - 1:              # head endpoint is variable
                jac[row, 2 * row : 2 * row + 2] = d
            if 1 <= row <= n - 1:                  # tail endpoint is variable
                jac[row, 2 * (row - 1) : 2 * row] = -d
        return jac

    def speed_hessian(z, w):
        h = np.zeros((nv, nv))
        for row in range(n):
            blocks = []
            if 1 <= row + 1 <= n - 1:
                blocks.append(2 * row)
            if 1 <= row <= n - 1:
                blocks.append(2 * (row - 1))
            val = 2.0 * w[row] / leg2
            for b in blocks:
                h[b, b] += val
                h[b + 1, b + 1] += val
            if len(blocks) == 2:
                b1, b2 = blocks
                h[b1, b2] -= val
                h[b2, b1] -= val
                h[b1 + 1, b2 + 1] -= val
                h[b2 + 1, b1 + 1] -= val
        return h

    blocks = [
        BoundBlock(idx_a, +1.0, 1.0),                       # A' <= 1
        GenericBlock(surrogate_value, surrogate_jacobian, surrogate_hessian),
        BoundBlock(idx_a[-1:], +1.0, cap_norm(n - 1, q_f[None, :])),
        GenericBlock(speed_value, speed_jacobian, speed_hessian),
    ]

    # strictly feasible start: bend slightly toward the uniform direct path
    direct_path = np.linspace(q_i, q_f, n + 1)[1:-1]
    q_start = 0.99 * wp[1:-1] + 0.01 * direct_path
    z0 = np.zeros(nv)
    z0[:nq] = q_start.ravel()
    start_caps = np.minimum(1.0, cap_norm(np.arange(n - 1), q_start))
    z0[idx_a[:-1]] = start_caps - 0.01
    z0[idx_a[-1]] = min(1.0, float(cap_norm(n - 1, q_f[None, :])[0])) - 0.01

    gamma = scenario.gamma_min
    grad_f = np.zeros(nv)
    grad_f[idx_a] = -gamma / n

    program = SmoothConvexProgram(
        objective=lambda z: float(grad_f @ z),
        gradient=lambda z: grad_f,
        x0=z0,
        blocks=blocks,
    )
    try:
        outcome = solve_barrier(
            program, gap_tol=1e-10 * max(1.0, gamma), max_newton=400
        )
    except ValueError:
        return state, False
    if outcome.status != STATUS_OPTIMAL:
        return state, False

    new_wp = wp.copy()
    new_wp[1:-1] = q_of(outcome.x)
    candidate = _state_from_plan(
        Trajectory(new_wp, delta), state.powers, scenario, state.trace
    )
    if not _accept(state, candidate):
        return state, False
    return candidate, True


def power_step(state: ScaState, scenario: Scenario) -> tuple[ScaState, bool]:
    """One SCA power update with the trajectory held fixed.

    The amplitude of sensor k in slot n is sqrt(P * gain), concave in the
    power, and enters through the tangent bound of the squared amplitude
    sum; the average-power budgets and nonnegativity complete the program.
    Powers are rescaled by their budgets and the auxiliaries by
    gamma * noise so the Newton systems stay well conditioned.
    """
    n = scenario.n_slots
    k = scenario.n_sensors
    cap = scenario.gamma_min * scenario.noise_power
    budgets = scenario.power_budgets
    gains = gain_at(state.trajectory.slot_positions, scenario)  # (N, K)
    e_full = np.sqrt(gains * budgets[None, :])    # amplitude at full budget
    s_ref = state.amplitudes.sum(axis=0)          # (N,)
    beta = 2.0 * s_ref / cap                      # (N,)
    off = s_ref**2 / cap                          # (N,)

    nv = k * n + n
    idx_a = k * n + np.arange(n)

    def p_of(z):
        return z[: k * n].reshape(k, n)

    def surrogate_value(z):
        # negative powers are rejected by the bound block; clip so the
        # amplitude stays finite during infeasible line-search probes
        p = np.maximum(p_of(z), 0.0)
        amp = (e_full.T * np.sqrt(p)).sum(axis=0)  # (N,)
        return z[idx_a] + off - beta * amp

    def surrogate_jacobian(z):
        p = p_of(z)
        jac = np.zeros((n, nv))
        coef = -(beta[None, :] * e_full.T) / (2.0 * np.sqrt(p))  # (K, N)
        cols = (np.arange(k)[:, None] * n + np.arange(n)[None, :])
        jac[np.broadcast_to(np.arange(n), (k, n)), cols] = coef
        jac[np.arange(n), idx_a] = 1.0
        return jac

    def surrogate_hessian(z, w):
        p = p_of(z)
        h = np.zeros((nv, nv))
        diag = h.ravel()[:: nv + 1]
        contrib = (w[None, :] * beta[None, :] * e_full.T) / (4.0 * p**1.5)
        diag[: k * n] += contrib.ravel()
        return h

    budget_jac = np.zeros((k, nv))
    for kk in range(k):
        budget_jac[kk, kk * n : (kk + 1) * n] = 1.0 / n

    def budget_value(z):
        return p_of(z).mean(axis=1) - 1.0

    blocks = [
        BoundBlock(idx_a, +1.0, 1.0),
        GenericBlock(surrogate_value, surrogate_jacobian, surrogate_hessian),
        BoundBlock(np.arange(k * n), -1.0, 0.0),               # p' >= 0
        GenericBlock(budget_value, lambda z: budget_jac, None),
    ]

    p_prev = state.powers / budgets[:, None]
    p0 = np.maximum(0.99 * p_prev, 1e-9)
    z0 = np.zeros(nv)
    z0[: k * n] = p0.ravel()
    amp0 = (e_full.T * np.sqrt(p0)).sum(axis=0)
    z0[idx_a] = np.minimum(1.0, beta * amp0 - off) - 0.01

    gamma = scenario.gamma_min
    grad_f = np.zeros(nv)
    grad_f[idx_a] = -gamma / n

    program = SmoothConvexProgram(
        objective=lambda z: float(grad_f @ z),
        gradient=lambda z: grad_f,
        x0=z0,
        blocks=blocks,
    )
    try:
        outcome = solve_barrier(
            program, gap_tol=1e-10 * max(1.0, gamma), max_newton=400
        )
    except ValueError:
        return state, False
    if outcome.status != STATUS_OPTIMAL:
        return state, False

    new_powers = p_of(outcome.x) * budgets[:, None]
    candidate = _state_from_plan(
        state.trajectory, new_powers, scenario, state.trace
    )
    if not _accept(state, candidate):
        return state, False
    return candidate, True


def plan_sca(
    scenario: Scenario,
    init: Trajectory,
    max_rounds: int = DEFAULT_ROUNDS,
    rel_improvement: float = DEFAULT_REL_IMPROVEMENT,
) -> ScaState:
    """Alternate trajectory and power steps from a feasible initialization.

    Powers start uniformly at the budgets.  The loop stops when a full
    round improves the clipped objective by less than ``rel_improvement``
    (relative), when both steps of a round are rejected, or after
    ``max_rounds`` rounds.  The trace records every step.
    """
    powers0 = np.broadcast_to(
        scenario.power_budgets[:, None],
        (scenario.n_sensors, scenario.n_slots),
    ).copy()
    state = _state_from_plan(init, powers0, scenario)
    step_no = 0
    for _ in range(max_rounds):
        before = state.objective
        state, ok_t = trajectory_step(state, scenario)
        step_no += 1
        state.trace.append(
            TraceEntry(step_no, state.objective, "trajectory", ok_t)
        )
        state, ok_p = power_step(state, scenario)
        step_no += 1
        state.trace.append(TraceEntry(step_no, state.objective, "power", ok_p))
        if not (ok_t or ok_p):
            break
        gain = state.objective - before
        if gain <= rel_improvement * max(abs(before), 1e-12):
            break
    return state


# ---------------------------------------------------------------------------
# Initial trajectories
# ---------------------------------------------------------------------------

def direct_flight(scenario: Scenario) -> Trajectory:
    """Straight constant-speed flight from start to finish."""
    wp = np.linspace(
        np.asarray(scenario.q_start, dtype=float),
        np.asarray(scenario.q_final, dtype=float),
        scenario.n_slots + 1,
    )
    return Trajectory(wp, scenario.slot_length)


def _tour_length(order, locs, q_i, q_f) -> float:
    pts = [q_i] + [locs[i] for i in order] + [q_f]
    return float(
        sum(math.dist(pts[i], pts[i + 1]) for i in range(len(pts) - 1))
    )


def _tsp_order(locs: np.ndarray, q_i, q_f) -> list[int]:
    """Visiting order minimizing the open path q_i -> all locs -> q_f.

    Exact enumeration up to eight stops, nearest-neighbor plus 2-opt beyond.
    """
    m = len(locs)
    if m <= 1:
        return list(range(m))
    if m <= 8:
        best, best_len = None, math.inf
        for perm in itertools.permutations(range(m)):
            length = _tour_length(perm, locs, q_i, q_f)
            if length < best_len - 1e-12:
                best, best_len = perm, length
        return list(best)

    remaining = set(range(m))
    order: list[int] = []
    cur = np.asarray(q_i, dtype=float)
    while remaining:
        nxt = min(remaining, key=lambda j: (math.dist(cur, locs[j]), j))
        order.append(nxt)
        remaining.remove(nxt)
        cur = locs[nxt]

    improved = True
    while improved:
        improved = False
        for i in range(m - 1):
            for j in range(i + 1, m):
                cand = order[:i] + order[i : j + 1][::-1] + order[j + 1 :]
                if _tour_length(cand, locs, q_i, q_f) < _tour_length(
                    order, locs, q_i, q_f
                ) - 1e-12:
                    order = cand
                    improved = True
    return order


def itinerary_trajectory(
    scenario: Scenario, stops, hover_times
) -> Trajectory:
    """Waypoints for a stop-and-go itinerary sampled on the slot grid.

    Flies start -> stops -> finish with every leg at maximum speed and
    hovers at stop i for ``hover_times[i]`` seconds.  Arriving early means
    hovering at the final position for the remaining slots.  Raises
    ValueError if the legs alone do not fit in the mission duration.
    """
    q_i = np.asarray(scenario.q_start, dtype=float)
    q_f = np.asarray(scenario.q_final, dtype=float)
    stops = [np.asarray(s, dtype=float) for s in stops]
    hover = np.asarray(hover_times, dtype=float)
    if hover.shape != (len(stops),) or (hover < 0.0).any():
        raise ValueError("need one nonnegative hover time per stop")

    path = [q_i] + stops + [q_f]
    leg_lengths = [
        math.dist(path[i], path[i + 1]) for i in range(len(path) - 1)
    ]
    t_fly = sum(leg_lengths) / scenario.v_max
    if t_fly > scenario.duration * (1.0 + 1e-9):
        raise ValueError("itinerary legs exceed the mission duration")

    seg_start, seg_end, seg_t0, seg_dt = [], [], [], []
    clock = 0.0
    for i in range(len(path) - 1):
        dt = leg_lengths[i] / scenario.v_max
        seg_start.append(path[i])
        seg_end.append(path[i + 1])
        seg_t0.append(clock)
        seg_dt.append(dt)
        clock += dt
        if i < len(stops):
            seg_start.append(path[i + 1])
            seg_end.append(path[i + 1])
            seg_t0.append(clock)
            seg_dt.append(hover[i])
            clock += hover[i]

    seg_t0 = np.asarray(seg_t0)
    seg_dt = np.asarray(seg_dt)
    seg_start = np.asarray(seg_start, dtype=float)
    seg_end = np.asarray(seg_end, dtype=float)

    times = np.arange(scenario.n_slots + 1) * scenario.slot_length
    seg_idx = np.clip(
        np.searchsorted(seg_t0, times, side="right") - 1, 0, len(seg_t0) - 1
    )
    frac = np.zeros_like(times)
    nonzero = seg_dt[seg_idx] > 0.0
    frac[nonzero] = np.clip(
        (times[nonzero] - seg_t0[seg_idx][nonzero]) / seg_dt[seg_idx][nonzero],
        0.0,
        1.0,
    )
    wp = seg_start[seg_idx] + frac[:, None] * (
        seg_end[seg_idx] - seg_start[seg_idx]
    )
    wp[0] = q_i
    wp[-1] = q_f
    return Trajectory(wp, scenario.slot_length)


def init_shf(scenario: Scenario, plan: HoverPlan) -> Trajectory:
    """Sequential hover-and-fly initialization from a hover plan.

    Visits the positive-duration hover locations in shortest-path order,
    flying each leg at maximum speed; remaining time is spent hovering,
    split proportionally to the plan durations.  When the mission is too
    short to complete the tour (or there is nothing to visit) the direct
    constant-speed flight is returned instead.
    """
    keep = np.flatnonzero(
        plan.durations > 1e-12 * max(scenario.duration, 1.0)
    )
    if keep.size == 0:
        return direct_flight(scenario)
    locs = plan.locations[keep]
    taus = plan.durations[keep]
    q_i = np.asarray(scenario.q_start, dtype=float)
    q_f = np.asarray(scenario.q_final, dtype=float)

    order = _tsp_order(locs, q_i, q_f)
    stops = [locs[i] for i in order]
    stop_taus = np.array([taus[i] for i in order])

    path = [q_i] + stops + [q_f]
    t_fly = sum(
        math.dist(path[i], path[i + 1]) for i in range(len(path) - 1)
    ) / scenario.v_max
    if scenario.duration < t_fly * (1.0 + 1e-12):
        return direct_flight(scenario)

    spare = scenario.duration - t_fly
    total_tau = float(stop_taus.sum())
    if total_tau > 0.0:
        hover = spare * stop_taus / total_tau
    else:
        hover = np.full(len(stops), spare / len(stops))
    return itinerary_trajectory(scenario, stops, hover)
