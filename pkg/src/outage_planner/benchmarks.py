"""Reference planning schemes the joint optimizer is compared against.

* trajectory-only: every sensor transmits at its full budget in every
  slot; only the trajectory is optimized (successive convex steps).
* power-only: the UAV flies the straight constant-speed path; the power
  schedule is recovered on it.
* fly-hover-fly: the UAV flies at maximum speed to a single hover point,
  waits there, then flies on to the finish; the hover point is picked by
  scanning a grid and recovering powers on each candidate itinerary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from outage_planner.channel import outage_probability
from outage_planner.power_recovery import (
    max_active_upper_bound,
    recover_powers,
)
from outage_planner.relaxed_optimum import GridSpec
from outage_planner.scenario import PowerSchedule, Scenario, Trajectory
from outage_planner.sca_planner import (
    TraceEntry,
    _state_from_plan,
    direct_flight,
    itinerary_trajectory,
    trajectory_step,
)

FHF_GRID_POINTS = 41   # default via-point grid resolution per axis


@dataclass(frozen=True)
class BenchmarkResult:
    name: str
    trajectory: Trajectory
    schedule: PowerSchedule
    outage: float
    details: dict = field(default_factory=dict)


def _evaluated(name, trajectory, schedule, scenario, **details):
    out = outage_probability(trajectory, schedule, scenario)
    return BenchmarkResult(name, trajectory, schedule, out, dict(details))


def run_trajectory_only(
    scenario: Scenario,
    init: Trajectory | None = None,
    max_rounds: int = 50,
    rel_improvement: float = 1e-4,
) -> BenchmarkResult:
    """Optimize only the trajectory; powers stay at the full budgets."""
    trajectory = init if init is not None else direct_flight(scenario)
    powers = np.broadcast_to(
        scenario.power_budgets[:, None],
        (scenario.n_sensors, scenario.n_slots),
    ).copy()
    state = _state_from_plan(trajectory, powers, scenario)
    steps = 0
    for _ in range(max_rounds):
        before = state.objective
        state, ok = trajectory_step(state, scenario)
        steps += 1
        state.trace.append(TraceEntry(steps, state.objective, "trajectory", ok))
        if not ok:
            break
        if state.objective - before <= rel_improvement * max(abs(before), 1e-12):
            break
    return _evaluated(
        "trajectory_only",
        state.trajectory,
        PowerSchedule(state.powers),
        scenario,
        steps=steps,
        objective=state.objective,
    )


def run_power_only(
    scenario: Scenario, budget_norm: str = "horizon"
) -> BenchmarkResult:
    """Recover powers on the straight constant-speed flight."""
    trajectory = direct_flight(scenario)
    recovered = recover_powers(scenario, trajectory, budget_norm)
    return _evaluated(
        "power_only",
        trajectory,
        recovered.schedule,
        scenario,
        n_active=recovered.n_active,
        budget_norm=budget_norm,
    )


def run_fly_hover_fly(
    scenario: Scenario,
    grid: GridSpec | None = None,
    budget_norm: str = "horizon",
) -> BenchmarkResult:
    """Best single-hover itinerary over a grid of candidate hover points.

    Ties in outage are broken by row-major grid order.  Candidates whose
    solver-free bound cannot beat the incumbent are skipped; the scan is
    seeded with the candidate of largest bound so pruning bites early.
    """
    if grid is None:
        grid = GridSpec.from_scenario(scenario, resolution=FHF_GRID_POINTS)
    points = grid.points()
    n = scenario.n_slots
    q_i = np.asarray(scenario.q_start)
    q_f = np.asarray(scenario.q_final)
    v = scenario.v_max

    legs = np.linalg.norm(points - q_i[None, :], axis=1) + np.linalg.norm(
        q_f[None, :] - points, axis=1
    )
    hover = scenario.duration - legs / v
    reachable = np.flatnonzero(hover >= -1e-9 * scenario.duration)
    if reachable.size == 0:
        # no detour fits; degenerate to the straight flight
        recovered = recover_powers(
            scenario, direct_flight(scenario), budget_norm
        )
        return _evaluated(
            "fly_hover_fly",
            direct_flight(scenario),
            recovered.schedule,
            scenario,
            via=None,
            budget_norm=budget_norm,
        )

    def build(idx: int) -> Trajectory:
        return itinerary_trajectory(
            scenario, [points[idx]], [max(hover[idx], 0.0)]
        )

    bounds = np.full(points.shape[0], -1, dtype=int)
    for idx in reachable:
        bounds[idx] = max_active_upper_bound(scenario, build(idx), budget_norm)

    # seed the incumbent with the most promising candidate
    seed = int(np.flatnonzero(bounds == bounds.max())[0])
    seed_rec = recover_powers(scenario, build(seed), budget_norm)
    best_idx, best_rec = seed, seed_rec
    evaluations = 1

    for idx in reachable:
        lb_outage = (n - bounds[idx]) / n
        if lb_outage > best_rec.outage:
            continue
        if lb_outage == best_rec.outage and idx >= best_idx:
            continue
        if idx == seed:
            rec = seed_rec
        else:
            rec = recover_powers(scenario, build(idx), budget_norm)
            evaluations += 1
        if rec.outage < best_rec.outage or (
            rec.outage == best_rec.outage and idx < best_idx
        ):
            best_idx, best_rec = idx, rec

    trajectory = build(best_idx)
    return _evaluated(
        "fly_hover_fly",
        trajectory,
        best_rec.schedule,
        scenario,
        via=tuple(np.round(points[best_idx], 12)),
        hover_s=float(max(hover[best_idx], 0.0)),
        n_active=best_rec.n_active,
        evaluations=evaluations,
        budget_norm=budget_norm,
    )
