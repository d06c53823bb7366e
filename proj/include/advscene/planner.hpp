#pragma once

// Rule-based ego planner: longitudinal speed from an IDM car-following rule
// against the nearest leader projected onto the ego's lane path, lateral
// tracking of the path by pure pursuit. Pure function of the current world
// state, deterministic, and kinematically feasible under the action bounds.

#include <vector>

#include "advscene/map.hpp"
#include "advscene/scenario.hpp"
#include "advscene/world.hpp"

namespace advscene {

struct PlannerConfig {
    double desired_speed = 8.0;   // free-flow target, m/s
    double time_headway = 1.5;    // s
    double min_gap = 2.0;         // standstill bumper gap, m
    double comfort_decel = 2.5;   // IDM b, m/s^2
    double accel_gain = 2.0;      // IDM a, m/s^2
    int replan_period = 2;        // steps between replans in closed loop
    bool lane_changes = false;    // reserved; the planner keeps its lane
    double on_graph_lateral = 5.0;  // beyond this offset the ego is off-graph, m
    double lookahead_min = 3.0;     // pure pursuit floor, m
    double lookahead_gain = 0.8;    // lookahead = max(floor, gain * speed), s

    /// Throws WorldError on non-positive parameters or replan_period < 1.
    void check() const;
};

struct PlanResult {
    Trajectory traj;              // horizon+1 states, [0] = current ego state
    std::vector<Action> actions;  // horizon entries, bounded by WorldParams
    bool off_graph = false;       // constant-velocity fallback was used
    int lane = -1;                // matched lane index, -1 when off-graph
};

/// Plan sc.horizon steps for the ego from `current` (one state per scenario
/// agent, scenario order). Non-ego agents act as constant-speed obstacles
/// projected on the ego path.
PlanResult plan_ego(const Scenario& sc, const std::vector<AgentState>& current,
                    const PlannerConfig& cfg = {}, const WorldParams& world = {});

}  // namespace advscene
