#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "advscene/geometry.hpp"

namespace advscene {

/// Kinematic state of one agent: 2D position, heading in (-pi, pi], speed >= 0.
struct AgentState {
    double x = 0.0;        // m
    double y = 0.0;        // m
    double heading = 0.0;  // rad, (-pi, pi]
    double speed = 0.0;    // m/s, >= 0

    Vec2 pos() const { return {x, y}; }
    Vec2 velocity() const { return {speed * std::cos(heading), speed * std::sin(heading)}; }
    bool finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(heading) && std::isfinite(speed);
    }
};

/// Longitudinal acceleration and yaw rate.
struct Action {
    double accel = 0.0;     // m/s^2
    double yaw_rate = 0.0;  // rad/s

    bool finite() const { return std::isfinite(accel) && std::isfinite(yaw_rate); }
};

/// Kinematic limits shared by integration, decoding and feasibility checks.
struct WorldParams {
    double accel_max = 6.0;     // |accel| bound, m/s^2
    double yaw_rate_max = 1.0;  // |yaw_rate| bound, rad/s
    double v_max = 20.0;        // speed clamp, m/s
    double d_buffer = 0.25;     // safety buffer in the vehicle collision penalty, m
};

/// State sequence at a fixed tick.
struct Trajectory {
    std::vector<AgentState> states;
    double tick = 0.5;  // s

    size_t size() const { return states.size(); }
    const AgentState& front() const { return states.front(); }
    const AgentState& back() const { return states.back(); }
};

/// Rectangular body with the single-disc radius used by the penalty functions.
struct VehicleFootprint {
    double length = 4.5;  // m
    double width = 2.0;   // m

    double disc_radius() const { return 0.5 * std::hypot(length, width); }
};

struct WorldError : std::runtime_error {
    explicit WorldError(const std::string& what) : std::runtime_error(what) {}
};

/// Semi-implicit bicycle update: speed and heading first, then position.
/// Differentiable in state and action except at the speed clamp boundary.
AgentState bicycle_step(const AgentState& state, const Action& action, double dt,
                        const WorldParams& params = {});

/// Partial derivatives of bicycle_step, used by the decoder's backward pass.
/// Two-stage chain: position rows are partials w.r.t. the *updated* speed and
/// heading; the speed/heading rows map those back to the previous state and
/// the action. Pull adjoints through position rows first, then speed/heading.
struct BicycleGrad {
    double dv_dv = 0.0, dv_da = 0.0;     // v' w.r.t. v, accel (zero when clamped)
    double dth_dth = 1.0, dth_dw = 0.0;  // th' w.r.t. th, yaw_rate
    double dx_dx = 1.0, dx_dv = 0.0, dx_dth = 0.0;  // x' w.r.t. x, v', th'
    double dy_dy = 1.0, dy_dv = 0.0, dy_dth = 0.0;  // y' w.r.t. y, v', th'
};
BicycleGrad bicycle_step_grad(const AgentState& state, const Action& action, double dt,
                              const WorldParams& params = {});

/// Autoregressive rollout: result has |actions|+1 states, element 0 = start.
Trajectory rollout(const AgentState& start, const std::vector<Action>& actions, double dt,
                   const WorldParams& params = {});

/// Vehicle-vehicle collision penalty: 1 - d/p for d <= p, else 0,
/// with p = r_i + r_j + d_buffer. Continuous, in [0, 1].
double veh_coll_pens(const Vec2& pos_i, const Vec2& pos_j, const VehicleFootprint& fp_i,
                     const VehicleFootprint& fp_j, double d_buffer);

/// Gradient of veh_coll_pens w.r.t. pos_i (negate for pos_j).
/// Subgradient 0 at d = p and at coincident centers.
Vec2 veh_coll_pens_grad(const Vec2& pos_i, const Vec2& pos_j, const VehicleFootprint& fp_i,
                        const VehicleFootprint& fp_j, double d_buffer);

/// Oriented-rectangle overlap via the separating-axis test.
bool rects_overlap(const AgentState& a, const VehicleFootprint& fa, const AgentState& b,
                   const VehicleFootprint& fb);

/// First step at which the two trajectories' rectangles overlap, or nullopt.
std::optional<int> detect_collision(const Trajectory& traj_a, const Trajectory& traj_b,
                                    const VehicleFootprint& fp_a, const VehicleFootprint& fp_b);

}  // namespace advscene
