#include "advscene/world.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace advscene {

AgentState bicycle_step(const AgentState& state, const Action& action, double dt,
                        const WorldParams& params) {
    if (!state.finite() || !action.finite() || !std::isfinite(dt)) {
        throw WorldError("bicycle_step: non-finite input");
    }
    if (dt <= 0.0) {
        throw WorldError("bicycle_step: dt must be positive");
    }
    AgentState next;
    next.speed = clamp(state.speed + action.accel * dt, 0.0, params.v_max);
    next.heading = normalize_angle(state.heading + action.yaw_rate * dt);
    next.x = state.x + next.speed * std::cos(next.heading) * dt;
    next.y = state.y + next.speed * std::sin(next.heading) * dt;
    return next;
}

BicycleGrad bicycle_step_grad(const AgentState& state, const Action& action, double dt,
                              const WorldParams& params) {
    BicycleGrad g;
    const double v_raw = state.speed + action.accel * dt;
    const bool clamped = v_raw < 0.0 || v_raw > params.v_max;
    g.dv_dv = clamped ? 0.0 : 1.0;
    g.dv_da = clamped ? 0.0 : dt;
    g.dth_dth = 1.0;
    g.dth_dw = dt;

    const double v_next = clamp(v_raw, 0.0, params.v_max);
    const double th_next = normalize_angle(state.heading + action.yaw_rate * dt);
    const double c = std::cos(th_next), s = std::sin(th_next);
    g.dx_dx = 1.0;
    g.dx_dv = c * dt;
    g.dx_dth = -v_next * s * dt;
    g.dy_dy = 1.0;
    g.dy_dv = s * dt;
    g.dy_dth = v_next * c * dt;
    return g;
}

Trajectory rollout(const AgentState& start, const std::vector<Action>& actions, double dt,
                   const WorldParams& params) {
    if (actions.empty()) {
        throw WorldError("rollout: empty action sequence");
    }
    Trajectory traj;
    traj.tick = dt;
    traj.states.reserve(actions.size() + 1);
    traj.states.push_back(start);
    for (const Action& a : actions) {
        traj.states.push_back(bicycle_step(traj.states.back(), a, dt, params));
    }
    return traj;
}

double veh_coll_pens(const Vec2& pos_i, const Vec2& pos_j, const VehicleFootprint& fp_i,
                     const VehicleFootprint& fp_j, double d_buffer) {
    if (!std::isfinite(pos_i.x) || !std::isfinite(pos_i.y) || !std::isfinite(pos_j.x) ||
        !std::isfinite(pos_j.y)) {
        throw WorldError("veh_coll_pens: non-finite position");
    }
    const double d = (pos_i - pos_j).norm();
    const double p = fp_i.disc_radius() + fp_j.disc_radius() + d_buffer;
    return d <= p ? 1.0 - d / p : 0.0;
}

Vec2 veh_coll_pens_grad(const Vec2& pos_i, const Vec2& pos_j, const VehicleFootprint& fp_i,
                        const VehicleFootprint& fp_j, double d_buffer) {
    const Vec2 diff = pos_i - pos_j;
    const double d = diff.norm();
    const double p = fp_i.disc_radius() + fp_j.disc_radius() + d_buffer;
    if (d >= p || d < 1e-12) return {0.0, 0.0};
    // d(1 - d/p)/d pos_i = -(1/p) * diff / d
    return diff * (-1.0 / (p * d));
}

namespace {

std::array<Vec2, 4> rect_corners(const AgentState& s, const VehicleFootprint& fp) {
    const double hl = 0.5 * fp.length, hw = 0.5 * fp.width;
    const Vec2 c{s.x, s.y};
    const std::array<Vec2, 4> local{{{hl, hw}, {hl, -hw}, {-hl, -hw}, {-hl, hw}}};
    std::array<Vec2, 4> out;
    for (size_t i = 0; i < 4; ++i) out[i] = c + rotate(local[i], s.heading);
    return out;
}

bool separated_on_axis(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b, const Vec2& axis) {
    double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
    for (const Vec2& p : a) {
        const double v = p.dot(axis);
        amin = std::min(amin, v);
        amax = std::max(amax, v);
    }
    for (const Vec2& p : b) {
        const double v = p.dot(axis);
        bmin = std::min(bmin, v);
        bmax = std::max(bmax, v);
    }
    return amax < bmin || bmax < amin;
}

}  // namespace

bool rects_overlap(const AgentState& a, const VehicleFootprint& fa, const AgentState& b,
                   const VehicleFootprint& fb) {
    const auto ca = rect_corners(a, fa);
    const auto cb = rect_corners(b, fb);
    const std::array<Vec2, 4> axes{{
        {std::cos(a.heading), std::sin(a.heading)},
        {-std::sin(a.heading), std::cos(a.heading)},
        {std::cos(b.heading), std::sin(b.heading)},
        {-std::sin(b.heading), std::cos(b.heading)},
    }};
    for (const Vec2& axis : axes) {
        if (separated_on_axis(ca, cb, axis)) return false;
    }
    return true;
}

std::optional<int> detect_collision(const Trajectory& traj_a, const Trajectory& traj_b,
                                    const VehicleFootprint& fp_a, const VehicleFootprint& fp_b) {
    if (traj_a.size() != traj_b.size()) {
        throw WorldError("detect_collision: trajectory length mismatch");
    }
    if (traj_a.tick != traj_b.tick) {
        throw WorldError("detect_collision: tick mismatch");
    }
    for (size_t t = 0; t < traj_a.size(); ++t) {
        if (rects_overlap(traj_a.states[t], fp_a, traj_b.states[t], fp_b)) {
            return static_cast<int>(t);
        }
    }
    return std::nullopt;
}

}  // namespace advscene
