#include "advscene/planner.hpp"

#include <algorithm>
#include <cmath>

namespace advscene {

namespace {

struct PathPoint {
    Vec2 pos;
    double heading = 0.0;
    double s = 0.0;  // cumulative arc length
};

std::vector<PathPoint> with_arc_lengths(const std::vector<LanePoint>& pts) {
    std::vector<PathPoint> out;
    out.reserve(pts.size());
    double s = 0.0;
    for (size_t i = 0; i < pts.size(); ++i) {
        if (i > 0) s += (pts[i].pos - pts[i - 1].pos).norm();
        out.push_back({pts[i].pos, pts[i].heading, s});
    }
    return out;
}

struct PathProjection {
    double s = 0.0;
    double lateral = 0.0;  // signed, left of travel positive
    double dist = 0.0;
    double heading = 0.0;  // path heading at the projection
};

PathProjection project_onto_path(const std::vector<PathPoint>& path, const Vec2& p) {
    PathProjection best;
    best.dist = 1e18;
    for (size_t i = 0; i + 1 < path.size(); ++i) {
        const Vec2 a = path[i].pos, b = path[i + 1].pos;
        const Vec2 ab = b - a;
        const double len2 = ab.dot(ab);
        const double u = len2 > 0.0 ? clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        const Vec2 q{a.x + u * ab.x, a.y + u * ab.y};
        const double d = (p - q).norm();
        if (d < best.dist) {
            const double seg = std::sqrt(len2);
            const double heading = seg > 1e-9 ? std::atan2(ab.y, ab.x) : path[i].heading;
            const double cross = ab.x * (p.y - a.y) - ab.y * (p.x - a.x);
            best = {path[i].s + u * seg, seg > 1e-9 ? cross / seg : 0.0, d, heading};
        }
    }
    return best;
}

Vec2 point_at_arc(const std::vector<PathPoint>& path, double s) {
    if (s <= path.front().s) return path.front().pos;
    for (size_t i = 0; i + 1 < path.size(); ++i) {
        if (s > path[i + 1].s) continue;
        const double seg = path[i + 1].s - path[i].s;
        const double u = seg > 1e-9 ? (s - path[i].s) / seg : 0.0;
        const Vec2 a = path[i].pos, b = path[i + 1].pos;
        return {a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)};
    }
    return path.back().pos;
}

double idm_accel(const PlannerConfig& cfg, double v, double gap, double v_lead) {
    const double free_term = 1.0 - std::pow(v / cfg.desired_speed, 4.0);
    if (gap >= 1e17) return cfg.accel_gain * free_term;
    const double dv = v - v_lead;
    const double s_star =
        cfg.min_gap +
        std::max(0.0, v * cfg.time_headway +
                          v * dv / (2.0 * std::sqrt(cfg.accel_gain * cfg.comfort_decel)));
    const double ratio = s_star / std::max(gap, 0.1);
    return cfg.accel_gain * (free_term - ratio * ratio);
}

PlanResult fallback_plan(const AgentState& start, int horizon, double tick,
                         const WorldParams& world) {
    PlanResult out;
    out.off_graph = true;
    out.actions.assign(static_cast<size_t>(horizon), Action{0.0, 0.0});
    out.traj = rollout(start, out.actions, tick, world);
    return out;
}

}  // namespace

void PlannerConfig::check() const {
    if (desired_speed <= 0.0 || time_headway <= 0.0 || min_gap <= 0.0 ||
        comfort_decel <= 0.0 || accel_gain <= 0.0 || on_graph_lateral <= 0.0 ||
        lookahead_min <= 0.0 || lookahead_gain <= 0.0) {
        throw WorldError("planner parameters must be positive");
    }
    if (replan_period < 1) throw WorldError("replan_period must be at least 1");
}

PlanResult plan_ego(const Scenario& sc, const std::vector<AgentState>& current,
                    const PlannerConfig& cfg, const WorldParams& world) {
    cfg.check();
    if (current.size() != sc.agents.size()) {
        throw WorldError("plan_ego needs one current state per scenario agent");
    }
    if (!sc.map) throw WorldError("scenario has no map");

    size_t ego_i = sc.agents.size();
    for (size_t i = 0; i < sc.agents.size(); ++i) {
        if (sc.agents[i].id == sc.ego_id) ego_i = i;
    }
    if (ego_i == sc.agents.size()) throw WorldError("ego agent missing from scenario");
    const AgentState ego0 = current[ego_i];
    if (!ego0.finite()) throw WorldError("ego state is not finite");

    const auto proj = sc.map->nearest_lane(ego0.pos(), ego0.heading);
    if (!proj || proj->dist > cfg.on_graph_lateral) {
        return fallback_plan(ego0, sc.horizon, sc.tick, world);
    }

    const double brake_dist =
        cfg.desired_speed * cfg.desired_speed / (2.0 * cfg.comfort_decel);
    const double need =
        std::max(60.0, cfg.desired_speed * sc.horizon * sc.tick + 2.0 * cfg.lookahead_min +
                           brake_dist) +
        20.0;
    const auto pts = sc.map->path_from(proj->lane, proj->s, need, false);
    if (pts.size() < 2) {
        // at the very end of the known road: brake straight to a stop
        PlanResult out;
        out.lane = proj->lane;
        out.traj.tick = sc.tick;
        out.traj.states.push_back(ego0);
        AgentState st = ego0;
        for (int t = 0; t < sc.horizon; ++t) {
            Action act;
            act.accel = clamp(-st.speed / sc.tick, -world.accel_max, 0.0);
            st = bicycle_step(st, act, sc.tick, world);
            out.actions.push_back(act);
            out.traj.states.push_back(st);
        }
        return out;
    }
    const auto path = with_arc_lengths(pts);
    const double path_end = path.back().s;
    const double lane_half = 0.5 * sc.map->lanes[proj->lane].width;

    // nearest on-path agent ahead of the ego, treated as a constant-speed leader
    const double s_ego0 = project_onto_path(path, ego0.pos()).s;
    double lead_s0 = 1e18, lead_v = 0.0, lead_halves = 0.0;
    for (size_t j = 0; j < current.size(); ++j) {
        if (j == ego_i) continue;
        const auto on_path = project_onto_path(path, current[j].pos());
        if (std::abs(on_path.lateral) > lane_half + 0.3) continue;
        if (on_path.dist > lane_half + 2.0) continue;
        if (on_path.s <= s_ego0 || on_path.s - s_ego0 > 80.0) continue;
        if (on_path.s < lead_s0) {
            lead_s0 = on_path.s;
            lead_v = std::max(0.0, current[j].speed *
                                       std::cos(angle_diff(current[j].heading, on_path.heading)));
            lead_halves = 0.5 * (sc.agents[ego_i].footprint.length +
                                 sc.agents[j].footprint.length);
        }
    }

    PlanResult out;
    out.lane = proj->lane;
    out.traj.tick = sc.tick;
    out.traj.states.push_back(ego0);
    AgentState st = ego0;
    for (int t = 0; t < sc.horizon; ++t) {
        const auto here = project_onto_path(path, st.pos());

        double gap = 1e18;
        if (lead_s0 < 1e17) {
            const double lead_s = lead_s0 + lead_v * t * sc.tick;
            gap = std::max(0.1, lead_s - here.s - lead_halves);
        }
        double accel = idm_accel(cfg, st.speed, gap, lead_v);
        // the path runs out where the known road does; hold speed under a
        // constant-deceleration envelope so the ego stops before the end
        const double run_out = path_end - 1.0 - here.s;
        const double v_allow = std::sqrt(2.0 * cfg.comfort_decel * std::max(0.0, run_out));
        accel = std::min(accel, (v_allow - st.speed) / sc.tick);

        Action act;
        act.accel = clamp(accel, -world.accel_max, world.accel_max);

        const double ld = std::max(cfg.lookahead_min, cfg.lookahead_gain * st.speed);
        if (path_end - here.s > 1.0) {
            const Vec2 target = point_at_arc(path, std::min(here.s + ld, path_end));
            const double alpha =
                angle_diff(std::atan2(target.y - st.y, target.x - st.x), st.heading);
            const double curvature = 2.0 * std::sin(alpha) / ld;
            act.yaw_rate = clamp(st.speed * curvature, -world.yaw_rate_max, world.yaw_rate_max);
        }

        st = bicycle_step(st, act, sc.tick, world);
        out.actions.push_back(act);
        out.traj.states.push_back(st);
    }
    return out;
}

}  // namespace advscene
