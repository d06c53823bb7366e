#include <algorithm>
#include <cmath>
#include <random>

#include "advscene/scenario.hpp"

namespace advscene {

namespace {

Lane make_straight_lane(Vec2 from, Vec2 to, double width, double pt_spacing = 2.0) {
    Lane ln;
    ln.width = width;
    const Vec2 d = to - from;
    const double len = d.norm();
    const double heading = std::atan2(d.y, d.x);
    const int n = std::max(2, static_cast<int>(std::ceil(len / pt_spacing)) + 1);
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / (n - 1);
        ln.pts.push_back({from + d * t, heading});
    }
    return ln;
}

Lane make_arc_lane(Vec2 center, double radius, double a0, double a1, double width,
                   double pt_spacing = 2.0) {
    Lane ln;
    ln.width = width;
    const double arc = std::abs(a1 - a0) * radius;
    const int n = std::max(2, static_cast<int>(std::ceil(arc / pt_spacing)) + 1);
    const double dir = a1 > a0 ? 1.0 : -1.0;
    for (int i = 0; i < n; ++i) {
        const double a = a0 + (a1 - a0) * static_cast<double>(i) / (n - 1);
        const Vec2 p{center.x + radius * std::cos(a), center.y + radius * std::sin(a)};
        ln.pts.push_back({p, normalize_angle(a + dir * kPi / 2.0)});
    }
    return ln;
}

void rasterize(MapModel& map, double cell_m) {
    double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
    double max_w = 0.0;
    for (const Lane& ln : map.lanes) {
        max_w = std::max(max_w, ln.width);
        for (const LanePoint& p : ln.pts) {
            min_x = std::min(min_x, p.pos.x);
            max_x = std::max(max_x, p.pos.x);
            min_y = std::min(min_y, p.pos.y);
            max_y = std::max(max_y, p.pos.y);
        }
    }
    const double margin = max_w / 2.0 + 4.0;
    DrivableGrid& g = map.grid;
    g.cell_m = cell_m;
    g.origin_x = min_x - margin;
    g.origin_y = min_y - margin;
    g.nx = static_cast<int>(std::ceil((max_x - min_x + 2 * margin) / cell_m)) + 1;
    g.ny = static_cast<int>(std::ceil((max_y - min_y + 2 * margin) / cell_m)) + 1;
    g.cells.assign(static_cast<size_t>(g.nx) * g.ny, 0);

    // mark every cell whose center lies within width/2 (plus a road shoulder)
    // of a centerline segment; the slack keeps cells on the exact tangency
    // line between adjacent lanes from falling to floating-point ties
    const double shoulder = 1.5;
    for (const Lane& ln : map.lanes) {
        const double r = ln.width / 2.0 + shoulder + 1e-6;
        const int rc = static_cast<int>(std::ceil(r / cell_m)) + 1;
        for (size_t i = 0; i + 1 < ln.pts.size(); ++i) {
            const Vec2 a = ln.pts[i].pos, b = ln.pts[i + 1].pos;
            const Vec2 ab = b - a;
            const double len2 = ab.norm_sq();
            const int lo_x = static_cast<int>(std::floor((std::min(a.x, b.x) - g.origin_x) / cell_m)) - rc;
            const int hi_x = static_cast<int>(std::ceil((std::max(a.x, b.x) - g.origin_x) / cell_m)) + rc;
            const int lo_y = static_cast<int>(std::floor((std::min(a.y, b.y) - g.origin_y) / cell_m)) - rc;
            const int hi_y = static_cast<int>(std::ceil((std::max(a.y, b.y) - g.origin_y) / cell_m)) + rc;
            for (int iy = lo_y; iy <= hi_y; ++iy) {
                for (int ix = lo_x; ix <= hi_x; ++ix) {
                    if (!g.in_bounds(ix, iy)) continue;
                    if (g.at(ix, iy)) continue;
                    const Vec2 cc = g.cell_center(ix, iy);
                    const double u = len2 > 0.0 ? clamp((cc - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
                    const Vec2 q{a.x + u * ab.x, a.y + u * ab.y};
                    if ((cc - q).norm() <= r) g.at(ix, iy) = 1;
                }
            }
        }
    }
    map.build_distance_field();
}

std::shared_ptr<MapModel> build_map(ScenarioTemplate tmpl, double cell_m) {
    auto map = std::make_shared<MapModel>();
    const double w = 3.5;
    switch (tmpl) {
        case ScenarioTemplate::Straight: {
            map->lanes.push_back(make_straight_lane({-80, 0}, {120, 0}, w));
            map->lanes.push_back(make_straight_lane({-80, w}, {120, w}, w));
            map->lanes.push_back(make_straight_lane({-80, -w}, {120, -w}, w));
            map->lanes[0].adjacent = {1, 2};
            map->lanes[1].adjacent = {0};
            map->lanes[2].adjacent = {0};
            break;
        }
        case ScenarioTemplate::Curve: {
            const Vec2 c{0, 50};
            map->lanes.push_back(make_arc_lane(c, 50.0, -kPi / 2 - 1.0, -kPi / 2 + 1.0, w));
            map->lanes.push_back(make_arc_lane(c, 50.0 + w, -kPi / 2 - 1.0, -kPi / 2 + 1.0, w));
            map->lanes[0].adjacent = {1};
            map->lanes[1].adjacent = {0};
            break;
        }
        case ScenarioTemplate::Intersection: {
            // two-way east-west and north-south roads crossing at the origin
            map->lanes.push_back(make_straight_lane({-70, -1.75}, {70, -1.75}, w));  // eastbound
            map->lanes.push_back(make_straight_lane({70, 1.75}, {-70, 1.75}, w));    // westbound
            map->lanes.push_back(make_straight_lane({1.75, -70}, {1.75, 70}, w));    // northbound
            map->lanes.push_back(make_straight_lane({-1.75, 70}, {-1.75, -70}, w));  // southbound
            break;
        }
        case ScenarioTemplate::Merge: {
            Lane main_pre = make_straight_lane({-80, 0}, {20, 0}, w);
            Lane main_post = make_straight_lane({20, 0}, {140, 0}, w);
            // ramp approaches at a shallow angle and joins the main line
            Lane ramp;
            ramp.width = w;
            const Vec2 r0{-60, -14};
            const Vec2 r1{10, -1.0};
            const Vec2 join{20, 0};
            const int n = 40;
            for (int i = 0; i < n; ++i) {
                const double t = static_cast<double>(i) / (n - 1);
                // quadratic blend into the main lane direction
                const Vec2 p = r0 * ((1 - t) * (1 - t)) + r1 * (2 * t * (1 - t)) + join * (t * t);
                ramp.pts.push_back({p, 0.0});
            }
            for (size_t i = 0; i + 1 < ramp.pts.size(); ++i) {
                const Vec2 d = ramp.pts[i + 1].pos - ramp.pts[i].pos;
                ramp.pts[i].heading = std::atan2(d.y, d.x);
            }
            ramp.pts.back().heading = 0.0;
            main_pre.successors = {1};
            ramp.successors = {1};
            map->lanes.push_back(std::move(main_pre));   // 0
            map->lanes.push_back(std::move(main_post));  // 1
            map->lanes.push_back(std::move(ramp));       // 2
            break;
        }
    }
    rasterize(*map, cell_m);
    return map;
}

struct Placement {
    int lane = 0;
    double s = 0.0;
    double speed = 8.0;
    double desired = 8.0;
};

// IDM acceleration against an optional leader (gap in m, leader speed in m/s).
double idm_accel(double v, double v0, std::optional<std::pair<double, double>> leader) {
    const double a_max = 2.0, b = 2.5, s_min = 2.0, headway = 1.5;
    double interaction = 0.0;
    if (leader) {
        const double gap = std::max(leader->first, 0.1);
        const double dv = v - leader->second;
        const double s_star = s_min + std::max(0.0, v * headway + v * dv / (2.0 * std::sqrt(a_max * b)));
        interaction = (s_star / gap) * (s_star / gap);
    }
    const double ratio = v0 > 0.0 ? v / v0 : 1.0;
    return a_max * (1.0 - ratio * ratio * ratio * ratio - interaction);
}

// Pure-pursuit yaw rate toward a lookahead point on the path.
double pursuit_yaw_rate(const AgentState& st, const std::vector<LanePoint>& path,
                        const WorldParams& wp) {
    if (path.empty()) return 0.0;
    const double lookahead = std::max(3.0, st.speed * 0.9);
    // find first path point at least lookahead away
    Vec2 target = path.back().pos;
    for (const LanePoint& p : path) {
        if ((p.pos - st.pos()).norm() >= lookahead) {
            target = p.pos;
            break;
        }
    }
    const Vec2 rel = rotate(target - st.pos(), -st.heading);
    const double ld2 = rel.norm_sq();
    if (ld2 < 1e-6) return 0.0;
    const double curvature = 2.0 * rel.y / ld2;
    return clamp(st.speed * curvature, -wp.yaw_rate_max, wp.yaw_rate_max);
}

// One tick of the shared lane-following traffic policy for all agents at once.
std::vector<AgentState> traffic_step(const MapModel& map, const std::vector<AgentState>& states,
                                     const std::vector<double>& desired, const WorldParams& wp,
                                     double tick) {
    const int n = static_cast<int>(states.size());
    std::vector<AgentState> next(n);
    for (int i = 0; i < n; ++i) {
        const auto lane = map.nearest_lane(states[i].pos(), states[i].heading);
        Action a{0.0, 0.0};
        if (lane) {
            // leader: nearest agent ahead on this lane by arc length
            std::optional<std::pair<double, double>> leader;
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                const auto proj_j = map.project_onto_lane(lane->lane, states[j].pos());
                if (proj_j.dist > 2.0) continue;
                const double gap = proj_j.s - lane->s;
                if (gap > 0.3 && (!leader || gap < leader->first)) {
                    leader = {gap, states[j].speed};
                }
            }
            a.accel = clamp(idm_accel(states[i].speed, desired[i], leader), -wp.accel_max,
                            wp.accel_max);
            const auto path = map.path_from(lane->lane, lane->s, 40.0);
            a.yaw_rate = pursuit_yaw_rate(states[i], path, wp);
        }
        next[i] = bicycle_step(states[i], a, tick, wp);
    }
    return next;
}

}  // namespace

std::vector<Trajectory> continue_with_traffic(const Scenario& sc, int steps) {
    sc.validate();
    if (steps < 1) throw WorldError("continue_with_traffic: steps must be >= 1");
    const int n = static_cast<int>(sc.agents.size());
    std::vector<AgentState> states(n);
    std::vector<double> desired(n);
    std::vector<Trajectory> out(n);
    for (int i = 0; i < n; ++i) {
        states[i] = sc.agents[i].current();
        desired[i] = std::max(states[i].speed, 3.0);
        out[i].tick = sc.tick;
        out[i].states.push_back(states[i]);
    }
    WorldParams wp;
    for (int t = 0; t < steps; ++t) {
        states = traffic_step(*sc.map, states, desired, wp, sc.tick);
        for (int i = 0; i < n; ++i) out[i].states.push_back(states[i]);
    }
    return out;
}

std::vector<Scenario> synth_scenarios(uint64_t seed, int count, ScenarioTemplate tmpl,
                                      const SynthConfig& cfg) {
    if (count < 1) throw WorldError("synth_scenarios: count must be >= 1");
    auto map = build_map(tmpl, cfg.cell_m);

    std::vector<Scenario> out;
    out.reserve(count);
    for (int idx = 0; idx < count; ++idx) {
        for (uint64_t attempt = 0;; ++attempt) {
            if (attempt > 50) throw WorldError("synth_scenarios: placement failed");
            std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + idx * 0x100000001b3ull + attempt);
            std::uniform_real_distribution<double> u01(0.0, 1.0);

            // per-template placements; ego first
            std::vector<Placement> placements;
            auto add = [&](int lane, double s, double v) {
                Placement p;
                p.lane = lane;
                p.s = s;
                p.speed = v;
                p.desired = v;
                placements.push_back(p);
            };
            const int n_extra = 1 + static_cast<int>(u01(rng) * 3.0);  // 1..3 background agents
            switch (tmpl) {
                case ScenarioTemplate::Straight: {
                    add(0, 60 + u01(rng) * 10, 6 + u01(rng) * 3);           // ego
                    add(1 + (u01(rng) < 0.5 ? 0 : 1), 52 + u01(rng) * 16, 6 + u01(rng) * 4);  // adv candidate
                    for (int i = 0; i < n_extra; ++i) {
                        add(static_cast<int>(u01(rng) * 3), 15 + u01(rng) * 90, 5 + u01(rng) * 4);
                    }
                    break;
                }
                case ScenarioTemplate::Curve: {
                    add(0, 35 + u01(rng) * 10, 6 + u01(rng) * 2);
                    add(1, 30 + u01(rng) * 16, 6 + u01(rng) * 3);
                    for (int i = 0; i < n_extra; ++i) {
                        add(static_cast<int>(u01(rng) * 2), 8 + u01(rng) * 70, 5 + u01(rng) * 3);
                    }
                    break;
                }
                case ScenarioTemplate::Intersection: {
                    // ego eastbound approaching the junction; conflicting cross traffic
                    add(0, 38 + u01(rng) * 8, 6 + u01(rng) * 2);   // junction at s ~ 70
                    add(2 + (u01(rng) < 0.5 ? 0 : 1), 40 + u01(rng) * 10, 6 + u01(rng) * 3);
                    for (int i = 0; i < n_extra; ++i) {
                        add(static_cast<int>(u01(rng) * 4), 10 + u01(rng) * 45, 5 + u01(rng) * 3);
                    }
                    break;
                }
                case ScenarioTemplate::Merge: {
                    add(0, 62 + u01(rng) * 10, 7 + u01(rng) * 2);  // ego on main, join at s ~ 100
                    add(2, 52 + u01(rng) * 12, 7 + u01(rng) * 3);  // adv candidate on ramp
                    for (int i = 0; i < n_extra; ++i) {
                        add(u01(rng) < 0.5 ? 0 : 2, 10 + u01(rng) * 40, 5 + u01(rng) * 3);
                    }
                    break;
                }
            }

            // roll everyone forward with the traffic policy to build feasible pasts
            const int n = static_cast<int>(placements.size());
            std::vector<AgentState> states(n);
            std::vector<double> desired(n);
            std::vector<Trajectory> pasts(n);
            for (int i = 0; i < n; ++i) {
                const LanePoint lp = map->point_at(placements[i].lane, placements[i].s);
                states[i] = {lp.pos.x, lp.pos.y, lp.heading, placements[i].speed};
                desired[i] = placements[i].desired;
                pasts[i].tick = cfg.tick;
                pasts[i].states.push_back(states[i]);
            }
            for (int step = 0; step < cfg.t_hist; ++step) {
                states = traffic_step(*map, states, desired, cfg.world, cfg.tick);
                for (int i = 0; i < n; ++i) pasts[i].states.push_back(states[i]);
            }

            Scenario sc;
            sc.map = map;
            sc.seed = seed;
            sc.tick = cfg.tick;
            sc.horizon = cfg.horizon;
            sc.ego_id = 0;
            for (int i = 0; i < n; ++i) {
                ScenarioAgent a;
                a.id = i;
                a.footprint = VehicleFootprint{4.5, 2.0};
                a.past = pasts[i];
                sc.agents.push_back(std::move(a));
            }

            // verify: pasts collision-free, on-road, and an adversary candidate nearby
            bool ok = true;
            for (int i = 0; i < n && ok; ++i) {
                for (int j = i + 1; j < n && ok; ++j) {
                    if (detect_collision(sc.agents[i].past, sc.agents[j].past,
                                         sc.agents[i].footprint, sc.agents[j].footprint)) {
                        ok = false;
                    }
                }
            }
            for (int i = 0; i < n && ok; ++i) {
                for (const AgentState& st : sc.agents[i].past.states) {
                    if (!map->drivable_at(st.pos())) {
                        ok = false;
                        break;
                    }
                }
            }
            int best = -1;
            double best_d = 1e300;
            const Vec2 ego_pos = sc.agents[0].current().pos();
            for (int i = 1; i < n; ++i) {
                const double d = (sc.agents[i].current().pos() - ego_pos).norm();
                if (d < best_d) {
                    best_d = d;
                    best = i;
                }
            }
            if (best < 0 || best_d > 40.0) ok = false;
            if (!ok) continue;

            sc.adv_id = best;
            sc.validate();
            out.push_back(std::move(sc));
            break;
        }
    }
    return out;
}

}  // namespace advscene
