#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "advscene/sim.hpp"

#include "json.hpp"

namespace advscene {

namespace {

using json = nlohmann::json;
using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t x = a + 0x9e3779b97f4a7c15ull * (b + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

/// Stationary agents qualify; moving ones must run along the road (either way)
/// or be closing on it laterally.
bool toward_or_parallel(const MapModel& map, const std::optional<LaneProjection>& ego_lane,
                        const AgentState& ego, const AgentState& cand) {
    if (cand.speed <= 0.1) return true;
    double road_h = 0.0, lat = 0.0;
    if (ego_lane) {
        const LaneProjection on_road = map.project_onto_lane(ego_lane->lane, cand.pos());
        road_h = on_road.lane_heading;
        lat = on_road.lateral;
    } else {
        road_h = ego.heading;
        const Vec2 rel = cand.pos() - ego.pos();
        lat = Vec2{std::cos(road_h), std::sin(road_h)}.cross(rel);
    }
    const double align = std::abs(angle_diff(cand.heading, road_h));
    if (align <= kPi / 6.0 || align >= kPi - kPi / 6.0) return true;
    const double lat_rate = cand.speed * std::sin(angle_diff(cand.heading, road_h));
    return lat * lat_rate <= 0.0;
}

json state_to_json(const AgentState& s) {
    return json{{"x_m", s.x}, {"y_m", s.y}, {"heading_rad", s.heading}, {"speed_mps", s.speed}};
}

AgentState state_from_json(const json& j) {
    AgentState s;
    s.x = j.at("x_m").get<double>();
    s.y = j.at("y_m").get<double>();
    s.heading = j.at("heading_rad").get<double>();
    s.speed = j.at("speed_mps").get<double>();
    return s;
}

json record_json(const RolloutRecord& r, bool with_timings) {
    json agents = json::array();
    for (size_t i = 0; i < r.agent_ids.size(); ++i) {
        json states = json::array();
        for (const AgentState& st : r.executed[i].states) states.push_back(state_to_json(st));
        json actions = json::array();
        for (const Action& a : r.actions[i]) {
            actions.push_back(json{{"accel_mps2", a.accel}, {"yaw_rate_radps", a.yaw_rate}});
        }
        agents.push_back(json{{"id", r.agent_ids[i]},
                              {"length_m", r.footprints[i].length},
                              {"width_m", r.footprints[i].width},
                              {"states", std::move(states)},
                              {"actions", std::move(actions)}});
    }
    json collisions = json::array();
    for (const CollisionEvent& c : r.collisions) {
        collisions.push_back(json{{"a", c.agent_a}, {"b", c.agent_b}, {"step", c.step}});
    }
    json offroad = json::array();
    for (const OffroadEvent& o : r.offroad) {
        offroad.push_back(json{{"agent", o.agent}, {"step", o.step}});
    }
    json doc{{"schema", "rollout.v1"},
             {"seed", r.seed},
             {"ego_id", r.ego_id},
             {"adv_id", r.adv_id},
             {"tick_s", r.executed.empty() ? 0.5 : r.executed.front().tick},
             {"steps", r.steps},
             {"termination", termination_name(r.termination)},
             {"failure_message", r.failure_message},
             {"replan_losses", r.replan_losses},
             {"agents", std::move(agents)},
             {"collisions", std::move(collisions)},
             {"offroad", std::move(offroad)}};
    if (with_timings) {
        doc["sim_time_s"] = r.sim_time_s;
        doc["gen_time_s"] = r.gen_time_s;
    }
    return doc;
}

}  // namespace

std::string termination_name(Termination t) {
    switch (t) {
        case Termination::Collision: return "collision";
        case Termination::Horizon: return "horizon";
        case Termination::Failure: return "failure";
    }
    throw WorldError("termination_name: bad value");
}

Termination parse_termination(const std::string& name) {
    if (name == "collision") return Termination::Collision;
    if (name == "horizon") return Termination::Horizon;
    if (name == "failure") return Termination::Failure;
    throw WorldError("parse_termination: unknown termination '" + name + "'");
}

void RolloutRecord::check() const {
    const size_t n = agent_ids.size();
    if (n == 0) throw WorldError("rollout: no agents");
    if (executed.size() != n || actions.size() != n || footprints.size() != n) {
        throw WorldError("rollout: per-agent arrays disagree with agent_ids");
    }
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            if (agent_ids[i] == agent_ids[j]) throw WorldError("rollout: duplicate agent id");
        }
    }
    if (steps < 0) throw WorldError("rollout: negative step count");
    for (size_t i = 0; i < n; ++i) {
        if (executed[i].states.size() != static_cast<size_t>(steps) + 1) {
            throw WorldError("rollout: trajectory length disagrees with steps");
        }
        if (actions[i].size() != static_cast<size_t>(steps)) {
            throw WorldError("rollout: action count disagrees with steps");
        }
    }
    auto known = [&](int id) {
        return std::find(agent_ids.begin(), agent_ids.end(), id) != agent_ids.end();
    };
    for (const CollisionEvent& c : collisions) {
        if (!known(c.agent_a) || !known(c.agent_b) || c.agent_a >= c.agent_b) {
            throw WorldError("rollout: collision event references bad agents");
        }
        if (c.step < 1 || c.step > steps) throw WorldError("rollout: collision step out of range");
    }
    for (const OffroadEvent& o : offroad) {
        if (!known(o.agent)) throw WorldError("rollout: offroad event references bad agent");
        if (o.step < 1 || o.step > steps) throw WorldError("rollout: offroad step out of range");
    }
    for (double l : replan_losses) {
        if (!std::isfinite(l)) throw WorldError("rollout: non-finite replan loss");
    }
    if (sim_time_s < 0.0 || gen_time_s < 0.0) throw WorldError("rollout: negative timing");
}

std::string record_signature(const RolloutRecord& r) { return record_json(r, false).dump(2); }

void SimConfig::check() const {
    if (sim_steps < 1) throw WorldError("sim: sim_steps must be at least 1");
    planner.check();
}

int select_adversary(const Scenario& sc) {
    if (!sc.map) throw WorldError("select_adversary: scenario has no map");
    if (sc.agents.size() < 2) throw WorldError("select_adversary: no non-ego agents");
    const AgentState ego = sc.ego().current();
    const auto ego_lane = sc.map->nearest_lane(ego.pos(), ego.heading);

    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (const ScenarioAgent& a : sc.agents) {
        if (a.id == sc.ego_id) continue;
        const AgentState s = a.current();
        const auto lane = sc.map->nearest_lane(s.pos(), s.heading);
        if (!lane || lane->dist > 5.0) continue;
        if (!toward_or_parallel(*sc.map, ego_lane, ego, s)) continue;
        const double d = (s.pos() - ego.pos()).norm();
        if (d < best_d || (d == best_d && a.id < best)) {
            best = a.id;
            best_d = d;
        }
    }
    if (best < 0) throw WorldError("select_adversary: no feasible adversary candidate");
    return best;
}

RolloutRecord run_closed_loop(const Scenario& sc0, const SimModels& models,
                              const GuidanceProgram* guidance, const SimConfig& cfg) {
    const auto t0 = clock_type::now();
    cfg.check();
    if (!models.codec || !models.denoiser || !models.sched) {
        throw WorldError("sim: codec, denoiser and schedule must all be provided");
    }
    sc0.validate();
    const CodecParams& codec = *models.codec;
    const WorldParams& world = codec.world;
    const int period = cfg.planner.replan_period;
    if (period > codec.cfg.horizon) {
        throw WorldError("sim: replan period exceeds the generation horizon");
    }
    const int win = codec.cfg.t_hist + 1;
    if (sc0.history_len() < win) {
        throw WorldError("sim: scenario history shorter than the codec window");
    }

    Scenario sc = sc0;
    sc.horizon = codec.cfg.horizon;
    sc.adv_id = select_adversary(sc0);
    for (ScenarioAgent& a : sc.agents) {
        auto& st = a.past.states;
        if (static_cast<int>(st.size()) > win) st.erase(st.begin(), st.end() - win);
        a.past.tick = sc.tick;
    }

    const int n = static_cast<int>(sc.agents.size());
    RolloutRecord rec;
    rec.seed = cfg.seed;
    rec.ego_id = sc.ego_id;
    rec.adv_id = sc.adv_id;
    rec.executed.resize(n);
    rec.actions.resize(n);
    std::vector<int> dec_index(n, -1);
    {
        int di = 0;
        for (int i = 0; i < n; ++i) {
            rec.agent_ids.push_back(sc.agents[i].id);
            rec.footprints.push_back(sc.agents[i].footprint);
            rec.executed[i].tick = sc.tick;
            rec.executed[i].states.push_back(sc.agents[i].current());
            if (sc.agents[i].id != sc.ego_id) dec_index[i] = di++;
        }
    }

    // rising-edge event tracking, seeded from the initial states
    std::vector<uint8_t> colliding(static_cast<size_t>(n) * n, 0);
    std::vector<uint8_t> off(n, 0);
    auto scan_events = [&](int step, bool record) {
        bool adv_ego = false;
        for (int i = 0; i < n; ++i) {
            const AgentState& si = rec.executed[i].states.back();
            const bool now_off = !sc.map->drivable_at(si.pos());
            if (now_off && !off[i] && record) rec.offroad.push_back({sc.agents[i].id, step});
            off[i] = now_off ? 1 : 0;
            for (int j = i + 1; j < n; ++j) {
                const AgentState& sj = rec.executed[j].states.back();
                const bool now = rects_overlap(si, sc.agents[i].footprint, sj,
                                               sc.agents[j].footprint);
                uint8_t& was = colliding[static_cast<size_t>(i) * n + j];
                if (now && !was && record) {
                    const int a = std::min(sc.agents[i].id, sc.agents[j].id);
                    const int b = std::max(sc.agents[i].id, sc.agents[j].id);
                    rec.collisions.push_back({a, b, step});
                    const bool pair_adv_ego = (a == std::min(sc.ego_id, sc.adv_id) &&
                                               b == std::max(sc.ego_id, sc.adv_id));
                    adv_ego = adv_ego || pair_adv_ego;
                }
                was = now ? 1 : 0;
            }
        }
        return adv_ego;
    };
    scan_events(0, false);

    int global_step = 0;
    int replan = 0;
    bool done = false;
    while (!done && global_step < cfg.sim_steps) {
        std::vector<AgentState> current;
        current.reserve(n);
        for (const ScenarioAgent& a : sc.agents) current.push_back(a.current());

        const PlanResult plan = plan_ego(sc, current, cfg.planner, world);

        const CondLatent cond = encode_prior(sc, codec);
        DslObjective obj;
        GuidanceObjective* op = nullptr;
        if (guidance) {
            obj.program = *guidance;
            obj.ego_future = plan.traj;
            obj.world = world;
            op = &obj;
        }
        GuidedSampleConfig gcfg = cfg.sample;
        gcfg.seed = mix_seed(cfg.seed, static_cast<uint64_t>(replan));

        const auto t_gen = clock_type::now();
        GuidedSampleResult gs;
        try {
            gs = guided_sample(sc, cond, op, codec, *models.denoiser, *models.sched, gcfg);
        } catch (const std::exception& e) {
            rec.gen_time_s += seconds_since(t_gen);
            rec.termination = Termination::Failure;
            rec.failure_message = e.what();
            break;
        }
        rec.gen_time_s += seconds_since(t_gen);
        if (gs.samples.empty()) {
            rec.termination = Termination::Failure;
            rec.failure_message =
                gs.failures.empty() ? "no sample produced" : gs.failures.front();
            break;
        }
        const SelectedSample sel = select_best(gs, sc, codec);
        if (op) rec.replan_losses.push_back(gs.losses[sel.index]);
        const DecodeOut dec = decode(sel.z, sc, codec);
        if (dec.agent_ids != sc.non_ego_ids()) {
            throw WorldError("sim: decoded agents disagree with the scenario's non-ego set");
        }
        ++replan;

        const int todo = std::min(period, cfg.sim_steps - global_step);
        for (int s = 1; s <= todo; ++s) {
            ++global_step;
            for (int i = 0; i < n; ++i) {
                AgentState ns;
                Action act;
                if (sc.agents[i].id == sc.ego_id) {
                    ns = plan.traj.states[s];
                    act = plan.actions[s - 1];
                } else {
                    const int di = dec_index[i];
                    ns = dec.futures[di].states[s];
                    act = dec.actions[di][s - 1];
                }
                rec.executed[i].states.push_back(ns);
                rec.actions[i].push_back(act);
                auto& window = sc.agents[i].past.states;
                window.push_back(ns);
                window.erase(window.begin());
            }
            if (scan_events(global_step, true)) {
                rec.termination = Termination::Collision;
                done = true;
                break;
            }
        }
    }

    rec.steps = global_step;
    rec.sim_time_s = seconds_since(t0);
    rec.check();
    return rec;
}

BatchResult run_batch(const std::vector<Scenario>& scenarios, const SimModels& models,
                      const GuidanceProgram* guidance, const SimConfig& cfg, int jobs) {
    const auto t0 = clock_type::now();
    if (scenarios.empty()) throw WorldError("run_batch: no scenarios");
    cfg.check();
    if (jobs < 1) throw WorldError("run_batch: jobs must be at least 1");

    BatchResult out;
    out.records.resize(scenarios.size());
    std::atomic<size_t> cursor{0};
    auto worker = [&]() {
        for (;;) {
            const size_t i = cursor.fetch_add(1);
            if (i >= scenarios.size()) return;
            SimConfig local = cfg;
            local.seed = mix_seed(cfg.seed, i);
            try {
                out.records[i] = run_closed_loop(scenarios[i], models, guidance, local);
            } catch (const std::exception& e) {
                RolloutRecord rec;
                rec.seed = local.seed;
                rec.ego_id = scenarios[i].ego_id;
                for (const ScenarioAgent& a : scenarios[i].agents) {
                    rec.agent_ids.push_back(a.id);
                    rec.footprints.push_back(a.footprint);
                    Trajectory t;
                    t.tick = scenarios[i].tick;
                    t.states.push_back(a.current());
                    rec.executed.push_back(std::move(t));
                    rec.actions.emplace_back();
                }
                rec.termination = Termination::Failure;
                rec.failure_message = e.what();
                out.records[i] = std::move(rec);
            }
        }
    };
    const int workers = std::min<int>(jobs, static_cast<int>(scenarios.size()));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    out.wall_time_s = seconds_since(t0);
    return out;
}

std::string rollout_to_json(const RolloutRecord& r) { return record_json(r, true).dump(2); }

RolloutRecord rollout_from_json(const std::string& text) {
    json doc = json::parse(text);
    if (doc.at("schema").get<std::string>() != "rollout.v1") {
        throw WorldError("rollout_from_json: unsupported schema");
    }
    RolloutRecord r;
    r.seed = doc.at("seed").get<uint64_t>();
    r.ego_id = doc.at("ego_id").get<int>();
    r.adv_id = doc.at("adv_id").get<int>();
    r.steps = doc.at("steps").get<int>();
    r.termination = parse_termination(doc.at("termination").get<std::string>());
    r.failure_message = doc.at("failure_message").get<std::string>();
    r.replan_losses = doc.at("replan_losses").get<std::vector<double>>();
    const double tick = doc.at("tick_s").get<double>();
    for (const json& ja : doc.at("agents")) {
        r.agent_ids.push_back(ja.at("id").get<int>());
        VehicleFootprint fp;
        fp.length = ja.at("length_m").get<double>();
        fp.width = ja.at("width_m").get<double>();
        r.footprints.push_back(fp);
        Trajectory t;
        t.tick = tick;
        for (const json& js : ja.at("states")) t.states.push_back(state_from_json(js));
        r.executed.push_back(std::move(t));
        std::vector<Action> acts;
        for (const json& jt : ja.at("actions")) {
            acts.push_back({jt.at("accel_mps2").get<double>(),
                            jt.at("yaw_rate_radps").get<double>()});
        }
        r.actions.push_back(std::move(acts));
    }
    for (const json& jc : doc.at("collisions")) {
        r.collisions.push_back(
            {jc.at("a").get<int>(), jc.at("b").get<int>(), jc.at("step").get<int>()});
    }
    for (const json& jo : doc.at("offroad")) {
        r.offroad.push_back({jo.at("agent").get<int>(), jo.at("step").get<int>()});
    }
    if (doc.contains("sim_time_s")) r.sim_time_s = doc.at("sim_time_s").get<double>();
    if (doc.contains("gen_time_s")) r.gen_time_s = doc.at("gen_time_s").get<double>();
    r.check();
    return r;
}

void save_rollout(const RolloutRecord& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw WorldError("save_rollout: cannot open " + path);
    out << rollout_to_json(r);
    out << '\n';
    if (!out) throw WorldError("save_rollout: write failed for " + path);
}

RolloutRecord load_rollout(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw WorldError("load_rollout: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return rollout_from_json(buf.str());
}

std::vector<std::string> save_batch(const BatchResult& batch, const std::string& dir,
                                    const std::string& config_hash) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> files;
    json names = json::array();
    for (size_t i = 0; i < batch.records.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "rollout_%03zu.json", i);
        const std::string path = dir + "/" + name;
        save_rollout(batch.records[i], path);
        files.push_back(path);
        names.push_back(name);
    }
    json manifest{{"schema", "batch.v1"},
                  {"config_hash", config_hash},
                  {"wall_time_s", batch.wall_time_s},
                  {"records", std::move(names)}};
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw WorldError("save_batch: cannot open manifest");
    out << manifest.dump(2) << '\n';
    return files;
}

}  // namespace advscene
