#pragma once

#include <memory>
#include <string>
#include <vector>

#include "advscene/map.hpp"
#include "advscene/world.hpp"

namespace advscene {

struct ScenarioAgent {
    int id = -1;
    VehicleFootprint footprint;
    Trajectory past;  // T_hist+1 states, last = current

    const AgentState& current() const { return past.states.back(); }
};

/// Map + agents + role labels + horizons. Immutable after construction.
struct Scenario {
    std::shared_ptr<const MapModel> map;
    std::vector<ScenarioAgent> agents;
    int ego_id = 0;
    int adv_id = 1;
    int horizon = 12;   // future steps T
    double tick = 0.5;  // s
    uint64_t seed = 0;  // generation seed, carried for provenance

    const ScenarioAgent& agent(int id) const;
    const ScenarioAgent& ego() const { return agent(ego_id); }
    const ScenarioAgent& adv() const { return agent(adv_id); }
    std::vector<int> non_ego_ids() const;
    int history_len() const { return static_cast<int>(agents.front().past.size()); }

    /// Throws WorldError when a structural invariant is violated.
    void validate() const;
};

enum class ScenarioTemplate { Straight, Curve, Intersection, Merge };

ScenarioTemplate parse_template(const std::string& name);
std::string template_name(ScenarioTemplate t);

struct SynthConfig {
    int t_hist = 4;    // past steps (past has t_hist+1 states)
    int horizon = 12;  // future steps
    double tick = 0.5;
    double cell_m = 0.5;
    WorldParams world;
};

/// Deterministic procedural scenarios: background agents follow lane centerlines
/// with an IDM-style car-following policy; pasts are collision-free and on-road.
std::vector<Scenario> synth_scenarios(uint64_t seed, int count, ScenarioTemplate tmpl,
                                      const SynthConfig& cfg = {});

/// Rolls every agent forward with the same car-following policy used during
/// synthesis. One trajectory per agent in scenario order, steps+1 states each,
/// element 0 = the agent's current state. Used as ground-truth futures.
std::vector<Trajectory> continue_with_traffic(const Scenario& sc, int steps);

// --- scenario.v1 JSON ---
std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text);
void save_scenario(const Scenario& s, const std::string& path);
Scenario load_scenario(const std::string& path);

}  // namespace advscene
