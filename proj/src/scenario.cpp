#include "advscene/scenario.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace advscene {

using nlohmann::json;

const ScenarioAgent& Scenario::agent(int id) const {
    for (const auto& a : agents) {
        if (a.id == id) return a;
    }
    throw WorldError("Scenario: unknown agent id " + std::to_string(id));
}

std::vector<int> Scenario::non_ego_ids() const {
    std::vector<int> out;
    for (const auto& a : agents) {
        if (a.id != ego_id) out.push_back(a.id);
    }
    return out;
}

void Scenario::validate() const {
    if (!map) throw WorldError("Scenario: missing map");
    if (agents.size() < 2) throw WorldError("Scenario: needs at least 2 agents");
    if (ego_id == adv_id) throw WorldError("Scenario: ego and adversary must differ");
    agent(ego_id);
    agent(adv_id);
    const size_t past_len = agents.front().past.size();
    for (const auto& a : agents) {
        if (a.past.size() != past_len) throw WorldError("Scenario: past length mismatch");
        if (a.past.tick != tick) throw WorldError("Scenario: past tick mismatch");
        if (a.past.states.empty()) throw WorldError("Scenario: empty past");
        for (const auto& s : a.past.states) {
            if (!s.finite()) throw WorldError("Scenario: non-finite past state");
        }
    }
    if (horizon < 1) throw WorldError("Scenario: horizon must be >= 1");
}

ScenarioTemplate parse_template(const std::string& name) {
    if (name == "straight") return ScenarioTemplate::Straight;
    if (name == "curve") return ScenarioTemplate::Curve;
    if (name == "intersection") return ScenarioTemplate::Intersection;
    if (name == "merge") return ScenarioTemplate::Merge;
    throw WorldError("unknown scenario template: " + name);
}

std::string template_name(ScenarioTemplate t) {
    switch (t) {
        case ScenarioTemplate::Straight: return "straight";
        case ScenarioTemplate::Curve: return "curve";
        case ScenarioTemplate::Intersection: return "intersection";
        case ScenarioTemplate::Merge: return "merge";
    }
    return "straight";
}

namespace {

json grid_to_json(const DrivableGrid& g) {
    // run-length encoding: [count, value, count, value, ...]
    json rle = json::array();
    size_t i = 0;
    const size_t n = g.cells.size();
    while (i < n) {
        size_t j = i;
        while (j < n && g.cells[j] == g.cells[i]) ++j;
        rle.push_back(j - i);
        rle.push_back(static_cast<int>(g.cells[i]));
        i = j;
    }
    return json{{"origin_x_m", g.origin_x}, {"origin_y_m", g.origin_y}, {"cell_m", g.cell_m},
                {"nx", g.nx},               {"ny", g.ny},               {"rle", std::move(rle)}};
}

DrivableGrid grid_from_json(const json& j) {
    DrivableGrid g;
    g.origin_x = j.at("origin_x_m").get<double>();
    g.origin_y = j.at("origin_y_m").get<double>();
    g.cell_m = j.at("cell_m").get<double>();
    g.nx = j.at("nx").get<int>();
    g.ny = j.at("ny").get<int>();
    g.cells.reserve(static_cast<size_t>(g.nx) * g.ny);
    const json& rle = j.at("rle");
    for (size_t i = 0; i + 1 < rle.size(); i += 2) {
        const size_t count = rle[i].get<size_t>();
        const uint8_t val = static_cast<uint8_t>(rle[i + 1].get<int>());
        g.cells.insert(g.cells.end(), count, val);
    }
    if (g.cells.size() != static_cast<size_t>(g.nx) * g.ny) {
        throw WorldError("scenario.v1: RLE grid size mismatch");
    }
    return g;
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

}  // namespace

std::string scenario_to_json(const Scenario& s) {
    json lanes = json::array();
    for (const Lane& ln : s.map->lanes) {
        json pts = json::array();
        for (const LanePoint& p : ln.pts) {
            pts.push_back(json{{"x_m", p.pos.x}, {"y_m", p.pos.y}, {"heading_rad", p.heading}});
        }
        lanes.push_back(json{{"width_m", ln.width},
                             {"successors", ln.successors},
                             {"adjacent", ln.adjacent},
                             {"pts", std::move(pts)}});
    }
    json agents = json::array();
    for (const ScenarioAgent& a : s.agents) {
        json past = json::array();
        for (const AgentState& st : a.past.states) past.push_back(state_to_json(st));
        agents.push_back(json{{"id", a.id},
                              {"length_m", a.footprint.length},
                              {"width_m", a.footprint.width},
                              {"past", std::move(past)}});
    }
    json doc{{"schema", "scenario.v1"},
             {"seed", s.seed},
             {"tick_s", s.tick},
             {"horizon_steps", s.horizon},
             {"ego_id", s.ego_id},
             {"adv_id", s.adv_id},
             {"map", json{{"lanes", std::move(lanes)}, {"grid", grid_to_json(s.map->grid)}}},
             {"agents", std::move(agents)}};
    return doc.dump(2);
}

Scenario scenario_from_json(const std::string& text) {
    json doc = json::parse(text);
    if (doc.at("schema").get<std::string>() != "scenario.v1") {
        throw WorldError("scenario_from_json: unsupported schema");
    }
    Scenario s;
    s.seed = doc.at("seed").get<uint64_t>();
    s.tick = doc.at("tick_s").get<double>();
    s.horizon = doc.at("horizon_steps").get<int>();
    s.ego_id = doc.at("ego_id").get<int>();
    s.adv_id = doc.at("adv_id").get<int>();

    auto map = std::make_shared<MapModel>();
    for (const json& jl : doc.at("map").at("lanes")) {
        Lane ln;
        ln.width = jl.at("width_m").get<double>();
        ln.successors = jl.at("successors").get<std::vector<int>>();
        ln.adjacent = jl.at("adjacent").get<std::vector<int>>();
        for (const json& jp : jl.at("pts")) {
            LanePoint p;
            p.pos = {jp.at("x_m").get<double>(), jp.at("y_m").get<double>()};
            p.heading = jp.at("heading_rad").get<double>();
            ln.pts.push_back(p);
        }
        map->lanes.push_back(std::move(ln));
    }
    map->grid = grid_from_json(doc.at("map").at("grid"));
    map->build_distance_field();
    s.map = std::move(map);

    for (const json& ja : doc.at("agents")) {
        ScenarioAgent a;
        a.id = ja.at("id").get<int>();
        a.footprint.length = ja.at("length_m").get<double>();
        a.footprint.width = ja.at("width_m").get<double>();
        a.past.tick = s.tick;
        for (const json& js : ja.at("past")) a.past.states.push_back(state_from_json(js));
        s.agents.push_back(std::move(a));
    }
    s.validate();
    return s;
}

void save_scenario(const Scenario& s, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw WorldError("cannot open for write: " + path);
    out << scenario_to_json(s);
    if (!out) throw WorldError("write failed: " + path);
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WorldError("cannot open: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return scenario_from_json(ss.str());
}

}  // namespace advscene
