#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "advscene/metrics.hpp"

#include "json.hpp"

namespace advscene {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr int kHistBins = 20;

int index_of(const std::vector<int>& ids, int id) {
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] == id) return static_cast<int>(i);
    }
    return -1;
}

enum class PairClass { AdvEgo, AdvOther, OtherEgo, OtherOther };

PairClass classify(const RolloutRecord& r, const CollisionEvent& e) {
    const bool has_ego = e.agent_a == r.ego_id || e.agent_b == r.ego_id;
    const bool has_adv = e.agent_a == r.adv_id || e.agent_b == r.adv_id;
    if (has_ego && has_adv) return PairClass::AdvEgo;
    if (has_adv) return PairClass::AdvOther;
    if (has_ego) return PairClass::OtherEgo;
    return PairClass::OtherOther;
}

/// Raw per-step values behind the means and the report histograms.
struct SampleBag {
    std::vector<double> ttc;      // adversary-ego closing times, s
    std::vector<double> acc_lon;  // signed adversary accel, m/s^2
    std::vector<double> acc_lat;  // signed adversary speed * yaw rate, m/s^2
    std::vector<double> speed;    // adversary speeds, m/s
};

SampleBag gather_samples(const std::vector<RolloutRecord>& records) {
    SampleBag bag;
    for (const RolloutRecord& r : records) {
        const int ai = index_of(r.agent_ids, r.adv_id);
        const int ei = index_of(r.agent_ids, r.ego_id);
        if (r.adv_id < 0 || ai < 0 || ei < 0) continue;
        const auto& adv = r.executed[ai].states;
        const auto& ego = r.executed[ei].states;
        const size_t steps = std::min(adv.size(), ego.size());
        for (size_t t = 0; t < steps; ++t) {
            bag.ttc.push_back(ttc_between(adv[t], r.footprints[ai], ego[t], r.footprints[ei]));
            bag.speed.push_back(adv[t].speed);
        }
        const auto& acts = r.actions[ai];
        for (size_t t = 0; t < acts.size() && t < adv.size(); ++t) {
            bag.acc_lon.push_back(acts[t].accel);
            bag.acc_lat.push_back(adv[t].speed * acts[t].yaw_rate);
        }
    }
    return bag;
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double mean_abs_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += std::abs(x);
    return s / static_cast<double>(xs.size());
}

std::string fmt(double v, int prec) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return std::string(buf);
}

struct Histogram {
    std::string stem;   // report file stem, e.g. "hist_ttc"
    std::string label;  // axis label with unit
    double lo = 0.0;
    double hi = 1.0;
    std::vector<long long> bins;
};

/// Fixed-width bins over [lo, hi]; out-of-range samples land in the edge
/// bins so the histogram always conserves its sample count.
Histogram make_hist(std::string stem, std::string label, double lo, double hi,
                    const std::vector<double>& xs) {
    Histogram h{std::move(stem), std::move(label), lo, hi,
                std::vector<long long>(kHistBins, 0)};
    const double w = (hi - lo) / kHistBins;
    for (double x : xs) {
        const int b = std::clamp(static_cast<int>(std::floor((x - lo) / w)), 0, kHistBins - 1);
        ++h.bins[static_cast<size_t>(b)];
    }
    return h;
}

std::string hist_csv(const Histogram& h) {
    const double w = (h.hi - h.lo) / static_cast<double>(h.bins.size());
    std::string s = "bin_lo,bin_hi,count\n";
    for (size_t i = 0; i < h.bins.size(); ++i) {
        s += fmt(h.lo + w * static_cast<double>(i), 4) + "," +
             fmt(h.lo + w * static_cast<double>(i + 1), 4) + "," +
             std::to_string(h.bins[i]) + "\n";
    }
    return s;
}

std::string hist_svg(const Histogram& h) {
    const double kw = 640.0, kh = 400.0;
    const double left = 60.0, right = 20.0, top = 48.0, bottom = 48.0;
    const double pw = kw - left - right, ph = kh - top - bottom;
    long long peak = 0;
    for (long long c : h.bins) peak = std::max(peak, c);

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
         "viewBox=\"0 0 640 400\">\n";
    s += "  <rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" fill=\"#ffffff\"/>\n";
    s += "  <text x=\"320\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">" + h.label + "</text>\n";
    const double bw = pw / static_cast<double>(h.bins.size());
    for (size_t i = 0; i < h.bins.size(); ++i) {
        const double f = peak > 0 ? static_cast<double>(h.bins[i]) / static_cast<double>(peak) : 0.0;
        const double x = left + bw * static_cast<double>(i);
        s += "  <rect x=\"" + fmt(x + 0.5, 2) + "\" y=\"" + fmt(top + ph * (1.0 - f), 2) +
             "\" width=\"" + fmt(bw - 1.0, 2) + "\" height=\"" + fmt(ph * f, 2) +
             "\" fill=\"#4477aa\"/>\n";
    }
    s += "  <line x1=\"" + fmt(left, 2) + "\" y1=\"" + fmt(top + ph, 2) + "\" x2=\"" +
         fmt(left + pw, 2) + "\" y2=\"" + fmt(top + ph, 2) +
         "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    s += "  <line x1=\"" + fmt(left, 2) + "\" y1=\"" + fmt(top, 2) + "\" x2=\"" + fmt(left, 2) +
         "\" y2=\"" + fmt(top + ph, 2) + "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    s += "  <text x=\"" + fmt(left, 2) + "\" y=\"" + fmt(kh - 20.0, 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
         fmt(h.lo, 1) + "</text>\n";
    s += "  <text x=\"" + fmt(left + pw, 2) + "\" y=\"" + fmt(kh - 20.0, 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
         fmt(h.hi, 1) + "</text>\n";
    s += "  <text x=\"" + fmt(left - 8.0, 2) + "\" y=\"" + fmt(top + 6.0, 2) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" +
         std::to_string(peak) + "</text>\n";
    s += "  <text x=\"" + fmt(left - 8.0, 2) + "\" y=\"" + fmt(top + ph, 2) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">0</text>\n";
    s += "</svg>\n";
    return s;
}

void write_file(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw WorldError("report: cannot open " + path.string());
    out << body;
    out.flush();
    if (!out) throw WorldError("report: failed writing " + path.string());
}

}  // namespace

void MetricSet::check() const {
    const double pcts[] = {adv_ego_coll_pct,  adv_other_coll_pct, other_ego_coll_pct,
                           other_other_coll_pct, adv_offroad_pct,  other_offroad_pct};
    for (double p : pcts) {
        if (!std::isfinite(p) || p < 0.0 || p > 100.0) {
            throw WorldError("metrics: percentage outside [0, 100]");
        }
    }
    if (counts.records < 1) throw WorldError("metrics: no records counted");
    if (counts.adv_records < 0 || counts.adv_records > counts.records) {
        throw WorldError("metrics: adversary record count inconsistent");
    }
    if (counts.other_agent_scenarios < 0 || counts.ttc_samples < 0 || counts.accel_samples < 0) {
        throw WorldError("metrics: negative sample count");
    }
    if (counts.accel_samples > 0 &&
        (!std::isfinite(adv_acc_lon_mean) || !std::isfinite(adv_acc_lat_mean))) {
        throw WorldError("metrics: non-finite acceleration mean");
    }
    if (counts.ttc_samples > 0 && !std::isfinite(ttc_mean_s)) {
        throw WorldError("metrics: non-finite time-to-collision mean");
    }
    if (!std::isfinite(sim_time_mean_s) || sim_time_mean_s < 0.0) {
        throw WorldError("metrics: bad mean simulation time");
    }
}

double ttc_between(const AgentState& a, const VehicleFootprint& fa, const AgentState& b,
                   const VehicleFootprint& fb, double cap) {
    const double reach = fa.disc_radius() + fb.disc_radius();
    const Vec2 d = b.pos() - a.pos();
    const Vec2 v = b.velocity() - a.velocity();
    const double c = d.dot(d) - reach * reach;
    if (c <= 0.0) return 0.0;
    const double qa = v.dot(v);
    if (qa <= 1e-12) return cap;
    const double qb = 2.0 * d.dot(v);
    const double disc = qb * qb - 4.0 * qa * c;
    if (disc < 0.0) return cap;
    const double t = (-qb - std::sqrt(disc)) / (2.0 * qa);
    if (t < 0.0) return cap;
    return std::min(t, cap);
}

MetricSet compute_metrics(const std::vector<RolloutRecord>& records) {
    if (records.empty()) throw WorldError("compute_metrics: no records");

    MetricSet m;
    m.counts.records = static_cast<int>(records.size());
    int coll[4] = {0, 0, 0, 0};
    int adv_off = 0, other_off = 0;
    double sim_sum = 0.0;
    for (const RolloutRecord& r : records) {
        r.check();
        bool seen[4] = {false, false, false, false};
        for (const CollisionEvent& e : r.collisions) {
            seen[static_cast<int>(classify(r, e))] = true;
        }
        for (int k = 0; k < 4; ++k) coll[k] += seen[k] ? 1 : 0;

        if (r.adv_id >= 0 && index_of(r.agent_ids, r.adv_id) >= 0) ++m.counts.adv_records;
        for (int id : r.agent_ids) {
            if (id == r.ego_id) continue;  // planner output, not a generated trajectory
            const bool off = std::any_of(r.offroad.begin(), r.offroad.end(),
                                         [&](const OffroadEvent& e) { return e.agent == id; });
            if (id == r.adv_id) {
                adv_off += off ? 1 : 0;
            } else {
                ++m.counts.other_agent_scenarios;
                other_off += off ? 1 : 0;
            }
        }
        sim_sum += r.sim_time_s;
    }

    const double nr = static_cast<double>(m.counts.records);
    m.adv_ego_coll_pct = 100.0 * coll[static_cast<int>(PairClass::AdvEgo)] / nr;
    m.adv_other_coll_pct = 100.0 * coll[static_cast<int>(PairClass::AdvOther)] / nr;
    m.other_ego_coll_pct = 100.0 * coll[static_cast<int>(PairClass::OtherEgo)] / nr;
    m.other_other_coll_pct = 100.0 * coll[static_cast<int>(PairClass::OtherOther)] / nr;
    m.adv_offroad_pct =
        m.counts.adv_records > 0 ? 100.0 * adv_off / m.counts.adv_records : 0.0;
    m.other_offroad_pct = m.counts.other_agent_scenarios > 0
                              ? 100.0 * other_off / m.counts.other_agent_scenarios
                              : 0.0;
    m.sim_time_mean_s = sim_sum / nr;

    const SampleBag bag = gather_samples(records);
    m.counts.ttc_samples = static_cast<long long>(bag.ttc.size());
    m.counts.accel_samples = static_cast<long long>(bag.acc_lon.size());
    m.adv_acc_lon_mean = mean_abs_of(bag.acc_lon);
    m.adv_acc_lat_mean = mean_abs_of(bag.acc_lat);
    m.ttc_mean_s = mean_of(bag.ttc);

    m.check();
    return m;
}

std::vector<std::string> emit_report(const MetricSet& metrics,
                                     const std::vector<RolloutRecord>& records,
                                     const std::string& out_dir,
                                     const std::string& config_hash) {
    metrics.check();
    const fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw WorldError("report: cannot create directory " + dir.string());
    }

    std::vector<std::string> written;
    auto emit = [&](const std::string& name, const std::string& body) {
        const fs::path p = dir / name;
        write_file(p, body);
        written.push_back(p.string());
    };

    const json doc{
        {"schema", "metrics.v1"},
        {"config_hash", config_hash},
        {"adv_ego_coll_pct", metrics.adv_ego_coll_pct},
        {"adv_other_coll_pct", metrics.adv_other_coll_pct},
        {"other_ego_coll_pct", metrics.other_ego_coll_pct},
        {"other_other_coll_pct", metrics.other_other_coll_pct},
        {"adv_offroad_pct", metrics.adv_offroad_pct},
        {"other_offroad_pct", metrics.other_offroad_pct},
        {"adv_acc_lon_mean_mps2", metrics.adv_acc_lon_mean},
        {"adv_acc_lat_mean_mps2", metrics.adv_acc_lat_mean},
        {"ttc_mean_s", metrics.ttc_mean_s},
        {"sim_time_mean_s", metrics.sim_time_mean_s},
        {"counts",
         {{"records", metrics.counts.records},
          {"adv_records", metrics.counts.adv_records},
          {"other_agent_scenarios", metrics.counts.other_agent_scenarios},
          {"ttc_samples", metrics.counts.ttc_samples},
          {"accel_samples", metrics.counts.accel_samples}}},
    };
    emit("metrics.json", doc.dump(2) + "\n");

    std::string csv = "metric,value\n";
    csv += "records," + std::to_string(metrics.counts.records) + "\n";
    csv += "adv_records," + std::to_string(metrics.counts.adv_records) + "\n";
    csv += "other_agent_scenarios," + std::to_string(metrics.counts.other_agent_scenarios) + "\n";
    csv += "ttc_samples," + std::to_string(metrics.counts.ttc_samples) + "\n";
    csv += "accel_samples," + std::to_string(metrics.counts.accel_samples) + "\n";
    csv += "adv_ego_coll_pct," + fmt(metrics.adv_ego_coll_pct, 2) + "\n";
    csv += "adv_other_coll_pct," + fmt(metrics.adv_other_coll_pct, 2) + "\n";
    csv += "other_ego_coll_pct," + fmt(metrics.other_ego_coll_pct, 2) + "\n";
    csv += "other_other_coll_pct," + fmt(metrics.other_other_coll_pct, 2) + "\n";
    csv += "adv_offroad_pct," + fmt(metrics.adv_offroad_pct, 2) + "\n";
    csv += "other_offroad_pct," + fmt(metrics.other_offroad_pct, 2) + "\n";
    csv += "adv_acc_lon_mean_mps2," + fmt(metrics.adv_acc_lon_mean, 4) + "\n";
    csv += "adv_acc_lat_mean_mps2," + fmt(metrics.adv_acc_lat_mean, 4) + "\n";
    csv += "ttc_mean_s," + fmt(metrics.ttc_mean_s, 4) + "\n";
    csv += "sim_time_mean_s," + fmt(metrics.sim_time_mean_s, 4) + "\n";
    emit("metrics.csv", csv);

    const SampleBag bag = gather_samples(records);
    const Histogram hists[] = {
        make_hist("hist_ttc", "adversary-ego time to collision (s)", 0.0, 10.0, bag.ttc),
        make_hist("hist_acc_lon", "adversary longitudinal accel (m/s^2)", -6.0, 6.0, bag.acc_lon),
        make_hist("hist_acc_lat", "adversary lateral accel (m/s^2)", -10.0, 10.0, bag.acc_lat),
        make_hist("hist_speed", "adversary speed (m/s)", 0.0, 20.0, bag.speed),
    };
    for (const Histogram& h : hists) {
        emit(h.stem + ".csv", hist_csv(h));
        emit(h.stem + ".svg", hist_svg(h));
    }
    return written;
}

}  // namespace advscene
