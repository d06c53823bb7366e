#pragma once

#include <string>
#include <vector>

#include "advscene/sim.hpp"

namespace advscene {

struct MetricCounts {
    int records = 0;                  // rollouts aggregated
    int adv_records = 0;              // rollouts with an adversary
    int other_agent_scenarios = 0;    // background (non-ego, non-adversary) agent slots
    long long ttc_samples = 0;        // adversary-ego state pairs
    long long accel_samples = 0;      // adversary actions
};

/// Aggregate evaluation metrics over a batch of rollouts. Collision and
/// offroad figures are percentages of scenarios (or agent slots) with at
/// least one matching event; acceleration means are magnitudes over the
/// adversary's executed actions; time-to-collision is a capped
/// constant-velocity disc closing time between adversary and ego.
struct MetricSet {
    double adv_ego_coll_pct = 0.0;
    double adv_other_coll_pct = 0.0;
    double other_ego_coll_pct = 0.0;
    double other_other_coll_pct = 0.0;
    double adv_offroad_pct = 0.0;
    double other_offroad_pct = 0.0;
    double adv_acc_lon_mean = 0.0;    // m/s^2
    double adv_acc_lat_mean = 0.0;    // m/s^2
    double ttc_mean_s = 0.0;
    double sim_time_mean_s = 0.0;
    MetricCounts counts;

    /// Throws WorldError when a percentage leaves [0, 100], a mean with
    /// samples behind it is non-finite, or the counts are inconsistent.
    void check() const;
};

/// Time for two constant-velocity discs to touch, capped at `cap` seconds.
/// Overlapping discs give 0; non-closing pairs give the cap.
double ttc_between(const AgentState& a, const VehicleFootprint& fa, const AgentState& b,
                   const VehicleFootprint& fb, double cap = 10.0);

/// Aggregates a batch of rollouts into a MetricSet. Throws on empty input.
MetricSet compute_metrics(const std::vector<RolloutRecord>& records);

/// Writes metrics.json, metrics.csv, four histogram CSVs, and matching SVG
/// charts under out_dir (created if missing). Output bytes depend only on
/// the inputs. Returns the paths written.
std::vector<std::string> emit_report(const MetricSet& metrics,
                                     const std::vector<RolloutRecord>& records,
                                     const std::string& out_dir,
                                     const std::string& config_hash);

}  // namespace advscene
