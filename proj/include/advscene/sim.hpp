#pragma once

#include <string>
#include <vector>

#include "advscene/diffusion.hpp"
#include "advscene/dsl.hpp"
#include "advscene/planner.hpp"

namespace advscene {

enum class Termination { Collision, Horizon, Failure };

std::string termination_name(Termination t);
Termination parse_termination(const std::string& name);

struct CollisionEvent {
    int agent_a = -1;  // lower id of the pair
    int agent_b = -1;
    int step = -1;  // executed step index, 1-based (step 0 is the initial state)
};

struct OffroadEvent {
    int agent = -1;
    int step = -1;
};

/// One closed-loop rollout: executed motion for every agent plus the events
/// and timings the metrics layer consumes.
struct RolloutRecord {
    uint64_t seed = 0;
    int ego_id = 0;
    int adv_id = -1;
    std::vector<int> agent_ids;                   // scenario order
    std::vector<VehicleFootprint> footprints;     // aligned with agent_ids
    std::vector<Trajectory> executed;             // aligned with agent_ids, states[0] = initial
    std::vector<std::vector<Action>> actions;  // executed actions, one per step
    std::vector<double> replan_losses;         // selected-sample objective per replan
    std::vector<CollisionEvent> collisions;    // rising edges only
    std::vector<OffroadEvent> offroad;         // rising edges only
    Termination termination = Termination::Horizon;
    std::string failure_message;
    int steps = 0;         // executed steps (states per trajectory = steps + 1)
    double sim_time_s = 0;  // wall clock for the whole rollout
    double gen_time_s = 0;  // wall clock inside guided sampling

    /// Throws WorldError when events reference unknown agents or bad steps,
    /// trajectories disagree on length, or timings are negative.
    void check() const;
};

/// Canonical JSON of everything except the wall-clock fields; two rollouts of
/// the same seed compare equal on this even though their timings differ.
std::string record_signature(const RolloutRecord& r);

struct SimModels {
    const CodecParams* codec = nullptr;
    const DenoiserParams* denoiser = nullptr;
    const NoiseSchedule* sched = nullptr;
};

struct SimConfig {
    int sim_steps = 40;  // closed-loop steps to execute
    GuidedSampleConfig sample;
    PlannerConfig planner;  // planner.replan_period is the generation cadence
    uint64_t seed = 0;

    void check() const;
};

/// Nearest non-ego agent by initial Euclidean distance that sits on the lane
/// graph and is moving toward or parallel to the ego's road (stationary agents
/// qualify). Ties break toward the lower id. Throws WorldError when no agent
/// qualifies.
int select_adversary(const Scenario& sc);

/// Closed loop: per replan the ego plans on the lane graph, the non-ego agents
/// are regenerated by guided sampling against that plan, and everyone advances
/// planner.replan_period steps. Stops at sim_steps, on an adversary-ego
/// collision, or when a replan fails to produce a sample. guidance = nullptr
/// runs the unguided chain. Deterministic per (cfg.seed, scenario).
RolloutRecord run_closed_loop(const Scenario& sc, const SimModels& models,
                              const GuidanceProgram* guidance, const SimConfig& cfg);

struct BatchResult {
    std::vector<RolloutRecord> records;
    double wall_time_s = 0;
};

/// Independent rollouts, optionally spread over `jobs` threads. Records are
/// identical whatever the thread count; individual failures become
/// termination = Failure records rather than aborting the batch.
BatchResult run_batch(const std::vector<Scenario>& scenarios, const SimModels& models,
                      const GuidanceProgram* guidance, const SimConfig& cfg, int jobs = 1);

// --- rollout.v1 JSON ---
std::string rollout_to_json(const RolloutRecord& r);
RolloutRecord rollout_from_json(const std::string& text);
void save_rollout(const RolloutRecord& r, const std::string& path);
RolloutRecord load_rollout(const std::string& path);

/// Writes rollout_NNN.json per record plus manifest.json listing the record
/// files and the configuration hash. Creates `dir` if needed.
std::vector<std::string> save_batch(const BatchResult& batch, const std::string& dir,
                                    const std::string& config_hash);

}  // namespace advscene
