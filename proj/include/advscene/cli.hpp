#pragma once

#include <cstdint>
#include <string>

#include "advscene/codec.hpp"
#include "advscene/diffusion.hpp"
#include "advscene/llm.hpp"
#include "advscene/planner.hpp"
#include "advscene/scenario.hpp"
#include "advscene/sim.hpp"

namespace advscene {

/// Operator configuration, serialized as config.v1 JSON. Every field has a
/// default, so an empty file body ({"schema": "config.v1"}) is a valid
/// config; loading rejects unknown keys at every nesting level.
struct RunConfig {
    uint64_t seed = 0;

    std::string codec_path = "models/codec.json";
    std::string denoiser_path = "models/denoiser.json";
    std::string scenarios_dir = "data/scenarios";
    std::string out_dir = "out";

    ScenarioTemplate tmpl = ScenarioTemplate::Straight;
    int synth_count = 100;
    SynthConfig synth;

    int schedule_steps = 20;
    double schedule_s = 0.008;

    CodecConfig codec;                   // t_hist and horizon mirror synth
    CodecTrainConfig codec_train;        // codec and seed mirrored by sync()
    DenoiserConfig denoiser;             // d_z and d_c mirror codec
    DenoiserTrainConfig denoiser_train;  // net and seed mirrored by sync()

    GuidedSampleConfig sample;  // seed mirrored by sync()
    PlannerConfig planner;
    int sim_steps = 40;

    bool provider_mock = true;  // deterministic in-tree provider vs HTTP
    ProviderConfig provider;

    // weak, medium, strong; spelled out in the config so operators see the
    // table, but the language fixes the ranges, so these must match it
    WeightRange levels[3] = {level_weight_range(AdvLevel::Weak),
                             level_weight_range(AdvLevel::Medium),
                             level_weight_range(AdvLevel::Strong)};

    /// Re-derives the mirrored sub-config fields from the top-level ones.
    /// Call after mutating seed, synth, or codec dims directly.
    void sync();

    /// Throws WorldError on invalid values or a level table that disagrees
    /// with the guidance language.
    void check() const;
};

/// Canonical serialization: every field explicit, keys sorted, no wall-clock
/// content. Hash and file round-trips are defined over this form.
std::string config_to_json_text(const RunConfig& cfg);

/// Strict parse: unknown keys, a missing or foreign schema tag, and invalid
/// values all throw WorldError. Mirrored fields are synced and checked.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

/// FNV-1a over the canonical serialization, 16 hex digits. Whitespace and
/// key order in the source file do not affect it; any value change does.
std::string config_hash(const RunConfig& cfg);

// Subcommand bodies. Each prints progress to stdout and diagnostics to
// stderr, and returns a process exit code: 0 ok, 1 usage, 2 runtime failure.
int cmd_synth(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg, const std::string& stage, bool resume = false);
int cmd_guide(const RunConfig& cfg, const std::string& query, const std::string& dsl_path);
int cmd_run(const RunConfig& cfg, const std::string& dsl_path, int jobs, bool sweep);
int cmd_dsl_check(const std::string& path);
int cmd_report(const RunConfig& cfg, const std::string& batch_dir);

}  // namespace advscene
