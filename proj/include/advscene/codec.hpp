#pragma once

#include <array>
#include <string>
#include <vector>

#include "advscene/nn.hpp"
#include "advscene/scenario.hpp"

namespace advscene {

/// Conditioning vectors c, one per non-ego agent in scenario order.
struct CondLatent {
    std::vector<int> agent_ids;
    std::vector<std::vector<double>> c;
    std::vector<uint8_t> is_adv;
};

/// Scene latents z, one per non-ego agent, plus the diffusion step they live at.
struct LatentScene {
    std::vector<int> agent_ids;
    std::vector<std::vector<double>> z;
    std::vector<uint8_t> is_adv;
    int k = 0;

    int n_agents() const { return static_cast<int>(z.size()); }
    bool finite() const;
};

struct CodecConfig {
    int d_z = 32;
    int d_c = 32;
    int hidden = 128;
    int t_hist = 4;    // past steps; pasts carry t_hist+1 states
    int horizon = 12;  // future steps
    int k_neighbors = 4;
};

/// Encoder and decoder weights plus the normalization statistics they assume.
struct CodecParams {
    CodecConfig cfg;
    WorldParams world;
    ParamStore ps;
    Mlp prior;      // past features -> c
    Mlp posterior;  // past+future features -> mean | logvar
    Mlp decoder;    // [z, step embedding] -> raw action pair

    std::vector<double> feat_mean, feat_std;  // posterior feature dims; prior uses a prefix
    std::vector<double> lat_mean, lat_std;    // latent standardization, identity until trained

    int prior_feat_dim() const;
    int posterior_feat_dim() const;
};

/// Fresh randomly initialized parameters with identity normalization.
CodecParams init_codec(const CodecConfig& cfg, uint64_t seed);

/// Per-agent feature vectors (posterior layout; the prior prefix comes first).
/// Exposed for tests and for normalization bookkeeping.
std::vector<std::vector<double>> codec_features(const Scenario& sc,
                                                const std::vector<Trajectory>* futures,
                                                const CodecConfig& cfg);

CondLatent encode_prior(const Scenario& sc, const CodecParams& p);

struct PosteriorOut {
    std::vector<int> agent_ids;
    std::vector<std::vector<double>> mean;    // standardized latent space
    std::vector<std::vector<double>> logvar;  // standardized latent space
    LatentScene z;                            // mean + exp(logvar/2) * eps
};

/// futures: one per non-ego agent in scenario order, horizon+1 states each,
/// element 0 = the agent's current state. eps = nullptr reads as all zeros.
PosteriorOut encode_posterior(const Scenario& sc, const std::vector<Trajectory>& futures,
                              const CodecParams& p,
                              const std::vector<std::vector<double>>* eps = nullptr);

struct DecodeOut {
    std::vector<int> agent_ids;
    std::vector<Trajectory> futures;           // horizon+1 states, element 0 = current
    std::vector<std::vector<Action>> actions;  // horizon entries
};

/// Per-agent autoregressive decode state kept for the backward pass.
struct DecodeCache {
    struct Step {
        AgentState state;          // state entering the step
        std::array<double, 5> e;   // step embedding
        std::array<double, 2> u;   // pre-squash network output
        Mlp::Cache mlp;
    };
    std::vector<std::vector<Step>> agents;
    std::vector<std::vector<double>> z_raw;  // de-standardized latents fed to the network
    std::vector<AgentState> start;
    double tick = 0.5;
};

/// Decodes the agents listed in z (normally every non-ego agent). Each agent
/// rolls out independently from its current state through the bicycle model.
DecodeOut decode(const LatentScene& z, const Scenario& sc, const CodecParams& p,
                 DecodeCache* cache = nullptr);

/// Adjoints on decoded trajectories, aligned with DecodeOut. dstate[agent][t]
/// is (dx, dy, dheading, dspeed) for states 1..horizon (index 0 unused);
/// daction[agent][t] covers actions 0..horizon-1. Empty vectors read as zeros.
struct TrajAdjoint {
    std::vector<std::vector<std::array<double, 4>>> dstate;
    std::vector<std::vector<std::array<double, 2>>> daction;
};

/// Pulls trajectory adjoints back to the standardized latents. When accum is
/// non-null, decoder weight gradients are accumulated into it as well.
std::vector<std::vector<double>> decode_backward(const DecodeCache& cache, const CodecParams& p,
                                                 const TrajAdjoint& adj,
                                                 ParamStore* accum = nullptr);

double trajectory_ade(const Trajectory& got, const Trajectory& want);

struct CodecTrainConfig {
    CodecConfig codec;
    int epochs = 200;
    int batch = 10;
    double lr = 1e-3;
    double beta_kl = 1e-3;
    double prior_match = 1.0;
    uint64_t seed = 0;
};

struct CodecTrainResult {
    CodecParams params;
    std::vector<double> epoch_loss;
    std::vector<double> epoch_ade;
};

/// futures[i] aligns with scenarios[i]'s non-ego agents. Divergence aborts.
CodecTrainResult train_codec(const std::vector<Scenario>& scenarios,
                             const std::vector<std::vector<Trajectory>>& futures,
                             const CodecTrainConfig& cfg);

// --- codec.v1 blobs ---
void save_codec(const CodecParams& p, const std::string& path);
CodecParams load_codec(const std::string& path);

}  // namespace advscene
