#pragma once

#include <functional>
#include <string>
#include <vector>

#include "advscene/codec.hpp"

namespace advscene {

/// Variance schedule: betas for steps 1..K and the cumulative alpha products,
/// with the convention alpha_bar[0] = 1.
struct NoiseSchedule {
    int K = 20;
    std::vector<double> beta;       // K entries, beta[i] belongs to step i+1
    std::vector<double> alpha_bar;  // K+1 entries, alpha_bar[0] = 1

    static NoiseSchedule cosine(int K = 20, double s = 0.008);
    static NoiseSchedule linear(int K = 20, double beta_start = 1e-4, double beta_end = 0.2);
    /// Throws on violated invariants (beta range, strictly decreasing alpha_bar).
    void check() const;
};

/// z_k = sqrt(ab_k) z0 + sqrt(1 - ab_k) eps, the closed-form forward marginal.
std::vector<double> forward_noise(const std::vector<double>& z0, int k,
                                  const std::vector<double>& eps, const NoiseSchedule& s);

/// z0_tilde = (z_k - sqrt(1 - ab_k) eps_pred) / sqrt(ab_k)
std::vector<double> estimate_clean(const std::vector<double>& z_k, int k,
                                   const std::vector<double>& eps_pred, const NoiseSchedule& s);

/// Deterministic DDIM update from a (possibly perturbed) clean estimate:
/// z_{k-1} = sqrt(ab_{k-1}) z0_tilde + sqrt(1 - ab_{k-1}) eps_pred
std::vector<double> ddim_step_from(const std::vector<double>& z0_tilde, int k,
                                   const std::vector<double>& eps_pred, const NoiseSchedule& s);

// ---------------------------------------------------------------- denoiser ---

struct DenoiserConfig {
    int d_z = 32;
    int d_c = 32;
    int hidden = 128;
    int blocks = 3;
    int emb_dim = 32;
};

/// Per-agent residual network: h += L2(tanh(L1(h + We emb(k) + Wc c))) per
/// block, with a sinusoidal step embedding and a zero-initialized output head.
struct DenoiserParams {
    DenoiserConfig cfg;
    ParamStore ps;
    Linear w_in;
    struct Block {
        Linear we, wc, l1, l2;
    };
    std::vector<Block> blocks;
    Linear w_out;
};

DenoiserParams init_denoiser(const DenoiserConfig& cfg, uint64_t seed);

std::vector<double> sinusoidal_embedding(int k, int dim);

/// Epsilon prediction for one agent's latent. Cache feeds the backward pass.
struct DenoiserCache;
std::vector<double> denoiser_eps(const DenoiserParams& p, const std::vector<double>& z, int k,
                                 const std::vector<double>& c, DenoiserCache* cache = nullptr);

struct DenoiserCache {
    std::vector<double> z, emb, c, h_final;
    struct BlockCache {
        std::vector<double> pre, a1;
    };
    std::vector<BlockCache> blocks;
};

/// Accumulates weight gradients for d(loss)/d(eps_pred) = deps.
void denoiser_backward(DenoiserParams& p, const DenoiserCache& cache,
                       const std::vector<double>& deps);

struct DenoiserTrainConfig {
    DenoiserConfig net;
    int epochs = 60;
    int batch = 16;
    double lr = 1e-3;
    uint64_t seed = 0;
};

struct DenoiserTrainResult {
    DenoiserParams params;
    std::vector<double> epoch_loss;  // mean per-scene sum of squared eps errors
};

/// latents[i] pairs with conds[i]; loss is E || eps - eps_theta(z_k, k, c) ||^2
/// with k and eps drawn per scene per epoch. Deterministic for a fixed seed.
DenoiserTrainResult train_denoiser(const std::vector<LatentScene>& latents,
                                   const std::vector<CondLatent>& conds,
                                   const NoiseSchedule& sched, const DenoiserTrainConfig& cfg);

// --- diff.v1 blobs ---
void save_denoiser(const DenoiserParams& p, const std::string& path);
DenoiserParams load_denoiser(const std::string& path);

// ---------------------------------------------------------------- sampling ---

/// Objective the sampler differentiates through the decoder. Implementations
/// write adjoints only for the agents their terms differentiate, which is what
/// routes gradients between the adversary and the other agents.
struct GuidanceObjective {
    virtual ~GuidanceObjective() = default;
    /// Evaluates J on decoded futures and accumulates trajectory adjoints.
    /// Throws WorldError (or derived) on evaluation failure.
    virtual double eval(const Scenario& sc, const DecodeOut& dec, TrajAdjoint& adj) = 0;
};

struct GuidedSampleConfig {
    double lambda = 0.5;    // guidance scale
    double grad_clip = 10;  // global gradient norm bound
    int n_samples = 10;
    int iterations = 1;  // gradient iterations per reverse step
    uint64_t seed = 0;
    bool sigma_on_mu = false;  // alternative update on the DDIM mean
};

struct GuidedSampleResult {
    std::vector<LatentScene> samples;  // non-failed, k = 0
    std::vector<double> losses;        // objective on the final decoded sample
    std::vector<int> sample_index;     // original candidate index per entry
    std::vector<std::string> failures; // one message per failed candidate
};

/// Runs n_samples independent DDIM chains with reconstruction guidance: per
/// reverse step the clean estimate is perturbed by -lambda (1 - ab_k) clip(g),
/// g = d J / d z0_tilde through the decoder. objective = nullptr (or lambda 0)
/// reproduces the unguided chain bitwise.
GuidedSampleResult guided_sample(const Scenario& sc, const CondLatent& cond,
                                 GuidanceObjective* objective, const CodecParams& codec,
                                 const DenoiserParams& dn, const NoiseSchedule& sched,
                                 const GuidedSampleConfig& cfg);

struct SelectedSample {
    LatentScene z;
    int index = -1;        // position in GuidedSampleResult::samples
    bool feasible = true;  // false when every candidate violated feasibility
};

/// Argmin-loss sample among those whose decoded trajectories satisfy action
/// bounds and per-step curvature feasibility; falls back to the global argmin
/// with feasible = false when none qualify.
SelectedSample select_best(const GuidedSampleResult& result, const Scenario& sc,
                           const CodecParams& codec);

/// Curvature feasibility used by select_best: |yaw_rate| <= kappa_max * max(v, v_floor).
bool trajectory_feasible(const Trajectory& traj, const std::vector<Action>& actions,
                         const WorldParams& wp, double kappa_max = 0.3, double v_floor = 1.0);

}  // namespace advscene
