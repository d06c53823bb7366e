#include "advscene/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <json.hpp>

namespace advscene {

namespace {

void check_step(int k, const NoiseSchedule& s) {
    if (k < 1 || k > s.K) throw WorldError("diffusion: step k out of range");
}

}  // namespace

NoiseSchedule NoiseSchedule::cosine(int K, double s) {
    NoiseSchedule out;
    out.K = K;
    out.alpha_bar.resize(K + 1);
    auto f = [&](double k) {
        const double t = (k / K + s) / (1.0 + s) * (kPi / 2.0);
        return std::cos(t) * std::cos(t);
    };
    const double f0 = f(0.0);
    out.alpha_bar[0] = 1.0;
    out.beta.resize(K);
    for (int k = 1; k <= K; ++k) {
        double ab = f(static_cast<double>(k)) / f0;
        // clip the implied beta, then rebuild alpha_bar so the two stay consistent
        double b = 1.0 - ab / out.alpha_bar[k - 1];
        b = clamp(b, 1e-6, 0.999);
        out.beta[k - 1] = b;
        out.alpha_bar[k] = out.alpha_bar[k - 1] * (1.0 - b);
    }
    out.check();
    return out;
}

NoiseSchedule NoiseSchedule::linear(int K, double beta_start, double beta_end) {
    NoiseSchedule out;
    out.K = K;
    out.beta.resize(K);
    out.alpha_bar.assign(K + 1, 1.0);
    for (int k = 1; k <= K; ++k) {
        const double t = K > 1 ? static_cast<double>(k - 1) / (K - 1) : 0.0;
        out.beta[k - 1] = beta_start + (beta_end - beta_start) * t;
        out.alpha_bar[k] = out.alpha_bar[k - 1] * (1.0 - out.beta[k - 1]);
    }
    out.check();
    return out;
}

void NoiseSchedule::check() const {
    if (K < 1) throw WorldError("schedule: K must be >= 1");
    if (static_cast<int>(beta.size()) != K || static_cast<int>(alpha_bar.size()) != K + 1) {
        throw WorldError("schedule: size mismatch");
    }
    if (alpha_bar[0] != 1.0) throw WorldError("schedule: alpha_bar[0] must be 1");
    for (int k = 1; k <= K; ++k) {
        if (!(beta[k - 1] > 0.0 && beta[k - 1] < 1.0)) {
            throw WorldError("schedule: beta out of (0, 1)");
        }
        if (!(alpha_bar[k] < alpha_bar[k - 1])) {
            throw WorldError("schedule: alpha_bar must strictly decrease");
        }
    }
}

std::vector<double> forward_noise(const std::vector<double>& z0, int k,
                                  const std::vector<double>& eps, const NoiseSchedule& s) {
    check_step(k, s);
    if (z0.size() != eps.size()) throw WorldError("forward_noise: size mismatch");
    const double a = std::sqrt(s.alpha_bar[k]);
    const double b = std::sqrt(1.0 - s.alpha_bar[k]);
    std::vector<double> out(z0.size());
    for (size_t i = 0; i < z0.size(); ++i) out[i] = a * z0[i] + b * eps[i];
    return out;
}

std::vector<double> estimate_clean(const std::vector<double>& z_k, int k,
                                   const std::vector<double>& eps_pred, const NoiseSchedule& s) {
    check_step(k, s);
    if (z_k.size() != eps_pred.size()) throw WorldError("estimate_clean: size mismatch");
    const double a = std::sqrt(s.alpha_bar[k]);
    const double b = std::sqrt(1.0 - s.alpha_bar[k]);
    std::vector<double> out(z_k.size());
    for (size_t i = 0; i < z_k.size(); ++i) out[i] = (z_k[i] - b * eps_pred[i]) / a;
    return out;
}

std::vector<double> ddim_step_from(const std::vector<double>& z0_tilde, int k,
                                   const std::vector<double>& eps_pred, const NoiseSchedule& s) {
    check_step(k, s);
    if (z0_tilde.size() != eps_pred.size()) throw WorldError("ddim_step_from: size mismatch");
    const double a = std::sqrt(s.alpha_bar[k - 1]);
    const double b = std::sqrt(1.0 - s.alpha_bar[k - 1]);
    std::vector<double> out(z0_tilde.size());
    for (size_t i = 0; i < z0_tilde.size(); ++i) out[i] = a * z0_tilde[i] + b * eps_pred[i];
    return out;
}

// ---------------------------------------------------------------- denoiser ---

DenoiserParams init_denoiser(const DenoiserConfig& cfg, uint64_t seed) {
    DenoiserParams p;
    p.cfg = cfg;
    Rng rng(seed ^ 0xd1f0d1f0d1f0d1f0ull);
    p.w_in.init(p.ps, cfg.d_z, cfg.hidden, rng);
    p.blocks.resize(cfg.blocks);
    for (auto& b : p.blocks) {
        b.we.init(p.ps, cfg.emb_dim, cfg.hidden, rng);
        b.wc.init(p.ps, cfg.d_c, cfg.hidden, rng);
        b.l1.init(p.ps, cfg.hidden, cfg.hidden, rng);
        b.l2.init(p.ps, cfg.hidden, cfg.hidden, rng);
    }
    p.w_out.init_zero(p.ps, cfg.hidden, cfg.d_z);
    return p;
}

std::vector<double> sinusoidal_embedding(int k, int dim) {
    std::vector<double> e(dim);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
        e[i] = std::sin(k * freq);
        e[half + i] = std::cos(k * freq);
    }
    return e;
}

std::vector<double> denoiser_eps(const DenoiserParams& p, const std::vector<double>& z, int k,
                                 const std::vector<double>& c, DenoiserCache* cache) {
    if (static_cast<int>(z.size()) != p.cfg.d_z) throw WorldError("denoiser: z dim mismatch");
    if (static_cast<int>(c.size()) != p.cfg.d_c) throw WorldError("denoiser: c dim mismatch");
    const int H = p.cfg.hidden;
    const std::vector<double> emb = sinusoidal_embedding(k, p.cfg.emb_dim);

    std::vector<double> h(H), tmp(H), pre(H), a1(H), t2(H);
    p.w_in.forward(p.ps, z.data(), h.data());
    if (cache) {
        cache->z = z;
        cache->emb = emb;
        cache->c = c;
        cache->blocks.clear();
    }
    for (const auto& b : p.blocks) {
        b.we.forward(p.ps, emb.data(), pre.data());
        b.wc.forward(p.ps, c.data(), tmp.data());
        for (int i = 0; i < H; ++i) pre[i] += tmp[i] + h[i];
        b.l1.forward(p.ps, pre.data(), a1.data());
        for (int i = 0; i < H; ++i) a1[i] = tanh_clip(a1[i]);
        b.l2.forward(p.ps, a1.data(), t2.data());
        for (int i = 0; i < H; ++i) h[i] += t2[i];
        if (cache) cache->blocks.push_back({pre, a1});
    }
    if (cache) cache->h_final = h;
    std::vector<double> eps(p.cfg.d_z);
    p.w_out.forward(p.ps, h.data(), eps.data());
    return eps;
}

void denoiser_backward(DenoiserParams& p, const DenoiserCache& cache,
                       const std::vector<double>& deps) {
    const int H = p.cfg.hidden;
    std::vector<double> dh(H), dt2(H), da1(H), dpre(H);
    p.w_out.backward(p.ps, cache.h_final.data(), deps.data(), dh.data());
    for (size_t bi = p.blocks.size(); bi-- > 0;) {
        const auto& b = p.blocks[bi];
        const auto& bc = cache.blocks[bi];
        // h_out = h_in + L2(tanh(L1(pre))), pre = h_in + We emb + Wc c
        for (int i = 0; i < H; ++i) dt2[i] = dh[i];
        b.l2.backward(p.ps, bc.a1.data(), dt2.data(), da1.data());
        for (int i = 0; i < H; ++i) da1[i] *= 1.0 - bc.a1[i] * bc.a1[i];
        b.l1.backward(p.ps, bc.pre.data(), da1.data(), dpre.data());
        b.we.backward(p.ps, cache.emb.data(), dpre.data(), nullptr);
        b.wc.backward(p.ps, cache.c.data(), dpre.data(), nullptr);
        for (int i = 0; i < H; ++i) dh[i] += dpre[i];
    }
    p.w_in.backward(p.ps, cache.z.data(), dh.data(), nullptr);
}

DenoiserTrainResult train_denoiser(const std::vector<LatentScene>& latents,
                                   const std::vector<CondLatent>& conds,
                                   const NoiseSchedule& sched, const DenoiserTrainConfig& cfg) {
    if (latents.empty() || latents.size() != conds.size()) {
        throw WorldError("train_denoiser: datasets empty or misaligned");
    }
    for (size_t i = 0; i < latents.size(); ++i) {
        if (latents[i].agent_ids != conds[i].agent_ids) {
            throw WorldError("train_denoiser: latent/cond agent ids misaligned");
        }
    }
    sched.check();

    DenoiserTrainResult res;
    res.params = init_denoiser(cfg.net, cfg.seed);
    DenoiserParams& p = res.params;
    const int dz = cfg.net.d_z;

    Adam opt;
    opt.lr = cfg.lr;
    Rng rng(cfg.seed ^ 0x7261696e64696666ull);
    std::vector<size_t> order(latents.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> eps(dz), deps(dz);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i) {
            const size_t j = rng.next() % i;
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;

        for (size_t bstart = 0; bstart < order.size(); bstart += cfg.batch) {
            const size_t bend = std::min(order.size(), bstart + cfg.batch);
            const double inv_batch = 1.0 / static_cast<double>(bend - bstart);
            p.ps.zero_grad();
            for (size_t oi = bstart; oi < bend; ++oi) {
                const LatentScene& scene = latents[order[oi]];
                const CondLatent& cond = conds[order[oi]];
                const int k = 1 + static_cast<int>(rng.next() % sched.K);
                double scene_loss = 0.0;
                for (size_t ai = 0; ai < scene.z.size(); ++ai) {
                    for (int d = 0; d < dz; ++d) eps[d] = rng.normal();
                    const auto z_k = forward_noise(scene.z[ai], k, eps, sched);
                    DenoiserCache cache;
                    const auto pred = denoiser_eps(p, z_k, k, cond.c[ai], &cache);
                    for (int d = 0; d < dz; ++d) {
                        const double e = pred[d] - eps[d];
                        scene_loss += e * e;
                        deps[d] = 2.0 * e * inv_batch;
                    }
                    denoiser_backward(p, cache, deps);
                }
                if (!std::isfinite(scene_loss)) {
                    throw WorldError("train_denoiser: loss diverged at epoch " +
                                     std::to_string(epoch));
                }
                epoch_loss += scene_loss;
            }
            opt.step(p.ps);
        }
        res.epoch_loss.push_back(epoch_loss / latents.size());
    }
    return res;
}

// ------------------------------------------------------------------- blobs ---

void save_denoiser(const DenoiserParams& p, const std::string& path) {
    nlohmann::json meta;
    meta["d_z"] = p.cfg.d_z;
    meta["d_c"] = p.cfg.d_c;
    meta["hidden"] = p.cfg.hidden;
    meta["blocks"] = p.cfg.blocks;
    meta["emb_dim"] = p.cfg.emb_dim;
    save_blob(path, "diff.v1", meta.dump(), {{"params", &p.ps.value}});
}

DenoiserParams load_denoiser(const std::string& path) {
    const LoadedBlob blob = load_blob(path, "diff.v1");
    const nlohmann::json meta = nlohmann::json::parse(blob.meta_json);
    DenoiserConfig cfg;
    cfg.d_z = meta.at("d_z").get<int>();
    cfg.d_c = meta.at("d_c").get<int>();
    cfg.hidden = meta.at("hidden").get<int>();
    cfg.blocks = meta.at("blocks").get<int>();
    cfg.emb_dim = meta.at("emb_dim").get<int>();
    DenoiserParams p = init_denoiser(cfg, 0);
    const auto& params = blob.array("params");
    if (params.size() != p.ps.value.size()) {
        throw WorldError("load_denoiser: parameter size mismatch");
    }
    p.ps.value = params;
    return p;
}

// ---------------------------------------------------------------- sampling ---

GuidedSampleResult guided_sample(const Scenario& sc, const CondLatent& cond,
                                 GuidanceObjective* objective, const CodecParams& codec,
                                 const DenoiserParams& dn, const NoiseSchedule& sched,
                                 const GuidedSampleConfig& cfg) {
    sched.check();
    if (cfg.n_samples < 1) throw WorldError("guided_sample: n_samples must be >= 1");
    if (cfg.lambda < 0.0) throw WorldError("guided_sample: lambda must be >= 0");
    if (cond.agent_ids != sc.non_ego_ids()) {
        throw WorldError("guided_sample: conditioning does not cover the non-ego agents");
    }
    const int dz = codec.cfg.d_z;
    const size_t n_agents = cond.agent_ids.size();
    const bool guide = objective != nullptr && cfg.lambda > 0.0;

    GuidedSampleResult res;
    for (int si = 0; si < cfg.n_samples; ++si) {
        // one reproducible stream per candidate, independent of the others
        Rng rng(cfg.seed ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(si + 1)));
        try {
            LatentScene z;
            z.agent_ids = cond.agent_ids;
            z.is_adv = cond.is_adv;
            z.k = sched.K;
            for (size_t ai = 0; ai < n_agents; ++ai) {
                std::vector<double> v(dz);
                for (double& x : v) x = rng.normal();
                z.z.push_back(std::move(v));
            }

            for (int k = sched.K; k >= 1; --k) {
                // per-agent epsilon prediction at this step
                std::vector<std::vector<double>> eps(n_agents);
                for (size_t ai = 0; ai < n_agents; ++ai) {
                    eps[ai] = denoiser_eps(dn, z.z[ai], k, cond.c[ai]);
                }
                LatentScene clean = z;
                clean.k = 0;
                for (size_t ai = 0; ai < n_agents; ++ai) {
                    clean.z[ai] = estimate_clean(z.z[ai], k, eps[ai], sched);
                }

                if (guide && !cfg.sigma_on_mu) {
                    for (int it = 0; it < cfg.iterations; ++it) {
                        DecodeCache cache;
                        const DecodeOut dec = decode(clean, sc, codec, &cache);
                        TrajAdjoint adj;
                        objective->eval(sc, dec, adj);
                        auto g = decode_backward(cache, codec, adj);
                        // joint norm clip across every agent's latent
                        double norm2 = 0.0;
                        for (const auto& row : g) {
                            for (double v : row) norm2 += v * v;
                        }
                        const double norm = std::sqrt(norm2);
                        const double scale = norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
                        const double step = cfg.lambda * (1.0 - sched.alpha_bar[k]) * scale;
                        for (size_t ai = 0; ai < n_agents; ++ai) {
                            for (int d = 0; d < dz; ++d) clean.z[ai][d] -= step * g[ai][d];
                        }
                    }
                }

                for (size_t ai = 0; ai < n_agents; ++ai) {
                    z.z[ai] = ddim_step_from(clean.z[ai], k, eps[ai], sched);
                }
                z.k = k - 1;

                if (guide && cfg.sigma_on_mu) {
                    // alternative form: perturb the DDIM mean itself
                    DecodeCache cache;
                    LatentScene mu = z;
                    mu.k = 0;
                    const DecodeOut dec = decode(mu, sc, codec, &cache);
                    TrajAdjoint adj;
                    objective->eval(sc, dec, adj);
                    auto g = decode_backward(cache, codec, adj);
                    double norm2 = 0.0;
                    for (const auto& row : g) {
                        for (double v : row) norm2 += v * v;
                    }
                    const double norm = std::sqrt(norm2);
                    const double scale = norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
                    const double step = cfg.lambda * (1.0 - sched.alpha_bar[k]) * scale;
                    for (size_t ai = 0; ai < n_agents; ++ai) {
                        for (int d = 0; d < dz; ++d) z.z[ai][d] -= step * g[ai][d];
                    }
                }
            }

            double loss = 0.0;
            if (objective) {
                const DecodeOut dec = decode(z, sc, codec);
                TrajAdjoint adj;
                loss = objective->eval(sc, dec, adj);
            }
            res.samples.push_back(std::move(z));
            res.losses.push_back(loss);
            res.sample_index.push_back(si);
        } catch (const WorldError& e) {
            res.failures.push_back("sample " + std::to_string(si) + ": " + e.what());
        }
    }
    if (res.samples.empty()) {
        std::string msg = "guided_sample: every candidate failed";
        for (const std::string& f : res.failures) msg += "; " + f;
        throw WorldError(msg);
    }
    return res;
}

bool trajectory_feasible(const Trajectory& traj, const std::vector<Action>& actions,
                         const WorldParams& wp, double kappa_max, double v_floor) {
    if (traj.size() != actions.size() + 1) throw WorldError("trajectory_feasible: length mismatch");
    for (size_t t = 0; t < actions.size(); ++t) {
        if (std::abs(actions[t].accel) > wp.accel_max + 1e-9) return false;
        if (std::abs(actions[t].yaw_rate) > wp.yaw_rate_max + 1e-9) return false;
        // curvature bound: turning tighter than kappa_max at speed is infeasible
        const double v = std::max(traj.states[t].speed, v_floor);
        if (std::abs(actions[t].yaw_rate) > kappa_max * v + 1e-9) return false;
    }
    return true;
}

SelectedSample select_best(const GuidedSampleResult& result, const Scenario& sc,
                           const CodecParams& codec) {
    if (result.samples.empty()) throw WorldError("select_best: no samples");
    int best_feasible = -1, best_any = -1;
    double best_feasible_loss = 0.0, best_any_loss = 0.0;
    for (size_t i = 0; i < result.samples.size(); ++i) {
        const DecodeOut dec = decode(result.samples[i], sc, codec);
        bool feasible = true;
        for (size_t ai = 0; ai < dec.futures.size(); ++ai) {
            if (!trajectory_feasible(dec.futures[ai], dec.actions[ai], codec.world)) {
                feasible = false;
                break;
            }
        }
        const double loss = result.losses[i];
        if (best_any < 0 || loss < best_any_loss) {
            best_any = static_cast<int>(i);
            best_any_loss = loss;
        }
        if (feasible && (best_feasible < 0 || loss < best_feasible_loss)) {
            best_feasible = static_cast<int>(i);
            best_feasible_loss = loss;
        }
    }
    SelectedSample out;
    out.index = best_feasible >= 0 ? best_feasible : best_any;
    out.feasible = best_feasible >= 0;
    out.z = result.samples[out.index];
    return out;
}

}  // namespace advscene
