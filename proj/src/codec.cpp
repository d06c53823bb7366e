#include "advscene/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <json.hpp>

namespace advscene {

namespace {

constexpr int kOwnDims = 4;       // per past state: rel x, rel y, dheading, speed
constexpr int kLaneDims = 4;      // lateral, heading err, offroad distance, width
constexpr int kNeighborDims = 5;  // rel x, rel y, cos dh, sin dh, speed
constexpr int kPoolDims = 2 * kNeighborDims;
constexpr int kFutDims = 4;  // per future state: rel x, rel y, dheading, speed
constexpr int kEmbedDims = 5;

void check_latent_shapes(const LatentScene& z, const CodecParams& p, const Scenario& sc) {
    if (z.agent_ids.size() != z.z.size()) throw WorldError("decode: ids and latents disagree");
    for (size_t i = 0; i < z.agent_ids.size(); ++i) {
        const int id = z.agent_ids[i];
        if (id == sc.ego_id) throw WorldError("decode: ego has no latent");
        sc.agent(id);  // throws when absent
        for (size_t j = i + 1; j < z.agent_ids.size(); ++j) {
            if (z.agent_ids[j] == id) throw WorldError("decode: duplicate agent id");
        }
        if (static_cast<int>(z.z[i].size()) != p.cfg.d_z) {
            throw WorldError("decode: latent dim mismatch");
        }
    }
    if (!z.finite()) throw WorldError("decode: non-finite latent");
}

std::array<double, kEmbedDims> embed_state(const AgentState& s, const AgentState& start) {
    const Vec2 rel = rotate(s.pos() - start.pos(), -start.heading);
    const double dh = s.heading - start.heading;
    return {rel.x / 10.0, rel.y / 10.0, std::cos(dh), std::sin(dh), s.speed / 10.0};
}

}  // namespace

bool LatentScene::finite() const {
    for (const auto& v : z) {
        for (double x : v) {
            if (!std::isfinite(x)) return false;
        }
    }
    return true;
}

int CodecParams::prior_feat_dim() const {
    return kOwnDims * (cfg.t_hist + 1) + kLaneDims + kPoolDims;
}

int CodecParams::posterior_feat_dim() const { return prior_feat_dim() + kFutDims * cfg.horizon; }

CodecParams init_codec(const CodecConfig& cfg, uint64_t seed) {
    CodecParams p;
    p.cfg = cfg;
    Rng rng(seed ^ 0xc0dec0dec0dec0deull);
    const int fp = kOwnDims * (cfg.t_hist + 1) + kLaneDims + kPoolDims;
    const int fq = fp + kFutDims * cfg.horizon;
    p.prior.init(p.ps, {fp, cfg.hidden, cfg.hidden, cfg.d_c}, rng);
    p.posterior.init(p.ps, {fq, cfg.hidden, cfg.hidden, 2 * cfg.d_z}, rng);
    p.decoder.init(p.ps, {cfg.d_z + kEmbedDims, cfg.hidden, cfg.hidden, 2}, rng);
    p.feat_mean.assign(fq, 0.0);
    p.feat_std.assign(fq, 1.0);
    p.lat_mean.assign(cfg.d_z, 0.0);
    p.lat_std.assign(cfg.d_z, 1.0);
    return p;
}

std::vector<std::vector<double>> codec_features(const Scenario& sc,
                                                const std::vector<Trajectory>* futures,
                                                const CodecConfig& cfg) {
    sc.validate();
    if (sc.history_len() != cfg.t_hist + 1) {
        throw WorldError("codec_features: past length != t_hist + 1");
    }
    const auto ids = sc.non_ego_ids();
    if (futures) {
        if (futures->size() != ids.size()) {
            throw WorldError("codec_features: futures count != non-ego agents");
        }
        for (const Trajectory& f : *futures) {
            if (static_cast<int>(f.size()) != cfg.horizon + 1) {
                throw WorldError("codec_features: future length != horizon + 1");
            }
            if (f.tick != sc.tick) throw WorldError("codec_features: future tick mismatch");
        }
    }

    std::vector<std::vector<double>> out;
    out.reserve(ids.size());
    for (size_t idx = 0; idx < ids.size(); ++idx) {
        const ScenarioAgent& me = sc.agent(ids[idx]);
        const AgentState& cur = me.current();
        std::vector<double> f;
        f.reserve(kOwnDims * (cfg.t_hist + 1) + kLaneDims + kPoolDims +
                  (futures ? kFutDims * cfg.horizon : 0));

        // own past in the current frame, oldest first
        for (const AgentState& s : me.past.states) {
            const Vec2 rel = rotate(s.pos() - cur.pos(), -cur.heading);
            f.push_back(rel.x);
            f.push_back(rel.y);
            f.push_back(angle_diff(s.heading, cur.heading));
            f.push_back(s.speed);
        }

        // local lane geometry
        const auto proj = sc.map->nearest_lane(cur.pos(), cur.heading);
        if (proj) {
            f.push_back(clamp(proj->lateral, -10.0, 10.0));
            f.push_back(proj->heading_err);
            const auto d = sc.map->field.sample(cur.pos());
            f.push_back(d && std::isfinite(*d) ? std::min(*d, 10.0) : 10.0);
            f.push_back(sc.map->lanes[proj->lane].width);
        } else {
            f.insert(f.end(), {0.0, 0.0, 10.0, 3.5});
        }

        // nearest-neighbor pooling, permutation-invariant over the other agents
        struct Nb {
            double d;
            int id;
            std::array<double, kNeighborDims> v;
        };
        std::vector<Nb> nbs;
        for (const ScenarioAgent& other : sc.agents) {
            if (other.id == me.id) continue;
            const AgentState& os = other.current();
            const Vec2 rel = rotate(os.pos() - cur.pos(), -cur.heading);
            const double dh = angle_diff(os.heading, cur.heading);
            nbs.push_back({rel.norm(), other.id, {rel.x, rel.y, std::cos(dh), std::sin(dh), os.speed}});
        }
        std::sort(nbs.begin(), nbs.end(), [](const Nb& a, const Nb& b) {
            return a.d != b.d ? a.d < b.d : a.id < b.id;
        });
        const size_t k = std::min<size_t>(cfg.k_neighbors, nbs.size());
        std::array<double, kNeighborDims> mean{}, mx{};
        mx.fill(-1e300);
        for (size_t j = 0; j < k; ++j) {
            for (int d = 0; d < kNeighborDims; ++d) {
                mean[d] += nbs[j].v[d];
                mx[d] = std::max(mx[d], nbs[j].v[d]);
            }
        }
        for (int d = 0; d < kNeighborDims; ++d) {
            f.push_back(k > 0 ? mean[d] / static_cast<double>(k) : 0.0);
            f.push_back(k > 0 ? mx[d] : 0.0);
        }

        // future states in the current frame (posterior features only)
        if (futures) {
            const Trajectory& fut = (*futures)[idx];
            for (int t = 1; t <= cfg.horizon; ++t) {
                const AgentState& s = fut.states[t];
                const Vec2 rel = rotate(s.pos() - cur.pos(), -cur.heading);
                f.push_back(rel.x);
                f.push_back(rel.y);
                f.push_back(angle_diff(s.heading, cur.heading));
                f.push_back(s.speed);
            }
        }
        out.push_back(std::move(f));
    }
    return out;
}

CondLatent encode_prior(const Scenario& sc, const CodecParams& p) {
    const auto feats = codec_features(sc, nullptr, p.cfg);
    const auto ids = sc.non_ego_ids();
    CondLatent out;
    out.agent_ids = ids;
    const int fp = p.prior_feat_dim();
    std::vector<double> xn(fp);
    for (size_t i = 0; i < feats.size(); ++i) {
        for (int d = 0; d < fp; ++d) xn[d] = (feats[i][d] - p.feat_mean[d]) / p.feat_std[d];
        std::vector<double> c(p.cfg.d_c);
        p.prior.forward(p.ps, xn.data(), c.data());
        out.c.push_back(std::move(c));
        out.is_adv.push_back(ids[i] == sc.adv_id ? 1 : 0);
    }
    return out;
}

PosteriorOut encode_posterior(const Scenario& sc, const std::vector<Trajectory>& futures,
                              const CodecParams& p, const std::vector<std::vector<double>>* eps) {
    const auto feats = codec_features(sc, &futures, p.cfg);
    const auto ids = sc.non_ego_ids();
    PosteriorOut out;
    out.agent_ids = ids;
    out.z.agent_ids = ids;
    out.z.k = 0;
    const int fq = p.posterior_feat_dim();
    const int dz = p.cfg.d_z;
    if (eps && eps->size() != feats.size()) {
        throw WorldError("encode_posterior: eps count != non-ego agents");
    }
    std::vector<double> xn(fq), head(2 * dz);
    for (size_t i = 0; i < feats.size(); ++i) {
        if (eps && static_cast<int>((*eps)[i].size()) != dz) {
            throw WorldError("encode_posterior: eps dim mismatch");
        }
        for (int d = 0; d < fq; ++d) xn[d] = (feats[i][d] - p.feat_mean[d]) / p.feat_std[d];
        p.posterior.forward(p.ps, xn.data(), head.data());
        std::vector<double> mean(dz), logvar(dz), z(dz);
        for (int d = 0; d < dz; ++d) {
            // standardize: affine map on the mean, matching shift of the log variance
            mean[d] = (head[d] - p.lat_mean[d]) / p.lat_std[d];
            logvar[d] = head[dz + d] - 2.0 * std::log(p.lat_std[d]);
            const double e = eps ? (*eps)[i][d] : 0.0;
            z[d] = mean[d] + std::exp(0.5 * logvar[d]) * e;
        }
        out.mean.push_back(std::move(mean));
        out.logvar.push_back(std::move(logvar));
        out.z.z.push_back(std::move(z));
        out.z.is_adv.push_back(ids[i] == sc.adv_id ? 1 : 0);
    }
    return out;
}

DecodeOut decode(const LatentScene& z, const Scenario& sc, const CodecParams& p,
                 DecodeCache* cache) {
    check_latent_shapes(z, p, sc);
    const std::vector<int>& ids = z.agent_ids;
    const int dz = p.cfg.d_z;
    DecodeOut out;
    out.agent_ids = ids;
    if (cache) {
        cache->agents.assign(ids.size(), {});
        cache->z_raw.assign(ids.size(), {});
        cache->start.assign(ids.size(), {});
        cache->tick = sc.tick;
    }

    std::vector<double> in(dz + kEmbedDims), u(2);
    for (size_t i = 0; i < ids.size(); ++i) {
        std::vector<double> z_raw(dz);
        for (int d = 0; d < dz; ++d) z_raw[d] = z.z[i][d] * p.lat_std[d] + p.lat_mean[d];

        const AgentState start = sc.agent(ids[i]).current();
        AgentState state = start;
        Trajectory traj;
        traj.tick = sc.tick;
        traj.states.push_back(state);
        std::vector<Action> acts;
        for (int t = 0; t < p.cfg.horizon; ++t) {
            const auto e = embed_state(state, start);
            std::memcpy(in.data(), z_raw.data(), sizeof(double) * dz);
            std::memcpy(in.data() + dz, e.data(), sizeof(double) * kEmbedDims);
            Mlp::Cache mc;
            p.decoder.forward(p.ps, in.data(), u.data(), cache ? &mc : nullptr);
            Action a;
            a.accel = tanh_clip(u[0]) * p.world.accel_max;
            a.yaw_rate = tanh_clip(u[1]) * p.world.yaw_rate_max;
            if (cache) {
                cache->agents[i].push_back({state, e, {u[0], u[1]}, std::move(mc)});
            }
            state = bicycle_step(state, a, sc.tick, p.world);
            traj.states.push_back(state);
            acts.push_back(a);
        }
        out.futures.push_back(std::move(traj));
        out.actions.push_back(std::move(acts));
        if (cache) {
            cache->z_raw[i] = std::move(z_raw);
            cache->start[i] = start;
        }
    }
    return out;
}

std::vector<std::vector<double>> decode_backward(const DecodeCache& cache, const CodecParams& p,
                                                 const TrajAdjoint& adj, ParamStore* accum) {
    const int dz = p.cfg.d_z;
    const int T = p.cfg.horizon;
    std::vector<std::vector<double>> dz_std(cache.agents.size(), std::vector<double>(dz, 0.0));

    // weight gradients land in a scratch store when the caller only wants dz
    ParamStore scratch;
    ParamStore* ps_grad = accum ? accum : &scratch;
    if (!accum) {
        scratch.value = p.ps.value;
        scratch.grad.assign(p.ps.value.size(), 0.0);
    }

    std::vector<double> din(dz + kEmbedDims);
    for (size_t i = 0; i < cache.agents.size(); ++i) {
        const auto& steps = cache.agents[i];
        std::vector<double> dz_raw(dz, 0.0);
        // adjoint on the state entering each step; index T = final state
        std::vector<std::array<double, 4>> A(T + 1, {0, 0, 0, 0});
        if (i < adj.dstate.size() && !adj.dstate[i].empty()) {
            if (adj.dstate[i].size() != static_cast<size_t>(T) + 1) {
                throw WorldError("decode_backward: dstate must cover horizon + 1 entries");
            }
            for (int t = 1; t <= T; ++t) A[t] = adj.dstate[i][t];
        }
        for (int t = T - 1; t >= 0; --t) {
            const auto& st = steps[t];
            const Action a{tanh_clip(st.u[0]) * p.world.accel_max,
                           tanh_clip(st.u[1]) * p.world.yaw_rate_max};
            const BicycleGrad g = bicycle_step_grad(st.state, a, cache.tick, p.world);
            const std::array<double, 4>& An = A[t + 1];
            // position rows feed the updated speed and heading
            const double av = An[0] * g.dx_dv + An[1] * g.dy_dv + An[3];
            const double ath = An[0] * g.dx_dth + An[1] * g.dy_dth + An[2];
            double da0 = av * g.dv_da;
            double da1 = ath * g.dth_dw;
            if (i < adj.daction.size() && !adj.daction[i].empty()) {
                da0 += adj.daction[i][t][0];
                da1 += adj.daction[i][t][1];
            }
            // through the tanh squash
            const double th0 = tanh_clip(st.u[0]), th1 = tanh_clip(st.u[1]);
            const double du0 = da0 * p.world.accel_max * (1.0 - th0 * th0);
            const double du1 = da1 * p.world.yaw_rate_max * (1.0 - th1 * th1);
            const double du[2] = {du0, du1};
            p.decoder.backward(*ps_grad, steps[t].mlp, du, din.data());
            for (int d = 0; d < dz; ++d) dz_raw[d] += din[d];

            // embedding pulls back onto the entering state
            const double* de = din.data() + dz;
            const double c0 = std::cos(cache.start[i].heading), s0 = std::sin(cache.start[i].heading);
            const double dh = st.state.heading - cache.start[i].heading;
            A[t][0] += (de[0] * c0 - de[1] * s0) / 10.0 + An[0];
            A[t][1] += (de[0] * s0 + de[1] * c0) / 10.0 + An[1];
            A[t][2] += -de[2] * std::sin(dh) + de[3] * std::cos(dh) + ath * g.dth_dth;
            A[t][3] += de[4] / 10.0 + av * g.dv_dv;
        }
        for (int d = 0; d < dz; ++d) dz_std[i][d] = dz_raw[d] * p.lat_std[d];
    }
    return dz_std;
}

double trajectory_ade(const Trajectory& got, const Trajectory& want) {
    if (got.size() != want.size()) throw WorldError("trajectory_ade: length mismatch");
    if (got.size() < 2) return 0.0;
    double acc = 0.0;
    for (size_t t = 1; t < got.size(); ++t) {
        acc += (got.states[t].pos() - want.states[t].pos()).norm();
    }
    return acc / static_cast<double>(got.size() - 1);
}

// ---------------------------------------------------------------- training ---

CodecTrainResult train_codec(const std::vector<Scenario>& scenarios,
                             const std::vector<std::vector<Trajectory>>& futures,
                             const CodecTrainConfig& cfg) {
    if (scenarios.size() < 100) throw WorldError("train_codec: need at least 100 scenarios");
    if (futures.size() != scenarios.size()) {
        throw WorldError("train_codec: futures count != scenarios");
    }

    CodecTrainResult res;
    res.params = init_codec(cfg.codec, cfg.seed);
    CodecParams& p = res.params;
    const int dz = cfg.codec.d_z;
    const int T = cfg.codec.horizon;
    const int fq = p.posterior_feat_dim();

    // feature normalization from the raw dataset, fixed before any training
    {
        std::vector<double> sum(fq, 0.0), sumsq(fq, 0.0);
        size_t n = 0;
        for (size_t s = 0; s < scenarios.size(); ++s) {
            const auto feats = codec_features(scenarios[s], &futures[s], cfg.codec);
            for (const auto& f : feats) {
                for (int d = 0; d < fq; ++d) {
                    sum[d] += f[d];
                    sumsq[d] += f[d] * f[d];
                }
                ++n;
            }
        }
        for (int d = 0; d < fq; ++d) {
            p.feat_mean[d] = sum[d] / static_cast<double>(n);
            const double var = sumsq[d] / static_cast<double>(n) - p.feat_mean[d] * p.feat_mean[d];
            p.feat_std[d] = std::sqrt(std::max(var, 1e-12));
            if (p.feat_std[d] < 1e-6) p.feat_std[d] = 1.0;  // constant feature, leave unscaled
        }
    }

    Adam opt;
    opt.lr = cfg.lr;
    Rng rng(cfg.seed ^ 0x7261696e636f6465ull);
    std::vector<size_t> order(scenarios.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    const int fp = p.prior_feat_dim();
    std::vector<double> xn(fq), head(2 * dz), dhead(2 * dz);
    std::vector<double> xp(fp), c(cfg.codec.d_c), dc(cfg.codec.d_c);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // deterministic shuffle
        for (size_t i = order.size(); i > 1; --i) {
            const size_t j = rng.next() % i;
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0, epoch_ade = 0.0;
        size_t agents_seen = 0;

        for (size_t bstart = 0; bstart < order.size(); bstart += cfg.batch) {
            const size_t bend = std::min(order.size(), bstart + cfg.batch);
            const double inv_batch = 1.0 / static_cast<double>(bend - bstart);
            p.ps.zero_grad();

            for (size_t oi = bstart; oi < bend; ++oi) {
                const Scenario& sc = scenarios[order[oi]];
                const auto& fut = futures[order[oi]];
                const auto feats = codec_features(sc, &fut, cfg.codec);
                const int n_ag = static_cast<int>(feats.size());
                const double inv_n = inv_batch / n_ag;

                for (int ai = 0; ai < n_ag; ++ai) {
                    for (int d = 0; d < fq; ++d) {
                        xn[d] = (feats[ai][d] - p.feat_mean[d]) / p.feat_std[d];
                    }
                    Mlp::Cache post_cache;
                    p.posterior.forward(p.ps, xn.data(), head.data(), &post_cache);

                    std::vector<double> eps(dz), zvec(dz);
                    for (int d = 0; d < dz; ++d) {
                        eps[d] = rng.normal();
                        zvec[d] = head[d] + std::exp(0.5 * head[dz + d]) * eps[d];
                    }

                    // single-agent decode against this agent's ground truth
                    LatentScene ls;
                    ls.agent_ids = {sc.non_ego_ids()[ai]};
                    ls.z = {zvec};
                    ls.is_adv = {static_cast<uint8_t>(sc.non_ego_ids()[ai] == sc.adv_id)};
                    DecodeCache dcache;
                    DecodeOut dec = decode(ls, sc, p, &dcache);

                    const Trajectory& want = fut[ai];
                    const Trajectory& got = dec.futures[0];
                    TrajAdjoint adj;
                    adj.dstate.assign(1, std::vector<std::array<double, 4>>(T + 1, {0, 0, 0, 0}));
                    double recon = 0.0, disp = 0.0;
                    const double inv_T = 1.0 / T;
                    for (int t = 1; t <= T; ++t) {
                        const double ex = got.states[t].x - want.states[t].x;
                        const double ey = got.states[t].y - want.states[t].y;
                        const double eh = angle_diff(got.states[t].heading, want.states[t].heading);
                        const double ev = got.states[t].speed - want.states[t].speed;
                        recon += (ex * ex + ey * ey + 0.1 * (1.0 - std::cos(eh)) + 0.01 * ev * ev) * inv_T;
                        disp += std::sqrt(ex * ex + ey * ey) * inv_T;
                        adj.dstate[0][t][0] = 2.0 * ex * inv_T * inv_n;
                        adj.dstate[0][t][1] = 2.0 * ey * inv_T * inv_n;
                        adj.dstate[0][t][2] = 0.1 * std::sin(eh) * inv_T * inv_n;
                        adj.dstate[0][t][3] = 0.02 * ev * inv_T * inv_n;
                    }
                    const auto dzv = decode_backward(dcache, p, adj, &p.ps);

                    // KL against the unit Gaussian, summed over dims
                    double kl = 0.0;
                    for (int d = 0; d < dz; ++d) {
                        const double m = head[d], lv = head[dz + d];
                        kl += 0.5 * (std::exp(lv) + m * m - 1.0 - lv);
                    }

                    for (int d = 0; d < dz; ++d) {
                        const double m = head[d], lv = head[dz + d];
                        const double dzd = dzv[0][d];
                        dhead[d] = dzd + cfg.beta_kl * m * inv_n;
                        dhead[dz + d] = dzd * eps[d] * 0.5 * std::exp(0.5 * lv) +
                                        cfg.beta_kl * 0.5 * (std::exp(lv) - 1.0) * inv_n;
                    }
                    p.posterior.backward(p.ps, post_cache, dhead.data(), nullptr);

                    // the prior head learns to predict the posterior mean
                    double pm = 0.0;
                    if (cfg.prior_match > 0.0) {
                        for (int d = 0; d < fp; ++d) xp[d] = xn[d];
                        Mlp::Cache prior_cache;
                        p.prior.forward(p.ps, xp.data(), c.data(), &prior_cache);
                        for (int d = 0; d < cfg.codec.d_c; ++d) {
                            const double e = c[d] - head[d];
                            pm += e * e;
                            dc[d] = 2.0 * cfg.prior_match * e * inv_n;
                        }
                        p.prior.backward(p.ps, prior_cache, dc.data(), nullptr);
                    }

                    const double loss = recon + cfg.beta_kl * kl + cfg.prior_match * pm;
                    if (!std::isfinite(loss)) {
                        throw WorldError("train_codec: loss diverged at epoch " +
                                         std::to_string(epoch));
                    }
                    epoch_loss += loss;
                    epoch_ade += disp;
                    ++agents_seen;
                }
            }
            opt.step(p.ps);
        }
        res.epoch_loss.push_back(epoch_loss / agents_seen);
        res.epoch_ade.push_back(epoch_ade / agents_seen);
    }

    // latent standardization from posterior means over the training set
    {
        std::vector<double> sum(dz, 0.0), sumsq(dz, 0.0);
        size_t n = 0;
        for (size_t s = 0; s < scenarios.size(); ++s) {
            const auto post = encode_posterior(scenarios[s], futures[s], p);
            for (const auto& m : post.mean) {
                for (int d = 0; d < dz; ++d) {
                    sum[d] += m[d];
                    sumsq[d] += m[d] * m[d];
                }
                ++n;
            }
        }
        for (int d = 0; d < dz; ++d) {
            p.lat_mean[d] = sum[d] / static_cast<double>(n);
            const double var = sumsq[d] / static_cast<double>(n) - p.lat_mean[d] * p.lat_mean[d];
            p.lat_std[d] = std::sqrt(std::max(var, 1e-12));
            if (p.lat_std[d] < 1e-6) p.lat_std[d] = 1.0;
        }
    }
    return res;
}

// ------------------------------------------------------------------- blobs ---

void save_codec(const CodecParams& p, const std::string& path) {
    nlohmann::json meta;
    meta["d_z"] = p.cfg.d_z;
    meta["d_c"] = p.cfg.d_c;
    meta["hidden"] = p.cfg.hidden;
    meta["t_hist"] = p.cfg.t_hist;
    meta["horizon"] = p.cfg.horizon;
    meta["k_neighbors"] = p.cfg.k_neighbors;
    meta["accel_max"] = p.world.accel_max;
    meta["yaw_rate_max"] = p.world.yaw_rate_max;
    meta["v_max"] = p.world.v_max;
    save_blob(path, "codec.v1", meta.dump(),
              {{"params", &p.ps.value},
               {"feat_mean", &p.feat_mean},
               {"feat_std", &p.feat_std},
               {"lat_mean", &p.lat_mean},
               {"lat_std", &p.lat_std}});
}

CodecParams load_codec(const std::string& path) {
    const LoadedBlob blob = load_blob(path, "codec.v1");
    const nlohmann::json meta = nlohmann::json::parse(blob.meta_json);
    CodecConfig cfg;
    cfg.d_z = meta.at("d_z").get<int>();
    cfg.d_c = meta.at("d_c").get<int>();
    cfg.hidden = meta.at("hidden").get<int>();
    cfg.t_hist = meta.at("t_hist").get<int>();
    cfg.horizon = meta.at("horizon").get<int>();
    cfg.k_neighbors = meta.at("k_neighbors").get<int>();
    CodecParams p = init_codec(cfg, 0);
    p.world.accel_max = meta.at("accel_max").get<double>();
    p.world.yaw_rate_max = meta.at("yaw_rate_max").get<double>();
    p.world.v_max = meta.at("v_max").get<double>();
    const auto& params = blob.array("params");
    if (params.size() != p.ps.value.size()) throw WorldError("load_codec: parameter size mismatch");
    p.ps.value = params;
    p.feat_mean = blob.array("feat_mean");
    p.feat_std = blob.array("feat_std");
    p.lat_mean = blob.array("lat_mean");
    p.lat_std = blob.array("lat_std");
    if (static_cast<int>(p.feat_mean.size()) != p.posterior_feat_dim()) {
        throw WorldError("load_codec: feature stats size mismatch");
    }
    return p;
}

}  // namespace advscene
