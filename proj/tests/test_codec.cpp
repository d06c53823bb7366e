#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "advscene/codec.hpp"

using namespace advscene;

namespace {

Scenario make_scene(uint64_t seed, ScenarioTemplate tmpl = ScenarioTemplate::Straight) {
    return synth_scenarios(seed, 1, tmpl, {})[0];
}

std::vector<Trajectory> non_ego_futures(const Scenario& sc, int steps) {
    const auto all = continue_with_traffic(sc, steps);
    std::vector<Trajectory> out;
    for (size_t i = 0; i < sc.agents.size(); ++i) {
        if (sc.agents[i].id != sc.ego_id) out.push_back(all[i]);
    }
    return out;
}

LatentScene random_latents(const Scenario& sc, int d_z, uint64_t seed, double scale = 0.5) {
    Rng rng(seed);
    LatentScene z;
    z.agent_ids = sc.non_ego_ids();
    for (int id : z.agent_ids) {
        std::vector<double> v(d_z);
        for (double& x : v) x = rng.normal() * scale;
        z.z.push_back(std::move(v));
        z.is_adv.push_back(id == sc.adv_id ? 1 : 0);
    }
    z.k = 0;
    return z;
}

// decoded speeds near the clamp make derivatives one-sided; skip those draws
bool clamp_safe(const DecodeOut& dec, const WorldParams& wp) {
    for (const Trajectory& t : dec.futures) {
        for (const AgentState& s : t.states) {
            if (s.speed < 0.05 || s.speed > wp.v_max - 0.05) return false;
        }
    }
    return true;
}

}  // namespace

// --------------------------------------------------------------- encoding ---

TEST_CASE("feature vector dimensions") {
    Scenario sc = make_scene(1);
    CodecConfig cfg;
    const auto prior_feats = codec_features(sc, nullptr, cfg);
    REQUIRE_FALSE(prior_feats.empty());
    CHECK(prior_feats[0].size() == 34);
    const auto fut = non_ego_futures(sc, cfg.horizon);
    const auto post_feats = codec_features(sc, &fut, cfg);
    CHECK(post_feats[0].size() == 82);
}

TEST_CASE("encode_prior is deterministic and permutation-invariant") {
    Scenario sc = make_scene(4, ScenarioTemplate::Intersection);
    REQUIRE(sc.agents.size() >= 3);
    CodecParams p = init_codec({}, 77);

    const CondLatent a = encode_prior(sc, p);
    const CondLatent b = encode_prior(sc, p);
    REQUIRE(a.c.size() == b.c.size());
    for (size_t i = 0; i < a.c.size(); ++i) CHECK(a.c[i] == b.c[i]);

    // permute two non-ego agents in the list; ids travel with them
    Scenario perm = sc;
    std::swap(perm.agents[1], perm.agents[2]);
    const CondLatent c = encode_prior(perm, p);
    for (size_t i = 0; i < a.agent_ids.size(); ++i) {
        for (size_t j = 0; j < c.agent_ids.size(); ++j) {
            if (c.agent_ids[j] != a.agent_ids[i]) continue;
            CHECK(a.c[i] == c.c[j]);  // bitwise: same-id latents unchanged
        }
    }
}

TEST_CASE("encode_prior is translation-invariant to 1e-5") {
    Scenario sc = make_scene(6, ScenarioTemplate::Merge);
    CodecParams p = init_codec({}, 13);
    const CondLatent base = encode_prior(sc, p);

    // shift the whole scene: lanes, grids and agents move together
    auto moved_map = std::make_shared<MapModel>(*sc.map);
    for (Lane& ln : moved_map->lanes) {
        for (LanePoint& pt : ln.pts) pt.pos = pt.pos + Vec2{100.0, 100.0};
    }
    moved_map->grid.origin_x += 100.0;
    moved_map->grid.origin_y += 100.0;
    moved_map->build_distance_field();
    Scenario moved = sc;
    moved.map = moved_map;
    for (ScenarioAgent& ag : moved.agents) {
        for (AgentState& st : ag.past.states) {
            st.x += 100.0;
            st.y += 100.0;
        }
    }
    const CondLatent got = encode_prior(moved, p);
    for (size_t i = 0; i < base.c.size(); ++i) {
        for (size_t d = 0; d < base.c[i].size(); ++d) {
            CHECK(std::abs(got.c[i][d] - base.c[i][d]) < 1e-5);
        }
    }
}

TEST_CASE("encode_posterior with zero eps returns the mean") {
    Scenario sc = make_scene(2);
    CodecParams p = init_codec({}, 5);
    const auto fut = non_ego_futures(sc, p.cfg.horizon);
    const PosteriorOut post = encode_posterior(sc, fut, p);
    REQUIRE(post.z.n_agents() == static_cast<int>(post.mean.size()));
    for (size_t i = 0; i < post.mean.size(); ++i) CHECK(post.z.z[i] == post.mean[i]);
}

TEST_CASE("reparameterized sampling collapses when the log variance is tiny") {
    Scenario sc = make_scene(2);
    CodecParams p = init_codec({}, 5);
    // force the log-variance half of the posterior head to a large negative value
    const Linear& last = p.posterior.layers.back();
    for (int o = p.cfg.d_z; o < 2 * p.cfg.d_z; ++o) {
        for (int i = 0; i < last.in; ++i) p.ps.value[last.w_off + o * last.in + i] = 0.0;
        p.ps.value[last.b_off + o] = -40.0;
    }
    const auto fut = non_ego_futures(sc, p.cfg.horizon);
    Rng rng(99);
    double mean = 0.0, sumsq = 0.0;
    const int draws = 1000;
    for (int it = 0; it < draws; ++it) {
        std::vector<std::vector<double>> eps(sc.non_ego_ids().size(),
                                             std::vector<double>(p.cfg.d_z));
        for (auto& row : eps) {
            for (double& v : row) v = rng.normal();
        }
        const PosteriorOut post = encode_posterior(sc, fut, p, &eps);
        mean += post.z.z[0][0];
        sumsq += post.z.z[0][0] * post.z.z[0][0];
    }
    mean /= draws;
    CHECK(sumsq / draws - mean * mean < 1e-6);
}

TEST_CASE("posterior KL against the unit Gaussian is non-negative") {
    Scenario sc = make_scene(8, ScenarioTemplate::Curve);
    CodecParams p = init_codec({}, 21);
    const auto fut = non_ego_futures(sc, p.cfg.horizon);
    const PosteriorOut post = encode_posterior(sc, fut, p);
    for (size_t i = 0; i < post.mean.size(); ++i) {
        double kl = 0.0;
        for (int d = 0; d < p.cfg.d_z; ++d) {
            const double m = post.mean[i][d], lv = post.logvar[i][d];
            kl += 0.5 * (std::exp(lv) + m * m - 1.0 - lv);
        }
        CHECK(kl >= 0.0);
    }
}

// ---------------------------------------------------------------- decoding ---

TEST_CASE("decode respects action bounds and is deterministic") {
    Scenario sc = make_scene(3, ScenarioTemplate::Intersection);
    CodecParams p = init_codec({}, 31);
    const LatentScene z = random_latents(sc, p.cfg.d_z, 44);
    const DecodeOut a = decode(z, sc, p);
    const DecodeOut b = decode(z, sc, p);
    REQUIRE(a.futures.size() == z.z.size());
    for (size_t i = 0; i < a.futures.size(); ++i) {
        CHECK(a.futures[i].size() == static_cast<size_t>(p.cfg.horizon) + 1);
        for (size_t t = 0; t < a.futures[i].size(); ++t) {
            CHECK(a.futures[i].states[t].x == b.futures[i].states[t].x);
            CHECK(a.futures[i].states[t].y == b.futures[i].states[t].y);
        }
        for (const Action& act : a.actions[i]) {
            CHECK(std::abs(act.accel) <= p.world.accel_max);
            CHECK(std::abs(act.yaw_rate) <= p.world.yaw_rate_max);
        }
    }
}

TEST_CASE("decode rejects malformed latents") {
    Scenario sc = make_scene(3);
    CodecParams p = init_codec({}, 31);
    LatentScene z = random_latents(sc, p.cfg.d_z, 44);
    LatentScene bad = z;
    bad.z[0][0] = std::nan("");
    CHECK_THROWS_AS(decode(bad, sc, p), WorldError);
    LatentScene wrong_dim = z;
    wrong_dim.z[0].pop_back();
    CHECK_THROWS_AS(decode(wrong_dim, sc, p), WorldError);
    LatentScene ego_latent = z;
    ego_latent.agent_ids[0] = sc.ego_id;
    CHECK_THROWS_AS(decode(ego_latent, sc, p), WorldError);
}

TEST_CASE("decode backward matches finite differences through the whole chain") {
    Scenario sc = make_scene(12, ScenarioTemplate::Merge);
    CodecParams p = init_codec({}, 55);
    // non-identity latent standardization must be part of the chain
    for (int d = 0; d < p.cfg.d_z; ++d) {
        p.lat_mean[d] = 0.01 * d;
        p.lat_std[d] = 1.0 + 0.02 * d;
    }
    int tested = 0;
    for (uint64_t zseed = 0; zseed < 40 && tested < 8; ++zseed) {
        const LatentScene z = random_latents(sc, p.cfg.d_z, 1000 + zseed);
        DecodeCache cache;
        const DecodeOut dec = decode(z, sc, p, &cache);
        if (!clamp_safe(dec, p.world)) continue;

        // scalar objective: weighted sum over all decoded states and actions
        Rng wr(500 + zseed);
        TrajAdjoint adj;
        const int T = p.cfg.horizon;
        adj.dstate.assign(z.z.size(), std::vector<std::array<double, 4>>(T + 1, {0, 0, 0, 0}));
        adj.daction.assign(z.z.size(), std::vector<std::array<double, 2>>(T, {0, 0}));
        std::vector<std::vector<double>> wstate(z.z.size()), waction(z.z.size());
        for (size_t i = 0; i < z.z.size(); ++i) {
            for (int t = 1; t <= T; ++t) {
                for (int d = 0; d < 4; ++d) adj.dstate[i][t][d] = wr.normal() * 0.1;
            }
            for (int t = 0; t < T; ++t) {
                for (int d = 0; d < 2; ++d) adj.daction[i][t][d] = wr.normal() * 0.1;
            }
        }
        auto objective = [&](const LatentScene& zz) {
            const DecodeOut d2 = decode(zz, sc, p);
            double acc = 0.0;
            for (size_t i = 0; i < zz.z.size(); ++i) {
                for (int t = 1; t <= T; ++t) {
                    acc += adj.dstate[i][t][0] * d2.futures[i].states[t].x +
                           adj.dstate[i][t][1] * d2.futures[i].states[t].y +
                           adj.dstate[i][t][2] * d2.futures[i].states[t].heading +
                           adj.dstate[i][t][3] * d2.futures[i].states[t].speed;
                }
                for (int t = 0; t < T; ++t) {
                    acc += adj.daction[i][t][0] * d2.actions[i][t].accel +
                           adj.daction[i][t][1] * d2.actions[i][t].yaw_rate;
                }
            }
            return acc;
        };

        const auto dz = decode_backward(cache, p, adj);
        const double h = 1e-6;
        Rng dim_pick(900 + zseed);
        for (int probe = 0; probe < 6; ++probe) {
            const size_t ai = dim_pick.next() % z.z.size();
            const size_t di = dim_pick.next() % p.cfg.d_z;
            LatentScene zp = z, zm = z;
            zp.z[ai][di] += h;
            zm.z[ai][di] -= h;
            const double fd = (objective(zp) - objective(zm)) / (2 * h);
            const double got = dz[ai][di];
            const double denom = std::max(std::abs(fd), 1e-6);
            CHECK(std::abs(got - fd) / denom < 1e-3);
        }
        ++tested;
    }
    CHECK(tested >= 5);
}

TEST_CASE("small latent perturbations move endpoints less than a meter") {
    Scenario sc = make_scene(17);
    CodecParams p = init_codec({}, 3);
    const LatentScene z = random_latents(sc, p.cfg.d_z, 71);
    const DecodeOut base = decode(z, sc, p);
    Rng rng(72);
    for (int trial = 0; trial < 20; ++trial) {
        LatentScene zp = z;
        // perturbation with norm 1e-3 spread over one agent's latent
        double norm = 0.0;
        std::vector<double> delta(p.cfg.d_z);
        for (double& v : delta) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (int d = 0; d < p.cfg.d_z; ++d) zp.z[0][d] += delta[d] / norm * 1e-3;
        const DecodeOut got = decode(zp, sc, p);
        const double shift =
            (got.futures[0].back().pos() - base.futures[0].back().pos()).norm();
        CHECK(shift < 1.0);
    }
}

TEST_CASE("decode gradients stay finite under fuzzing") {
    Scenario sc = make_scene(23, ScenarioTemplate::Curve);
    CodecParams p = init_codec({}, 8);
    const int T = p.cfg.horizon;
    for (uint64_t it = 0; it < 200; ++it) {
        const LatentScene z = random_latents(sc, p.cfg.d_z, it, 2.0);
        DecodeCache cache;
        decode(z, sc, p, &cache);
        TrajAdjoint adj;
        Rng wr(it * 3 + 1);
        adj.dstate.assign(z.z.size(), std::vector<std::array<double, 4>>(T + 1, {0, 0, 0, 0}));
        for (size_t i = 0; i < z.z.size(); ++i) {
            for (int t = 1; t <= T; ++t) {
                for (int d = 0; d < 4; ++d) adj.dstate[i][t][d] = wr.normal();
            }
        }
        const auto dz = decode_backward(cache, p, adj);
        for (const auto& row : dz) {
            for (double v : row) CHECK(std::isfinite(v));
        }
    }
}

// ---------------------------------------------------------------- training ---

TEST_CASE("train_codec runs deterministically and the loss trends down") {
    std::vector<Scenario> scenarios = synth_scenarios(31, 100, ScenarioTemplate::Straight, {});
    std::vector<std::vector<Trajectory>> futures;
    for (const Scenario& sc : scenarios) futures.push_back(non_ego_futures(sc, 12));

    CodecTrainConfig cfg;
    cfg.epochs = 4;
    cfg.seed = 5;
    const CodecTrainResult a = train_codec(scenarios, futures, cfg);
    const CodecTrainResult b = train_codec(scenarios, futures, cfg);
    CHECK(a.params.ps.value == b.params.ps.value);
    CHECK(a.epoch_loss == b.epoch_loss);
    REQUIRE(a.epoch_loss.size() == 4);
    CHECK(a.epoch_loss.back() < a.epoch_loss.front());
    CHECK(a.epoch_ade.back() < a.epoch_ade.front());

    // latent standardization: posterior means should be near zero mean, unit spread
    for (int d = 0; d < cfg.codec.d_z; ++d) CHECK(a.params.lat_std[d] > 0.0);
}

TEST_CASE("train_codec rejects tiny datasets") {
    std::vector<Scenario> scenarios = synth_scenarios(1, 2, ScenarioTemplate::Straight, {});
    std::vector<std::vector<Trajectory>> futures;
    for (const Scenario& sc : scenarios) futures.push_back(non_ego_futures(sc, 12));
    CHECK_THROWS_AS(train_codec(scenarios, futures, {}), WorldError);
}

TEST_CASE("codec blob round-trip reproduces encode and decode bitwise") {
    Scenario sc = make_scene(41, ScenarioTemplate::Intersection);
    CodecParams p = init_codec({}, 19);
    for (int d = 0; d < p.cfg.d_z; ++d) {
        p.lat_mean[d] = 0.05 * d;
        p.lat_std[d] = 1.0 + 0.01 * d;
    }
    const std::string path = "test_codec_tmp.bin";
    save_codec(p, path);
    const CodecParams q = load_codec(path);
    std::remove(path.c_str());

    CHECK(q.ps.value == p.ps.value);
    CHECK(q.lat_mean == p.lat_mean);
    CHECK(q.lat_std == p.lat_std);

    const CondLatent ca = encode_prior(sc, p);
    const CondLatent cb = encode_prior(sc, q);
    for (size_t i = 0; i < ca.c.size(); ++i) CHECK(ca.c[i] == cb.c[i]);

    const LatentScene z = random_latents(sc, p.cfg.d_z, 7);
    const DecodeOut da = decode(z, sc, p);
    const DecodeOut db = decode(z, sc, q);
    for (size_t i = 0; i < da.futures.size(); ++i) {
        for (size_t t = 0; t < da.futures[i].size(); ++t) {
            CHECK(da.futures[i].states[t].x == db.futures[i].states[t].x);
            CHECK(da.futures[i].states[t].y == db.futures[i].states[t].y);
        }
    }
}
