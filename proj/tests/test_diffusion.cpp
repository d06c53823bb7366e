#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "advscene/diffusion.hpp"
#include "advscene/scenario.hpp"

using namespace advscene;

namespace {

Scenario probe_scenario(uint64_t seed = 7) {
    return synth_scenarios(seed, 1, ScenarioTemplate::Straight).front();
}

std::vector<double> random_vec(Rng& rng, int n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

/// Squared distance of the adversary's final position to a fixed point.
struct EndpointObjective : GuidanceObjective {
    Vec2 target;
    explicit EndpointObjective(Vec2 t) : target(t) {}

    double eval(const Scenario& sc, const DecodeOut& dec, TrajAdjoint& adj) override {
        adj.dstate.assign(dec.futures.size(), {});
        for (size_t ai = 0; ai < dec.agent_ids.size(); ++ai) {
            if (dec.agent_ids[ai] != sc.adv_id) continue;
            const AgentState& last = dec.futures[ai].states.back();
            const double dx = last.x - target.x;
            const double dy = last.y - target.y;
            adj.dstate[ai].assign(dec.futures[ai].size(), {0, 0, 0, 0});
            adj.dstate[ai].back() = {2.0 * dx, 2.0 * dy, 0.0, 0.0};
            return dx * dx + dy * dy;
        }
        throw WorldError("objective: adversary not decoded");
    }
};

/// Pulls every agent except the adversary toward a point; the adversary's
/// adjoint rows stay empty, so its latent must never move.
struct OthersOnlyObjective : GuidanceObjective {
    double eval(const Scenario& sc, const DecodeOut& dec, TrajAdjoint& adj) override {
        adj.dstate.assign(dec.futures.size(), {});
        double total = 0.0;
        for (size_t ai = 0; ai < dec.agent_ids.size(); ++ai) {
            if (dec.agent_ids[ai] == sc.adv_id) continue;
            const AgentState& last = dec.futures[ai].states.back();
            adj.dstate[ai].assign(dec.futures[ai].size(), {0, 0, 0, 0});
            adj.dstate[ai].back() = {2.0 * last.x, 2.0 * last.y, 0.0, 0.0};
            total += last.x * last.x + last.y * last.y;
        }
        return total;
    }
};

}  // namespace

TEST_CASE("schedule conventions and constant-beta product") {
    const auto sched = NoiseSchedule::cosine();
    CHECK(sched.K == 20);
    CHECK(sched.alpha_bar[0] == 1.0);

    const auto flat = NoiseSchedule::linear(20, 0.01, 0.01);
    CHECK(flat.alpha_bar[0] == 1.0);
    CHECK(flat.alpha_bar[2] == doctest::Approx(0.9801).epsilon(1e-12));
    CHECK(flat.beta[0] == doctest::Approx(0.01));
}

TEST_CASE("every expressible schedule is monotone and passes check") {
    for (int K : {1, 5, 20, 50}) {
        for (double s : {0.004, 0.008, 0.05}) {
            const auto c = NoiseSchedule::cosine(K, s);
            c.check();
            for (int k = 1; k <= K; ++k) CHECK(c.alpha_bar[k] < c.alpha_bar[k - 1]);
        }
        const auto l = NoiseSchedule::linear(K, 1e-4, 0.2);
        l.check();
        for (int k = 1; k <= K; ++k) CHECK(l.alpha_bar[k] < l.alpha_bar[k - 1]);
    }

    NoiseSchedule bad = NoiseSchedule::linear(5);
    bad.alpha_bar[3] = bad.alpha_bar[2];
    CHECK_THROWS_AS(bad.check(), WorldError);
    bad = NoiseSchedule::linear(5);
    bad.beta[0] = 1.5;
    CHECK_THROWS_AS(bad.check(), WorldError);
}

TEST_CASE("forward noise marginal matches closed form empirically") {
    const auto sched = NoiseSchedule::cosine();
    const int k = 12;
    const double ab = sched.alpha_bar[k];
    const std::vector<double> z0 = {1.5};

    Rng rng(99);
    const int n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto z = forward_noise(z0, k, {rng.normal()}, sched);
        sum += z[0];
        sum2 += z[0] * z[0];
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    const double want_mean = std::sqrt(ab) * 1.5;
    const double want_var = 1.0 - ab;
    CHECK(std::abs(mean - want_mean) < 3.0 * std::sqrt(want_var / n));
    CHECK(std::abs(var - want_var) < 3.0 * want_var * std::sqrt(2.0 / (n - 1)));

    CHECK_THROWS_AS(forward_noise(z0, 0, {0.0}, sched), WorldError);
    CHECK_THROWS_AS(forward_noise(z0, 21, {0.0}, sched), WorldError);
}

TEST_CASE("clean estimate inverts forward noise and recomposes") {
    Rng rng(3);
    for (const auto& sched : {NoiseSchedule::cosine(), NoiseSchedule::linear(),
                              NoiseSchedule::cosine(7, 0.05), NoiseSchedule::linear(3, 0.01, 0.3)}) {
        for (int k = 1; k <= sched.K; ++k) {
            const auto z0 = random_vec(rng, 8);
            const auto eps = random_vec(rng, 8);
            const auto z_k = forward_noise(z0, k, eps, sched);

            // exact epsilon recovers z0
            const auto back = estimate_clean(z_k, k, eps, sched);
            for (int d = 0; d < 8; ++d) CHECK(back[d] == doctest::Approx(z0[d]).epsilon(1e-6));

            // recomposition identity for an arbitrary epsilon prediction
            const auto pred = random_vec(rng, 8);
            const auto clean = estimate_clean(z_k, k, pred, sched);
            const double a = std::sqrt(sched.alpha_bar[k]);
            const double b = std::sqrt(1.0 - sched.alpha_bar[k]);
            for (int d = 0; d < 8; ++d) {
                CHECK(a * clean[d] + b * pred[d] == doctest::Approx(z_k[d]).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("clean estimate approaches z_k as noise vanishes") {
    auto sched = NoiseSchedule::linear(3, 1e-9, 1e-9);
    const std::vector<double> z_k = {0.7, -1.2};
    const std::vector<double> pred = {0.5, 0.5};
    const auto clean = estimate_clean(z_k, 1, pred, sched);
    CHECK(clean[0] == doctest::Approx(0.7).epsilon(1e-4));
    CHECK(clean[1] == doctest::Approx(-1.2).epsilon(1e-4));
}

TEST_CASE("final reverse step returns the clean estimate exactly") {
    const auto sched = NoiseSchedule::cosine();
    Rng rng(11);
    const auto z0t = random_vec(rng, 6);
    const auto pred = random_vec(rng, 6);
    const auto z0 = ddim_step_from(z0t, 1, pred, sched);
    for (int d = 0; d < 6; ++d) CHECK(z0[d] == z0t[d]);
}

TEST_CASE("reverse chain with linear epsilon model matches closed form") {
    // with eps(z, k) = a_k z each reverse step is the scalar map
    //   z_{k-1} = [sqrt(ab_{k-1}/ab_k) (1 - sqrt(1-ab_k) a_k) + sqrt(1-ab_{k-1}) a_k] z_k
    // so the chain collapses to a product of per-step factors
    const auto sched = NoiseSchedule::cosine();
    std::vector<double> a_k(sched.K + 1);
    for (int k = 1; k <= sched.K; ++k) a_k[k] = 0.3 + 0.02 * k;

    double factor = 1.0;
    for (int k = 1; k <= sched.K; ++k) {
        const double ab = sched.alpha_bar[k];
        const double abp = sched.alpha_bar[k - 1];
        factor *= std::sqrt(abp / ab) * (1.0 - std::sqrt(1.0 - ab) * a_k[k]) +
                  std::sqrt(1.0 - abp) * a_k[k];
    }

    std::vector<double> z = {1.7};
    const double z_start = z[0];
    for (int k = sched.K; k >= 1; --k) {
        const std::vector<double> pred = {a_k[k] * z[0]};
        z = ddim_step_from(estimate_clean(z, k, pred, sched), k, pred, sched);
    }
    CHECK(z[0] == doctest::Approx(factor * z_start).epsilon(1e-5));
}

TEST_CASE("denoiser starts at zero output and backward matches finite differences") {
    DenoiserConfig cfg;
    cfg.d_z = 6;
    cfg.d_c = 4;
    cfg.hidden = 16;
    cfg.blocks = 2;
    cfg.emb_dim = 8;
    auto p = init_denoiser(cfg, 5);

    Rng rng(21);
    const auto z = random_vec(rng, cfg.d_z);
    const auto c = random_vec(rng, cfg.d_c);
    const auto eps0 = denoiser_eps(p, z, 3, c);
    for (double v : eps0) CHECK(v == 0.0);

    // make the output head nontrivial before checking gradients
    for (double& w : p.ps.value) {
        if (w == 0.0) w = rng.normal() * 0.1;
    }
    const auto deps = random_vec(rng, cfg.d_z);

    DenoiserCache cache;
    denoiser_eps(p, z, 3, c, &cache);
    p.ps.zero_grad();
    denoiser_backward(p, cache, deps);

    int checked = 0;
    for (size_t trial = 0; trial < 40; ++trial) {
        const size_t wi = rng.next() % p.ps.value.size();
        const double h = 1e-6;
        const double keep = p.ps.value[wi];
        p.ps.value[wi] = keep + h;
        const auto up = denoiser_eps(p, z, 3, c);
        p.ps.value[wi] = keep - h;
        const auto dn = denoiser_eps(p, z, 3, c);
        p.ps.value[wi] = keep;
        double fd = 0.0;
        for (int d = 0; d < cfg.d_z; ++d) fd += deps[d] * (up[d] - dn[d]) / (2.0 * h);
        if (std::abs(fd) < 1e-8 && std::abs(p.ps.grad[wi]) < 1e-8) continue;
        CHECK(p.ps.grad[wi] == doctest::Approx(fd).epsilon(1e-4));
        ++checked;
    }
    CHECK(checked > 10);
}

TEST_CASE("step embedding separates steps and stays bounded") {
    const auto e1 = sinusoidal_embedding(1, 32);
    const auto e2 = sinusoidal_embedding(2, 32);
    CHECK(e1.size() == 32);
    double diff = 0.0;
    for (int i = 0; i < 32; ++i) {
        CHECK(std::abs(e1[i]) <= 1.0);
        diff += std::abs(e1[i] - e2[i]);
    }
    CHECK(diff > 0.1);
}

TEST_CASE("denoiser training starts at the analytic loss and improves") {
    Rng rng(41);
    const int n_scenes = 300;
    const int n_agents = 2;
    DenoiserTrainConfig cfg;
    cfg.net.d_z = 8;
    cfg.net.d_c = 4;
    cfg.net.hidden = 32;
    cfg.net.blocks = 2;
    cfg.net.emb_dim = 8;
    cfg.epochs = 12;
    cfg.seed = 17;

    // z0 is a fixed smooth function of c, so the regression target is exactly
    // learnable and the loss keeps descending instead of hitting a noise floor
    const auto mix = random_vec(rng, cfg.net.d_z * cfg.net.d_c);
    std::vector<LatentScene> latents(n_scenes);
    std::vector<CondLatent> conds(n_scenes);
    for (int i = 0; i < n_scenes; ++i) {
        for (int a = 0; a < n_agents; ++a) {
            latents[i].agent_ids.push_back(a + 1);
            latents[i].is_adv.push_back(a == 0);
            const auto c = random_vec(rng, cfg.net.d_c);
            std::vector<double> z0(cfg.net.d_z);
            for (int d = 0; d < cfg.net.d_z; ++d) {
                double acc = 0.0;
                for (int j = 0; j < cfg.net.d_c; ++j) acc += mix[d * cfg.net.d_c + j] * c[j];
                z0[d] = std::tanh(acc);
            }
            latents[i].z.push_back(std::move(z0));
            conds[i].c.push_back(c);
        }
        conds[i].agent_ids = latents[i].agent_ids;
        conds[i].is_adv = latents[i].is_adv;
    }

    const auto sched = NoiseSchedule::cosine();
    const auto res = train_denoiser(latents, conds, sched, cfg);
    REQUIRE(static_cast<int>(res.epoch_loss.size()) == cfg.epochs);

    const double expect_init = static_cast<double>(n_agents * cfg.net.d_z);
    CHECK(res.epoch_loss[0] == doctest::Approx(expect_init).epsilon(0.2));

    int violations = 0;
    for (int e = 1; e < 10; ++e) {
        if (res.epoch_loss[e] >= res.epoch_loss[e - 1]) ++violations;
    }
    CHECK(violations <= 1);
    CHECK(res.epoch_loss.back() < res.epoch_loss.front());

    const auto res2 = train_denoiser(latents, conds, sched, cfg);
    CHECK(res2.params.ps.value == res.params.ps.value);

    CHECK_THROWS_AS(train_denoiser({}, {}, sched, cfg), WorldError);
    auto broken = conds;
    broken[0].agent_ids[0] = 99;
    CHECK_THROWS_AS(train_denoiser(latents, broken, sched, cfg), WorldError);
}

TEST_CASE("denoiser blob round trip preserves predictions") {
    DenoiserConfig cfg;
    cfg.d_z = 8;
    cfg.d_c = 4;
    cfg.hidden = 16;
    cfg.blocks = 1;
    cfg.emb_dim = 8;
    auto p = init_denoiser(cfg, 19);
    Rng rng(23);
    for (double& w : p.ps.value) w += 0.05 * rng.normal();

    const auto dir = std::filesystem::temp_directory_path() / "advscene_diff_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "denoiser.bin").string();
    save_denoiser(p, path);
    const auto q = load_denoiser(path);
    CHECK(q.ps.value == p.ps.value);
    CHECK(q.cfg.hidden == cfg.hidden);

    const auto z = random_vec(rng, cfg.d_z);
    const auto c = random_vec(rng, cfg.d_c);
    CHECK(denoiser_eps(q, z, 5, c) == denoiser_eps(p, z, 5, c));

    // foreign schema is rejected
    const std::string other = (dir / "other.bin").string();
    save_blob(other, "codec.v1", "{}", {{"params", &p.ps.value}});
    CHECK_THROWS_AS(load_denoiser(other), WorldError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("zero guidance scale reproduces the unguided chain bitwise") {
    const auto sc = probe_scenario();
    const auto codec = init_codec(CodecConfig{}, 3);
    const auto cond = encode_prior(sc, codec);
    const auto dn = init_denoiser(DenoiserConfig{}, 4);
    const auto sched = NoiseSchedule::cosine();

    GuidedSampleConfig cfg;
    cfg.n_samples = 2;
    cfg.seed = 42;

    const auto plain = guided_sample(sc, cond, nullptr, codec, dn, sched, cfg);

    EndpointObjective obj({40.0, 0.0});
    cfg.lambda = 0.0;
    const auto zeroed = guided_sample(sc, cond, &obj, codec, dn, sched, cfg);

    REQUIRE(plain.samples.size() == zeroed.samples.size());
    for (size_t i = 0; i < plain.samples.size(); ++i) {
        CHECK(plain.samples[i].z == zeroed.samples[i].z);
        CHECK(zeroed.samples[i].k == 0);
    }
    // unguided run reports zero loss, the objective-bearing run evaluates it
    CHECK(plain.losses[0] == 0.0);
    CHECK(zeroed.losses[0] > 0.0);
}

TEST_CASE("gradient routing leaves undifferentiated agents untouched bitwise") {
    const auto sc = probe_scenario(15);
    REQUIRE(sc.non_ego_ids().size() >= 2);  // adversary plus at least one other
    const auto codec = init_codec(CodecConfig{}, 3);
    const auto cond = encode_prior(sc, codec);
    const auto dn = init_denoiser(DenoiserConfig{}, 4);
    const auto sched = NoiseSchedule::cosine();

    GuidedSampleConfig cfg;
    cfg.n_samples = 1;
    cfg.seed = 8;

    const auto plain = guided_sample(sc, cond, nullptr, codec, dn, sched, cfg);

    OthersOnlyObjective obj;
    cfg.lambda = 0.5;
    const auto guided = guided_sample(sc, cond, &obj, codec, dn, sched, cfg);

    bool some_agent_moved = false;
    for (size_t ai = 0; ai < cond.agent_ids.size(); ++ai) {
        if (cond.agent_ids[ai] == sc.adv_id) {
            CHECK(guided.samples[0].z[ai] == plain.samples[0].z[ai]);
        } else if (guided.samples[0].z[ai] != plain.samples[0].z[ai]) {
            some_agent_moved = true;
        }
    }
    CHECK(some_agent_moved);
}

TEST_CASE("stronger guidance pulls the adversary endpoint closer to the target") {
    const auto sc = probe_scenario(2);
    const auto codec = init_codec(CodecConfig{}, 3);
    const auto cond = encode_prior(sc, codec);
    const auto dn = init_denoiser(DenoiserConfig{}, 4);
    const auto sched = NoiseSchedule::cosine();

    const AgentState& adv0 = sc.adv().current();
    const Vec2 target{adv0.x + 12.0 * std::cos(adv0.heading) - 6.0 * std::sin(adv0.heading),
                      adv0.y + 12.0 * std::sin(adv0.heading) + 6.0 * std::cos(adv0.heading)};
    EndpointObjective obj(target);

    auto endpoint_dist = [&](double lambda) {
        GuidedSampleConfig cfg;
        cfg.n_samples = 1;
        cfg.seed = 5;
        cfg.lambda = lambda;
        const auto res = guided_sample(sc, cond, &obj, codec, dn, sched, cfg);
        return std::sqrt(res.losses[0]);
    };

    const double d0 = endpoint_dist(0.0);
    const double d1 = endpoint_dist(0.1);
    const double d2 = endpoint_dist(1.0);
    CHECK(d1 < d0);
    CHECK(d2 < d1);
}

TEST_CASE("failed candidates are isolated and an all-failed run raises") {
    struct ThrowSometimes : GuidanceObjective {
        int calls = 0;
        int fail_below = 0;
        double eval(const Scenario&, const DecodeOut&, TrajAdjoint&) override {
            if (calls++ < fail_below) throw WorldError("synthetic objective failure");
            return 1.0;
        }
    };

    const auto sc = probe_scenario();
    const auto codec = init_codec(CodecConfig{}, 3);
    const auto cond = encode_prior(sc, codec);
    const auto dn = init_denoiser(DenoiserConfig{}, 4);
    const auto sched = NoiseSchedule::cosine();

    GuidedSampleConfig cfg;
    cfg.n_samples = 3;
    cfg.seed = 1;

    // first candidate's first evaluation throws, the rest complete
    ThrowSometimes obj;
    obj.fail_below = 1;
    const auto res = guided_sample(sc, cond, &obj, codec, dn, sched, cfg);
    CHECK(res.samples.size() == 2);
    CHECK(res.failures.size() == 1);
    CHECK(res.sample_index == std::vector<int>{1, 2});

    ThrowSometimes all;
    all.fail_below = 1 << 20;
    CHECK_THROWS_AS(guided_sample(sc, cond, &all, codec, dn, sched, cfg), WorldError);
}

namespace {

/// Codec whose decoder ties feasibility to the sign of each agent's first
/// latent dim: z[0] >= 0.5 saturates the yaw command, z[0] <= -0.5 zeroes it.
CodecParams gated_codec() {
    CodecParams p = init_codec(CodecConfig{}, 3);
    for (const Linear& l : p.decoder.layers) {
        std::fill_n(p.ps.value.begin() + l.w_off, static_cast<size_t>(l.in) * l.out, 0.0);
        std::fill_n(p.ps.value.begin() + l.b_off, l.out, 0.0);
    }
    const Linear& l0 = p.decoder.layers[0];
    const Linear& l1 = p.decoder.layers[1];
    const Linear& l2 = p.decoder.layers[2];
    p.ps.value[l0.w_off] = 10.0;              // hidden0 = tanh(10 z[0])
    p.ps.value[l1.w_off] = 10.0;              // hidden0' = tanh(10 hidden0)
    p.ps.value[l2.w_off + l2.in] = 5.0;       // yaw row reads hidden0'
    p.ps.value[l2.b_off + 1] = 5.0;           // bias shifts the gate to {0, 10}
    return p;
}

/// Scenario slowed to a speed where a saturated yaw command is infeasible.
Scenario slow_scenario() {
    Scenario sc = probe_scenario();
    for (auto& a : sc.agents) {
        for (auto& st : a.past.states) st.speed = 2.0;
    }
    return sc;
}

LatentScene make_sample(const Scenario& sc, const CodecParams& p, double lead_dim) {
    const auto cond = encode_prior(sc, p);
    LatentScene z;
    z.agent_ids = cond.agent_ids;
    z.is_adv = cond.is_adv;
    for (size_t ai = 0; ai < z.agent_ids.size(); ++ai) {
        std::vector<double> row(p.cfg.d_z, 0.2);
        row[0] = lead_dim;
        z.z.push_back(std::move(row));
    }
    return z;
}

}  // namespace

TEST_CASE("candidate selection filters by feasibility then takes the argmin") {
    const auto sc = slow_scenario();
    const auto codec = gated_codec();

    const auto feasible = make_sample(sc, codec, -1.0);
    const auto infeasible = make_sample(sc, codec, 1.0);

    // the gate does what it claims before losses are scripted against it
    {
        const auto dec = decode(feasible, sc, codec);
        for (size_t ai = 0; ai < dec.futures.size(); ++ai) {
            REQUIRE(trajectory_feasible(dec.futures[ai], dec.actions[ai], codec.world));
        }
        const auto bad = decode(infeasible, sc, codec);
        REQUIRE_FALSE(trajectory_feasible(bad.futures[0], bad.actions[0], codec.world));
    }

    GuidedSampleResult res;
    res.samples = {feasible, feasible, feasible};
    res.losses = {3.0, 1.0, 2.0};
    res.sample_index = {0, 1, 2};
    const auto best = select_best(res, sc, codec);
    CHECK(best.index == 1);
    CHECK(best.feasible);
    CHECK(best.z.z == res.samples[1].z);

    GuidedSampleResult single;
    single.samples = {feasible};
    single.losses = {5.0};
    single.sample_index = {0};
    const auto only = select_best(single, sc, codec);
    CHECK(only.index == 0);
    CHECK(only.feasible);

    CHECK_THROWS_AS(select_best(GuidedSampleResult{}, sc, codec), WorldError);
}

TEST_CASE("infeasible low-loss candidates are passed over") {
    const auto sc = slow_scenario();
    const auto codec = gated_codec();

    const auto feasible = make_sample(sc, codec, -1.0);
    const auto infeasible = make_sample(sc, codec, 1.0);

    GuidedSampleResult mixed;
    mixed.samples = {infeasible, feasible};
    mixed.losses = {0.5, 2.0};  // infeasible one has the lower loss
    mixed.sample_index = {0, 1};
    const auto best = select_best(mixed, sc, codec);
    CHECK(best.index == 1);
    CHECK(best.feasible);

    // with every candidate infeasible the global argmin wins, flagged
    GuidedSampleResult none;
    none.samples = {infeasible, infeasible};
    none.losses = {2.0, 0.5};
    none.sample_index = {0, 1};
    const auto fallback = select_best(none, sc, codec);
    CHECK(fallback.index == 1);
    CHECK_FALSE(fallback.feasible);
}

TEST_CASE("curvature feasibility bound") {
    WorldParams wp;
    Trajectory traj;
    std::vector<Action> acts;
    AgentState st{0.0, 0.0, 0.0, 5.0};
    traj.states.push_back(st);
    for (int t = 0; t < 3; ++t) {
        acts.push_back({0.0, 0.0});
        st = bicycle_step(st, acts.back(), 0.5, wp);
        traj.states.push_back(st);
    }
    CHECK(trajectory_feasible(traj, acts, wp));

    // |yaw| <= 0.3 * max(v, 1): at 5 m/s the bound is 1.5, over the cap of 1.0
    acts[1] = {0.0, 0.9};
    CHECK(trajectory_feasible(traj, acts, wp));

    // at 2 m/s the bound is 0.6
    Trajectory slow = traj;
    for (auto& s : slow.states) s.speed = 2.0;
    CHECK_FALSE(trajectory_feasible(slow, acts, wp));
    acts[1] = {0.0, 0.5};
    CHECK(trajectory_feasible(slow, acts, wp));

    // action bound violations are infeasible regardless of curvature
    acts[2] = {wp.accel_max + 1.0, 0.0};
    CHECK_FALSE(trajectory_feasible(slow, acts, wp));

    acts.pop_back();
    CHECK_THROWS_AS(trajectory_feasible(slow, acts, wp), WorldError);
}
