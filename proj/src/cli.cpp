#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "advscene/cli.hpp"
#include "advscene/metrics.hpp"

#include "json.hpp"

namespace advscene {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string slurp_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WorldError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw WorldError("cannot open " + path.string());
    out << body;
    out.flush();
    if (!out) throw WorldError("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw WorldError("cannot create directory " + dir.string());
    }
}

std::string fnv_hex(const std::string& text) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

void expect_keys(const json& j, const std::string& where,
                 std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) {
            if (it.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw WorldError("config: unknown key '" + it.key() + "' in " + where);
        }
    }
}

template <typename T>
void read_to(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

std::vector<Scenario> load_scenario_dir(const std::string& dir) {
    const fs::path man = fs::path(dir) / "manifest.json";
    if (!fs::exists(man)) {
        throw WorldError("scenario manifest not found: " + man.string());
    }
    const json j = json::parse(slurp_file(man.string()));
    if (j.at("schema").get<std::string>() != "synth.v1") {
        throw WorldError("foreign schema in " + man.string());
    }
    std::vector<Scenario> out;
    for (const json& f : j.at("files")) {
        out.push_back(load_scenario((fs::path(dir) / f.get<std::string>()).string()));
    }
    if (out.empty()) throw WorldError("empty scenario set in " + dir);
    return out;
}

/// One future per non-ego agent in scenario order, from the synthesis
/// traffic policy; this is the ground truth both training stages share.
std::vector<std::vector<Trajectory>> non_ego_futures(const std::vector<Scenario>& scens) {
    std::vector<std::vector<Trajectory>> futures;
    futures.reserve(scens.size());
    for (const Scenario& sc : scens) {
        const auto all = continue_with_traffic(sc, sc.horizon);
        std::vector<Trajectory> non_ego;
        for (size_t i = 0; i < sc.agents.size(); ++i) {
            if (sc.agents[i].id != sc.ego_id) non_ego.push_back(all[i]);
        }
        futures.push_back(std::move(non_ego));
    }
    return futures;
}

std::string loss_csv(const std::string& stage, const std::string& hash, uint64_t seed,
                     const std::vector<double>& loss) {
    std::string s =
        "# loss.v1 stage=" + stage + " config_hash=" + hash + " seed=" + std::to_string(seed) + "\n";
    s += "epoch,loss\n";
    char row[64];
    for (size_t i = 0; i < loss.size(); ++i) {
        std::snprintf(row, sizeof row, "%zu,%.17g\n", i, loss[i]);
        s += row;
    }
    return s;
}

}  // namespace

void RunConfig::sync() {
    codec.t_hist = synth.t_hist;
    codec.horizon = synth.horizon;
    codec_train.codec = codec;
    codec_train.seed = seed;
    denoiser.d_z = codec.d_z;
    denoiser.d_c = codec.d_c;
    denoiser_train.net = denoiser;
    denoiser_train.seed = seed;
    sample.seed = seed;
}

void RunConfig::check() const {
    if (synth_count < 1) throw WorldError("config: synth count must be >= 1");
    if (synth.t_hist < 1 || synth.horizon < 1) {
        throw WorldError("config: history and horizon must be >= 1");
    }
    if (synth.tick <= 0.0 || synth.cell_m <= 0.0) {
        throw WorldError("config: tick and cell size must be positive");
    }
    if (synth.world.accel_max <= 0.0 || synth.world.yaw_rate_max <= 0.0 ||
        synth.world.v_max <= 0.0 || synth.world.d_buffer < 0.0) {
        throw WorldError("config: world bounds out of range");
    }
    if (schedule_steps < 1) throw WorldError("config: schedule steps must be >= 1");
    if (schedule_s <= 0.0) throw WorldError("config: schedule offset must be positive");
    if (codec.d_z < 1 || codec.d_c < 1 || codec.hidden < 1 || codec.k_neighbors < 1) {
        throw WorldError("config: codec dimensions must be >= 1");
    }
    if (codec_train.epochs < 1 || codec_train.batch < 1 || codec_train.lr <= 0.0) {
        throw WorldError("config: codec training params out of range");
    }
    if (codec_train.beta_kl < 0.0 || codec_train.prior_match < 0.0) {
        throw WorldError("config: codec loss weights must be >= 0");
    }
    if (denoiser.hidden < 1 || denoiser.blocks < 1 || denoiser.emb_dim < 1) {
        throw WorldError("config: denoiser dimensions must be >= 1");
    }
    if (denoiser_train.epochs < 1 || denoiser_train.batch < 1 || denoiser_train.lr <= 0.0) {
        throw WorldError("config: denoiser training params out of range");
    }
    if (sample.lambda < 0.0 || sample.grad_clip <= 0.0 || sample.n_samples < 1 ||
        sample.iterations < 1) {
        throw WorldError("config: sampling params out of range");
    }
    planner.check();
    if (sim_steps < 1) throw WorldError("config: sim steps must be >= 1");
    if (provider.temperature < 0.0 || provider.timeout_s <= 0.0) {
        throw WorldError("config: provider params out of range");
    }
    const AdvLevel order[3] = {AdvLevel::Weak, AdvLevel::Medium, AdvLevel::Strong};
    for (int i = 0; i < 3; ++i) {
        const WeightRange want = level_weight_range(order[i]);
        if (levels[i].lo != want.lo || levels[i].hi != want.hi) {
            throw WorldError("config: level weight table disagrees with the guidance language for '" +
                             level_name(order[i]) + "'");
        }
    }
    if (codec.t_hist != synth.t_hist || codec.horizon != synth.horizon ||
        denoiser.d_z != codec.d_z || denoiser.d_c != codec.d_c ||
        codec_train.codec.d_z != codec.d_z || codec_train.codec.hidden != codec.hidden ||
        codec_train.codec.t_hist != codec.t_hist || codec_train.codec.horizon != codec.horizon ||
        denoiser_train.net.hidden != denoiser.hidden ||
        denoiser_train.net.blocks != denoiser.blocks ||
        codec_train.seed != seed || denoiser_train.seed != seed || sample.seed != seed) {
        throw WorldError("config: mirrored fields out of sync; call sync()");
    }
}

std::string config_to_json_text(const RunConfig& cfg) {
    const json j{
        {"schema", "config.v1"},
        {"seed", cfg.seed},
        {"paths",
         {{"codec", cfg.codec_path},
          {"denoiser", cfg.denoiser_path},
          {"scenarios", cfg.scenarios_dir},
          {"out", cfg.out_dir}}},
        {"synth",
         {{"template", template_name(cfg.tmpl)},
          {"count", cfg.synth_count},
          {"t_hist", cfg.synth.t_hist},
          {"horizon", cfg.synth.horizon},
          {"tick_s", cfg.synth.tick},
          {"cell_m", cfg.synth.cell_m}}},
        {"world",
         {{"accel_max_mps2", cfg.synth.world.accel_max},
          {"yaw_rate_max_radps", cfg.synth.world.yaw_rate_max},
          {"v_max_mps", cfg.synth.world.v_max},
          {"d_buffer_m", cfg.synth.world.d_buffer}}},
        {"schedule", {{"steps", cfg.schedule_steps}, {"s_offset", cfg.schedule_s}}},
        {"codec",
         {{"d_z", cfg.codec.d_z},
          {"d_c", cfg.codec.d_c},
          {"hidden", cfg.codec.hidden},
          {"k_neighbors", cfg.codec.k_neighbors}}},
        {"codec_train",
         {{"epochs", cfg.codec_train.epochs},
          {"batch", cfg.codec_train.batch},
          {"lr", cfg.codec_train.lr},
          {"beta_kl", cfg.codec_train.beta_kl},
          {"prior_match", cfg.codec_train.prior_match}}},
        {"denoiser",
         {{"hidden", cfg.denoiser.hidden},
          {"blocks", cfg.denoiser.blocks},
          {"emb_dim", cfg.denoiser.emb_dim}}},
        {"denoiser_train",
         {{"epochs", cfg.denoiser_train.epochs},
          {"batch", cfg.denoiser_train.batch},
          {"lr", cfg.denoiser_train.lr}}},
        {"sample",
         {{"lambda", cfg.sample.lambda},
          {"grad_clip", cfg.sample.grad_clip},
          {"n_samples", cfg.sample.n_samples},
          {"iterations", cfg.sample.iterations},
          {"sigma_on_mu", cfg.sample.sigma_on_mu}}},
        {"planner",
         {{"desired_speed_mps", cfg.planner.desired_speed},
          {"time_headway_s", cfg.planner.time_headway},
          {"min_gap_m", cfg.planner.min_gap},
          {"comfort_decel_mps2", cfg.planner.comfort_decel},
          {"accel_gain_mps2", cfg.planner.accel_gain},
          {"replan_period", cfg.planner.replan_period},
          {"on_graph_lateral_m", cfg.planner.on_graph_lateral},
          {"lookahead_min_m", cfg.planner.lookahead_min},
          {"lookahead_gain_s", cfg.planner.lookahead_gain}}},
        {"sim", {{"steps", cfg.sim_steps}}},
        {"provider",
         {{"mode", cfg.provider_mock ? "mock" : "http"},
          {"endpoint", cfg.provider.endpoint},
          {"path", cfg.provider.path},
          {"model", cfg.provider.model},
          {"temperature", cfg.provider.temperature},
          {"timeout_s", cfg.provider.timeout_s},
          {"key_env", cfg.provider.key_env}}},
        {"levels",
         {{"weak", {cfg.levels[0].lo, cfg.levels[0].hi}},
          {"medium", {cfg.levels[1].lo, cfg.levels[1].hi}},
          {"strong", {cfg.levels[2].lo, cfg.levels[2].hi}}}},
    };
    return j.dump(2) + "\n";
}

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw WorldError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw WorldError("config: top level must be an object");
    try {
        expect_keys(j, "config",
                    {"schema", "seed", "paths", "synth", "world", "schedule", "codec",
                     "codec_train", "denoiser", "denoiser_train", "sample", "planner", "sim",
                     "provider", "levels"});
        if (!j.contains("schema") || j.at("schema").get<std::string>() != "config.v1") {
            throw WorldError("config: schema must be 'config.v1'");
        }
        RunConfig cfg;
        read_to(j, "seed", cfg.seed);
        if (j.contains("paths")) {
            const json& p = j.at("paths");
            expect_keys(p, "paths", {"codec", "denoiser", "scenarios", "out"});
            read_to(p, "codec", cfg.codec_path);
            read_to(p, "denoiser", cfg.denoiser_path);
            read_to(p, "scenarios", cfg.scenarios_dir);
            read_to(p, "out", cfg.out_dir);
        }
        if (j.contains("synth")) {
            const json& s = j.at("synth");
            expect_keys(s, "synth", {"template", "count", "t_hist", "horizon", "tick_s", "cell_m"});
            if (s.contains("template")) cfg.tmpl = parse_template(s.at("template").get<std::string>());
            read_to(s, "count", cfg.synth_count);
            read_to(s, "t_hist", cfg.synth.t_hist);
            read_to(s, "horizon", cfg.synth.horizon);
            read_to(s, "tick_s", cfg.synth.tick);
            read_to(s, "cell_m", cfg.synth.cell_m);
        }
        if (j.contains("world")) {
            const json& w = j.at("world");
            expect_keys(w, "world",
                        {"accel_max_mps2", "yaw_rate_max_radps", "v_max_mps", "d_buffer_m"});
            read_to(w, "accel_max_mps2", cfg.synth.world.accel_max);
            read_to(w, "yaw_rate_max_radps", cfg.synth.world.yaw_rate_max);
            read_to(w, "v_max_mps", cfg.synth.world.v_max);
            read_to(w, "d_buffer_m", cfg.synth.world.d_buffer);
        }
        if (j.contains("schedule")) {
            const json& s = j.at("schedule");
            expect_keys(s, "schedule", {"steps", "s_offset"});
            read_to(s, "steps", cfg.schedule_steps);
            read_to(s, "s_offset", cfg.schedule_s);
        }
        if (j.contains("codec")) {
            const json& c = j.at("codec");
            expect_keys(c, "codec", {"d_z", "d_c", "hidden", "k_neighbors"});
            read_to(c, "d_z", cfg.codec.d_z);
            read_to(c, "d_c", cfg.codec.d_c);
            read_to(c, "hidden", cfg.codec.hidden);
            read_to(c, "k_neighbors", cfg.codec.k_neighbors);
        }
        if (j.contains("codec_train")) {
            const json& c = j.at("codec_train");
            expect_keys(c, "codec_train", {"epochs", "batch", "lr", "beta_kl", "prior_match"});
            read_to(c, "epochs", cfg.codec_train.epochs);
            read_to(c, "batch", cfg.codec_train.batch);
            read_to(c, "lr", cfg.codec_train.lr);
            read_to(c, "beta_kl", cfg.codec_train.beta_kl);
            read_to(c, "prior_match", cfg.codec_train.prior_match);
        }
        if (j.contains("denoiser")) {
            const json& d = j.at("denoiser");
            expect_keys(d, "denoiser", {"hidden", "blocks", "emb_dim"});
            read_to(d, "hidden", cfg.denoiser.hidden);
            read_to(d, "blocks", cfg.denoiser.blocks);
            read_to(d, "emb_dim", cfg.denoiser.emb_dim);
        }
        if (j.contains("denoiser_train")) {
            const json& d = j.at("denoiser_train");
            expect_keys(d, "denoiser_train", {"epochs", "batch", "lr"});
            read_to(d, "epochs", cfg.denoiser_train.epochs);
            read_to(d, "batch", cfg.denoiser_train.batch);
            read_to(d, "lr", cfg.denoiser_train.lr);
        }
        if (j.contains("sample")) {
            const json& s = j.at("sample");
            expect_keys(s, "sample", {"lambda", "grad_clip", "n_samples", "iterations", "sigma_on_mu"});
            read_to(s, "lambda", cfg.sample.lambda);
            read_to(s, "grad_clip", cfg.sample.grad_clip);
            read_to(s, "n_samples", cfg.sample.n_samples);
            read_to(s, "iterations", cfg.sample.iterations);
            read_to(s, "sigma_on_mu", cfg.sample.sigma_on_mu);
        }
        if (j.contains("planner")) {
            const json& p = j.at("planner");
            expect_keys(p, "planner",
                        {"desired_speed_mps", "time_headway_s", "min_gap_m", "comfort_decel_mps2",
                         "accel_gain_mps2", "replan_period", "on_graph_lateral_m",
                         "lookahead_min_m", "lookahead_gain_s"});
            read_to(p, "desired_speed_mps", cfg.planner.desired_speed);
            read_to(p, "time_headway_s", cfg.planner.time_headway);
            read_to(p, "min_gap_m", cfg.planner.min_gap);
            read_to(p, "comfort_decel_mps2", cfg.planner.comfort_decel);
            read_to(p, "accel_gain_mps2", cfg.planner.accel_gain);
            read_to(p, "replan_period", cfg.planner.replan_period);
            read_to(p, "on_graph_lateral_m", cfg.planner.on_graph_lateral);
            read_to(p, "lookahead_min_m", cfg.planner.lookahead_min);
            read_to(p, "lookahead_gain_s", cfg.planner.lookahead_gain);
        }
        if (j.contains("sim")) {
            const json& s = j.at("sim");
            expect_keys(s, "sim", {"steps"});
            read_to(s, "steps", cfg.sim_steps);
        }
        if (j.contains("provider")) {
            const json& p = j.at("provider");
            expect_keys(p, "provider",
                        {"mode", "endpoint", "path", "model", "temperature", "timeout_s", "key_env"});
            if (p.contains("mode")) {
                const std::string mode = p.at("mode").get<std::string>();
                if (mode == "mock") {
                    cfg.provider_mock = true;
                } else if (mode == "http") {
                    cfg.provider_mock = false;
                } else {
                    throw WorldError("config: provider mode must be 'mock' or 'http'");
                }
            }
            read_to(p, "endpoint", cfg.provider.endpoint);
            read_to(p, "path", cfg.provider.path);
            read_to(p, "model", cfg.provider.model);
            read_to(p, "temperature", cfg.provider.temperature);
            read_to(p, "timeout_s", cfg.provider.timeout_s);
            read_to(p, "key_env", cfg.provider.key_env);
        }
        if (j.contains("levels")) {
            const json& L = j.at("levels");
            expect_keys(L, "levels", {"weak", "medium", "strong"});
            const char* names[3] = {"weak", "medium", "strong"};
            for (int i = 0; i < 3; ++i) {
                if (!L.contains(names[i])) continue;
                const json& a = L.at(names[i]);
                if (!a.is_array() || a.size() != 2) {
                    throw WorldError("config: levels." + std::string(names[i]) + " must be [lo, hi]");
                }
                cfg.levels[i].lo = a[0].get<double>();
                cfg.levels[i].hi = a[1].get<double>();
            }
        }
        cfg.sync();
        cfg.check();
        return cfg;
    } catch (const json::exception& e) {
        throw WorldError(std::string("config: ") + e.what());
    }
}

RunConfig load_config(const std::string& path) { return parse_config(slurp_file(path)); }

std::string config_hash(const RunConfig& cfg) { return fnv_hex(config_to_json_text(cfg)); }

int cmd_synth(const RunConfig& cfg) {
    try {
        const auto scens = synth_scenarios(cfg.seed, cfg.synth_count, cfg.tmpl, cfg.synth);
        const fs::path dir(cfg.scenarios_dir);
        ensure_dir(dir);
        json files = json::array();
        for (size_t i = 0; i < scens.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "scenario_%03zu.json", i);
            save_scenario(scens[i], (dir / name).string());
            files.push_back(name);
        }
        const json man{{"schema", "synth.v1"},     {"config_hash", config_hash(cfg)},
                       {"seed", cfg.seed},         {"template", template_name(cfg.tmpl)},
                       {"count", cfg.synth_count}, {"files", files}};
        write_text(dir / "manifest.json", man.dump(2) + "\n");
        std::cout << "synth: wrote " << scens.size() << " scenarios to " << dir.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "synth: " << e.what() << "\n";
        return 2;
    }
}

int cmd_train(const RunConfig& cfg, const std::string& stage, bool resume) {
    if (stage != "codec" && stage != "diffusion") {
        std::cerr << "train: stage must be 'codec' or 'diffusion', got '" << stage << "'\n";
        return 1;
    }
    try {
        const std::string blob_path = stage == "codec" ? cfg.codec_path : cfg.denoiser_path;
        if (resume && fs::exists(blob_path)) {
            if (stage == "codec") {
                (void)load_codec(blob_path);
            } else {
                (void)load_denoiser(blob_path);
            }
            std::cout << "train: " << stage << " blob " << blob_path
                      << " already complete (hash " << fnv_hex(slurp_file(blob_path)) << ")\n";
            return 0;
        }
        const auto scens = load_scenario_dir(cfg.scenarios_dir);
        const auto futures = non_ego_futures(scens);
        const std::string hash = config_hash(cfg);
        ensure_dir(cfg.out_dir);
        if (const fs::path parent = fs::path(blob_path).parent_path(); !parent.empty()) {
            ensure_dir(parent);
        }
        std::vector<double> loss;
        if (stage == "codec") {
            auto res = train_codec(scens, futures, cfg.codec_train);
            save_codec(res.params, blob_path);
            loss = std::move(res.epoch_loss);
        } else {
            const CodecParams codec = load_codec(cfg.codec_path);
            std::vector<LatentScene> latents;
            std::vector<CondLatent> conds;
            for (size_t i = 0; i < scens.size(); ++i) {
                const auto post = encode_posterior(scens[i], futures[i], codec);
                LatentScene z;
                z.agent_ids = post.agent_ids;
                z.z = post.mean;
                z.is_adv = post.z.is_adv;
                latents.push_back(std::move(z));
                conds.push_back(encode_prior(scens[i], codec));
            }
            const NoiseSchedule sched = NoiseSchedule::cosine(cfg.schedule_steps, cfg.schedule_s);
            auto res = train_denoiser(latents, conds, sched, cfg.denoiser_train);
            save_denoiser(res.params, blob_path);
            loss = std::move(res.epoch_loss);
        }
        const char* csv_name = stage == "codec" ? "codec_loss.csv" : "denoiser_loss.csv";
        write_text(fs::path(cfg.out_dir) / csv_name, loss_csv(stage, hash, cfg.seed, loss));
        std::cout << "train: " << stage << " -> " << blob_path << " (" << loss.size()
                  << " epochs, final loss " << loss.back() << ")\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "train: " << e.what() << "\n";
        return 2;
    }
}

int cmd_guide(const RunConfig& cfg, const std::string& query, const std::string& dsl_path) {
    if (query.empty() == dsl_path.empty()) {
        std::cerr << "guide: pass exactly one of --query or --dsl\n";
        return 1;
    }
    try {
        const fs::path out(cfg.out_dir);
        ensure_dir(out);
        ReasoningTrace trace;
        std::optional<GuidanceProgram> program;
        if (!dsl_path.empty()) {
            // direct DSL load, no provider involved
            const std::string src = slurp_file(dsl_path);
            trace.stage = "done";
            trace.attempts = 1;
            trace.attempt_sources.push_back(src);
            try {
                program = compile(src);
            } catch (const DslError& e) {
                trace.diagnostics.push_back(e.diag);
                save_trace((out / "trace.json").string(), trace);
                std::cerr << "guide: " << e.what() << "\n";
                return 2;
            }
            trace.ok = true;
            trace.level = program->level;
            trace.weights = program->weights;
            trace.source = src;
            save_trace((out / "trace.json").string(), trace);
        } else {
            MockProvider mock;
            HttpProvider http(cfg.provider);
            LlmProvider& provider =
                cfg.provider_mock ? static_cast<LlmProvider&>(mock) : static_cast<LlmProvider&>(http);
            const GuidanceFixture fix = make_guidance_fixture(cfg.seed);
            GuidanceResult res = query_to_guidance(query, default_bundle(), provider, fix.ctx());
            trace = std::move(res.trace);
            program = std::move(res.program);
            save_trace((out / "trace.json").string(), trace);
            if (!program) {
                std::cerr << "guide: pipeline gave up at stage '" << trace.stage << "'\n";
                for (const Diagnostic& d : trace.diagnostics) {
                    std::cerr << "guide: " << d.str() << "\n";
                }
                return 2;
            }
        }
        write_text(out / "guidance.gdl", print_program(*program));
        std::cout << "guide: level " << level_name(program->level) << ", wrote "
                  << (out / "guidance.gdl").string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "guide: " << e.what() << "\n";
        return 2;
    }
}

int cmd_run(const RunConfig& cfg, const std::string& dsl_path, int jobs, bool sweep) {
    if (jobs < 1) {
        std::cerr << "run: --jobs must be >= 1\n";
        return 1;
    }
    try {
        const auto scens = load_scenario_dir(cfg.scenarios_dir);
        const CodecParams codec = load_codec(cfg.codec_path);
        const DenoiserParams dn = load_denoiser(cfg.denoiser_path);
        std::optional<GuidanceProgram> program;
        if (!dsl_path.empty()) {
            try {
                program = compile(slurp_file(dsl_path));
            } catch (const DslError& e) {
                std::cerr << "run: " << e.what() << "\n";
                return 2;
            }
        }
        const std::string hash = config_hash(cfg);
        const fs::path out(cfg.out_dir);
        ensure_dir(out);
        write_text(out / "config_echo.json", config_to_json_text(cfg));

        SimConfig scfg;
        scfg.sim_steps = cfg.sim_steps;
        scfg.sample = cfg.sample;
        scfg.planner = cfg.planner;
        scfg.seed = cfg.seed;

        if (!sweep) {
            const NoiseSchedule sched = NoiseSchedule::cosine(cfg.schedule_steps, cfg.schedule_s);
            const SimModels models{&codec, &dn, &sched};
            const BatchResult batch =
                run_batch(scens, models, program ? &*program : nullptr, scfg, jobs);
            save_batch(batch, (out / "rollouts").string(), hash);
            const MetricSet m = compute_metrics(batch.records);
            emit_report(m, batch.records, (out / "report").string(), hash);
            std::cout << "run: " << batch.records.size() << " scenarios, adv-ego coll "
                      << m.adv_ego_coll_pct << "%, adv offroad " << m.adv_offroad_pct
                      << "%, mean sim time " << m.sim_time_mean_s << " s\n";
            return 0;
        }

        const int sample_grid[] = {1, 5, 10};
        const int step_grid[] = {10, 20, 50};
        std::string csv =
            "# sweep.v1 config_hash=" + hash + " seed=" + std::to_string(cfg.seed) + "\n";
        csv += "n_samples,diffusion_steps,adv_ego_coll_pct,adv_offroad_pct,wall_time_s\n";
        for (int s : sample_grid) {
            for (int k : step_grid) {
                SimConfig cell = scfg;
                cell.sample.n_samples = s;
                const NoiseSchedule sched = NoiseSchedule::cosine(k, cfg.schedule_s);
                const SimModels models{&codec, &dn, &sched};
                const BatchResult batch =
                    run_batch(scens, models, program ? &*program : nullptr, cell, jobs);
                const MetricSet m = compute_metrics(batch.records);
                char row[160];
                std::snprintf(row, sizeof row, "%d,%d,%.2f,%.2f,%.6f\n", s, k,
                              m.adv_ego_coll_pct, m.adv_offroad_pct, batch.wall_time_s);
                csv += row;
                std::cout << "run: sweep cell n_samples=" << s << " steps=" << k << " done\n";
            }
        }
        write_text(out / "sweep.csv", csv);
        std::cout << "run: wrote " << (out / "sweep.csv").string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "run: " << e.what() << "\n";
        return 2;
    }
}

int cmd_dsl_check(const std::string& path) {
    try {
        const std::string src = slurp_file(path);
        GuidanceProgram program;
        try {
            program = compile(src);
        } catch (const DslError& e) {
            std::cerr << "dsl-check: " << e.what() << "\n";
            return 2;
        }
        std::cout << "parse ok\ntypecheck ok\n";
        const GuidanceFixture fix = make_guidance_fixture(0);
        const EvalContext ctx = fix.ctx();
        double value = 0.0;
        try {
            value = evaluate(program, ctx, nullptr);
        } catch (const DslError& e) {
            std::cerr << "dsl-check: " << e.what() << "\n";
            return 2;
        }
        std::cout << "eval ok (loss " << value << ")\n";
        if (const auto bad = check_gradients(program, ctx)) {
            std::cerr << "dsl-check: " << bad->str() << "\n";
            return 2;
        }
        std::cout << "grad ok\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "dsl-check: " << e.what() << "\n";
        return 2;
    }
}

int cmd_report(const RunConfig& cfg, const std::string& batch_dir) {
    try {
        const fs::path dir =
            batch_dir.empty() ? fs::path(cfg.out_dir) / "rollouts" : fs::path(batch_dir);
        const fs::path man = dir / "manifest.json";
        const json j = json::parse(slurp_file(man.string()));
        if (j.at("schema").get<std::string>() != "batch.v1") {
            throw WorldError("report: foreign schema in " + man.string());
        }
        const std::string hash = j.at("config_hash").get<std::string>();
        std::vector<RolloutRecord> records;
        for (const json& f : j.at("records")) {
            records.push_back(load_rollout((dir / f.get<std::string>()).string()));
        }
        const MetricSet m = compute_metrics(records);
        const fs::path report_dir = fs::path(cfg.out_dir) / "report";
        const auto files = emit_report(m, records, report_dir.string(), hash);
        std::cout << "report: " << records.size() << " rollouts, adv-ego coll "
                  << m.adv_ego_coll_pct << "%, wrote " << files.size() << " files to "
                  << report_dir.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "report: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace advscene
