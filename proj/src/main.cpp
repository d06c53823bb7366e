#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "advscene/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"latent-diffusion adversarial scenario pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> out_dir;
    app.add_option("--config", config_path, "config.v1 JSON file");
    app.add_option("--seed", seed, "override the config seed");
    app.add_option("--out", out_dir, "override the output directory");

    auto* synth = app.add_subcommand("synth", "write procedural scenarios and a manifest");
    std::optional<int> count;
    std::optional<std::string> tmpl;
    synth->add_option("--count", count, "number of scenarios");
    synth->add_option("--template", tmpl, "straight | curve | intersection | merge");

    auto* train = app.add_subcommand("train", "fit a model stage and emit its loss curve");
    std::string stage;
    bool resume = false;
    train->add_option("stage", stage, "codec | diffusion")->required();
    train->add_flag("--resume", resume, "keep an existing blob instead of retraining");

    auto* guide = app.add_subcommand("guide", "author a guidance program");
    std::string query, dsl_path;
    guide->add_option("--query", query, "natural-language request");
    guide->add_option("--dsl", dsl_path, "guidance source file, bypasses the provider");

    auto* run = app.add_subcommand("run", "closed-loop batch plus metrics report");
    std::string run_dsl;
    int jobs = 1;
    bool sweep = false;
    run->add_option("--dsl", run_dsl, "guidance source file; omit for unguided sampling");
    run->add_option("--jobs", jobs, "worker threads");
    run->add_flag("--sweep", sweep, "sample-count / step-count grid, emits sweep.csv");

    auto* check = app.add_subcommand("dsl-check", "diagnose a guidance source file");
    std::string check_path;
    check->add_option("file", check_path, "guidance source file")->required();

    auto* report = app.add_subcommand("report", "recompute metrics from saved rollouts");
    std::string batch_dir;
    report->add_option("--batch", batch_dir, "rollout directory (default <out>/rollouts)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        advscene::RunConfig cfg =
            config_path.empty() ? advscene::RunConfig{} : advscene::load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (out_dir) cfg.out_dir = *out_dir;
        if (count) cfg.synth_count = *count;
        if (tmpl) cfg.tmpl = advscene::parse_template(*tmpl);
        cfg.sync();
        cfg.check();

        if (*synth) return advscene::cmd_synth(cfg);
        if (*train) return advscene::cmd_train(cfg, stage, resume);
        if (*guide) return advscene::cmd_guide(cfg, query, dsl_path);
        if (*run) return advscene::cmd_run(cfg, run_dsl, jobs, sweep);
        if (*check) return advscene::cmd_dsl_check(check_path);
        if (*report) return advscene::cmd_report(cfg, batch_dir);
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
