#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "advscene/metrics.hpp"
#include "advscene/sim.hpp"

using namespace advscene;
namespace fs = std::filesystem;

namespace {

RolloutRecord make_record(uint64_t seed, int steps, std::vector<int> ids, int ego, int adv) {
    RolloutRecord r;
    r.seed = seed;
    r.ego_id = ego;
    r.adv_id = adv;
    r.agent_ids = ids;
    r.footprints.assign(ids.size(), VehicleFootprint{});
    r.steps = steps;
    for (size_t i = 0; i < ids.size(); ++i) {
        Trajectory t;
        t.tick = 0.5;
        for (int k = 0; k <= steps; ++k) {
            AgentState st;
            st.x = 30.0 * static_cast<double>(i) + 2.0 * static_cast<double>(k);
            st.y = 3.5 * static_cast<double>(i);
            st.speed = 4.0;
            t.states.push_back(st);
        }
        r.executed.push_back(std::move(t));
        r.actions.emplace_back(steps);
    }
    r.termination = Termination::Horizon;
    r.sim_time_s = 0.01;
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

long long csv_count_sum(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    REQUIRE(std::getline(in, line));
    REQUIRE(line == "bin_lo,bin_hi,count");
    long long total = 0;
    int rows = 0;
    while (std::getline(in, line)) {
        const size_t comma = line.rfind(',');
        REQUIRE(comma != std::string::npos);
        total += std::stoll(line.substr(comma + 1));
        ++rows;
    }
    CHECK(rows == 20);
    return total;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("collision and offroad rates count scenarios, not events") {
    std::vector<RolloutRecord> records;
    for (int i = 0; i < 10; ++i) records.push_back(make_record(i, 2, {0, 1, 2}, 0, 2));
    records[0].collisions.push_back({0, 2, 1});
    records[0].collisions.push_back({0, 2, 2});  // second hit in the same pair counts once
    for (int i = 1; i < 4; ++i) records[i].collisions.push_back({0, 2, 1});
    records[4].collisions.push_back({1, 2, 2});
    records[5].collisions.push_back({0, 1, 1});
    records[6].collisions.push_back({0, 1, 1});
    records[7].offroad.push_back({2, 1});
    records[7].offroad.push_back({1, 2});

    const MetricSet m = compute_metrics(records);
    CHECK(m.adv_ego_coll_pct == 40.0);
    CHECK(m.adv_other_coll_pct == 10.0);
    CHECK(m.other_ego_coll_pct == 20.0);
    CHECK(m.other_other_coll_pct == 0.0);
    CHECK(m.adv_offroad_pct == 10.0);
    CHECK(m.other_offroad_pct == 10.0);
    CHECK(m.counts.records == 10);
    CHECK(m.counts.adv_records == 10);
    CHECK(m.counts.other_agent_scenarios == 10);
    CHECK(m.counts.ttc_samples == 30);
    CHECK(m.counts.accel_samples == 20);
    CHECK_NOTHROW(m.check());

    SUBCASE("no offroad events anywhere gives zero rates") {
        std::vector<RolloutRecord> clean;
        for (int i = 0; i < 3; ++i) clean.push_back(make_record(i, 1, {0, 1, 2}, 0, 1));
        const MetricSet c = compute_metrics(clean);
        CHECK(c.adv_offroad_pct == 0.0);
        CHECK(c.other_offroad_pct == 0.0);
    }
}

TEST_CASE("time to collision follows the capped closing-disc model") {
    const VehicleFootprint fp;
    AgentState a;

    SUBCASE("stationary vehicles never close") {
        AgentState b;
        b.x = 10.0;
        CHECK(ttc_between(a, fp, b, fp) == 10.0);
        CHECK(ttc_between(a, fp, b, fp, 3.0) == 3.0);
    }
    SUBCASE("overlapping discs read zero") {
        AgentState b;
        b.x = 1.0;
        CHECK(ttc_between(a, fp, b, fp) == 0.0);
    }
    SUBCASE("head-on approach closes at the joint speed") {
        a.speed = 5.0;
        AgentState b;
        b.x = 50.0;
        b.heading = 3.14159265358979323846;
        b.speed = 5.0;
        const double expect = (50.0 - 2.0 * fp.disc_radius()) / 10.0;
        CHECK(ttc_between(a, fp, b, fp) == doctest::Approx(expect).epsilon(1e-9));
    }
    SUBCASE("receding vehicles hit the cap") {
        AgentState b;
        b.x = 10.0;
        b.speed = 5.0;  // driving away along +x
        CHECK(ttc_between(a, fp, b, fp) == 10.0);
    }
    SUBCASE("larger footprints touch sooner") {
        a.speed = 5.0;
        AgentState b;
        b.x = 40.0;
        b.heading = 3.14159265358979323846;
        b.speed = 5.0;
        VehicleFootprint big;
        big.length = 9.0;
        big.width = 3.0;
        CHECK(ttc_between(a, fp, b, big) < ttc_between(a, fp, b, fp));
    }
    SUBCASE("always within [0, cap]") {
        for (double h : {0.0, 1.3, -2.1}) {
            for (double sp : {0.0, 3.0, 7.0}) {
                for (double x : {-12.0, 0.5, 9.0, 80.0}) {
                    AgentState b;
                    b.x = x;
                    b.y = 0.25 * x;
                    b.heading = h;
                    b.speed = sp;
                    const double t = ttc_between(a, fp, b, fp);
                    CHECK(t >= 0.0);
                    CHECK(t <= 10.0);
                }
            }
        }
    }
}

TEST_CASE("acceleration and timing means track the adversary") {
    RolloutRecord r = make_record(1, 2, {0, 2}, 0, 2);
    r.actions[1][0] = Action{1.0, 0.5};
    r.actions[1][1] = Action{-3.0, 0.0};
    r.executed[1].states[0].speed = 2.0;
    r.executed[1].states[1].speed = 4.0;
    r.executed[1].states[2].speed = 4.0;
    r.sim_time_s = 0.2;

    RolloutRecord stub = make_record(2, 0, {0, 1}, 0, -1);
    stub.termination = Termination::Failure;
    stub.failure_message = "no adversary";
    stub.sim_time_s = 0.4;

    const MetricSet m = compute_metrics({r, stub});
    CHECK(m.adv_acc_lon_mean == 2.0);
    CHECK(m.adv_acc_lat_mean == 0.5);
    CHECK(m.sim_time_mean_s == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(m.counts.adv_records == 1);
    CHECK(m.counts.accel_samples == 2);
    CHECK(m.counts.ttc_samples == 3);

    double ttc_sum = 0.0;
    for (int t = 0; t <= 2; ++t) {
        ttc_sum += ttc_between(r.executed[1].states[t], r.footprints[1],
                               r.executed[0].states[t], r.footprints[0]);
    }
    CHECK(m.ttc_mean_s == doctest::Approx(ttc_sum / 3.0).epsilon(1e-12));
}

TEST_CASE("rates are invariant under record reordering") {
    std::vector<RolloutRecord> fwd;
    for (int i = 0; i < 6; ++i) fwd.push_back(make_record(i, 3, {0, 1, 2, 3}, 0, 3));
    fwd[0].collisions.push_back({0, 3, 2});
    fwd[1].collisions.push_back({1, 3, 1});
    fwd[2].collisions.push_back({0, 1, 3});
    fwd[3].collisions.push_back({1, 2, 2});
    fwd[4].offroad.push_back({3, 1});
    fwd[5].offroad.push_back({2, 3});
    fwd[1].sim_time_s = 0.7;
    fwd[4].sim_time_s = 0.05;

    std::vector<RolloutRecord> rev(fwd.rbegin(), fwd.rend());
    const MetricSet a = compute_metrics(fwd);
    const MetricSet b = compute_metrics(rev);
    CHECK(a.adv_ego_coll_pct == b.adv_ego_coll_pct);
    CHECK(a.adv_other_coll_pct == b.adv_other_coll_pct);
    CHECK(a.other_ego_coll_pct == b.other_ego_coll_pct);
    CHECK(a.other_other_coll_pct == b.other_other_coll_pct);
    CHECK(a.adv_offroad_pct == b.adv_offroad_pct);
    CHECK(a.other_offroad_pct == b.other_offroad_pct);
    CHECK(a.counts.ttc_samples == b.counts.ttc_samples);
    CHECK(a.counts.accel_samples == b.counts.accel_samples);
    CHECK(a.ttc_mean_s == doctest::Approx(b.ttc_mean_s).epsilon(1e-12));
    CHECK(a.adv_acc_lon_mean == doctest::Approx(b.adv_acc_lon_mean).epsilon(1e-12));
    CHECK(a.adv_acc_lat_mean == doctest::Approx(b.adv_acc_lat_mean).epsilon(1e-12));
    CHECK(a.sim_time_mean_s == doctest::Approx(b.sim_time_mean_s).epsilon(1e-12));
}

TEST_CASE("metrics recomputed from persisted rollouts match exactly") {
    std::vector<RolloutRecord> records;
    for (int i = 0; i < 3; ++i) {
        RolloutRecord r = make_record(40 + i, 4, {0, 1, 2}, 0, 2);
        for (int k = 0; k <= 4; ++k) {
            for (size_t a = 0; a < r.executed.size(); ++a) {
                AgentState& st = r.executed[a].states[k];
                st.x = std::sin(0.37 * k + 1.1 * static_cast<double>(a) + i) * 25.0;
                st.y = std::cos(0.53 * k - 0.4 * static_cast<double>(a)) * 7.0;
                st.heading = std::sin(0.9 * k + static_cast<double>(a));
                st.speed = 3.0 + std::fmod(1.7 * k + 0.3 * static_cast<double>(a), 4.0);
            }
        }
        for (int k = 0; k < 4; ++k) {
            r.actions[2][k] = Action{std::sin(2.3 * k + i), 0.25 * std::cos(1.9 * k)};
        }
        r.sim_time_s = 0.123456789 * (i + 1);
        r.gen_time_s = 0.001 * (i + 1);
        records.push_back(std::move(r));
    }
    records[0].collisions.push_back({0, 2, 3});
    records[2].offroad.push_back({1, 2});

    const fs::path dir = fresh_dir("advscene_metrics_roundtrip");
    fs::create_directories(dir);
    std::vector<RolloutRecord> loaded;
    for (size_t i = 0; i < records.size(); ++i) {
        const std::string path = (dir / ("r" + std::to_string(i) + ".json")).string();
        save_rollout(records[i], path);
        loaded.push_back(load_rollout(path));
    }

    const MetricSet a = compute_metrics(records);
    const MetricSet b = compute_metrics(loaded);
    CHECK(a.adv_ego_coll_pct == b.adv_ego_coll_pct);
    CHECK(a.adv_other_coll_pct == b.adv_other_coll_pct);
    CHECK(a.other_ego_coll_pct == b.other_ego_coll_pct);
    CHECK(a.other_other_coll_pct == b.other_other_coll_pct);
    CHECK(a.adv_offroad_pct == b.adv_offroad_pct);
    CHECK(a.other_offroad_pct == b.other_offroad_pct);
    CHECK(a.adv_acc_lon_mean == b.adv_acc_lon_mean);
    CHECK(a.adv_acc_lat_mean == b.adv_acc_lat_mean);
    CHECK(a.ttc_mean_s == b.ttc_mean_s);
    CHECK(a.sim_time_mean_s == b.sim_time_mean_s);
    CHECK(a.counts.ttc_samples == b.counts.ttc_samples);
    CHECK(a.counts.accel_samples == b.counts.accel_samples);
    fs::remove_all(dir);
}

TEST_CASE("report emission is byte-stable and conserves histogram mass") {
    std::vector<RolloutRecord> records;
    for (int i = 0; i < 4; ++i) records.push_back(make_record(i, 2, {0, 1, 2}, 0, 2));
    records[0].collisions.push_back({0, 2, 1});
    records[1].offroad.push_back({2, 2});
    // edge values land in the outermost bins instead of falling off
    records[2].actions[2][0] = Action{6.0, 0.8};
    records[2].actions[2][1] = Action{-6.0, -0.8};
    for (auto& st : records[2].executed[2].states) st.speed = 20.0;
    const MetricSet m = compute_metrics(records);

    const fs::path dir_a = fresh_dir("advscene_report_a");
    const fs::path dir_b = fresh_dir("advscene_report_b");
    const auto files_a = emit_report(m, records, dir_a.string(), "cafebabe12345678");
    const auto files_b = emit_report(m, records, dir_b.string(), "cafebabe12345678");
    REQUIRE(files_a.size() == 10);
    REQUIRE(files_b.size() == 10);
    for (size_t i = 0; i < files_a.size(); ++i) {
        CHECK(slurp(files_a[i]) == slurp(files_b[i]));
    }

    const std::string mj = slurp((dir_a / "metrics.json").string());
    CHECK(mj.find("\"schema\": \"metrics.v1\"") != std::string::npos);
    CHECK(mj.find("cafebabe12345678") != std::string::npos);
    const std::string mc = slurp((dir_a / "metrics.csv").string());
    CHECK(mc.rfind("metric,value\n", 0) == 0);
    CHECK(mc.find("adv_ego_coll_pct,25.00\n") != std::string::npos);

    CHECK(csv_count_sum((dir_a / "hist_ttc.csv").string()) == m.counts.ttc_samples);
    CHECK(csv_count_sum((dir_a / "hist_speed.csv").string()) == m.counts.ttc_samples);
    CHECK(csv_count_sum((dir_a / "hist_acc_lon.csv").string()) == m.counts.accel_samples);
    CHECK(csv_count_sum((dir_a / "hist_acc_lat.csv").string()) == m.counts.accel_samples);
    const std::string svg = slurp((dir_a / "hist_ttc.svg").string());
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("report creates missing directories and rejects bad targets") {
    std::vector<RolloutRecord> records{make_record(1, 1, {0, 1}, 0, 1)};
    const MetricSet m = compute_metrics(records);

    const fs::path nested = fresh_dir("advscene_report_nested") / "deep" / "out";
    const auto files = emit_report(m, records, nested.string(), "00ff00ff00ff00ff");
    CHECK(fs::exists(nested / "metrics.json"));
    CHECK(files.size() == 10);
    fs::remove_all(nested.parent_path().parent_path());

    const fs::path blocker = fs::temp_directory_path() / "advscene_report_blocker";
    std::ofstream(blocker.string()) << "x";
    CHECK_THROWS_AS(emit_report(m, records, blocker.string(), "00"), WorldError);
    fs::remove(blocker);

    CHECK_THROWS_AS(compute_metrics({}), WorldError);
}
