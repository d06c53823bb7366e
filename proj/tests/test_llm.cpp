#include <doctest.h>

#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "advscene/llm.hpp"

using namespace advscene;

namespace {

const char* kGoodMedium =
    "level: medium\nweight w_adv = 1.5\nloss = w_adv * adv_collision()\n";

std::string fenced(const std::string& body) { return "```gdl\n" + body + "```\n"; }

struct PhraseCase {
    const char* query;
    AdvLevel level;
};

}  // namespace

TEST_CASE("descriptor lexicon classifies without consulting the provider") {
    const PhraseCase cases[] = {
        // strong descriptors
        {"perform an aggressive cut-in", AdvLevel::Strong},
        {"aggressively tailgate the ego vehicle", AdvLevel::Strong},
        {"force a forceful merge into the ego lane", AdvLevel::Strong},
        {"a forceful lane change that boxes the ego in", AdvLevel::Strong},
        {"high-speed overtake ending in a crash", AdvLevel::Strong},
        {"overtake at high speed and collide", AdvLevel::Strong},
        {"an aggressive high-speed pursuit", AdvLevel::Strong},
        {"swerve aggressively across both lanes", AdvLevel::Strong},
        {"a forceful high-speed ram", AdvLevel::Strong},
        {"Aggressive braking right in front of the ego", AdvLevel::Strong},
        // mild descriptors
        {"gently drift into the ego lane", AdvLevel::Weak},
        {"a gentle nudge toward the ego vehicle", AdvLevel::Weak},
        {"cautiously close the gap ahead", AdvLevel::Weak},
        {"a cautious approach that slowly tightens spacing", AdvLevel::Weak},
        {"slightly cross the lane boundary", AdvLevel::Weak},
        {"make a slight swerve toward the ego", AdvLevel::Weak},
        {"drift gently until the lanes overlap", AdvLevel::Weak},
        {"a cautious merge that shaves the safety margin", AdvLevel::Weak},
        {"slightly brake in front of the ego car", AdvLevel::Weak},
        {"Gentle pressure from the left lane", AdvLevel::Weak},
        // conflicting descriptors read as ambiguous intensity
        {"a gentle but aggressive squeeze", AdvLevel::Medium},
        {"cautious at first, then high-speed", AdvLevel::Medium},
        {"slight drift into a forceful ram", AdvLevel::Medium},
    };
    const auto bundle = default_bundle();
    for (const auto& c : cases) {
        CAPTURE(c.query);
        MockProvider mock;
        const auto got = classify_level(c.query, bundle, mock);
        CHECK(got.level == c.level);
        CHECK(!got.used_llm);
        CHECK(!got.phrases.empty());
        CHECK(mock.calls() == 0);
    }

    // trigger phrases surface under their canonical spelling
    MockProvider mock;
    const auto strong = classify_level("aggressive overtake at high speed", bundle, mock);
    REQUIRE(strong.phrases.size() == 2);
    CHECK(strong.phrases[0] == "aggressive");
    CHECK(strong.phrases[1] == "high-speed");
}

TEST_CASE("queries without descriptors go to the provider and read as medium") {
    const char* neutral[] = {
        "attempt to collide with the ego vehicle",
        "merge into the ego lane and make contact",
        "cut in front of the ego car",
        "brake ahead of the ego until it rear-ends",
        "follow the ego through the intersection and hit it",
        "box the ego vehicle against the shoulder",
        "drift across the center line into the ego",
    };
    const auto bundle = default_bundle();
    for (const char* q : neutral) {
        CAPTURE(q);
        MockProvider mock;
        const auto got = classify_level(q, bundle, mock);
        CHECK(got.level == AdvLevel::Medium);
        CHECK(got.used_llm);
        CHECK(got.phrases.empty());
        CHECK(mock.calls() == 1);
    }

    // the provider's wording is parsed, not pattern-matched verbatim
    MockProvider scripted({"I would call this one Strong."});
    const auto got = classify_level("ram the ego vehicle", bundle, scripted);
    CHECK(got.level == AdvLevel::Strong);
    CHECK(got.used_llm);

    MockProvider silent({"no idea"});
    CHECK_THROWS_AS(classify_level("ram the ego vehicle", bundle, silent), DslError);
    MockProvider offline;
    offline.set_offline(true);
    CHECK_THROWS_AS(classify_level("ram the ego vehicle", bundle, offline), DslError);
    MockProvider unused;
    CHECK_THROWS_AS(classify_level("", bundle, unused), WorldError);
}

TEST_CASE("program generation extracts the fenced block and enforces ranges") {
    const auto bundle = default_bundle();

    MockProvider good({fenced(kGoodMedium)});
    const auto gen = generate_program("collide with the ego", AdvLevel::Medium, bundle, good);
    CHECK(gen.source == kGoodMedium);
    REQUIRE(gen.weights.size() == 1);
    CHECK(gen.weights[0].first == "w_adv");
    CHECK(level_weight_range(AdvLevel::Medium).contains(gen.weights[0].second));

    MockProvider prose({"Sure, here is a plan with no code at all."});
    CHECK_THROWS_WITH_AS(
        generate_program("collide", AdvLevel::Medium, bundle, prose),
        doctest::Contains("no fenced gdl block"), DslError);

    MockProvider doubled({fenced(kGoodMedium) + "\n" + fenced(kGoodMedium)});
    CHECK_THROWS_AS(generate_program("collide", AdvLevel::Medium, bundle, doubled), DslError);

    MockProvider unclosed({"```gdl\nlevel: medium\nloss = 1.0\n"});
    CHECK_THROWS_AS(generate_program("collide", AdvLevel::Medium, bundle, unclosed), DslError);

    // a strong request through the canned provider lands in the strong range
    MockProvider canned;
    const auto strong = generate_program("aggressive overtake", AdvLevel::Strong, bundle, canned);
    REQUIRE(!strong.weights.empty());
    for (const auto& [name, value] : strong.weights) {
        CAPTURE(name);
        CHECK(value >= 2.0);
        CHECK(value <= 4.0);
    }

    // out-of-range weights get exactly one corrective round
    MockProvider fixed_on_retry({
        fenced("level: medium\nweight w_adv = 5.0\nloss = w_adv * adv_collision()\n"),
        fenced(kGoodMedium),
    });
    const auto retried =
        generate_program("collide", AdvLevel::Medium, bundle, fixed_on_retry);
    CHECK(retried.source == kGoodMedium);
    CHECK(fixed_on_retry.calls() == 2);

    // the corrective round is not repeated; a still-bad program passes through
    MockProvider stubborn({
        fenced("level: medium\nweight w_adv = 5.0\nloss = w_adv * adv_collision()\n"),
        fenced("level: medium\nweight w_adv = 6.0\nloss = w_adv * adv_collision()\n"),
    });
    const auto passed = generate_program("collide", AdvLevel::Medium, bundle, stubborn);
    CHECK(passed.weights[0].second == 6.0);
    CHECK(stubborn.calls() == 2);
}

TEST_CASE("repair loop runs the unit test and feeds failures back") {
    const auto bundle = default_bundle();
    const auto fixture = make_guidance_fixture(3);
    const auto ctx = fixture.ctx();

    SUBCASE("valid source succeeds on the first attempt without provider calls") {
        MockProvider mock;
        ReasoningTrace trace;
        const auto program = debug_loop(kGoodMedium, ctx, bundle, mock, trace);
        REQUIRE(program.has_value());
        CHECK(trace.ok);
        CHECK(trace.stage == "done");
        CHECK(trace.attempts == 1);
        CHECK(trace.diagnostics.empty());
        CHECK(mock.calls() == 0);
        CHECK(trace.source == kGoodMedium);
        REQUIRE(trace.weights.size() == 1);
        CHECK(trace.weights[0].second == 1.5);
    }

    SUBCASE("a syntax error is repaired on the second attempt") {
        MockProvider mock({fenced(kGoodMedium)});
        ReasoningTrace trace;
        const std::string broken = "level: medium\nloss = adv_collision(\n";
        const auto program = debug_loop(broken, ctx, bundle, mock, trace);
        REQUIRE(program.has_value());
        CHECK(trace.attempts == 2);
        REQUIRE(trace.diagnostics.size() == 1);
        CHECK(trace.diagnostics[0].phase == DslPhase::Parse);
        CHECK(trace.attempt_sources.size() == 2);
        CHECK(trace.attempt_sources[0] == broken);
        CHECK(mock.calls() == 1);
    }

    SUBCASE("exhaustion returns the full failure history") {
        MockProvider mock({
            fenced("level: medium\nloss = sum_t(speed(ego))\n"),
            fenced("level: medium\nloss = nonsense(adv)\n"),
        });
        ReasoningTrace trace;
        const auto program =
            debug_loop("level: medium\nloss = adv_collision(\n", ctx, bundle, mock, trace, 3);
        CHECK(!program.has_value());
        CHECK(!trace.ok);
        CHECK(trace.stage == "debug");
        CHECK(trace.attempts == 3);
        REQUIRE(trace.diagnostics.size() == 3);
        CHECK(trace.diagnostics[0].phase == DslPhase::Parse);
        CHECK(trace.diagnostics[1].phase == DslPhase::Typecheck);
        CHECK(trace.diagnostics[2].phase == DslPhase::Typecheck);
        CHECK(trace.attempt_sources.size() == 3);
    }

    SUBCASE("a provider failure mid-loop is recorded and ends the loop") {
        MockProvider mock;  // canned mode is never reached
        mock.set_offline(true);
        ReasoningTrace trace;
        const auto program =
            debug_loop("level: medium\nloss = adv_collision(\n", ctx, bundle, mock, trace, 3);
        CHECK(!program.has_value());
        REQUIRE(trace.diagnostics.size() == 2);
        CHECK(trace.diagnostics[0].phase == DslPhase::Parse);
        CHECK(trace.diagnostics[1].phase == DslPhase::Provider);
    }

    SUBCASE("generated text is only ever parsed, never executed") {
        const char* hostile[] = {
            "```gdl\nsystem(\"rm -rf /\")\n```",
            "```gdl\nlevel: medium\nloss = exec(adv)\n```",
            "```gdl\nlevel: medium\nloss = __import__(os)\n```",
        };
        for (const char* reply : hostile) {
            CAPTURE(reply);
            MockProvider mock({reply});
            ReasoningTrace trace;
            const auto program = debug_loop("level: medium\nloss = (\n", ctx, bundle, mock,
                                            trace, 2);
            CHECK(!program.has_value());
            CHECK(trace.diagnostics.size() >= 2);
        }
    }

    CHECK_THROWS_AS([&] {
        MockProvider mock;
        ReasoningTrace trace;
        debug_loop(kGoodMedium, ctx, bundle, mock, trace, 0);
    }(), WorldError);
}

TEST_CASE("full pipeline composes the stages and labels failures") {
    const auto bundle = default_bundle();
    const auto fixture = make_guidance_fixture(5);
    const auto ctx = fixture.ctx();

    SUBCASE("a strong query yields a strong program with a speed term") {
        MockProvider mock;
        const auto res = query_to_guidance(
            "aggressive high-speed overtake that ends in a collision", bundle, mock, ctx);
        REQUIRE(res.program.has_value());
        CHECK(res.trace.ok);
        CHECK(res.trace.stage == "done");
        CHECK(res.trace.level == AdvLevel::Strong);
        CHECK(!res.trace.level_from_llm);
        CHECK(res.trace.source.find("speed(adv)") != std::string::npos);
        bool has_speed_weight = false;
        for (const auto& [name, value] : res.trace.weights) {
            if (name == "w_speed") has_speed_weight = true;
            CHECK(level_weight_range(AdvLevel::Strong).contains(value));
        }
        CHECK(has_speed_weight);
        CHECK(res.program->level == AdvLevel::Strong);
    }

    SUBCASE("an offline provider fails at the generation stage") {
        MockProvider mock;
        mock.set_offline(true);
        const auto res =
            query_to_guidance("aggressive overtake and crash", bundle, mock, ctx);
        CHECK(!res.program.has_value());
        CHECK(!res.trace.ok);
        CHECK(res.trace.stage == "generate");
        REQUIRE(!res.trace.diagnostics.empty());
        CHECK(res.trace.diagnostics[0].phase == DslPhase::Provider);
    }

    SUBCASE("an offline provider fails at classification for neutral queries") {
        MockProvider mock;
        mock.set_offline(true);
        const auto res = query_to_guidance("merge and collide", bundle, mock, ctx);
        CHECK(!res.program.has_value());
        CHECK(res.trace.stage == "classify");
        REQUIRE(!res.trace.diagnostics.empty());
    }

    SUBCASE("misuse is rejected up front") {
        MockProvider mock;
        CHECK_THROWS_AS(query_to_guidance("", bundle, mock, ctx), WorldError);
        CHECK_THROWS_AS(query_to_guidance("x", PromptBundle{}, mock, ctx), WorldError);
        CHECK_THROWS_AS(query_to_guidance("x", bundle, mock, ctx, 0), WorldError);
    }
}

TEST_CASE("the mock pipeline is reproducible bit for bit") {
    const auto bundle = default_bundle();
    const auto fixture = make_guidance_fixture(9);
    const auto ctx = fixture.ctx();

    auto run = [&] {
        MockProvider mock;
        mock.set_fault_rate(0.6, 77);
        std::string all;
        for (int i = 0; i < 8; ++i) {
            const auto res = query_to_guidance(
                "case " + std::to_string(i) + ": merge into the ego and collide", bundle,
                mock, ctx);
            all += trace_json(res.trace);
            all += '\n';
        }
        return all;
    };
    const std::string a = run();
    const std::string b = run();
    CHECK(a == b);
    CHECK(a.find("\"ok\": true") != std::string::npos);
}

TEST_CASE("the repair loop lifts the success rate under injected faults") {
    const auto bundle = default_bundle();
    const auto fixture = make_guidance_fixture(13);
    const auto ctx = fixture.ctx();

    auto successes = [&](int max_iters) {
        MockProvider mock;
        mock.set_fault_rate(0.3, 4242);
        int ok = 0;
        for (int i = 0; i < 50; ++i) {
            const auto res = query_to_guidance(
                "scripted query " + std::to_string(i) + ": drift into the ego and collide",
                bundle, mock, ctx, max_iters);
            if (res.program.has_value()) {
                ++ok;
            } else {
                CHECK(!res.trace.diagnostics.empty());
            }
            CHECK(res.trace.attempts <= max_iters);
        }
        return ok;
    };

    const int with_debugger = successes(3);
    const int without_debugger = successes(1);
    CAPTURE(with_debugger);
    CAPTURE(without_debugger);
    CHECK(with_debugger > without_debugger);
    CHECK(with_debugger >= 45);
    CHECK(without_debugger <= 45);
}

TEST_CASE("traces round-trip through trace.v1 files") {
    const auto bundle = default_bundle();
    const auto fixture = make_guidance_fixture(21);
    const auto ctx = fixture.ctx();

    MockProvider mock({
        fenced("level: medium\nloss = nonsense(adv)\n"),
        fenced(kGoodMedium),
    });
    ReasoningTrace trace;
    trace.query = "collide with the ego";
    trace.level = AdvLevel::Medium;
    trace.trigger_phrases = {"aggressive"};
    const auto program =
        debug_loop("level: medium\nloss = (\n", ctx, bundle, mock, trace, 3);
    REQUIRE(program.has_value());
    REQUIRE(trace.diagnostics.size() == 2);

    const std::string path = "trace_roundtrip.json";
    save_trace(path, trace);
    const ReasoningTrace back = load_trace(path);
    CHECK(back.query == trace.query);
    CHECK(back.level == trace.level);
    CHECK(back.trigger_phrases == trace.trigger_phrases);
    CHECK(back.weights == trace.weights);
    CHECK(back.source == trace.source);
    CHECK(back.attempt_sources == trace.attempt_sources);
    CHECK(back.attempts == trace.attempts);
    CHECK(back.ok == trace.ok);
    CHECK(back.stage == trace.stage);
    REQUIRE(back.diagnostics.size() == trace.diagnostics.size());
    for (size_t i = 0; i < back.diagnostics.size(); ++i) {
        CHECK(back.diagnostics[i].str() == trace.diagnostics[i].str());
    }
    CHECK(trace_json(back) == trace_json(trace));

    // a provider diagnostic prints with its phase prefix
    CHECK(Diagnostic{DslPhase::Provider, "timeout", {1, 1, 0}}.str() ==
          "provider:1:1: timeout");

    std::ofstream foreign("trace_foreign.json", std::ios::binary);
    foreign << "{\"schema\": \"rollout.v1\"}\n";
    foreign.close();
    CHECK_THROWS_AS(load_trace("trace_foreign.json"), WorldError);
    CHECK_THROWS_AS(load_trace("no_such_trace.json"), WorldError);
    std::remove(path.c_str());
    std::remove("trace_foreign.json");
}

TEST_CASE("http provider speaks the chat completions wire format") {
    setenv("ADVSCENE_LLM_KEY", "test-key-123", 1);

    httplib::Server server;
    std::string seen_auth, seen_body;
    server.Post("/v1/chat/completions",
                [&](const httplib::Request& req, httplib::Response& res) {
                    seen_auth = req.get_header_value("Authorization");
                    seen_body = req.body;
                    const nlohmann::json reply = {
                        {"choices",
                         {{{"message",
                            {{"role", "assistant"}, {"content", "medium"}}}}}}};
                    res.set_content(reply.dump(), "application/json");
                });
    server.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
        res.status = 500;
        res.set_content("overloaded", "text/plain");
    });
    server.Post("/garbled", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("not json", "application/json");
    });

    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread serving([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ProviderConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
    cfg.model = "test-model";
    cfg.temperature = 0.5;
    cfg.timeout_s = 5.0;

    HttpProvider provider(cfg);
    const std::string reply =
        provider.chat("system text", {{"user", "classify this"}});
    CHECK(reply == "medium");
    CHECK(seen_auth == "Bearer test-key-123");
    const auto body = nlohmann::json::parse(seen_body);
    CHECK(body["model"] == "test-model");
    CHECK(body["temperature"] == 0.5);
    REQUIRE(body["messages"].size() == 2);
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(body["messages"][0]["content"] == "system text");
    CHECK(body["messages"][1]["role"] == "user");

    auto expect_provider_error = [&](const std::string& path) {
        ProviderConfig c = cfg;
        c.path = path;
        HttpProvider p(c);
        try {
            p.chat("s", {{"user", "u"}});
            FAIL("expected a provider error for " << path);
        } catch (const DslError& e) {
            CHECK(e.diag.phase == DslPhase::Provider);
        }
    };
    expect_provider_error("/broken");
    expect_provider_error("/garbled");

    server.stop();
    serving.join();

    // unreachable endpoint surfaces as a typed provider failure
    ProviderConfig dead = cfg;
    dead.endpoint = "http://127.0.0.1:" + std::to_string(port);
    dead.timeout_s = 2.0;
    HttpProvider gone(dead);
    CHECK_THROWS_AS(gone.chat("s", {{"user", "u"}}), DslError);

    ProviderConfig bad = cfg;
    bad.timeout_s = 0.0;
    CHECK_THROWS_AS(HttpProvider{bad}, WorldError);
    bad = cfg;
    bad.path = "no-slash";
    CHECK_THROWS_AS(HttpProvider{bad}, WorldError);

    unsetenv("ADVSCENE_LLM_KEY");
}
