#include "advscene/llm.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace advscene {

namespace {

using nlohmann::json;

[[noreturn]] void provider_fail(const std::string& msg) {
    throw DslError({DslPhase::Provider, msg, {1, 1, 0}});
}

std::string lowercase(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// descriptor lexicon: strong and mild intensity words, plus the unhyphenated
// spelling of high-speed; matches are reported under the canonical spelling
struct LexiconEntry {
    const char* canonical;
    const char* needle;
};
constexpr LexiconEntry kStrong[] = {
    {"aggressive", "aggressive"},
    {"forceful", "forceful"},
    {"high-speed", "high-speed"},
    {"high-speed", "high speed"},
};
constexpr LexiconEntry kWeak[] = {
    {"gentle", "gentl"},  // stem, so gently matches too
    {"cautious", "cautious"},
    {"slight", "slight"},
};

template <size_t N>
std::vector<std::string> lexicon_matches(const std::string& low, const LexiconEntry (&table)[N]) {
    std::vector<std::string> out;
    for (const auto& e : table) {
        if (low.find(e.needle) == std::string::npos) continue;
        if (std::find(out.begin(), out.end(), e.canonical) == out.end()) {
            out.push_back(e.canonical);
        }
    }
    return out;
}

std::string render(std::string tmpl,
                   std::initializer_list<std::pair<const char*, std::string>> subs) {
    for (const auto& [key, value] : subs) {
        const std::string tag = std::string("{") + key + "}";
        size_t at = 0;
        while ((at = tmpl.find(tag, at)) != std::string::npos) {
            tmpl.replace(at, tag.size(), value);
            at += value.size();
        }
    }
    return tmpl;
}

std::string format_weight(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

/// The completion must carry exactly one ```gdl fenced block.
std::string extract_gdl_block(const std::string& completion) {
    const std::string fence = "```gdl";
    const size_t first = completion.find(fence);
    if (first == std::string::npos) {
        provider_fail("completion contains no fenced gdl block");
    }
    if (completion.find(fence, first + fence.size()) != std::string::npos) {
        provider_fail("completion contains more than one fenced gdl block");
    }
    size_t begin = first + fence.size();
    if (begin < completion.size() && completion[begin] == '\n') ++begin;
    const size_t end = completion.find("```", begin);
    if (end == std::string::npos) {
        provider_fail("fenced gdl block is not closed");
    }
    std::string body = completion.substr(begin, end - begin);
    if (body.empty() || body.back() != '\n') body += '\n';
    return body;
}

const char* canonical_program(AdvLevel level) {
    switch (level) {
        case AdvLevel::Weak:
            return "level: weak\n"
                   "weight w_adv = 0.5\n"
                   "loss = w_adv * adv_collision()\n";
        case AdvLevel::Medium:
            return "level: medium\n"
                   "weight w_adv = 1.5\n"
                   "loss = w_adv * adv_collision()\n";
        case AdvLevel::Strong:
            return "level: strong\n"
                   "weight w_adv = 3.0\n"
                   "weight w_speed = 2.0\n"
                   "loss = w_adv * adv_collision() - w_speed * min_t(speed(adv))\n";
    }
    return "";
}

AdvLevel level_in_prompt(const std::string& low) {
    for (AdvLevel level : {AdvLevel::Strong, AdvLevel::Weak, AdvLevel::Medium}) {
        if (low.find("level: " + level_name(level)) != std::string::npos) return level;
    }
    return AdvLevel::Medium;
}

const char* phase_name_of(DslPhase phase) {
    switch (phase) {
        case DslPhase::Parse: return "parse";
        case DslPhase::Typecheck: return "typecheck";
        case DslPhase::Eval: return "eval";
        case DslPhase::Gradcheck: return "gradcheck";
        case DslPhase::Provider: return "provider";
    }
    return "parse";
}

DslPhase phase_from_name(const std::string& name) {
    for (DslPhase p : {DslPhase::Parse, DslPhase::Typecheck, DslPhase::Eval,
                       DslPhase::Gradcheck, DslPhase::Provider}) {
        if (name == phase_name_of(p)) return p;
    }
    throw WorldError("unknown diagnostic phase '" + name + "'");
}

}  // namespace

// ---------------------------------------------------------------- providers ---

MockProvider::MockProvider(std::vector<std::string> script) : script_(std::move(script)) {}

void MockProvider::set_fault_rate(double rate, uint64_t seed) {
    fault_rate_ = rate;
    rng_ = Rng(seed);
    fault_kind_ = 0;
}

std::string MockProvider::chat(const std::string& system, const std::vector<LlmMessage>& turns) {
    (void)system;
    ++calls_;
    if (offline_) provider_fail("provider offline");
    if (turns.empty() || turns.back().role != "user") {
        provider_fail("conversation must end with a user turn");
    }
    if (!script_.empty()) {
        if (next_ >= script_.size()) provider_fail("mock script exhausted");
        return script_[next_++];
    }
    return canned_reply(turns.back().content);
}

std::string MockProvider::canned_reply(const std::string& last_user) {
    const std::string low = lowercase(last_user);

    if (low.find("classify the adversarial level") != std::string::npos) {
        // scan only the quoted request, the instructions list every descriptor
        std::string scope = low;
        if (const size_t at = low.find("request:"); at != std::string::npos) {
            const size_t end = low.find('\n', at);
            scope = low.substr(at, end == std::string::npos ? low.size() - at : end - at);
        }
        const bool strong = !lexicon_matches(scope, kStrong).empty();
        const bool weak = !lexicon_matches(scope, kWeak).empty();
        if (strong && !weak) return "strong";
        if (weak && !strong) return "weak";
        return "medium";
    }

    std::string program = canonical_program(level_in_prompt(low));
    if (fault_rate_ > 0.0 && rng_.uniform() < fault_rate_) {
        const int kind = fault_kind_++ % 3;
        if (kind == 0) {
            program.erase(program.rfind(')'), 1);
        } else if (kind == 1) {
            const size_t at = program.find("adv_collision()");
            program.replace(at, 15, "collide_now(adv)");
        } else {
            const size_t at = program.find("w_adv = ");
            program.replace(at + 8, 3, "9.9");
        }
    }
    return "Here is the program:\n```gdl\n" + program + "```\n";
}

// ------------------------------------------------------------------ prompts ---

bool PromptBundle::valid() const {
    const bool reasoning_ok = reasoning.find("{query}") != std::string::npos;
    const bool codegen_ok = codegen.find("{query}") != std::string::npos &&
                            codegen.find("{level}") != std::string::npos &&
                            codegen.find("{weight_lo}") != std::string::npos &&
                            codegen.find("{weight_hi}") != std::string::npos;
    const bool debugger_ok = debugger.find("{source}") != std::string::npos &&
                             debugger.find("{error}") != std::string::npos;
    return !system.empty() && reasoning_ok && codegen_ok && debugger_ok;
}

PromptBundle default_bundle() {
    PromptBundle b;
    b.system =
        "You write guidance loss programs for a driving scenario generator. A program\n"
        "scores candidate futures of a traffic scene; the sampler descends its gradient,\n"
        "so lower loss must mean closer to the requested behaviour. Three agent groups\n"
        "exist: adv (the controlled adversary), ego (the attacked planner vehicle, never\n"
        "steerable), and others (background traffic). Keep every additive loss term\n"
        "focused on adv or on others, never both in one term. Reply with exactly one\n"
        "fenced code block labeled gdl.\n";
    b.reasoning =
        "Classify the adversarial level of the request below as weak, medium or strong.\n"
        "Strong descriptors (aggressive, forceful, high-speed) mean strong. Mild\n"
        "descriptors (gentle, cautious, slight) mean weak. Ambiguous intensity means\n"
        "medium.\n"
        "Request: {query}\n"
        "Answer with one word.\n";
    b.codegen =
        "Write a guidance program for the request below.\n"
        "Request: {query}\n"
        "Adversarial level: {level}\n"
        "Every declared weight must lie between {weight_lo} and {weight_hi}.\n"
        "Grammar:\n"
        "  program := 'level' ':' (weak|medium|strong) , 'weight' name '=' number ... ,\n"
        "             'loss' '=' expr\n"
        "  expr combines terms with + - * / and parentheses.\n"
        "Builtins (the first agent argument is the one being steered):\n"
        "  veh_coll_pens(a, b)   per-step collision penalty between a and b\n"
        "  env_coll_pens(a)      per-step off-road penalty for a\n"
        "  dist(a, b), speed(a), lon_accel(a), lat_accel(a), heading_diff(a, b), ttc(a, b)\n"
        "  adv_collision()       pulls adv into the ego vehicle\n"
        "  sum_t(s), min_t(s), max_t(s) reduce a per-step series; clip(x, lo, hi),\n"
        "  relu(x), neg(x) transform values.\n"
        "Example terms: w1 * sum_t(veh_coll_pens(others, others)) keeps traffic\n"
        "collision-free; w2 * sum_t(env_coll_pens(adv)) keeps the adversary on the road.\n"
        "Reply with one fenced gdl block.\n";
    b.debugger =
        "Fix the guidance program below; it failed a unit test.\n"
        "Program:\n"
        "{source}\n"
        "Error:\n"
        "{error}\n"
        "Analyze the error, repair the program, and reply with one fenced gdl block.\n";
    return b;
}

// ------------------------------------------------------------------ fixture ---

EvalContext GuidanceFixture::ctx() const {
    EvalContext c;
    c.sc = &sc;
    c.dec = &dec;
    c.ego = &ego;
    c.world = world;
    return c;
}

GuidanceFixture make_guidance_fixture(uint64_t seed) {
    GuidanceFixture f;
    f.sc = synth_scenarios(seed, 1, ScenarioTemplate::Straight).front();
    const auto all = continue_with_traffic(f.sc, f.sc.horizon);
    for (size_t i = 0; i < f.sc.agents.size(); ++i) {
        if (f.sc.agents[i].id == f.sc.ego_id) {
            f.ego = all[i];
            continue;
        }
        f.dec.agent_ids.push_back(f.sc.agents[i].id);
        f.dec.futures.push_back(all[i]);
        std::vector<Action> acts;
        for (int t = 0; t + 1 < static_cast<int>(all[i].size()); ++t) {
            const AgentState& a = all[i].states[t];
            const AgentState& b = all[i].states[t + 1];
            acts.push_back({(b.speed - a.speed) / f.sc.tick,
                            angle_diff(b.heading, a.heading) / f.sc.tick});
        }
        f.dec.actions.push_back(std::move(acts));
    }
    return f;
}

// ------------------------------------------------------------------- stages ---

LevelResult classify_level(const std::string& query, const PromptBundle& bundle,
                           LlmProvider& provider) {
    if (query.empty()) throw WorldError("query is empty");
    if (!bundle.valid()) throw WorldError("prompt bundle is missing required placeholders");

    LevelResult out;
    const std::string low = lowercase(query);
    auto strong = lexicon_matches(low, kStrong);
    auto weak = lexicon_matches(low, kWeak);
    if (!strong.empty() || !weak.empty()) {
        out.phrases = std::move(strong);
        out.phrases.insert(out.phrases.end(), weak.begin(), weak.end());
        const bool has_strong = out.phrases.size() > weak.size();
        if (has_strong && weak.empty()) {
            out.level = AdvLevel::Strong;
        } else if (!has_strong) {
            out.level = AdvLevel::Weak;
        } else {
            out.level = AdvLevel::Medium;  // conflicting descriptors read as ambiguous
        }
        return out;
    }

    const std::string prompt = render(bundle.reasoning, {{"query", query}});
    const std::string reply = lowercase(provider.chat(bundle.system, {{"user", prompt}}));
    size_t best = std::string::npos;
    for (AdvLevel level : {AdvLevel::Weak, AdvLevel::Medium, AdvLevel::Strong}) {
        const size_t at = reply.find(level_name(level));
        if (at < best) {
            best = at;
            out.level = level;
        }
    }
    if (best == std::string::npos) {
        provider_fail("classification reply names no adversarial level");
    }
    out.used_llm = true;
    return out;
}

GeneratedProgram generate_program(const std::string& query, AdvLevel level,
                                  const PromptBundle& bundle, LlmProvider& provider) {
    if (!bundle.valid()) throw WorldError("prompt bundle is missing required placeholders");

    const WeightRange range = level_weight_range(level);
    const std::string prompt =
        render(bundle.codegen, {{"query", query},
                                {"level", level_name(level)},
                                {"weight_lo", format_weight(range.lo)},
                                {"weight_hi", format_weight(range.hi)}});
    std::vector<LlmMessage> turns{{"user", prompt}};
    GeneratedProgram out;
    out.source = extract_gdl_block(provider.chat(bundle.system, turns));

    // one corrective round when the declared weights escape the level's range;
    // sources that do not even parse go straight to the repair loop instead
    try {
        const ParsedProgram parsed = parse(out.source);
        out.weights = parsed.weights;
        for (const auto& [name, value] : parsed.weights) {
            if (range.contains(value)) continue;
            const std::string note =
                "Weight " + name + " = " + format_weight(value) + " is outside the " +
                level_name(level) + " range " + format_weight(range.lo) + " to " +
                format_weight(range.hi) + ". Write a guidance program again with every " +
                "weight inside the range.";
            turns.push_back({"assistant", out.source});
            turns.push_back({"user", note});
            out.source = extract_gdl_block(provider.chat(bundle.system, turns));
            try {
                out.weights = parse(out.source).weights;
            } catch (const DslError&) {
                out.weights.clear();
            }
            break;
        }
    } catch (const DslError&) {
        out.weights.clear();
    }
    return out;
}

std::optional<GuidanceProgram> debug_loop(const std::string& source,
                                          const EvalContext& fixture,
                                          const PromptBundle& bundle,
                                          LlmProvider& provider, ReasoningTrace& trace,
                                          int max_iters) {
    if (max_iters < 1) throw WorldError("max_iters must be at least 1");
    if (!bundle.valid()) throw WorldError("prompt bundle is missing required placeholders");

    std::string cur = source;
    std::vector<LlmMessage> turns;
    for (int attempt = 1; attempt <= max_iters; ++attempt) {
        trace.attempts = attempt;
        trace.attempt_sources.push_back(cur);

        // the unit test: parse and typecheck, evaluate on the fixture, then
        // compare analytic gradients against finite differences
        Diagnostic diag;
        bool failed = false;
        try {
            GuidanceProgram program = compile(cur);
            evaluate(program, fixture, nullptr);
            if (auto bad = check_gradients(program, fixture)) {
                diag = *bad;
                failed = true;
            }
            if (!failed) {
                trace.ok = true;
                trace.stage = "done";
                trace.source = cur;
                trace.weights = program.weights;
                return program;
            }
        } catch (const DslError& e) {
            diag = e.diag;
            failed = true;
        }
        trace.diagnostics.push_back(diag);
        if (attempt == max_iters) break;

        const std::string prompt =
            render(bundle.debugger, {{"source", cur}, {"error", diag.str()}});
        turns.push_back({"user", prompt});
        try {
            const std::string reply = provider.chat(bundle.system, turns);
            turns.push_back({"assistant", reply});
            cur = extract_gdl_block(reply);
        } catch (const DslError& e) {
            trace.diagnostics.push_back(e.diag);
            break;
        }
    }
    trace.ok = false;
    trace.stage = "debug";
    trace.source = cur;
    return std::nullopt;
}

GuidanceResult query_to_guidance(const std::string& query, const PromptBundle& bundle,
                                 LlmProvider& provider, const EvalContext& fixture,
                                 int max_debug_iters) {
    if (query.empty()) throw WorldError("query is empty");
    if (!bundle.valid()) throw WorldError("prompt bundle is missing required placeholders");
    if (max_debug_iters < 1) throw WorldError("max_debug_iters must be at least 1");

    GuidanceResult out;
    out.trace.query = query;

    out.trace.stage = "classify";
    LevelResult level;
    try {
        level = classify_level(query, bundle, provider);
    } catch (const DslError& e) {
        out.trace.diagnostics.push_back(e.diag);
        return out;
    }
    out.trace.level = level.level;
    out.trace.trigger_phrases = level.phrases;
    out.trace.level_from_llm = level.used_llm;

    out.trace.stage = "generate";
    GeneratedProgram gen;
    try {
        gen = generate_program(query, level.level, bundle, provider);
    } catch (const DslError& e) {
        out.trace.diagnostics.push_back(e.diag);
        return out;
    }
    out.trace.source = gen.source;
    out.trace.weights = gen.weights;

    out.program = debug_loop(gen.source, fixture, bundle, provider, out.trace, max_debug_iters);
    return out;
}

// ----------------------------------------------------------------- trace io ---

std::string trace_json(const ReasoningTrace& trace) {
    json diags = json::array();
    for (const Diagnostic& d : trace.diagnostics) {
        diags.push_back({{"phase", phase_name_of(d.phase)},
                         {"line", d.span.line},
                         {"col", d.span.col},
                         {"len", d.span.len},
                         {"message", d.message}});
    }
    json weights = json::array();
    for (const auto& [name, value] : trace.weights) {
        weights.push_back({{"name", name}, {"value", value}});
    }
    const json j = {
        {"schema", "trace.v1"},
        {"query", trace.query},
        {"level", level_name(trace.level)},
        {"trigger_phrases", trace.trigger_phrases},
        {"level_from_llm", trace.level_from_llm},
        {"weights", weights},
        {"source", trace.source},
        {"attempt_sources", trace.attempt_sources},
        {"diagnostics", diags},
        {"attempts", trace.attempts},
        {"ok", trace.ok},
        {"stage", trace.stage},
    };
    return j.dump(2);
}

void save_trace(const std::string& path, const ReasoningTrace& trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw WorldError("cannot open '" + path + "' for writing");
    out << trace_json(trace) << '\n';
    if (!out) throw WorldError("failed writing trace to '" + path + "'");
}

ReasoningTrace load_trace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WorldError("cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw WorldError(std::string("malformed trace file: ") + e.what());
    }
    if (!j.contains("schema") || j["schema"] != "trace.v1") {
        throw WorldError("'" + path + "' does not hold a trace.v1 document");
    }
    try {
        ReasoningTrace t;
        t.query = j.at("query").get<std::string>();
        t.level = parse_level(j.at("level").get<std::string>());
        t.trigger_phrases = j.at("trigger_phrases").get<std::vector<std::string>>();
        t.level_from_llm = j.at("level_from_llm").get<bool>();
        for (const auto& w : j.at("weights")) {
            t.weights.emplace_back(w.at("name").get<std::string>(),
                                   w.at("value").get<double>());
        }
        t.source = j.at("source").get<std::string>();
        t.attempt_sources = j.at("attempt_sources").get<std::vector<std::string>>();
        for (const auto& d : j.at("diagnostics")) {
            Diagnostic diag;
            diag.phase = phase_from_name(d.at("phase").get<std::string>());
            diag.span.line = d.at("line").get<int>();
            diag.span.col = d.at("col").get<int>();
            diag.span.len = d.at("len").get<int>();
            diag.message = d.at("message").get<std::string>();
            t.diagnostics.push_back(std::move(diag));
        }
        t.attempts = j.at("attempts").get<int>();
        t.ok = j.at("ok").get<bool>();
        t.stage = j.at("stage").get<std::string>();
        return t;
    } catch (const json::exception& e) {
        throw WorldError(std::string("malformed trace file: ") + e.what());
    }
}

}  // namespace advscene
