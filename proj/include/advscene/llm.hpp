#pragma once

// Natural-language guidance authoring. A chat provider (live HTTP endpoint or
// the deterministic in-tree mock) is driven through three stages: classify the
// requested adversarial level, generate guidance DSL source from a prompt
// bundle, then repair it in a closed unit-test loop until it parses,
// typechecks, evaluates finitely on a fixture, and passes a gradient check.
// Every run leaves a ReasoningTrace that serializes as trace.v1 JSON.

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "advscene/dsl.hpp"
#include "advscene/nn.hpp"
#include "advscene/scenario.hpp"

namespace advscene {

struct LlmMessage {
    std::string role;  // "user" or "assistant"
    std::string content;
};

/// Blocking chat interface. Implementations throw DslError with phase
/// Provider on transport or protocol failures; they never abort.
class LlmProvider {
  public:
    virtual ~LlmProvider() = default;
    virtual std::string chat(const std::string& system,
                             const std::vector<LlmMessage>& turns) = 0;
};

struct ProviderConfig {
    std::string endpoint = "http://localhost:8080";
    std::string path = "/v1/chat/completions";
    std::string model = "gpt-4o";
    double temperature = 0.2;
    double timeout_s = 30.0;
    std::string key_env = "ADVSCENE_LLM_KEY";
};

/// Chat-completions client over the configured endpoint. The API key is read
/// from the environment variable named by key_env and sent as a bearer token
/// when present.
class HttpProvider : public LlmProvider {
  public:
    explicit HttpProvider(ProviderConfig cfg);
    std::string chat(const std::string& system,
                     const std::vector<LlmMessage>& turns) override;
    const ProviderConfig& config() const { return cfg_; }

  private:
    ProviderConfig cfg_;
};

/// Deterministic provider for tests and CI. With a script it replays the
/// given completions in order and reports itself offline when they run out.
/// Without one it answers classification, generation, and repair prompts from
/// canned per-level programs; a seeded fault rate corrupts a fraction of the
/// emitted programs so the repair loop has real work to do.
class MockProvider : public LlmProvider {
  public:
    MockProvider() = default;
    explicit MockProvider(std::vector<std::string> script);
    void set_fault_rate(double rate, uint64_t seed);
    void set_offline(bool offline) { offline_ = offline; }
    int calls() const { return calls_; }
    std::string chat(const std::string& system,
                     const std::vector<LlmMessage>& turns) override;

  private:
    std::string canned_reply(const std::string& last_user);

    std::vector<std::string> script_;
    size_t next_ = 0;
    bool offline_ = false;
    double fault_rate_ = 0.0;
    Rng rng_{0};
    int fault_kind_ = 0;
    int calls_ = 0;
};

/// Prompt templates. Placeholders in braces are substituted at call time:
/// reasoning needs {query}; codegen needs {query}, {level}, {weight_lo},
/// {weight_hi}; debugger needs {source} and {error}.
struct PromptBundle {
    std::string system;
    std::string reasoning;
    std::string codegen;
    std::string debugger;

    bool valid() const;
};

PromptBundle default_bundle();

struct ReasoningTrace {
    std::string query;
    AdvLevel level = AdvLevel::Medium;
    std::vector<std::string> trigger_phrases;
    bool level_from_llm = false;
    std::vector<std::pair<std::string, double>> weights;
    std::string source;                         // final program source
    std::vector<std::string> attempt_sources;   // one per unit-test attempt
    std::vector<Diagnostic> diagnostics;        // one per failure
    int attempts = 0;
    bool ok = false;
    std::string stage;  // "classify", "generate", "debug", or "done"
};

std::string trace_json(const ReasoningTrace& trace);
void save_trace(const std::string& path, const ReasoningTrace& trace);
ReasoningTrace load_trace(const std::string& path);

/// Small self-contained evaluation context for unit-testing generated
/// programs: a synthesized scenario with traffic-model futures split into an
/// ego plan and decoded non-ego trajectories.
struct GuidanceFixture {
    Scenario sc;
    DecodeOut dec;
    Trajectory ego;
    WorldParams world;

    EvalContext ctx() const;
};

GuidanceFixture make_guidance_fixture(uint64_t seed = 0);

struct LevelResult {
    AdvLevel level = AdvLevel::Medium;
    std::vector<std::string> phrases;  // lexicon matches, empty when the LLM decided
    bool used_llm = false;
};

/// Lexicon pass first: strong descriptors force Strong, mild ones force Weak,
/// a mix of both reads as ambiguous intensity and yields Medium. The provider
/// is consulted only when no descriptor matches.
LevelResult classify_level(const std::string& query, const PromptBundle& bundle,
                           LlmProvider& provider);

struct GeneratedProgram {
    std::string source;
    std::vector<std::pair<std::string, double>> weights;
};

/// One codegen round plus at most one corrective re-prompt when declared
/// weights fall outside the level's range. The completion must contain
/// exactly one fenced ```gdl block.
GeneratedProgram generate_program(const std::string& query, AdvLevel level,
                                  const PromptBundle& bundle, LlmProvider& provider);

/// Unit test of a candidate program (parse, typecheck, evaluate on the
/// fixture, gradient check) with up to max_iters attempts; failures are fed
/// back through the debugger prompt. Returns the compiled program or nullopt
/// with the failure history in the trace.
std::optional<GuidanceProgram> debug_loop(const std::string& source,
                                          const EvalContext& fixture,
                                          const PromptBundle& bundle,
                                          LlmProvider& provider, ReasoningTrace& trace,
                                          int max_iters = 3);

struct GuidanceResult {
    std::optional<GuidanceProgram> program;
    ReasoningTrace trace;
};

/// Full pipeline: classify, generate, repair. Pipeline failures are captured
/// in the trace (stage names the step that gave up) rather than thrown.
GuidanceResult query_to_guidance(const std::string& query, const PromptBundle& bundle,
                                 LlmProvider& provider, const EvalContext& fixture,
                                 int max_debug_iters = 3);

}  // namespace advscene
