#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "advscene/diffusion.hpp"

namespace advscene {

// Guidance objectives are written in a small total expression language:
//
//   program := header decl* "loss" "=" expr
//   header  := "level" ":" ("weak" | "medium" | "strong")
//   decl    := "weight" ident "=" number
//   expr    := term (("+" | "-") term)*
//   term    := factor (("*" | "/") factor)*
//   factor  := number | ident | call | "(" expr ")"
//   call    := ident "(" args? ")"
//
// Values are scalars or per-step series over the future horizon (step 1..T).
// Agent references: `adv` (the adversary, differentiable), `others` (all
// remaining non-ego agents, differentiable, aggregated by mean), `ego` (the
// attack target, constant, never differentiated). A builtin's first agent
// argument is its differentiation subject; `ego` cannot be a subject. Each
// top-level additive term must mention `adv` or `others` but not both, which
// is what routes its gradient.

enum class AdvLevel { Weak, Medium, Strong };

AdvLevel parse_level(const std::string& name);
std::string level_name(AdvLevel level);

/// Admissible [lo, hi) weight interval for a level; Strong closes at 4.0.
struct WeightRange {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double w) const;
};
WeightRange level_weight_range(AdvLevel level);

struct SourceSpan {
    int line = 1;
    int col = 1;
    int len = 0;
};

enum class DslPhase { Parse, Typecheck, Eval, Gradcheck, Provider };

struct Diagnostic {
    DslPhase phase = DslPhase::Parse;
    std::string message;
    SourceSpan span;

    /// "phase:line:col: message"
    std::string str() const;
};

struct DslError : WorldError {
    Diagnostic diag;
    explicit DslError(Diagnostic d);
};

// --------------------------------------------------------------------- AST ---

struct Expr {
    enum class Kind { Number, Ident, Call, BinOp };
    Kind kind = Kind::Number;
    SourceSpan span;
    double number = 0.0;   // Number
    std::string name;      // Ident and Call
    char op = 0;           // BinOp: + - * /
    std::vector<std::shared_ptr<const Expr>> args;  // Call arguments, BinOp {lhs, rhs}
};

using ExprPtr = std::shared_ptr<const Expr>;

/// Structural equality, spans ignored.
bool ast_equal(const Expr& a, const Expr& b);

struct ParsedProgram {
    AdvLevel level = AdvLevel::Medium;
    std::vector<std::pair<std::string, double>> weights;  // declaration order
    ExprPtr body;
};

/// Throws DslError(parse) with the offending span. Source limited to 64 KiB.
ParsedProgram parse(const std::string& source);

enum class Route { None, Adv, Others };

struct GuidanceProgram {
    AdvLevel level = AdvLevel::Medium;
    std::vector<std::pair<std::string, double>> weights;
    ExprPtr body;
    /// Top-level additive terms with their gradient targets.
    std::vector<std::pair<const Expr*, Route>> term_routes;
};

/// Throws DslError(typecheck): unknown identifiers, arity and type errors,
/// weights outside the level's range, terms coupling adv with others.
GuidanceProgram typecheck(const ParsedProgram& parsed);

/// parse + typecheck.
GuidanceProgram compile(const std::string& source);

/// Canonical source text; parse(print_program(p)) reproduces the AST.
std::string print_program(const GuidanceProgram& p);

// -------------------------------------------------------------- evaluation ---

/// Bindings the program reads. Futures and ego cover the same horizon; the
/// ego trajectory is constant (no gradient flows into it).
struct EvalContext {
    const Scenario* sc = nullptr;
    const DecodeOut* dec = nullptr;
    const Trajectory* ego = nullptr;
    WorldParams world;  // penalty buffer and action bounds
};

/// Loss value; adjoints accumulate into *adj (sized to match dec) when it is
/// non-null. Pure. Throws DslError(eval) naming the node that produced a
/// non-finite value.
double evaluate(const GuidanceProgram& p, const EvalContext& ctx, TrajAdjoint* adj);

/// Central-difference check of the reverse-mode gradient over every binding.
/// Returns the first failure as a Diagnostic(gradcheck), or nullopt.
std::optional<Diagnostic> check_gradients(const GuidanceProgram& p, const EvalContext& ctx,
                                          double tol = 1e-4);

/// Sampler adapter: evaluates the program against a fixed ego plan.
struct DslObjective : GuidanceObjective {
    GuidanceProgram program;
    Trajectory ego_future;  // horizon+1 states, element 0 = current
    WorldParams world;

    double eval(const Scenario& sc, const DecodeOut& dec, TrajAdjoint& adj) override;
};

}  // namespace advscene
