#include <map>

#include "advscene/dsl.hpp"

namespace advscene {

namespace {

[[noreturn]] void fail(SourceSpan span, const std::string& msg) {
    throw DslError({DslPhase::Typecheck, msg, span});
}

enum class Ty { Scalar, Series, Agent };

// parameter kinds: 'a' differentiation subject, 'b' detached agent,
// 'v' scalar-or-series (shape preserved), 's' scalar, 'q' series
struct BuiltinSig {
    const char* params;
    char result;  // 's' scalar, 'q' series, 'v' same shape as the first 'v' arg
};

const std::map<std::string, BuiltinSig>& builtins() {
    static const std::map<std::string, BuiltinSig> table = {
        {"veh_coll_pens", {"ab", 'q'}}, {"env_coll_pens", {"a", 'q'}},
        {"dist", {"ab", 'q'}},          {"speed", {"a", 'q'}},
        {"lon_accel", {"a", 'q'}},      {"lat_accel", {"a", 'q'}},
        {"heading_diff", {"ab", 'q'}},  {"ttc", {"ab", 'q'}},
        {"adv_collision", {"", 's'}},   {"sum_t", {"q", 's'}},
        {"min_t", {"q", 's'}},          {"max_t", {"q", 's'}},
        {"clip", {"vss", 'v'}},         {"relu", {"v", 'v'}},
        {"neg", {"v", 'v'}},
    };
    return table;
}

class Checker {
  public:
    explicit Checker(const ParsedProgram& p) : parsed_(p) {
        const WeightRange range = level_weight_range(p.level);
        for (const auto& [name, value] : p.weights) {
            if (builtins().count(name)) {
                fail({}, "weight '" + name + "' shadows a builtin function");
            }
            if (!weights_.emplace(name, value).second) {
                fail({}, "weight '" + name + "' declared twice");
            }
            if (!range.contains(value)) {
                fail({}, "weight " + name + " = " + std::to_string(value) + " outside the " +
                             level_name(p.level) + " range [" + std::to_string(range.lo) + ", " +
                             std::to_string(range.hi) + ")");
            }
        }
    }

    GuidanceProgram run() {
        GuidanceProgram out;
        out.level = parsed_.level;
        out.weights = parsed_.weights;
        out.body = parsed_.body;

        if (check(*parsed_.body) != Ty::Scalar) {
            fail(parsed_.body->span,
                 "loss must be a scalar; reduce series with sum_t, min_t or max_t");
        }
        for (const Expr* term : flatten_terms(parsed_.body.get())) {
            bool adv = false, others = false;
            mentions(*term, adv, others);
            if (adv && others) {
                fail(term->span,
                     "term couples adv with others; gradients route to one target per term");
            }
            out.term_routes.emplace_back(term,
                                         adv ? Route::Adv : (others ? Route::Others : Route::None));
        }
        return out;
    }

  private:
    Ty check(const Expr& e) {
        switch (e.kind) {
            case Expr::Kind::Number:
                return Ty::Scalar;
            case Expr::Kind::Ident:
                if (e.name == "adv" || e.name == "ego" || e.name == "others") return Ty::Agent;
                if (weights_.count(e.name)) return Ty::Scalar;
                fail(e.span, "unknown identifier '" + e.name + "'");
            case Expr::Kind::BinOp: {
                const Ty l = value_type(*e.args[0]);
                const Ty r = value_type(*e.args[1]);
                return (l == Ty::Series || r == Ty::Series) ? Ty::Series : Ty::Scalar;
            }
            case Expr::Kind::Call:
                return check_call(e);
        }
        fail(e.span, "malformed expression node");
    }

    Ty value_type(const Expr& e) {
        const Ty t = check(e);
        if (t == Ty::Agent) {
            fail(e.span, "agent reference '" + e.name + "' used as a value");
        }
        return t;
    }

    Ty check_call(const Expr& e) {
        const auto it = builtins().find(e.name);
        if (it == builtins().end()) {
            if (weights_.count(e.name)) {
                fail(e.span, "'" + e.name + "' is a weight, not a function");
            }
            fail(e.span, "unknown function '" + e.name + "'");
        }
        const BuiltinSig& sig = it->second;
        const size_t arity = std::string(sig.params).size();
        if (e.args.size() != arity) {
            fail(e.span, e.name + " takes " + std::to_string(arity) + " argument" +
                             (arity == 1 ? "" : "s") + ", got " + std::to_string(e.args.size()));
        }
        Ty first_value = Ty::Scalar;
        for (size_t i = 0; i < arity; ++i) {
            const Expr& arg = *e.args[i];
            switch (sig.params[i]) {
                case 'a': {
                    require_agent(arg);
                    if (arg.name == "ego") {
                        fail(arg.span, "ego is the attack target and cannot be differentiated; "
                                       "pass it as the second agent argument");
                    }
                    break;
                }
                case 'b':
                    require_agent(arg);
                    break;
                case 's':
                    if (value_type(arg) != Ty::Scalar) {
                        fail(arg.span, "argument " + std::to_string(i + 1) + " of " + e.name +
                                           " must be a scalar");
                    }
                    break;
                case 'q':
                    if (value_type(arg) != Ty::Series) {
                        fail(arg.span, "argument " + std::to_string(i + 1) + " of " + e.name +
                                           " must be a per-step series");
                    }
                    break;
                case 'v':
                    first_value = value_type(arg);
                    break;
            }
        }
        if (e.name == "clip" && e.args[1]->kind == Expr::Kind::Number &&
            e.args[2]->kind == Expr::Kind::Number && e.args[1]->number > e.args[2]->number) {
            fail(e.span, "clip lower bound exceeds upper bound");
        }
        if (sig.result == 's') return Ty::Scalar;
        if (sig.result == 'q') return Ty::Series;
        return first_value;
    }

    void require_agent(const Expr& e) {
        if (e.kind != Expr::Kind::Ident ||
            (e.name != "adv" && e.name != "ego" && e.name != "others")) {
            fail(e.span, "expected an agent reference (adv, ego or others)");
        }
    }

    static std::vector<const Expr*> flatten_terms(const Expr* e) {
        std::vector<const Expr*> out;
        while (e->kind == Expr::Kind::BinOp && (e->op == '+' || e->op == '-')) {
            out.push_back(e->args[1].get());
            e = e->args[0].get();
        }
        out.push_back(e);
        std::reverse(out.begin(), out.end());
        return out;
    }

    static void mentions(const Expr& e, bool& adv, bool& others) {
        if (e.kind == Expr::Kind::Ident) {
            adv = adv || e.name == "adv";
            others = others || e.name == "others";
        }
        if (e.kind == Expr::Kind::Call && e.name == "adv_collision") adv = true;
        for (const auto& a : e.args) mentions(*a, adv, others);
    }

    const ParsedProgram& parsed_;
    std::map<std::string, double> weights_;
};

}  // namespace

GuidanceProgram typecheck(const ParsedProgram& parsed) { return Checker(parsed).run(); }

GuidanceProgram compile(const std::string& source) { return typecheck(parse(source)); }

}  // namespace advscene
