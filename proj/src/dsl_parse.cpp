#include <cctype>
#include <cstdio>
#include <cstdlib>

#include "advscene/dsl.hpp"

namespace advscene {

AdvLevel parse_level(const std::string& name) {
    if (name == "weak") return AdvLevel::Weak;
    if (name == "medium") return AdvLevel::Medium;
    if (name == "strong") return AdvLevel::Strong;
    throw WorldError("unknown adversarial level: " + name);
}

std::string level_name(AdvLevel level) {
    switch (level) {
        case AdvLevel::Weak: return "weak";
        case AdvLevel::Medium: return "medium";
        case AdvLevel::Strong: return "strong";
    }
    throw WorldError("invalid adversarial level");
}

bool WeightRange::contains(double w) const {
    // Strong's upper bound is inclusive so the full documented span is usable
    return w >= lo && (w < hi || (hi == 4.0 && w == 4.0));
}

WeightRange level_weight_range(AdvLevel level) {
    switch (level) {
        case AdvLevel::Weak: return {0.25, 1.0};
        case AdvLevel::Medium: return {1.0, 2.0};
        case AdvLevel::Strong: return {2.0, 4.0};
    }
    throw WorldError("invalid adversarial level");
}

std::string Diagnostic::str() const {
    const char* name = "parse";
    switch (phase) {
        case DslPhase::Parse: name = "parse"; break;
        case DslPhase::Typecheck: name = "typecheck"; break;
        case DslPhase::Eval: name = "eval"; break;
        case DslPhase::Gradcheck: name = "gradcheck"; break;
        case DslPhase::Provider: name = "provider"; break;
    }
    return std::string(name) + ":" + std::to_string(span.line) + ":" + std::to_string(span.col) +
           ": " + message;
}

DslError::DslError(Diagnostic d) : WorldError(d.str()), diag(std::move(d)) {}

bool ast_equal(const Expr& a, const Expr& b) {
    if (a.kind != b.kind || a.args.size() != b.args.size()) return false;
    switch (a.kind) {
        case Expr::Kind::Number:
            if (a.number != b.number) return false;
            break;
        case Expr::Kind::Ident:
        case Expr::Kind::Call:
            if (a.name != b.name) return false;
            break;
        case Expr::Kind::BinOp:
            if (a.op != b.op) return false;
            break;
    }
    for (size_t i = 0; i < a.args.size(); ++i) {
        if (!ast_equal(*a.args[i], *b.args[i])) return false;
    }
    return true;
}

namespace {

constexpr size_t kMaxSource = 64 * 1024;

const char* const kReserved[] = {"level", "weight", "loss", "adv",
                                 "ego",   "others", "weak", "medium",
                                 "strong"};

bool is_reserved(const std::string& s) {
    for (const char* r : kReserved) {
        if (s == r) return true;
    }
    return false;
}

struct Token {
    enum class Kind { Ident, Number, Symbol, End };
    Kind kind = Kind::End;
    std::string text;
    double number = 0.0;
    SourceSpan span;
};

[[noreturn]] void fail(DslPhase phase, SourceSpan span, const std::string& msg) {
    throw DslError({phase, msg, span});
}

class Lexer {
  public:
    explicit Lexer(const std::string& src) : src_(src) {}

    Token next() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) {
            advance();
        }
        Token t;
        t.span = {line_, col_, 1};
        if (pos_ >= src_.size()) {
            t.kind = Token::Kind::End;
            t.text = "end of input";
            return t;
        }
        const char c = src_[pos_];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
                t.text += src_[pos_];
                advance();
            }
            t.kind = Token::Kind::Ident;
            t.span.len = static_cast<int>(t.text.size());
            return t;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && pos_ + 1 < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
            const size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.' ||
                    src_[pos_] == 'e' || src_[pos_] == 'E' ||
                    ((src_[pos_] == '+' || src_[pos_] == '-') && pos_ > start &&
                     (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E')))) {
                t.text += src_[pos_];
                advance();
            }
            char* end = nullptr;
            t.number = std::strtod(t.text.c_str(), &end);
            if (end != t.text.c_str() + t.text.size() || !std::isfinite(t.number)) {
                fail(DslPhase::Parse, t.span, "malformed number literal '" + t.text + "'");
            }
            t.kind = Token::Kind::Number;
            t.span.len = static_cast<int>(t.text.size());
            return t;
        }
        if (std::string("+-*/(),=:").find(c) != std::string::npos) {
            t.kind = Token::Kind::Symbol;
            t.text = std::string(1, c);
            advance();
            return t;
        }
        fail(DslPhase::Parse, t.span, std::string("unexpected character '") + c + "'");
    }

  private:
    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    const std::string& src_;
    size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

class Parser {
  public:
    explicit Parser(const std::string& src) : lex_(src) { shift(); }

    ParsedProgram program() {
        ParsedProgram p;
        expect_ident("level");
        expect_symbol(":");
        const Token lvl = expect(Token::Kind::Ident, "a level name");
        if (lvl.text == "weak") {
            p.level = AdvLevel::Weak;
        } else if (lvl.text == "medium") {
            p.level = AdvLevel::Medium;
        } else if (lvl.text == "strong") {
            p.level = AdvLevel::Strong;
        } else {
            fail(DslPhase::Parse, lvl.span, "expected weak, medium or strong, got '" + lvl.text + "'");
        }
        while (cur_.kind == Token::Kind::Ident && cur_.text == "weight") {
            shift();
            const Token name = expect(Token::Kind::Ident, "a weight name");
            if (is_reserved(name.text)) {
                fail(DslPhase::Parse, name.span,
                     "'" + name.text + "' is reserved and cannot name a weight");
            }
            expect_symbol("=");
            const Token value = expect(Token::Kind::Number, "a number");
            p.weights.emplace_back(name.text, value.number);
        }
        expect_ident("loss");
        expect_symbol("=");
        p.body = expr();
        if (cur_.kind != Token::Kind::End) {
            fail(DslPhase::Parse, cur_.span, "unexpected '" + cur_.text + "' after the loss expression");
        }
        return p;
    }

  private:
    ExprPtr expr() {
        ExprPtr lhs = term();
        while (cur_.kind == Token::Kind::Symbol && (cur_.text == "+" || cur_.text == "-")) {
            const char op = cur_.text[0];
            const SourceSpan span = cur_.span;
            shift();
            ExprPtr rhs = term();
            lhs = binop(op, span, std::move(lhs), std::move(rhs));
        }
        return lhs;
    }

    ExprPtr term() {
        ExprPtr lhs = factor();
        while (cur_.kind == Token::Kind::Symbol && (cur_.text == "*" || cur_.text == "/")) {
            const char op = cur_.text[0];
            const SourceSpan span = cur_.span;
            shift();
            ExprPtr rhs = factor();
            lhs = binop(op, span, std::move(lhs), std::move(rhs));
        }
        return lhs;
    }

    ExprPtr factor() {
        if (cur_.kind == Token::Kind::Number) {
            auto e = std::make_shared<Expr>();
            e->kind = Expr::Kind::Number;
            e->span = cur_.span;
            e->number = cur_.number;
            shift();
            return e;
        }
        if (cur_.kind == Token::Kind::Ident) {
            const Token name = cur_;
            shift();
            if (cur_.kind == Token::Kind::Symbol && cur_.text == "(") {
                shift();
                auto e = std::make_shared<Expr>();
                e->kind = Expr::Kind::Call;
                e->span = name.span;
                e->name = name.text;
                if (!(cur_.kind == Token::Kind::Symbol && cur_.text == ")")) {
                    e->args.push_back(expr());
                    while (cur_.kind == Token::Kind::Symbol && cur_.text == ",") {
                        shift();
                        e->args.push_back(expr());
                    }
                }
                expect_symbol(")");
                return e;
            }
            if (name.text == "level" || name.text == "weight" || name.text == "loss") {
                fail(DslPhase::Parse, name.span,
                     "'" + name.text + "' is reserved and cannot be used as a value");
            }
            auto e = std::make_shared<Expr>();
            e->kind = Expr::Kind::Ident;
            e->span = name.span;
            e->name = name.text;
            return e;
        }
        if (cur_.kind == Token::Kind::Symbol && cur_.text == "(") {
            shift();
            ExprPtr inner = expr();
            expect_symbol(")");
            return inner;
        }
        fail(DslPhase::Parse, cur_.span, "expected an expression, got '" + cur_.text + "'");
    }

    static ExprPtr binop(char op, SourceSpan span, ExprPtr lhs, ExprPtr rhs) {
        auto e = std::make_shared<Expr>();
        e->kind = Expr::Kind::BinOp;
        e->span = span;
        e->op = op;
        e->args = {std::move(lhs), std::move(rhs)};
        return e;
    }

    Token expect(Token::Kind kind, const std::string& what) {
        if (cur_.kind != kind) {
            fail(DslPhase::Parse, cur_.span, "expected " + what + ", got '" + cur_.text + "'");
        }
        Token t = cur_;
        shift();
        return t;
    }

    void expect_ident(const std::string& word) {
        if (cur_.kind != Token::Kind::Ident || cur_.text != word) {
            fail(DslPhase::Parse, cur_.span, "expected '" + word + "', got '" + cur_.text + "'");
        }
        shift();
    }

    void expect_symbol(const std::string& sym) {
        if (cur_.kind != Token::Kind::Symbol || cur_.text != sym) {
            fail(DslPhase::Parse, cur_.span, "expected '" + sym + "', got '" + cur_.text + "'");
        }
        shift();
    }

    void shift() { cur_ = lex_.next(); }

    Lexer lex_;
    Token cur_;
};

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    if (std::strtod(buf, nullptr) != v) std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

int precedence(char op) { return (op == '+' || op == '-') ? 1 : 2; }

void print_expr(const Expr& e, std::string& out, int parent_prec, bool rhs) {
    switch (e.kind) {
        case Expr::Kind::Number:
            out += format_number(e.number);
            return;
        case Expr::Kind::Ident:
            out += e.name;
            return;
        case Expr::Kind::Call:
            out += e.name;
            out += '(';
            for (size_t i = 0; i < e.args.size(); ++i) {
                if (i) out += ", ";
                print_expr(*e.args[i], out, 0, false);
            }
            out += ')';
            return;
        case Expr::Kind::BinOp: {
            const int prec = precedence(e.op);
            // - and / are left-associative, so a right child at equal
            // precedence needs parentheses to survive re-parsing
            const bool parens = prec < parent_prec || (prec == parent_prec && rhs);
            if (parens) out += '(';
            print_expr(*e.args[0], out, prec, false);
            out += ' ';
            out += e.op;
            out += ' ';
            print_expr(*e.args[1], out, prec, true);
            if (parens) out += ')';
            return;
        }
    }
}

}  // namespace

ParsedProgram parse(const std::string& source) {
    if (source.size() > kMaxSource) {
        fail(DslPhase::Parse, {1, 1, 0}, "source exceeds 64 KiB");
    }
    return Parser(source).program();
}

std::string print_program(const GuidanceProgram& p) {
    std::string out = "level: " + level_name(p.level) + "\n";
    for (const auto& [name, value] : p.weights) {
        out += "weight " + name + " = " + format_number(value) + "\n";
    }
    out += "loss = ";
    print_expr(*p.body, out, 0, false);
    out += "\n";
    return out;
}

}  // namespace advscene
