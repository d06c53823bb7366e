#include <cmath>
#include <unordered_map>

#include "advscene/dsl.hpp"

namespace advscene {

namespace {

constexpr double kTemp = 10.0;  // smooth-max and softplus temperature
constexpr double kTtcCap = 10.0;

[[noreturn]] void fail(SourceSpan span, const std::string& msg) {
    throw DslError({DslPhase::Eval, msg, span});
}

double softplus(double x) {
    if (x * kTemp > 30.0) return x;
    return std::log1p(std::exp(kTemp * x)) / kTemp;
}

double sigmoid_t(double x) { return 1.0 / (1.0 + std::exp(-kTemp * x)); }

/// Scalar values are a single entry; series carry one entry per future step.
struct Value {
    bool series = false;
    std::vector<double> v;

    double at(int t) const { return series ? v[t] : v[0]; }
};

struct AgentRef {
    bool is_ego = false;
    std::vector<int> idx;  // decode indices; empty for ego
};

class Evaluator {
  public:
    Evaluator(const GuidanceProgram& p, const EvalContext& ctx, TrajAdjoint* adj)
        : p_(p), ctx_(ctx), adj_(adj) {
        if (!ctx.sc || !ctx.dec || !ctx.ego) throw WorldError("evaluate: null context binding");
        const Scenario& sc = *ctx.sc;
        const DecodeOut& dec = *ctx.dec;
        horizon_ = static_cast<int>(ctx.ego->size()) - 1;
        if (horizon_ < 1) throw WorldError("evaluate: ego plan too short");
        if (dec.futures.empty()) throw WorldError("evaluate: no decoded agents");
        for (size_t ai = 0; ai < dec.futures.size(); ++ai) {
            if (static_cast<int>(dec.futures[ai].size()) != horizon_ + 1 ||
                static_cast<int>(dec.actions[ai].size()) != horizon_) {
                throw WorldError("evaluate: decoded horizon does not match the ego plan");
            }
        }
        adv_idx_ = -1;
        for (size_t ai = 0; ai < dec.agent_ids.size(); ++ai) {
            if (dec.agent_ids[ai] == sc.adv_id) {
                adv_idx_ = static_cast<int>(ai);
            } else {
                other_idx_.push_back(static_cast<int>(ai));
            }
        }
        if (adv_idx_ < 0) throw WorldError("evaluate: adversary missing from decoded agents");
        for (const auto& [name, value] : p.weights) weights_[name] = value;
        if (adj_) {
            adj_->dstate.resize(dec.futures.size());
            adj_->daction.resize(dec.futures.size());
            for (size_t ai = 0; ai < dec.futures.size(); ++ai) {
                adj_->dstate[ai].resize(horizon_ + 1, {0, 0, 0, 0});
                adj_->daction[ai].resize(horizon_, {0, 0});
            }
        }
    }

    double run() {
        const Value out = forward(*p_.body);
        if (adj_) {
            Value seed;
            seed.series = false;
            seed.v = {1.0};
            backward(*p_.body, seed);
        }
        return out.v[0];
    }

  private:
    // ------------------------------------------------------------- forward ---

    const Value& forward(const Expr& e) {
        auto [it, fresh] = vals_.try_emplace(&e);
        if (!fresh) return it->second;
        Value& out = it->second;
        switch (e.kind) {
            case Expr::Kind::Number:
                out.v = {e.number};
                break;
            case Expr::Kind::Ident:
                out.v = {weights_.at(e.name)};
                break;
            case Expr::Kind::BinOp: {
                const Value& l = forward(*e.args[0]);
                const Value& r = forward(*e.args[1]);
                out.series = l.series || r.series;
                out.v.resize(out.series ? horizon_ : 1);
                for (int t = 0; t < static_cast<int>(out.v.size()); ++t) {
                    const double a = l.at(t), b = r.at(t);
                    switch (e.op) {
                        case '+': out.v[t] = a + b; break;
                        case '-': out.v[t] = a - b; break;
                        case '*': out.v[t] = a * b; break;
                        case '/': out.v[t] = a / b; break;
                    }
                }
                break;
            }
            case Expr::Kind::Call:
                out = call(e);
                break;
        }
        for (double v : out.v) {
            if (!std::isfinite(v)) {
                fail(e.span, "non-finite value produced by '" + describe(e) + "'");
            }
        }
        return out;
    }

    static std::string describe(const Expr& e) {
        switch (e.kind) {
            case Expr::Kind::Number: return "literal";
            case Expr::Kind::Ident: return e.name;
            case Expr::Kind::Call: return e.name;
            case Expr::Kind::BinOp: return std::string(1, e.op);
        }
        return "?";
    }

    Value call(const Expr& e) {
        const std::string& n = e.name;
        if (n == "sum_t" || n == "min_t" || n == "max_t") {
            const Value& s = forward(*e.args[0]);
            Value out;
            if (n == "sum_t") {
                double acc = 0.0;
                for (double v : s.v) acc += v;
                out.v = {acc};
            } else {
                const double sign = n == "max_t" ? 1.0 : -1.0;
                double m = sign * s.v[0];
                for (double v : s.v) m = std::max(m, sign * v);
                double z = 0.0;
                for (double v : s.v) z += std::exp(kTemp * (sign * v - m));
                out.v = {sign * (m + std::log(z) / kTemp)};
            }
            return out;
        }
        if (n == "relu" || n == "neg") {
            const Value& x = forward(*e.args[0]);
            Value out;
            out.series = x.series;
            out.v.resize(x.v.size());
            for (size_t t = 0; t < x.v.size(); ++t) {
                out.v[t] = n == "neg" ? -x.v[t] : std::max(0.0, x.v[t]);
            }
            return out;
        }
        if (n == "clip") {
            const Value& x = forward(*e.args[0]);
            const double lo = forward(*e.args[1]).v[0];
            const double hi = forward(*e.args[2]).v[0];
            Value out;
            out.series = x.series;
            out.v.resize(x.v.size());
            for (size_t t = 0; t < x.v.size(); ++t) out.v[t] = clamp(x.v[t], lo, hi);
            return out;
        }
        if (n == "adv_collision") {
            Value out;
            out.v = {0.0};
            const auto [fa, fe] = adv_ego_footprints();
            const double p =
                fa.disc_radius() + fe.disc_radius() + ctx_.world.d_buffer;
            for (int t = 1; t <= horizon_; ++t) {
                const double d = adv_ego_dist(t);
                out.v[0] += std::max(0.0, d - p);
                if (t == horizon_) out.v[0] += d;
            }
            return out;
        }
        // per-step trajectory builtins
        Value out;
        out.series = true;
        out.v.assign(horizon_, 0.0);
        const AgentRef subject = resolve(*e.args[0]);
        const AgentRef other = e.args.size() > 1 ? resolve(*e.args[1]) : AgentRef{};
        for (int t = 1; t <= horizon_; ++t) {
            double acc = 0.0;
            int count = 0;
            for (int i : subject.idx) {
                if (e.args.size() == 1) {
                    acc += unary_value(n, i, t);
                    ++count;
                } else if (other.is_ego) {
                    acc += pair_value(n, i, ego_state(t), ego_footprint(), t);
                    ++count;
                } else {
                    for (int j : other.idx) {
                        if (j == i) continue;
                        acc += pair_value(n, i, agent_state(j, t), agent_footprint(j), t);
                        ++count;
                    }
                }
            }
            out.v[t - 1] = count ? acc / count : 0.0;
        }
        return out;
    }

    // ------------------------------------------------------------ backward ---

    void backward(const Expr& e, const Value& a) {
        switch (e.kind) {
            case Expr::Kind::Number:
            case Expr::Kind::Ident:
                return;
            case Expr::Kind::BinOp: {
                const Value& l = vals_.at(e.args[0].get());
                const Value& r = vals_.at(e.args[1].get());
                Value dl, dr;
                dl.series = l.series;
                dl.v.assign(l.v.size(), 0.0);
                dr.series = r.series;
                dr.v.assign(r.v.size(), 0.0);
                for (int t = 0; t < static_cast<int>(a.v.size()); ++t) {
                    const double g = a.v[t];
                    const int tl = l.series ? t : 0;
                    const int tr = r.series ? t : 0;
                    switch (e.op) {
                        case '+':
                            dl.v[tl] += g;
                            dr.v[tr] += g;
                            break;
                        case '-':
                            dl.v[tl] += g;
                            dr.v[tr] -= g;
                            break;
                        case '*':
                            dl.v[tl] += g * r.at(t);
                            dr.v[tr] += g * l.at(t);
                            break;
                        case '/':
                            dl.v[tl] += g / r.at(t);
                            dr.v[tr] -= g * l.at(t) / (r.at(t) * r.at(t));
                            break;
                    }
                }
                backward(*e.args[0], dl);
                backward(*e.args[1], dr);
                return;
            }
            case Expr::Kind::Call:
                call_backward(e, a);
                return;
        }
    }

    void call_backward(const Expr& e, const Value& a) {
        const std::string& n = e.name;
        if (n == "sum_t") {
            const Value& s = vals_.at(e.args[0].get());
            Value da;
            da.series = true;
            da.v.assign(s.v.size(), a.v[0]);
            backward(*e.args[0], da);
            return;
        }
        if (n == "min_t" || n == "max_t") {
            const Value& s = vals_.at(e.args[0].get());
            const double sign = n == "max_t" ? 1.0 : -1.0;
            double m = sign * s.v[0];
            for (double v : s.v) m = std::max(m, sign * v);
            double z = 0.0;
            for (double v : s.v) z += std::exp(kTemp * (sign * v - m));
            Value da;
            da.series = true;
            da.v.resize(s.v.size());
            for (size_t t = 0; t < s.v.size(); ++t) {
                da.v[t] = a.v[0] * std::exp(kTemp * (sign * s.v[t] - m)) / z;
            }
            backward(*e.args[0], da);
            return;
        }
        if (n == "relu") {
            const Value& x = vals_.at(e.args[0].get());
            Value da;
            da.series = x.series;
            da.v.resize(x.v.size());
            for (size_t t = 0; t < x.v.size(); ++t) da.v[t] = x.v[t] > 0.0 ? a.v[t] : 0.0;
            backward(*e.args[0], da);
            return;
        }
        if (n == "neg") {
            const Value& x = vals_.at(e.args[0].get());
            Value da;
            da.series = x.series;
            da.v.resize(x.v.size());
            for (size_t t = 0; t < x.v.size(); ++t) da.v[t] = -a.v[t];
            backward(*e.args[0], da);
            return;
        }
        if (n == "clip") {
            const Value& x = vals_.at(e.args[0].get());
            const double lo = vals_.at(e.args[1].get()).v[0];
            const double hi = vals_.at(e.args[2].get()).v[0];
            Value dx, dlo, dhi;
            dx.series = x.series;
            dx.v.assign(x.v.size(), 0.0);
            dlo.v = {0.0};
            dhi.v = {0.0};
            for (size_t t = 0; t < x.v.size(); ++t) {
                if (x.v[t] < lo) {
                    dlo.v[0] += a.v[t];
                } else if (x.v[t] > hi) {
                    dhi.v[0] += a.v[t];
                } else {
                    dx.v[t] += a.v[t];
                }
            }
            backward(*e.args[0], dx);
            backward(*e.args[1], dlo);
            backward(*e.args[2], dhi);
            return;
        }
        if (!adj_) return;
        if (n == "adv_collision") {
            const auto [fa, fe] = adv_ego_footprints();
            const double p =
                fa.disc_radius() + fe.disc_radius() + ctx_.world.d_buffer;
            for (int t = 1; t <= horizon_; ++t) {
                const double d = adv_ego_dist(t);
                if (d < 1e-12) continue;
                double w = d > p ? 1.0 : 0.0;
                if (t == horizon_) w += 1.0;
                if (w == 0.0) continue;
                const AgentState& sa = agent_state(adv_idx_, t);
                const AgentState& se = ego_state(t);
                add_pos_adj(adv_idx_, t, a.v[0] * w * (sa.x - se.x) / d,
                            a.v[0] * w * (sa.y - se.y) / d);
            }
            return;
        }
        const AgentRef subject = resolve(*e.args[0]);
        const AgentRef other = e.args.size() > 1 ? resolve(*e.args[1]) : AgentRef{};
        for (int t = 1; t <= horizon_; ++t) {
            int count = 0;
            if (e.args.size() == 1) {
                count = static_cast<int>(subject.idx.size());
            } else if (other.is_ego) {
                count = static_cast<int>(subject.idx.size());
            } else {
                for (int i : subject.idx) {
                    for (int j : other.idx) count += (j != i);
                }
            }
            if (count == 0) continue;
            const double g = a.v[t - 1] / count;
            if (g == 0.0) continue;
            for (int i : subject.idx) {
                if (e.args.size() == 1) {
                    unary_grad(n, i, t, g);
                } else if (other.is_ego) {
                    pair_grad(n, i, ego_state(t), ego_footprint(), t, g);
                } else {
                    for (int j : other.idx) {
                        if (j == i) continue;
                        pair_grad(n, i, agent_state(j, t), agent_footprint(j), t, g);
                    }
                }
            }
        }
    }

    // ------------------------------------------------------------ builtins ---

    double unary_value(const std::string& n, int i, int t) {
        const AgentState& st = agent_state(i, t);
        if (n == "speed") return st.speed;
        if (n == "lon_accel") return ctx_.dec->actions[i][t - 1].accel;
        if (n == "lat_accel") return st.speed * ctx_.dec->actions[i][t - 1].yaw_rate;
        if (n == "env_coll_pens") return env_coll_pens(st.pos(), agent_footprint(i), *ctx_.sc->map);
        throw WorldError("evaluate: unhandled builtin " + n);
    }

    void unary_grad(const std::string& n, int i, int t, double g) {
        if (n == "speed") {
            add_state_adj(i, t, 3, g);
        } else if (n == "lon_accel") {
            add_action_adj(i, t - 1, 0, g);
        } else if (n == "lat_accel") {
            const AgentState& st = agent_state(i, t);
            add_state_adj(i, t, 3, g * ctx_.dec->actions[i][t - 1].yaw_rate);
            add_action_adj(i, t - 1, 1, g * st.speed);
        } else if (n == "env_coll_pens") {
            const Vec2 grad =
                env_coll_pens_grad(agent_state(i, t).pos(), agent_footprint(i), *ctx_.sc->map);
            add_pos_adj(i, t, g * grad.x, g * grad.y);
        }
    }

    double pair_value(const std::string& n, int i, const AgentState& sj,
                      const VehicleFootprint& fj, int t) {
        const AgentState& si = agent_state(i, t);
        if (n == "veh_coll_pens") {
            return veh_coll_pens(si.pos(), sj.pos(), agent_footprint(i), fj, ctx_.world.d_buffer);
        }
        if (n == "dist") return std::hypot(si.x - sj.x, si.y - sj.y);
        if (n == "heading_diff") return angle_diff(si.heading, sj.heading);
        if (n == "ttc") return ttc_value(si, agent_footprint(i), sj, fj).first;
        throw WorldError("evaluate: unhandled builtin " + n);
    }

    void pair_grad(const std::string& n, int i, const AgentState& sj, const VehicleFootprint& fj,
                   int t, double g) {
        const AgentState& si = agent_state(i, t);
        if (n == "veh_coll_pens") {
            const Vec2 grad =
                veh_coll_pens_grad(si.pos(), sj.pos(), agent_footprint(i), fj, ctx_.world.d_buffer);
            add_pos_adj(i, t, g * grad.x, g * grad.y);
        } else if (n == "dist") {
            const double d = std::hypot(si.x - sj.x, si.y - sj.y);
            if (d > 1e-12) add_pos_adj(i, t, g * (si.x - sj.x) / d, g * (si.y - sj.y) / d);
        } else if (n == "heading_diff") {
            add_state_adj(i, t, 2, g);
        } else if (n == "ttc") {
            const auto [value, grad] = ttc_value(si, agent_footprint(i), sj, fj);
            (void)value;
            add_pos_adj(i, t, g * grad[0], g * grad[1]);
            add_state_adj(i, t, 2, g * grad[2]);
            add_state_adj(i, t, 3, g * grad[3]);
        }
    }

    /// Constant-velocity time until the two discs touch, softplus-smoothed in
    /// the closing speed and capped. Returns {value, d/d(x,y,heading,speed)_i}.
    static std::pair<double, std::array<double, 4>> ttc_value(const AgentState& si,
                                                              const VehicleFootprint& fi,
                                                              const AgentState& sj,
                                                              const VehicleFootprint& fj) {
        std::array<double, 4> grad{0, 0, 0, 0};
        const double rx = sj.x - si.x, ry = sj.y - si.y;
        const double d = std::hypot(rx, ry);
        if (d < 1e-9) return {0.0, grad};
        const double p = fi.disc_radius() + fj.disc_radius();
        const double gap = d - p;
        if (gap <= 0.0) return {0.0, grad};

        const double ux = std::cos(si.heading), uy = std::sin(si.heading);
        const double vrx = sj.speed * std::cos(sj.heading) - si.speed * ux;
        const double vry = sj.speed * std::sin(sj.heading) - si.speed * uy;
        const double closing = -(rx * vrx + ry * vry) / d;
        const double sp = softplus(closing);
        if (sp * kTtcCap <= gap) return {kTtcCap, grad};

        const double raw = gap / sp;
        // d(gap)/d(pos_i) = -r/d; d(closing)/d(pos_i) = v_rel/d + closing r/d^2
        const double dgap_x = -rx / d, dgap_y = -ry / d;
        const double dc_x = vrx / d + closing * rx / (d * d);
        const double dc_y = vry / d + closing * ry / (d * d);
        const double dc_h = si.speed * (rx * -uy + ry * ux) / d;
        const double dc_v = (rx * ux + ry * uy) / d;
        const double draw_dgap = 1.0 / sp;
        const double draw_dc = -gap * sigmoid_t(closing) / (sp * sp);
        grad[0] = draw_dgap * dgap_x + draw_dc * dc_x;
        grad[1] = draw_dgap * dgap_y + draw_dc * dc_y;
        grad[2] = draw_dc * dc_h;
        grad[3] = draw_dc * dc_v;
        return {raw, grad};
    }

    // ------------------------------------------------------------- helpers ---

    AgentRef resolve(const Expr& e) const {
        AgentRef ref;
        if (e.name == "ego") {
            ref.is_ego = true;
        } else if (e.name == "adv") {
            ref.idx = {adv_idx_};
        } else {
            ref.idx = other_idx_;
        }
        return ref;
    }

    const AgentState& agent_state(int i, int t) const { return ctx_.dec->futures[i].states[t]; }
    const AgentState& ego_state(int t) const { return ctx_.ego->states[t]; }
    const VehicleFootprint& agent_footprint(int i) const {
        return ctx_.sc->agent(ctx_.dec->agent_ids[i]).footprint;
    }
    const VehicleFootprint& ego_footprint() const { return ctx_.sc->ego().footprint; }

    std::pair<VehicleFootprint, VehicleFootprint> adv_ego_footprints() const {
        return {agent_footprint(adv_idx_), ego_footprint()};
    }

    double adv_ego_dist(int t) const {
        const AgentState& sa = agent_state(adv_idx_, t);
        const AgentState& se = ego_state(t);
        return std::hypot(sa.x - se.x, sa.y - se.y);
    }

    void add_state_adj(int i, int t, int comp, double v) {
        if (adj_) adj_->dstate[i][t][comp] += v;
    }
    void add_action_adj(int i, int t, int comp, double v) {
        if (adj_) adj_->daction[i][t][comp] += v;
    }
    void add_pos_adj(int i, int t, double gx, double gy) {
        if (adj_) {
            adj_->dstate[i][t][0] += gx;
            adj_->dstate[i][t][1] += gy;
        }
    }

    const GuidanceProgram& p_;
    const EvalContext& ctx_;
    TrajAdjoint* adj_;
    int horizon_ = 0;
    int adv_idx_ = -1;
    std::vector<int> other_idx_;
    std::unordered_map<std::string, double> weights_;
    std::unordered_map<const Expr*, Value> vals_;
};

}  // namespace

double evaluate(const GuidanceProgram& p, const EvalContext& ctx, TrajAdjoint* adj) {
    return Evaluator(p, ctx, adj).run();
}

std::optional<Diagnostic> check_gradients(const GuidanceProgram& p, const EvalContext& ctx,
                                          double tol) {
    TrajAdjoint adj;
    try {
        evaluate(p, ctx, &adj);
    } catch (const DslError& e) {
        return e.diag;
    }

    DecodeOut probe = *ctx.dec;
    EvalContext pctx = ctx;
    pctx.dec = &probe;
    const double h = 1e-5;
    const int T = static_cast<int>(ctx.ego->size()) - 1;

    auto fd = [&](double* slot) {
        const double keep = *slot;
        *slot = keep + h;
        const double up = evaluate(p, pctx, nullptr);
        *slot = keep - h;
        const double dn = evaluate(p, pctx, nullptr);
        *slot = keep;
        return (up - dn) / (2.0 * h);
    };
    auto mismatch = [&](double got, double want) {
        const double scale = std::max({std::abs(got), std::abs(want), 1e-6});
        return std::abs(got - want) > tol * scale && std::abs(got - want) > 1e-7;
    };

    for (size_t ai = 0; ai < probe.futures.size(); ++ai) {
        for (int t = 1; t <= T; ++t) {
            AgentState& st = probe.futures[ai].states[t];
            double* slots[4] = {&st.x, &st.y, &st.heading, &st.speed};
            for (int c = 0; c < 4; ++c) {
                const double want = fd(slots[c]);
                if (mismatch(adj.dstate[ai][t][c], want)) {
                    return Diagnostic{DslPhase::Gradcheck,
                                      "gradient mismatch on agent " +
                                          std::to_string(probe.agent_ids[ai]) + " state " +
                                          std::to_string(t) + " component " + std::to_string(c) +
                                          ": got " + std::to_string(adj.dstate[ai][t][c]) +
                                          ", finite difference " + std::to_string(want),
                                      p.body->span};
                }
            }
        }
        for (int t = 0; t < T; ++t) {
            Action& act = probe.actions[ai][t];
            double* slots[2] = {&act.accel, &act.yaw_rate};
            for (int c = 0; c < 2; ++c) {
                const double want = fd(slots[c]);
                if (mismatch(adj.daction[ai][t][c], want)) {
                    return Diagnostic{DslPhase::Gradcheck,
                                      "gradient mismatch on agent " +
                                          std::to_string(probe.agent_ids[ai]) + " action " +
                                          std::to_string(t) + " component " + std::to_string(c) +
                                          ": got " + std::to_string(adj.daction[ai][t][c]) +
                                          ", finite difference " + std::to_string(want),
                                      p.body->span};
                }
            }
        }
    }
    return std::nullopt;
}

double DslObjective::eval(const Scenario& sc, const DecodeOut& dec, TrajAdjoint& adj) {
    EvalContext ctx;
    ctx.sc = &sc;
    ctx.dec = &dec;
    ctx.ego = &ego_future;
    ctx.world = world;
    return evaluate(program, ctx, &adj);
}

}  // namespace advscene
