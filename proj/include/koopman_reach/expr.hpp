// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "koopman_reach/errors.hpp"
#include "koopman_reach/interval.hpp"

namespace koopman_reach {

enum class ExprKind : std::uint8_t { constant, variable, time, add, mul, pow, sin, cos };

/// Immutable expression over state variables x_i, the time symbol t and
/// real constants. Nodes are hash-consed, so structurally identical
/// expressions share one node and compare equal by identity.
class Expr {
public:
    struct Node {
        ExprKind kind = ExprKind::constant;
        double value = 0.0;
        int index = 0;  // variable index, or exponent for pow
        std::vector<Expr> args;
        std::size_t hash = 0;
    };

    Expr() : Expr(constant(0.0)) {}

    static Expr constant(double v);
    static Expr variable(int i);
    static Expr time();
    static Expr sum(std::vector<Expr> terms);
    static Expr product(std::vector<Expr> factors);
    static Expr power(const Expr& base, int k);
    static Expr sin(const Expr& a);
    static Expr cos(const Expr& a);

    ExprKind kind() const { return node_->kind; }
    double value() const { return node_->value; }
    int index() const { return node_->index; }
    int exponent() const { return node_->index; }
    const std::vector<Expr>& args() const { return node_->args; }
    std::size_t hash() const { return node_->hash; }
    const Node* id() const { return node_.get(); }

    bool is_constant() const { return kind() == ExprKind::constant; }
    bool is_constant(double v) const { return is_constant() && value() == v; }

    double eval(std::span<const double> x, double t = 0.0) const;
    Interval eval(std::span<const Interval> x, const Interval& t = Interval::point(0.0)) const;

    friend bool operator==(const Expr& a, const Expr& b) { return a.node_ == b.node_; }

private:
    explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    static Expr intern(Node n);

    std::shared_ptr<const Node> node_;
};

inline Expr operator+(const Expr& a, const Expr& b) { return Expr::sum({a, b}); }
inline Expr operator*(const Expr& a, const Expr& b) { return Expr::product({a, b}); }
inline Expr operator-(const Expr& a) { return Expr::product({Expr::constant(-1.0), a}); }
inline Expr operator-(const Expr& a, const Expr& b) { return a + (-b); }
inline Expr operator*(double c, const Expr& a) { return Expr::constant(c) * a; }
inline Expr operator+(const Expr& a, double c) { return a + Expr::constant(c); }
inline Expr pow(const Expr& a, int k) { return Expr::power(a, k); }
inline Expr sin(const Expr& a) { return Expr::sin(a); }
inline Expr cos(const Expr& a) { return Expr::cos(a); }

namespace detail {

struct InternKey {
    ExprKind kind;
    std::uint64_t value_bits;
    int index;
    std::vector<const Expr::Node*> args;
    bool operator==(const InternKey&) const = default;
};

struct InternKeyHash {
    std::size_t operator()(const InternKey& k) const {
        std::size_t h = std::hash<std::uint64_t>{}(k.value_bits) ^ (static_cast<std::size_t>(k.kind) * 0x9e3779b97f4a7c15ULL);
        h ^= std::hash<int>{}(k.index) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        for (const auto* a : k.args) h ^= std::hash<const void*>{}(a) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        return h;
    }
};

class InternTable {
public:
    static InternTable& instance() {
        static InternTable table;
        return table;
    }

    std::shared_ptr<const Expr::Node> get(Expr::Node n) {
        InternKey key{n.kind, std::bit_cast<std::uint64_t>(n.value), n.index, {}};
        key.args.reserve(n.args.size());
        for (const auto& a : n.args) key.args.push_back(a.id());
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = table_.find(key);
        if (it != table_.end()) {
            if (auto sp = it->second.lock()) return sp;
        }
        n.hash = InternKeyHash{}(key);
        auto sp = std::make_shared<const Expr::Node>(std::move(n));
        table_[std::move(key)] = sp;
        if (table_.size() > sweep_at_) sweep();
        return sp;
    }

private:
    void sweep() {
        for (auto it = table_.begin(); it != table_.end();) {
            if (it->second.expired()) it = table_.erase(it);
            else ++it;
        }
        sweep_at_ = std::max<std::size_t>(1024, 2 * table_.size());
    }

    std::mutex mutex_;
    std::unordered_map<InternKey, std::weak_ptr<const Expr::Node>, InternKeyHash> table_;
    std::size_t sweep_at_ = 1024;
};

inline int kind_rank(ExprKind k) {
    switch (k) {
        case ExprKind::constant: return 0;
        case ExprKind::variable: return 1;
        case ExprKind::time: return 2;
        case ExprKind::pow: return 3;
        case ExprKind::mul: return 4;
        case ExprKind::add: return 5;
        case ExprKind::sin: return 6;
        case ExprKind::cos: return 7;
    }
    return 8;
}

// Deterministic structural order used to canonicalize argument lists.
inline int compare(const Expr& a, const Expr& b) {
    if (a == b) return 0;
    const int ra = kind_rank(a.kind());
    const int rb = kind_rank(b.kind());
    if (ra != rb) return ra < rb ? -1 : 1;
    switch (a.kind()) {
        case ExprKind::constant: return a.value() < b.value() ? -1 : (a.value() > b.value() ? 1 : 0);
        case ExprKind::variable: return a.index() < b.index() ? -1 : (a.index() > b.index() ? 1 : 0);
        case ExprKind::time: return 0;
        case ExprKind::pow: {
            const int c = compare(a.args()[0], b.args()[0]);
            if (c != 0) return c;
            return a.exponent() < b.exponent() ? -1 : (a.exponent() > b.exponent() ? 1 : 0);
        }
        default: {
            const auto& x = a.args();
            const auto& y = b.args();
            for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) {
                const int c = compare(x[i], y[i]);
                if (c != 0) return c;
            }
            return x.size() < y.size() ? -1 : (x.size() > y.size() ? 1 : 0);
        }
    }
}

inline double int_pow(double b, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= b;
    return r;
}

// Splits a factor into (base, exponent).
inline std::pair<Expr, int> base_exp(const Expr& f) {
    if (f.kind() == ExprKind::pow) return {f.args()[0], f.exponent()};
    return {f, 1};
}

// Splits a term into (coefficient, monomial); the monomial of a constant is 1.
inline std::pair<double, Expr> coeff_term(const Expr& t) {
    if (t.is_constant()) return {t.value(), Expr::constant(1.0)};
    if (t.kind() == ExprKind::mul && t.args().front().is_constant()) {
        std::vector<Expr> rest(t.args().begin() + 1, t.args().end());
        if (rest.size() == 1) return {t.args().front().value(), rest.front()};
        return {t.args().front().value(), Expr::product(std::move(rest))};
    }
    return {1.0, t};
}

}  // namespace detail

inline Expr Expr::intern(Node n) { return Expr(detail::InternTable::instance().get(std::move(n))); }

inline Expr Expr::constant(double v) {
    if (!std::isfinite(v)) throw NumericError("non-finite constant in expression");
    Node n;
    n.kind = ExprKind::constant;
    n.value = v == 0.0 ? 0.0 : v;
    return intern(std::move(n));
}

inline Expr Expr::variable(int i) {
    if (i < 0) throw DimensionError("negative variable index");
    Node n;
    n.kind = ExprKind::variable;
    n.index = i;
    return intern(std::move(n));
}

inline Expr Expr::time() {
    Node n;
    n.kind = ExprKind::time;
    return intern(std::move(n));
}

inline Expr Expr::sum(std::vector<Expr> terms) {
    std::vector<Expr> flat;
    for (auto& t : terms) {
        if (t.kind() == ExprKind::add) flat.insert(flat.end(), t.args().begin(), t.args().end());
        else flat.push_back(std::move(t));
    }
    double c = 0.0;
    std::vector<std::pair<Expr, double>> groups;
    for (const auto& t : flat) {
        if (t.is_constant()) {
            c += t.value();
            continue;
        }
        auto [coef, mono] = detail::coeff_term(t);
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == mono; });
        if (it == groups.end()) groups.emplace_back(mono, coef);
        else it->second += coef;
    }
    std::sort(groups.begin(), groups.end(),
              [](const auto& a, const auto& b) { return detail::compare(a.first, b.first) < 0; });
    std::vector<Expr> out;
    for (const auto& [mono, coef] : groups) {
        if (coef == 0.0) continue;
        out.push_back(coef == 1.0 ? mono : product({constant(coef), mono}));
    }
    if (c != 0.0) out.push_back(constant(c));
    if (out.empty()) return constant(0.0);
    if (out.size() == 1) return out.front();
    Node n;
    n.kind = ExprKind::add;
    n.args = std::move(out);
    return intern(std::move(n));
}

inline Expr Expr::product(std::vector<Expr> factors) {
    std::vector<Expr> flat;
    for (auto& f : factors) {
        if (f.kind() == ExprKind::mul) flat.insert(flat.end(), f.args().begin(), f.args().end());
        else flat.push_back(std::move(f));
    }
    double c = 1.0;
    std::vector<std::pair<Expr, int>> groups;
    for (const auto& f : flat) {
        if (f.is_constant()) {
            c *= f.value();
            continue;
        }
        auto [base, e] = detail::base_exp(f);
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == base; });
        if (it == groups.end()) groups.emplace_back(base, e);
        else it->second += e;
    }
    if (c == 0.0) return constant(0.0);
    std::sort(groups.begin(), groups.end(),
              [](const auto& a, const auto& b) { return detail::compare(a.first, b.first) < 0; });
    std::vector<Expr> out;
    if (c != 1.0) out.push_back(constant(c));
    for (const auto& [base, e] : groups) {
        if (e == 0) continue;
        out.push_back(e == 1 ? base : power(base, e));
    }
    if (out.empty()) return constant(c);
    if (out.size() == 1) return out.front();
    Node n;
    n.kind = ExprKind::mul;
    n.args = std::move(out);
    return intern(std::move(n));
}

inline Expr Expr::power(const Expr& base, int k) {
    if (k < 0) throw NumericError("negative exponent in expression");
    if (k == 0) return constant(1.0);
    if (k == 1) return base;
    if (base.is_constant()) return constant(detail::int_pow(base.value(), k));
    if (base.kind() == ExprKind::pow) return power(base.args()[0], base.exponent() * k);
    if (base.kind() == ExprKind::mul) {
        std::vector<Expr> f;
        for (const auto& a : base.args()) f.push_back(power(a, k));
        return product(std::move(f));
    }
    Node n;
    n.kind = ExprKind::pow;
    n.index = k;
    n.args = {base};
    return intern(std::move(n));
}

inline Expr Expr::sin(const Expr& a) {
    if (a.is_constant()) return constant(std::sin(a.value()));
    Node n;
    n.kind = ExprKind::sin;
    n.args = {a};
    return intern(std::move(n));
}

inline Expr Expr::cos(const Expr& a) {
    if (a.is_constant()) return constant(std::cos(a.value()));
    Node n;
    n.kind = ExprKind::cos;
    n.args = {a};
    return intern(std::move(n));
}

inline double Expr::eval(std::span<const double> x, double t) const {
    switch (kind()) {
        case ExprKind::constant: return value();
        case ExprKind::variable:
            if (static_cast<std::size_t>(index()) >= x.size()) throw DimensionError("variable index out of range");
            return x[static_cast<std::size_t>(index())];
        case ExprKind::time: return t;
        case ExprKind::add: {
            double s = 0.0;
            for (const auto& a : args()) s += a.eval(x, t);
            return s;
        }
        case ExprKind::mul: {
            double p = 1.0;
            for (const auto& a : args()) p *= a.eval(x, t);
            return p;
        }
        case ExprKind::pow: return detail::int_pow(args()[0].eval(x, t), exponent());
        case ExprKind::sin: return std::sin(args()[0].eval(x, t));
        case ExprKind::cos: return std::cos(args()[0].eval(x, t));
    }
    return 0.0;
}

inline Interval Expr::eval(std::span<const Interval> x, const Interval& t) const {
    switch (kind()) {
        case ExprKind::constant: return Interval::point(value());
        case ExprKind::variable:
            if (static_cast<std::size_t>(index()) >= x.size()) throw DimensionError("variable index out of range");
            return x[static_cast<std::size_t>(index())];
        case ExprKind::time: return t;
        case ExprKind::add: {
            Interval s = Interval::point(0.0);
            for (const auto& a : args()) s = s + a.eval(x, t);
            return s;
        }
        case ExprKind::mul: {
            Interval p = Interval::point(1.0);
            for (const auto& a : args()) p = p * a.eval(x, t);
            return p;
        }
        case ExprKind::pow: return koopman_reach::pow(args()[0].eval(x, t), exponent());
        case ExprKind::sin: return koopman_reach::sin(args()[0].eval(x, t));
        case ExprKind::cos: return koopman_reach::cos(args()[0].eval(x, t));
    }
    return Interval::point(0.0);
}

/// Largest variable index appearing in e, or -1.
inline int max_variable_index(const Expr& e) {
    if (e.kind() == ExprKind::variable) return e.index();
    int m = -1;
    for (const auto& a : e.args()) m = std::max(m, max_variable_index(a));
    return m;
}

inline bool depends_on_time(const Expr& e) {
    if (e.kind() == ExprKind::time) return true;
    return std::any_of(e.args().begin(), e.args().end(), depends_on_time);
}

/// Replaces the time symbol by the constant t and re-simplifies.
inline Expr substitute_time(const Expr& e, double t) {
    switch (e.kind()) {
        case ExprKind::time: return Expr::constant(t);
        case ExprKind::constant:
        case ExprKind::variable: return e;
        case ExprKind::pow: return Expr::power(substitute_time(e.args()[0], t), e.exponent());
        case ExprKind::sin: return Expr::sin(substitute_time(e.args()[0], t));
        case ExprKind::cos: return Expr::cos(substitute_time(e.args()[0], t));
        case ExprKind::add:
        case ExprKind::mul: {
            std::vector<Expr> a;
            for (const auto& x : e.args()) a.push_back(substitute_time(x, t));
            return e.kind() == ExprKind::add ? Expr::sum(std::move(a)) : Expr::product(std::move(a));
        }
    }
    return e;
}

/// Partial derivative with respect to x_var, or to t when var < 0.
inline Expr differentiate(const Expr& e, int var) {
    switch (e.kind()) {
        case ExprKind::constant: return Expr::constant(0.0);
        case ExprKind::variable: return Expr::constant(var >= 0 && e.index() == var ? 1.0 : 0.0);
        case ExprKind::time: return Expr::constant(var < 0 ? 1.0 : 0.0);
        case ExprKind::add: {
            std::vector<Expr> d;
            for (const auto& a : e.args()) d.push_back(differentiate(a, var));
            return Expr::sum(std::move(d));
        }
        case ExprKind::mul: {
            std::vector<Expr> terms;
            const auto& f = e.args();
            for (std::size_t i = 0; i < f.size(); ++i) {
                Expr di = differentiate(f[i], var);
                if (di.is_constant(0.0)) continue;
                std::vector<Expr> p;
                for (std::size_t j = 0; j < f.size(); ++j)
                    if (j != i) p.push_back(f[j]);
                p.push_back(di);
                terms.push_back(Expr::product(std::move(p)));
            }
            return Expr::sum(std::move(terms));
        }
        case ExprKind::pow: {
            const Expr& b = e.args()[0];
            Expr db = differentiate(b, var);
            if (db.is_constant(0.0)) return Expr::constant(0.0);
            return Expr::product({Expr::constant(e.exponent()), Expr::power(b, e.exponent() - 1), db});
        }
        case ExprKind::sin: {
            Expr da = differentiate(e.args()[0], var);
            if (da.is_constant(0.0)) return Expr::constant(0.0);
            return Expr::product({Expr::cos(e.args()[0]), da});
        }
        case ExprKind::cos: {
            Expr da = differentiate(e.args()[0], var);
            if (da.is_constant(0.0)) return Expr::constant(0.0);
            return Expr::product({Expr::constant(-1.0), Expr::sin(e.args()[0]), da});
        }
    }
    return Expr::constant(0.0);
}

/// Distributes products and integer powers over sums.
inline Expr expand(const Expr& e) {
    switch (e.kind()) {
        case ExprKind::constant:
        case ExprKind::variable:
        case ExprKind::time: return e;
        case ExprKind::sin: return Expr::sin(expand(e.args()[0]));
        case ExprKind::cos: return Expr::cos(expand(e.args()[0]));
        case ExprKind::add: {
            std::vector<Expr> a;
            for (const auto& x : e.args()) a.push_back(expand(x));
            return Expr::sum(std::move(a));
        }
        case ExprKind::mul:
        case ExprKind::pow: {
            std::vector<Expr> factors;
            if (e.kind() == ExprKind::mul) {
                for (const auto& x : e.args()) factors.push_back(expand(x));
            } else {
                const Expr b = expand(e.args()[0]);
                if (b.kind() != ExprKind::add) return Expr::power(b, e.exponent());
                factors.assign(static_cast<std::size_t>(e.exponent()), b);
            }
            std::vector<Expr> acc{Expr::constant(1.0)};
            for (const auto& f : factors) {
                std::vector<Expr> next;
                if (f.kind() == ExprKind::add) {
                    for (const auto& a : acc)
                        for (const auto& t : f.args()) next.push_back(a * t);
                } else {
                    for (const auto& a : acc) next.push_back(a * f);
                }
                const Expr merged = Expr::sum(std::move(next));
                if (merged.kind() == ExprKind::add) acc = merged.args();
                else acc = {merged};
            }
            return Expr::sum(std::move(acc));
        }
    }
    return e;
}

/// dg/dt = grad(g) . f(x) + dg/dt along the vector field f.
inline Expr lie_derivative(const Expr& g, std::span<const Expr> field) {
    std::vector<Expr> terms;
    for (std::size_t i = 0; i < field.size(); ++i) {
        Expr d = differentiate(g, static_cast<int>(i));
        if (!d.is_constant(0.0)) terms.push_back(d * field[i]);
    }
    terms.push_back(differentiate(g, -1));
    return Expr::sum(std::move(terms));
}

// ---------------------------------------------------------------------------
// Canonical text form: x1..xn are state variables (1-based), t is time.

namespace detail {

inline std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline bool is_atom(const Expr& e) {
    return e.kind() == ExprKind::variable || e.kind() == ExprKind::time || e.kind() == ExprKind::sin ||
           e.kind() == ExprKind::cos || (e.is_constant() && e.value() >= 0.0);
}

inline void print(const Expr& e, std::string& out);

inline void print_factor(const Expr& e, std::string& out) {
    if (e.kind() == ExprKind::add || (e.is_constant() && e.value() < 0.0)) {
        out += '(';
        print(e, out);
        out += ')';
    } else {
        print(e, out);
    }
}

inline void print(const Expr& e, std::string& out) {
    switch (e.kind()) {
        case ExprKind::constant: out += format_number(e.value()); return;
        case ExprKind::variable: out += 'x' + std::to_string(e.index() + 1); return;
        case ExprKind::time: out += 't'; return;
        case ExprKind::sin:
        case ExprKind::cos:
            out += e.kind() == ExprKind::sin ? "sin(" : "cos(";
            print(e.args()[0], out);
            out += ')';
            return;
        case ExprKind::pow:
            if (is_atom(e.args()[0])) print(e.args()[0], out);
            else {
                out += '(';
                print(e.args()[0], out);
                out += ')';
            }
            out += '^' + std::to_string(e.exponent());
            return;
        case ExprKind::mul: {
            const auto& f = e.args();
            std::size_t start = 0;
            if (f.front().is_constant()) {
                if (f.front().value() == -1.0) out += '-';
                else {
                    out += format_number(f.front().value());
                    out += '*';
                }
                start = 1;
            }
            for (std::size_t i = start; i < f.size(); ++i) {
                if (i > start) out += '*';
                print_factor(f[i], out);
            }
            return;
        }
        case ExprKind::add: {
            bool first = true;
            for (const auto& t : e.args()) {
                auto [c, mono] = coeff_term(t);
                if (first) {
                    print(t, out);
                    first = false;
                } else if (c < 0.0) {
                    out += " - ";
                    if (mono.is_constant(1.0)) out += format_number(-c);
                    else print(Expr::product({Expr::constant(-c), mono}), out);
                } else {
                    out += " + ";
                    print(t, out);
                }
            }
            return;
        }
    }
}

class ExprParser {
public:
    ExprParser(std::string_view s, const std::function<std::optional<int>(std::string_view)>& resolve)
        : s_(s), resolve_(resolve) {}

    Expr parse() {
        Expr e = parse_sum();
        skip_ws();
        if (pos_ != s_.size()) fail("unexpected trailing input");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(msg + " at position " + std::to_string(pos_) + " in '" + std::string(s_) + "'");
    }
    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }
    bool accept(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    Expr parse_sum() {
        std::vector<Expr> terms{parse_product()};
        for (;;) {
            if (accept('+')) terms.push_back(parse_product());
            else if (accept('-')) terms.push_back(-parse_product());
            else break;
        }
        return terms.size() == 1 ? terms.front() : Expr::sum(std::move(terms));
    }
    Expr parse_product() {
        std::vector<Expr> f{parse_unary()};
        while (accept('*')) f.push_back(parse_unary());
        return f.size() == 1 ? f.front() : Expr::product(std::move(f));
    }
    Expr parse_unary() {
        if (accept('-')) return -parse_unary();
        if (accept('+')) return parse_unary();
        return parse_power();
    }
    Expr parse_power() {
        Expr base = parse_atom();
        if (accept('^')) {
            skip_ws();
            int k = 0;
            auto res = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), k);
            if (res.ec != std::errc{}) fail("expected integer exponent");
            pos_ = static_cast<std::size_t>(res.ptr - s_.data());
            if (k < 0) fail("negative exponent");
            return Expr::power(base, k);
        }
        return base;
    }
    Expr parse_atom() {
        skip_ws();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            Expr e = parse_sum();
            if (!accept(')')) fail("expected ')'");
            return e;
        }
        if ((c >= '0' && c <= '9') || c == '.') {
            double v = 0.0;
            auto res = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
            if (res.ec != std::errc{}) fail("bad number");
            pos_ = static_cast<std::size_t>(res.ptr - s_.data());
            return Expr::constant(v);
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < s_.size() &&
                   (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
                ++pos_;
            const std::string_view name = s_.substr(start, pos_ - start);
            if (name == "sin" || name == "cos") {
                if (!accept('(')) fail("expected '(' after function name");
                Expr a = parse_sum();
                if (!accept(')')) fail("expected ')'");
                return name == "sin" ? Expr::sin(a) : Expr::cos(a);
            }
            if (name == "t") return Expr::time();
            if (auto idx = resolve_(name)) return Expr::variable(*idx);
            fail("unknown identifier '" + std::string(name) + "'");
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    const std::function<std::optional<int>(std::string_view)>& resolve_;
};

inline std::optional<int> canonical_variable(std::string_view name) {
    if (name.size() < 2 || name[0] != 'x') return std::nullopt;
    int k = 0;
    auto res = std::from_chars(name.data() + 1, name.data() + name.size(), k);
    if (res.ec != std::errc{} || res.ptr != name.data() + name.size() || k < 1) return std::nullopt;
    return k - 1;
}

}  // namespace detail

inline std::string to_string(const Expr& e) {
    std::string s;
    detail::print(e, s);
    return s;
}

/// Parses the canonical text form (x1..xn, t, numbers, + - * ^, sin, cos).
inline Expr parse_expr(std::string_view text) {
    const std::function<std::optional<int>(std::string_view)> resolve = detail::canonical_variable;
    return detail::ExprParser(text, resolve).parse();
}

/// Parses with caller-supplied variable names (e.g. x, y, z).
inline Expr parse_expr(std::string_view text, std::span<const std::string> names) {
    const std::function<std::optional<int>(std::string_view)> resolve =
        [names](std::string_view n) -> std::optional<int> {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == n) return static_cast<int>(i);
        return detail::canonical_variable(n);
    };
    return detail::ExprParser(text, resolve).parse();
}

}  // namespace koopman_reach
