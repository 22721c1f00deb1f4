#include "expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <vector>

#include "mgwave/error.hpp"

namespace mgcli {

struct Expr::Node {
    enum Kind { number, var_x, var_t, var_d, neg, add, sub, mul, div, pow, fn } kind;
    double value = 0.0;
    double (*func)(double) = nullptr;
    std::shared_ptr<const Node> a, b;
};

namespace {

using NodeP = std::shared_ptr<const Expr::Node>;
using Kind = Expr::Node::Kind;

NodeP make(Kind k, NodeP a = nullptr, NodeP b = nullptr) {
    auto n = std::make_shared<Expr::Node>();
    n->kind = k;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    NodeP parse() {
        NodeP e = sum();
        skip();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw mgwave::ConfigError("expression '" + s_ + "': " + what + " at column " + std::to_string(pos_ + 1));
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool eat(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodeP sum() {
        NodeP left = product();
        for (;;) {
            if (eat('+')) left = make(Kind::add, left, product());
            else if (eat('-')) left = make(Kind::sub, left, product());
            else return left;
        }
    }

    NodeP product() {
        NodeP left = unary();
        for (;;) {
            if (eat('*')) left = make(Kind::mul, left, unary());
            else if (eat('/')) left = make(Kind::div, left, unary());
            else return left;
        }
    }

    NodeP unary() {
        if (eat('-')) return make(Kind::neg, unary());
        if (eat('+')) return unary();
        return power();
    }

    // right associative; -2^2 = -4
    NodeP power() {
        NodeP base = primary();
        if (eat('^')) return make(Kind::pow, base, unary());
        return base;
    }

    NodeP primary() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end");
        const char c = s_[pos_];
        if (eat('(')) {
            NodeP e = sum();
            if (!eat(')')) fail("expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = s_.c_str() + pos_;
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin) fail("bad number");
            pos_ += static_cast<size_t>(end - begin);
            auto n = std::make_shared<Expr::Node>();
            n->kind = Kind::number;
            n->value = v;
            return n;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            const size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
            const std::string id = s_.substr(start, pos_ - start);
            if (id == "x") return make(Kind::var_x);
            if (id == "t") return make(Kind::var_t);
            if (id == "d") return make(Kind::var_d);
            if (id == "pi") {
                auto n = std::make_shared<Expr::Node>();
                n->kind = Kind::number;
                n->value = std::numbers::pi;
                return n;
            }
            double (*f)(double) = nullptr;
            if (id == "sin") f = [](double v) { return std::sin(v); };
            else if (id == "cos") f = [](double v) { return std::cos(v); };
            else if (id == "exp") f = [](double v) { return std::exp(v); };
            else if (id == "sqrt") f = [](double v) { return std::sqrt(v); };
            else if (id == "abs") f = [](double v) { return std::abs(v); };
            if (!f) {
                pos_ = start;
                fail("unknown name '" + id + "'");
            }
            if (!eat('(')) fail("expected '(' after " + id);
            NodeP arg = sum();
            if (!eat(')')) fail("expected ')'");
            auto n = std::make_shared<Expr::Node>();
            n->kind = Kind::fn;
            n->func = f;
            n->a = arg;
            return n;
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    const std::string& s_;
    size_t pos_ = 0;
};

double eval(const Expr::Node& n, const Vars& v) {
    switch (n.kind) {
    case Kind::number: return n.value;
    case Kind::var_x: return v.x;
    case Kind::var_t: return v.t;
    case Kind::var_d: return v.d;
    case Kind::neg: return -eval(*n.a, v);
    case Kind::add: return eval(*n.a, v) + eval(*n.b, v);
    case Kind::sub: return eval(*n.a, v) - eval(*n.b, v);
    case Kind::mul: return eval(*n.a, v) * eval(*n.b, v);
    case Kind::div: return eval(*n.a, v) / eval(*n.b, v);
    case Kind::pow: return std::pow(eval(*n.a, v), eval(*n.b, v));
    case Kind::fn: return n.func(eval(*n.a, v));
    }
    return 0.0;
}

bool has_t(const Expr::Node& n) {
    if (n.kind == Kind::var_t) return true;
    return (n.a && has_t(*n.a)) || (n.b && has_t(*n.b));
}

} // namespace

Expr Expr::parse(const std::string& text) {
    Expr e;
    e.text_ = text;
    e.root_ = Parser(e.text_).parse();
    return e;
}

double Expr::operator()(const Vars& v) const { return eval(*root_, v); }

bool Expr::uses_t() const { return has_t(*root_); }

} // namespace mgcli
