#pragma once

#include <memory>
#include <string>

namespace mgcli {

/// Variables an expression may reference. d is the graph distance to gamma0.
struct Vars {
    double x = 0.0;
    double t = 0.0;
    double d = 0.0;
};

/// Arithmetic over x, t, d and pi with + - * / ^ and sin, cos, exp, sqrt, abs.
class Expr {
public:
    static Expr parse(const std::string& text);
    double operator()(const Vars& v) const;
    const std::string& text() const { return text_; }
    bool uses_t() const;

    struct Node;

private:
    std::string text_;
    std::shared_ptr<const Node> root_;
};

} // namespace mgcli
