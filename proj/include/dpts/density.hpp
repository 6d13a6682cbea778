#pragma once

#include <cctype>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dpts/common.hpp"

namespace dpts {

// --- restricted arithmetic expressions for user densities -------------------
// Grammar: + - * / parentheses, unary minus, exp sin cos pow, numeric
// constants, pi, and the variables x, y.

namespace expr {

struct Node {
    enum Kind { kConst, kVarX, kVarY, kAdd, kSub, kMul, kDiv, kNeg, kExp, kSin, kCos, kPow };
    Kind kind;
    double value = 0.0;
    std::unique_ptr<Node> a, b;
};

class Parser {
  public:
    explicit Parser(const std::string& s) : s_(s) {}

    std::unique_ptr<Node> parse() {
        auto e = parse_sum();
        skip_ws();
        if (pos_ != s_.size()) fail("trailing characters");
        return e;
    }

  private:
    std::unique_ptr<Node> parse_sum() {
        auto lhs = parse_term();
        for (;;) {
            skip_ws();
            if (accept('+')) {
                lhs = binary(Node::kAdd, std::move(lhs), parse_term());
            } else if (accept('-')) {
                lhs = binary(Node::kSub, std::move(lhs), parse_term());
            } else {
                return lhs;
            }
        }
    }

    std::unique_ptr<Node> parse_term() {
        auto lhs = parse_factor();
        for (;;) {
            skip_ws();
            if (accept('*')) {
                lhs = binary(Node::kMul, std::move(lhs), parse_factor());
            } else if (accept('/')) {
                lhs = binary(Node::kDiv, std::move(lhs), parse_factor());
            } else {
                return lhs;
            }
        }
    }

    std::unique_ptr<Node> parse_factor() {
        skip_ws();
        if (accept('-')) {
            auto n = std::make_unique<Node>();
            n->kind = Node::kNeg;
            n->a = parse_factor();
            return n;
        }
        return parse_primary();
    }

    std::unique_ptr<Node> parse_primary() {
        skip_ws();
        if (accept('(')) {
            auto e = parse_sum();
            expect(')');
            return e;
        }
        if (pos_ < s_.size() && (std::isdigit((unsigned char)s_[pos_]) || s_[pos_] == '.')) {
            char* end = nullptr;
            double v = std::strtod(s_.c_str() + pos_, &end);
            pos_ = size_t(end - s_.c_str());
            auto n = std::make_unique<Node>();
            n->kind = Node::kConst;
            n->value = v;
            return n;
        }
        std::string id = parse_ident();
        if (id == "x") return leaf(Node::kVarX);
        if (id == "y") return leaf(Node::kVarY);
        if (id == "pi") {
            auto n = std::make_unique<Node>();
            n->kind = Node::kConst;
            n->value = 3.14159265358979323846;
            return n;
        }
        if (id == "exp" || id == "sin" || id == "cos") {
            expect('(');
            auto a = parse_sum();
            expect(')');
            auto n = std::make_unique<Node>();
            n->kind = id == "exp" ? Node::kExp : id == "sin" ? Node::kSin : Node::kCos;
            n->a = std::move(a);
            return n;
        }
        if (id == "pow") {
            expect('(');
            auto a = parse_sum();
            expect(',');
            auto b = parse_sum();
            expect(')');
            return binary(Node::kPow, std::move(a), std::move(b));
        }
        fail("unknown identifier '" + id + "'");
        return nullptr;
    }

    std::string parse_ident() {
        skip_ws();
        size_t start = pos_;
        while (pos_ < s_.size() && std::isalpha((unsigned char)s_[pos_])) ++pos_;
        if (pos_ == start) fail("expected identifier or number");
        return s_.substr(start, pos_ - start);
    }

    static std::unique_ptr<Node> leaf(Node::Kind k) {
        auto n = std::make_unique<Node>();
        n->kind = k;
        return n;
    }

    static std::unique_ptr<Node> binary(Node::Kind k, std::unique_ptr<Node> a, std::unique_ptr<Node> b) {
        auto n = std::make_unique<Node>();
        n->kind = k;
        n->a = std::move(a);
        n->b = std::move(b);
        return n;
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace((unsigned char)s_[pos_])) ++pos_;
    }
    bool accept(char c) {
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    void expect(char c) {
        skip_ws();
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }
    [[noreturn]] void fail(const std::string& why) {
        throw DataError("density expression error at position " + std::to_string(pos_) + ": " + why);
    }

    const std::string& s_;
    size_t pos_ = 0;
};

inline double eval(const Node* n, double x, double y) {
    switch (n->kind) {
        case Node::kConst: return n->value;
        case Node::kVarX: return x;
        case Node::kVarY: return y;
        case Node::kAdd: return eval(n->a.get(), x, y) + eval(n->b.get(), x, y);
        case Node::kSub: return eval(n->a.get(), x, y) - eval(n->b.get(), x, y);
        case Node::kMul: return eval(n->a.get(), x, y) * eval(n->b.get(), x, y);
        case Node::kDiv: return eval(n->a.get(), x, y) / eval(n->b.get(), x, y);
        case Node::kNeg: return -eval(n->a.get(), x, y);
        case Node::kExp: return std::exp(eval(n->a.get(), x, y));
        case Node::kSin: return std::sin(eval(n->a.get(), x, y));
        case Node::kCos: return std::cos(eval(n->a.get(), x, y));
        case Node::kPow: return std::pow(eval(n->a.get(), x, y), eval(n->b.get(), x, y));
    }
    return 0.0;
}

}  // namespace expr

// Target density on the unit square plus the rejection bound M.
// linear_ramp has density 1 + slope*(2x - 1); slope=1 gives f(x,y) = 2x.
// blobby is 0.2*exp(-20(x^2+y^2)) + 0.2*sin(pi x)^2 sin(pi y)^2.
class DensitySpec {
  public:
    enum class Kind { kUniform, kLinearRamp, kBlobby, kExpression };

    static DensitySpec uniform() { return DensitySpec(Kind::kUniform, 1.0); }

    static DensitySpec linear_ramp(double slope = 1.0) {
        if (slope < 0.0 || slope > 1.0) throw DataError("ramp slope must be in [0,1]");
        DensitySpec d(Kind::kLinearRamp, 1.0 + slope);
        d.slope_ = slope;
        return d;
    }

    static DensitySpec blobby() {
        DensitySpec d(Kind::kBlobby, 0.0);
        d.bound_ = d.probe_max() * 1.001;
        d.validate();
        return d;
    }

    static DensitySpec expression(const std::string& text, double bound = 0.0) {
        DensitySpec d(Kind::kExpression, bound);
        d.text_ = text;
        d.ast_ = std::shared_ptr<expr::Node>(expr::Parser(text).parse().release());
        if (bound <= 0.0) d.bound_ = d.probe_max() * 1.001;
        d.validate();
        return d;
    }

    static DensitySpec from_name(const std::string& name, double bound = 0.0) {
        if (name == "uniform") return uniform();
        if (name == "ramp" || name == "linear_ramp") return linear_ramp();
        if (name == "blobby") return blobby();
        return expression(name, bound);
    }

    double operator()(double x, double y) const {
        switch (kind_) {
            case Kind::kUniform: return 1.0;
            case Kind::kLinearRamp: return 1.0 + slope_ * (2.0 * x - 1.0);
            case Kind::kBlobby:
                return 0.2 * std::exp(-20.0 * (x * x + y * y)) +
                       0.2 * sq(std::sin(3.14159265358979323846 * x)) *
                           sq(std::sin(3.14159265358979323846 * y));
            case Kind::kExpression: return expr::eval(ast_.get(), x, y);
        }
        return 0.0;
    }

    Kind kind() const { return kind_; }
    double bound() const { return bound_; }
    double slope() const { return slope_; }
    const std::string& text() const { return text_; }

    // Marginal CDF of the ramp's x-axis: F(x) = (1-s)x + s x^2.
    double ramp_cdf(double x) const { return (1.0 - slope_) * x + slope_ * x * x; }

    // Inverse of ramp_cdf, closed form.
    double ramp_inv_cdf(double u) const {
        if (slope_ == 0.0) return u;
        double a = slope_, b = 1.0 - slope_;
        return (-b + std::sqrt(b * b + 4.0 * a * u)) / (2.0 * a);
    }

    // Mean value over the unit square by midpoint rule (used for
    // normalization and acceptance-rate estimates).
    double mean_midpoint(int res = 4096) const {
        if (kind_ == Kind::kUniform) return 1.0;
        if (kind_ == Kind::kLinearRamp) return 1.0;
        double sum = 0.0;
        for (int j = 0; j < res; ++j) {
            double y = (j + 0.5) / res;
            double row = 0.0;
            for (int i = 0; i < res; ++i) row += (*this)((i + 0.5) / res, y);
            sum += row;
        }
        return sum / (double(res) * res);
    }

  private:
    DensitySpec(Kind k, double bound) : kind_(k), bound_(bound) {}

    static double sq(double v) { return v * v; }

    double probe_max() const {
        const int res = 1024;
        double m = 0.0;
        for (int j = 0; j < res; ++j) {
            double y = (j + 0.5) / res;
            for (int i = 0; i < res; ++i) {
                double v = (*this)((i + 0.5) / res, y);
                if (v > m) m = v;
            }
        }
        return m;
    }

    // Dense 1024^2 grid probe: density must be non-negative and M must
    // dominate every probed value with zero tolerance.
    void validate() const {
        const int res = 1024;
        for (int j = 0; j < res; ++j) {
            double y = (j + 0.5) / res;
            for (int i = 0; i < res; ++i) {
                double v = (*this)((i + 0.5) / res, y);
                if (!std::isfinite(v) || v < 0.0) throw DataError("density negative or non-finite on the unit square");
                if (v > bound_) throw DataError("density bound M smaller than probed density value");
            }
        }
    }

    Kind kind_;
    double bound_;
    double slope_ = 1.0;
    std::string text_;
    std::shared_ptr<expr::Node> ast_;
};

}  // namespace dpts
