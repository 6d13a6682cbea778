#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dpts/diffusion.hpp"
#include "dpts/rng.hpp"
#include "dpts/tensor.hpp"
#include "dpts/transport.hpp"
#include "dpts/unet.hpp"

namespace dpts::opt {

struct OptimizeConfig {
    int steps = 100;  // diffusion steps of the differentiable chain
    int iterations = 200;
    double lr = 0.05;
    uint64_t seed = 0;
    double data_scale = 1.0;
    diffusion::Schedule schedule;  // the trained schedule (steps <= schedule.T)
};

struct OptimizeResult {
    PointSet before;
    PointSet after;
    std::vector<double> trajectory;  // objective per iteration (index 0 = initial)
    double escape_before = 0.0;
    double escape_after = 0.0;
};

namespace detail {

// Warnock D^2 of the decoded point set as a custom tape operation. The
// toroidal wrap is applied in the forward pass and treated as the identity
// in the backward pass; max() takes a subgradient assigned to the larger
// argument, ties to the first.
template <typename T>
ag::Tensor<T> warnock_sq_from_field(ag::Tensor<T> field, double data_scale) {
    ag::Tape<T>& tape = *field.tape;
    const ag::Shape& s = tape.shape(field);
    if (s.size() != 4 || s[0] != 1 || s[1] != 2 || s[2] != s[3])
        throw NumericError("warnock objective expects a [1,2,s,s] field");
    int side = s[2];
    int n = side * side;
    double denom = data_scale * double(side);

    auto pts = std::make_shared<std::vector<Point2>>(size_t(n));
    const std::vector<T>& v = tape.cval(field);
    for (int k = 0; k < n; ++k) {
        Point2 c = transport::stratum_center(k, side);
        (*pts)[size_t(k)] = wrap_unit(c.x + double(v[size_t(k)]) / denom, c.y + double(v[size_t(n + k)]) / denom);
    }

    double term2 = 0.0, term3 = 0.0;
    for (int i = 0; i < n; ++i) {
        const Point2& p = (*pts)[size_t(i)];
        term2 += (1.0 - p.x * p.x) * (1.0 - p.y * p.y) * 0.25;
        for (int j = 0; j < n; ++j) {
            const Point2& q = (*pts)[size_t(j)];
            term3 += (1.0 - std::max(p.x, q.x)) * (1.0 - std::max(p.y, q.y));
        }
    }
    double d2 = 1.0 / 9.0 - 2.0 / n * term2 + term3 / (double(n) * n);

    ag::Tensor<T> out = tape.make({1}, tape.node(field).requires_grad);
    tape.val(out)[0] = T(d2);
    tape.record(out.id, [field, out, pts, n, denom](ag::Tape<T>& t) {
        double g = double(t.grad_acc(out.id)[0]);
        auto& gf = t.grad_acc(field.id);
        const auto& P = *pts;
        for (int i = 0; i < n; ++i) {
            double xi = P[size_t(i)].x, yi = P[size_t(i)].y;
            double dx = (2.0 / n) * xi * (1.0 - yi * yi) * 0.5;
            double dy = (2.0 / n) * yi * (1.0 - xi * xi) * 0.5;
            double bx = 0.0, by = 0.0;
            for (int j = 0; j < n; ++j) {
                double xj = P[size_t(j)].x, yj = P[size_t(j)].y;
                double my = 1.0 - std::max(yi, yj);
                double mx = 1.0 - std::max(xi, xj);
                // ordered pair (i,j): ties go to the first argument (i)
                if (xi >= xj) bx -= my;
                if (yi >= yj) by -= mx;
                // ordered pair (j,i): ties go to j
                if (xi > xj) bx -= my;
                if (yi > yj) by -= mx;
            }
            dx += bx / (double(n) * n);
            dy += by / (double(n) * n);
            gf[size_t(i)] += T(g * dx / denom);
            gf[size_t(n + i)] += T(g * dy / denom);
        }
    });
    return out;
}

}  // namespace detail

// Post-optimization of a generated point set with frozen weights: the
// reverse-chain noise is drawn once, making the whole chain a deterministic
// differentiable map of the initial field, and Adam descends the L2
// discrepancy of the decoded points.
template <typename T>
class InputOptimizer {
  public:
    InputOptimizer(const unet::UNet<T>& net, int side, const OptimizeConfig& cfg)
        : net_(net), side_(side), cfg_(cfg) {
        cfg_.schedule.validate();
        if (cfg_.steps < 1 || cfg_.steps > cfg_.schedule.T)
            throw DataError("optimizer: chain steps must be in [1, T]");
        taus_ = diffusion::strided_steps(cfg_.schedule.T, cfg_.steps);
        SeededRng rng(cfg_.seed, 7);
        size_t elems = size_t(side) * side * 2;
        initial_.resize(elems);
        for (auto& v : initial_) v = T(rng.next_gaussian());
        // frozen reverse noise; none on the final step
        noise_.resize(taus_.size());
        for (size_t k = 1; k < taus_.size(); ++k) {
            noise_[k].resize(elems);
            for (auto& v : noise_[k]) v = T(rng.next_gaussian());
        }
    }

    const std::vector<T>& initial() const { return initial_; }

    // Objective value at an initial field; no gradient bookkeeping.
    double objective(const std::vector<T>& x_init) const {
        ag::Tape<T> tape;
        ag::Tensor<T> x0 = tape.leaf({1, 2, side_, side_}, x_init, false);
        ag::Tensor<T> xf = build_chain(tape, x0);
        final_field_ = tape.cval(xf);
        return double(tape.cval(detail::warnock_sq_from_field(xf, cfg_.data_scale))[0]);
    }

    double objective_with_grad(const std::vector<T>& x_init, std::vector<T>& grad_out) const {
        ag::Tape<T> tape;
        ag::Tensor<T> x0 = tape.leaf({1, 2, side_, side_}, x_init, true);
        ag::Tensor<T> xf = build_chain(tape, x0);
        final_field_ = tape.cval(xf);
        ag::Tensor<T> d2 = detail::warnock_sq_from_field(xf, cfg_.data_scale);
        double value = double(tape.cval(d2)[0]);
        if (!std::isfinite(value)) throw NumericError("optimizer: non-finite objective");
        tape.backward(d2);
        grad_out = tape.grad_of(x0);
        return value;
    }

    // Decode an initial field to points through the frozen chain.
    PointSet decode(const std::vector<T>& x_init, double* escape = nullptr) const {
        objective(x_init);
        transport::GridField f = diffusion::planar_to_field(final_field_, side_, cfg_.data_scale);
        if (escape) *escape = transport::escape_rate(f);
        return transport::unembed(f);
    }

    OptimizeResult run() {
        ag::ParamStore<T> store;
        int pid = store.add("input", {1, 2, side_, side_}, initial_);
        ag::AdamConfig adam;
        adam.lr = cfg_.lr;

        OptimizeResult res;
        res.before = decode(initial_, &res.escape_before);

        std::vector<T> best = initial_;
        double initial_value = std::numeric_limits<double>::infinity();
        double best_value = std::numeric_limits<double>::infinity();
        for (int it = 0; it <= cfg_.iterations; ++it) {
            std::vector<T>& cur = store.param(pid).value;
            bool last = it == cfg_.iterations;
            double value;
            std::vector<T> grad;
            if (last) {
                value = objective(cur);
            } else {
                value = objective_with_grad(cur, grad);
            }
            if (!std::isfinite(value)) throw NumericError("optimizer: non-finite objective");
            res.trajectory.push_back(value);
            if (it == 0) initial_value = value;
            if (value < best_value) {
                best_value = value;
                best = cur;
            }
            if (value > 10.0 * initial_value) break;  // divergence: stop, keep best
            if (!last) store.adam_step({grad}, adam);
        }
        res.after = decode(best, &res.escape_after);
        return res;
    }

  private:
    ag::Tensor<T> build_chain(ag::Tape<T>& tape, ag::Tensor<T> x) const {
        typename unet::UNet<T>::Bound bound = net_.bind(tape, false);
        for (int k = int(taus_.size()) - 1; k >= 0; --k) {
            int t = taus_[size_t(k)];
            double ab_cur = cfg_.schedule.alpha_bar(t);
            double ab_prev = k > 0 ? cfg_.schedule.alpha_bar(taus_[size_t(k - 1)]) : 1.0;
            double alpha_k = ab_cur / ab_prev;
            double beta_k = 1.0 - alpha_k;
            ag::Tensor<T> pred = net_.forward(tape, bound, x, {t});
            x = ag::scale(ag::sub(x, ag::scale(pred, beta_k / std::sqrt(1.0 - ab_cur))), 1.0 / std::sqrt(alpha_k));
            if (k > 0) {
                std::vector<T> z = noise_[size_t(k)];
                double sigma_k = cfg_.schedule.sigma_from_beta(beta_k);
                for (auto& v : z) v = T(double(v) * sigma_k);
                x = ag::add(x, tape.leaf({1, 2, side_, side_}, z, false));
            }
        }
        return x;
    }

    const unet::UNet<T>& net_;
    int side_;
    OptimizeConfig cfg_;
    std::vector<int> taus_;
    std::vector<T> initial_;
    std::vector<std::vector<T>> noise_;
    mutable std::vector<T> final_field_;
};

}  // namespace dpts::opt
