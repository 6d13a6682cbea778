#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dpts/rng.hpp"
#include "dpts/tensor.hpp"
#include "dpts/transport.hpp"
#include "dpts/unet.hpp"

namespace dpts::diffusion {

// Constant-beta DDPM schedule. alpha_bar has the closed form (1-beta)^t,
// checked against the iterated product in the tests. The reverse noise
// scale defaults to sqrt(beta) (variance beta); sigma_literal_beta switches
// to the literal sigma = beta reading.
struct Schedule {
    int T = 1000;
    double beta = 1e-2;
    bool sigma_literal_beta = false;
    bool zero_reverse_noise = false;  // diagnostic mode: z = 0 at every step

    void validate() const {
        if (T < 1) throw DataError("schedule: T must be >= 1");
        if (!(beta > 0.0 && beta < 1.0)) throw DataError("schedule: beta must be in (0,1)");
    }

    double alpha() const { return 1.0 - beta; }
    double alpha_bar(int t) const { return std::pow(1.0 - beta, double(t)); }
    double sigma_from_beta(double beta_t) const { return sigma_literal_beta ? beta_t : std::sqrt(beta_t); }
};

// --- grid field <-> planar tensor layout ------------------------------------

template <typename T>
std::vector<T> field_to_planar(const transport::GridField& f, double data_scale = 1.0) {
    int n = f.n();
    std::vector<T> out(size_t(n) * 2);
    for (int k = 0; k < n; ++k) {
        out[size_t(k)] = T(f.x(k) * data_scale);
        out[size_t(n) + k] = T(f.y(k) * data_scale);
    }
    return out;
}

template <typename T>
transport::GridField planar_to_field(const std::vector<T>& v, int side, double data_scale = 1.0) {
    transport::GridField f(side);
    int n = f.n();
    for (int k = 0; k < n; ++k) {
        f.x(k) = double(v[size_t(k)]) / data_scale;
        f.y(k) = double(v[size_t(n) + k]) / data_scale;
    }
    return f;
}

// --- forward process -----------------------------------------------------------

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
template <typename T>
std::vector<T> q_sample(const std::vector<T>& x0, int t, const std::vector<T>& eps, const Schedule& sched) {
    if (x0.size() != eps.size()) throw NumericError("q_sample: shape mismatch");
    if (t < 0 || t > sched.T) throw NumericError("q_sample: t out of range");
    double ab = sched.alpha_bar(t);
    double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
    std::vector<T> out(x0.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = T(c0 * double(x0[i]) + c1 * double(eps[i]));
    return out;
}

// --- training loss ----------------------------------------------------------------

// One batch per grid size; the loss sums the per-size mean squared
// noise-prediction errors. Normalization is the mean over tensor entries so
// the scale is size-independent. The denoiser is any callable
// (tape, x, steps) -> prediction, which lets tests swap in oracle stubs.
template <typename T, typename DenoiserFn>
ag::Tensor<T> diffusion_loss(ag::Tape<T>& tape, DenoiserFn&& denoiser,
                             const std::vector<std::vector<const transport::GridField*>>& size_batches,
                             const Schedule& sched, SeededRng& rng, double data_scale = 1.0) {
    sched.validate();
    ag::Tensor<T> total;
    bool first = true;
    for (const auto& batch : size_batches) {
        if (batch.empty()) throw DataError("diffusion_loss: empty batch");
        int side = batch.front()->side;
        int B = int(batch.size());
        size_t elems = size_t(side) * side * 2;
        std::vector<T> xt(size_t(B) * elems), eps(size_t(B) * elems);
        std::vector<int> ts(static_cast<size_t>(B));
        for (int b = 0; b < B; ++b) {
            if (batch[size_t(b)]->side != side) throw DataError("diffusion_loss: mixed sides in one batch");
            int t = int(rng.next_below(uint64_t(sched.T))) + 1;
            ts[size_t(b)] = t;
            std::vector<T> x0 = field_to_planar<T>(*batch[size_t(b)], data_scale);
            std::vector<T> e(elems);
            for (auto& v : e) v = T(rng.next_gaussian());
            std::vector<T> noised = q_sample(x0, t, e, sched);
            std::copy(noised.begin(), noised.end(), xt.begin() + size_t(b) * elems);
            std::copy(e.begin(), e.end(), eps.begin() + size_t(b) * elems);
        }
        ag::Tensor<T> x = tape.leaf({B, 2, side, side}, xt, false);
        ag::Tensor<T> target = tape.leaf({B, 2, side, side}, eps, false);
        ag::Tensor<T> pred = denoiser(tape, x, ts);
        ag::Tensor<T> diff = ag::sub(pred, target);
        ag::Tensor<T> size_loss = ag::mean_all(ag::mul(diff, diff));
        total = first ? size_loss : ag::add(total, size_loss);
        first = false;
    }
    return total;
}

// One optimization step: draw (t, eps) per element, backpropagate the
// summed-over-sizes loss, apply Adam. Returns the loss value.
template <typename T>
double train_step(unet::UNet<T>& net, const std::vector<std::vector<const transport::GridField*>>& size_batches,
                  const Schedule& sched, SeededRng& rng, const ag::AdamConfig& adam, double data_scale = 1.0) {
    ag::Tape<T> tape;
    typename unet::UNet<T>::Bound bound = net.bind(tape, true);
    auto fn = [&](ag::Tape<T>& tp, ag::Tensor<T> x, const std::vector<int>& ts) {
        return net.forward(tp, bound, x, ts);
    };
    ag::Tensor<T> loss = diffusion_loss(tape, fn, size_batches, sched, rng, data_scale);
    double value = double(tape.cval(loss)[0]);
    tape.backward(loss);
    std::vector<std::vector<T>> grads;
    grads.reserve(bound.size());
    for (const auto& b : bound) grads.push_back(tape.grad_of(b));
    net.store().adam_step(grads, adam);
    return value;
}

// --- reverse sampling ---------------------------------------------------------------

// Uniformly strided sub-schedule: K steps tau_k = round(k*T/K), with
// alpha_bar re-indexed onto the selected steps.
inline std::vector<int> strided_steps(int T, int K) {
    if (K < 1 || K > T) throw DataError("steps override must be in [1, T]");
    std::vector<int> taus(static_cast<size_t>(K));
    for (int k = 1; k <= K; ++k) taus[size_t(k - 1)] = std::max(1, int(std::llround(double(k) * T / K)));
    for (int k = 1; k < K; ++k)
        if (taus[size_t(k)] <= taus[size_t(k - 1)]) taus[size_t(k)] = taus[size_t(k - 1)] + 1;
    return taus;
}

// Reverse chain x_T -> x_0 for a batch of fields, as raw planar arrays
// [N,2,s,s]. z = 0 on the final step. The denoiser is again a callable so
// stubs can exercise the chain alone.
template <typename T, typename DenoiserFn>
std::vector<std::vector<T>> sample_fields(DenoiserFn&& denoiser, int side, int count, const Schedule& sched,
                                          SeededRng& rng, int steps_override = 0) {
    sched.validate();
    std::vector<int> taus =
        steps_override > 0 ? strided_steps(sched.T, steps_override) : strided_steps(sched.T, sched.T);
    size_t elems = size_t(side) * side * 2;

    std::vector<std::vector<T>> fields(static_cast<size_t>(count));
    for (auto& f : fields) {
        f.resize(elems);
        for (auto& v : f) v = T(rng.next_gaussian());
    }

    // process realizations in chunks to bound activation memory
    const int chunk = std::max(1, 4096 / (side * side));
    for (int base = 0; base < count; base += chunk) {
        int B = std::min(chunk, count - base);
        std::vector<T> x(size_t(B) * elems);
        for (int b = 0; b < B; ++b)
            std::copy(fields[size_t(base + b)].begin(), fields[size_t(base + b)].end(), x.begin() + size_t(b) * elems);

        for (int k = int(taus.size()) - 1; k >= 0; --k) {
            int t = taus[size_t(k)];
            double ab_cur = sched.alpha_bar(t);
            double ab_prev = k > 0 ? sched.alpha_bar(taus[size_t(k - 1)]) : 1.0;
            double alpha_k = ab_cur / ab_prev;
            double beta_k = 1.0 - alpha_k;
            double sigma_k = sched.sigma_from_beta(beta_k);
            double inv_sqrt_alpha = 1.0 / std::sqrt(alpha_k);
            double eps_coef = beta_k / std::sqrt(1.0 - ab_cur);

            ag::Tape<T> tape;
            ag::Tensor<T> xt = tape.leaf({B, 2, side, side}, x, false);
            std::vector<int> ts(static_cast<size_t>(B), t);
            ag::Tensor<T> pred = denoiser(tape, xt, ts);
            const std::vector<T>& ev = tape.cval(pred);
            for (size_t i = 0; i < x.size(); ++i)
                x[i] = T(inv_sqrt_alpha * (double(x[i]) - eps_coef * double(ev[i])));
            if (k > 0 && !sched.zero_reverse_noise) {
                for (size_t i = 0; i < x.size(); ++i) x[i] = T(double(x[i]) + sigma_k * rng.next_gaussian());
            }
        }
        for (int b = 0; b < B; ++b)
            std::copy(x.begin() + size_t(b) * elems, x.begin() + size_t(b + 1) * elems, fields[size_t(base + b)].begin());
    }
    return fields;
}

// Convenience wrapper returning GridFields from a trained network.
template <typename T>
std::vector<transport::GridField> sample(const unet::UNet<T>& net, int side, int count, const Schedule& sched,
                                         SeededRng& rng, int steps_override = 0, double data_scale = 1.0) {
    auto fn = [&](ag::Tape<T>& tp, ag::Tensor<T> x, const std::vector<int>& ts) {
        typename unet::UNet<T>::Bound bound = net.bind(tp, false);
        return net.forward(tp, bound, x, ts);
    };
    std::vector<std::vector<T>> planar = sample_fields<T>(fn, side, count, sched, rng, steps_override);
    std::vector<transport::GridField> out;
    out.reserve(planar.size());
    for (const auto& v : planar) out.push_back(planar_to_field(v, side, data_scale));
    return out;
}

// --- full training loop ----------------------------------------------------------------

struct TrainConfig {
    std::vector<int> sides = {8, 16, 32};
    int batch = 8;
    int steps = 20000;   // total Adam steps; 0 means derive from epochs
    int epochs = 0;
    double lr = 1e-3;
    int checkpoint_every = 5000;
    uint64_t seed = 0;
    double data_scale = 1.0;
    Schedule schedule;
    unet::UNetConfig unet_config;
    std::string checkpoint_path;  // optional; also the resume target
    std::string loss_csv_path;    // optional
};

struct TrainResult {
    std::vector<std::pair<int, double>> loss_curve;  // (step, loss)
};

template <typename T>
class Trainer {
  public:
    Trainer(const TrainConfig& cfg, std::map<int, std::vector<transport::GridField>> datasets)
        : cfg_(cfg), datasets_(std::move(datasets)) {
        cfg_.schedule.validate();
        for (int side : cfg_.sides) {
            auto it = datasets_.find(side);
            if (it == datasets_.end() || it->second.empty())
                throw DataError("trainer: no dataset for grid side " + std::to_string(side));
            if (side % cfg_.unet_config.divisor() != 0)
                throw DataError("trainer: grid side " + std::to_string(side) + " incompatible with the network");
            for (const auto& f : it->second)
                if (f.side != side) throw DataError("trainer: dataset side mismatch");
        }
        if (cfg_.steps <= 0) {
            if (cfg_.epochs <= 0) throw DataError("trainer: need steps or epochs");
            size_t min_count = SIZE_MAX;
            for (int side : cfg_.sides) min_count = std::min(min_count, datasets_[side].size());
            cfg_.steps = cfg_.epochs * int(min_count / size_t(cfg_.batch));
        }
        net_ = std::make_unique<unet::UNet<T>>(cfg_.unet_config, SeededRng(cfg_.seed, 1));
        rng_ = SeededRng(cfg_.seed, 2);
    }

    // Resume from a checkpoint produced by run(); restores weights, Adam
    // moments, the step counter and the training rng position, so the next
    // step is bitwise identical to an uninterrupted run.
    void resume(const std::string& checkpoint) {
        unet::TrainerState ts;
        unet::UNet<T> loaded = unet::load_weights<T>(checkpoint, &ts);
        if (!ts.present) throw DataError("checkpoint has no trainer state: " + checkpoint);
        net_ = std::make_unique<unet::UNet<T>>(std::move(loaded));
        step_ = int(ts.global_step);
        rng_ = SeededRng(cfg_.seed, 2);
        rng_.set_counter(ts.rng_counter);
    }

    double do_step() {
        std::vector<std::vector<const transport::GridField*>> batches;
        for (int side : cfg_.sides) {
            const auto& data = datasets_[side];
            std::vector<const transport::GridField*> batch;
            batch.reserve(size_t(cfg_.batch));
            for (int b = 0; b < cfg_.batch; ++b)
                batch.push_back(&data[size_t(rng_.next_below(data.size()))]);
            batches.push_back(std::move(batch));
        }
        ag::AdamConfig adam;
        adam.lr = cfg_.lr;
        double loss = train_step(*net_, batches, cfg_.schedule, rng_, adam, cfg_.data_scale);
        ++step_;
        return loss;
    }

    TrainResult run() {
        TrainResult res;
        std::FILE* csv = nullptr;
        if (!cfg_.loss_csv_path.empty()) {
            csv = std::fopen(cfg_.loss_csv_path.c_str(), step_ > 0 ? "a" : "w");
            if (!csv) throw DataError("cannot open for writing: " + cfg_.loss_csv_path);
            if (step_ == 0) std::fprintf(csv, "step,loss\n");
        }
        while (step_ < cfg_.steps) {
            double loss = do_step();
            res.loss_curve.push_back({step_, loss});
            if (csv) std::fprintf(csv, "%d,%.17g\n", step_, loss);
            if (!cfg_.checkpoint_path.empty() &&
                (step_ % cfg_.checkpoint_every == 0 || step_ == cfg_.steps)) {
                save_checkpoint(cfg_.checkpoint_path);
            }
        }
        if (csv) std::fclose(csv);
        return res;
    }

    unet::WeightsMeta weights_meta() const {
        unet::WeightsMeta meta;
        meta.T = uint32_t(cfg_.schedule.T);
        meta.beta = cfg_.schedule.beta;
        meta.sigma_literal_beta = cfg_.schedule.sigma_literal_beta;
        meta.data_scale = cfg_.data_scale;
        return meta;
    }

    void save_checkpoint(const std::string& path) const {
        unet::TrainerState ts;
        ts.present = true;
        ts.global_step = uint64_t(step_);
        ts.rng_counter = rng_.counter();
        unet::save_weights(path, *net_, weights_meta(), ts);
    }

    unet::UNet<T>& net() { return *net_; }
    const unet::UNet<T>& net() const { return *net_; }
    int step() const { return step_; }
    const TrainConfig& config() const { return cfg_; }

  private:
    TrainConfig cfg_;
    std::map<int, std::vector<transport::GridField>> datasets_;
    std::unique_ptr<unet::UNet<T>> net_;
    SeededRng rng_;
    int step_ = 0;
};

}  // namespace dpts::diffusion
