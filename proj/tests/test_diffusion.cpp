#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <map>
#include <vector>

#include "dpts/diffusion.hpp"
#include "dpts/samplers.hpp"

using namespace dpts;
using namespace dpts::diffusion;

namespace {

std::vector<transport::GridField> stratified_fields(int side, int count, uint64_t seed) {
    std::vector<transport::GridField> out;
    out.reserve(size_t(count));
    for (int i = 0; i < count; ++i)
        out.push_back(transport::embed(samplers::stratified_jitter(side * side, SeededRng(seed, uint64_t(i))), side));
    return out;
}

// draws the same gaussians sample_fields() uses for its initial fields
std::vector<std::vector<float>> mirror_initial_fields(int side, int count, SeededRng& rng) {
    std::vector<std::vector<float>> fields(static_cast<size_t>(count));
    size_t elems = size_t(side) * side * 2;
    for (auto& f : fields) {
        f.resize(elems);
        for (auto& v : f) v = float(rng.next_gaussian());
    }
    return fields;
}

}  // namespace

TEST_CASE("alpha_bar closed form equals the iterated product", "[diffusion]") {
    Schedule s;
    s.T = 1000;
    s.beta = 1e-2;
    double prod = 1.0;
    for (int t = 1; t <= s.T; ++t) {
        prod *= s.alpha();
        double closed = s.alpha_bar(t);
        CHECK(std::fabs(closed - prod) / prod <= 1e-12);
    }
    CHECK(s.alpha_bar(0) == 1.0);
    for (int t = 1; t <= s.T; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
}

TEST_CASE("schedule validation", "[diffusion]") {
    Schedule s;
    s.beta = 0.0;
    CHECK_THROWS_AS(s.validate(), DataError);
    s.beta = 1.5;
    CHECK_THROWS_AS(s.validate(), DataError);
    s.beta = 0.1;
    s.T = 0;
    CHECK_THROWS_AS(s.validate(), DataError);
}

TEST_CASE("q_sample at t=0 returns x0 exactly", "[diffusion]") {
    Schedule s;
    s.T = 100;
    s.beta = 0.02;
    std::vector<float> x0 = {0.5f, -1.25f, 2.0f, 0.0f};
    std::vector<float> eps = {1.0f, 1.0f, 1.0f, 1.0f};
    std::vector<float> xt = q_sample(x0, 0, eps, s);
    for (size_t i = 0; i < x0.size(); ++i) CHECK(xt[i] == x0[i]);
}

TEST_CASE("q_sample coefficients at beta=0.02, t=2", "[diffusion]") {
    Schedule s;
    s.T = 100;
    s.beta = 0.02;
    std::vector<double> ones = {1.0}, zeros = {0.0};
    double c0 = q_sample(ones, 2, zeros, s)[0];
    double c1 = q_sample(zeros, 2, ones, s)[0];
    CHECK(c0 == Catch::Approx(std::sqrt(0.9604)).margin(1e-12));
    CHECK(c1 == Catch::Approx(std::sqrt(0.0396)).margin(1e-12));
}

TEST_CASE("q_sample matches the closed-form moments", "[diffusion]") {
    Schedule s;
    s.T = 50;
    s.beta = 0.02;
    const int draws = 100000;
    std::vector<double> x0 = {0.8, -0.4, 1.2, 0.1, -1.0, 0.5, 0.0, 2.0};
    SeededRng rng(1, 0);
    std::vector<double> mean(x0.size(), 0.0), m2(x0.size(), 0.0);
    std::vector<double> eps(x0.size());
    for (int d = 0; d < draws; ++d) {
        for (auto& e : eps) e = rng.next_gaussian();
        std::vector<double> xt = q_sample(x0, s.T, eps, s);
        for (size_t i = 0; i < x0.size(); ++i) {
            mean[i] += xt[i];
            m2[i] += xt[i] * xt[i];
        }
    }
    double ab = s.alpha_bar(s.T);
    double want_var = 1.0 - ab;
    for (size_t i = 0; i < x0.size(); ++i) {
        mean[i] /= draws;
        double var = m2[i] / draws - mean[i] * mean[i];
        double mean_se = std::sqrt(want_var / draws);
        double var_se = want_var * std::sqrt(2.0 / (draws - 1.0));
        CHECK(mean[i] == Catch::Approx(std::sqrt(ab) * x0[i]).margin(3.0 * mean_se));
        CHECK(var == Catch::Approx(want_var).margin(3.0 * var_se));
    }
}

TEST_CASE("iterated one-step transitions match the closed form in distribution", "[diffusion]") {
    Schedule s;
    s.T = 5;
    s.beta = 0.05;
    const int draws = 100000;
    const double x0 = 0.7;
    SeededRng rng(2, 0);
    double sum = 0.0, sum2 = 0.0;
    for (int d = 0; d < draws; ++d) {
        double x = x0;
        for (int t = 1; t <= s.T; ++t) x = std::sqrt(1.0 - s.beta) * x + std::sqrt(s.beta) * rng.next_gaussian();
        sum += x;
        sum2 += x * x;
    }
    double mean = sum / draws;
    double var = sum2 / draws - mean * mean;
    double ab = s.alpha_bar(s.T);
    CHECK(mean == Catch::Approx(std::sqrt(ab) * x0).margin(3.0 * std::sqrt((1.0 - ab) / draws)));
    CHECK(var == Catch::Approx(1.0 - ab).margin(3.0 * (1.0 - ab) * std::sqrt(2.0 / (draws - 1.0))));
}

TEST_CASE("a perfect noise-predicting stub drives the loss to zero", "[diffusion]") {
    Schedule s;
    s.T = 40;
    s.beta = 0.05;
    // with x0 = 0 the noised field is sqrt(1-abar)*eps, so scaling the input
    // back up reproduces eps exactly
    std::vector<transport::GridField> zero_fields(4, transport::GridField(8));
    std::vector<std::vector<const transport::GridField*>> batches(1);
    for (const auto& f : zero_fields) batches[0].push_back(&f);

    SeededRng rng(3, 0);
    ag::Tape<float> tape;
    auto stub = [&](ag::Tape<float>& tp, ag::Tensor<float> x, const std::vector<int>& ts) {
        return ag::scale(x, 1.0 / std::sqrt(1.0 - s.alpha_bar(ts[0])));
    };
    // all elements in one batch share no single t, so evaluate per-element
    // batches of size 1
    double total = 0.0;
    for (int rep = 0; rep < 8; ++rep) {
        std::vector<std::vector<const transport::GridField*>> one(1);
        one[0] = {&zero_fields[0]};
        ag::Tape<float> t2;
        total += double(t2.cval(diffusion_loss(t2, stub, one, s, rng))[0]);
    }
    CHECK(total / 8.0 <= 1e-10);
}

TEST_CASE("a zero stub has expected loss equal to the size count", "[diffusion]") {
    Schedule s;
    s.T = 40;
    s.beta = 0.05;
    std::vector<transport::GridField> f8(2, transport::GridField(8));
    std::vector<transport::GridField> f16(2, transport::GridField(16));
    std::vector<std::vector<const transport::GridField*>> batches(2);
    for (const auto& f : f8) batches[0].push_back(&f);
    for (const auto& f : f16) batches[1].push_back(&f);

    auto zero_stub = [](ag::Tape<float>& tp, ag::Tensor<float> x, const std::vector<int>&) {
        return ag::scale(x, 0.0);
    };
    SeededRng rng(4, 0);
    double total = 0.0;
    const int reps = 256;
    for (int rep = 0; rep < reps; ++rep) {
        ag::Tape<float> tape;
        total += double(tape.cval(diffusion_loss(tape, zero_stub, batches, s, rng))[0]);
    }
    CHECK(total / reps == Catch::Approx(2.0).epsilon(0.05));
}

TEST_CASE("diffusion loss draws are deterministic given the rng state", "[diffusion]") {
    Schedule s;
    s.T = 40;
    s.beta = 0.05;
    std::vector<transport::GridField> data = stratified_fields(8, 4, 99);
    std::vector<std::vector<const transport::GridField*>> batches(1);
    for (const auto& f : data) batches[0].push_back(&f);
    auto zero_stub = [](ag::Tape<float>& tp, ag::Tensor<float> x, const std::vector<int>&) {
        return ag::scale(x, 0.0);
    };
    std::vector<double> seq1, seq2;
    for (int pass = 0; pass < 2; ++pass) {
        SeededRng rng(5, 0);
        auto& seq = pass == 0 ? seq1 : seq2;
        for (int i = 0; i < 5; ++i) {
            ag::Tape<float> tape;
            seq.push_back(double(tape.cval(diffusion_loss(tape, zero_stub, batches, s, rng))[0]));
        }
    }
    for (size_t i = 0; i < seq1.size(); ++i) CHECK(seq1[i] == seq2[i]);
}

TEST_CASE("zero-denoiser reverse chain telescopes to x_T / sqrt(alpha_bar)", "[diffusion]") {
    Schedule s;
    s.T = 50;
    s.beta = 0.02;
    s.zero_reverse_noise = true;
    const int side = 4;
    auto zero_stub = [](ag::Tape<float>& tp, ag::Tensor<float> x, const std::vector<int>&) {
        return ag::scale(x, 0.0);
    };

    for (int steps : {0, 10, 1}) {
        SeededRng rng(6, 0);
        std::vector<std::vector<float>> fields = sample_fields<float>(zero_stub, side, 3, s, rng, steps);
        SeededRng mirror(6, 0);
        std::vector<std::vector<float>> init = mirror_initial_fields(side, 3, mirror);
        double scale_factor = 1.0 / std::sqrt(s.alpha_bar(s.T));
        for (int f = 0; f < 3; ++f)
            for (size_t i = 0; i < init[size_t(f)].size(); ++i) {
                double want = double(init[size_t(f)][i]) * scale_factor;
                CHECK(fields[size_t(f)][i] == Catch::Approx(want).epsilon(1e-4));
            }
    }
}

TEST_CASE("strided sub-schedule selects increasing steps ending at T", "[diffusion]") {
    std::vector<int> taus = strided_steps(1000, 100);
    REQUIRE(taus.size() == 100);
    CHECK(taus.front() == 10);
    CHECK(taus.back() == 1000);
    for (size_t i = 1; i < taus.size(); ++i) CHECK(taus[i] > taus[i - 1]);

    std::vector<int> all = strided_steps(50, 50);
    for (int i = 0; i < 50; ++i) CHECK(all[size_t(i)] == i + 1);

    CHECK_THROWS_AS(strided_steps(100, 101), DataError);
}

TEST_CASE("reverse chain with the exact posterior-mean denoiser recovers the data moments", "[diffusion]") {
    // scalar linear-Gaussian task: x0 ~ N(mu0, sigma0^2) per entry
    const double mu0 = 0.3, sigma0 = 0.5;
    Schedule s;
    s.T = 2000;
    s.beta = 0.005;

    auto oracle = [&](ag::Tape<float>& tp, ag::Tensor<float> x, const std::vector<int>& ts) {
        double ab = s.alpha_bar(ts[0]);
        double denom = ab * sigma0 * sigma0 + 1.0 - ab;
        // eps_hat = (x - sqrt(ab) * E[x0|x]) / sqrt(1-ab), affine in x
        double slope = (1.0 - std::sqrt(ab) * (std::sqrt(ab) * sigma0 * sigma0) / denom) / std::sqrt(1.0 - ab);
        double intercept = -std::sqrt(ab) * ((1.0 - ab) * mu0 / denom) / std::sqrt(1.0 - ab);
        ag::Tensor<float> scaled = ag::scale(x, slope);
        std::vector<float> c(size_t(ag::numel(tp.shape(x))), float(intercept));
        return ag::add(scaled, tp.leaf(tp.shape(x), c, false));
    };

    SeededRng rng(7, 0);
    const int runs = 5000;  // side-1 fields carry 2 entries each -> 10^4 samples
    std::vector<std::vector<float>> fields = sample_fields<float>(oracle, 1, runs, s, rng);
    double sum = 0.0, sum2 = 0.0;
    int n = 0;
    for (const auto& f : fields)
        for (float v : f) {
            sum += v;
            sum2 += double(v) * v;
            ++n;
        }
    double mean = sum / n;
    double var = sum2 / n - mean * mean;
    double mean_se = sigma0 / std::sqrt(double(n));
    double var_se = sigma0 * sigma0 * std::sqrt(2.0 / (n - 1.0));
    CHECK(mean == Catch::Approx(mu0).margin(3.0 * mean_se));
    CHECK(var == Catch::Approx(sigma0 * sigma0).margin(3.0 * var_se));
}

TEST_CASE("training on a toy task reduces the loss", "[diffusion]") {
    TrainConfig cfg;
    cfg.sides = {8};
    cfg.batch = 8;
    cfg.steps = 400;
    cfg.lr = 2e-3;
    cfg.seed = 11;
    cfg.schedule.T = 100;
    cfg.schedule.beta = 0.05;
    cfg.unet_config.levels = 3;
    cfg.unet_config.base_channels = 8;
    cfg.unet_config.channel_mult = {1, 2, 2};
    cfg.unet_config.time_embed_dim = 32;

    std::map<int, std::vector<transport::GridField>> data;
    data[8] = stratified_fields(8, 64, 123);
    Trainer<float> trainer(cfg, std::move(data));
    TrainResult res = trainer.run();
    REQUIRE(int(res.loss_curve.size()) == cfg.steps);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 100; ++i) {
        first += res.loss_curve[size_t(i)].second;
        last += res.loss_curve[size_t(cfg.steps - 100 + i)].second;
    }
    CHECK(last < 0.5 * first);
}

TEST_CASE("training runs in the 32-set small-data regime", "[diffusion]") {
    TrainConfig cfg;
    cfg.sides = {8};
    cfg.batch = 4;
    cfg.steps = 10;
    cfg.seed = 12;
    cfg.schedule.T = 50;
    cfg.schedule.beta = 0.02;
    cfg.unet_config.base_channels = 8;
    cfg.unet_config.time_embed_dim = 32;
    std::map<int, std::vector<transport::GridField>> data;
    data[8] = stratified_fields(8, 32, 321);
    Trainer<float> trainer(cfg, std::move(data));
    TrainResult res = trainer.run();
    CHECK(res.loss_curve.size() == 10);
    for (auto& [step, loss] : res.loss_curve) CHECK(std::isfinite(loss));
}

TEST_CASE("two equal-seed trainings produce bitwise-equal loss sequences", "[diffusion]") {
    auto run_losses = [] {
        TrainConfig cfg;
        cfg.sides = {8};
        cfg.batch = 4;
        cfg.steps = 5;
        cfg.seed = 13;
        cfg.schedule.T = 50;
        cfg.schedule.beta = 0.02;
        cfg.unet_config.base_channels = 8;
        cfg.unet_config.time_embed_dim = 32;
        std::map<int, std::vector<transport::GridField>> data;
        data[8] = stratified_fields(8, 16, 55);
        Trainer<float> trainer(cfg, std::move(data));
        return trainer.run().loss_curve;
    };
    auto a = run_losses();
    auto b = run_losses();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].second == b[i].second);
}

TEST_CASE("resuming a checkpoint reproduces the next loss bitwise", "[diffusion]") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "dpts_diffusion_tests";
    fs::create_directories(dir);
    std::string ckpt = (dir / "ckpt.pfwt").string();

    TrainConfig cfg;
    cfg.sides = {8};
    cfg.batch = 4;
    cfg.steps = 5;
    cfg.seed = 14;
    cfg.schedule.T = 50;
    cfg.schedule.beta = 0.02;
    cfg.unet_config.base_channels = 8;
    cfg.unet_config.time_embed_dim = 32;
    cfg.checkpoint_path = ckpt;
    cfg.checkpoint_every = 5;

    auto make_data = [] {
        std::map<int, std::vector<transport::GridField>> data;
        data[8] = stratified_fields(8, 16, 77);
        return data;
    };

    // uninterrupted reference run of 7 steps
    TrainConfig cfg7 = cfg;
    cfg7.steps = 7;
    cfg7.checkpoint_path.clear();
    Trainer<float> reference(cfg7, make_data());
    auto ref_losses = reference.run().loss_curve;

    // checkpointed 5-step run, then resume to 7
    Trainer<float> first(cfg, make_data());
    first.run();
    TrainConfig cfg_resume = cfg;
    cfg_resume.steps = 7;
    Trainer<float> resumed(cfg_resume, make_data());
    resumed.resume(ckpt);
    CHECK(resumed.step() == 5);
    double l6 = resumed.do_step();
    double l7 = resumed.do_step();
    CHECK(l6 == ref_losses[5].second);
    CHECK(l7 == ref_losses[6].second);
}

TEST_CASE("sampling produces fields at trained and untrained sides", "[diffusion]") {
    unet::UNetConfig ucfg;
    ucfg.base_channels = 8;
    ucfg.time_embed_dim = 32;
    unet::UNet<float> net(ucfg, SeededRng(15, 0));
    Schedule s;
    s.T = 3;
    s.beta = 0.05;
    for (int side : {8, 16, 24, 32, 64}) {
        SeededRng rng(16, uint64_t(side));
        std::vector<transport::GridField> fields = sample(net, side, 1, s, rng);
        REQUIRE(fields.size() == 1);
        CHECK(fields[0].side == side);
        for (int k = 0; k < fields[0].n(); ++k) {
            CHECK(std::isfinite(fields[0].x(k)));
            CHECK(std::isfinite(fields[0].y(k)));
        }
    }
}

TEST_CASE("incompatible grid side is rejected by training", "[diffusion]") {
    TrainConfig cfg;
    cfg.sides = {10};  // not a multiple of 4
    cfg.batch = 2;
    cfg.steps = 1;
    cfg.unet_config.base_channels = 8;
    cfg.unet_config.time_embed_dim = 32;
    std::map<int, std::vector<transport::GridField>> data;
    data[10] = std::vector<transport::GridField>(4, transport::GridField(10));
    CHECK_THROWS_AS(Trainer<float>(cfg, std::move(data)), DataError);
}
