#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "dpts/metrics.hpp"
#include "dpts/samplers.hpp"
#include "dpts/transport.hpp"

using namespace dpts;
using namespace dpts::metrics;

TEST_CASE("Warnock discrepancy of the origin point", "[metrics]") {
    PointSet ps;
    ps.pts.push_back({0.0, 0.0});
    CHECK(l2_discrepancy_sq(ps) == Catch::Approx(11.0 / 18.0).margin(1e-12));
    CHECK(l2_discrepancy(ps) == Catch::Approx(std::sqrt(11.0 / 18.0)).margin(1e-12));
}

TEST_CASE("Warnock closed form agrees with the box Monte Carlo definition", "[metrics]") {
    for (int rep = 0; rep < 5; ++rep) {
        PointSet ps = samplers::whitenoise(32, SeededRng(100, uint64_t(rep)));
        double closed = l2_discrepancy_sq(ps);
        BoxMcResult mc = l2_discrepancy_sq_boxmc(ps, 1000000, SeededRng(101, uint64_t(rep)));
        CHECK(std::fabs(closed - mc.mean) <= 3.0 * mc.std_error);
    }
}

TEST_CASE("min distance on a 3-4-5 triangle", "[metrics]") {
    PointSet ps;
    ps.pts = {{0.0, 0.0}, {0.3, 0.4}};
    CHECK(min_distance(ps) == Catch::Approx(0.5).margin(1e-15));

    PointSet one;
    one.pts = {{0.5, 0.5}};
    CHECK_THROWS_WITH(min_distance(one), Catch::Matchers::ContainsSubstring(">= 2 points"));
}

TEST_CASE("grid min distance equals the quadratic loop", "[metrics]") {
    for (int rep = 0; rep < 100; ++rep) {
        SeededRng rng(102, uint64_t(rep));
        int n = 2 + int(rng.next_below(511));
        PointSet ps = samplers::whitenoise(n, rng.fork(1));
        CHECK(min_distance(ps) == min_distance_bruteforce(ps));
    }
}

TEST_CASE("single-point periodogram is one everywhere", "[metrics]") {
    std::vector<PointSet> sets(3);
    sets[0].pts = {{0.3, 0.7}};
    sets[1].pts = {{0.123, 0.456}};
    sets[2].pts = {{0.0, 0.0}};
    SpectrumGrid grid = power_spectrum(sets, 16);
    for (double v : grid.power) CHECK(v == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("radial bins land on the plotting grid", "[metrics]") {
    std::vector<PointSet> sets = {samplers::whitenoise(64, SeededRng(103, 0))};
    RadialSpectrum rs = radial_mean(power_spectrum(sets, 64), 64);
    REQUIRE(rs.nu.size() == 79);
    CHECK(rs.nu.front() == Catch::Approx(0.0625));
    CHECK(rs.nu.back() == Catch::Approx(4.9375));
}

TEST_CASE("spectrum averaging is deterministic across thread counts", "[metrics]") {
    std::vector<PointSet> sets;
    for (int r = 0; r < 9; ++r) sets.push_back(samplers::whitenoise(64, SeededRng(104, uint64_t(r))));
    SpectrumGrid a = power_spectrum(sets, 32);
    SpectrumGrid b = power_spectrum(sets, 32);
    for (size_t i = 0; i < a.power.size(); ++i) CHECK(a.power[i] == b.power[i]);
}

namespace {

// numerical-quadrature oracle for the projected-uniform quantile moments
double quad_m1(const metrics::detail::ProjectedUniform& pu, double u, int steps = 200000) {
    double acc = 0.0;
    for (int i = 0; i < steps; ++i) acc += pu.quantile((i + 0.5) * u / steps);
    return acc * u / steps;
}

double quad_m2(const metrics::detail::ProjectedUniform& pu, double u, int steps = 200000) {
    double acc = 0.0;
    for (int i = 0; i < steps; ++i) {
        double q = pu.quantile((i + 0.5) * u / steps);
        acc += q * q;
    }
    return acc * u / steps;
}

}  // namespace

TEST_CASE("projected-uniform moment formulas agree with quadrature", "[metrics]") {
    for (double theta : {0.0, 0.31, 0.785398, 1.2, 1.9, 2.7}) {
        double c = std::cos(theta), s = std::sin(theta);
        metrics::detail::ProjectedUniform pu{std::max(std::fabs(c), std::fabs(s)), std::min(std::fabs(c), std::fabs(s))};
        for (double u : {0.1, 0.3, 0.5, 0.8, 1.0}) {
            CHECK(pu.m1(u) == Catch::Approx(quad_m1(pu, u)).margin(2e-5));
            CHECK(pu.m2(u) == Catch::Approx(quad_m2(pu, u)).margin(2e-5));
        }
    }
}

TEST_CASE("sliced OT of a centered point equals the direction-averaged variance", "[metrics]") {
    PointSet center;
    center.pts = {{0.5, 0.5}};
    // for every direction the projected uniform has variance 1/12 and the
    // centered point sits at its mean
    CHECK(ot_energy_sliced(center, 256) == Catch::Approx(1.0 / 12.0).epsilon(1e-6));
}

TEST_CASE("exact OT of a centered point approaches the uniform second moment", "[metrics]") {
    PointSet center;
    center.pts = {{0.5, 0.5}};
    double e = ot_energy_exact_small(center, 0x5357u, 4096);
    CHECK(e == Catch::Approx(1.0 / 6.0).epsilon(0.02));
}

TEST_CASE("exact OT energy drops for stratified layouts", "[metrics]") {
    PointSet centers = transport::strata_centers(16);  // n = 256
    double stratified_e = ot_energy_exact_small(centers);
    double wn_mean = 0.0;
    for (int s = 0; s < 2; ++s)
        wn_mean += ot_energy_exact_small(samplers::whitenoise(256, SeededRng(105, uint64_t(s))));
    wn_mean /= 2.0;
    CHECK(stratified_e * 5.0 <= wn_mean);
}

TEST_CASE("sliced OT energy drops for stratified layouts at n=256", "[metrics]") {
    PointSet centers = transport::strata_centers(16);
    double stratified_e = ot_energy_sliced(centers);
    double wn_mean = 0.0;
    for (int s = 0; s < 8; ++s) wn_mean += ot_energy_sliced(samplers::whitenoise(256, SeededRng(106, uint64_t(s))));
    wn_mean /= 8.0;
    CHECK(stratified_e * 5.0 <= wn_mean);
}

TEST_CASE("sliced and exact OT rank point sets identically", "[metrics]") {
    // clearly separated uniformity levels at n = 16
    std::vector<PointSet> sets;
    sets.push_back(transport::strata_centers(4));
    sets.push_back(samplers::stratified_jitter(16, SeededRng(107, 0)));
    sets.push_back(samplers::sobol_owen(16, SeededRng(107, 1)));
    sets.push_back(samplers::poisson_disk(16, SeededRng(107, 2)));
    sets.push_back(samplers::whitenoise(16, SeededRng(107, 3)));
    // clustered: all points crammed into a corner
    PointSet clump;
    for (int i = 0; i < 16; ++i) clump.pts.push_back({0.05 + 0.01 * (i % 4), 0.05 + 0.01 * (i / 4)});
    sets.push_back(clump);
    // half-square strip
    PointSet strip;
    for (int i = 0; i < 16; ++i) strip.pts.push_back({(i + 0.5) / 16.0, 0.25});
    sets.push_back(strip);

    std::vector<double> sliced, exact;
    for (const auto& ps : sets) {
        sliced.push_back(ot_energy_sliced(ps));
        exact.push_back(ot_energy_exact_small(ps));
    }
    auto rank = [](const std::vector<double>& v) {
        std::vector<int> idx(v.size());
        for (size_t i = 0; i < v.size(); ++i) idx[i] = int(i);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[size_t(a)] < v[size_t(b)]; });
        std::vector<int> r(v.size());
        for (size_t i = 0; i < v.size(); ++i) r[size_t(idx[i])] = int(i);
        return r;
    };
    CHECK(rank(sliced) == rank(exact));
}

TEST_CASE("constant integrands are integrated exactly by any point set", "[metrics]") {
    // (1/n) sum of a constant equals the constant; the estimator formula has
    // zero error regardless of the points
    PointSet ps = samplers::whitenoise(37, SeededRng(108, 0));
    const double c = 0.73;
    double est = 0.0;
    for (const Point2& p : ps.pts) {
        (void)p;
        est += c;
    }
    est /= ps.n();
    CHECK(est == Catch::Approx(c).margin(1e-15));
}

TEST_CASE("gaussian oracle moments are stable under refinement", "[metrics]") {
    GaussianIntegrand g{0.4, 0.6, 0.7, 0.2, 0.1};
    IntegrandMoments coarse = gaussian_midpoint_moments(g, 512);
    IntegrandMoments fine = gaussian_midpoint_moments(g, 2048);
    CHECK(coarse.mean == Catch::Approx(fine.mean).epsilon(1e-5));
    CHECK(coarse.mean2 == Catch::Approx(fine.mean2).epsilon(1e-5));
}

TEST_CASE("white-noise gaussian MSE matches the iid variance oracle", "[metrics]") {
    // errors of one point set are correlated across integrands, so the
    // standard error comes from independent replicate sets
    const int n = 256, K = 1024, sets = 24;
    GaussianMseEvaluator eval(K, SeededRng(109, 0));
    double theory = 0.0;
    for (const auto& m : eval.references()) theory += (m.mean2 - m.mean * m.mean) / n;
    theory /= K;
    double sum = 0.0, sum2 = 0.0;
    for (int s = 0; s < sets; ++s) {
        double mse = eval.mse(samplers::whitenoise(n, SeededRng(110, uint64_t(s))));
        sum += mse;
        sum2 += mse * mse;
    }
    double mean = sum / sets;
    double sd = std::sqrt(std::max(0.0, sum2 / sets - mean * mean));
    CHECK(mean == Catch::Approx(theory).margin(3.0 * sd / std::sqrt(double(sets))));
}

TEST_CASE("low-discrepancy points cut the gaussian integration error", "[metrics]") {
    const int n = 1024, K = 1024;
    GaussianMseEvaluator eval(K, SeededRng(111, 0));
    double mse_sobol = eval.mse(samplers::sobol_owen(n, SeededRng(112, 0)));
    double mse_wn = eval.mse(samplers::whitenoise(n, SeededRng(113, 0)));
    CHECK(mse_sobol * 4.0 <= mse_wn);
}

TEST_CASE("heaviside references are exact polygon areas", "[metrics]") {
    HeavisideIntegrand full{0.0, 0.0, 1.0, 0.0};  // half-plane x >= 0 covers the square
    CHECK(full.area() == Catch::Approx(1.0).margin(1e-12));
    PointSet ps = samplers::whitenoise(64, SeededRng(114, 0));
    int cnt = 0;
    for (const Point2& p : ps.pts) cnt += full.inside(p.x, p.y) ? 1 : 0;
    CHECK(cnt == ps.n());

    HeavisideIntegrand half{0.5, 0.3, 1.0, 0.0};  // vertical line x = 0.5
    CHECK(half.area() == Catch::Approx(0.5).margin(1e-12));

    HeavisideIntegrand diag{0.5, 0.5, std::sqrt(0.5), std::sqrt(0.5)};
    CHECK(diag.area() == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("white-noise heaviside MSE matches the Bernoulli variance oracle", "[metrics]") {
    const int n = 256, K = 1024, sets = 24;
    HeavisideMseEvaluator eval(K, SeededRng(115, 0));
    double theory = 0.0;
    for (double a : eval.references()) theory += a * (1.0 - a) / n;
    theory /= K;
    double sum = 0.0, sum2 = 0.0;
    for (int s = 0; s < sets; ++s) {
        double mse = eval.mse(samplers::whitenoise(n, SeededRng(116, uint64_t(s))));
        sum += mse;
        sum2 += mse * mse;
    }
    double mean = sum / sets;
    double sd = std::sqrt(std::max(0.0, sum2 / sets - mean * mean));
    CHECK(mean == Catch::Approx(theory).margin(3.0 * sd / std::sqrt(double(sets))));
}

TEST_CASE("density match for uniform pooled white noise", "[metrics]") {
    std::vector<PointSet> sets;
    for (int s = 0; s < 10; ++s) sets.push_back(samplers::whitenoise(100000, SeededRng(117, uint64_t(s))));
    double l1 = density_match(sets, DensitySpec::uniform(), 32);
    // multinomial noise floor: E L1 ~ sum_c sqrt(2 p_c (1-p_c) / (pi N))
    double noise_floor = 1024.0 * std::sqrt(2.0 * (1.0 / 1024.0) / (3.14159265 * 1e6));
    CHECK(l1 <= std::max(0.01, 1.5 * noise_floor));
}

TEST_CASE("density match for the exact ramp sampler", "[metrics]") {
    // 1-d marginal comparison at 32 bins, pooled n = 1e5
    PointSet warped = samplers::warp_ramp(samplers::whitenoise(100000, SeededRng(118, 0)), DensitySpec::linear_ramp());
    const int bins = 32;
    std::vector<double> hist(size_t(bins), 0.0);
    for (const Point2& p : warped.pts) hist[size_t(std::min(bins - 1, int(p.x * bins)))] += 1.0 / warped.n();
    double l1 = 0.0;
    for (int b = 0; b < bins; ++b) {
        double a = double(b) / bins, c = double(b + 1) / bins;
        l1 += std::fabs(hist[size_t(b)] - (c * c - a * a));
    }
    CHECK(l1 <= 0.02);
}

TEST_CASE("unwarp turns ramp samples uniform", "[metrics]") {
    DensitySpec ramp = DensitySpec::linear_ramp();

    // identity on uniform densities
    PointSet wn = samplers::whitenoise(512, SeededRng(119, 0));
    PointSet same = unwarp(wn, DensitySpec::uniform());
    for (int i = 0; i < wn.n(); ++i) CHECK(same[i].x == wn[i].x);

    // unwarp of warp is the identity
    PointSet uni = samplers::whitenoise(4096, SeededRng(120, 0));
    PointSet round = unwarp(samplers::warp_ramp(uni, ramp), ramp);
    for (int i = 0; i < uni.n(); ++i) {
        CHECK(round[i].x == Catch::Approx(uni[i].x).margin(1e-12));
        CHECK(round[i].y == uni[i].y);
    }

    // unwarped ramp samples behave like white noise under sliced OT
    PointSet ramped = samplers::warp_ramp(samplers::whitenoise(256, SeededRng(121, 0)), ramp);
    double unwarped_e = ot_energy_sliced(unwarp(ramped, ramp));
    double wn_mean = 0.0;
    for (int s = 0; s < 16; ++s) wn_mean += ot_energy_sliced(samplers::whitenoise(256, SeededRng(122, uint64_t(s))));
    wn_mean /= 16.0;
    CHECK(unwarped_e <= 2.0 * wn_mean);

    CHECK_THROWS_AS(unwarp(wn, DensitySpec::blobby()), UsageError);
}

TEST_CASE("violin export round-trips groups and quantiles", "[metrics]") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "dpts_metrics_tests";
    fs::create_directories(dir);
    std::string path = (dir / "violin.csv").string();

    std::map<std::string, std::vector<double>> groups;
    groups["alpha"] = {1.0, 2.0, 3.0, 4.0, 5.0};
    groups["beta"] = {0.25};
    groups["gamma"] = {-1.5, 0.5, 2.5, 0.0, 7.0, 3.25, 0.125};
    violin_export(groups, path);
    std::vector<ViolinRow> rows = read_violin(path);
    REQUIRE(rows.size() == 3);
    for (const auto& row : rows) {
        const auto& orig = groups[row.group];
        REQUIRE(row.values.size() == orig.size());
        for (size_t i = 0; i < orig.size(); ++i) CHECK(row.values[i] == orig[i]);
        std::vector<double> sorted = orig;
        std::sort(sorted.begin(), sorted.end());
        CHECK(row.q50 == Catch::Approx(quantile_sorted(sorted, 0.5)).margin(1e-12));
        CHECK(row.q05 <= row.q25);
        CHECK(row.q25 <= row.q50);
        CHECK(row.q50 <= row.q75);
        CHECK(row.q75 <= row.q95);
    }
}

TEST_CASE("discrepancy rejects empty input", "[metrics]") {
    PointSet empty;
    CHECK_THROWS_AS(l2_discrepancy(empty), DataError);
}
