#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dpts/metrics.hpp"
#include "dpts/samplers.hpp"

using namespace dpts;
using namespace dpts::samplers;

TEST_CASE("plain Sobol' first points match the published sequence", "[samplers]") {
    PointSet ps = sobol_owen(4, SeededRng(0, 0), /*scramble=*/false);
    REQUIRE(ps.n() == 4);
    CHECK(ps[0].x == 0.0);
    CHECK(ps[0].y == 0.0);
    CHECK(ps[1].x == 0.5);
    CHECK(ps[1].y == 0.5);
    CHECK(ps[2].x == 0.75);
    CHECK(ps[2].y == 0.25);
    CHECK(ps[3].x == 0.25);
    CHECK(ps[3].y == 0.75);
}

TEST_CASE("plain Sobol' is seed-independent", "[samplers]") {
    PointSet a = sobol_owen(64, SeededRng(1, 1), false);
    PointSet b = sobol_owen(64, SeededRng(999, 7), false);
    for (int i = 0; i < 64; ++i) {
        CHECK(a[i].x == b[i].x);
        CHECK(a[i].y == b[i].y);
    }
}

namespace {

// brute-force check that every cell of a cols x rows grid holds one point
bool one_point_per_cell(const PointSet& ps, int cols, int rows) {
    std::vector<int> count(size_t(cols) * rows, 0);
    for (const Point2& p : ps.pts) {
        int cx = std::min(cols - 1, int(p.x * cols));
        int cy = std::min(rows - 1, int(p.y * rows));
        count[size_t(cy) * cols + cx]++;
    }
    for (int c : count)
        if (c != 1) return false;
    return true;
}

}  // namespace

TEST_CASE("Sobol' prefixes are nets: one point per stratum", "[samplers]") {
    for (int m = 1; m <= 10; ++m) {
        int n = 1 << m;
        PointSet plain = sobol_owen(n, SeededRng(0, 0), false);
        int cols = 1 << ((m + 1) / 2);
        int rows = 1 << (m / 2);
        CHECK(one_point_per_cell(plain, cols, rows));
        // Owen scrambling preserves the net property
        PointSet scrambled = sobol_owen(n, SeededRng(77, uint64_t(m)), true);
        CHECK(one_point_per_cell(scrambled, cols, rows));
    }
}

TEST_CASE("Owen-scrambled Sobol' beats white noise discrepancy", "[samplers]") {
    const int n = 256;
    double wn_mean = 0.0;
    for (int s = 0; s < 100; ++s) wn_mean += metrics::l2_discrepancy(whitenoise(n, SeededRng(500, uint64_t(s))));
    wn_mean /= 100.0;

    int below = 0;
    for (int s = 0; s < 100; ++s) {
        double d = metrics::l2_discrepancy(sobol_owen(n, SeededRng(600, uint64_t(s))));
        if (d < wn_mean) ++below;
    }
    CHECK(below >= 99);
}

TEST_CASE("rank-1 lattice evaluates the lattice formula", "[samplers]") {
    PointSet ps = rank1_lattice(5, {1, 2}, {0.0, 0.0});
    REQUIRE(ps.n() == 5);
    double expect[5][2] = {{0.0, 0.0}, {0.2, 0.4}, {0.4, 0.8}, {0.6, 0.2}, {0.8, 0.6}};
    for (int i = 0; i < 5; ++i) {
        CHECK(ps[i].x == Catch::Approx(expect[i][0]).margin(1e-15));
        CHECK(ps[i].y == Catch::Approx(expect[i][1]).margin(1e-15));
    }

    PointSet single = rank1_lattice(1, {1, 1}, {0.3, 0.7});
    CHECK(single[0].x == 0.3);
    CHECK(single[0].y == 0.7);

    PointSet from_zero = rank1_lattice(7, {1, 3}, {0.0, 0.0});
    CHECK(from_zero[0].x == 0.0);
    CHECK(from_zero[0].y == 0.0);
}

TEST_CASE("rank-1 lattice is toroidally shift-equivariant", "[samplers]") {
    SeededRng rng(21, 0);
    for (int rep = 0; rep < 20; ++rep) {
        int n = 5 + int(rng.next_below(60));
        auto g = rank1_default_generator(n);
        Point2 shift{rng.next_double(), rng.next_double()};
        PointSet base = rank1_lattice(n, g, {0.0, 0.0});
        PointSet shifted = rank1_lattice(n, g, shift);
        for (int i = 0; i < n; ++i) {
            Point2 expect = wrap_unit(base[i].x + shift.x, base[i].y + shift.y);
            CHECK(shifted[i].x == Catch::Approx(expect.x).margin(1e-12));
            CHECK(shifted[i].y == Catch::Approx(expect.y).margin(1e-12));
        }
    }
}

TEST_CASE("poisson disk respects its own radius", "[samplers]") {
    PoissonDiskResult res = poisson_disk_full(256, SeededRng(8, 0));
    REQUIRE(res.points.n() == 256);
    double min_d2 = 1e30;
    for (int i = 0; i < 256; ++i)
        for (int j = i + 1; j < 256; ++j) min_d2 = std::min(min_d2, toroidal_dist2(res.points[i], res.points[j]));
    CHECK(std::sqrt(min_d2) >= res.radius);

    PointSet one = poisson_disk(1, SeededRng(9, 0));
    REQUIRE(one.n() == 1);
    CHECK((one[0].x >= 0.0 && one[0].x < 1.0));
}

TEST_CASE("poisson disk spectrum is blue", "[samplers]") {
    std::vector<PointSet> sets;
    for (int r = 0; r < 128; ++r) sets.push_back(poisson_disk(256, SeededRng(42, uint64_t(r))));
    metrics::SpectrumGrid grid = metrics::power_spectrum(sets, 128);
    metrics::RadialSpectrum rs = metrics::radial_mean(grid, 256);
    for (size_t b = 0; b < rs.nu.size(); ++b) {
        if (std::isnan(rs.power[b])) continue;
        if (rs.nu[b] < 0.5) CHECK(rs.power[b] < 0.2);
        if (rs.nu[b] >= 2.0) CHECK(rs.power[b] == Catch::Approx(1.0).margin(0.25));
    }
}

TEST_CASE("stratified jitter fills every stratum", "[samplers]") {
    PointSet quad = stratified_jitter(4, SeededRng(1, 0));
    bool seen[2][2] = {};
    for (const Point2& p : quad.pts) seen[int(p.y * 2)][int(p.x * 2)] = true;
    CHECK((seen[0][0] && seen[0][1] && seen[1][0] && seen[1][1]));

    PointSet one = stratified_jitter(1, SeededRng(2, 0));
    CHECK(one.n() == 1);

    CHECK_THROWS_AS(stratified_jitter(5, SeededRng(3, 0)), DataError);
}

TEST_CASE("white noise basic statistics", "[samplers]") {
    const int n = 100000;
    PointSet ps = whitenoise(n, SeededRng(4, 0));
    double mx = 0.0, my = 0.0;
    for (const Point2& p : ps.pts) {
        REQUIRE((p.x >= 0.0 && p.x < 1.0));
        REQUIRE((p.y >= 0.0 && p.y < 1.0));
        mx += p.x;
        my += p.y;
    }
    double sigma = 1.0 / std::sqrt(12.0 * n);
    CHECK(mx / n == Catch::Approx(0.5).margin(3.0 * sigma));
    CHECK(my / n == Catch::Approx(0.5).margin(3.0 * sigma));
}

TEST_CASE("white noise radial spectrum is flat", "[samplers]") {
    std::vector<PointSet> sets;
    for (int r = 0; r < 128; ++r) sets.push_back(whitenoise(256, SeededRng(11, uint64_t(r))));
    metrics::RadialSpectrum rs = metrics::radial_mean(metrics::power_spectrum(sets, 128), 256);
    for (size_t b = 0; b < rs.nu.size(); ++b) {
        if (std::isnan(rs.power[b]) || rs.nu[b] < 0.5) continue;
        CHECK(rs.power[b] == Catch::Approx(1.0).margin(0.15));
    }
}

TEST_CASE("rejection with uniform density passes the base through", "[samplers]") {
    SeededRng rng(31, 0);
    PointSet accepted = rejection_sample("whitenoise", DensitySpec::uniform(), 100, rng);
    CandidateStream stream = make_candidate_stream("whitenoise", rng.fork(1));
    for (int i = 0; i < 100; ++i) {
        Point2 cand = stream.next();
        CHECK(accepted[i].x == cand.x);
        CHECK(accepted[i].y == cand.y);
    }
}

TEST_CASE("rejection reproduces the ramp marginal", "[samplers]") {
    const int n = 100000;
    PointSet ps = rejection_sample("whitenoise", DensitySpec::linear_ramp(), n, SeededRng(32, 0));
    const int bins = 32;
    std::vector<double> hist(size_t(bins), 0.0);
    for (const Point2& p : ps.pts) hist[size_t(std::min(bins - 1, int(p.x * bins)))] += 1.0 / n;
    double l1 = 0.0;
    for (int b = 0; b < bins; ++b) {
        double a = double(b) / bins, c = double(b + 1) / bins;
        l1 += std::fabs(hist[size_t(b)] - (c * c - a * a));
    }
    CHECK(l1 <= 0.02);
}

TEST_CASE("rejection reproduces the blobby density", "[samplers]") {
    DensitySpec blobby = DensitySpec::blobby();
    std::vector<PointSet> sets;
    for (int s = 0; s < 64; ++s)
        sets.push_back(rejection_sample("stratified", blobby, 4096, SeededRng(33, uint64_t(s))));
    double l1 = metrics::density_match(sets, blobby, 32);
    CHECK(l1 <= 0.05);
}

TEST_CASE("rejection rejects a hopeless bound", "[samplers]") {
    // density with tiny mean against a huge bound -> acceptance below 1e-4
    DensitySpec narrow = DensitySpec::expression("exp(0-2000*((x-0.5)*(x-0.5)+(y-0.5)*(y-0.5)))", 50000.0);
    CHECK_THROWS_WITH(rejection_sample("whitenoise", narrow, 10, SeededRng(34, 0)),
                      Catch::Matchers::ContainsSubstring("density bound too loose"));
}

TEST_CASE("exact ramp sampler matches the target CDF", "[samplers]") {
    DensitySpec ramp = DensitySpec::linear_ramp();
    PointSet uni = whitenoise(50000, SeededRng(35, 0));
    PointSet warped = warp_ramp(uni, ramp);
    // unwarp must invert the warp exactly
    for (int i = 0; i < 100; ++i) {
        double back = ramp.ramp_cdf(warped[i].x);
        CHECK(back == Catch::Approx(uni[i].x).margin(1e-12));
    }
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

TEST_CASE("density expression grammar", "[samplers]") {
    DensitySpec d = DensitySpec::expression("0.5 + 0.5*sin(pi*x)*sin(pi*y)");
    CHECK(d(0.5, 0.5) == Catch::Approx(1.0).margin(1e-12));
    CHECK(d(0.0, 0.0) == Catch::Approx(0.5).margin(1e-12));
    CHECK(d.bound() >= 1.0);

    DensitySpec pw = DensitySpec::expression("pow(x,2)+pow(y,2)", 2.0);
    CHECK(pw(0.5, 0.5) == Catch::Approx(0.5).margin(1e-12));

    CHECK_THROWS_AS(DensitySpec::expression("x +* y"), DataError);
    CHECK_THROWS_AS(DensitySpec::expression("foo(x)"), DataError);
    // negative density rejected by the probe
    CHECK_THROWS_AS(DensitySpec::expression("x - 1"), DataError);
    // bound below the probed maximum rejected
    CHECK_THROWS_AS(DensitySpec::expression("x + y", 1.0), DataError);
}
