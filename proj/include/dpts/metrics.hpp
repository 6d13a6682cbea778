#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dpts/core.hpp"
#include "dpts/density.hpp"
#include "dpts/rng.hpp"
#include "dpts/samplers.hpp"

namespace dpts::metrics {

// --- L2 discrepancy (Warnock closed form) -----------------------------------
//
// D^2 = 1/3^d - (2/n) sum_i prod_d (1-x_id^2)/2 + (1/n^2) sum_ij prod_d (1-max(x_id,x_jd))
// for d = 2, origin-anchored boxes. Returns D (the root).

inline double l2_discrepancy_sq(const PointSet& ps) {
    int n = ps.n();
    if (n < 1) throw DataError("discrepancy needs a non-empty point set");
    double term1 = 1.0 / 9.0;
    double term2 = 0.0;
    for (const Point2& p : ps.pts) term2 += (1.0 - p.x * p.x) * (1.0 - p.y * p.y) * 0.25;
    term2 *= 2.0 / double(n);
    double term3 = 0.0;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : term3) if (n > 512)
#endif
    for (int i = 0; i < n; ++i) {
        const Point2 pi = ps[i];
        double row = 0.0;
        for (int j = 0; j < n; ++j) {
            const Point2& pj = ps[j];
            row += (1.0 - std::max(pi.x, pj.x)) * (1.0 - std::max(pi.y, pj.y));
        }
        term3 += row;
    }
    term3 /= double(n) * double(n);
    return term1 - term2 + term3;
}

inline double l2_discrepancy(const PointSet& ps) { return std::sqrt(std::max(0.0, l2_discrepancy_sq(ps))); }

// Monte Carlo estimate of the defining box integral, as an independent
// oracle: E over anchored boxes of (count/n - area)^2.
struct BoxMcResult {
    double mean = 0.0;
    double std_error = 0.0;
};

inline BoxMcResult l2_discrepancy_sq_boxmc(const PointSet& ps, long long boxes, SeededRng rng) {
    int n = ps.n();
    double sum = 0.0, sum2 = 0.0;
    for (long long b = 0; b < boxes; ++b) {
        double bx = rng.next_double(), by = rng.next_double();
        int count = 0;
        for (const Point2& p : ps.pts) count += (p.x < bx && p.y < by) ? 1 : 0;
        double d = double(count) / n - bx * by;
        sum += d * d;
        sum2 += d * d * d * d;
    }
    double mean = sum / double(boxes);
    double var = std::max(0.0, sum2 / double(boxes) - mean * mean);
    return {mean, std::sqrt(var / double(boxes))};
}

// --- minimum pairwise distance ------------------------------------------------

inline double min_distance_bruteforce(const PointSet& ps) {
    int n = ps.n();
    if (n < 2) throw DataError("needs >= 2 points");
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double dx = ps[i].x - ps[j].x, dy = ps[i].y - ps[j].y;
            best = std::min(best, dx * dx + dy * dy);
        }
    return std::sqrt(best);
}

namespace detail {

// One gridded nearest-pair pass: exact when the returned distance is at most
// the cell size, since any closer pair must fall in adjacent cells.
inline double min_dist_grid_pass(const PointSet& ps, double cell) {
    int m = std::max(1, int(1.0 / cell));
    std::vector<std::vector<int>> cells(size_t(m) * m);
    auto idx = [&](double v) { return std::min(m - 1, int(v * m)); };
    for (int i = 0; i < ps.n(); ++i) cells[size_t(idx(ps[i].y)) * m + idx(ps[i].x)].push_back(i);
    double best = std::numeric_limits<double>::infinity();
    for (int cy = 0; cy < m; ++cy)
        for (int cx = 0; cx < m; ++cx) {
            const auto& cur = cells[size_t(cy) * m + cx];
            if (cur.empty()) continue;
            for (int dy = 0; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dy == 0 && dx < 0) continue;  // forward neighbors only
                    int ny = cy + dy, nx = cx + dx;
                    if (ny >= m || nx < 0 || nx >= m) continue;
                    const auto& other = cells[size_t(ny) * m + nx];
                    bool same = (dy == 0 && dx == 0);
                    for (size_t a = 0; a < cur.size(); ++a) {
                        size_t b0 = same ? a + 1 : 0;
                        for (size_t b = b0; b < other.size(); ++b) {
                            double ddx = ps[cur[a]].x - ps[other[b]].x;
                            double ddy = ps[cur[a]].y - ps[other[b]].y;
                            best = std::min(best, ddx * ddx + ddy * ddy);
                        }
                    }
                }
        }
    return std::sqrt(best);
}

}  // namespace detail

// Exact nearest pair via grid hashing; a second pass with the first-pass
// bound as cell size guarantees exactness when points are sparse.
inline double min_distance(const PointSet& ps) {
    int n = ps.n();
    if (n < 2) throw DataError("needs >= 2 points");
    double cell = 1.0 / std::max(1.0, std::floor(std::sqrt(double(n))));
    double d = detail::min_dist_grid_pass(ps, cell);
    if (d <= cell) return d;
    return detail::min_dist_grid_pass(ps, std::min(1.0, d));
}

// --- power spectrum -------------------------------------------------------------

// Periodogram averaged over realizations at integer frequencies in
// [-R/2, R/2)^2. DC stays in the grid but is excluded from radial averaging.
struct SpectrumGrid {
    int resolution = 0;
    int realizations = 0;
    std::vector<double> power;  // resolution^2, row-major over (fy, fx)

    double at(int fx, int fy) const {
        int r = resolution;
        return power[size_t(fy + r / 2) * r + size_t(fx + r / 2)];
    }
};

struct RadialSpectrum {
    // paper plotting grid: centers k*0.0625 for k = 1..79
    std::vector<double> nu;
    std::vector<double> power;
};

inline SpectrumGrid power_spectrum(const std::vector<PointSet>& sets, int R = 128) {
    if (sets.empty()) throw DataError("power_spectrum needs at least one point set");
    SpectrumGrid grid;
    grid.resolution = R;
    grid.realizations = int(sets.size());
    grid.power.assign(size_t(R) * R, 0.0);
    const int f0 = -R / 2;
    const double twopi = 6.283185307179586476925286766559;

    // chunked parallelism with in-order accumulation keeps sums bitwise
    // deterministic under any thread count
    const int chunk = 8;
    std::vector<std::vector<double>> bufs(chunk);
    for (size_t base = 0; base < sets.size(); base += chunk) {
        int cnt = int(std::min(sets.size() - base, size_t(chunk)));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
        for (int c = 0; c < cnt; ++c) {
            const PointSet& ps = sets[base + size_t(c)];
            int n = ps.n();
            std::vector<std::complex<double>> acc(size_t(R) * R, {0.0, 0.0});
            std::vector<std::complex<double>> vx(static_cast<size_t>(R)), vy(static_cast<size_t>(R));
            for (const Point2& p : ps.pts) {
                std::complex<double> sx = std::polar(1.0, -twopi * p.x);
                std::complex<double> sy = std::polar(1.0, -twopi * p.y);
                vx[0] = std::polar(1.0, -twopi * f0 * p.x);
                vy[0] = std::polar(1.0, -twopi * f0 * p.y);
                for (int k = 1; k < R; ++k) {
                    vx[size_t(k)] = vx[size_t(k - 1)] * sx;
                    vy[size_t(k)] = vy[size_t(k - 1)] * sy;
                }
                for (int ky = 0; ky < R; ++ky) {
                    std::complex<double> fy = vy[size_t(ky)];
                    std::complex<double>* row = &acc[size_t(ky) * R];
                    for (int kx = 0; kx < R; ++kx) row[kx] += fy * vx[size_t(kx)];
                }
            }
            std::vector<double>& buf = bufs[size_t(c)];
            buf.assign(size_t(R) * R, 0.0);
            for (size_t i = 0; i < buf.size(); ++i) buf[i] = std::norm(acc[i]) / double(n);
        }
        for (int c = 0; c < cnt; ++c)
            for (size_t i = 0; i < grid.power.size(); ++i) grid.power[i] += bufs[size_t(c)][i];
    }
    for (double& v : grid.power) v /= double(sets.size());
    return grid;
}

inline RadialSpectrum radial_mean(const SpectrumGrid& grid, int n_points) {
    const double width = 0.0625;
    const int nbins = 79;
    RadialSpectrum rs;
    rs.nu.resize(size_t(nbins));
    rs.power.assign(size_t(nbins), 0.0);
    std::vector<long long> counts(size_t(nbins), 0);
    for (int k = 0; k < nbins; ++k) rs.nu[size_t(k)] = (k + 1) * width;
    int R = grid.resolution;
    double root_n = std::sqrt(double(n_points));
    for (int fy = -R / 2; fy < R / 2; ++fy)
        for (int fx = -R / 2; fx < R / 2; ++fx) {
            if (fx == 0 && fy == 0) continue;
            double nu = std::sqrt(double(fx) * fx + double(fy) * fy) / root_n;
            int bin = int(std::lround(nu / width)) - 1;
            if (bin < 0 || bin >= nbins) continue;
            rs.power[size_t(bin)] += grid.at(fx, fy);
            counts[size_t(bin)]++;
        }
    for (int k = 0; k < nbins; ++k) {
        if (counts[size_t(k)] > 0) rs.power[size_t(k)] /= double(counts[size_t(k)]);
        else rs.power[size_t(k)] = std::numeric_limits<double>::quiet_NaN();  // no integer frequency falls here
    }
    return rs;
}

inline void write_spectrum_grid(const SpectrumGrid& g, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot open for writing: " + path);
    std::fwrite(g.power.data(), sizeof(double), g.power.size(), f);
    std::fclose(f);
}

inline void write_radial_csv(const RadialSpectrum& rs, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw DataError("cannot open for writing: " + path);
    std::fprintf(f, "nu,power\n");
    for (size_t i = 0; i < rs.nu.size(); ++i) std::fprintf(f, "%.17g,%.17g\n", rs.nu[i], rs.power[i]);
    std::fclose(f);
}

// --- optimal transport energy ---------------------------------------------------

namespace detail {

// Exact balanced transport between m unit-mass references and n samples with
// capacity m/n each: successive shortest augmenting paths with Johnson
// potentials. Exactness matches min-cost matching on the expanded bipartite
// graph; feasible because m is a multiple of n.
inline double balanced_transport_cost(const std::vector<Point2>& refs, const PointSet& samples, int capacity) {
    const int n = samples.n();
    const int m = int(refs.size());
    auto cost = [&](int r, int j) {
        double dx = refs[size_t(r)].x - samples[j].x;
        double dy = refs[size_t(r)].y - samples[j].y;
        return dx * dx + dy * dy;
    };
    std::vector<double> pot(size_t(n), 0.0);
    std::vector<int> cap(size_t(n), capacity);
    std::vector<std::vector<int>> assigned(static_cast<size_t>(n));
    std::vector<int> sample_of(size_t(m), -1);
    const double kInf = std::numeric_limits<double>::infinity();

    std::vector<double> dist(static_cast<size_t>(n));
    std::vector<char> settled(static_cast<size_t>(n));
    std::vector<int> prev_sample(static_cast<size_t>(n));
    std::vector<int> via_ref(static_cast<size_t>(n));

    for (int r = 0; r < m; ++r) {
        for (int j = 0; j < n; ++j) {
            dist[size_t(j)] = cost(r, j) - pot[size_t(j)];
            settled[size_t(j)] = 0;
            prev_sample[size_t(j)] = -1;
            via_ref[size_t(j)] = -1;
        }
        int target = -1;
        for (;;) {
            int j = -1;
            double dmin = kInf;
            for (int cand = 0; cand < n; ++cand)
                if (!settled[size_t(cand)] && dist[size_t(cand)] < dmin) {
                    dmin = dist[size_t(cand)];
                    j = cand;
                }
            if (j < 0) throw NumericError("transport: no augmenting path");
            settled[size_t(j)] = 1;
            if (cap[size_t(j)] > 0) {
                target = j;
                break;
            }
            // relax alternating transitions j -> j' via refs currently on j
            for (int rp : assigned[size_t(j)]) {
                double base = dist[size_t(j)] - cost(rp, j) + pot[size_t(j)];
                for (int j2 = 0; j2 < n; ++j2) {
                    if (settled[size_t(j2)]) continue;
                    double nd = base + cost(rp, j2) - pot[size_t(j2)];
                    if (nd < dist[size_t(j2)]) {
                        dist[size_t(j2)] = nd;
                        prev_sample[size_t(j2)] = j;
                        via_ref[size_t(j2)] = rp;
                    }
                }
            }
        }
        double dt = dist[size_t(target)];
        for (int j = 0; j < n; ++j) pot[size_t(j)] += std::min(dist[size_t(j)], dt) - dt;
        // walk the alternating path, moving refs toward the free sample
        int cur = target;
        while (via_ref[size_t(cur)] >= 0) {
            int rp = via_ref[size_t(cur)];
            int pj = prev_sample[size_t(cur)];
            auto& lst = assigned[size_t(pj)];
            lst.erase(std::find(lst.begin(), lst.end(), rp));
            assigned[size_t(cur)].push_back(rp);
            sample_of[size_t(rp)] = cur;
            cur = pj;
        }
        assigned[size_t(cur)].push_back(r);
        sample_of[size_t(r)] = cur;
        cap[size_t(target)] -= 1;
    }

    double total = 0.0;
    for (int r = 0; r < m; ++r) total += cost(r, sample_of[size_t(r)]);
    return total;
}

// Jittered stratification of m = (f*ka) x (f*kb) reference points where
// ka*kb = n and f^2 is the per-sample quota.
inline std::vector<Point2> ot_reference_points(int n, int m_per_sample, SeededRng rng) {
    int f = int(std::lround(std::sqrt(double(m_per_sample))));
    if (f * f != m_per_sample) throw DataError("exact OT reference quota must be a perfect square");
    int ka = int(std::floor(std::sqrt(double(n))));
    while (n % ka != 0) --ka;
    int kb = n / ka;
    int a = f * ka, b = f * kb;
    std::vector<Point2> refs;
    refs.reserve(size_t(a) * b);
    for (int j = 0; j < b; ++j)
        for (int i = 0; i < a; ++i)
            refs.push_back({(i + rng.next_double()) / a, (j + rng.next_double()) / b});
    return refs;
}

// Partial moments of the projected-uniform quantile function. For direction
// (c,s), the projection of Uniform([0,1]^2) is the trapezoidal distribution
// of a*U + b*U' with a = max(|c|,|s|), b = min(|c|,|s|).
struct ProjectedUniform {
    double a, b;

    double quantile(double u) const {
        if (b < 1e-12) return a * u;
        double fb = b / (2.0 * a);
        if (u <= fb) return std::sqrt(2.0 * a * b * u);
        if (u <= 1.0 - fb) return a * u + 0.5 * b;
        return (a + b) - std::sqrt(2.0 * a * b * (1.0 - u));
    }

    // int_0^u quantile(w) dw
    double m1(double u) const {
        double q = quantile(u);
        if (b < 1e-12) return 0.5 * a * u * u;
        double ab = a * b;
        if (q <= b) return q * q * q / (3.0 * ab);
        double acc = b * b / (3.0 * a);
        if (q <= a) return acc + (q * q - b * b) / (2.0 * a);
        acc += (a * a - b * b) / (2.0 * a);
        auto anti = [&](double v) { return ((a + b) * v * v / 2.0 - v * v * v / 3.0) / ab; };
        return acc + anti(q) - anti(a);
    }

    // int_0^u quantile(w)^2 dw
    double m2(double u) const {
        double q = quantile(u);
        if (b < 1e-12) return a * a * u * u * u / 3.0;
        double ab = a * b;
        if (q <= b) return q * q * q * q / (4.0 * ab);
        double acc = b * b * b / (4.0 * a);
        if (q <= a) return acc + (q * q * q - b * b * b) / (3.0 * a);
        acc += (a * a * a - b * b * b) / (3.0 * a);
        auto anti = [&](double v) { return ((a + b) * v * v * v / 3.0 - v * v * v * v / 4.0) / ab; };
        return acc + anti(q) - anti(a);
    }
};

}  // namespace detail

enum class OtMode { kExactSmall, kSliced };

// Squared W2 between the empirical projection and the projected uniform
// measure, averaged over random directions; closed form per direction from
// sorted projections and the analytic quantile moments.
inline double ot_energy_sliced(const PointSet& ps, int directions = 64, uint64_t seed = 0x5357u) {
    int n = ps.n();
    SeededRng rng(seed, 0);
    std::vector<double> proj(static_cast<size_t>(n));
    double total = 0.0;
    for (int l = 0; l < directions; ++l) {
        double theta = rng.next_double() * 3.14159265358979323846;
        double c = std::cos(theta), s = std::sin(theta);
        double shift = std::min(0.0, c) + std::min(0.0, s);
        for (int i = 0; i < n; ++i) proj[size_t(i)] = c * ps[i].x + s * ps[i].y - shift;
        std::sort(proj.begin(), proj.end());
        detail::ProjectedUniform pu{std::max(std::fabs(c), std::fabs(s)), std::min(std::fabs(c), std::fabs(s))};
        double w2 = pu.m2(1.0);  // E[V^2]; cross terms subtracted below
        double prev_m1 = 0.0;
        for (int i = 0; i < n; ++i) {
            double u1 = double(i + 1) / n;
            double m1 = pu.m1(u1);
            w2 += proj[size_t(i)] * proj[size_t(i)] / n - 2.0 * proj[size_t(i)] * (m1 - prev_m1);
            prev_m1 = m1;
        }
        total += w2;
    }
    return total / double(directions);
}

inline double ot_energy_exact_small(const PointSet& ps, uint64_t seed = 0x5357u, int m_per_sample = 64) {
    int n = ps.n();
    if (n > 256) throw UsageError("exact OT mode supports n <= 256");
    SeededRng rng(seed, 1);
    std::vector<Point2> refs = detail::ot_reference_points(n, m_per_sample, rng);
    double cost = detail::balanced_transport_cost(refs, ps, m_per_sample);
    return cost / double(refs.size());
}

inline double ot_energy(const PointSet& ps, OtMode mode, uint64_t seed = 0x5357u) {
    return mode == OtMode::kExactSmall ? ot_energy_exact_small(ps, seed) : ot_energy_sliced(ps, 64, seed);
}

// --- integration error -------------------------------------------------------------

inline double sq(double v) { return v * v; }

struct GaussianIntegrand {
    double cx, cy;     // center
    double phi;        // orientation of the major axis
    double sa, sb;     // major/minor standard deviations

    double operator()(double x, double y) const {
        double dx = x - cx, dy = y - cy;
        double co = std::cos(phi), si = std::sin(phi);
        double u = co * dx + si * dy;
        double v = -si * dx + co * dy;
        return std::exp(-0.5 * (u * u / (sa * sa) + v * v / (sb * sb)));
    }
};

inline std::vector<GaussianIntegrand> gaussian_integrands(int K, SeededRng rng) {
    std::vector<GaussianIntegrand> out;
    out.reserve(size_t(K));
    for (int k = 0; k < K; ++k) {
        GaussianIntegrand g;
        g.cx = rng.next_double();
        g.cy = rng.next_double();
        g.phi = rng.next_double() * 3.14159265358979323846;
        g.sa = 0.1 + rng.next_double() * (0.333 - 0.1);
        double ratio = 1.0 + rng.next_double() * 8.0;
        g.sb = g.sa / ratio;
        out.push_back(g);
    }
    return out;
}

struct IntegrandMoments {
    double mean = 0.0;   // integral over the unit square
    double mean2 = 0.0;  // integral of the square
};

// 2048^2 midpoint rule restricted to the 7-sigma bounding box of the
// Gaussian; omitted cells contribute < exp(-24.5) each, far below the h^2
// truncation error of the rule itself.
inline IntegrandMoments gaussian_midpoint_moments(const GaussianIntegrand& g, int res = 2048) {
    double co = std::cos(g.phi), si = std::sin(g.phi);
    double rx = 7.0 * std::sqrt(sq(co * g.sa) + sq(si * g.sb));
    double ry = 7.0 * std::sqrt(sq(si * g.sa) + sq(co * g.sb));
    int x0 = std::max(0, int((g.cx - rx) * res));
    int x1 = std::min(res - 1, int((g.cx + rx) * res));
    int y0 = std::max(0, int((g.cy - ry) * res));
    int y1 = std::min(res - 1, int((g.cy + ry) * res));
    double sum = 0.0, sum2 = 0.0;
    for (int j = y0; j <= y1; ++j) {
        double y = (j + 0.5) / res;
        double row = 0.0, row2 = 0.0;
        for (int i = x0; i <= x1; ++i) {
            double v = g((i + 0.5) / res, y);
            row += v;
            row2 += v * v;
        }
        sum += row;
        sum2 += row2;
    }
    double h2 = 1.0 / (double(res) * res);
    return {sum * h2, sum2 * h2};
}

// Cached references so many point sets can share one integrand family.
class GaussianMseEvaluator {
  public:
    GaussianMseEvaluator(int K, SeededRng rng) : integrands_(gaussian_integrands(K, rng)) {
        refs_.resize(integrands_.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 4)
#endif
        for (size_t k = 0; k < integrands_.size(); ++k) refs_[k] = gaussian_midpoint_moments(integrands_[k]);
    }

    const std::vector<GaussianIntegrand>& integrands() const { return integrands_; }
    const std::vector<IntegrandMoments>& references() const { return refs_; }

    double mse(const PointSet& ps) const {
        double acc = 0.0;
        int n = ps.n();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : acc) if (integrands_.size() * size_t(n) > (1 << 14))
#endif
        for (size_t k = 0; k < integrands_.size(); ++k) {
            const GaussianIntegrand& g = integrands_[k];
            double est = 0.0;
            for (const Point2& p : ps.pts) est += g(p.x, p.y);
            est /= double(n);
            double d = est - refs_[k].mean;
            acc += d * d;
        }
        return acc / double(integrands_.size());
    }

  private:
    std::vector<GaussianIntegrand> integrands_;
    std::vector<IntegrandMoments> refs_;
};

inline double gaussian_mse(const PointSet& ps, int K, SeededRng rng) {
    return GaussianMseEvaluator(K, rng).mse(ps);
}

struct HeavisideIntegrand {
    double qx, qy;  // point on the dividing line
    double nx, ny;  // inside normal

    bool inside(double x, double y) const { return (x - qx) * nx + (y - qy) * ny >= 0.0; }

    // exact area of the half-plane clipped to the unit square
    double area() const {
        // Sutherland-Hodgman against the line n.(p-q) >= 0
        std::vector<Point2> poly = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
        std::vector<Point2> out;
        auto side = [&](const Point2& p) { return (p.x - qx) * nx + (p.y - qy) * ny; };
        for (size_t i = 0; i < poly.size(); ++i) {
            const Point2& a = poly[i];
            const Point2& b = poly[(i + 1) % poly.size()];
            double sa = side(a), sb = side(b);
            if (sa >= 0.0) out.push_back(a);
            if ((sa < 0.0) != (sb < 0.0)) {
                double t = sa / (sa - sb);
                out.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
            }
        }
        double area2 = 0.0;
        for (size_t i = 0; i < out.size(); ++i) {
            const Point2& a = out[i];
            const Point2& b = out[(i + 1) % out.size()];
            area2 += a.x * b.y - b.x * a.y;
        }
        return 0.5 * std::fabs(area2);
    }
};

inline std::vector<HeavisideIntegrand> heaviside_integrands(int K, SeededRng rng) {
    std::vector<HeavisideIntegrand> out;
    out.reserve(size_t(K));
    for (int k = 0; k < K; ++k) {
        HeavisideIntegrand h;
        h.qx = rng.next_double();
        h.qy = rng.next_double();
        double theta = rng.next_double() * 6.283185307179586476925286766559;
        h.nx = std::cos(theta);
        h.ny = std::sin(theta);
        out.push_back(h);
    }
    return out;
}

class HeavisideMseEvaluator {
  public:
    HeavisideMseEvaluator(int K, SeededRng rng) : integrands_(heaviside_integrands(K, rng)) {
        refs_.reserve(integrands_.size());
        for (const auto& h : integrands_) refs_.push_back(h.area());
    }

    const std::vector<HeavisideIntegrand>& integrands() const { return integrands_; }
    const std::vector<double>& references() const { return refs_; }

    double mse(const PointSet& ps) const {
        double acc = 0.0;
        int n = ps.n();
        for (size_t k = 0; k < integrands_.size(); ++k) {
            const HeavisideIntegrand& h = integrands_[k];
            int cnt = 0;
            for (const Point2& p : ps.pts) cnt += h.inside(p.x, p.y) ? 1 : 0;
            double d = double(cnt) / n - refs_[k];
            acc += d * d;
        }
        return acc / double(integrands_.size());
    }

  private:
    std::vector<HeavisideIntegrand> integrands_;
    std::vector<double> refs_;
};

inline double heaviside_mse(const PointSet& ps, int K, SeededRng rng) {
    return HeavisideMseEvaluator(K, rng).mse(ps);
}

// --- density agreement -----------------------------------------------------------

// L1 distance between the pooled empirical histogram and the analytically
// normalized density, both as probability vectors over bins x bins cells.
// Normalization uses a midpoint grid aligned with the bins (128 sub-cells
// per bin edge).
inline double density_match(const std::vector<PointSet>& sets, const DensitySpec& density, int bins = 32) {
    if (sets.empty()) throw DataError("density_match needs at least one point set");
    std::vector<double> target(size_t(bins) * bins, 0.0);
    const int sub = 128;
    const int res = bins * sub;
    double total_mass = 0.0;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : total_mass)
#endif
    for (int by = 0; by < bins; ++by) {
        for (int bx = 0; bx < bins; ++bx) {
            double acc = 0.0;
            for (int j = 0; j < sub; ++j) {
                double y = (by * sub + j + 0.5) / res;
                for (int i = 0; i < sub; ++i) acc += density((bx * sub + i + 0.5) / res, y);
            }
            target[size_t(by) * bins + bx] = acc;
            total_mass += acc;
        }
    }
    for (double& v : target) v /= total_mass;

    std::vector<double> hist(size_t(bins) * bins, 0.0);
    long long total = 0;
    for (const PointSet& ps : sets) {
        for (const Point2& p : ps.pts) {
            int bx = std::min(bins - 1, int(p.x * bins));
            int by = std::min(bins - 1, int(p.y * bins));
            hist[size_t(by) * bins + bx] += 1.0;
            ++total;
        }
    }
    for (double& v : hist) v /= double(total);

    double l1 = 0.0;
    for (size_t i = 0; i < hist.size(); ++i) l1 += std::fabs(hist[i] - target[i]);
    return l1;
}

// Inverse-CDF unwarp: maps density-distributed points back to uniform.
// Closed form is only known for the separable ramp family.
inline PointSet unwarp(const PointSet& ps, const DensitySpec& density) {
    if (density.kind() == DensitySpec::Kind::kUniform) return ps;
    if (density.kind() != DensitySpec::Kind::kLinearRamp)
        throw UsageError("unwarp is implemented for uniform and linear_ramp densities only");
    PointSet out = ps;
    for (Point2& p : out.pts) p.x = density.ramp_cdf(p.x);
    return out;
}

// --- violin export -----------------------------------------------------------------

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw DataError("quantile of empty sample");
    double idx = q * double(sorted.size() - 1);
    size_t lo = size_t(idx);
    size_t hi = std::min(sorted.size() - 1, lo + 1);
    double frac = idx - double(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

// One row per group: label, count, the 5/25/50/75/95 quantiles, then the raw
// values in their original order.
inline void violin_export(const std::map<std::string, std::vector<double>>& groups, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw DataError("cannot open for writing: " + path);
    std::fprintf(f, "group,n,q05,q25,q50,q75,q95,values\n");
    for (const auto& [label, values] : groups) {
        std::vector<double> sorted = values;
        std::sort(sorted.begin(), sorted.end());
        std::fprintf(f, "%s,%zu,%.17g,%.17g,%.17g,%.17g,%.17g", label.c_str(), values.size(),
                     quantile_sorted(sorted, 0.05), quantile_sorted(sorted, 0.25), quantile_sorted(sorted, 0.50),
                     quantile_sorted(sorted, 0.75), quantile_sorted(sorted, 0.95));
        for (double v : values) std::fprintf(f, ",%.17g", v);
        std::fprintf(f, "\n");
    }
    std::fclose(f);
}

struct ViolinRow {
    std::string group;
    double q05, q25, q50, q75, q95;
    std::vector<double> values;
};

inline std::vector<ViolinRow> read_violin(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "r");
    if (!f) throw DataError("cannot open: " + path);
    std::vector<ViolinRow> rows;
    char line[1 << 16];
    bool header = true;
    while (std::fgets(line, sizeof line, f)) {
        if (header) {
            header = false;
            continue;
        }
        std::vector<std::string> cells;
        const char* s = line;
        std::string cur;
        for (; *s && *s != '\n' && *s != '\r'; ++s) {
            if (*s == ',') {
                cells.push_back(cur);
                cur.clear();
            } else {
                cur += *s;
            }
        }
        cells.push_back(cur);
        if (cells.size() < 8) continue;
        ViolinRow r;
        r.group = cells[0];
        size_t n = size_t(std::strtoull(cells[1].c_str(), nullptr, 10));
        r.q05 = std::strtod(cells[2].c_str(), nullptr);
        r.q25 = std::strtod(cells[3].c_str(), nullptr);
        r.q50 = std::strtod(cells[4].c_str(), nullptr);
        r.q75 = std::strtod(cells[5].c_str(), nullptr);
        r.q95 = std::strtod(cells[6].c_str(), nullptr);
        for (size_t i = 7; i < cells.size() && r.values.size() < n; ++i)
            r.values.push_back(std::strtod(cells[i].c_str(), nullptr));
        rows.push_back(std::move(r));
    }
    std::fclose(f);
    return rows;
}

}  // namespace dpts::metrics
