#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "dpts/core.hpp"
#include "dpts/density.hpp"
#include "dpts/rng.hpp"

namespace dpts::samplers {

// --- Sobol' (dimension 2) with optional Owen scrambling ---------------------
//
// Gray-code construction over GF(2). Direction numbers: axis 0 is the van
// der Corput identity matrix; axis 1 follows the degree-1 primitive
// polynomial recurrence m_k = 2*m_{k-1} XOR m_{k-1} (m = 1,3,5,15,17,...),
// matching the published Joe-Kuo table for dimension 2.

namespace detail {

inline const uint32_t* sobol_dirs_axis1() {
    static uint32_t v[32];
    static bool init = [] {
        uint32_t m[33];
        m[1] = 1;
        for (int k = 2; k <= 32; ++k) m[k] = (m[k - 1] << 1) ^ m[k - 1];
        for (int k = 1; k <= 32; ++k) v[k - 1] = m[k] << (32 - k);
        return true;
    }();
    (void)init;
    return v;
}

// Nested uniform scramble of a 32-bit fraction: each bit is flipped by a
// pseudorandom function of the digits above it, which is a lazily evaluated
// full binary tree of depth 32 keyed by axis_key.
inline uint32_t owen_scramble(uint32_t value, uint64_t axis_key) {
    uint32_t out = 0;
    for (int k = 0; k < 32; ++k) {
        uint32_t prefix = (k == 0) ? 0u : (value >> (32 - k));
        uint64_t node = axis_key ^ (uint64_t(prefix) << 6 | uint64_t(k));
        uint32_t bit = (value >> (31 - k)) & 1u;
        uint32_t flip = uint32_t(dpts::detail::mix64(node) & 1u);
        out |= (bit ^ flip) << (31 - k);
    }
    return out;
}

}  // namespace detail

inline PointSet sobol_owen(int n, SeededRng rng, bool scramble = true) {
    if (n < 1) throw DataError("sample count must be >= 1");
    const uint32_t* v1 = detail::sobol_dirs_axis1();
    uint64_t key_x = 0, key_y = 0;
    if (scramble) {
        key_x = rng.next_u64();
        key_y = rng.next_u64();
    }
    PointSet ps;
    ps.pts.reserve(size_t(n));
    uint32_t sx = 0, sy = 0;  // Gray-code running XOR per axis
    for (int i = 0; i < n; ++i) {
        uint32_t rx = sx, ry = sy;
        if (scramble) {
            rx = detail::owen_scramble(rx, key_x);
            ry = detail::owen_scramble(ry, key_y);
        }
        ps.pts.push_back({double(rx) * 0x1.0p-32, double(ry) * 0x1.0p-32});
        int c = std::countr_zero(uint32_t(i + 1));  // bit that flips in gray code
        sx ^= 1u << (31 - c);
        sy ^= v1[c];
    }
    return ps;
}

// --- rank-1 lattice ----------------------------------------------------------

// Built-in generator table: for Fibonacci n, g = (1, F_{k-1}) is the classic
// choice; other n fall back to the nearest golden-ratio generator made
// coprime with n.
inline std::pair<int64_t, int64_t> rank1_default_generator(int n) {
    static const int64_t fib[] = {1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144, 233, 377, 610,
                                  987, 1597, 2584, 4181, 6765, 10946, 17711, 28657, 46368};
    for (size_t k = 1; k + 1 < sizeof(fib) / sizeof(fib[0]); ++k) {
        if (fib[k + 1] == n) return {1, fib[k]};
    }
    int64_t g = int64_t(std::llround(n * 0.61803398874989484820));
    g = std::max<int64_t>(1, g % n);
    while (std::gcd(g, int64_t(n)) != 1) --g;
    return {1, std::max<int64_t>(1, g)};
}

inline PointSet rank1_lattice(int n, std::pair<int64_t, int64_t> g, Point2 shift) {
    if (n < 1) throw DataError("sample count must be >= 1");
    PointSet ps;
    ps.pts.reserve(size_t(n));
    for (int i = 0; i < n; ++i) {
        double x = shift.x + double(i) * double(g.first) / double(n);
        double y = shift.y + double(i) * double(g.second) / double(n);
        ps.pts.push_back(wrap_unit(x, y));
    }
    return ps;
}

inline PointSet rank1_lattice(int n, SeededRng rng) {
    Point2 shift{rng.next_double(), rng.next_double()};
    return rank1_lattice(n, rank1_default_generator(n), shift);
}

// --- Poisson disk by dart throwing -------------------------------------------

inline double toroidal_dist2(const Point2& a, const Point2& b) {
    double dx = std::fabs(a.x - b.x);
    double dy = std::fabs(a.y - b.y);
    if (dx > 0.5) dx = 1.0 - dx;
    if (dy > 0.5) dy = 1.0 - dy;
    return dx * dx + dy * dy;
}

namespace detail {

// Uniform occupancy grid for O(1) toroidal neighbor queries.
class DiskGrid {
  public:
    DiskGrid(double radius, int expected) {
        side_ = std::max(1, int(std::floor(1.0 / (radius * 1.0000001))));
        side_ = std::min(side_, std::max(1, int(std::ceil(std::sqrt(double(expected)) * 2)) ));
        cells_.assign(size_t(side_) * side_, {});
    }

    void insert(const Point2& p, int idx) { cells_[cell_of(p)].push_back(idx); }

    template <typename PointsT>
    bool has_neighbor_within(const Point2& p, double r, const PointsT& pts) const {
        double r2 = r * r;
        int cx = int(p.x * side_), cy = int(p.y * side_);
        int reach = int(std::ceil(r * side_)) + 1;
        reach = std::min(reach, side_ / 2 + 1);
        for (int dy = -reach; dy <= reach; ++dy) {
            for (int dx = -reach; dx <= reach; ++dx) {
                int gx = (cx + dx % side_ + side_) % side_;
                int gy = (cy + dy % side_ + side_) % side_;
                for (int idx : cells_[size_t(gy) * side_ + gx]) {
                    if (toroidal_dist2(p, pts[size_t(idx)]) < r2) return true;
                }
            }
        }
        return false;
    }

  private:
    size_t cell_of(const Point2& p) const {
        int cx = std::min(side_ - 1, int(p.x * side_));
        int cy = std::min(side_ - 1, int(p.y * side_));
        return size_t(cy) * side_ + cx;
    }

    int side_;
    std::vector<std::vector<int>> cells_;
};

}  // namespace detail

struct PoissonDiskResult {
    PointSet points;
    double radius = 0.0;  // final acceptance radius after any reductions
};

// Classical dart throwing with toroidal distance. Radius starts at
// gamma/sqrt(n); on budget exhaustion it shrinks by 0.95 and throwing
// restarts from an empty set, at most 20 times.
inline PoissonDiskResult poisson_disk_full(int n_target, SeededRng rng, double gamma = 0.68) {
    if (n_target < 1) throw DataError("sample count must be >= 1");
    double r = gamma / std::sqrt(double(n_target));
    const long long budget = 10000LL * n_target;
    for (int reduction = 0; reduction <= 20; ++reduction) {
        std::vector<Point2> accepted;
        accepted.reserve(size_t(n_target));
        detail::DiskGrid grid(r, n_target);
        long long attempts = 0;
        while (int(accepted.size()) < n_target && attempts < budget) {
            ++attempts;
            Point2 cand{rng.next_double(), rng.next_double()};
            if (!grid.has_neighbor_within(cand, r, accepted)) {
                grid.insert(cand, int(accepted.size()));
                accepted.push_back(cand);
            }
        }
        if (int(accepted.size()) == n_target) return {PointSet(std::move(accepted)), r};
        r *= 0.95;
    }
    throw NumericError("packing infeasible");
}

inline PointSet poisson_disk(int n_target, SeededRng rng, double gamma = 0.68) {
    return poisson_disk_full(n_target, rng, gamma).points;
}

// --- stratified jitter --------------------------------------------------------

inline PointSet stratified_jitter(int n, SeededRng rng) {
    int s = int(std::lround(std::sqrt(double(n))));
    if (s * s != n) throw DataError("stratified sampling needs a perfect-square count");
    PointSet ps;
    ps.pts.reserve(size_t(n));
    for (int j = 0; j < s; ++j) {
        for (int i = 0; i < s; ++i) {
            double x = (i + rng.next_double()) / s;
            double y = (j + rng.next_double()) / s;
            ps.pts.push_back({x, y});
        }
    }
    return ps;
}

// --- white noise ---------------------------------------------------------------

inline PointSet whitenoise(int n, SeededRng rng) {
    if (n < 1) throw DataError("sample count must be >= 1");
    PointSet ps;
    ps.pts.reserve(size_t(n));
    for (int i = 0; i < n; ++i) ps.pts.push_back({rng.next_double(), rng.next_double()});
    return ps;
}

// Exact linear-ramp sampler: push uniform x through the inverse marginal CDF.
inline PointSet warp_ramp(const PointSet& uniform_pts, const DensitySpec& ramp) {
    PointSet out = uniform_pts;
    for (Point2& p : out.pts) p.x = ramp.ramp_inv_cdf(p.x);
    return out;
}

// --- rejection sampling ----------------------------------------------------------

// A base sampler as an unbounded candidate stream: sequences extend in place,
// realization samplers draw repeated independent realizations.
class CandidateStream {
  public:
    using Fn = std::function<PointSet(int chunk, SeededRng rng)>;

    CandidateStream(Fn fn, SeededRng rng) : fn_(std::move(fn)), rng_(rng) {}

    Point2 next() {
        if (pos_ >= buffer_.n()) {
            buffer_ = fn_(chunk_, rng_.fork(realization_++));
            pos_ = 0;
        }
        return buffer_[pos_++];
    }

  private:
    Fn fn_;
    SeededRng rng_;
    PointSet buffer_;
    int pos_ = 0;
    int chunk_ = 4096;
    uint64_t realization_ = 0;
};

inline CandidateStream make_candidate_stream(const std::string& base, SeededRng rng) {
    if (base == "whitenoise") {
        return CandidateStream([](int m, SeededRng r) { return whitenoise(m, r); }, rng);
    }
    if (base == "stratified") {
        // raster output order would bias a partially consumed realization;
        // point order is meaningless, so deal the strata out shuffled
        return CandidateStream(
            [](int m, SeededRng r) {
                int s = std::max(1, int(std::lround(std::sqrt(double(m)))));
                PointSet ps = stratified_jitter(s * s, r.fork(0));
                SeededRng shuf = r.fork(1);
                for (int i = ps.n() - 1; i > 0; --i) {
                    int j = int(shuf.next_below(uint64_t(i) + 1));
                    std::swap(ps.pts[size_t(i)], ps.pts[size_t(j)]);
                }
                return ps;
            },
            rng);
    }
    if (base == "sobol_owen") {
        // progressive sequence: growing prefixes, fixed scramble per stream
        struct State {
            int emitted = 0;
        };
        auto st = std::make_shared<State>();
        SeededRng key_rng = rng;
        return CandidateStream(
            [st, key_rng](int m, SeededRng) {
                PointSet all = sobol_owen(st->emitted + m, key_rng);
                PointSet chunk;
                chunk.pts.assign(all.pts.begin() + st->emitted, all.pts.end());
                st->emitted += m;
                return chunk;
            },
            rng);
    }
    if (base == "poisson") {
        return CandidateStream([](int m, SeededRng r) { return poisson_disk(std::max(16, m / 4), r); }, rng);
    }
    if (base == "rank1") {
        return CandidateStream([](int m, SeededRng r) { return rank1_lattice(m, r); }, rng);
    }
    throw UsageError("unknown base sampler: " + base);
}

// Thinning: keep candidate p with probability density(p)/M, emit the first n
// accepted in base order.
inline PointSet rejection_sample(CandidateStream stream, const DensitySpec& density, int n, SeededRng rng) {
    if (n < 1) throw DataError("sample count must be >= 1");
    const double M = density.bound();
    PointSet out;
    out.pts.reserve(size_t(n));
    long long candidates = 0, accepted = 0;
    while (out.n() < n) {
        Point2 p = stream.next();
        ++candidates;
        if (rng.next_double() < density(p.x, p.y) / M) {
            out.pts.push_back(p);
            ++accepted;
        }
        if (candidates >= 1000000 && double(accepted) / double(candidates) < 1e-4) {
            throw NumericError("density bound too loose");
        }
    }
    return out;
}

inline PointSet rejection_sample(const std::string& base, const DensitySpec& density, int n, SeededRng rng) {
    return rejection_sample(make_candidate_stream(base, rng.fork(1)), density, n, rng.fork(2));
}

}  // namespace dpts::samplers
