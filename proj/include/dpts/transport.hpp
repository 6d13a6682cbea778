#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "dpts/core.hpp"

namespace dpts::transport {

// Per-stratum offsets in stratum units: offset = (p - center) * s. This is
// the grid image the diffusion model works on. Offsets of stratified inputs
// lie in [-0.5, 0.5) per axis; LAP-assigned offsets of arbitrary inputs may
// escape their stratum.
struct GridField {
    int side = 0;
    std::vector<double> off;  // side*side*2, row-major, x then y per stratum

    GridField() = default;
    explicit GridField(int s) : side(s), off(size_t(s) * s * 2, 0.0) {}

    int n() const { return side * side; }
    double& x(int k) { return off[size_t(k) * 2]; }
    double& y(int k) { return off[size_t(k) * 2 + 1]; }
    double x(int k) const { return off[size_t(k) * 2]; }
    double y(int k) const { return off[size_t(k) * 2 + 1]; }
};

struct Assignment {
    std::vector<int> perm;  // stratum index (row-major) -> sample index
};

inline Point2 stratum_center(int k, int s) {
    int i = k % s, j = k / s;
    return {(i + 0.5) / s, (j + 0.5) / s};
}

inline PointSet strata_centers(int s) {
    if (s < 1) throw DataError("grid side must be >= 1");
    PointSet ps;
    ps.pts.reserve(size_t(s) * s);
    for (int k = 0; k < s * s; ++k) ps.pts.push_back(stratum_center(k, s));
    return ps;
}

// True iff every stratum of the s x s grid holds exactly one point
// (left-closed bins).
inline bool detect_stratified(const PointSet& points, int s) {
    if (points.n() != s * s) return false;
    std::vector<int> count(size_t(s) * s, 0);
    for (const Point2& p : points.pts) {
        int i = std::min(s - 1, int(p.x * s));
        int j = std::min(s - 1, int(p.y * s));
        if (++count[size_t(j) * s + i] > 1) return false;
    }
    for (int c : count)
        if (c != 1) return false;
    return true;
}

namespace detail {

// Exact dense LAP, shortest-augmenting-path with potentials
// (Jonker-Volgenant class). Rows are augmented in index order and column
// scans break ties toward the lowest index, so equal-cost optima resolve
// deterministically. Cost is any callable (row, col) -> double.
template <typename CostFn>
std::vector<int> solve_lap(int n, CostFn&& cost) {
    const double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(size_t(n) + 1, 0.0), v(size_t(n) + 1, 0.0);
    std::vector<int> match(size_t(n) + 1, 0);  // match[j] = row occupying col j (1-based, 0 = free)
    std::vector<int> way(size_t(n) + 1, 0);
    std::vector<double> minv(size_t(n) + 1);
    std::vector<char> used(size_t(n) + 1);

    for (int i = 1; i <= n; ++i) {
        std::fill(minv.begin(), minv.end(), kInf);
        std::fill(used.begin(), used.end(), 0);
        match[0] = i;
        int j0 = 0;
        do {
            used[size_t(j0)] = 1;
            int i0 = match[size_t(j0)], j1 = -1;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[size_t(j)]) continue;
                double cur = cost(i0 - 1, j - 1) - u[size_t(i0)] - v[size_t(j)];
                if (cur < minv[size_t(j)]) {
                    minv[size_t(j)] = cur;
                    way[size_t(j)] = j0;
                }
                if (minv[size_t(j)] < delta) {
                    delta = minv[size_t(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[size_t(j)]) {
                    u[size_t(match[size_t(j)])] += delta;
                    v[size_t(j)] -= delta;
                } else {
                    minv[size_t(j)] -= delta;
                }
            }
            j0 = j1;
        } while (match[size_t(j0)] != 0);
        do {
            int j1 = way[size_t(j0)];
            match[size_t(j0)] = match[size_t(j1)];
            j0 = j1;
        } while (j0);
    }

    std::vector<int> row_to_col(size_t(n), -1);
    for (int j = 1; j <= n; ++j)
        if (match[size_t(j)] > 0) row_to_col[size_t(match[size_t(j)] - 1)] = j - 1;
    return row_to_col;
}

}  // namespace detail

constexpr int kMaxAssignmentPoints = 4096;

// Minimum total squared Euclidean distance assignment between strata centers
// (rows) and samples (columns). Stratified inputs short-circuit to the
// per-stratum identity mapping, which is optimal among per-stratum-feasible
// assignments.
inline Assignment solve_assignment(const PointSet& points, int s) {
    const int n = s * s;
    if (points.n() != n) throw DataError("point count does not match grid side squared");
    if (n > kMaxAssignmentPoints)
        throw UsageError("assignment limited to " + std::to_string(kMaxAssignmentPoints) + " points");

    Assignment a;
    if (detect_stratified(points, s)) {
        a.perm.assign(size_t(n), -1);
        for (int idx = 0; idx < n; ++idx) {
            const Point2& p = points[idx];
            int i = std::min(s - 1, int(p.x * s));
            int j = std::min(s - 1, int(p.y * s));
            a.perm[size_t(j) * s + i] = idx;
        }
        return a;
    }

    auto direct_cost = [&](int row, int col) {
        Point2 c = stratum_center(row, s);
        double dx = points[col].x - c.x;
        double dy = points[col].y - c.y;
        return dx * dx + dy * dy;
    };
    if (n <= 1024) {
        std::vector<double> m(size_t(n) * n);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) m[size_t(r) * n + c] = direct_cost(r, c);
        a.perm = detail::solve_lap(n, [&](int r, int c) { return m[size_t(r) * n + c]; });
    } else {
        a.perm = detail::solve_lap(n, direct_cost);
    }
    return a;
}

inline double assignment_cost(const PointSet& points, int s, const Assignment& a) {
    double total = 0.0;
    for (int k = 0; k < s * s; ++k) {
        Point2 c = stratum_center(k, s);
        double dx = points[a.perm[size_t(k)]].x - c.x;
        double dy = points[a.perm[size_t(k)]].y - c.y;
        total += dx * dx + dy * dy;
    }
    return total;
}

// points -> offset field; invariant to input ordering because the LAP
// optimum is a set function of the points.
inline GridField embed(const PointSet& points, int s) {
    Assignment a = solve_assignment(points, s);
    GridField f(s);
    for (int k = 0; k < s * s; ++k) {
        Point2 c = stratum_center(k, s);
        const Point2& p = points[a.perm[size_t(k)]];
        f.x(k) = (p.x - c.x) * s;
        f.y(k) = (p.y - c.y) * s;
    }
    return f;
}

// offset field -> points, wrapping toroidally when offsets escape the square.
inline PointSet unembed(const GridField& f) {
    PointSet ps;
    ps.pts.reserve(size_t(f.n()));
    for (int k = 0; k < f.n(); ++k) {
        Point2 c = stratum_center(k, f.side);
        ps.pts.push_back(wrap_unit(c.x + f.x(k) / f.side, c.y + f.y(k) / f.side));
    }
    return ps;
}

// Fraction of offsets whose point leaves its own stratum; diagnostic for
// synthesized fields.
inline double escape_rate(const GridField& f) {
    int escapes = 0;
    for (int k = 0; k < f.n(); ++k) {
        if (f.x(k) < -0.5 || f.x(k) >= 0.5 || f.y(k) < -0.5 || f.y(k) >= 0.5) ++escapes;
    }
    return double(escapes) / double(f.n());
}

// --- GFLD binary format -------------------------------------------------------
// magic "GFLD", version u16, side u16, then side*side*2 little-endian f32,
// row-major, x offset then y offset per stratum.

namespace detail {

inline void put_u16(std::FILE* f, uint16_t v) {
    unsigned char b[2] = {(unsigned char)(v & 0xff), (unsigned char)(v >> 8)};
    std::fwrite(b, 1, 2, f);
}

inline uint16_t get_u16(std::FILE* f) {
    unsigned char b[2];
    if (std::fread(b, 1, 2, f) != 2) throw DataError("truncated GFLD file");
    return uint16_t(b[0] | (b[1] << 8));
}

inline void put_f32(std::FILE* f, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    unsigned char b[4] = {(unsigned char)(u & 0xff), (unsigned char)((u >> 8) & 0xff),
                          (unsigned char)((u >> 16) & 0xff), (unsigned char)(u >> 24)};
    std::fwrite(b, 1, 4, f);
}

inline float get_f32(std::FILE* f) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw DataError("truncated GFLD file");
    uint32_t u = uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace detail

inline void write_gridfield(const GridField& g, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot open for writing: " + path);
    std::fwrite("GFLD", 1, 4, f);
    detail::put_u16(f, 1);
    detail::put_u16(f, uint16_t(g.side));
    for (int k = 0; k < g.n(); ++k) {
        detail::put_f32(f, float(g.x(k)));
        detail::put_f32(f, float(g.y(k)));
    }
    std::fclose(f);
}

inline GridField read_gridfield(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw DataError("cannot open: " + path);
    char magic[4];
    if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "GFLD", 4) != 0) {
        std::fclose(f);
        throw DataError("not a GFLD file: " + path);
    }
    uint16_t version = detail::get_u16(f);
    if (version != 1) {
        std::fclose(f);
        throw DataError("unsupported GFLD version in " + path);
    }
    int side = detail::get_u16(f);
    GridField g(side);
    try {
        for (int k = 0; k < g.n(); ++k) {
            g.x(k) = detail::get_f32(f);
            g.y(k) = detail::get_f32(f);
        }
    } catch (...) {
        std::fclose(f);
        throw;
    }
    std::fclose(f);
    return g;
}

inline std::string gridfield_filename(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "field_%06d.gfld", index);
    return buf;
}

}  // namespace dpts::transport
