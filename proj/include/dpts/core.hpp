#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "dpts/common.hpp"

namespace dpts {

// A sample location in the half-open unit square [0,1)^2.
struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

struct PointSet {
    std::vector<Point2> pts;

    PointSet() = default;
    explicit PointSet(std::vector<Point2> p) : pts(std::move(p)) {}

    int n() const { return int(pts.size()); }
    Point2& operator[](int i) { return pts[size_t(i)]; }
    const Point2& operator[](int i) const { return pts[size_t(i)]; }
};

// Toroidal wrap onto [0,1): subtract the floor per axis. An input of
// exactly 1.0 maps to 0.0.
inline Point2 wrap_unit(double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) throw DataError("non-finite coordinate");
    double wx = x - std::floor(x);
    double wy = y - std::floor(y);
    // floor rounding can leave exactly 1.0 for tiny negative inputs
    if (wx >= 1.0) wx = 0.0;
    if (wy >= 1.0) wy = 0.0;
    return {wx, wy};
}

inline Point2 wrap_unit(const Point2& p) { return wrap_unit(p.x, p.y); }

// --- point-set text format -------------------------------------------------
// One point per line, "x y" with a single space, no header. Doubles are
// written with 17 significant digits so write/read round-trips bitwise.

inline void write_pointset(const PointSet& ps, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw DataError("cannot open for writing: " + path);
    for (const Point2& p : ps.pts) std::fprintf(f, "%.17g %.17g\n", p.x, p.y);
    std::fclose(f);
}

inline PointSet read_pointset(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "r");
    if (!f) throw DataError("cannot open: " + path);
    PointSet ps;
    char line[256];
    int lineno = 0;
    while (std::fgets(line, sizeof line, f)) {
        ++lineno;
        char* s = line;
        while (*s == ' ' || *s == '\t') ++s;
        if (*s == '\0' || *s == '\n' || *s == '\r') continue;
        char* end = nullptr;
        double x = std::strtod(s, &end);
        if (end == s) {
            std::fclose(f);
            throw DataError("malformed line " + std::to_string(lineno) + " in " + path);
        }
        s = end;
        double y = std::strtod(s, &end);
        if (end == s) {
            std::fclose(f);
            throw DataError("malformed line " + std::to_string(lineno) + " in " + path);
        }
        if (!std::isfinite(x) || !std::isfinite(y)) {
            std::fclose(f);
            throw DataError("non-finite coordinate at line " + std::to_string(lineno) + " in " + path);
        }
        if (x < 0.0 || x >= 1.0 || y < 0.0 || y >= 1.0) {
            std::fclose(f);
            throw DataError("coordinate outside unit square at line " + std::to_string(lineno) + " in " + path);
        }
        ps.pts.push_back({x, y});
    }
    std::fclose(f);
    if (ps.pts.empty()) throw DataError("empty point-set file: " + path);
    return ps;
}

// Batch container: directory of files named pts_<index>.txt, index
// zero-padded to 6 digits.
inline std::string pointset_filename(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "pts_%06d.txt", index);
    return buf;
}

inline std::vector<std::string> list_pointset_files(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
    std::vector<std::string> out;
    for (int i = 0;; ++i) {
        fs::path p = fs::path(dir) / pointset_filename(i);
        if (!fs::exists(p)) break;
        out.push_back(p.string());
    }
    if (out.empty()) throw DataError("no pts_*.txt files in " + dir);
    return out;
}

}  // namespace dpts
