#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "dpts/common.hpp"

namespace dpts {

// Line-oriented key=value run configuration. Commands bind their fields to
// keys; a loaded file may only mention bound keys, and every run serializes
// the resolved values next to its outputs.
class RunConfig {
  public:
    void bind_int(const std::string& key, int* p) {
        bind(key, [p](const std::string& v) { *p = parse_ll(v); }, [p] { return std::to_string(*p); });
    }

    void bind_u64(const std::string& key, uint64_t* p) {
        bind(key, [p](const std::string& v) { *p = uint64_t(std::strtoull(v.c_str(), nullptr, 10)); },
             [p] { return std::to_string(*p); });
    }

    void bind_double(const std::string& key, double* p) {
        bind(key, [p](const std::string& v) { *p = parse_d(v); },
             [p] {
                 char buf[64];
                 std::snprintf(buf, sizeof buf, "%.17g", *p);
                 return std::string(buf);
             });
    }

    void bind_bool(const std::string& key, bool* p) {
        bind(key,
             [key, p](const std::string& v) {
                 if (v == "true" || v == "1") *p = true;
                 else if (v == "false" || v == "0") *p = false;
                 else throw UsageError("config: boolean expected for " + key);
             },
             [p] { return *p ? std::string("true") : std::string("false"); });
    }

    void bind_string(const std::string& key, std::string* p) {
        bind(key, [p](const std::string& v) { *p = v; }, [p] { return *p; });
    }

    void bind_int_list(const std::string& key, std::vector<int>* p) {
        bind(key,
             [p](const std::string& v) {
                 p->clear();
                 std::string cur;
                 for (char c : v + ",") {
                     if (c == ',') {
                         if (!cur.empty()) p->push_back(int(parse_ll(cur)));
                         cur.clear();
                     } else {
                         cur += c;
                     }
                 }
             },
             [p] {
                 std::string s;
                 for (size_t i = 0; i < p->size(); ++i) s += (i ? "," : "") + std::to_string((*p)[i]);
                 return s;
             });
    }

    // Apply a key=value file; keys must all be bound.
    void load(const std::string& path) {
        std::FILE* f = std::fopen(path.c_str(), "r");
        if (!f) throw DataError("cannot open config: " + path);
        char line[4096];
        int lineno = 0;
        while (std::fgets(line, sizeof line, f)) {
            ++lineno;
            std::string s(line);
            while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
            size_t start = s.find_first_not_of(" \t");
            if (start == std::string::npos || s[start] == '#') continue;
            size_t eq = s.find('=', start);
            if (eq == std::string::npos) {
                std::fclose(f);
                throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
            }
            std::string key = trim(s.substr(start, eq - start));
            std::string value = trim(s.substr(eq + 1));
            if (!apply(key, value)) {
                std::fclose(f);
                throw UsageError("config: unknown key '" + key + "'");
            }
        }
        std::fclose(f);
    }

    bool apply(const std::string& key, const std::string& value) {
        for (auto& e : entries_) {
            if (e.key == key) {
                e.set(value);
                return true;
            }
        }
        return false;
    }

    void save(const std::string& path) const {
        std::FILE* f = std::fopen(path.c_str(), "w");
        if (!f) throw DataError("cannot open for writing: " + path);
        for (const auto& e : entries_) std::fprintf(f, "%s=%s\n", e.key.c_str(), e.get().c_str());
        std::fclose(f);
    }

  private:
    struct Entry {
        std::string key;
        std::function<void(const std::string&)> set;
        std::function<std::string()> get;
    };

    void bind(const std::string& key, std::function<void(const std::string&)> set, std::function<std::string()> get) {
        entries_.push_back({key, std::move(set), std::move(get)});
    }

    static std::string trim(const std::string& s) {
        size_t a = s.find_first_not_of(" \t");
        size_t b = s.find_last_not_of(" \t");
        if (a == std::string::npos) return "";
        return s.substr(a, b - a + 1);
    }

    static long long parse_ll(const std::string& v) {
        char* end = nullptr;
        long long x = std::strtoll(v.c_str(), &end, 10);
        if (end == v.c_str() || *end != '\0') throw UsageError("config: integer expected, got '" + v + "'");
        return x;
    }

    static double parse_d(const std::string& v) {
        char* end = nullptr;
        double x = std::strtod(v.c_str(), &end);
        if (end == v.c_str() || *end != '\0') throw UsageError("config: number expected, got '" + v + "'");
        return x;
    }

    std::vector<Entry> entries_;
};

}  // namespace dpts
