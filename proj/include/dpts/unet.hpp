#pragma once

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "dpts/rng.hpp"
#include "dpts/tensor.hpp"

namespace dpts::unet {

using ag::Shape;
using ag::Tensor;

// Size-agnostic denoiser configuration. Parameter shapes depend only on
// these fields, never on the grid side, which is what lets one network
// train on several grid sizes at once.
struct UNetConfig {
    int levels = 3;
    int base_channels = 32;
    std::vector<int> channel_mult = {1, 2, 2};
    int time_embed_dim = 128;
    int groups = 8;
    // two residual blocks per level, attention at every level

    int divisor() const { return 1 << (levels - 1); }

    int channels(int level) const { return base_channels * channel_mult[size_t(level)]; }

    void validate() const {
        if (levels < 1) throw DataError("unet: levels must be >= 1");
        if (int(channel_mult.size()) != levels) throw DataError("unet: channel_mult size must equal levels");
        if (time_embed_dim < 2 || time_embed_dim % 2) throw DataError("unet: time_embed_dim must be even");
        for (int l = 0; l < levels; ++l)
            if (channels(l) % groups != 0) throw DataError("unet: channels must be divisible by norm groups");
    }
};

// Sinusoidal step embedding: half sines, half cosines, geometric frequency
// ladder spanning 1 to 1e4. The learned projection lives in the network.
inline std::vector<double> sinusoidal_embedding(double t, int dim) {
    int half = dim / 2;
    std::vector<double> out(static_cast<size_t>(dim));
    for (int i = 0; i < half; ++i) {
        double f = std::pow(10000.0, half > 1 ? double(i) / double(half - 1) : 0.0);
        out[size_t(i)] = std::sin(t / f);
        out[size_t(half + i)] = std::cos(t / f);
    }
    return out;
}

template <typename T>
class UNet {
  public:
    struct ConvP {
        int w = -1, b = -1;
    };
    struct ResBlockP {
        int gn1_g, gn1_b;
        ConvP conv1;
        int temb_w, temb_b;
        int gn2_g, gn2_b;
        ConvP conv2;  // zero-initialized
    };
    struct AttnP {
        int gn_g, gn_b;
        ConvP q, k, v, proj;  // proj zero-initialized
    };
    struct LevelP {
        ResBlockP res[2];
        AttnP attn[2];
        ConvP down;    // encoder only, absent on the last level
        ConvP reduce;  // decoder only: 3x3 conv shrinking the concat width
        ConvP up;      // decoder only, absent on level 0
    };

    UNet(const UNetConfig& cfg, SeededRng rng) : cfg_(cfg) {
        cfg_.validate();
        build(&rng);
    }

    // Construct with an existing parameter table (weights file load).
    UNet(const UNetConfig& cfg, ag::ParamStore<T>&& store) : cfg_(cfg), store_(std::move(store)) {
        cfg_.validate();
        ag::ParamStore<T> loaded = std::move(store_);
        store_ = ag::ParamStore<T>();
        build(nullptr);
        if (loaded.count() != store_.count()) throw DataError("weights file does not match configuration");
        for (int i = 0; i < store_.count(); ++i) {
            auto& dst = store_.param(i);
            auto& src = loaded.param(i);
            if (src.name != dst.name || src.shape != dst.shape)
                throw DataError("weights file parameter mismatch at " + dst.name);
            dst.value = std::move(src.value);
            dst.m = std::move(src.m);
            dst.v = std::move(src.v);
        }
        store_.set_step(loaded.step());
    }

    const UNetConfig& config() const { return cfg_; }
    ag::ParamStore<T>& store() { return store_; }
    const ag::ParamStore<T>& store() const { return store_; }

    using Bound = std::vector<Tensor<T>>;

    Bound bind(ag::Tape<T>& tape, bool requires_grad = true) const {
        Bound b;
        b.reserve(size_t(store_.count()));
        for (int i = 0; i < store_.count(); ++i) {
            const auto& p = store_.param(i);
            b.push_back(tape.leaf(p.shape, p.value, requires_grad));
        }
        return b;
    }

    // Predicted noise for a batch of offset fields. field: [N,2,s,s],
    // t: one diffusion step index per batch element.
    Tensor<T> forward(ag::Tape<T>& tape, const Bound& bp, Tensor<T> field, const std::vector<int>& ts) const {
        const Shape& s = tape.shape(field);
        if (s.size() != 4 || s[1] != 2) throw NumericError("unet: input must be [N,2,s,s]");
        if (s[0] != int(ts.size())) throw NumericError("unet: one step index per batch element required");
        int side = s[2];
        if (s[3] != side || side % cfg_.divisor() != 0)
            throw DataError("unet: grid side must be a multiple of " + std::to_string(cfg_.divisor()));

        // time embedding: constant sinusoidal features, learned 2-layer MLP
        int ted = cfg_.time_embed_dim;
        std::vector<T> emb(size_t(ts.size()) * ted);
        for (size_t n = 0; n < ts.size(); ++n) {
            std::vector<double> e = sinusoidal_embedding(double(ts[n]), ted);
            for (int i = 0; i < ted; ++i) emb[n * size_t(ted) + i] = T(e[size_t(i)]);
        }
        Tensor<T> temb = tape.leaf({int(ts.size()), ted}, emb, false);
        temb = ag::linear(temb, bp[size_t(time_mlp1_.w)], bp[size_t(time_mlp1_.b)]);
        temb = ag::silu(temb);
        temb = ag::linear(temb, bp[size_t(time_mlp2_.w)], bp[size_t(time_mlp2_.b)]);

        Tensor<T> h = ag::conv2d(field, bp[size_t(stem_.w)], bp[size_t(stem_.b)]);

        std::vector<Tensor<T>> skips;
        for (int l = 0; l < cfg_.levels; ++l) {
            for (int r = 0; r < 2; ++r) {
                h = resblock(tape, bp, enc_[size_t(l)].res[r], h, temb);
                h = attention(tape, bp, enc_[size_t(l)].attn[r], h);
            }
            skips.push_back(h);
            if (l + 1 < cfg_.levels) h = ag::conv2d(h, bp[size_t(enc_[size_t(l)].down.w)], bp[size_t(enc_[size_t(l)].down.b)], 2);
        }

        for (int l = cfg_.levels - 1; l >= 0; --l) {
            h = ag::concat_channels(h, skips[size_t(l)]);
            h = ag::conv2d(h, bp[size_t(dec_[size_t(l)].reduce.w)], bp[size_t(dec_[size_t(l)].reduce.b)]);
            for (int r = 0; r < 2; ++r) {
                h = resblock(tape, bp, dec_[size_t(l)].res[r], h, temb);
                h = attention(tape, bp, dec_[size_t(l)].attn[r], h);
            }
            if (l > 0) {
                h = ag::upsample_nearest2x(h);
                h = ag::conv2d(h, bp[size_t(dec_[size_t(l)].up.w)], bp[size_t(dec_[size_t(l)].up.b)]);
            }
        }

        h = ag::group_norm(h, bp[size_t(head_gn_g_)], bp[size_t(head_gn_b_)], cfg_.groups);
        h = ag::silu(h);
        return ag::conv2d(h, bp[size_t(head_.w)], bp[size_t(head_.b)]);
    }

  private:
    Tensor<T> resblock(ag::Tape<T>& tape, const Bound& bp, const ResBlockP& p, Tensor<T> x, Tensor<T> temb) const {
        Tensor<T> h = ag::group_norm(x, bp[size_t(p.gn1_g)], bp[size_t(p.gn1_b)], cfg_.groups);
        h = ag::silu(h);
        h = ag::conv2d(h, bp[size_t(p.conv1.w)], bp[size_t(p.conv1.b)]);
        Tensor<T> tproj = ag::linear(ag::silu(temb), bp[size_t(p.temb_w)], bp[size_t(p.temb_b)]);
        h = ag::add_channel_bias(h, tproj);
        h = ag::group_norm(h, bp[size_t(p.gn2_g)], bp[size_t(p.gn2_b)], cfg_.groups);
        h = ag::silu(h);
        h = ag::conv2d(h, bp[size_t(p.conv2.w)], bp[size_t(p.conv2.b)]);
        return ag::add(x, h);
    }

    Tensor<T> attention(ag::Tape<T>& tape, const Bound& bp, const AttnP& p, Tensor<T> x) const {
        (void)tape;
        Tensor<T> h = ag::group_norm(x, bp[size_t(p.gn_g)], bp[size_t(p.gn_b)], cfg_.groups);
        h = ag::self_attention(h, bp[size_t(p.q.w)], bp[size_t(p.q.b)], bp[size_t(p.k.w)], bp[size_t(p.k.b)],
                               bp[size_t(p.v.w)], bp[size_t(p.v.b)], bp[size_t(p.proj.w)], bp[size_t(p.proj.b)]);
        return ag::add(x, h);
    }

    // --- parameter construction (deterministic order and names) -----------

    ConvP add_conv(const std::string& name, int cout, int cin, int k, SeededRng* rng, bool zero_init = false) {
        ConvP p;
        int64_t wn = int64_t(cout) * cin * k * k;
        std::vector<T> w;
        if (zero_init || !rng) {
            w = ag::init_zeros<T>(wn);
        } else {
            SeededRng r = rng->fork(uint64_t(store_.count()) + 1);
            w = ag::init_normal<T>(wn, std::sqrt(2.0 / double(cin * k * k)), r);
        }
        p.w = store_.add(name + ".w", {cout, cin, k, k}, std::move(w));
        p.b = store_.add(name + ".b", {cout}, ag::init_zeros<T>(cout));
        return p;
    }

    std::pair<int, int> add_linear(const std::string& name, int in, int out, SeededRng* rng) {
        std::vector<T> w;
        if (rng) {
            SeededRng r = rng->fork(uint64_t(store_.count()) + 1);
            w = ag::init_normal<T>(int64_t(in) * out, std::sqrt(1.0 / double(in)), r);
        } else {
            w = ag::init_zeros<T>(int64_t(in) * out);
        }
        int wi = store_.add(name + ".w", {in, out}, std::move(w));
        int bi = store_.add(name + ".b", {out}, ag::init_zeros<T>(out));
        return {wi, bi};
    }

    std::pair<int, int> add_norm(const std::string& name, int c) {
        int g = store_.add(name + ".g", {c}, ag::init_ones<T>(c));
        int b = store_.add(name + ".b", {c}, ag::init_zeros<T>(c));
        return {g, b};
    }

    ResBlockP add_resblock(const std::string& name, int c, SeededRng* rng) {
        ResBlockP p;
        std::tie(p.gn1_g, p.gn1_b) = add_norm(name + ".gn1", c);
        p.conv1 = add_conv(name + ".conv1", c, c, 3, rng);
        std::tie(p.temb_w, p.temb_b) = add_linear(name + ".temb", cfg_.time_embed_dim, c, rng);
        std::tie(p.gn2_g, p.gn2_b) = add_norm(name + ".gn2", c);
        p.conv2 = add_conv(name + ".conv2", c, c, 3, rng, /*zero_init=*/true);
        return p;
    }

    AttnP add_attention(const std::string& name, int c, SeededRng* rng) {
        AttnP p;
        std::tie(p.gn_g, p.gn_b) = add_norm(name + ".gn", c);
        p.q = add_conv(name + ".q", c, c, 1, rng);
        p.k = add_conv(name + ".k", c, c, 1, rng);
        p.v = add_conv(name + ".v", c, c, 1, rng);
        p.proj = add_conv(name + ".proj", c, c, 1, rng, /*zero_init=*/true);
        return p;
    }

    void build(SeededRng* rng) {
        time_mlp1_ = to_conv(add_linear("time.mlp1", cfg_.time_embed_dim, cfg_.time_embed_dim, rng));
        time_mlp2_ = to_conv(add_linear("time.mlp2", cfg_.time_embed_dim, cfg_.time_embed_dim, rng));
        stem_ = add_conv("stem", cfg_.channels(0), 2, 3, rng);
        enc_.resize(size_t(cfg_.levels));
        dec_.resize(size_t(cfg_.levels));
        for (int l = 0; l < cfg_.levels; ++l) {
            std::string base = "enc" + std::to_string(l);
            for (int r = 0; r < 2; ++r) {
                enc_[size_t(l)].res[r] = add_resblock(base + ".res" + std::to_string(r), cfg_.channels(l), rng);
                enc_[size_t(l)].attn[r] = add_attention(base + ".attn" + std::to_string(r), cfg_.channels(l), rng);
            }
            if (l + 1 < cfg_.levels)
                enc_[size_t(l)].down = add_conv(base + ".down", cfg_.channels(l + 1), cfg_.channels(l), 3, rng);
        }
        for (int l = cfg_.levels - 1; l >= 0; --l) {
            std::string base = "dec" + std::to_string(l);
            int c = cfg_.channels(l);
            // the decoder enters level l at that level's own width; the
            // topmost level concatenates its encoder twin directly
            dec_[size_t(l)].reduce = add_conv(base + ".reduce", c, 2 * c, 3, rng);
            for (int r = 0; r < 2; ++r) {
                dec_[size_t(l)].res[r] = add_resblock(base + ".res" + std::to_string(r), c, rng);
                dec_[size_t(l)].attn[r] = add_attention(base + ".attn" + std::to_string(r), c, rng);
            }
            if (l > 0) dec_[size_t(l)].up = add_conv(base + ".up", cfg_.channels(l - 1), c, 3, rng);
        }
        std::tie(head_gn_g_, head_gn_b_) = add_norm("head.gn", cfg_.channels(0));
        head_ = add_conv("head.conv", 2, cfg_.channels(0), 3, rng, /*zero_init=*/true);
    }

    static ConvP to_conv(std::pair<int, int> wb) { return ConvP{wb.first, wb.second}; }

    UNetConfig cfg_;
    ag::ParamStore<T> store_;
    ConvP time_mlp1_, time_mlp2_, stem_, head_;
    int head_gn_g_ = -1, head_gn_b_ = -1;
    std::vector<LevelP> enc_, dec_;
};

// ---------------------------------------------------------------------------
// PFWT weights format: magic "PFWT", version u16, UNetConfig header, named
// parameter table (name, shape, raw little-endian f32), optional optimizer
// and trainer state trailer for checkpoints.
// ---------------------------------------------------------------------------

struct TrainerState {
    bool present = false;
    uint64_t global_step = 0;
    uint64_t rng_counter = 0;
};

// Diffusion run settings stored alongside the network configuration, so a
// weights file is self-describing for synthesis.
struct WeightsMeta {
    uint32_t T = 1000;
    double beta = 1e-2;
    bool sigma_literal_beta = false;
    double data_scale = 1.0;
};

namespace detail {

inline void put_u16(std::FILE* f, uint16_t v) {
    unsigned char b[2] = {(unsigned char)(v & 0xff), (unsigned char)(v >> 8)};
    std::fwrite(b, 1, 2, f);
}

inline void put_u32(std::FILE* f, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
    std::fwrite(b, 1, 4, f);
}

inline void put_u64(std::FILE* f, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
    std::fwrite(b, 1, 8, f);
}

inline uint16_t get_u16(std::FILE* f) {
    unsigned char b[2];
    if (std::fread(b, 1, 2, f) != 2) throw DataError("truncated PFWT file");
    return uint16_t(b[0] | (b[1] << 8));
}

inline uint32_t get_u32(std::FILE* f) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw DataError("truncated PFWT file");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
    return v;
}

inline uint64_t get_u64(std::FILE* f) {
    unsigned char b[8];
    if (std::fread(b, 1, 8, f) != 8) throw DataError("truncated PFWT file");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
}

inline void put_f64(std::FILE* f, double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    put_u64(f, u);
}

inline double get_f64(std::FILE* f) {
    uint64_t u = get_u64(f);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

template <typename T>
void put_f32_array(std::FILE* f, const std::vector<T>& v) {
    std::vector<unsigned char> buf(v.size() * 4);
    for (size_t i = 0; i < v.size(); ++i) {
        float x = float(v[i]);
        uint32_t u;
        std::memcpy(&u, &x, 4);
        for (int k = 0; k < 4; ++k) buf[i * 4 + size_t(k)] = (unsigned char)((u >> (8 * k)) & 0xff);
    }
    std::fwrite(buf.data(), 1, buf.size(), f);
}

template <typename T>
void get_f32_array(std::FILE* f, std::vector<T>& v) {
    std::vector<unsigned char> buf(v.size() * 4);
    if (std::fread(buf.data(), 1, buf.size(), f) != buf.size()) throw DataError("truncated PFWT file");
    for (size_t i = 0; i < v.size(); ++i) {
        uint32_t u = 0;
        for (int k = 0; k < 4; ++k) u |= uint32_t(buf[i * 4 + size_t(k)]) << (8 * k);
        float x;
        std::memcpy(&x, &u, 4);
        v[i] = T(x);
    }
}

}  // namespace detail

template <typename T>
void save_weights(const std::string& path, const UNet<T>& net, const WeightsMeta& meta = {},
                  const TrainerState& ts = {}) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot open for writing: " + path);
    const UNetConfig& cfg = net.config();
    std::fwrite("PFWT", 1, 4, f);
    detail::put_u16(f, 1);
    detail::put_u16(f, uint16_t(cfg.levels));
    detail::put_u16(f, uint16_t(cfg.base_channels));
    detail::put_u16(f, uint16_t(cfg.channel_mult.size()));
    for (int m : cfg.channel_mult) detail::put_u16(f, uint16_t(m));
    detail::put_u16(f, uint16_t(cfg.time_embed_dim));
    detail::put_u16(f, uint16_t(cfg.groups));
    detail::put_u32(f, meta.T);
    detail::put_f64(f, meta.beta);
    unsigned char lit = meta.sigma_literal_beta ? 1 : 0;
    std::fwrite(&lit, 1, 1, f);
    detail::put_f64(f, meta.data_scale);
    const auto& store = net.store();
    detail::put_u32(f, uint32_t(store.count()));
    for (int i = 0; i < store.count(); ++i) {
        const auto& p = store.param(i);
        detail::put_u16(f, uint16_t(p.name.size()));
        std::fwrite(p.name.data(), 1, p.name.size(), f);
        detail::put_u16(f, uint16_t(p.shape.size()));
        for (int d : p.shape) detail::put_u32(f, uint32_t(d));
        detail::put_f32_array(f, p.value);
    }
    unsigned char has_opt = ts.present ? 1 : 0;
    std::fwrite(&has_opt, 1, 1, f);
    if (ts.present) {
        detail::put_u64(f, uint64_t(store.step()));
        for (int i = 0; i < store.count(); ++i) {
            detail::put_f32_array(f, store.param(i).m);
            detail::put_f32_array(f, store.param(i).v);
        }
        detail::put_u64(f, ts.global_step);
        detail::put_u64(f, ts.rng_counter);
    }
    std::fclose(f);
}

template <typename T>
UNet<T> load_weights(const std::string& path, TrainerState* ts_out = nullptr, WeightsMeta* meta_out = nullptr) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw DataError("cannot open: " + path);
    auto fail = [&](const std::string& why) -> DataError {
        std::fclose(f);
        return DataError(why + ": " + path);
    };
    char magic[4];
    if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "PFWT", 4) != 0) throw fail("not a PFWT file");
    if (detail::get_u16(f) != 1) throw fail("unsupported PFWT version");
    UNetConfig cfg;
    cfg.levels = detail::get_u16(f);
    cfg.base_channels = detail::get_u16(f);
    int nmult = detail::get_u16(f);
    cfg.channel_mult.assign(size_t(nmult), 1);
    for (int i = 0; i < nmult; ++i) cfg.channel_mult[size_t(i)] = detail::get_u16(f);
    cfg.time_embed_dim = detail::get_u16(f);
    cfg.groups = detail::get_u16(f);
    WeightsMeta meta;
    meta.T = detail::get_u32(f);
    meta.beta = detail::get_f64(f);
    unsigned char lit = 0;
    if (std::fread(&lit, 1, 1, f) != 1) throw fail("truncated PFWT file");
    meta.sigma_literal_beta = lit != 0;
    meta.data_scale = detail::get_f64(f);
    if (meta_out) *meta_out = meta;

    ag::ParamStore<T> store;
    uint32_t count = detail::get_u32(f);
    try {
        for (uint32_t i = 0; i < count; ++i) {
            uint16_t len = detail::get_u16(f);
            std::string name(len, '\0');
            if (std::fread(name.data(), 1, len, f) != len) throw DataError("truncated PFWT file");
            uint16_t nd = detail::get_u16(f);
            Shape shape(nd);
            for (int d = 0; d < nd; ++d) shape[size_t(d)] = int(detail::get_u32(f));
            std::vector<T> vals(size_t(ag::numel(shape)));
            detail::get_f32_array(f, vals);
            store.add(name, shape, std::move(vals));
        }
        unsigned char has_opt = 0;
        if (std::fread(&has_opt, 1, 1, f) != 1) throw DataError("truncated PFWT file");
        TrainerState ts;
        if (has_opt) {
            store.set_step(int64_t(detail::get_u64(f)));
            for (int i = 0; i < store.count(); ++i) {
                detail::get_f32_array(f, store.param(i).m);
                detail::get_f32_array(f, store.param(i).v);
            }
            ts.present = true;
            ts.global_step = detail::get_u64(f);
            ts.rng_counter = detail::get_u64(f);
        }
        if (ts_out) *ts_out = ts;
    } catch (const DataError& e) {
        std::fclose(f);
        throw DataError(std::string(e.what()) + " in " + path);
    }
    std::fclose(f);
    return UNet<T>(cfg, std::move(store));
}

}  // namespace dpts::unet
