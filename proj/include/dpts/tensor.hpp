#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dpts/common.hpp"
#include "dpts/rng.hpp"

namespace dpts::ag {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string r = "[";
    for (size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
    return r + "]";
}

[[noreturn]] inline void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw NumericError(std::string(op) + ": incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
}

template <typename T>
class Tape;

// Lightweight handle into a tape.
template <typename T>
struct Tensor {
    Tape<T>* tape = nullptr;
    int id = -1;
};

// Records forward values and backward closures for one computation. Nodes
// are appended in topological order by construction; backward walks the
// records once in reverse and frees intermediate gradients as soon as they
// have been consumed.
template <typename T>
class Tape {
  public:
    struct Node {
        Shape shape;
        std::vector<T> val;
        std::vector<T> grad;  // allocated lazily during backward
        bool requires_grad = false;
    };

    Tensor<T> leaf(const Shape& shape, const T* data, bool requires_grad) {
        Node n;
        n.shape = shape;
        n.val.assign(data, data + numel(shape));
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return {this, int(nodes_.size()) - 1};
    }

    Tensor<T> leaf(const Shape& shape, const std::vector<T>& data, bool requires_grad) {
        if (int64_t(data.size()) != numel(shape)) throw NumericError("leaf: data size does not match shape");
        return leaf(shape, data.data(), requires_grad);
    }

    Tensor<T> make(const Shape& shape, bool requires_grad) {
        Node n;
        n.shape = shape;
        n.val.assign(size_t(numel(shape)), T(0));
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return {this, int(nodes_.size()) - 1};
    }

    void record(int out_id, std::function<void(Tape&)> fn) {
        if (nodes_[size_t(out_id)].requires_grad) records_.push_back({out_id, std::move(fn)});
    }

    Node& node(const Tensor<T>& t) { return nodes_[size_t(t.id)]; }
    const Node& node(const Tensor<T>& t) const { return nodes_[size_t(t.id)]; }
    const Shape& shape(const Tensor<T>& t) const { return nodes_[size_t(t.id)].shape; }
    std::vector<T>& val(const Tensor<T>& t) { return nodes_[size_t(t.id)].val; }
    const std::vector<T>& cval(const Tensor<T>& t) const { return nodes_[size_t(t.id)].val; }

    // Gradient sized and zeroed on demand; empty means identically zero.
    std::vector<T>& grad_acc(int id) {
        Node& n = nodes_[size_t(id)];
        if (n.grad.empty()) n.grad.assign(n.val.size(), T(0));
        return n.grad;
    }

    bool has_grad(int id) const { return !nodes_[size_t(id)].grad.empty(); }

    // Gradient of a tensor after backward(); zeros if it never received one.
    std::vector<T> grad_of(const Tensor<T>& t) const {
        const Node& n = nodes_[size_t(t.id)];
        if (n.grad.empty()) return std::vector<T>(n.val.size(), T(0));
        return n.grad;
    }

    void backward(const Tensor<T>& loss) {
        if (numel(shape(loss)) != 1) throw NumericError("backward: loss must be scalar");
        for (Node& n : nodes_) n.grad.clear();
        grad_acc(loss.id)[0] = T(1);
        for (size_t r = records_.size(); r-- > 0;) {
            Node& out = nodes_[size_t(records_[r].out)];
            if (!out.grad.empty()) records_[r].fn(*this);
            // The producing record has run; nothing upstream reads this
            // gradient again, so release the memory (leaves keep theirs).
            out.grad.clear();
            out.grad.shrink_to_fit();
        }
    }

    size_t num_nodes() const { return nodes_.size(); }

  private:
    struct Record {
        int out;
        std::function<void(Tape&)> fn;
    };
    std::vector<Node> nodes_;
    std::vector<Record> records_;
};

// ---------------------------------------------------------------------------
// primitives
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
    return a.tape->shape(a) == b.tape->shape(b);
}

inline bool big(int64_t work) { return work > (1 << 15); }

// exp for the float path: round-to-nearest exp2 split plus a degree-6
// Taylor polynomial of 2^f on [-1/2, 1/2]. Relative error ~1e-7, pure
// arithmetic, so results stay bitwise reproducible. The double path keeps
// libm accuracy for gradient checks.
inline float exp_fast(float x) {
    if (x < -87.0f) return 0.0f;
    if (x > 88.0f) return std::numeric_limits<float>::infinity();
    float t = x * 1.44269504088896341f;
    float fi = std::floor(t + 0.5f);
    float f = t - fi;
    float p = 1.0f +
              f * (0.693147180559945f +
                   f * (0.240226506959101f +
                        f * (0.0555041086648216f +
                             f * (0.00961812910762848f +
                                  f * (0.00133335581464284f + f * 0.000154035303933816f)))));
    uint32_t bits = uint32_t(int32_t(fi) + 127) << 23;
    float scale;
    std::memcpy(&scale, &bits, 4);
    return p * scale;
}

inline float exp_approx(float x) { return exp_fast(x); }
inline double exp_approx(double x) { return std::exp(x); }

// fixed-order dot product with independent accumulator lanes; reassociation
// is explicit so the compiler can vectorize without altering determinism
template <typename T>
T dot_lanes(const T* a, const T* b, int n) {
    T acc[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
    int k = 0;
    for (; k + 8 <= n; k += 8)
        for (int u = 0; u < 8; ++u) acc[u] += a[k + u] * b[k + u];
    T tail = T(0);
    for (; k < n; ++k) tail += a[k] * b[k];
    return (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) + tail;
}

}  // namespace detail

template <typename T>
Tensor<T> add(Tensor<T> a, Tensor<T> b) {
    Tape<T>& tp = *a.tape;
    if (!detail::same_shape(a, b)) shape_fail("add", tp.shape(a), tp.shape(b));
    bool rg = tp.node(a).requires_grad || tp.node(b).requires_grad;
    Tensor<T> out = tp.make(tp.shape(a), rg);
    const auto& av = tp.cval(a);
    const auto& bv = tp.cval(b);
    auto& ov = tp.val(out);
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    tp.record(out.id, [a, b, out](Tape<T>& t) {
        const auto& g = t.grad_acc(out.id);
        if (t.node(a).requires_grad) {
            auto& ga = t.grad_acc(a.id);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.node(b).requires_grad) {
            auto& gb = t.grad_acc(b.id);
            for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> sub(Tensor<T> a, Tensor<T> b) {
    Tape<T>& tp = *a.tape;
    if (!detail::same_shape(a, b)) shape_fail("sub", tp.shape(a), tp.shape(b));
    bool rg = tp.node(a).requires_grad || tp.node(b).requires_grad;
    Tensor<T> out = tp.make(tp.shape(a), rg);
    const auto& av = tp.cval(a);
    const auto& bv = tp.cval(b);
    auto& ov = tp.val(out);
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
    tp.record(out.id, [a, b, out](Tape<T>& t) {
        const auto& g = t.grad_acc(out.id);
        if (t.node(a).requires_grad) {
            auto& ga = t.grad_acc(a.id);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.node(b).requires_grad) {
            auto& gb = t.grad_acc(b.id);
            for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> mul(Tensor<T> a, Tensor<T> b) {
    Tape<T>& tp = *a.tape;
    if (!detail::same_shape(a, b)) shape_fail("mul", tp.shape(a), tp.shape(b));
    bool rg = tp.node(a).requires_grad || tp.node(b).requires_grad;
    Tensor<T> out = tp.make(tp.shape(a), rg);
    const auto& av = tp.cval(a);
    const auto& bv = tp.cval(b);
    auto& ov = tp.val(out);
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    tp.record(out.id, [a, b, out](Tape<T>& t) {
        const auto& g = t.grad_acc(out.id);
        const auto& av2 = t.cval(a);
        const auto& bv2 = t.cval(b);
        if (t.node(a).requires_grad) {
            auto& ga = t.grad_acc(a.id);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
        }
        if (t.node(b).requires_grad) {
            auto& gb = t.grad_acc(b.id);
            for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> scale(Tensor<T> a, double c) {
    Tape<T>& tp = *a.tape;
    Tensor<T> out = tp.make(tp.shape(a), tp.node(a).requires_grad);
    const auto& av = tp.cval(a);
    auto& ov = tp.val(out);
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = T(av[i] * c);
    tp.record(out.id, [a, out, c](Tape<T>& t) {
        const auto& g = t.grad_acc(out.id);
        auto& ga = t.grad_acc(a.id);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += T(g[i] * c);
    });
    return out;
}

template <typename T>
Tensor<T> silu(Tensor<T> a) {
    Tape<T>& tp = *a.tape;
    Tensor<T> out = tp.make(tp.shape(a), tp.node(a).requires_grad);
    const auto& av = tp.cval(a);
    auto& ov = tp.val(out);
    for (size_t i = 0; i < ov.size(); ++i) {
        T s = T(1) / (T(1) + detail::exp_approx(-av[i]));
        ov[i] = av[i] * s;
    }
    tp.record(out.id, [a, out](Tape<T>& t) {
        const auto& g = t.grad_acc(out.id);
        const auto& av2 = t.cval(a);
        auto& ga = t.grad_acc(a.id);
        for (size_t i = 0; i < g.size(); ++i) {
            T s = T(1) / (T(1) + detail::exp_approx(-av2[i]));
            ga[i] += g[i] * s * (T(1) + av2[i] * (T(1) - s));
        }
    });
    return out;
}

template <typename T>
Tensor<T> reshape(Tensor<T> a, const Shape& shape) {
    Tape<T>& tp = *a.tape;
    if (numel(shape) != numel(tp.shape(a))) shape_fail("reshape", tp.shape(a), shape);
    Tensor<T> out = tp.make(shape, tp.node(a).requires_grad);
    tp.val(out) = tp.cval(a);
    tp.record(out.id, [a, out](Tape<T>& t) {
        const auto& g = t.grad_acc(out.id);
        auto& ga = t.grad_acc(a.id);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    return out;
}

template <typename T>
Tensor<T> sum_all(Tensor<T> a) {
    Tape<T>& tp = *a.tape;
    Tensor<T> out = tp.make({1}, tp.node(a).requires_grad);
    const auto& av = tp.cval(a);
    double lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    size_t i = 0;
    for (; i + 8 <= av.size(); i += 8)
        for (int u = 0; u < 8; ++u) lanes[u] += double(av[i + size_t(u)]);
    double acc = (((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7])));
    for (; i < av.size(); ++i) acc += double(av[i]);
    tp.val(out)[0] = T(acc);
    tp.record(out.id, [a, out](Tape<T>& t) {
        T g = t.grad_acc(out.id)[0];
        auto& ga = t.grad_acc(a.id);
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
    return out;
}

template <typename T>
Tensor<T> mean_all(Tensor<T> a) {
    int64_t n = numel(a.tape->shape(a));
    return scale(sum_all(a), 1.0 / double(n));
}

// Concatenate along the channel dimension of [N,C,H,W] tensors.
template <typename T>
Tensor<T> concat_channels(Tensor<T> a, Tensor<T> b) {
    Tape<T>& tp = *a.tape;
    const Shape& sa = tp.shape(a);
    const Shape& sb = tp.shape(b);
    if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
        shape_fail("concat_channels", sa, sb);
    int N = sa[0], Ca = sa[1], Cb = sb[1], H = sa[2], W = sa[3];
    bool rg = tp.node(a).requires_grad || tp.node(b).requires_grad;
    Tensor<T> out = tp.make({N, Ca + Cb, H, W}, rg);
    const auto& av = tp.cval(a);
    const auto& bv = tp.cval(b);
    auto& ov = tp.val(out);
    size_t plane = size_t(H) * W;
    for (int n = 0; n < N; ++n) {
        std::copy_n(&av[size_t(n) * Ca * plane], size_t(Ca) * plane, &ov[size_t(n) * (Ca + Cb) * plane]);
        std::copy_n(&bv[size_t(n) * Cb * plane], size_t(Cb) * plane,
                    &ov[size_t(n) * (Ca + Cb) * plane + size_t(Ca) * plane]);
    }
    tp.record(out.id, [a, b, out, N, Ca, Cb, plane](Tape<T>& t) {
        const auto& g = t.grad_acc(out.id);
        if (t.node(a).requires_grad) {
            auto& ga = t.grad_acc(a.id);
            for (int n = 0; n < N; ++n)
                for (size_t i = 0; i < size_t(Ca) * plane; ++i)
                    ga[size_t(n) * Ca * plane + i] += g[size_t(n) * (Ca + Cb) * plane + i];
        }
        if (t.node(b).requires_grad) {
            auto& gb = t.grad_acc(b.id);
            for (int n = 0; n < N; ++n)
                for (size_t i = 0; i < size_t(Cb) * plane; ++i)
                    gb[size_t(n) * Cb * plane + i] += g[size_t(n) * (Ca + Cb) * plane + size_t(Ca) * plane + i];
        }
    });
    return out;
}

// out[n,c,h,w] = x[n,c,h,w] + bias[n,c]; used to inject time embeddings.
template <typename T>
Tensor<T> add_channel_bias(Tensor<T> x, Tensor<T> bias) {
    Tape<T>& tp = *x.tape;
    const Shape& sx = tp.shape(x);
    const Shape& sb = tp.shape(bias);
    if (sx.size() != 4 || sb.size() != 2 || sb[0] != sx[0] || sb[1] != sx[1])
        shape_fail("add_channel_bias", sx, sb);
    int N = sx[0], C = sx[1];
    size_t plane = size_t(sx[2]) * sx[3];
    bool rg = tp.node(x).requires_grad || tp.node(bias).requires_grad;
    Tensor<T> out = tp.make(sx, rg);
    const auto& xv = tp.cval(x);
    const auto& bv = tp.cval(bias);
    auto& ov = tp.val(out);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            T b = bv[size_t(n) * C + c];
            const T* xs = &xv[(size_t(n) * C + c) * plane];
            T* os = &ov[(size_t(n) * C + c) * plane];
            for (size_t i = 0; i < plane; ++i) os[i] = xs[i] + b;
        }
    tp.record(out.id, [x, bias, out, N, C, plane](Tape<T>& t) {
        const auto& g = t.grad_acc(out.id);
        if (t.node(x).requires_grad) {
            auto& gx = t.grad_acc(x.id);
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (t.node(bias).requires_grad) {
            auto& gb = t.grad_acc(bias.id);
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    const T* gs = &g[(size_t(n) * C + c) * plane];
                    T acc = 0;
                    for (size_t i = 0; i < plane; ++i) acc += gs[i];
                    gb[size_t(n) * C + c] += acc;
                }
        }
    });
    return out;
}

// --- dense matmul -----------------------------------------------------------

namespace detail {

// C[M,N] (+)= A[M,K] * B[K,N]; ikj order so the inner loop is contiguous.
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool par = true) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par && int64_t(M) * N * K > (1 << 16))
#endif
    for (int i = 0; i < M; ++i) {
        T* crow = C + size_t(i) * N;
        for (int k = 0; k < K; ++k) {
            T a = A[size_t(i) * K + k];
            const T* brow = B + size_t(k) * N;
            for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    }
}

// C[M,N] (+)= A^T[M,K] * B[K,N] where A is stored [K,M].
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C, bool par = true) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par && int64_t(M) * N * K > (1 << 16))
#endif
    for (int i = 0; i < M; ++i) {
        T* crow = C + size_t(i) * N;
        for (int k = 0; k < K; ++k) {
            T a = A[size_t(k) * M + i];
            const T* brow = B + size_t(k) * N;
            for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    }
}

// C[M,N] (+)= A[M,K] * B^T[K,N] where B is stored [N,K].
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C, bool par = true) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par && int64_t(M) * N * K > (1 << 16))
#endif
    for (int i = 0; i < M; ++i) {
        const T* arow = A + size_t(i) * K;
        T* crow = C + size_t(i) * N;
        for (int j = 0; j < N; ++j) crow[j] += dot_lanes(arow, B + size_t(j) * K, K);
    }
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(Tensor<T> a, Tensor<T> b) {
    Tape<T>& tp = *a.tape;
    const Shape& sa = tp.shape(a);
    const Shape& sb = tp.shape(b);
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) shape_fail("matmul", sa, sb);
    int M = sa[0], K = sa[1], N = sb[1];
    bool rg = tp.node(a).requires_grad || tp.node(b).requires_grad;
    Tensor<T> out = tp.make({M, N}, rg);
    detail::gemm_nn(M, N, K, tp.cval(a).data(), tp.cval(b).data(), tp.val(out).data());
    tp.record(out.id, [a, b, out, M, N, K](Tape<T>& t) {
        const auto& g = t.grad_acc(out.id);
        if (t.node(a).requires_grad) {
            auto& ga = t.grad_acc(a.id);  // dA = dC * B^T
            detail::gemm_nt(M, K, N, g.data(), t.cval(b).data(), ga.data());
        }
        if (t.node(b).requires_grad) {
            auto& gb = t.grad_acc(b.id);  // dB = A^T * dC
            detail::gemm_tn(K, N, M, t.cval(a).data(), g.data(), gb.data());
        }
    });
    return out;
}

// x[N,K] * w[K,M] + bias[M]
template <typename T>
Tensor<T> linear(Tensor<T> x, Tensor<T> w, Tensor<T> bias) {
    Tape<T>& tp = *x.tape;
    const Shape& sx = tp.shape(x);
    const Shape& sw = tp.shape(w);
    if (sx.size() != 2 || sw.size() != 2 || sx[1] != sw[0]) shape_fail("linear", sx, sw);
    if (tp.shape(bias) != Shape{sw[1]}) shape_fail("linear bias", tp.shape(bias), sw);
    int N = sx[0], K = sx[1], M = sw[1];
    bool rg = tp.node(x).requires_grad || tp.node(w).requires_grad || tp.node(bias).requires_grad;
    Tensor<T> out = tp.make({N, M}, rg);
    auto& ov = tp.val(out);
    const auto& bv = tp.cval(bias);
    for (int n = 0; n < N; ++n) std::copy_n(bv.data(), size_t(M), &ov[size_t(n) * M]);
    detail::gemm_nn(N, M, K, tp.cval(x).data(), tp.cval(w).data(), ov.data());
    tp.record(out.id, [x, w, bias, out, N, K, M](Tape<T>& t) {
        const auto& g = t.grad_acc(out.id);
        if (t.node(x).requires_grad)
            detail::gemm_nt(N, K, M, g.data(), t.cval(w).data(), t.grad_acc(x.id).data());
        if (t.node(w).requires_grad)
            detail::gemm_tn(K, M, N, t.cval(x).data(), g.data(), t.grad_acc(w.id).data());
        if (t.node(bias).requires_grad) {
            auto& gb = t.grad_acc(bias.id);
            for (int n = 0; n < N; ++n)
                for (int m = 0; m < M; ++m) gb[size_t(m)] += g[size_t(n) * M + m];
        }
    });
    return out;
}

// Batched matmul over [B,R,C] operands with optional transposes.
// trans_a=false, trans_b=false: out[b] = A[b] * B[b]
// trans_a=true : out[b] = A[b]^T * B[b]     (A stored [B,K,M])
// trans_b=true : out[b] = A[b] * B[b]^T     (B stored [B,N,K])
template <typename T>
Tensor<T> bmm(Tensor<T> a, Tensor<T> b, bool trans_a, bool trans_b) {
    if (trans_a && trans_b) throw NumericError("bmm: double transpose unsupported");
    Tape<T>& tp = *a.tape;
    const Shape& sa = tp.shape(a);
    const Shape& sb = tp.shape(b);
    if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0]) shape_fail("bmm", sa, sb);
    int B = sa[0];
    int M = trans_a ? sa[2] : sa[1];
    int Ka = trans_a ? sa[1] : sa[2];
    int Kb = trans_b ? sb[2] : sb[1];
    int N = trans_b ? sb[1] : sb[2];
    if (Ka != Kb) shape_fail("bmm inner", sa, sb);
    int K = Ka;
    const int as1 = sa[1], as2 = sa[2], bs1 = sb[1], bs2 = sb[2];
    bool rg = tp.node(a).requires_grad || tp.node(b).requires_grad;
    Tensor<T> out = tp.make({B, M, N}, rg);
    const T* av = tp.cval(a).data();
    const T* bv = tp.cval(b).data();
    T* ov = tp.val(out).data();
    for (int i = 0; i < B; ++i) {
        const T* A = av + size_t(i) * as1 * as2;
        const T* Bm = bv + size_t(i) * bs1 * bs2;
        T* C = ov + size_t(i) * M * N;
        if (trans_a) detail::gemm_tn(M, N, K, A, Bm, C);
        else if (trans_b) detail::gemm_nt(M, N, K, A, Bm, C);
        else detail::gemm_nn(M, N, K, A, Bm, C);
    }
    tp.record(out.id, [a, b, out, trans_a, trans_b, B, M, N, K](Tape<T>& t) {
        const Shape& sa2 = t.shape(a);
        const Shape& sb2 = t.shape(b);
        const T* g = t.grad_acc(out.id).data();
        const T* av2 = t.cval(a).data();
        const T* bv2 = t.cval(b).data();
        for (int i = 0; i < B; ++i) {
            const T* G = g + size_t(i) * M * N;
            const T* A = av2 + size_t(i) * sa2[1] * sa2[2];
            const T* Bm = bv2 + size_t(i) * sb2[1] * sb2[2];
            if (t.node(a).requires_grad) {
                T* GA = t.grad_acc(a.id).data() + size_t(i) * sa2[1] * sa2[2];
                if (!trans_a && !trans_b) detail::gemm_nt(M, K, N, G, Bm, GA);       // dA = G * B^T
                else if (trans_a) detail::gemm_nt(K, M, N, Bm, G, GA);               // dA = B * G^T
                else detail::gemm_nn(M, K, N, G, Bm, GA);                            // dA = G * B
            }
            if (t.node(b).requires_grad) {
                T* GB = t.grad_acc(b.id).data() + size_t(i) * sb2[1] * sb2[2];
                if (!trans_a && !trans_b) detail::gemm_tn(K, N, M, A, G, GB);        // dB = A^T * G
                else if (trans_a) detail::gemm_nn(K, N, M, A, G, GB);                // dB = A * G
                else detail::gemm_tn(N, K, M, G, A, GB);                             // dB = G^T * A
            }
        }
    });
    return out;
}

// Softmax over the last dimension.
template <typename T>
Tensor<T> softmax_last(Tensor<T> a) {
    Tape<T>& tp = *a.tape;
    const Shape& s = tp.shape(a);
    int L = s.back();
    int64_t rows = numel(s) / L;
    Tensor<T> out = tp.make(s, tp.node(a).requires_grad);
    const auto& av = tp.cval(a);
    auto& ov = tp.val(out);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (rows * L > (1 << 15))
#endif
    for (int64_t r = 0; r < rows; ++r) {
        const T* in = &av[size_t(r) * L];
        T* o = &ov[size_t(r) * L];
        T mx = in[0];
        for (int i = 1; i < L; ++i) mx = std::max(mx, in[i]);
        T sum = 0;
        for (int i = 0; i < L; ++i) {
            o[i] = detail::exp_approx(in[i] - mx);
            sum += o[i];
        }
        T inv = T(1) / sum;
        for (int i = 0; i < L; ++i) o[i] *= inv;
    }
    tp.record(out.id, [a, out, rows, L](Tape<T>& t) {
        const auto& g = t.grad_acc(out.id);
        const auto& y = t.cval(out);
        auto& ga = t.grad_acc(a.id);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (rows * L > (1 << 15))
#endif
        for (int64_t r = 0; r < rows; ++r) {
            const T* gr = &g[size_t(r) * L];
            const T* yr = &y[size_t(r) * L];
            T* gar = &ga[size_t(r) * L];
            T dot = 0;
            for (int i = 0; i < L; ++i) dot += gr[i] * yr[i];
            for (int i = 0; i < L; ++i) gar[i] += (gr[i] - dot) * yr[i];
        }
    });
    return out;
}

// --- convolution -------------------------------------------------------------

namespace detail {

// Copy one channel plane into a buffer with a 1-pixel circular halo.
template <typename T>
void pad_circular(const T* src, int H, int W, T* dst) {
    int Wp = W + 2;
    for (int y = 0; y < H; ++y) {
        T* row = dst + size_t(y + 1) * Wp;
        const T* s = src + size_t(y) * W;
        row[0] = s[W - 1];
        std::copy_n(s, size_t(W), row + 1);
        row[W + 1] = s[0];
    }
    std::copy_n(dst + size_t(H) * Wp, size_t(Wp), dst);              // top halo = last row
    std::copy_n(dst + size_t(1) * Wp, size_t(Wp), dst + size_t(H + 1) * Wp);  // bottom halo = first row
}

// Fold a padded gradient buffer back onto the core with circular wrap.
template <typename T>
void unpad_circular_accum(const T* pad, int H, int W, T* dst) {
    int Wp = W + 2;
    auto wrap_y = [H](int y) { return (y - 1 + H) % H; };
    auto wrap_x = [W](int x) { return (x - 1 + W) % W; };
    for (int y = 0; y < H + 2; ++y) {
        const T* row = pad + size_t(y) * Wp;
        T* drow = dst + size_t(wrap_y(y)) * W;
        for (int x = 0; x < W + 2; ++x) drow[wrap_x(x)] += row[x];
    }
}

// Gather all 3x3 circular neighborhoods of a [Cin,H,W] sample into a
// [Cin*9, Ho*Wo] matrix.
template <typename T>
void im2col_circular(const T* x, int Cin, int H, int W, int stride, T* pad_scratch, T* col) {
    int Wp = W + 2;
    int Ho = H / stride, Wo = W / stride;
    size_t opix = size_t(Ho) * Wo;
    for (int ci = 0; ci < Cin; ++ci) {
        pad_circular(x + size_t(ci) * H * W, H, W, pad_scratch);
        for (int dy = 0; dy < 3; ++dy)
            for (int dx = 0; dx < 3; ++dx) {
                T* dst = col + (size_t(ci) * 9 + size_t(dy * 3 + dx)) * opix;
                for (int y = 0; y < Ho; ++y) {
                    const T* src = pad_scratch + size_t(y * stride + dy) * Wp + dx;
                    T* d = dst + size_t(y) * Wo;
                    if (stride == 1) {
                        std::copy_n(src, size_t(Wo), d);
                    } else {
                        for (int xo = 0; xo < Wo; ++xo) d[xo] = src[2 * xo];
                    }
                }
            }
    }
}

// Scatter a [Cin*9, Ho*Wo] gradient matrix back onto the sample, adding
// wrapped halo contributions.
template <typename T>
void col2im_circular(const T* col, int Cin, int H, int W, int stride, T* pad_scratch, T* gx) {
    int Wp = W + 2;
    int Ho = H / stride, Wo = W / stride;
    size_t opix = size_t(Ho) * Wo;
    for (int ci = 0; ci < Cin; ++ci) {
        std::fill(pad_scratch, pad_scratch + size_t(H + 2) * Wp, T(0));
        for (int dy = 0; dy < 3; ++dy)
            for (int dx = 0; dx < 3; ++dx) {
                const T* src = col + (size_t(ci) * 9 + size_t(dy * 3 + dx)) * opix;
                for (int y = 0; y < Ho; ++y) {
                    T* dst = pad_scratch + size_t(y * stride + dy) * Wp + dx;
                    const T* s = src + size_t(y) * Wo;
                    if (stride == 1) {
                        for (int xo = 0; xo < Wo; ++xo) dst[xo] += s[xo];
                    } else {
                        for (int xo = 0; xo < Wo; ++xo) dst[2 * xo] += s[xo];
                    }
                }
            }
        unpad_circular_accum(pad_scratch, H, W, gx + size_t(ci) * H * W);
    }
}

}  // namespace detail

// 2-D convolution with circular (toroidal) padding, kernel 1x1 or 3x3,
// stride 1 or 2. Weight layout [Cout,Cin,k,k], bias [Cout]. The 3x3 path
// lowers each sample to an im2col matrix so the arithmetic runs as one
// [Cout, Cin*9] x [Cin*9, Ho*Wo] product with long contiguous rows.
template <typename T>
Tensor<T> conv2d(Tensor<T> x, Tensor<T> w, Tensor<T> bias, int stride = 1) {
    Tape<T>& tp = *x.tape;
    const Shape& sx = tp.shape(x);
    const Shape& sw = tp.shape(w);
    if (sx.size() != 4 || sw.size() != 4 || sw[1] != sx[1]) shape_fail("conv2d", sx, sw);
    int k = sw[2];
    if ((k != 1 && k != 3) || sw[3] != k) throw NumericError("conv2d: kernel must be 1x1 or 3x3");
    if (stride != 1 && stride != 2) throw NumericError("conv2d: stride must be 1 or 2");
    if (k == 1 && stride != 1) throw NumericError("conv2d: pointwise kernels support stride 1 only");
    int N = sx[0], Cin = sx[1], H = sx[2], W = sx[3];
    int Cout = sw[0];
    if (tp.shape(bias) != Shape{Cout}) shape_fail("conv2d bias", tp.shape(bias), sw);
    if (stride == 2 && (H % 2 || W % 2)) throw NumericError("conv2d: stride 2 needs even extent");
    int Ho = H / stride, Wo = W / stride;
    bool rg = tp.node(x).requires_grad || tp.node(w).requires_grad || tp.node(bias).requires_grad;
    Tensor<T> out = tp.make({N, Cout, Ho, Wo}, rg);

    const T* xv = tp.cval(x).data();
    const T* wv = tp.cval(w).data();
    const T* bv = tp.cval(bias).data();
    T* ov = tp.val(out).data();
    size_t plane = size_t(H) * W, oplane = size_t(Ho) * Wo;
    const int K = Cin * 9;

    if (k == 1) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (int64_t(N) * Cout * Cin * plane > (1 << 16))
#endif
        for (int n = 0; n < N; ++n) {
            T* o = ov + size_t(n) * Cout * oplane;
            for (int co = 0; co < Cout; ++co)
                for (size_t i = 0; i < oplane; ++i) o[size_t(co) * oplane + i] = bv[co];
            detail::gemm_nn(Cout, int(oplane), Cin, wv, xv + size_t(n) * Cin * plane, o, false);
        }
    } else {
#ifdef _OPENMP
#pragma omp parallel
#endif
        {
            std::vector<T> pad(size_t(H + 2) * (W + 2));
            std::vector<T> col(size_t(K) * oplane);
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
            for (int n = 0; n < N; ++n) {
                detail::im2col_circular(xv + size_t(n) * Cin * plane, Cin, H, W, stride, pad.data(), col.data());
                T* o = ov + size_t(n) * Cout * oplane;
                for (int co = 0; co < Cout; ++co)
                    for (size_t i = 0; i < oplane; ++i) o[size_t(co) * oplane + i] = bv[co];
                detail::gemm_nn(Cout, int(oplane), K, wv, col.data(), o, false);
            }
        }
    }

    tp.record(out.id, [x, w, bias, out, stride, k, N, Cin, Cout, H, W, Ho, Wo, K](Tape<T>& t) {
        const T* g = t.grad_acc(out.id).data();
        const T* xv2 = t.cval(x).data();
        const T* wv2 = t.cval(w).data();
        size_t plane = size_t(H) * W, oplane = size_t(Ho) * Wo;

        if (t.node(bias).requires_grad) {
            auto& gb = t.grad_acc(bias.id);
            for (int n = 0; n < N; ++n)
                for (int co = 0; co < Cout; ++co) {
                    const T* gs = g + (size_t(n) * Cout + co) * oplane;
                    T acc = 0;
                    for (size_t i = 0; i < oplane; ++i) acc += gs[i];
                    gb[size_t(co)] += acc;
                }
        }

        if (k == 1) {
            if (t.node(w).requires_grad) {
                auto& gw = t.grad_acc(w.id);
                // per-sample contributions accumulated in index order
                for (int n = 0; n < N; ++n)
                    detail::gemm_nt(Cout, Cin, int(oplane), g + size_t(n) * Cout * oplane,
                                    xv2 + size_t(n) * Cin * plane, gw.data());
            }
            if (t.node(x).requires_grad) {
                auto& gx = t.grad_acc(x.id);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (int64_t(N) * Cin * Cout * plane > (1 << 16))
#endif
                for (int n = 0; n < N; ++n)
                    detail::gemm_tn(Cin, int(oplane), Cout, wv2, g + size_t(n) * Cout * oplane,
                                    gx.data() + size_t(n) * Cin * plane, false);
            }
            return;
        }

        if (t.node(w).requires_grad) {
            // per-sample weight gradients land in their own slabs so the
            // final reduction is in sample order for any thread count
            std::vector<T> slabs(size_t(N) * Cout * K, T(0));
#ifdef _OPENMP
#pragma omp parallel
#endif
            {
                std::vector<T> pad(size_t(H + 2) * (W + 2));
                std::vector<T> col(size_t(K) * oplane);
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
                for (int n = 0; n < N; ++n) {
                    detail::im2col_circular(xv2 + size_t(n) * Cin * plane, Cin, H, W, stride, pad.data(), col.data());
                    detail::gemm_nt(Cout, K, int(oplane), g + size_t(n) * Cout * oplane, col.data(),
                                    slabs.data() + size_t(n) * Cout * K, false);
                }
            }
            auto& gw = t.grad_acc(w.id);
            for (int n = 0; n < N; ++n) {
                const T* slab = slabs.data() + size_t(n) * Cout * K;
                for (size_t i = 0; i < size_t(Cout) * K; ++i) gw[i] += slab[i];
            }
        }

        if (t.node(x).requires_grad) {
            auto& gx = t.grad_acc(x.id);
#ifdef _OPENMP
#pragma omp parallel
#endif
            {
                std::vector<T> pad(size_t(H + 2) * (W + 2));
                std::vector<T> dcol(size_t(K) * oplane);
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
                for (int n = 0; n < N; ++n) {
                    std::fill(dcol.begin(), dcol.end(), T(0));
                    detail::gemm_tn(K, int(oplane), Cout, wv2, g + size_t(n) * Cout * oplane, dcol.data(), false);
                    detail::col2im_circular(dcol.data(), Cin, H, W, stride, pad.data(),
                                            gx.data() + size_t(n) * Cin * plane);
                }
            }
        }
    });
    return out;
}

// Nearest-neighbor 2x upsampling of [N,C,H,W].
template <typename T>
Tensor<T> upsample_nearest2x(Tensor<T> x) {
    Tape<T>& tp = *x.tape;
    const Shape& s = tp.shape(x);
    if (s.size() != 4) throw NumericError("upsample_nearest2x: expected NCHW");
    int N = s[0], C = s[1], H = s[2], W = s[3];
    Tensor<T> out = tp.make({N, C, 2 * H, 2 * W}, tp.node(x).requires_grad);
    const auto& xv = tp.cval(x);
    auto& ov = tp.val(out);
    for (int nc = 0; nc < N * C; ++nc) {
        const T* in = &xv[size_t(nc) * H * W];
        T* o = &ov[size_t(nc) * 4 * H * W];
        for (int y = 0; y < 2 * H; ++y) {
            const T* irow = in + size_t(y / 2) * W;
            T* orow = o + size_t(y) * 2 * W;
            for (int x2 = 0; x2 < 2 * W; ++x2) orow[x2] = irow[x2 / 2];
        }
    }
    tp.record(out.id, [x, out, N, C, H, W](Tape<T>& t) {
        const auto& g = t.grad_acc(out.id);
        auto& gx = t.grad_acc(x.id);
        for (int nc = 0; nc < N * C; ++nc) {
            const T* gs = &g[size_t(nc) * 4 * H * W];
            T* gd = &gx[size_t(nc) * H * W];
            for (int y = 0; y < 2 * H; ++y) {
                const T* grow = gs + size_t(y) * 2 * W;
                T* drow = gd + size_t(y / 2) * W;
                for (int x2 = 0; x2 < 2 * W; ++x2) drow[x2 / 2] += grow[x2];
            }
        }
    });
    return out;
}

// GroupNorm over [N,C,H,W] with per-channel affine parameters.
template <typename T>
Tensor<T> group_norm(Tensor<T> x, Tensor<T> gamma, Tensor<T> beta, int groups = 8) {
    Tape<T>& tp = *x.tape;
    const Shape& s = tp.shape(x);
    if (s.size() != 4) throw NumericError("group_norm: expected NCHW");
    int N = s[0], C = s[1], H = s[2], W = s[3];
    if (C % groups != 0) throw NumericError("group_norm: channels not divisible by groups");
    if (tp.shape(gamma) != Shape{C} || tp.shape(beta) != Shape{C}) shape_fail("group_norm affine", tp.shape(gamma), s);
    const T eps = T(1e-5);
    int cg = C / groups;
    size_t plane = size_t(H) * W;
    size_t gsize = size_t(cg) * plane;
    bool rg = tp.node(x).requires_grad || tp.node(gamma).requires_grad || tp.node(beta).requires_grad;
    Tensor<T> out = tp.make(s, rg);
    // keep per-(n,group) statistics for the backward pass
    auto mean = std::make_shared<std::vector<T>>(size_t(N) * groups);
    auto rstd = std::make_shared<std::vector<T>>(size_t(N) * groups);
    const auto& xv = tp.cval(x);
    const auto& gv = tp.cval(gamma);
    const auto& bv = tp.cval(beta);
    auto& ov = tp.val(out);
    for (int n = 0; n < N; ++n)
        for (int gr = 0; gr < groups; ++gr) {
            const T* in = &xv[(size_t(n) * C + size_t(gr) * cg) * plane];
            T m = 0;
            for (size_t i = 0; i < gsize; ++i) m += in[i];
            m /= T(gsize);
            T var = 0;
            for (size_t i = 0; i < gsize; ++i) {
                T d = in[i] - m;
                var += d * d;
            }
            var /= T(gsize);
            T rs = T(1) / std::sqrt(var + eps);
            (*mean)[size_t(n) * groups + gr] = m;
            (*rstd)[size_t(n) * groups + gr] = rs;
            T* o = &ov[(size_t(n) * C + size_t(gr) * cg) * plane];
            for (int c = 0; c < cg; ++c) {
                T ga = gv[size_t(gr) * cg + c];
                T be = bv[size_t(gr) * cg + c];
                const T* ic = in + size_t(c) * plane;
                T* oc = o + size_t(c) * plane;
                for (size_t i = 0; i < plane; ++i) oc[i] = (ic[i] - m) * rs * ga + be;
            }
        }
    tp.record(out.id, [x, gamma, beta, out, mean, rstd, N, C, groups, cg, plane, gsize](Tape<T>& t) {
        const auto& g = t.grad_acc(out.id);
        const auto& xv2 = t.cval(x);
        const auto& gv2 = t.cval(gamma);
        for (int n = 0; n < N; ++n)
            for (int gr = 0; gr < groups; ++gr) {
                T m = (*mean)[size_t(n) * groups + gr];
                T rs = (*rstd)[size_t(n) * groups + gr];
                const T* in = &xv2[(size_t(n) * C + size_t(gr) * cg) * plane];
                const T* gs = &g[(size_t(n) * C + size_t(gr) * cg) * plane];
                if (t.node(gamma).requires_grad || t.node(beta).requires_grad) {
                    for (int c = 0; c < cg; ++c) {
                        const T* ic = in + size_t(c) * plane;
                        const T* gc = gs + size_t(c) * plane;
                        T dg = 0, db = 0;
                        for (size_t i = 0; i < plane; ++i) {
                            dg += gc[i] * (ic[i] - m) * rs;
                            db += gc[i];
                        }
                        if (t.node(gamma).requires_grad) t.grad_acc(gamma.id)[size_t(gr) * cg + c] += dg;
                        if (t.node(beta).requires_grad) t.grad_acc(beta.id)[size_t(gr) * cg + c] += db;
                    }
                }
                if (t.node(x).requires_grad) {
                    // dx = rs * (gdy - mean(gdy) - yhat * mean(gdy*yhat))
                    T sum_gdy = 0, sum_gdy_y = 0;
                    for (int c = 0; c < cg; ++c) {
                        T ga = gv2[size_t(gr) * cg + c];
                        const T* ic = in + size_t(c) * plane;
                        const T* gc = gs + size_t(c) * plane;
                        for (size_t i = 0; i < plane; ++i) {
                            T gdy = gc[i] * ga;
                            sum_gdy += gdy;
                            sum_gdy_y += gdy * (ic[i] - m) * rs;
                        }
                    }
                    T inv = T(1) / T(gsize);
                    T* gx = &t.grad_acc(x.id)[(size_t(n) * C + size_t(gr) * cg) * plane];
                    for (int c = 0; c < cg; ++c) {
                        T ga = gv2[size_t(gr) * cg + c];
                        const T* ic = in + size_t(c) * plane;
                        const T* gc = gs + size_t(c) * plane;
                        T* gxc = gx + size_t(c) * plane;
                        for (size_t i = 0; i < plane; ++i) {
                            T yhat = (ic[i] - m) * rs;
                            gxc[i] += rs * (gc[i] * ga - inv * sum_gdy - yhat * inv * sum_gdy_y);
                        }
                    }
                }
            }
    });
    return out;
}

// Single-head self-attention over flattened spatial positions of [N,C,H,W].
// q,k,v and the output projection are 1x1 convolutions supplied by the
// caller; no positional encoding, so the block commutes with toroidal
// shifts of the grid.
template <typename T>
Tensor<T> self_attention(Tensor<T> x, Tensor<T> wq, Tensor<T> bq, Tensor<T> wk, Tensor<T> bk,
                         Tensor<T> wv, Tensor<T> bv, Tensor<T> wproj, Tensor<T> bproj) {
    Tape<T>& tp = *x.tape;
    const Shape& s = tp.shape(x);
    if (s.size() != 4) throw NumericError("self_attention: expected NCHW");
    int N = s[0], C = s[1], H = s[2], W = s[3];
    int L = H * W;
    Tensor<T> q = conv2d(x, wq, bq);
    Tensor<T> k = conv2d(x, wk, bk);
    Tensor<T> v = conv2d(x, wv, bv);
    Tensor<T> q2 = reshape(q, {N, C, L});
    Tensor<T> k2 = reshape(k, {N, C, L});
    Tensor<T> v2 = reshape(v, {N, C, L});
    Tensor<T> scores = scale(bmm(q2, k2, /*trans_a=*/true, /*trans_b=*/false), 1.0 / std::sqrt(double(C)));
    Tensor<T> att = softmax_last(scores);           // [N,L,L], rows index queries
    Tensor<T> mixed = bmm(v2, att, false, /*trans_b=*/true);  // [N,C,L]
    Tensor<T> y = reshape(mixed, {N, C, H, W});
    return conv2d(y, wproj, bproj);
}

// ---------------------------------------------------------------------------
// parameters and Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Named learnable parameters with Adam moments, living outside any tape.
template <typename T>
class ParamStore {
  public:
    struct Param {
        std::string name;
        Shape shape;
        std::vector<T> value;
        std::vector<T> m, v;
    };

    int add(const std::string& name, const Shape& shape, std::vector<T> init) {
        if (int64_t(init.size()) != numel(shape)) throw NumericError("param init size mismatch: " + name);
        Param p;
        p.name = name;
        p.shape = shape;
        p.value = std::move(init);
        p.m.assign(p.value.size(), T(0));
        p.v.assign(p.value.size(), T(0));
        params_.push_back(std::move(p));
        return int(params_.size()) - 1;
    }

    int count() const { return int(params_.size()); }
    Param& param(int i) { return params_[size_t(i)]; }
    const Param& param(int i) const { return params_[size_t(i)]; }
    int64_t step() const { return step_; }
    void set_step(int64_t s) { step_ = s; }

    int64_t total_values() const {
        int64_t n = 0;
        for (const Param& p : params_) n += int64_t(p.value.size());
        return n;
    }

    // Bind every parameter as a gradient-tracked leaf on the given tape.
    std::vector<Tensor<T>> bind_all(Tape<T>& tape) const {
        std::vector<Tensor<T>> out;
        out.reserve(params_.size());
        for (const Param& p : params_) out.push_back(tape.leaf(p.shape, p.value, true));
        return out;
    }

    // One bias-corrected Adam step from gradients aligned with the store.
    void adam_step(const std::vector<std::vector<T>>& grads, const AdamConfig& cfg) {
        if (grads.size() != params_.size()) throw NumericError("adam_step: gradient count mismatch");
        ++step_;
        double bc1 = 1.0 - std::pow(cfg.beta1, double(step_));
        double bc2 = 1.0 - std::pow(cfg.beta2, double(step_));
        for (size_t i = 0; i < params_.size(); ++i) {
            Param& p = params_[i];
            const std::vector<T>& g = grads[i];
            if (g.size() != p.value.size()) throw NumericError("adam_step: gradient size mismatch: " + p.name);
            for (size_t j = 0; j < p.value.size(); ++j) {
                double gj = double(g[j]);
                double mj = cfg.beta1 * double(p.m[j]) + (1.0 - cfg.beta1) * gj;
                double vj = cfg.beta2 * double(p.v[j]) + (1.0 - cfg.beta2) * gj * gj;
                p.m[j] = T(mj);
                p.v[j] = T(vj);
                double mhat = mj / bc1;
                double vhat = vj / bc2;
                p.value[j] = T(double(p.value[j]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
            }
        }
    }

  private:
    std::vector<Param> params_;
    int64_t step_ = 0;
};

// --- initializers -------------------------------------------------------------

template <typename T>
std::vector<T> init_normal(int64_t n, double stddev, SeededRng& rng) {
    std::vector<T> v(static_cast<size_t>(n));
    for (auto& x : v) x = T(stddev * rng.next_gaussian());
    return v;
}

template <typename T>
std::vector<T> init_zeros(int64_t n) {
    return std::vector<T>(size_t(n), T(0));
}

template <typename T>
std::vector<T> init_ones(int64_t n) {
    return std::vector<T>(size_t(n), T(1));
}

}  // namespace dpts::ag
