#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "lids/kernels.hpp"
#include "lids/tensor.hpp"

// The four layer families: 1-D convolution, max pooling, dense, LSTM/BiLSTM.
// Forward passes cache what the analytic backward needs; callers own caches.

namespace lids {

enum class Padding { same, valid };

// ---------------------------------------------------------------- conv1d

template <class T>
struct Conv1DParamsT {
    TensorT<T> weights;  // [F, K, C]
    TensorT<T> bias;     // [F]
    Padding padding = Padding::same;
    std::size_t stride = 1;

    std::size_t filters() const { return weights.dim(0); }
    std::size_t kernel() const { return weights.dim(1); }
    std::size_t channels() const { return weights.dim(2); }
    std::size_t param_count() const { return weights.size() + bias.size(); }
};

template <class T>
struct Conv1DCache {
    TensorT<T> input;  // [B, L, C]
};

template <class T>
struct Conv1DGrads {
    TensorT<T> weights;  // [F, K, C]
    TensorT<T> bias;     // [F]
};

template <class T>
std::size_t conv1d_out_len(std::size_t L, const Conv1DParamsT<T>& p) {
    if (p.padding == Padding::same) return (L + p.stride - 1) / p.stride;
    if (L < p.kernel()) throw ShapeError("conv1d: input shorter than kernel with valid padding");
    return (L - p.kernel()) / p.stride + 1;
}

template <class T>
TensorT<T> conv1d_forward(const TensorT<T>& input, const Conv1DParamsT<T>& p,
                          Conv1DCache<T>* cache = nullptr) {
    if (input.rank() != 3)
        throw ShapeError("conv1d: input must be rank 3 [B,L,C], got " + shape_str(input.shape));
    const std::size_t B = input.dim(0), L = input.dim(1), C = input.dim(2);
    const std::size_t F = p.filters(), K = p.kernel();
    if (C != p.channels())
        throw ShapeError("conv1d: channel axis mismatch, input C=" + std::to_string(C) +
                         " vs params C=" + std::to_string(p.channels()));
    const std::size_t Lo = conv1d_out_len(L, p);
    const std::ptrdiff_t pad = p.padding == Padding::same ? (std::ptrdiff_t)((K - 1) / 2) : 0;

    TensorT<T> out({B, Lo, F});
    for (std::size_t b = 0; b < B; ++b) {
        const T* in_b = input.ptr() + b * L * C;
        for (std::size_t t = 0; t < Lo; ++t) {
            const std::ptrdiff_t start = (std::ptrdiff_t)(t * p.stride) - pad;
            // clip the kernel window to [0, L); the in-range rows are contiguous
            const std::size_t k0 = start < 0 ? (std::size_t)(-start) : 0;
            const std::size_t k1 = (std::size_t)start + K > L ? L - start : K;
            const std::size_t len = (k1 > k0 ? k1 - k0 : 0) * C;
            const T* win = in_b + (start + (std::ptrdiff_t)k0) * (std::ptrdiff_t)C;
            T* out_t = out.ptr() + (b * Lo + t) * F;
            for (std::size_t f = 0; f < F; ++f) {
                const T* wf = p.weights.ptr() + f * K * C + k0 * C;
                out_t[f] = p.bias[f] + (len ? kernels::dot(wf, win, len) : T(0));
            }
        }
    }
    if (cache) cache->input = input;
    return out;
}

template <class T>
std::pair<TensorT<T>, Conv1DGrads<T>> conv1d_backward(const TensorT<T>& grad_out,
                                                      const Conv1DParamsT<T>& p,
                                                      const Conv1DCache<T>& cache) {
    if (cache.input.size() == 0) throw ShapeError("conv1d_backward: cache missing forward input");
    const TensorT<T>& input = cache.input;
    const std::size_t B = input.dim(0), L = input.dim(1), C = input.dim(2);
    const std::size_t F = p.filters(), K = p.kernel();
    const std::size_t Lo = conv1d_out_len(L, p);
    require_shape(grad_out.shape, {B, Lo, F}, "conv1d_backward: grad_out");
    const std::ptrdiff_t pad = p.padding == Padding::same ? (std::ptrdiff_t)((K - 1) / 2) : 0;

    TensorT<T> grad_input({B, L, C});
    Conv1DGrads<T> grads{TensorT<T>({F, K, C}), TensorT<T>({F})};
    for (std::size_t b = 0; b < B; ++b) {
        const T* in_b = input.ptr() + b * L * C;
        T* gin_b = grad_input.ptr() + b * L * C;
        for (std::size_t t = 0; t < Lo; ++t) {
            const std::ptrdiff_t start = (std::ptrdiff_t)(t * p.stride) - pad;
            const T* go = grad_out.ptr() + (b * Lo + t) * F;
            for (std::size_t f = 0; f < F; ++f) {
                const T g = go[f];
                if (g == T(0)) continue;
                grads.bias[f] += g;
                for (std::size_t k = 0; k < K; ++k) {
                    const std::ptrdiff_t i = start + (std::ptrdiff_t)k;
                    if (i < 0 || i >= (std::ptrdiff_t)L) continue;
                    const T* wfk = p.weights.ptr() + (f * K + k) * C;
                    T* gwfk = grads.weights.ptr() + (f * K + k) * C;
                    kernels::axpy(g, wfk, gin_b + i * (std::ptrdiff_t)C, C);
                    kernels::axpy(g, in_b + i * (std::ptrdiff_t)C, gwfk, C);
                }
            }
        }
    }
    return {std::move(grad_input), std::move(grads)};
}

// -------------------------------------------------------------- maxpool1d

template <class T>
struct MaxPoolCache {
    std::vector<std::size_t> argmax;  // flat index into input per output element
    std::vector<std::size_t> in_shape;
};

template <class T>
TensorT<T> maxpool1d_forward(const TensorT<T>& input, std::size_t pool,
                             MaxPoolCache<T>* cache = nullptr) {
    if (input.rank() != 3)
        throw ShapeError("maxpool1d: input must be rank 3 [B,L,C]");
    const std::size_t B = input.dim(0), L = input.dim(1), C = input.dim(2);
    if (pool < 1 || pool > L)
        throw ShapeError("maxpool1d: pool width " + std::to_string(pool) +
                         " out of range for L=" + std::to_string(L));
    const std::size_t Lo = L / pool;  // incomplete trailing window dropped
    TensorT<T> out({B, Lo, C});
    std::vector<std::size_t> arg(B * Lo * C);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < Lo; ++t)
            for (std::size_t c = 0; c < C; ++c) {
                std::size_t best = (b * L + t * pool) * C + c;
                T bv = input[best];
                for (std::size_t k = 1; k < pool; ++k) {
                    const std::size_t idx = (b * L + t * pool + k) * C + c;
                    if (input[idx] > bv) { bv = input[idx]; best = idx; }  // ties keep earliest
                }
                out.at3(b, t, c) = bv;
                arg[(b * Lo + t) * C + c] = best;
            }
    if (cache) {
        cache->argmax = std::move(arg);
        cache->in_shape = input.shape;
    }
    return out;
}

template <class T>
TensorT<T> maxpool1d_backward(const TensorT<T>& grad_out, const MaxPoolCache<T>& cache) {
    if (cache.in_shape.empty()) throw ShapeError("maxpool1d_backward: cache missing");
    TensorT<T> grad_input(cache.in_shape);
    if (grad_out.size() != cache.argmax.size())
        throw ShapeError("maxpool1d_backward: grad_out size mismatch");
    for (std::size_t i = 0; i < grad_out.size(); ++i)
        grad_input[cache.argmax[i]] += grad_out[i];
    return grad_input;
}

// ------------------------------------------------------------------ dense

template <class T>
struct DenseParamsT {
    TensorT<T> weights;  // [out, in]
    TensorT<T> bias;     // [out]

    std::size_t out_features() const { return weights.dim(0); }
    std::size_t in_features() const { return weights.dim(1); }
    std::size_t param_count() const { return weights.size() + bias.size(); }
};

template <class T>
struct DenseCache {
    TensorT<T> input;  // [B, in]
};

template <class T>
struct DenseGrads {
    TensorT<T> weights, bias;
};

template <class T>
TensorT<T> dense_forward(const TensorT<T>& input, const DenseParamsT<T>& p,
                         DenseCache<T>* cache = nullptr) {
    if (input.rank() != 2 || input.dim(1) != p.in_features())
        throw ShapeError("dense: input " + shape_str(input.shape) + " vs in_features=" +
                         std::to_string(p.in_features()));
    const std::size_t B = input.dim(0), O = p.out_features(), I = p.in_features();
    TensorT<T> out({B, O});
    for (std::size_t b = 0; b < B; ++b)
        kernels::matvec(p.weights.ptr(), input.ptr() + b * I, p.bias.ptr(),
                        out.ptr() + b * O, O, I);
    if (cache) cache->input = input;
    return out;
}

template <class T>
std::pair<TensorT<T>, DenseGrads<T>> dense_backward(const TensorT<T>& grad_out,
                                                    const DenseParamsT<T>& p,
                                                    const DenseCache<T>& cache) {
    if (cache.input.size() == 0) throw ShapeError("dense_backward: cache missing");
    const std::size_t B = cache.input.dim(0), O = p.out_features(), I = p.in_features();
    require_shape(grad_out.shape, {B, O}, "dense_backward: grad_out");
    TensorT<T> grad_input({B, I});
    DenseGrads<T> grads{TensorT<T>({O, I}), TensorT<T>({O})};
    for (std::size_t b = 0; b < B; ++b) {
        const T* g = grad_out.ptr() + b * O;
        kernels::matvec_t_acc(p.weights.ptr(), g, grad_input.ptr() + b * I, O, I);
        kernels::ger_acc(g, cache.input.ptr() + b * I, grads.weights.ptr(), O, I);
        for (std::size_t o = 0; o < O; ++o) grads.bias[o] += g[o];
    }
    return {std::move(grad_input), std::move(grads)};
}

// ------------------------------------------------------------ activations

enum class Activation { relu, sigmoid, tanh, softmax };

template <class T>
T sigmoid_fn(T x) { return T(1) / (T(1) + std::exp(-x)); }

template <class T>
TensorT<T> activation_forward(const TensorT<T>& input, Activation kind) {
    TensorT<T> out = input;
    switch (kind) {
        case Activation::relu:
            for (auto& v : out.data) v = v > T(0) ? v : T(0);
            break;
        case Activation::sigmoid:
            for (auto& v : out.data) v = sigmoid_fn(v);
            break;
        case Activation::tanh:
            for (auto& v : out.data) v = std::tanh(v);
            break;
        case Activation::softmax: {
            // over the last axis, max-subtracted
            const std::size_t C = out.shape.back();
            const std::size_t rows = out.size() / C;
            for (std::size_t r = 0; r < rows; ++r) {
                T* row = out.ptr() + r * C;
                T mx = row[0];
                for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
                T sum = 0;
                for (std::size_t c = 0; c < C; ++c) { row[c] = std::exp(row[c] - mx); sum += row[c]; }
                for (std::size_t c = 0; c < C; ++c) row[c] /= sum;
            }
            break;
        }
    }
    return out;
}

// relu uses the forward input; sigmoid/tanh/softmax use the forward output.
template <class T>
TensorT<T> activation_backward(const TensorT<T>& grad_out, const TensorT<T>& input,
                               const TensorT<T>& output, Activation kind) {
    TensorT<T> g = grad_out;
    switch (kind) {
        case Activation::relu:
            for (std::size_t i = 0; i < g.size(); ++i)
                if (input[i] <= T(0)) g[i] = T(0);
            break;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] *= output[i] * (T(1) - output[i]);
            break;
        case Activation::tanh:
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] *= T(1) - output[i] * output[i];
            break;
        case Activation::softmax: {
            const std::size_t C = g.shape.back();
            const std::size_t rows = g.size() / C;
            for (std::size_t r = 0; r < rows; ++r) {
                const T* y = output.ptr() + r * C;
                T* gr = g.ptr() + r * C;
                const T dotgy = kernels::dot(gr, y, C);
                for (std::size_t c = 0; c < C; ++c) gr[c] = y[c] * (gr[c] - dotgy);
            }
            break;
        }
    }
    return g;
}

// -------------------------------------------------------------- LSTM cell

// Gate order is fixed (input, forget, cell, output); serialization and the
// Adam parameter walk both rely on it.
enum Gate : std::size_t { gate_i = 0, gate_f = 1, gate_g = 2, gate_o = 3 };

template <class T>
struct LstmParamsT {
    std::array<TensorT<T>, 4> w;  // each [H, D]
    std::array<TensorT<T>, 4> u;  // each [H, H]
    std::array<TensorT<T>, 4> b;  // each [H]
    std::size_t hidden = 0, input = 0;

    std::size_t param_count() const {
        return 4 * (hidden * input + hidden * hidden + hidden);
    }
};

template <class T>
LstmParamsT<T> make_lstm_params(std::size_t hidden, std::size_t input) {
    LstmParamsT<T> p;
    p.hidden = hidden;
    p.input = input;
    for (std::size_t g = 0; g < 4; ++g) {
        p.w[g] = TensorT<T>({hidden, input});
        p.u[g] = TensorT<T>({hidden, hidden});
        p.b[g] = TensorT<T>({hidden});
    }
    return p;
}

template <class T>
struct LstmStepCache {
    TensorT<T> x, h_prev, c_prev;        // [B,D], [B,H], [B,H]
    std::array<TensorT<T>, 4> act;       // gate activations i,f,g,o  [B,H]
    TensorT<T> c, tanh_c;                // [B,H]
};

template <class T>
struct LstmGrads {
    std::array<TensorT<T>, 4> w, u, b;
};

template <class T>
LstmGrads<T> make_lstm_grads(const LstmParamsT<T>& p) {
    LstmGrads<T> g;
    for (std::size_t k = 0; k < 4; ++k) {
        g.w[k] = TensorT<T>({p.hidden, p.input});
        g.u[k] = TensorT<T>({p.hidden, p.hidden});
        g.b[k] = TensorT<T>({p.hidden});
    }
    return g;
}

template <class T>
std::pair<TensorT<T>, TensorT<T>> lstm_cell_step(const TensorT<T>& x,
                                                 const TensorT<T>& h_prev,
                                                 const TensorT<T>& c_prev,
                                                 const LstmParamsT<T>& p,
                                                 LstmStepCache<T>* cache = nullptr) {
    const std::size_t H = p.hidden, D = p.input;
    if (x.rank() != 2 || x.dim(1) != D)
        throw ShapeError("lstm_cell: x " + shape_str(x.shape) + " vs D=" + std::to_string(D));
    const std::size_t B = x.dim(0);
    require_shape(h_prev.shape, {B, H}, "lstm_cell: h_prev");
    require_shape(c_prev.shape, {B, H}, "lstm_cell: c_prev");

    std::array<TensorT<T>, 4> act;
    for (auto& a : act) a = TensorT<T>({B, H});
    std::vector<T> tmp(H);
    for (std::size_t b = 0; b < B; ++b) {
        const T* xb = x.ptr() + b * D;
        const T* hb = h_prev.ptr() + b * H;
        for (std::size_t g = 0; g < 4; ++g) {
            T* a = act[g].ptr() + b * H;
            kernels::matvec(p.w[g].ptr(), xb, p.b[g].ptr(), a, H, D);
            kernels::matvec(p.u[g].ptr(), hb, nullptr, tmp.data(), H, H);
            for (std::size_t j = 0; j < H; ++j) a[j] += tmp[j];
        }
    }
    for (auto& v : act[gate_i].data) v = sigmoid_fn(v);
    for (auto& v : act[gate_f].data) v = sigmoid_fn(v);
    for (auto& v : act[gate_g].data) v = std::tanh(v);
    for (auto& v : act[gate_o].data) v = sigmoid_fn(v);

    TensorT<T> c({B, H}), tanh_c({B, H}), h({B, H});
    for (std::size_t i = 0; i < B * H; ++i) {
        c[i] = act[gate_f][i] * c_prev[i] + act[gate_i][i] * act[gate_g][i];
        tanh_c[i] = std::tanh(c[i]);
        h[i] = act[gate_o][i] * tanh_c[i];
    }
    if (cache) {
        cache->x = x;
        cache->h_prev = h_prev;
        cache->c_prev = c_prev;
        cache->act = act;
        cache->c = c;
        cache->tanh_c = tanh_c;
    }
    return {std::move(h), std::move(c)};
}

// One step of BPTT. dh/dc are gradients flowing into h_t/c_t; returns
// gradients wrt x, h_prev, c_prev and accumulates parameter gradients.
template <class T>
void lstm_cell_backward(const TensorT<T>& dh, const TensorT<T>& dc_in,
                        const LstmParamsT<T>& p, const LstmStepCache<T>& cache,
                        TensorT<T>& dx, TensorT<T>& dh_prev, TensorT<T>& dc_prev,
                        LstmGrads<T>& grads) {
    const std::size_t H = p.hidden, D = p.input;
    const std::size_t B = cache.x.dim(0);
    std::array<TensorT<T>, 4> da;  // pre-activation gradients
    for (auto& a : da) a = TensorT<T>({B, H});
    dx = TensorT<T>({B, D});
    dh_prev = TensorT<T>({B, H});
    dc_prev = TensorT<T>({B, H});

    for (std::size_t i = 0; i < B * H; ++i) {
        const T o = cache.act[gate_o][i], ig = cache.act[gate_i][i];
        const T f = cache.act[gate_f][i], g = cache.act[gate_g][i];
        const T tc = cache.tanh_c[i];
        const T dcd = dc_in[i] + dh[i] * o * (T(1) - tc * tc);
        da[gate_o][i] = dh[i] * tc * o * (T(1) - o);
        da[gate_i][i] = dcd * g * ig * (T(1) - ig);
        da[gate_f][i] = dcd * cache.c_prev[i] * f * (T(1) - f);
        da[gate_g][i] = dcd * ig * (T(1) - g * g);
        dc_prev[i] = dcd * f;
    }
    for (std::size_t b = 0; b < B; ++b) {
        const T* xb = cache.x.ptr() + b * D;
        const T* hb = cache.h_prev.ptr() + b * H;
        for (std::size_t g = 0; g < 4; ++g) {
            const T* a = da[g].ptr() + b * H;
            kernels::ger_acc(a, xb, grads.w[g].ptr(), H, D);
            kernels::ger_acc(a, hb, grads.u[g].ptr(), H, H);
            for (std::size_t j = 0; j < H; ++j) grads.b[g][j] += a[j];
            kernels::matvec_t_acc(p.w[g].ptr(), a, dx.ptr() + b * D, H, D);
            kernels::matvec_t_acc(p.u[g].ptr(), a, dh_prev.ptr() + b * H, H, H);
        }
    }
}

// ----------------------------------------------------------------- BiLSTM

template <class T>
struct BiLstmParamsT {
    LstmParamsT<T> forward, backward;
    std::size_t param_count() const {
        return forward.param_count() + backward.param_count();
    }
};

template <class T>
struct LstmSeqCache {
    std::vector<LstmStepCache<T>> steps;  // in processing order
};

template <class T>
struct BiLstmCache {
    LstmSeqCache<T> fwd, bwd;
    std::size_t B = 0, Tn = 0;
};

// Runs one direction over the sequence; `reverse` consumes t = T-1 .. 0.
// Output hs[b,t,:] is the hidden state produced at sequence position t.
template <class T>
TensorT<T> lstm_forward_seq(const TensorT<T>& seq, const LstmParamsT<T>& p,
                            bool reverse, LstmSeqCache<T>* cache = nullptr) {
    const std::size_t B = seq.dim(0), Tn = seq.dim(1), D = seq.dim(2);
    if (Tn == 0) throw ShapeError("lstm: empty sequence");
    const std::size_t H = p.hidden;
    TensorT<T> hs({B, Tn, H});
    TensorT<T> h({B, H}), c({B, H});
    if (cache) cache->steps.resize(Tn);
    for (std::size_t step = 0; step < Tn; ++step) {
        const std::size_t t = reverse ? Tn - 1 - step : step;
        TensorT<T> x({B, D});
        for (std::size_t b = 0; b < B; ++b)
            std::copy(seq.ptr() + (b * Tn + t) * D, seq.ptr() + (b * Tn + t + 1) * D,
                      x.ptr() + b * D);
        auto [hn, cn] = lstm_cell_step(x, h, c, p, cache ? &cache->steps[step] : nullptr);
        h = std::move(hn);
        c = std::move(cn);
        for (std::size_t b = 0; b < B; ++b)
            std::copy(h.ptr() + b * H, h.ptr() + (b + 1) * H, hs.ptr() + (b * Tn + t) * H);
    }
    return hs;
}

// grad_hs[b,t,:] is the gradient flowing into this direction's h_t.
template <class T>
TensorT<T> lstm_backward_seq(const TensorT<T>& grad_hs, const LstmParamsT<T>& p,
                             const LstmSeqCache<T>& cache, bool reverse,
                             LstmGrads<T>& grads) {
    const std::size_t Tn = cache.steps.size();
    if (Tn == 0) throw ShapeError("lstm_backward: cache missing");
    const std::size_t B = cache.steps[0].x.dim(0);
    const std::size_t H = p.hidden, D = p.input;
    TensorT<T> grad_seq({B, Tn, D});
    TensorT<T> dh({B, H}), dc({B, H});
    for (std::size_t step = Tn; step-- > 0;) {
        const std::size_t t = reverse ? Tn - 1 - step : step;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t j = 0; j < H; ++j)
                dh[b * H + j] += grad_hs.ptr()[(b * Tn + t) * H + j];
        TensorT<T> dx, dh_prev, dc_prev;
        lstm_cell_backward(dh, dc, p, cache.steps[step], dx, dh_prev, dc_prev, grads);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t j = 0; j < D; ++j)
                grad_seq.ptr()[(b * Tn + t) * D + j] += dx[b * D + j];
        dh = std::move(dh_prev);
        dc = std::move(dc_prev);
    }
    return grad_seq;
}

template <class T>
struct BiLstmOut {
    TensorT<T> outputs;  // [B, T, 2H]: [h_t_fwd ; h_t_bwd]
    TensorT<T> final;    // [B, 2H]:    [h_last_fwd ; h_first_bwd]
};

template <class T>
BiLstmOut<T> bilstm_forward(const TensorT<T>& seq, const BiLstmParamsT<T>& p,
                            BiLstmCache<T>* cache = nullptr) {
    if (seq.rank() != 3) throw ShapeError("bilstm: seq must be [B,T,D]");
    if (seq.dim(1) == 0) throw ShapeError("bilstm: empty sequence");
    const std::size_t B = seq.dim(0), Tn = seq.dim(1), H = p.forward.hidden;
    TensorT<T> hf = lstm_forward_seq(seq, p.forward, false, cache ? &cache->fwd : nullptr);
    TensorT<T> hb = lstm_forward_seq(seq, p.backward, true, cache ? &cache->bwd : nullptr);
    BiLstmOut<T> out;
    out.outputs = TensorT<T>({B, Tn, 2 * H});
    out.final = TensorT<T>({B, 2 * H});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < Tn; ++t) {
            T* dst = out.outputs.ptr() + (b * Tn + t) * 2 * H;
            std::copy(hf.ptr() + (b * Tn + t) * H, hf.ptr() + (b * Tn + t + 1) * H, dst);
            std::copy(hb.ptr() + (b * Tn + t) * H, hb.ptr() + (b * Tn + t + 1) * H, dst + H);
        }
        T* fin = out.final.ptr() + b * 2 * H;
        std::copy(hf.ptr() + (b * Tn + Tn - 1) * H, hf.ptr() + (b * Tn + Tn) * H, fin);
        std::copy(hb.ptr() + (b * Tn + 0) * H, hb.ptr() + (b * Tn + 1) * H, fin + H);
    }
    if (cache) { cache->B = B; cache->Tn = Tn; }
    return out;
}

template <class T>
struct BiLstmGrads {
    LstmGrads<T> forward, backward;
};

// Either gradient input may be empty (size 0) when unused.
template <class T>
TensorT<T> bilstm_backward(const TensorT<T>& grad_outputs, const TensorT<T>& grad_final,
                           const BiLstmParamsT<T>& p, const BiLstmCache<T>& cache,
                           BiLstmGrads<T>& grads) {
    const std::size_t B = cache.B, Tn = cache.Tn, H = p.forward.hidden;
    if (Tn == 0) throw ShapeError("bilstm_backward: cache missing");
    TensorT<T> gf({B, Tn, H}), gb({B, Tn, H});
    if (grad_outputs.size()) {
        require_shape(grad_outputs.shape, {B, Tn, 2 * H}, "bilstm_backward: grad_outputs");
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < Tn; ++t) {
                const T* src = grad_outputs.ptr() + (b * Tn + t) * 2 * H;
                std::copy(src, src + H, gf.ptr() + (b * Tn + t) * H);
                std::copy(src + H, src + 2 * H, gb.ptr() + (b * Tn + t) * H);
            }
    }
    if (grad_final.size()) {
        require_shape(grad_final.shape, {B, 2 * H}, "bilstm_backward: grad_final");
        for (std::size_t b = 0; b < B; ++b) {
            const T* src = grad_final.ptr() + b * 2 * H;
            for (std::size_t j = 0; j < H; ++j) {
                gf.ptr()[(b * Tn + Tn - 1) * H + j] += src[j];
                gb.ptr()[(b * Tn + 0) * H + j] += src[H + j];
            }
        }
    }
    TensorT<T> ds_f = lstm_backward_seq(gf, p.forward, cache.fwd, false, grads.forward);
    TensorT<T> ds_b = lstm_backward_seq(gb, p.backward, cache.bwd, true, grads.backward);
    for (std::size_t i = 0; i < ds_f.size(); ++i) ds_f[i] += ds_b[i];
    return ds_f;
}

}  // namespace lids
