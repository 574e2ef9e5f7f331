#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "lids/tensor.hpp"

namespace lids {

// Bias-corrected Adam over a flat list of parameter tensors. The moment
// buffers are created lazily on the first step and mirror parameter shapes.
template <class T>
struct AdamStateT {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t t = 0;
    std::vector<TensorT<T>> m, v;
};

using AdamState = AdamStateT<float>;

template <class T>
void adam_step(std::vector<TensorT<T>*> params, const std::vector<const TensorT<T>*>& grads,
               AdamStateT<T>& state) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adam_step: params/grads count mismatch");
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i] = TensorT<T>(params[i]->shape);
            state.v[i] = TensorT<T>(params[i]->shape);
        }
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        TensorT<T>& p = *params[i];
        const TensorT<T>& g = *grads[i];
        if (!p.same_shape(g) || !p.same_shape(state.m[i]))
            throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(i));
        TensorT<T>& m = state.m[i];
        TensorT<T>& v = state.v[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = static_cast<double>(g[j]);
            const double mj = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
            const double vj = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            p[j] -= static_cast<T>(state.lr * (mj / bc1) / (std::sqrt(vj / bc2) + state.eps));
        }
    }
}

}  // namespace lids
