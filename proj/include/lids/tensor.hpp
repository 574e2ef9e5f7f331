#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace lids {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense N-d array, flat row-major storage. Float for training/inference,
// double for gradient checking (all layer math is templated on T).
template <class T>
struct TensorT {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    TensorT() = default;
    explicit TensorT(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(count(shape), T(0));
    }
    TensorT(std::vector<std::size_t> s, std::vector<T> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (count(shape) != data.size())
            throw ShapeError("tensor: shape/data size mismatch");
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto e : s) n *= e;
        return s.empty() ? 0 : n;
    }

    std::size_t size() const { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    std::size_t rank() const { return shape.size(); }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    // [a,b] indexing for rank-2, [a,b,c] for rank-3
    T& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    const T& at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    T& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    const T& at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <class U>
    TensorT<U> cast() const {
        TensorT<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i)
            out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

inline std::string shape_str(const std::vector<std::size_t>& s) {
    std::string r = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) r += ",";
        r += std::to_string(s[i]);
    }
    return r + "]";
}

inline void require_shape(const std::vector<std::size_t>& got,
                          const std::vector<std::size_t>& want,
                          const char* what) {
    if (got != want)
        throw ShapeError(std::string(what) + ": expected " + shape_str(want) +
                         " got " + shape_str(got));
}

// Deterministic uniform in [lo, hi) from raw mt19937 output.
// std::uniform_real_distribution is implementation-defined; this is not.
template <class T>
T uniform(std::mt19937& rng, T lo, T hi) {
    const double u = rng() * (1.0 / 4294967296.0);
    return static_cast<T>(lo + (hi - lo) * static_cast<T>(u));
}

// Glorot-uniform fill for a weight matrix with the given fan-in/fan-out.
template <class T>
void glorot_fill(TensorT<T>& w, std::size_t fan_in, std::size_t fan_out,
                 std::mt19937& rng) {
    const T limit = std::sqrt(T(6) / T(fan_in + fan_out));
    for (auto& v : w.data) v = uniform<T>(rng, -limit, limit);
}

}  // namespace lids
