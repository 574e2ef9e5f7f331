#pragma once

#include <cstddef>

// Arithmetic kernels behind the layer inner loops. Scalar reference
// implementations plus AVX2+FMA variants selected once at startup
// (LIDS_SIMD=scalar|avx2 overrides the cpuid pick).

namespace lids::kernels {

enum class Backend { scalar, avx2 };

Backend active_backend();
const char* backend_name();

// y = sum_i a[i] * b[i]
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);

// y[i] += alpha * x[i]
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);

// out[r] = bias[r] + W[r,:] . x   (W row-major [rows x cols]; bias may be null)
void matvec(const float* w, const float* x, const float* bias, float* out,
            std::size_t rows, std::size_t cols);
void matvec(const double* w, const double* x, const double* bias, double* out,
            std::size_t rows, std::size_t cols);

// out[c] += sum_r W[r,c] * g[r]   (transpose matvec, accumulating)
void matvec_t_acc(const float* w, const float* g, float* out,
                  std::size_t rows, std::size_t cols);
void matvec_t_acc(const double* w, const double* g, double* out,
                  std::size_t rows, std::size_t cols);

// W[r,c] += g[r] * x[c]   (rank-1 accumulation for weight gradients)
void ger_acc(const float* g, const float* x, float* w,
             std::size_t rows, std::size_t cols);
void ger_acc(const double* g, const double* x, double* w,
             std::size_t rows, std::size_t cols);

namespace scalar {
template <class T>
T dot(const T* a, const T* b, std::size_t n) {
    T s = 0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}
template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
template <class T>
void matvec(const T* w, const T* x, const T* bias, T* out,
            std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r)
        out[r] = (bias ? bias[r] : T(0)) + dot(w + r * cols, x, cols);
}
template <class T>
void matvec_t_acc(const T* w, const T* g, T* out,
                  std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) axpy(g[r], w + r * cols, out, cols);
}
template <class T>
void ger_acc(const T* g, const T* x, T* w, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) axpy(g[r], x, w + r * cols, cols);
}
}  // namespace scalar

}  // namespace lids::kernels
