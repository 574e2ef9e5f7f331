#include "lids/kernels.hpp"

#include <cstdlib>
#include <cstring>

#if defined(__x86_64__) || defined(_M_X64)
#define LIDS_X86 1
#include <immintrin.h>
#else
#define LIDS_X86 0
#endif

namespace lids::kernels {

#if LIDS_X86

__attribute__((target("avx2,fma")))
static float dot_avx2(const float* a, const float* b, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
    __m128 lo = _mm256_castps256_ps128(acc);
    __m128 hi = _mm256_extractf128_ps(acc, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    float s = _mm_cvtss_f32(lo);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

__attribute__((target("avx2,fma")))
static double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    __m128d lo = _mm256_castpd256_pd128(acc);
    __m128d hi = _mm256_extractf128_pd(acc, 1);
    lo = _mm_add_pd(lo, hi);
    double s = _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

__attribute__((target("avx2,fma")))
static void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
    const __m256 va = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i),
                                                _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

__attribute__((target("avx2,fma")))
static void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                                _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

#endif  // LIDS_X86

static Backend pick_backend() {
#if LIDS_X86
    if (const char* env = std::getenv("LIDS_SIMD")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0) return Backend::avx2;
    }
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        return Backend::avx2;
#endif
    return Backend::scalar;
}

Backend active_backend() {
    static const Backend b = pick_backend();
    return b;
}

const char* backend_name() {
    return active_backend() == Backend::avx2 ? "avx2" : "scalar";
}

template <class T>
static T dot_impl(const T* a, const T* b, std::size_t n) {
#if LIDS_X86
    if (active_backend() == Backend::avx2) return dot_avx2(a, b, n);
#endif
    return scalar::dot(a, b, n);
}

template <class T>
static void axpy_impl(T alpha, const T* x, T* y, std::size_t n) {
#if LIDS_X86
    if (active_backend() == Backend::avx2) { axpy_avx2(alpha, x, y, n); return; }
#endif
    scalar::axpy(alpha, x, y, n);
}

float dot(const float* a, const float* b, std::size_t n) { return dot_impl(a, b, n); }
double dot(const double* a, const double* b, std::size_t n) { return dot_impl(a, b, n); }

void axpy(float alpha, const float* x, float* y, std::size_t n) { axpy_impl(alpha, x, y, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { axpy_impl(alpha, x, y, n); }

template <class T>
static void matvec_impl(const T* w, const T* x, const T* bias, T* out,
                        std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r)
        out[r] = (bias ? bias[r] : T(0)) + dot_impl(w + r * cols, x, cols);
}

template <class T>
static void matvec_t_acc_impl(const T* w, const T* g, T* out,
                              std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r)
        axpy_impl(g[r], w + r * cols, out, cols);
}

template <class T>
static void ger_acc_impl(const T* g, const T* x, T* w,
                         std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r)
        axpy_impl(g[r], x, w + r * cols, cols);
}

void matvec(const float* w, const float* x, const float* bias, float* out,
            std::size_t rows, std::size_t cols) { matvec_impl(w, x, bias, out, rows, cols); }
void matvec(const double* w, const double* x, const double* bias, double* out,
            std::size_t rows, std::size_t cols) { matvec_impl(w, x, bias, out, rows, cols); }

void matvec_t_acc(const float* w, const float* g, float* out,
                  std::size_t rows, std::size_t cols) { matvec_t_acc_impl(w, g, out, rows, cols); }
void matvec_t_acc(const double* w, const double* g, double* out,
                  std::size_t rows, std::size_t cols) { matvec_t_acc_impl(w, g, out, rows, cols); }

void ger_acc(const float* g, const float* x, float* w,
             std::size_t rows, std::size_t cols) { ger_acc_impl(g, x, w, rows, cols); }
void ger_acc(const double* g, const double* x, double* w,
             std::size_t rows, std::size_t cols) { ger_acc_impl(g, x, w, rows, cols); }

}  // namespace lids::kernels
