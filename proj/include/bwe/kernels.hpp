#pragma once

#include <cmath>
#include <cstdint>

// Data-parallel inner loops behind the tensor ops. Every kernel exists as a
// scalar reference implementation (kern::scalar, templated on float/double)
// and, on x86-64, as an AVX2+FMA variant for the float hot path
// (kern::avx2, compiled in its own TU with -mavx2 -mfma). The float table is
// selected once at runtime from CPU features; tests compare both tables on
// randomized shapes.

namespace bwe::kern {

// Function table for the single-precision hot path.
struct KernelTable {
    // y[t] += sum_j w[j] * x[t + j]   for t in [0, n)
    void (*acc_corr)(float* y, const float* x, const float* w, int k, int n);
    // y[t]  = bias + sum_j w[j] * x[t + j]
    void (*corr_bias)(float* y, const float* x, const float* w, int k, int n,
                      float bias);
    float (*dot)(const float* a, const float* b, int n);
    float (*sum)(const float* a, int n);
    // y[i] += a * x[i]
    void (*axpy)(float* y, const float* x, float a, int n);
    // y[i] += a[i] * b[i]
    void (*mul_acc)(float* y, const float* a, const float* b, int n);
    // y[i] = a[i] * b[i]
    void (*mul)(float* y, const float* a, const float* b, int n);
    // y[i] = a * x[i] + b
    void (*affine)(float* y, const float* x, float a, float b, int n);
    // y[i] += c1 * u[i] + c2 * v[i] + c3
    void (*acc_affine2)(float* y, const float* u, const float* v, float c1,
                        float c2, float c3, int n);
    // y[i] = max(x[i], 0)
    void (*relu)(float* y, const float* x, int n);
    // dx[i] += dy[i] * (y[i] > 0)
    void (*relu_grad_acc)(float* dx, const float* dy, const float* y, int n);
    // in-place Adam update; bc1/bc2 are the bias-correction factors 1-beta^t
    void (*adam)(float* p, const float* g, float* m, float* v, int n, float lr,
                 float beta1, float beta2, float eps, float bc1, float bc2);
    const char* name;
};

namespace scalar {

template <class T>
void acc_corr(T* y, const T* x, const T* w, int k, int n) {
    for (int t = 0; t < n; ++t) {
        T acc = y[t];
        for (int j = 0; j < k; ++j) acc += w[j] * x[t + j];
        y[t] = acc;
    }
}

template <class T>
void corr_bias(T* y, const T* x, const T* w, int k, int n, T bias) {
    for (int t = 0; t < n; ++t) {
        T acc = bias;
        for (int j = 0; j < k; ++j) acc += w[j] * x[t + j];
        y[t] = acc;
    }
}

template <class T>
T dot(const T* a, const T* b, int n) {
    T acc = T(0);
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <class T>
T sum(const T* a, int n) {
    T acc = T(0);
    for (int i = 0; i < n; ++i) acc += a[i];
    return acc;
}

template <class T>
void axpy(T* y, const T* x, T a, int n) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
void mul_acc(T* y, const T* a, const T* b, int n) {
    for (int i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

template <class T>
void mul(T* y, const T* a, const T* b, int n) {
    for (int i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <class T>
void affine(T* y, const T* x, T a, T b, int n) {
    for (int i = 0; i < n; ++i) y[i] = a * x[i] + b;
}

template <class T>
void acc_affine2(T* y, const T* u, const T* v, T c1, T c2, T c3, int n) {
    for (int i = 0; i < n; ++i) y[i] += c1 * u[i] + c2 * v[i] + c3;
}

template <class T>
void relu(T* y, const T* x, int n) {
    for (int i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_grad_acc(T* dx, const T* dy, const T* y, int n) {
    for (int i = 0; i < n; ++i)
        if (y[i] > T(0)) dx[i] += dy[i];
}

template <class T>
void adam(T* p, const T* g, T* m, T* v, int n, T lr, T beta1, T beta2, T eps,
          T bc1, T bc2) {
    for (int i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
        const T m_hat = m[i] / bc1;
        const T v_hat = v[i] / bc2;
        p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

}  // namespace scalar

// Runtime-selected table for float. avx2_table() is null when the CPU or
// build does not support AVX2+FMA.
const KernelTable& active();
const KernelTable& scalar_table();
const KernelTable* avx2_table();

// Force the scalar table (tests, --no-simd). Must be called before the hot
// loops start; not thread-safe against concurrent active() use.
void force_scalar(bool on);

// Dispatch shims: float goes through the runtime table, double always takes
// the scalar reference path (used by the double-precision gradient checks).
inline void acc_corr(float* y, const float* x, const float* w, int k, int n) { active().acc_corr(y, x, w, k, n); }
inline void acc_corr(double* y, const double* x, const double* w, int k, int n) { scalar::acc_corr(y, x, w, k, n); }
inline void corr_bias(float* y, const float* x, const float* w, int k, int n, float bias) { active().corr_bias(y, x, w, k, n, bias); }
inline void corr_bias(double* y, const double* x, const double* w, int k, int n, double bias) { scalar::corr_bias(y, x, w, k, n, bias); }
inline float dot(const float* a, const float* b, int n) { return active().dot(a, b, n); }
inline double dot(const double* a, const double* b, int n) { return scalar::dot(a, b, n); }
inline float sum(const float* a, int n) { return active().sum(a, n); }
inline double sum(const double* a, int n) { return scalar::sum(a, n); }
inline void axpy(float* y, const float* x, float a, int n) { active().axpy(y, x, a, n); }
inline void axpy(double* y, const double* x, double a, int n) { scalar::axpy(y, x, a, n); }
inline void mul_acc(float* y, const float* a, const float* b, int n) { active().mul_acc(y, a, b, n); }
inline void mul_acc(double* y, const double* a, const double* b, int n) { scalar::mul_acc(y, a, b, n); }
inline void mul(float* y, const float* a, const float* b, int n) { active().mul(y, a, b, n); }
inline void mul(double* y, const double* a, const double* b, int n) { scalar::mul(y, a, b, n); }
inline void affine(float* y, const float* x, float a, float b, int n) { active().affine(y, x, a, b, n); }
inline void affine(double* y, const double* x, double a, double b, int n) { scalar::affine(y, x, a, b, n); }
inline void acc_affine2(float* y, const float* u, const float* v, float c1, float c2, float c3, int n) { active().acc_affine2(y, u, v, c1, c2, c3, n); }
inline void acc_affine2(double* y, const double* u, const double* v, double c1, double c2, double c3, int n) { scalar::acc_affine2(y, u, v, c1, c2, c3, n); }
inline void relu(float* y, const float* x, int n) { active().relu(y, x, n); }
inline void relu(double* y, const double* x, int n) { scalar::relu(y, x, n); }
inline void relu_grad_acc(float* dx, const float* dy, const float* y, int n) { active().relu_grad_acc(dx, dy, y, n); }
inline void relu_grad_acc(double* dx, const double* dy, const double* y, int n) { scalar::relu_grad_acc(dx, dy, y, n); }
inline void adam(float* p, const float* g, float* m, float* v, int n, float lr, float beta1, float beta2, float eps, float bc1, float bc2) { active().adam(p, g, m, v, n, lr, beta1, beta2, eps, bc1, bc2); }
inline void adam(double* p, const double* g, double* m, double* v, int n, double lr, double beta1, double beta2, double eps, double bc1, double bc2) { scalar::adam(p, g, m, v, n, lr, beta1, beta2, eps, bc1, bc2); }

}  // namespace bwe::kern
