// AVX2+FMA variants of the float kernels. This TU is compiled with
// -mavx2 -mfma; nothing here runs unless the CPU reports both features.

#include "bwe/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

namespace bwe::kern {
namespace avx2 {

namespace {

// Horizontal sum with a fixed reduction order.
inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    __m128 s = _mm_add_ps(lo, hi);
    s = _mm_add_ps(s, _mm_movehl_ps(s, s));
    s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
    return _mm_cvtss_f32(s);
}

}  // namespace

// The conv workhorse: y[t] += sum_j w[j] * x[t+j]. Register-tiles four
// vectors of outputs so the j loop stays load+FMA bound.
void acc_corr(float* y, const float* x, const float* w, int k, int n) {
    int t = 0;
    for (; t + 32 <= n; t += 32) {
        __m256 a0 = _mm256_loadu_ps(y + t);
        __m256 a1 = _mm256_loadu_ps(y + t + 8);
        __m256 a2 = _mm256_loadu_ps(y + t + 16);
        __m256 a3 = _mm256_loadu_ps(y + t + 24);
        for (int j = 0; j < k; ++j) {
            const __m256 wv = _mm256_set1_ps(w[j]);
            const float* xp = x + t + j;
            a0 = _mm256_fmadd_ps(wv, _mm256_loadu_ps(xp), a0);
            a1 = _mm256_fmadd_ps(wv, _mm256_loadu_ps(xp + 8), a1);
            a2 = _mm256_fmadd_ps(wv, _mm256_loadu_ps(xp + 16), a2);
            a3 = _mm256_fmadd_ps(wv, _mm256_loadu_ps(xp + 24), a3);
        }
        _mm256_storeu_ps(y + t, a0);
        _mm256_storeu_ps(y + t + 8, a1);
        _mm256_storeu_ps(y + t + 16, a2);
        _mm256_storeu_ps(y + t + 24, a3);
    }
    for (; t + 8 <= n; t += 8) {
        __m256 a = _mm256_loadu_ps(y + t);
        for (int j = 0; j < k; ++j)
            a = _mm256_fmadd_ps(_mm256_set1_ps(w[j]), _mm256_loadu_ps(x + t + j), a);
        _mm256_storeu_ps(y + t, a);
    }
    for (; t < n; ++t) {
        float acc = y[t];
        for (int j = 0; j < k; ++j) acc += w[j] * x[t + j];
        y[t] = acc;
    }
}

void corr_bias(float* y, const float* x, const float* w, int k, int n, float bias) {
    const __m256 bv = _mm256_set1_ps(bias);
    int t = 0;
    for (; t + 32 <= n; t += 32) {
        __m256 a0 = bv, a1 = bv, a2 = bv, a3 = bv;
        for (int j = 0; j < k; ++j) {
            const __m256 wv = _mm256_set1_ps(w[j]);
            const float* xp = x + t + j;
            a0 = _mm256_fmadd_ps(wv, _mm256_loadu_ps(xp), a0);
            a1 = _mm256_fmadd_ps(wv, _mm256_loadu_ps(xp + 8), a1);
            a2 = _mm256_fmadd_ps(wv, _mm256_loadu_ps(xp + 16), a2);
            a3 = _mm256_fmadd_ps(wv, _mm256_loadu_ps(xp + 24), a3);
        }
        _mm256_storeu_ps(y + t, a0);
        _mm256_storeu_ps(y + t + 8, a1);
        _mm256_storeu_ps(y + t + 16, a2);
        _mm256_storeu_ps(y + t + 24, a3);
    }
    for (; t + 8 <= n; t += 8) {
        __m256 a = bv;
        for (int j = 0; j < k; ++j)
            a = _mm256_fmadd_ps(_mm256_set1_ps(w[j]), _mm256_loadu_ps(x + t + j), a);
        _mm256_storeu_ps(y + t, a);
    }
    for (; t < n; ++t) {
        float acc = bias;
        for (int j = 0; j < k; ++j) acc += w[j] * x[t + j];
        y[t] = acc;
    }
}

float dot(const float* a, const float* b, int n) {
    __m256 s0 = _mm256_setzero_ps();
    __m256 s1 = _mm256_setzero_ps();
    __m256 s2 = _mm256_setzero_ps();
    __m256 s3 = _mm256_setzero_ps();
    int i = 0;
    for (; i + 32 <= n; i += 32) {
        s0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), s0);
        s1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), s1);
        s2 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 16), _mm256_loadu_ps(b + i + 16), s2);
        s3 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 24), _mm256_loadu_ps(b + i + 24), s3);
    }
    for (; i + 8 <= n; i += 8)
        s0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), s0);
    float acc = hsum(_mm256_add_ps(_mm256_add_ps(s0, s1), _mm256_add_ps(s2, s3)));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

float sum(const float* a, int n) {
    __m256 s0 = _mm256_setzero_ps();
    __m256 s1 = _mm256_setzero_ps();
    int i = 0;
    for (; i + 16 <= n; i += 16) {
        s0 = _mm256_add_ps(s0, _mm256_loadu_ps(a + i));
        s1 = _mm256_add_ps(s1, _mm256_loadu_ps(a + i + 8));
    }
    for (; i + 8 <= n; i += 8) s0 = _mm256_add_ps(s0, _mm256_loadu_ps(a + i));
    float acc = hsum(_mm256_add_ps(s0, s1));
    for (; i < n; ++i) acc += a[i];
    return acc;
}

void axpy(float* y, const float* x, float a, int n) {
    const __m256 av = _mm256_set1_ps(a);
    int i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i),
                                                _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}

void mul_acc(float* y, const float* a, const float* b, int n) {
    int i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i,
                         _mm256_fmadd_ps(_mm256_loadu_ps(a + i),
                                         _mm256_loadu_ps(b + i),
                                         _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += a[i] * b[i];
}

void mul(float* y, const float* a, const float* b, int n) {
    int i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i),
                                              _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] * b[i];
}

void affine(float* y, const float* x, float a, float b, int n) {
    const __m256 av = _mm256_set1_ps(a);
    const __m256 bv = _mm256_set1_ps(b);
    int i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), bv));
    for (; i < n; ++i) y[i] = a * x[i] + b;
}

void acc_affine2(float* y, const float* u, const float* v, float c1, float c2,
                 float c3, int n) {
    const __m256 c1v = _mm256_set1_ps(c1);
    const __m256 c2v = _mm256_set1_ps(c2);
    const __m256 c3v = _mm256_set1_ps(c3);
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 acc = _mm256_add_ps(_mm256_loadu_ps(y + i), c3v);
        acc = _mm256_fmadd_ps(c1v, _mm256_loadu_ps(u + i), acc);
        acc = _mm256_fmadd_ps(c2v, _mm256_loadu_ps(v + i), acc);
        _mm256_storeu_ps(y + i, acc);
    }
    for (; i < n; ++i) y[i] += c1 * u[i] + c2 * v[i] + c3;
}

void relu(float* y, const float* x, int n) {
    const __m256 zero = _mm256_setzero_ps();
    int i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_grad_acc(float* dx, const float* dy, const float* y, int n) {
    const __m256 zero = _mm256_setzero_ps();
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(y + i), zero, _CMP_GT_OQ);
        const __m256 contrib = _mm256_and_ps(_mm256_loadu_ps(dy + i), mask);
        _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), contrib));
    }
    for (; i < n; ++i)
        if (y[i] > 0.0f) dx[i] += dy[i];
}

void adam(float* p, const float* g, float* m, float* v, int n, float lr,
          float beta1, float beta2, float eps, float bc1, float bc2) {
    const __m256 b1 = _mm256_set1_ps(beta1);
    const __m256 b2 = _mm256_set1_ps(beta2);
    const __m256 omb1 = _mm256_set1_ps(1.0f - beta1);
    const __m256 omb2 = _mm256_set1_ps(1.0f - beta2);
    const __m256 lrv = _mm256_set1_ps(lr);
    const __m256 epsv = _mm256_set1_ps(eps);
    const __m256 ibc1 = _mm256_set1_ps(1.0f / bc1);
    const __m256 ibc2 = _mm256_set1_ps(1.0f / bc2);
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 gv = _mm256_loadu_ps(g + i);
        __m256 mv = _mm256_loadu_ps(m + i);
        __m256 vv = _mm256_loadu_ps(v + i);
        mv = _mm256_fmadd_ps(omb1, gv, _mm256_mul_ps(b1, mv));
        vv = _mm256_fmadd_ps(omb2, _mm256_mul_ps(gv, gv), _mm256_mul_ps(b2, vv));
        _mm256_storeu_ps(m + i, mv);
        _mm256_storeu_ps(v + i, vv);
        const __m256 m_hat = _mm256_mul_ps(mv, ibc1);
        const __m256 v_hat = _mm256_mul_ps(vv, ibc2);
        const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(v_hat), epsv);
        const __m256 step = _mm256_div_ps(_mm256_mul_ps(lrv, m_hat), denom);
        _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), step));
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
        const float m_hat = m[i] / bc1;
        const float v_hat = v[i] / bc2;
        p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

}  // namespace avx2

namespace {

const KernelTable g_avx2 = {
    &avx2::acc_corr,      &avx2::corr_bias, &avx2::dot,
    &avx2::sum,           &avx2::axpy,      &avx2::mul_acc,
    &avx2::mul,           &avx2::affine,    &avx2::acc_affine2,
    &avx2::relu,          &avx2::relu_grad_acc, &avx2::adam,
    "avx2",
};

bool cpu_has_avx2_fma() {
#if defined(__GNUC__) || defined(__clang__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

}  // namespace

const KernelTable* avx2_table() {
    static const bool ok = cpu_has_avx2_fma();
    return ok ? &g_avx2 : nullptr;
}

}  // namespace bwe::kern

#else  // non-x86 fallback

namespace bwe::kern {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace bwe::kern

#endif
