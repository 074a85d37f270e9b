#include "bwe/kernels.hpp"

#include <atomic>

namespace bwe::kern {

namespace {

const KernelTable g_scalar = {
    &scalar::acc_corr<float>,      &scalar::corr_bias<float>,
    &scalar::dot<float>,           &scalar::sum<float>,
    &scalar::axpy<float>,          &scalar::mul_acc<float>,
    &scalar::mul<float>,           &scalar::affine<float>,
    &scalar::acc_affine2<float>,   &scalar::relu<float>,
    &scalar::relu_grad_acc<float>, &scalar::adam<float>,
    "scalar",
};

std::atomic<bool> g_force_scalar{false};

}  // namespace

const KernelTable& scalar_table() { return g_scalar; }

const KernelTable& active() {
    if (g_force_scalar.load(std::memory_order_relaxed)) return g_scalar;
    if (const KernelTable* t = avx2_table()) return *t;
    return g_scalar;
}

void force_scalar(bool on) { g_force_scalar.store(on, std::memory_order_relaxed); }

}  // namespace bwe::kern
