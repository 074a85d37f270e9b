#include "bwe/autograd.hpp"

#include "bwe/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace bwe::ag {

namespace {

template <class T>
bool track(Tape<T>* tape, std::initializer_list<const TensorPtr<T>*> inputs) {
    if (!tape) return false;
    for (const auto* in : inputs)
        if ((*in)->requires_grad) return true;
    return false;
}

// ---------------------------------------------------------------------------
// conv1d
//
// Stride 1, same padding: out[t] = b + sum_j w[j] * xp[t + j] with xp the
// input padded by (K-1)/2 on each side.
//
// Stride 2: out[t] = b + sum_j w[j] * xp[2t + j] with xp padded left-heavy by
// max(0, K-2) in total. Splitting xp into even/odd parity rows turns every
// tap into a contiguous shift, so the same corr kernels apply:
//   out[t] = sum_{j even} w[j] * E[t + j/2] + sum_{j odd} w[j] * O[t + (j-1)/2]
// ---------------------------------------------------------------------------

struct ConvGeometry {
    int stride = 1;
    int pad_left = 0;
    int pad_right = 0;
    int out_len = 0;
};

ConvGeometry conv_geometry(int in_len, int k, int stride) {
    ConvGeometry g;
    g.stride = stride;
    if (stride == 1) {
        if (k % 2 == 0)
            throw std::invalid_argument("conv1d stride 1 requires odd kernel size");
        g.pad_left = g.pad_right = (k - 1) / 2;
        g.out_len = in_len;
    } else if (stride == 2) {
        const int total = std::max(0, k - 2);
        g.pad_left = (total + 1) / 2;
        g.pad_right = total / 2;
        g.out_len = (in_len + 1) / 2;
        // the last window may read one past in_len+pad_right when in_len is odd
        if (2 * (g.out_len - 1) + (k - 1) - g.pad_left >= in_len + g.pad_right)
            g.pad_right = 2 * (g.out_len - 1) + (k - 1) - g.pad_left - in_len + 1;
    } else {
        throw std::invalid_argument("conv1d supports stride 1 or 2 only");
    }
    return g;
}

// Copies row into dst with zero padding: dst has length in_len + pl + pr.
template <class T>
void pad_row(T* dst, const T* src, int in_len, int pl, int pr) {
    std::fill(dst, dst + pl, T(0));
    std::copy(src, src + in_len, dst + pl);
    std::fill(dst + pl + in_len, dst + pl + in_len + pr, T(0));
}

// Splits padded row xp (length P) into even/odd parity rows.
template <class T>
void split_parity(T* even, T* odd, const T* xp, int padded_len) {
    const int ne = (padded_len + 1) / 2;
    const int no = padded_len / 2;
    for (int u = 0; u < ne; ++u) even[u] = xp[2 * u];
    for (int u = 0; u < no; ++u) odd[u] = xp[2 * u + 1];
}

template <class T>
struct ConvScratch {
    std::vector<T> padded;   // in_ch rows of padded input (stride 1)
    std::vector<T> parity;   // in_ch * 2 parity rows (stride 2)
    std::vector<T> wtmp;     // repacked weights
    std::vector<T> gtmp;     // padded output-grad rows
};

template <class T>
ConvScratch<T>& conv_scratch() {
    thread_local ConvScratch<T> s;
    return s;
}

// Builds per-(batch) padded/parity views of input rows used by both the
// forward pass and the weight-gradient pass.
template <class T>
void conv_forward_into(TensorT<T>& out, const TensorT<T>& in, const TensorT<T>& w,
                       const TensorT<T>& b, const ConvGeometry& g, int k) {
    const int in_ch = in.channels;
    const int out_ch = out.channels;
    const int padded_len = in.length + g.pad_left + g.pad_right;
    auto& scratch = conv_scratch<T>();

    if (g.stride == 1) {
        scratch.padded.resize(static_cast<std::size_t>(in_ch) * padded_len);
        for (int bi = 0; bi < in.batch; ++bi) {
            for (int c = 0; c < in_ch; ++c)
                pad_row(scratch.padded.data() + static_cast<std::size_t>(c) * padded_len,
                        in.row(bi, c), in.length, g.pad_left, g.pad_right);
            for (int oc = 0; oc < out_ch; ++oc) {
                T* y = out.row(bi, oc);
                kern::corr_bias(y, scratch.padded.data(), w.row(oc, 0), k,
                                out.length, b.data[oc]);
                for (int ic = 1; ic < in_ch; ++ic)
                    kern::acc_corr(y,
                                   scratch.padded.data() + static_cast<std::size_t>(ic) * padded_len,
                                   w.row(oc, ic), k, out.length);
            }
        }
        return;
    }

    // stride 2: parity rows per input channel
    const int row_len = (padded_len + 1) / 2 + 1;  // +1 slack for odd row
    scratch.padded.resize(padded_len);
    scratch.parity.assign(static_cast<std::size_t>(in_ch) * 2 * row_len, T(0));
    const int ke = (k + 1) / 2;  // taps at even j
    const int ko = k / 2;        // taps at odd j
    scratch.wtmp.resize(static_cast<std::size_t>(k));
    for (int bi = 0; bi < in.batch; ++bi) {
        for (int c = 0; c < in_ch; ++c) {
            pad_row(scratch.padded.data(), in.row(bi, c), in.length, g.pad_left,
                    g.pad_right);
            split_parity(scratch.parity.data() + static_cast<std::size_t>(2 * c) * row_len,
                         scratch.parity.data() + static_cast<std::size_t>(2 * c + 1) * row_len,
                         scratch.padded.data(), padded_len);
        }
        for (int oc = 0; oc < out_ch; ++oc) {
            T* y = out.row(bi, oc);
            std::fill(y, y + out.length, b.data[oc]);
            for (int ic = 0; ic < in_ch; ++ic) {
                const T* wrow = w.row(oc, ic);
                T* we = scratch.wtmp.data();
                T* wo = scratch.wtmp.data() + ke;
                for (int j = 0; j < ke; ++j) we[j] = wrow[2 * j];
                for (int j = 0; j < ko; ++j) wo[j] = wrow[2 * j + 1];
                const T* erow = scratch.parity.data() + static_cast<std::size_t>(2 * ic) * row_len;
                const T* orow = scratch.parity.data() + static_cast<std::size_t>(2 * ic + 1) * row_len;
                if (ke > 0) kern::acc_corr(y, erow, we, ke, out.length);
                if (ko > 0) kern::acc_corr(y, orow, wo, ko, out.length);
            }
        }
    }
}

template <class T>
struct Conv1dNode final : OpNode<T> {
    TensorPtr<T> in, w, b, out;
    ConvGeometry g;
    int k;

    void backward() override {
        const int in_ch = in->channels;
        const int out_ch = out->channels;
        const bool need_dx = in->requires_grad;
        const bool need_dw = w->requires_grad;
        const bool need_db = b->requires_grad;
        if (need_dx) in->ensure_grad();
        if (need_dw) w->ensure_grad();
        if (need_db) b->ensure_grad();

        auto& scratch = conv_scratch<T>();
        const int padded_len = in->length + g.pad_left + g.pad_right;

        if (need_db) {
            for (int bi = 0; bi < out->batch; ++bi)
                for (int oc = 0; oc < out_ch; ++oc)
                    b->grad[oc] += kern::sum(out->grad_row(bi, oc), out->length);
        }

        if (need_dw) {
            // dW[oc][ic][j] = sum_{b,t} go[b,oc,t] * xp[b,ic,stride*t+j]
            const int row_len = (padded_len + 1) / 2 + 1;
            for (int bi = 0; bi < in->batch; ++bi) {
                if (g.stride == 1) {
                    scratch.padded.resize(static_cast<std::size_t>(in_ch) * padded_len);
                    for (int c = 0; c < in_ch; ++c)
                        pad_row(scratch.padded.data() + static_cast<std::size_t>(c) * padded_len,
                                in->row(bi, c), in->length, g.pad_left, g.pad_right);
                    for (int oc = 0; oc < out_ch; ++oc) {
                        const T* go = out->grad_row(bi, oc);
                        for (int ic = 0; ic < in_ch; ++ic) {
                            const T* xp = scratch.padded.data() + static_cast<std::size_t>(ic) * padded_len;
                            T* dw = w->grad_row(oc, ic);
                            for (int j = 0; j < k; ++j)
                                dw[j] += kern::dot(go, xp + j, out->length);
                        }
                    }
                } else {
                    scratch.padded.resize(padded_len);
                    scratch.parity.assign(static_cast<std::size_t>(in_ch) * 2 * row_len, T(0));
                    for (int c = 0; c < in_ch; ++c) {
                        pad_row(scratch.padded.data(), in->row(bi, c), in->length,
                                g.pad_left, g.pad_right);
                        split_parity(scratch.parity.data() + static_cast<std::size_t>(2 * c) * row_len,
                                     scratch.parity.data() + static_cast<std::size_t>(2 * c + 1) * row_len,
                                     scratch.padded.data(), padded_len);
                    }
                    for (int oc = 0; oc < out_ch; ++oc) {
                        const T* go = out->grad_row(bi, oc);
                        for (int ic = 0; ic < in_ch; ++ic) {
                            const T* erow = scratch.parity.data() + static_cast<std::size_t>(2 * ic) * row_len;
                            const T* orow = scratch.parity.data() + static_cast<std::size_t>(2 * ic + 1) * row_len;
                            T* dw = w->grad_row(oc, ic);
                            for (int j = 0; j < k; ++j) {
                                const T* base = (j % 2 == 0) ? erow : orow;
                                dw[j] += kern::dot(go, base + j / 2, out->length);
                            }
                        }
                    }
                }
            }
        }

        if (need_dx) {
            // dX[i] = sum_{oc,j} w[oc][ic][j] * go[oc][t] with stride*t+j = i+pl
            if (g.stride == 1) {
                // dX[i] = sum_j wr[j] * gop[i + j], wr reversed taps,
                // gop padded by (k-1-pl) left and pl right.
                const int gpl = k - 1 - g.pad_left;
                const int gplen = out->length + k - 1;
                scratch.gtmp.resize(static_cast<std::size_t>(out_ch) * gplen);
                scratch.wtmp.resize(static_cast<std::size_t>(k));
                for (int bi = 0; bi < out->batch; ++bi) {
                    for (int oc = 0; oc < out_ch; ++oc)
                        pad_row(scratch.gtmp.data() + static_cast<std::size_t>(oc) * gplen,
                                out->grad_row(bi, oc), out->length, gpl, g.pad_left);
                    for (int ic = 0; ic < in_ch; ++ic) {
                        T* dx = in->grad_row(bi, ic);
                        for (int oc = 0; oc < out_ch; ++oc) {
                            const T* wrow = w->row(oc, ic);
                            for (int j = 0; j < k; ++j)
                                scratch.wtmp[j] = wrow[k - 1 - j];
                            kern::acc_corr(dx,
                                           scratch.gtmp.data() + static_cast<std::size_t>(oc) * gplen,
                                           scratch.wtmp.data(), k, in->length);
                        }
                    }
                }
            } else {
                // Parity decomposition of the transposed conv. For input
                // parity q (i = 2u+q), taps j with (q + pl - j) even
                // contribute go[u + (q + pl - j)/2].
                for (int q = 0; q < 2; ++q) {
                    const int r = (q + g.pad_left) % 2;  // parity of contributing taps
                    // j = 2a + r, a in [0, kq)
                    const int kq = (r == 0) ? (k + 1) / 2 : k / 2;
                    if (kq == 0) continue;
                    const int base_shift = (q + g.pad_left - r) / 2;  // shift at a=0
                    // offsets decrease with a: off(a) = base_shift - a.
                    // Reversed-tap correlation: dxq[u] = sum_a w[2a+r] * go[u + base_shift - a]
                    //   = sum_m wr[m] * gop[u + m] with wr[m] = w[2(kq-1-m)+r]
                    // and gop padded so index u + base_shift - (kq-1) >= 0.
                    const int gpl = std::max(0, kq - 1 - base_shift);
                    // right padding to cover u_max + base_shift
                    const int in_q_len = (in->length - q + 1) / 2;  // #samples with parity q
                    const int max_idx = (in_q_len - 1) + base_shift;
                    const int gpr = std::max(0, max_idx - (out->length - 1));
                    const int gplen = out->length + gpl + gpr;
                    scratch.gtmp.resize(static_cast<std::size_t>(out_ch) * gplen);
                    scratch.wtmp.resize(static_cast<std::size_t>(kq));
                    std::vector<T> dxq(in_q_len);
                    for (int bi = 0; bi < out->batch; ++bi) {
                        for (int oc = 0; oc < out_ch; ++oc)
                            pad_row(scratch.gtmp.data() + static_cast<std::size_t>(oc) * gplen,
                                    out->grad_row(bi, oc), out->length, gpl, gpr);
                        for (int ic = 0; ic < in_ch; ++ic) {
                            std::fill(dxq.begin(), dxq.end(), T(0));
                            for (int oc = 0; oc < out_ch; ++oc) {
                                const T* wrow = w->row(oc, ic);
                                for (int m = 0; m < kq; ++m)
                                    scratch.wtmp[m] = wrow[2 * (kq - 1 - m) + r];
                                // u + base_shift - (kq-1) + gpl is the padded start
                                const T* gop = scratch.gtmp.data() + static_cast<std::size_t>(oc) * gplen +
                                               (base_shift - (kq - 1) + gpl);
                                kern::acc_corr(dxq.data(), gop, scratch.wtmp.data(), kq, in_q_len);
                            }
                            T* dx = in->grad_row(bi, ic);
                            for (int u = 0; u < in_q_len; ++u) dx[2 * u + q] += dxq[u];
                        }
                    }
                }
            }
        }
    }
};

}  // namespace

template <class T>
TensorPtr<T> conv1d(Tape<T>* tape, const TensorPtr<T>& input,
                    const TensorPtr<T>& weight, const TensorPtr<T>& bias,
                    int stride) {
    if (weight->channels != input->channels)
        throw std::invalid_argument("conv1d: weight in_channels " +
                                    std::to_string(weight->channels) +
                                    " != input channels " +
                                    std::to_string(input->channels));
    if (bias->size() != static_cast<std::size_t>(weight->batch))
        throw std::invalid_argument("conv1d: bias size must equal out_channels");
    const int k = weight->length;
    const ConvGeometry g = conv_geometry(input->length, k, stride);
    auto out = make_tensor<T>(input->batch, weight->batch, g.out_len);
    conv_forward_into(*out, *input, *weight, *bias, g, k);
    if (track(tape, {&input, &weight, &bias})) {
        out->requires_grad = true;
        auto node = std::make_unique<Conv1dNode<T>>();
        node->in = input;
        node->w = weight;
        node->b = bias;
        node->out = out;
        node->g = g;
        node->k = k;
        tape->record(std::move(node));
    }
    return out;
}

// ---------------------------------------------------------------------------
// subpixel shuffle
// ---------------------------------------------------------------------------

namespace {

template <class T>
struct SubpixelNode final : OpNode<T> {
    TensorPtr<T> in, out;
    int factor;
    bool inverse;

    void backward() override {
        if (!in->requires_grad) return;
        in->ensure_grad();
        if (!inverse) {
            for (int b = 0; b < in->batch; ++b)
                for (int c = 0; c < out->channels; ++c)
                    for (int r = 0; r < factor; ++r) {
                        T* dst = in->grad_row(b, factor * c + r);
                        const T* src = out->grad_row(b, c);
                        for (int t = 0; t < in->length; ++t)
                            dst[t] += src[factor * t + r];
                    }
        } else {
            for (int b = 0; b < in->batch; ++b)
                for (int c = 0; c < in->channels; ++c)
                    for (int r = 0; r < factor; ++r) {
                        const T* src = out->grad_row(b, factor * c + r);
                        T* dst = in->grad_row(b, c);
                        for (int t = 0; t < out->length; ++t)
                            dst[factor * t + r] += src[t];
                    }
        }
    }
};

}  // namespace

template <class T>
TensorPtr<T> subpixel_shuffle(Tape<T>* tape, const TensorPtr<T>& input, int factor) {
    if (factor < 1 || input->channels % factor != 0)
        throw std::invalid_argument("subpixel_shuffle: channels not divisible by factor");
    auto out = make_tensor<T>(input->batch, input->channels / factor,
                              input->length * factor);
    for (int b = 0; b < input->batch; ++b)
        for (int c = 0; c < out->channels; ++c)
            for (int r = 0; r < factor; ++r) {
                const T* src = input->row(b, factor * c + r);
                T* dst = out->row(b, c);
                for (int t = 0; t < input->length; ++t)
                    dst[factor * t + r] = src[t];
            }
    if (track(tape, {&input})) {
        out->requires_grad = true;
        auto node = std::make_unique<SubpixelNode<T>>();
        node->in = input;
        node->out = out;
        node->factor = factor;
        node->inverse = false;
        tape->record(std::move(node));
    }
    return out;
}

template <class T>
TensorPtr<T> subpixel_unshuffle(Tape<T>* tape, const TensorPtr<T>& input, int factor) {
    if (factor < 1 || input->length % factor != 0)
        throw std::invalid_argument("subpixel_unshuffle: length not divisible by factor");
    auto out = make_tensor<T>(input->batch, input->channels * factor,
                              input->length / factor);
    for (int b = 0; b < input->batch; ++b)
        for (int c = 0; c < input->channels; ++c)
            for (int r = 0; r < factor; ++r) {
                const T* src = input->row(b, c);
                T* dst = out->row(b, factor * c + r);
                for (int t = 0; t < out->length; ++t)
                    dst[t] = src[factor * t + r];
            }
    if (track(tape, {&input})) {
        out->requires_grad = true;
        auto node = std::make_unique<SubpixelNode<T>>();
        node->in = input;
        node->out = out;
        node->factor = factor;
        node->inverse = true;
        tape->record(std::move(node));
    }
    return out;
}

// ---------------------------------------------------------------------------
// relu
// ---------------------------------------------------------------------------

namespace {

template <class T>
struct ReluNode final : OpNode<T> {
    TensorPtr<T> in, out;
    void backward() override {
        if (!in->requires_grad) return;
        in->ensure_grad();
        kern::relu_grad_acc(in->grad.data(), out->grad.data(), out->data.data(),
                            static_cast<int>(in->size()));
    }
};

}  // namespace

template <class T>
TensorPtr<T> relu(Tape<T>* tape, const TensorPtr<T>& input) {
    auto out = make_tensor<T>(input->batch, input->channels, input->length);
    kern::relu(out->data.data(), input->data.data(), static_cast<int>(input->size()));
    if (track(tape, {&input})) {
        out->requires_grad = true;
        auto node = std::make_unique<ReluNode<T>>();
        node->in = input;
        node->out = out;
        tape->record(std::move(node));
    }
    return out;
}

// ---------------------------------------------------------------------------
// batch norm
// ---------------------------------------------------------------------------

namespace {

template <class T>
struct BatchNormNode final : OpNode<T> {
    TensorPtr<T> in, gamma, beta, out;
    std::vector<T> mean, inv_std;  // batch statistics used in forward

    void backward() override {
        const int C = in->channels;
        const std::size_t n = static_cast<std::size_t>(in->batch) * in->length;
        const bool need_dx = in->requires_grad;
        const bool need_dg = gamma->requires_grad;
        const bool need_db = beta->requires_grad;
        if (need_dx) in->ensure_grad();
        if (need_dg) gamma->ensure_grad();
        if (need_db) beta->ensure_grad();
        for (int c = 0; c < C; ++c) {
            // per-channel reductions in double for stability
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int b = 0; b < in->batch; ++b) {
                const T* dy = out->grad_row(b, c);
                const T* x = in->row(b, c);
                for (int t = 0; t < in->length; ++t) {
                    const double xhat = (double(x[t]) - double(mean[c])) * double(inv_std[c]);
                    sum_dy += double(dy[t]);
                    sum_dy_xhat += double(dy[t]) * xhat;
                }
            }
            if (need_dg) gamma->grad[c] += T(sum_dy_xhat);
            if (need_db) beta->grad[c] += T(sum_dy);
            if (need_dx) {
                const double gs = double(gamma->data[c]) * double(inv_std[c]);
                const double mdy = sum_dy / double(n);
                const double mdyx = sum_dy_xhat / double(n);
                // dx = gs * (dy - mdy - xhat * mdyx)
                //    = c1*dy + c2*x + c3   with xhat = (x - mean)*inv_std
                const T c1 = T(gs);
                const T c2 = T(-gs * mdyx * double(inv_std[c]));
                const T c3 = T(-gs * (mdy - mdyx * double(inv_std[c]) * double(mean[c])));
                for (int b = 0; b < in->batch; ++b)
                    kern::acc_affine2(in->grad_row(b, c), out->grad_row(b, c),
                                      in->row(b, c), c1, c2, c3, in->length);
            }
        }
    }
};

}  // namespace

template <class T>
TensorPtr<T> batch_norm(Tape<T>* tape, const TensorPtr<T>& input,
                        const TensorPtr<T>& gamma, const TensorPtr<T>& beta,
                        BnRunningStats<T>& stats, Mode mode, T momentum, T eps) {
    const int C = input->channels;
    if (gamma->size() != static_cast<std::size_t>(C) ||
        beta->size() != static_cast<std::size_t>(C))
        throw std::invalid_argument("batch_norm: gamma/beta must have one value per channel");
    if (static_cast<int>(stats.mean.size()) != C)
        throw std::invalid_argument("batch_norm: running stats channel mismatch");
    auto out = make_tensor<T>(input->batch, input->channels, input->length);
    const std::size_t n = static_cast<std::size_t>(input->batch) * input->length;

    if (mode == Mode::Eval) {
        if (stats.batches_tracked == 0)
            throw std::logic_error("batch_norm: eval mode before any running-stat update");
        for (int c = 0; c < C; ++c) {
            const T a = gamma->data[c] / std::sqrt(stats.var[c] + eps);
            const T b = beta->data[c] - stats.mean[c] * a;
            for (int bi = 0; bi < input->batch; ++bi)
                kern::affine(out->row(bi, c), input->row(bi, c), a, b, input->length);
        }
        return out;
    }

    if (n < 2)
        throw std::invalid_argument("batch_norm: training mode needs batch*length > 1");

    std::vector<T> mean(C), inv_std(C);
    for (int c = 0; c < C; ++c) {
        double s = 0.0;
        for (int bi = 0; bi < input->batch; ++bi) {
            const T* x = input->row(bi, c);
            for (int t = 0; t < input->length; ++t) s += double(x[t]);
        }
        const double mu = s / double(n);
        double sq = 0.0;
        for (int bi = 0; bi < input->batch; ++bi) {
            const T* x = input->row(bi, c);
            for (int t = 0; t < input->length; ++t) {
                const double d = double(x[t]) - mu;
                sq += d * d;
            }
        }
        const double var = sq / double(n);  // biased, used for normalization
        mean[c] = T(mu);
        inv_std[c] = T(1.0 / std::sqrt(var + double(eps)));
        // running stats use the unbiased variance
        const double var_unbiased = (n > 1) ? sq / double(n - 1) : var;
        stats.mean[c] = T((1.0 - double(momentum)) * double(stats.mean[c]) + double(momentum) * mu);
        stats.var[c] = T((1.0 - double(momentum)) * double(stats.var[c]) + double(momentum) * var_unbiased);
        const T a = gamma->data[c] * inv_std[c];
        const T b = beta->data[c] - mean[c] * a;
        for (int bi = 0; bi < input->batch; ++bi)
            kern::affine(out->row(bi, c), input->row(bi, c), a, b, input->length);
    }
    stats.batches_tracked++;

    if (track(tape, {&input, &gamma, &beta})) {
        out->requires_grad = true;
        auto node = std::make_unique<BatchNormNode<T>>();
        node->in = input;
        node->gamma = gamma;
        node->beta = beta;
        node->out = out;
        node->mean = std::move(mean);
        node->inv_std = std::move(inv_std);
        tape->record(std::move(node));
    }
    return out;
}

// ---------------------------------------------------------------------------
// dropout
// ---------------------------------------------------------------------------

namespace {

template <class T>
struct DropoutNode final : OpNode<T> {
    TensorPtr<T> in, out;
    std::shared_ptr<std::vector<T>> mask;

    void backward() override {
        if (!in->requires_grad) return;
        in->ensure_grad();
        kern::mul_acc(in->grad.data(), out->grad.data(), mask->data(),
                      static_cast<int>(in->size()));
    }
};

}  // namespace

template <class T>
TensorPtr<T> dropout(Tape<T>* tape, const TensorPtr<T>& input, T p, Mode mode,
                     Rng& rng) {
    if (!(p >= T(0) && p < T(1)))
        throw std::invalid_argument("dropout: p must be in [0, 1)");
    if (mode == Mode::Eval || p == T(0)) {
        // identity; share storage but keep graph bookkeeping simple by copying
        auto out = make_tensor<T>(input->batch, input->channels, input->length);
        out->data = input->data;
        if (track(tape, {&input})) {
            out->requires_grad = true;
            auto node = std::make_unique<DropoutNode<T>>();
            node->in = input;
            node->out = out;
            node->mask = std::make_shared<std::vector<T>>(input->size(), T(1));
            tape->record(std::move(node));
        }
        return out;
    }
    auto out = make_tensor<T>(input->batch, input->channels, input->length);
    auto mask = std::make_shared<std::vector<T>>(input->size());
    const T keep_scale = T(1) / (T(1) - p);
    for (std::size_t i = 0; i < mask->size(); ++i)
        (*mask)[i] = rng.uniform() < double(p) ? T(0) : keep_scale;
    kern::mul(out->data.data(), input->data.data(), mask->data(),
              static_cast<int>(input->size()));
    if (track(tape, {&input})) {
        out->requires_grad = true;
        auto node = std::make_unique<DropoutNode<T>>();
        node->in = input;
        node->out = out;
        node->mask = mask;
        tape->record(std::move(node));
    }
    return out;
}

// ---------------------------------------------------------------------------
// mse loss
// ---------------------------------------------------------------------------

namespace {

template <class T>
struct MseNode final : OpNode<T> {
    TensorPtr<T> pred, target, out;

    void backward() override {
        const T g = out->grad[0];
        const T scale = T(2) * g / T(pred->size());
        if (pred->requires_grad) {
            pred->ensure_grad();
            T* dp = pred->grad.data();
            const T* p = pred->data.data();
            const T* t = target->data.data();
            for (std::size_t i = 0; i < pred->size(); ++i)
                dp[i] += scale * (p[i] - t[i]);
        }
        if (target->requires_grad) {
            target->ensure_grad();
            T* dt = target->grad.data();
            const T* p = pred->data.data();
            const T* t = target->data.data();
            for (std::size_t i = 0; i < pred->size(); ++i)
                dt[i] -= scale * (p[i] - t[i]);
        }
    }
};

}  // namespace

template <class T>
TensorPtr<T> mse_loss(Tape<T>* tape, const TensorPtr<T>& prediction,
                      const TensorPtr<T>& target) {
    if (!prediction->same_shape(*target))
        throw std::invalid_argument("mse_loss: shape mismatch " +
                                    prediction->shape_str() + " vs " +
                                    target->shape_str());
    double acc = 0.0;
    const T* p = prediction->data.data();
    const T* t = target->data.data();
    for (std::size_t i = 0; i < prediction->size(); ++i) {
        const double d = double(p[i]) - double(t[i]);
        acc += d * d;
    }
    auto out = make_tensor<T>(1, 1, 1);
    out->data[0] = T(acc / double(prediction->size()));
    if (track(tape, {&prediction, &target})) {
        out->requires_grad = true;
        auto node = std::make_unique<MseNode<T>>();
        node->pred = prediction;
        node->target = target;
        node->out = out;
        tape->record(std::move(node));
    }
    return out;
}

// ---------------------------------------------------------------------------
// add / add_scaled / concat / sum
// ---------------------------------------------------------------------------

namespace {

template <class T>
struct AddScaledNode final : OpNode<T> {
    TensorPtr<T> a, b, out;
    T s;
    void backward() override {
        if (a->requires_grad) {
            a->ensure_grad();
            kern::axpy(a->grad.data(), out->grad.data(), T(1), static_cast<int>(a->size()));
        }
        if (b->requires_grad) {
            b->ensure_grad();
            kern::axpy(b->grad.data(), out->grad.data(), s, static_cast<int>(b->size()));
        }
    }
};

template <class T>
struct ConcatNode final : OpNode<T> {
    TensorPtr<T> a, b, out;
    void backward() override {
        if (a->requires_grad) {
            a->ensure_grad();
            for (int bi = 0; bi < a->batch; ++bi)
                for (int c = 0; c < a->channels; ++c)
                    kern::axpy(a->grad_row(bi, c), out->grad_row(bi, c), T(1), a->length);
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (int bi = 0; bi < b->batch; ++bi)
                for (int c = 0; c < b->channels; ++c)
                    kern::axpy(b->grad_row(bi, c), out->grad_row(bi, a->channels + c),
                               T(1), b->length);
        }
    }
};

template <class T>
struct SumAllNode final : OpNode<T> {
    TensorPtr<T> in, out;
    void backward() override {
        if (!in->requires_grad) return;
        in->ensure_grad();
        const T g = out->grad[0];
        for (std::size_t i = 0; i < in->size(); ++i) in->grad[i] += g;
    }
};

}  // namespace

template <class T>
TensorPtr<T> add_scaled(Tape<T>* tape, const TensorPtr<T>& a,
                        const TensorPtr<T>& b, T s) {
    if (!a->same_shape(*b))
        throw std::invalid_argument("add: shape mismatch " + a->shape_str() +
                                    " vs " + b->shape_str());
    auto out = make_tensor<T>(a->batch, a->channels, a->length);
    out->data = a->data;
    kern::axpy(out->data.data(), b->data.data(), s, static_cast<int>(out->size()));
    if (track(tape, {&a, &b})) {
        out->requires_grad = true;
        auto node = std::make_unique<AddScaledNode<T>>();
        node->a = a;
        node->b = b;
        node->out = out;
        node->s = s;
        tape->record(std::move(node));
    }
    return out;
}

template <class T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    return add_scaled(tape, a, b, T(1));
}

template <class T>
TensorPtr<T> concat_channels(Tape<T>* tape, const TensorPtr<T>& a,
                             const TensorPtr<T>& b) {
    if (a->batch != b->batch || a->length != b->length)
        throw std::invalid_argument("concat_channels: batch/length mismatch " +
                                    a->shape_str() + " vs " + b->shape_str());
    auto out = make_tensor<T>(a->batch, a->channels + b->channels, a->length);
    for (int bi = 0; bi < a->batch; ++bi) {
        for (int c = 0; c < a->channels; ++c)
            std::copy(a->row(bi, c), a->row(bi, c) + a->length, out->row(bi, c));
        for (int c = 0; c < b->channels; ++c)
            std::copy(b->row(bi, c), b->row(bi, c) + b->length,
                      out->row(bi, a->channels + c));
    }
    if (track(tape, {&a, &b})) {
        out->requires_grad = true;
        auto node = std::make_unique<ConcatNode<T>>();
        node->a = a;
        node->b = b;
        node->out = out;
        tape->record(std::move(node));
    }
    return out;
}

template <class T>
TensorPtr<T> sum_all(Tape<T>* tape, const TensorPtr<T>& input) {
    double acc = 0.0;
    for (std::size_t i = 0; i < input->size(); ++i) acc += double(input->data[i]);
    auto out = make_tensor<T>(1, 1, 1);
    out->data[0] = T(acc);
    if (track(tape, {&input})) {
        out->requires_grad = true;
        auto node = std::make_unique<SumAllNode<T>>();
        node->in = input;
        node->out = out;
        tape->record(std::move(node));
    }
    return out;
}

}  // namespace bwe::ag

namespace bwe {

template <class T>
void adam_step(std::vector<Parameter<T>*>& params, T lr, T beta1, T beta2, T eps) {
    for (Parameter<T>* p : params) {
        if (!p->tensor->has_grad())
            throw std::logic_error("adam_step: parameter '" + p->name +
                                   "' has no gradient");
        p->step_count++;
        const T bc1 = T(1) - T(std::pow(double(beta1), double(p->step_count)));
        const T bc2 = T(1) - T(std::pow(double(beta2), double(p->step_count)));
        kern::adam(p->tensor->data.data(), p->tensor->grad.data(),
                   p->adam_m.data(), p->adam_v.data(),
                   static_cast<int>(p->tensor->size()), lr, beta1, beta2, eps,
                   bc1, bc2);
    }
}

}  // namespace bwe

// explicit instantiations
namespace bwe::ag {
#define BWE_INSTANTIATE_OPS(T)                                                        \
    template TensorPtr<T> conv1d<T>(Tape<T>*, const TensorPtr<T>&,                    \
                                    const TensorPtr<T>&, const TensorPtr<T>&, int);   \
    template TensorPtr<T> subpixel_shuffle<T>(Tape<T>*, const TensorPtr<T>&, int);    \
    template TensorPtr<T> subpixel_unshuffle<T>(Tape<T>*, const TensorPtr<T>&, int);  \
    template TensorPtr<T> relu<T>(Tape<T>*, const TensorPtr<T>&);                     \
    template TensorPtr<T> batch_norm<T>(Tape<T>*, const TensorPtr<T>&,                \
                                        const TensorPtr<T>&, const TensorPtr<T>&,     \
                                        BnRunningStats<T>&, Mode, T, T);              \
    template TensorPtr<T> dropout<T>(Tape<T>*, const TensorPtr<T>&, T, Mode, Rng&);   \
    template TensorPtr<T> mse_loss<T>(Tape<T>*, const TensorPtr<T>&,                  \
                                      const TensorPtr<T>&);                           \
    template TensorPtr<T> add<T>(Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&); \
    template TensorPtr<T> add_scaled<T>(Tape<T>*, const TensorPtr<T>&,                \
                                        const TensorPtr<T>&, T);                      \
    template TensorPtr<T> concat_channels<T>(Tape<T>*, const TensorPtr<T>&,           \
                                             const TensorPtr<T>&);                    \
    template TensorPtr<T> sum_all<T>(Tape<T>*, const TensorPtr<T>&);

BWE_INSTANTIATE_OPS(float)
BWE_INSTANTIATE_OPS(double)
#undef BWE_INSTANTIATE_OPS
}  // namespace bwe::ag

namespace bwe {
template void adam_step<float>(std::vector<Parameter<float>*>&, float, float, float, float);
template void adam_step<double>(std::vector<Parameter<double>*>&, double, double, double, double);
}  // namespace bwe
