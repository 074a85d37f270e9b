#pragma once

#include "bwe/rng.hpp"
#include "bwe/tensor.hpp"

namespace bwe {

enum class Mode { Train, Eval };

// Per-channel batch-norm statistics that live outside the parameter set.
template <class T>
struct BnRunningStats {
    std::vector<T> mean;
    std::vector<T> var;
    std::uint64_t batches_tracked = 0;

    explicit BnRunningStats(int channels = 0)
        : mean(channels, T(0)), var(channels, T(1)) {}
};

namespace ag {

// All ops run eagerly. When `tape` is non-null and any input requires a
// gradient, a backward node is recorded; with a null tape they are plain
// forward computations (inference path).

// Cross-correlation (deep-learning convolution), stride 1 or 2.
// input (B, Cin, L), weight (Cout, Cin, K), bias (1, 1, Cout).
// stride 1 needs odd K ("same" padding); stride 2 pads max(0, K-2)
// left-heavy so out_len = ceil(L / 2).
template <class T>
TensorPtr<T> conv1d(Tape<T>* tape, const TensorPtr<T>& input,
                    const TensorPtr<T>& weight, const TensorPtr<T>& bias,
                    int stride);

// (B, C, L) -> (B, C/factor, factor*L); out[b][c][f*t+r] = in[b][f*c+r][t].
template <class T>
TensorPtr<T> subpixel_shuffle(Tape<T>* tape, const TensorPtr<T>& input,
                              int factor = 2);

// Inverse of subpixel_shuffle (space-to-channel).
template <class T>
TensorPtr<T> subpixel_unshuffle(Tape<T>* tape, const TensorPtr<T>& input,
                                int factor = 2);

template <class T>
TensorPtr<T> relu(Tape<T>* tape, const TensorPtr<T>& input);

// Training mode normalizes per channel over (batch, length), updates running
// stats with `momentum`; eval mode applies the running stats (error if none
// were ever tracked).
template <class T>
TensorPtr<T> batch_norm(Tape<T>* tape, const TensorPtr<T>& input,
                        const TensorPtr<T>& gamma, const TensorPtr<T>& beta,
                        BnRunningStats<T>& stats, Mode mode,
                        T momentum = T(0.1), T eps = T(1e-5));

// Inverted dropout: train mode zeroes units with probability p and scales
// survivors by 1/(1-p); eval mode is the identity.
template <class T>
TensorPtr<T> dropout(Tape<T>* tape, const TensorPtr<T>& input, T p, Mode mode,
                     Rng& rng);

// Mean over all elements of squared difference; returns a (1,1,1) tensor.
template <class T>
TensorPtr<T> mse_loss(Tape<T>* tape, const TensorPtr<T>& prediction,
                      const TensorPtr<T>& target);

template <class T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b);

// a + s * b
template <class T>
TensorPtr<T> add_scaled(Tape<T>* tape, const TensorPtr<T>& a,
                        const TensorPtr<T>& b, T s);

template <class T>
TensorPtr<T> concat_channels(Tape<T>* tape, const TensorPtr<T>& a,
                             const TensorPtr<T>& b);

// Sum of all elements as a (1,1,1) tensor (test utility).
template <class T>
TensorPtr<T> sum_all(Tape<T>* tape, const TensorPtr<T>& input);

// Output length of conv1d for the supported strides/paddings.
inline int conv_out_len(int in_len, int stride) {
    return (in_len + stride - 1) / stride;
}

}  // namespace ag

// Bias-corrected Adam update applied in place to every parameter.
// Throws if any parameter is missing its gradient.
template <class T>
void adam_step(std::vector<Parameter<T>*>& params, T lr, T beta1 = T(0.9),
               T beta2 = T(0.999), T eps = T(1e-8));

}  // namespace bwe
