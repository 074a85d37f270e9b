#pragma once

#include "bwe/autograd.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace bwe {

enum class InitScheme {
    ScaledNormal,  // N(0, 1/sqrt(fan_in)) -- default
    UnitNormal,    // N(0, 1), the literal description in the source material
};

struct UNetConfig {
    int num_scales = 4;
    std::vector<int> channels_per_scale = {16, 32, 64, 128};
    std::vector<int> kernel_sizes = {9, 9, 9, 9};  // per scale, down and up
    int final_kernel = 9;
    bool use_batch_norm = false;
    bool use_dropout = false;
    double dropout_p = 0.5;
    bool zero_init_final = true;

    void validate() const;
};

struct ResNetConfig {
    int num_blocks = 8;
    int channels = 32;
    int kernel_size = 7;
    double residual_scale = 0.1;
    bool use_batch_norm = false;
    bool use_dropout = false;
    double dropout_p = 0.5;
    bool zero_init_final = true;

    void validate() const;
};

struct CountResult {
    std::uint64_t params = 0;
    std::uint64_t macs = 0;
};

// Cost of one conv layer: params = out*in*k (+ out bias), MACs =
// out_len*out*in*k. Bias adds and elementwise ops are excluded from MACs.
inline CountResult conv_cost(int out_ch, int in_ch, int k, long out_len,
                             bool bias = true) {
    CountResult r;
    r.params = std::uint64_t(out_ch) * in_ch * k + (bias ? std::uint64_t(out_ch) : 0);
    r.macs = std::uint64_t(out_len) * out_ch * in_ch * k;
    return r;
}

// A layer graph with its parameter registry and train/eval mode. Forward
// output shape always equals input shape (stereo = 2 channels in and out).
template <class T>
class Network {
public:
    virtual ~Network() = default;

    virtual TensorPtr<T> forward(Tape<T>* tape, const TensorPtr<T>& input) = 0;
    virtual std::string architecture() const = 0;

    // Exact trainable-parameter total and conv MAC count for one forward pass
    // at the given input length (bias adds and elementwise ops excluded).
    virtual CountResult count_params_and_macs(long input_length) const = 0;

    Mode mode() const { return mode_; }
    void set_mode(Mode m) { mode_ = m; }

    std::vector<Parameter<T>*> parameters() {
        std::vector<Parameter<T>*> out;
        out.reserve(params_.size());
        for (auto& p : params_) out.push_back(p.get());
        return out;
    }

    // Batch-norm running stats, serialized alongside parameters.
    struct NamedStats {
        std::string name;
        BnRunningStats<T>* stats;
    };
    std::vector<NamedStats> running_stats() {
        std::vector<NamedStats> out;
        for (auto& s : stats_) out.push_back({s.first, s.second.get()});
        return out;
    }

    Rng& dropout_rng() { return dropout_rng_; }
    void seed_dropout(std::uint64_t seed) { dropout_rng_.reseed(seed); }

    void zero_grads() {
        for (auto& p : params_) p->tensor->zero_grad();
    }

protected:
    Parameter<T>* add_param(const std::string& name, int d0, int d1, int d2) {
        params_.push_back(std::make_unique<Parameter<T>>(
            name, make_tensor<T>(d0, d1, d2, true)));
        return params_.back().get();
    }

    BnRunningStats<T>* add_stats(const std::string& name, int channels) {
        stats_.emplace_back(name, std::make_unique<BnRunningStats<T>>(channels));
        return stats_.back().second.get();
    }

    Mode mode_ = Mode::Train;
    Rng dropout_rng_;

private:
    std::vector<std::unique_ptr<Parameter<T>>> params_;
    std::vector<std::pair<std::string, std::unique_ptr<BnRunningStats<T>>>> stats_;
};

template <class T>
std::unique_ptr<Network<T>> build_unet(const UNetConfig& config, InitScheme init,
                                       Rng& rng);

template <class T>
std::unique_ptr<Network<T>> build_resnet(const ResNetConfig& config,
                                         InitScheme init, Rng& rng);

}  // namespace bwe
