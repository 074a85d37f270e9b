#include "bwe/models.hpp"

#include <cmath>
#include <stdexcept>

namespace bwe {

namespace {

template <class T>
void init_conv(Parameter<T>* w, Parameter<T>* b, InitScheme scheme, Rng& rng,
               bool zero) {
    if (zero) {
        std::fill(w->tensor->data.begin(), w->tensor->data.end(), T(0));
        std::fill(b->tensor->data.begin(), b->tensor->data.end(), T(0));
        return;
    }
    const int fan_in = w->tensor->channels * w->tensor->length;
    const double stddev =
        scheme == InitScheme::UnitNormal ? 1.0 : 1.0 / std::sqrt(double(fan_in));
    for (auto& v : w->tensor->data) v = T(rng.normal() * stddev);
    std::fill(b->tensor->data.begin(), b->tensor->data.end(), T(0));
}

template <class T>
struct ConvBlock {
    Parameter<T>* w = nullptr;
    Parameter<T>* b = nullptr;
    int stride = 1;

    TensorPtr<T> apply(Tape<T>* tape, const TensorPtr<T>& x) const {
        return ag::conv1d(tape, x, w->tensor, b->tensor, stride);
    }
    std::uint64_t params() const { return w->tensor->size() + b->tensor->size(); }
    std::uint64_t macs(long out_len) const {
        return std::uint64_t(out_len) * w->tensor->batch * w->tensor->channels *
               w->tensor->length;
    }
};

template <class T>
struct BnBlock {
    Parameter<T>* gamma = nullptr;
    Parameter<T>* beta = nullptr;
    BnRunningStats<T>* stats = nullptr;

    TensorPtr<T> apply(Tape<T>* tape, const TensorPtr<T>& x, Mode mode) const {
        return ag::batch_norm(tape, x, gamma->tensor, beta->tensor, *stats, mode);
    }
    std::uint64_t params() const { return gamma->tensor->size() + beta->tensor->size(); }
};

// ---------------------------------------------------------------------------
// U-Net
// ---------------------------------------------------------------------------

template <class T>
class UNet final : public Network<T> {
public:
    UNet(const UNetConfig& cfg, InitScheme init, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        const int B = cfg_.num_scales;
        int in_ch = 2;
        for (int i = 0; i < B; ++i) {
            DownBlock d;
            d.conv = conv("down" + std::to_string(i), cfg_.channels_per_scale[i],
                          in_ch, cfg_.kernel_sizes[i], 2, init, rng);
            if (cfg_.use_batch_norm)
                d.bn = bn("down" + std::to_string(i) + ".bn",
                          cfg_.channels_per_scale[i]);
            down_.push_back(d);
            in_ch = cfg_.channels_per_scale[i];
        }
        // up block m consumes d[B-1-m] (m>0) stacked on the previous output
        for (int m = 0; m < B; ++m) {
            const int out_ch = up_channels(m);
            const int src_ch =
                m == 0 ? cfg_.channels_per_scale[B - 1]
                       : up_channels(m - 1) + cfg_.channels_per_scale[B - 1 - m];
            UpBlock u;
            u.conv = conv("up" + std::to_string(m), 2 * out_ch, src_ch,
                          cfg_.kernel_sizes[B - 1 - m], 1, init, rng);
            up_.push_back(u);
        }
        final_ = conv("final", 2, up_channels(B - 1), cfg_.final_kernel, 1, init,
                      rng, cfg_.zero_init_final);
    }

    TensorPtr<T> forward(Tape<T>* tape, const TensorPtr<T>& x) override {
        if (x->channels != 2)
            throw std::invalid_argument("unet forward: input must have 2 channels");
        const int B = cfg_.num_scales;
        if (x->length % (1 << B) != 0)
            throw std::invalid_argument(
                "unet forward: input length " + std::to_string(x->length) +
                " not divisible by 2^" + std::to_string(B));
        std::vector<TensorPtr<T>> d(B);
        TensorPtr<T> h = x;
        for (int i = 0; i < B; ++i) {
            h = down_[i].conv.apply(tape, h);
            if (down_[i].bn) h = down_[i].bn->apply(tape, h, this->mode_);
            h = ag::relu(tape, h);
            d[i] = h;
        }
        for (int m = 0; m < B; ++m) {
            TensorPtr<T> src = m == 0 ? d[B - 1]
                                      : ag::concat_channels(tape, h, d[B - 1 - m]);
            h = up_[m].conv.apply(tape, src);
            if (cfg_.use_dropout)
                h = ag::dropout(tape, h, T(cfg_.dropout_p), this->mode_,
                                this->dropout_rng_);
            h = ag::relu(tape, h);
            h = ag::subpixel_shuffle(tape, h, 2);
        }
        h = final_.apply(tape, h);
        return ag::add(tape, x, h);
    }

    std::string architecture() const override { return "unet"; }

    CountResult count_params_and_macs(long input_length) const override {
        CountResult r;
        const int B = cfg_.num_scales;
        long len = input_length;
        for (int i = 0; i < B; ++i) {
            len = (len + 1) / 2;
            r.params += down_[i].conv.params();
            r.macs += down_[i].conv.macs(len);
            if (down_[i].bn) r.params += down_[i].bn->params();
        }
        for (int m = 0; m < B; ++m) {
            r.params += up_[m].conv.params();
            r.macs += up_[m].conv.macs(len);
            len *= 2;
        }
        r.params += final_.params();
        r.macs += final_.macs(len);
        return r;
    }

private:
    struct DownBlock {
        ConvBlock<T> conv;
        std::optional<BnBlock<T>> bn;
    };
    struct UpBlock {
        ConvBlock<T> conv;
    };

    int up_channels(int m) const {
        const int B = cfg_.num_scales;
        return m == B - 1 ? cfg_.channels_per_scale[0]
                          : cfg_.channels_per_scale[B - 2 - m];
    }

    ConvBlock<T> conv(const std::string& name, int out_ch, int in_ch, int k,
                      int stride, InitScheme init, Rng& rng, bool zero = false) {
        ConvBlock<T> c;
        c.w = this->add_param(name + ".w", out_ch, in_ch, k);
        c.b = this->add_param(name + ".b", 1, 1, out_ch);
        c.stride = stride;
        init_conv(c.w, c.b, init, rng, zero);
        return c;
    }

    BnBlock<T> bn(const std::string& name, int ch) {
        BnBlock<T> b;
        b.gamma = this->add_param(name + ".gamma", 1, 1, ch);
        b.beta = this->add_param(name + ".beta", 1, 1, ch);
        std::fill(b.gamma->tensor->data.begin(), b.gamma->tensor->data.end(), T(1));
        b.stats = this->add_stats(name, ch);
        return b;
    }

    UNetConfig cfg_;
    std::vector<DownBlock> down_;
    std::vector<UpBlock> up_;
    ConvBlock<T> final_;
};

// ---------------------------------------------------------------------------
// ResNet
// ---------------------------------------------------------------------------

template <class T>
class ResNet final : public Network<T> {
public:
    ResNet(const ResNetConfig& cfg, InitScheme init, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        const int C = cfg_.channels;
        entry_ = conv("entry", C, 2, cfg_.kernel_size, init, rng);
        for (int i = 0; i < cfg_.num_blocks; ++i) {
            Block blk;
            const std::string base = "block" + std::to_string(i);
            blk.conv1 = conv(base + ".conv1", C, C, cfg_.kernel_size, init, rng);
            blk.conv2 = conv(base + ".conv2", C, C, cfg_.kernel_size, init, rng);
            if (cfg_.use_batch_norm) {
                blk.bn1 = bn(base + ".bn1", C);
                blk.bn2 = bn(base + ".bn2", C);
            }
            blocks_.push_back(blk);
        }
        final_ = conv("final", 2, C, cfg_.kernel_size, init, rng,
                      cfg_.zero_init_final);
    }

    TensorPtr<T> forward(Tape<T>* tape, const TensorPtr<T>& x) override {
        if (x->channels != 2)
            throw std::invalid_argument("resnet forward: input must have 2 channels");
        TensorPtr<T> h = entry_.apply(tape, x);
        for (auto& blk : blocks_) {
            TensorPtr<T> t = blk.conv1.apply(tape, h);
            if (blk.bn1) t = blk.bn1->apply(tape, t, this->mode_);
            t = ag::relu(tape, t);
            if (cfg_.use_dropout)
                t = ag::dropout(tape, t, T(cfg_.dropout_p), this->mode_,
                                this->dropout_rng_);
            t = blk.conv2.apply(tape, t);
            if (blk.bn2) t = blk.bn2->apply(tape, t, this->mode_);
            h = ag::add_scaled(tape, h, t, T(cfg_.residual_scale));
        }
        h = final_.apply(tape, h);
        return ag::add(tape, x, h);
    }

    std::string architecture() const override { return "resnet"; }

    CountResult count_params_and_macs(long input_length) const override {
        CountResult r;
        r.params += entry_.params();
        r.macs += entry_.macs(input_length);
        for (const auto& blk : blocks_) {
            r.params += blk.conv1.params() + blk.conv2.params();
            r.macs += blk.conv1.macs(input_length) + blk.conv2.macs(input_length);
            if (blk.bn1) r.params += blk.bn1->params() + blk.bn2->params();
        }
        r.params += final_.params();
        r.macs += final_.macs(input_length);
        return r;
    }

private:
    struct Block {
        ConvBlock<T> conv1, conv2;
        std::optional<BnBlock<T>> bn1, bn2;
    };

    ConvBlock<T> conv(const std::string& name, int out_ch, int in_ch, int k,
                      InitScheme init, Rng& rng, bool zero = false) {
        ConvBlock<T> c;
        c.w = this->add_param(name + ".w", out_ch, in_ch, k);
        c.b = this->add_param(name + ".b", 1, 1, out_ch);
        c.stride = 1;
        init_conv(c.w, c.b, init, rng, zero);
        return c;
    }

    BnBlock<T> bn(const std::string& name, int ch) {
        BnBlock<T> b;
        b.gamma = this->add_param(name + ".gamma", 1, 1, ch);
        b.beta = this->add_param(name + ".beta", 1, 1, ch);
        std::fill(b.gamma->tensor->data.begin(), b.gamma->tensor->data.end(), T(1));
        b.stats = this->add_stats(name, ch);
        return b;
    }

    ResNetConfig cfg_;
    ConvBlock<T> entry_;
    std::vector<Block> blocks_;
    ConvBlock<T> final_;
};

}  // namespace

void UNetConfig::validate() const {
    if (num_scales < 1) throw std::invalid_argument("unet: num_scales must be >= 1");
    if (static_cast<int>(channels_per_scale.size()) != num_scales)
        throw std::invalid_argument("unet: channels_per_scale must list one count per scale");
    if (static_cast<int>(kernel_sizes.size()) != num_scales)
        throw std::invalid_argument("unet: kernel_sizes must list one size per scale");
    for (int c : channels_per_scale)
        if (c <= 0) throw std::invalid_argument("unet: channel counts must be positive");
    for (int k : kernel_sizes)
        if (k < 1 || k % 2 == 0)
            throw std::invalid_argument(
                "unet: kernel sizes must be odd (shared by stride-1 up convs)");
    if (final_kernel < 1 || final_kernel % 2 == 0)
        throw std::invalid_argument("unet: final kernel must be odd");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0))
        throw std::invalid_argument("unet: dropout_p must be in [0,1)");
}

void ResNetConfig::validate() const {
    if (num_blocks < 1) throw std::invalid_argument("resnet: num_blocks must be >= 1");
    if (channels < 1) throw std::invalid_argument("resnet: channels must be >= 1");
    if (kernel_size < 1 || kernel_size % 2 == 0)
        throw std::invalid_argument("resnet: kernel size must be odd");
    // 0 disables every branch, leaving the pure skip path (identity checks)
    if (!(residual_scale >= 0.0 && residual_scale <= 1.0))
        throw std::invalid_argument("resnet: residual_scale must be in [0,1]");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0))
        throw std::invalid_argument("resnet: dropout_p must be in [0,1)");
}

template <class T>
std::unique_ptr<Network<T>> build_unet(const UNetConfig& config, InitScheme init,
                                       Rng& rng) {
    return std::make_unique<UNet<T>>(config, init, rng);
}

template <class T>
std::unique_ptr<Network<T>> build_resnet(const ResNetConfig& config,
                                         InitScheme init, Rng& rng) {
    return std::make_unique<ResNet<T>>(config, init, rng);
}

template std::unique_ptr<Network<float>> build_unet<float>(const UNetConfig&, InitScheme, Rng&);
template std::unique_ptr<Network<double>> build_unet<double>(const UNetConfig&, InitScheme, Rng&);
template std::unique_ptr<Network<float>> build_resnet<float>(const ResNetConfig&, InitScheme, Rng&);
template std::unique_ptr<Network<double>> build_resnet<double>(const ResNetConfig&, InitScheme, Rng&);

}  // namespace bwe
