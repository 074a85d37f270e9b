#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bwe/models.hpp"

#include <cmath>

using namespace bwe;

namespace {

TensorPtr<float> rand_input(Rng& rng, int b, int l) {
    auto t = make_tensor<float>(b, 2, l);
    for (auto& v : t->data) v = float(rng.uniform(-0.9, 0.9));
    return t;
}

UNetConfig toy_unet() {
    UNetConfig c;
    c.num_scales = 2;
    c.channels_per_scale = {8, 16};
    c.kernel_sizes = {9, 9};
    c.final_kernel = 9;
    return c;
}

ResNetConfig toy_resnet() {
    ResNetConfig c;
    c.num_blocks = 4;
    c.channels = 16;
    c.kernel_size = 7;
    return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// identity invariants
// ---------------------------------------------------------------------------

TEST_CASE("unet with zeroed final conv is the bitwise identity") {
    Rng rng(1);
    auto net = build_unet<float>(toy_unet(), InitScheme::ScaledNormal, rng);
    auto x = rand_input(rng, 2, 64);
    const auto y = net->forward(nullptr, x);
    REQUIRE(y->same_shape(*x));
    CHECK(y->data == x->data);
}

TEST_CASE("resnet with zero residual scale and zeroed final conv is the bitwise identity") {
    Rng rng(2);
    ResNetConfig cfg = toy_resnet();
    cfg.residual_scale = 0.0;
    auto net = build_resnet<float>(cfg, InitScheme::ScaledNormal, rng);
    auto x = rand_input(rng, 1, 100);
    const auto y = net->forward(nullptr, x);
    CHECK(y->data == x->data);
}

TEST_CASE("randomly initialized networks are not the identity") {
    Rng rng(3);
    UNetConfig ucfg = toy_unet();
    ucfg.zero_init_final = false;
    auto net = build_unet<float>(ucfg, InitScheme::ScaledNormal, rng);
    auto x = rand_input(rng, 1, 64);
    CHECK(net->forward(nullptr, x)->data != x->data);
}

// ---------------------------------------------------------------------------
// shapes
// ---------------------------------------------------------------------------

TEST_CASE("forward preserves shape for both architectures") {
    Rng rng(4);
    auto unet = build_unet<float>(toy_unet(), InitScheme::ScaledNormal, rng);
    auto resnet = build_resnet<float>(toy_resnet(), InitScheme::ScaledNormal, rng);
    auto x = rand_input(rng, 1, 64);
    CHECK(unet->forward(nullptr, x)->same_shape(*x));
    CHECK(resnet->forward(nullptr, x)->same_shape(*x));

    // fully convolutional: arbitrary lengths for the resnet
    for (int len : {1, 5, 37, 213}) {
        auto odd = rand_input(rng, 1, len);
        CHECK(resnet->forward(nullptr, odd)->same_shape(*odd));
    }
}

TEST_CASE("unet rejects lengths not divisible by 2^B and bad channel counts") {
    Rng rng(5);
    auto net = build_unet<float>(toy_unet(), InitScheme::ScaledNormal, rng);
    auto bad_len = rand_input(rng, 1, 30);  // not divisible by 4
    CHECK_THROWS(net->forward(nullptr, bad_len));
    auto mono = make_tensor<float>(1, 1, 64);
    CHECK_THROWS(net->forward(nullptr, mono));
    auto resnet = build_resnet<float>(toy_resnet(), InitScheme::ScaledNormal, rng);
    CHECK_THROWS(resnet->forward(nullptr, mono));
}

TEST_CASE("config validation rejects bad configs") {
    Rng rng(6);
    UNetConfig u = toy_unet();
    u.channels_per_scale = {8};  // wrong list length
    CHECK_THROWS(build_unet<float>(u, InitScheme::ScaledNormal, rng));
    ResNetConfig r = toy_resnet();
    r.kernel_size = 4;  // even
    CHECK_THROWS(build_resnet<float>(r, InitScheme::ScaledNormal, rng));
    r = toy_resnet();
    r.num_blocks = 0;
    CHECK_THROWS(build_resnet<float>(r, InitScheme::ScaledNormal, rng));
}

// ---------------------------------------------------------------------------
// parameter/MAC accounting
// ---------------------------------------------------------------------------

TEST_CASE("conv_cost reproduces the hand-counted example") {
    const CountResult r = conv_cost(1, 1, 3, 10);
    CHECK(r.params == 4);
    CHECK(r.macs == 30);
    CHECK(CountResult{}.params == 0);  // zero-layer passthrough
    CHECK(CountResult{}.macs == 0);
}

TEST_CASE("unet parameter count matches brute-force enumeration") {
    Rng rng(7);
    auto net = build_unet<float>(toy_unet(), InitScheme::ScaledNormal, rng);
    // B=2, channels [8,16], k=9 everywhere:
    // down0 2->8, down1 8->16, up0 16->32(shuffle->16... see forward), final
    std::uint64_t expected = 0;
    expected += 8ull * 2 * 9 + 8;      // down0
    expected += 16ull * 8 * 9 + 16;    // down1
    expected += 16ull * 16 * 9 + 16;   // up0: 16 -> 2*8
    expected += 16ull * 16 * 9 + 16;   // up1: (8+8) -> 2*8
    expected += 2ull * 8 * 9 + 2;      // final 8 -> 2
    const auto counted = net->count_params_and_macs(64);
    CHECK(counted.params == expected);

    // cross-check against the parameter registry itself
    std::uint64_t registry = 0;
    for (auto* p : net->parameters()) registry += p->tensor->size();
    CHECK(registry == expected);
}

TEST_CASE("resnet parameter count matches brute-force enumeration") {
    Rng rng(8);
    auto net = build_resnet<float>(toy_resnet(), InitScheme::ScaledNormal, rng);
    std::uint64_t expected = 0;
    expected += 16ull * 2 * 7 + 16;                // entry
    expected += 4ull * 2 * (16ull * 16 * 7 + 16);  // 4 blocks, 2 convs each
    expected += 2ull * 16 * 7 + 2;                 // final
    const auto counted = net->count_params_and_macs(128);
    CHECK(counted.params == expected);
    std::uint64_t registry = 0;
    for (auto* p : net->parameters()) registry += p->tensor->size();
    CHECK(registry == expected);
}

TEST_CASE("unet MACs match a hand enumeration over lengths") {
    Rng rng(9);
    auto net = build_unet<float>(toy_unet(), InitScheme::ScaledNormal, rng);
    const long L = 64;
    std::uint64_t macs = 0;
    macs += std::uint64_t(L / 2) * 8 * 2 * 9;     // down0 at out len 32
    macs += std::uint64_t(L / 4) * 16 * 8 * 9;    // down1 at 16
    macs += std::uint64_t(L / 4) * 16 * 16 * 9;   // up0 conv at 16
    macs += std::uint64_t(L / 2) * 16 * 16 * 9;   // up1 conv at 32
    macs += std::uint64_t(L) * 2 * 8 * 9;         // final at 64
    CHECK(net->count_params_and_macs(L).macs == macs);
}

TEST_CASE("matched-parameter unet does fewer MACs than the resnet") {
    Rng rng(10);
    UNetConfig u;
    u.num_scales = 4;
    u.channels_per_scale = {16, 32, 64, 128};
    u.kernel_sizes = {9, 9, 9, 9};
    ResNetConfig r;
    r.num_blocks = 8;
    r.channels = 56;
    r.kernel_size = 7;
    auto unet = build_unet<float>(u, InitScheme::ScaledNormal, rng);
    auto resnet = build_resnet<float>(r, InitScheme::ScaledNormal, rng);
    const auto cu = unet->count_params_and_macs(8192);
    const auto cr = resnet->count_params_and_macs(8192);
    const double rel = std::abs(double(cu.params) - double(cr.params)) /
                       double(std::max(cu.params, cr.params));
    CHECK(rel < 0.05);          // parameter counts matched within 5%
    CHECK(cu.macs * 2 < cr.macs);  // wide layers at reduced length pay off
}

// ---------------------------------------------------------------------------
// gradient flow
// ---------------------------------------------------------------------------

TEST_CASE("every parameter receives gradient over five random batches") {
    Rng rng(11);
    UNetConfig ucfg = toy_unet();
    ucfg.zero_init_final = false;
    ucfg.use_batch_norm = true;
    ResNetConfig rcfg = toy_resnet();
    rcfg.zero_init_final = false;
    rcfg.use_dropout = true;

    auto unet = build_unet<float>(ucfg, InitScheme::ScaledNormal, rng);
    auto resnet = build_resnet<float>(rcfg, InitScheme::ScaledNormal, rng);
    for (Network<float>* net : {unet.get(), resnet.get()}) {
        net->set_mode(Mode::Train);
        std::vector<float> max_abs_grad(net->parameters().size(), 0.0f);
        for (int batch = 0; batch < 5; ++batch) {
            net->zero_grads();
            auto x = rand_input(rng, 2, 32);
            auto target = rand_input(rng, 2, 32);
            Tape<float> tape;
            auto loss = ag::mse_loss(&tape, net->forward(&tape, x), target);
            tape.backward_from(loss);
            auto params = net->parameters();
            for (std::size_t i = 0; i < params.size(); ++i)
                if (params[i]->tensor->has_grad())
                    for (float g : params[i]->tensor->grad)
                        max_abs_grad[i] = std::max(max_abs_grad[i], std::abs(g));
        }
        auto params = net->parameters();
        for (std::size_t i = 0; i < params.size(); ++i) {
            INFO(net->architecture(), " param ", params[i]->name);
            CHECK(max_abs_grad[i] > 0.0f);
        }
    }
}

// ---------------------------------------------------------------------------
// determinism
// ---------------------------------------------------------------------------

TEST_CASE("eval mode forwards are bitwise deterministic") {
    Rng rng(12);
    ResNetConfig cfg = toy_resnet();
    cfg.use_batch_norm = true;
    cfg.zero_init_final = false;
    auto net = build_resnet<float>(cfg, InitScheme::ScaledNormal, rng);
    // prime the running stats with one training pass
    net->set_mode(Mode::Train);
    auto warm = rand_input(rng, 2, 32);
    net->forward(nullptr, warm);
    net->set_mode(Mode::Eval);
    auto x = rand_input(rng, 1, 48);
    const auto y1 = net->forward(nullptr, x);
    const auto y2 = net->forward(nullptr, x);
    CHECK(y1->data == y2->data);
}

TEST_CASE("train mode with equal dropout seeds is bitwise reproducible") {
    auto make_net = [] {
        Rng rng(13);
        ResNetConfig cfg;
        cfg.num_blocks = 2;
        cfg.channels = 8;
        cfg.kernel_size = 5;
        cfg.use_dropout = true;
        cfg.zero_init_final = false;
        auto net = build_resnet<float>(cfg, InitScheme::ScaledNormal, rng);
        net->seed_dropout(999);
        net->set_mode(Mode::Train);
        return net;
    };
    auto a = make_net();
    auto b = make_net();
    Rng rng(14);
    auto x = rand_input(rng, 2, 32);
    CHECK(a->forward(nullptr, x)->data == b->forward(nullptr, x)->data);
}

TEST_CASE("init schemes differ and unit-normal produces unit-scale weights") {
    Rng rng1(15), rng2(15);
    ResNetConfig cfg = toy_resnet();
    cfg.zero_init_final = false;
    auto scaled = build_resnet<float>(cfg, InitScheme::ScaledNormal, rng1);
    auto unit = build_resnet<float>(cfg, InitScheme::UnitNormal, rng2);
    double var_scaled = 0.0, var_unit = 0.0;
    std::size_t n = 0;
    auto ws = scaled->parameters()[2]->tensor;  // a block conv weight
    auto wu = unit->parameters()[2]->tensor;
    for (std::size_t i = 0; i < ws->size(); ++i) {
        var_scaled += double(ws->data[i]) * ws->data[i];
        var_unit += double(wu->data[i]) * wu->data[i];
        ++n;
    }
    var_scaled /= double(n);
    var_unit /= double(n);
    const double fan_in = 16.0 * 7.0;
    CHECK(var_unit == doctest::Approx(1.0).epsilon(0.25));
    CHECK(var_scaled == doctest::Approx(1.0 / fan_in).epsilon(0.25));
}

TEST_CASE("parameter names are unique and stable") {
    Rng rng(16);
    auto net = build_unet<float>(toy_unet(), InitScheme::ScaledNormal, rng);
    std::vector<std::string> names;
    for (auto* p : net->parameters()) names.push_back(p->name);
    auto sorted = names;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    CHECK(names.front() == "down0.w");
}
