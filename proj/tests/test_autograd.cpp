#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bwe/autograd.hpp"
#include "bwe/rng.hpp"

#include "filter_reference.hpp"

#include <cmath>
#include <functional>

using namespace bwe;

namespace {

using DTensor = TensorPtr<double>;

DTensor rand_tensor(Rng& rng, int b, int c, int l, double lo = -2.0, double hi = 2.0,
                    bool requires_grad = true) {
    auto t = make_tensor<double>(b, c, l, requires_grad);
    for (auto& v : t->data) v = rng.uniform(lo, hi);
    return t;
}

// Central finite differences against the tape gradients. The loss closure is
// re-evaluated from scratch for every probe, so any internal randomness must
// be re-seeded inside it.
double gradcheck(const std::function<DTensor(Tape<double>*)>& loss_fn,
                 const std::vector<DTensor>& inputs, double h = 1e-5) {
    Tape<double> tape;
    const DTensor loss = loss_fn(&tape);
    tape.backward_from(loss);

    double worst = 0.0;
    for (const auto& input : inputs) {
        REQUIRE(input->has_grad());
        for (std::size_t i = 0; i < input->size(); ++i) {
            const double saved = input->data[i];
            input->data[i] = saved + h;
            const double up = loss_fn(nullptr)->data[0];
            input->data[i] = saved - h;
            const double down = loss_fn(nullptr)->data[0];
            input->data[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double g = input->grad[i];
            const double scale = std::max({1e-6, std::abs(fd), std::abs(g)});
            worst = std::max(worst, std::abs(fd - g) / scale);
        }
    }
    return worst;
}

}  // namespace

// ---------------------------------------------------------------------------
// conv1d
// ---------------------------------------------------------------------------

TEST_CASE("conv1d identity kernel is the identity") {
    Rng rng(1);
    auto x = rand_tensor(rng, 2, 3, 8);
    auto w = make_tensor<double>(3, 3, 1);
    for (int oc = 0; oc < 3; ++oc) w->row(oc, oc)[0] = 1.0;
    auto b = make_tensor<double>(1, 1, 3);
    const auto y = ag::conv1d<double>(nullptr, x, w, b, 1);
    CHECK(y->data == x->data);
}

TEST_CASE("conv1d hand example with same padding") {
    auto x = make_tensor<double>(1, 1, 4);
    x->data = {1, 2, 3, 4};
    auto w = make_tensor<double>(1, 1, 3);
    w->data = {1, 1, 1};
    auto b = make_tensor<double>(1, 1, 1);
    const auto y = ag::conv1d<double>(nullptr, x, w, b, 1);
    REQUIRE(y->length == 4);
    CHECK(y->data[0] == doctest::Approx(3.0));
    CHECK(y->data[1] == doctest::Approx(6.0));
    CHECK(y->data[2] == doctest::Approx(9.0));
    CHECK(y->data[3] == doctest::Approx(7.0));
}

TEST_CASE("conv1d shape contract: out_len = ceil(in_len / stride)") {
    Rng rng(2);
    for (int stride : {1, 2}) {
        for (int k : {1, 2, 3, 5, 7, 9}) {
            if (stride == 1 && k % 2 == 0) continue;
            for (int in_len = 1; in_len <= 64; ++in_len) {
                auto x = rand_tensor(rng, 1, 1, in_len, -1.0, 1.0, false);
                auto w = rand_tensor(rng, 1, 1, k, -1.0, 1.0, false);
                auto b = make_tensor<double>(1, 1, 1);
                const auto y = ag::conv1d<double>(nullptr, x, w, b, stride);
                CHECK(y->length == (in_len + stride - 1) / stride);
            }
        }
    }
}

TEST_CASE("conv1d rejects bad arguments") {
    Rng rng(3);
    auto x = rand_tensor(rng, 1, 2, 8);
    auto w = rand_tensor(rng, 4, 3, 3);  // in_ch mismatch
    auto b = make_tensor<double>(1, 1, 4);
    CHECK_THROWS(ag::conv1d<double>(nullptr, x, w, b, 1));
    auto w2 = rand_tensor(rng, 4, 2, 4);  // even k at stride 1
    auto b2 = make_tensor<double>(1, 1, 4);
    CHECK_THROWS(ag::conv1d<double>(nullptr, x, w2, b2, 1));
    auto w3 = rand_tensor(rng, 4, 2, 3);
    CHECK_THROWS(ag::conv1d<double>(nullptr, x, w3, b2, 3));  // bad stride
}

TEST_CASE("conv1d gradients match finite differences") {
    Rng rng(4);
    struct Case {
        int batch, in_ch, out_ch, len, k, stride;
    };
    const Case cases[] = {
        {1, 1, 1, 6, 3, 1},  {2, 3, 2, 8, 5, 1},  {1, 2, 3, 7, 9, 1},
        {1, 1, 1, 6, 3, 2},  {2, 3, 2, 8, 4, 2},  {1, 2, 3, 7, 2, 2},
        {1, 4, 1, 16, 7, 2}, {1, 1, 2, 1, 1, 1},  {1, 2, 2, 5, 1, 2},
    };
    for (const auto& c : cases) {
        auto x = rand_tensor(rng, c.batch, c.in_ch, c.len);
        auto w = rand_tensor(rng, c.out_ch, c.in_ch, c.k);
        auto b = rand_tensor(rng, 1, 1, c.out_ch);
        auto target = rand_tensor(rng, c.batch, c.out_ch,
                                  (c.len + c.stride - 1) / c.stride, -1.0, 1.0, false);
        auto loss_fn = [&](Tape<double>* tape) {
            return ag::mse_loss(tape, ag::conv1d(tape, x, w, b, c.stride), target);
        };
        INFO("case k=", c.k, " stride=", c.stride, " len=", c.len);
        CHECK(gradcheck(loss_fn, {x, w, b}) < 1e-4);
    }
}

// ---------------------------------------------------------------------------
// subpixel shuffle
// ---------------------------------------------------------------------------

TEST_CASE("subpixel shuffle weaves alternate channels") {
    auto x = make_tensor<double>(1, 2, 2);
    x->row(0, 0)[0] = 1;  // a
    x->row(0, 0)[1] = 3;  // b
    x->row(0, 1)[0] = 2;  // c
    x->row(0, 1)[1] = 4;  // d
    const auto y = ag::subpixel_shuffle<double>(nullptr, x, 2);
    REQUIRE(y->channels == 1);
    REQUIRE(y->length == 4);
    CHECK(y->data == std::vector<double>{1, 2, 3, 4});  // [a, c, b, d]
}

TEST_CASE("subpixel shuffle composed with its inverse is the identity") {
    Rng rng(5);
    for (int ch : {2, 4, 6}) {
        for (int len : {1, 3, 8}) {
            auto x = rand_tensor(rng, 2, ch, len, -1.0, 1.0, false);
            const auto y = ag::subpixel_unshuffle<double>(
                nullptr, ag::subpixel_shuffle<double>(nullptr, x, 2), 2);
            CHECK(y->data == x->data);
        }
    }
}

TEST_CASE("subpixel shuffle preserves the norm") {
    Rng rng(6);
    auto x = rand_tensor(rng, 1, 4, 9, -1.0, 1.0, false);
    const auto y = ag::subpixel_shuffle<double>(nullptr, x, 2);
    double nx = 0.0, ny = 0.0;
    for (double v : x->data) nx += v * v;
    for (double v : y->data) ny += v * v;
    CHECK(nx == doctest::Approx(ny).epsilon(1e-12));
}

TEST_CASE("subpixel shuffle rejects odd channel counts") {
    Rng rng(7);
    auto x = rand_tensor(rng, 1, 3, 4, -1.0, 1.0, false);
    CHECK_THROWS(ag::subpixel_shuffle<double>(nullptr, x, 2));
}

TEST_CASE("subpixel shuffle gradient matches finite differences") {
    Rng rng(8);
    auto x = rand_tensor(rng, 2, 4, 5);
    auto target = rand_tensor(rng, 2, 2, 10, -1.0, 1.0, false);
    auto loss_fn = [&](Tape<double>* tape) {
        return ag::mse_loss(tape, ag::subpixel_shuffle(tape, x, 2), target);
    };
    CHECK(gradcheck(loss_fn, {x}) < 1e-4);
}

// ---------------------------------------------------------------------------
// relu
// ---------------------------------------------------------------------------

TEST_CASE("relu clamps negatives") {
    auto x = make_tensor<double>(1, 1, 3);
    x->data = {-1.0, 0.0, 2.0};
    const auto y = ag::relu<double>(nullptr, x);
    CHECK(y->data == std::vector<double>{0.0, 0.0, 2.0});

    auto pos = make_tensor<double>(1, 1, 3);
    pos->data = {0.5, 1.0, 3.0};
    CHECK(ag::relu<double>(nullptr, pos)->data == pos->data);
}

TEST_CASE("relu gradient is the positive-side indicator") {
    Rng rng(9);
    auto x = rand_tensor(rng, 2, 2, 16);
    for (auto& v : x->data)  // keep probes away from the kink
        if (std::abs(v) < 0.05) v = v < 0 ? -0.05 : 0.05;
    auto target = rand_tensor(rng, 2, 2, 16, -1.0, 1.0, false);
    auto loss_fn = [&](Tape<double>* tape) {
        return ag::mse_loss(tape, ag::relu(tape, x), target);
    };
    CHECK(gradcheck(loss_fn, {x}) < 1e-4);

    x->zero_grad();
    Tape<double> tape;
    auto y = ag::relu(&tape, x);
    auto loss = ag::sum_all(&tape, y);
    tape.backward_from(loss);
    for (std::size_t i = 0; i < x->size(); ++i)
        CHECK(x->grad[i] == (x->data[i] > 0.0 ? 1.0 : 0.0));
}

// ---------------------------------------------------------------------------
// batch norm
// ---------------------------------------------------------------------------

TEST_CASE("batch norm training output has zero mean and unit variance") {
    Rng rng(10);
    const int B = 4, C = 3, L = 64;
    auto x = rand_tensor(rng, B, C, L, -3.0, 5.0, false);
    auto gamma = make_tensor<double>(1, 1, C);
    auto beta = make_tensor<double>(1, 1, C);
    std::fill(gamma->data.begin(), gamma->data.end(), 1.0);
    BnRunningStats<double> stats(C);
    const auto y = ag::batch_norm<double>(nullptr, x, gamma, beta, stats, Mode::Train);
    for (int c = 0; c < C; ++c) {
        double mean = 0.0, var = 0.0;
        for (int b = 0; b < B; ++b)
            for (int t = 0; t < L; ++t) mean += y->row(b, c)[t];
        mean /= B * L;
        for (int b = 0; b < B; ++b)
            for (int t = 0; t < L; ++t) {
                const double d = y->row(b, c)[t] - mean;
                var += d * d;
            }
        var /= B * L;
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::abs(var - 1.0) < 1e-5);
    }
    CHECK(stats.batches_tracked == 1);
}

TEST_CASE("batch norm eval with unit running stats is the identity up to eps") {
    Rng rng(11);
    const int C = 2;
    auto x = rand_tensor(rng, 2, C, 8, -1.0, 1.0, false);
    auto gamma = make_tensor<double>(1, 1, C);
    auto beta = make_tensor<double>(1, 1, C);
    std::fill(gamma->data.begin(), gamma->data.end(), 1.0);
    BnRunningStats<double> stats(C);  // mean 0, var 1
    stats.batches_tracked = 1;
    const auto y = ag::batch_norm<double>(nullptr, x, gamma, beta, stats, Mode::Eval);
    for (std::size_t i = 0; i < x->size(); ++i)
        CHECK(y->data[i] == doctest::Approx(x->data[i]).epsilon(1e-4));
}

TEST_CASE("batch norm error paths") {
    Rng rng(12);
    auto x = rand_tensor(rng, 1, 2, 4, -1.0, 1.0, false);
    auto gamma = make_tensor<double>(1, 1, 2);
    auto beta = make_tensor<double>(1, 1, 2);
    BnRunningStats<double> stats(2);
    CHECK_THROWS(ag::batch_norm<double>(nullptr, x, gamma, beta, stats, Mode::Eval));
    auto tiny = rand_tensor(rng, 1, 2, 1, -1.0, 1.0, false);
    CHECK_THROWS(ag::batch_norm<double>(nullptr, tiny, gamma, beta, stats, Mode::Train));
}

TEST_CASE("batch norm gradients match finite differences") {
    Rng rng(13);
    auto x = rand_tensor(rng, 2, 2, 6);
    auto gamma = rand_tensor(rng, 1, 1, 2, 0.5, 1.5);
    auto beta = rand_tensor(rng, 1, 1, 2, -0.5, 0.5);
    auto target = rand_tensor(rng, 2, 2, 6, -1.0, 1.0, false);
    auto loss_fn = [&](Tape<double>* tape) {
        BnRunningStats<double> stats(2);  // fresh stats; train path ignores them
        return ag::mse_loss(
            tape, ag::batch_norm(tape, x, gamma, beta, stats, Mode::Train), target);
    };
    CHECK(gradcheck(loss_fn, {x, gamma, beta}) < 1e-4);
}

// ---------------------------------------------------------------------------
// dropout
// ---------------------------------------------------------------------------

TEST_CASE("dropout eval mode and p=0 are exact identities") {
    Rng rng(14);
    Rng mask_rng(15);
    auto x = rand_tensor(rng, 1, 2, 32, -1.0, 1.0, false);
    CHECK(ag::dropout<double>(nullptr, x, 0.5, Mode::Eval, mask_rng)->data == x->data);
    CHECK(ag::dropout<double>(nullptr, x, 0.0, Mode::Train, mask_rng)->data == x->data);
    CHECK_THROWS(ag::dropout<double>(nullptr, x, 1.0, Mode::Train, mask_rng));
    CHECK_THROWS(ag::dropout<double>(nullptr, x, -0.1, Mode::Train, mask_rng));
}

TEST_CASE("dropout keeps half the units and the expected value") {
    Rng rng(16);
    const int n = 1 << 20;
    auto x = make_tensor<double>(1, 1, n);
    std::fill(x->data.begin(), x->data.end(), 1.0);
    Rng mask_rng(17);
    const auto y = ag::dropout<double>(nullptr, x, 0.5, Mode::Train, mask_rng);
    std::size_t survivors = 0;
    double sum = 0.0;
    for (double v : y->data) {
        survivors += v != 0.0;
        sum += v;
    }
    const double survive_frac = double(survivors) / n;
    CHECK(std::abs(survive_frac - 0.5) < 0.002);
    CHECK(std::abs(sum / n - 1.0) < 0.01);  // inverted scaling keeps E[y] = E[x]
}

TEST_CASE("dropout gradient with a fixed mask matches finite differences") {
    Rng rng(18);
    auto x = rand_tensor(rng, 1, 2, 12);
    auto target = rand_tensor(rng, 1, 2, 12, -1.0, 1.0, false);
    auto loss_fn = [&](Tape<double>* tape) {
        Rng mask_rng(99);  // same mask on every evaluation
        return ag::mse_loss(
            tape, ag::dropout(tape, x, 0.4, Mode::Train, mask_rng), target);
    };
    CHECK(gradcheck(loss_fn, {x}) < 1e-4);
}

// ---------------------------------------------------------------------------
// mse
// ---------------------------------------------------------------------------

TEST_CASE("mse examples") {
    auto a = make_tensor<double>(1, 1, 2);
    a->data = {1.0, 1.0};
    auto b = make_tensor<double>(1, 1, 2);
    CHECK(ag::mse_loss<double>(nullptr, a, a)->data[0] == 0.0);
    CHECK(ag::mse_loss<double>(nullptr, a, b)->data[0] == doctest::Approx(1.0));
    auto c = make_tensor<double>(1, 1, 3);
    CHECK_THROWS(ag::mse_loss<double>(nullptr, a, c));
}

TEST_CASE("mse gradient matches finite differences tightly") {
    Rng rng(19);
    auto pred = rand_tensor(rng, 2, 2, 9);
    auto target = rand_tensor(rng, 2, 2, 9, -1.0, 1.0, false);
    auto loss_fn = [&](Tape<double>* tape) { return ag::mse_loss(tape, pred, target); };
    CHECK(gradcheck(loss_fn, {pred}, 1e-6) < 1e-6);
}

// ---------------------------------------------------------------------------
// tape mechanics
// ---------------------------------------------------------------------------

TEST_CASE("backward of sum gives all-ones gradient") {
    Rng rng(20);
    auto x = rand_tensor(rng, 2, 3, 4);
    Tape<double> tape;
    auto loss = ag::sum_all(&tape, x);
    tape.backward_from(loss);
    for (double g : x->grad) CHECK(g == 1.0);
}

TEST_CASE("fan-out accumulates both paths") {
    Rng rng(21);
    auto x = rand_tensor(rng, 1, 1, 8);
    auto w = rand_tensor(rng, 1, 1, 3);
    auto b = rand_tensor(rng, 1, 1, 1);
    auto target = rand_tensor(rng, 1, 1, 8, -1.0, 1.0, false);
    auto loss_fn = [&](Tape<double>* tape) {
        auto y = ag::relu(tape, ag::conv1d(tape, x, w, b, 1));
        auto z = ag::add(tape, x, y);  // x used twice
        return ag::mse_loss(tape, z, target);
    };
    CHECK(gradcheck(loss_fn, {x, w, b}) < 1e-4);
}

TEST_CASE("disconnected parameters keep a zero gradient") {
    Rng rng(22);
    auto x = rand_tensor(rng, 1, 1, 4);
    auto orphan = rand_tensor(rng, 1, 1, 4);
    Tape<double> tape;
    auto loss = ag::sum_all(&tape, x);
    tape.backward_from(loss);
    CHECK_FALSE(orphan->has_grad());
}

TEST_CASE("backward rejects non-scalar losses and double invocation") {
    Rng rng(23);
    auto x = rand_tensor(rng, 1, 1, 4);
    Tape<double> tape;
    auto y = ag::relu(&tape, x);
    CHECK_THROWS(tape.backward_from(y));
    auto loss = ag::sum_all(&tape, y);
    tape.backward_from(loss);
    CHECK_THROWS(tape.backward_from(loss));
    tape.reset();
}

TEST_CASE("composed network gradcheck: conv-relu-conv with concat and shuffle") {
    Rng rng(24);
    auto x = rand_tensor(rng, 1, 2, 8);
    auto w1 = rand_tensor(rng, 4, 2, 3);
    auto b1 = rand_tensor(rng, 1, 1, 4);
    auto w2 = rand_tensor(rng, 2, 6, 3);
    auto b2 = rand_tensor(rng, 1, 1, 2);
    auto target = rand_tensor(rng, 1, 1, 16, -1.0, 1.0, false);
    auto loss_fn = [&](Tape<double>* tape) {
        auto h = ag::relu(tape, ag::conv1d(tape, x, w1, b1, 1));
        auto cat = ag::concat_channels(tape, h, x);  // 6 channels
        auto y = ag::conv1d(tape, cat, w2, b2, 1);
        auto up = ag::subpixel_shuffle(tape, y, 2);  // 1 channel, len 16
        return ag::mse_loss(tape, up, target);
    };
    CHECK(gradcheck(loss_fn, {x, w1, b1, w2, b2}) < 1e-4);
}

TEST_CASE("stride-2 downsample + shuffle round trip gradcheck") {
    Rng rng(25);
    auto x = rand_tensor(rng, 1, 2, 12);
    auto w1 = rand_tensor(rng, 4, 2, 5);
    auto b1 = rand_tensor(rng, 1, 1, 4);
    auto target = rand_tensor(rng, 1, 2, 12, -1.0, 1.0, false);
    auto loss_fn = [&](Tape<double>* tape) {
        auto down = ag::conv1d(tape, x, w1, b1, 2);        // (1,4,6)
        auto up = ag::subpixel_shuffle(tape, down, 2);     // (1,2,12)
        auto out = ag::add_scaled(tape, x, up, 0.3);
        return ag::mse_loss(tape, out, target);
    };
    CHECK(gradcheck(loss_fn, {x, w1, b1}) < 1e-4);
}

// ---------------------------------------------------------------------------
// adam
// ---------------------------------------------------------------------------

TEST_CASE("first adam step moves by -lr for unit gradient") {
    Parameter<double> p("p", make_tensor<double>(1, 1, 1));
    p.tensor->data[0] = 1.0;
    p.tensor->ensure_grad();
    p.tensor->grad[0] = 1.0;
    std::vector<Parameter<double>*> params = {&p};
    adam_step<double>(params, 5e-4);
    CHECK(std::abs(p.tensor->data[0] - (1.0 - 5e-4)) < 1e-9);
    CHECK(p.step_count == 1);
}

TEST_CASE("zero gradient leaves the parameter unchanged") {
    Parameter<double> p("p", make_tensor<double>(1, 1, 3));
    p.tensor->data = {0.5, -0.25, 2.0};
    p.tensor->ensure_grad();
    std::vector<Parameter<double>*> params = {&p};
    adam_step<double>(params, 5e-4);
    CHECK(p.tensor->data == std::vector<double>{0.5, -0.25, 2.0});
}

TEST_CASE("two constant-gradient steps reproduce the hand-rolled trace") {
    Parameter<double> p("p", make_tensor<double>(1, 1, 1));
    p.tensor->data[0] = 1.0;
    std::vector<Parameter<double>*> params = {&p};
    for (int step = 0; step < 2; ++step) {
        p.tensor->ensure_grad();
        p.tensor->grad[0] = 0.25;
        adam_step<double>(params, 5e-4);
        CHECK(p.tensor->data[0] == doctest::Approx(kAdamTwoStepTrace[step]).epsilon(1e-12));
        p.tensor->zero_grad();
    }
}

TEST_CASE("adam_step demands populated gradients") {
    Parameter<double> p("p", make_tensor<double>(1, 1, 2));
    std::vector<Parameter<double>*> params = {&p};
    CHECK_THROWS(adam_step<double>(params, 1e-3));
}
