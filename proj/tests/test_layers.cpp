#include <doctest.h>

#include <cmath>

#include "glamor/gradcheck.hpp"
#include "glamor/layers.hpp"

using namespace glamor;

namespace {

TensorD random_proj(const Shape& shape, uint64_t seed) {
    Rng rng(seed);
    return TensorD::uniform(shape, -1.0, 1.0, rng);
}

double project(const TensorD& y, const TensorD& r) {
    double s = 0.0;
    for (int64_t i = 0; i < y.size(); ++i)
        s += y[i] * r[i];
    return s;
}

// Naive six-loop same-padding 3x3 convolution.
TensorD conv_oracle(const Conv2d<double>& conv, const TensorD& x) {
    const int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t co = conv.out_channels();
    TensorD y({n, co, h, w});
    for (int64_t b = 0; b < n; ++b)
        for (int64_t o = 0; o < co; ++o)
            for (int64_t i = 0; i < h; ++i)
                for (int64_t j = 0; j < w; ++j) {
                    double s = conv.bias[o];
                    for (int64_t c = 0; c < ci; ++c)
                        for (int64_t u = 0; u < 3; ++u)
                            for (int64_t v = 0; v < 3; ++v) {
                                const int64_t ii = i + u - 1, jj = j + v - 1;
                                if (ii < 0 || ii >= h || jj < 0 || jj >= w)
                                    continue;
                                s += conv.weight.at(o, c, u, v) * x.at(b, c, ii, jj);
                            }
                    y.at(b, o, i, j) = s;
                }
    return y;
}

} // namespace

TEST_CASE("conv2d: zero kernel, identity kernel, oracle") {
    Rng rng(1);
    TensorD x = TensorD::uniform({1, 1, 4, 4}, -1.0, 1.0, rng);

    Conv2d<double> zero_conv(1, 2);
    zero_conv.bias[0] = 0.5;
    zero_conv.bias[1] = -0.25;
    TensorD y0 = zero_conv.forward(x, Mode::Eval);
    for (int64_t i = 0; i < 16; ++i) {
        CHECK(y0[i] == 0.5);
        CHECK(y0[16 + i] == -0.25);
    }

    Conv2d<double> id_conv(1, 1);
    id_conv.weight.at(0, 0, 1, 1) = 1.0; // center tap
    TensorD y1 = id_conv.forward(x, Mode::Eval);
    for (int64_t i = 0; i < x.size(); ++i)
        CHECK(y1[i] == doctest::Approx(x[i]).epsilon(1e-15));

    Conv2d<double> conv(2, 3);
    conv.init(rng);
    TensorD x2 = TensorD::uniform({1, 2, 5, 5}, -1.0, 1.0, rng);
    TensorD got = conv.forward(x2, Mode::Eval);
    TensorD want = conv_oracle(conv, x2);
    for (int64_t i = 0; i < got.size(); ++i)
        CHECK(std::abs(got[i] - want[i]) < 1e-12);

    CHECK_THROWS_AS(conv.forward(TensorD::zeros({1, 3, 4, 4}), Mode::Eval), ShapeError);
}

TEST_CASE("conv2d backward: zero grad, finite differences, state error") {
    Rng rng(2);
    Conv2d<double> conv(2, 2);
    conv.init(rng);
    CHECK_THROWS_AS(conv.backward(TensorD::zeros({1, 2, 4, 4})), StateError);

    TensorD x = TensorD::uniform({2, 2, 4, 4}, -1.0, 1.0, rng);
    conv.forward(x, Mode::Train);
    TensorD gx = conv.backward(TensorD::zeros({2, 2, 4, 4}));
    for (int64_t i = 0; i < gx.size(); ++i)
        CHECK(gx[i] == 0.0);
    for (int64_t i = 0; i < conv.grad_weight.size(); ++i)
        CHECK(conv.grad_weight[i] == 0.0);

    const TensorD r = random_proj({2, 2, 4, 4}, 17);
    auto loss = [&] { return project(conv.forward(x, Mode::GradCheck), r); };
    loss();
    TensorD gin = conv.backward(r);
    ParamRefs<double> params;
    conv.collect(params, "conv");
    CHECK(check_gradients<double>(params, loss).max_rel_err < 1e-6);
    CHECK(check_input_gradient<double>(x, gin, loss).max_rel_err < 1e-6);
}

TEST_CASE("maxpool: window max, tie-break, oracle, backward routing") {
    TensorD x({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    MaxPool2x2<double> pool;
    TensorD y = pool.forward(x, Mode::Train);
    CHECK(y.size() == 1);
    CHECK(y[0] == 4.0);

    // constant input: first cell of each window wins
    TensorD c = TensorD::full({1, 1, 4, 4}, 3.0);
    MaxPool2x2<double> pool2;
    pool2.forward(c, Mode::Train);
    CHECK(pool2.winner_indices()[0] == 0);
    CHECK(pool2.winner_indices()[1] == 2);

    Rng rng(3);
    TensorD big = TensorD::uniform({1, 2, 4, 4}, -1.0, 1.0, rng);
    MaxPool2x2<double> pool3;
    TensorD y3 = pool3.forward(big, Mode::Train);
    for (int64_t ch = 0; ch < 2; ++ch)
        for (int64_t i = 0; i < 2; ++i)
            for (int64_t j = 0; j < 2; ++j) {
                double m = -1e30;
                for (int64_t u = 0; u < 2; ++u)
                    for (int64_t v = 0; v < 2; ++v)
                        m = std::max(m, big.at(0, ch, 2 * i + u, 2 * j + v));
                CHECK(y3.at(0, ch, i, j) == m);
            }

    // all-ones upstream: each winner receives exactly one unit
    TensorD gy = TensorD::full({1, 2, 2, 2}, 1.0);
    TensorD gx = pool3.backward(gy);
    CHECK(sum_all(gx) == doctest::Approx(8.0));
    int64_t nonzero = 0;
    for (int64_t i = 0; i < gx.size(); ++i)
        nonzero += gx[i] != 0.0;
    CHECK(nonzero == 8);

    TensorD gz = pool3.backward(TensorD::zeros({1, 2, 2, 2}));
    CHECK(sum_all(gz) == 0.0);

    CHECK_THROWS_AS(pool3.forward(TensorD::zeros({1, 1, 3, 4}), Mode::Eval), ShapeError);
}

TEST_CASE("batchnorm: normalization, eval purity, batch-size guard") {
    Rng rng(4);
    BatchNorm2d<double> bn(2);
    TensorD x = TensorD::uniform({4, 2, 3, 3}, -2.0, 2.0, rng);
    TensorD y = bn.forward(x, Mode::Train);
    // gamma=1, beta=0: per-channel mean 0, var 1
    for (int64_t c = 0; c < 2; ++c) {
        double mean = 0.0, var = 0.0;
        for (int64_t n = 0; n < 4; ++n)
            for (int64_t p = 0; p < 9; ++p)
                mean += y.at(n, c, p / 3, p % 3);
        mean /= 36.0;
        for (int64_t n = 0; n < 4; ++n)
            for (int64_t p = 0; p < 9; ++p) {
                const double d = y.at(n, c, p / 3, p % 3) - mean;
                var += d * d;
            }
        var /= 36.0;
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::abs(var - 1.0) < 1e-5);
    }

    CHECK_THROWS_AS(bn.forward(TensorD::zeros({1, 2, 3, 3}), Mode::Train), StateError);

    // eval output depends only on running stats, not on batch composition
    BatchNorm2d<double> bn2(1);
    bn2.running_mean[0] = 0.5;
    bn2.running_var[0] = 2.0;
    TensorD a({2, 1, 1, 1}, {1.0, 9.0});
    TensorD b({2, 1, 1, 1}, {1.0, -3.0});
    CHECK(bn2.forward(a, Mode::Eval)[0] == bn2.forward(b, Mode::Eval)[0]);
}

TEST_CASE("relu and dropout semantics") {
    ReLU<double> relu;
    TensorD x({3}, {-1.0, 0.0, 2.0});
    TensorD y = relu.forward(x, Mode::Train);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 2.0);
    TensorD g = relu.backward(TensorD::full({3}, 1.0));
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
    CHECK(g[2] == 1.0);

    Dropout<double> drop(0.5);
    Rng rng(5);
    TensorD big = TensorD::full({1000}, 1.0);
    TensorD eval_out = drop.forward(big, Mode::Eval, nullptr);
    for (int64_t i = 0; i < big.size(); ++i)
        CHECK(eval_out[i] == 1.0);

    // inverted scaling: survivors are exactly 2.0, expectation ~1
    double mean = 0.0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) {
        TensorD out = drop.forward(big, Mode::Train, &rng);
        for (int64_t i = 0; i < out.size(); ++i) {
            CHECK((out[i] == 0.0 || out[i] == 2.0));
            mean += out[i];
        }
    }
    mean /= static_cast<double>(trials) * 1000.0;
    CHECK(std::abs(mean - 1.0) < 1e-2);

    CHECK_THROWS_AS(drop.forward(big, Mode::Train, nullptr), StateError);
}

TEST_CASE("linear and global pool") {
    Rng rng(6);
    Linear<double> lin(3, 2);
    lin.weight = TensorD({2, 3}, {1.0, 0.0, 0.0, 0.0, 1.0, 0.0});
    lin.bias = TensorD({2}, {0.5, -0.5});
    TensorD x({1, 3}, {1.0, 2.0, 3.0});
    TensorD y = lin.forward(x, Mode::Eval);
    CHECK(y.at(0, 0) == 1.5);
    CHECK(y.at(0, 1) == 1.5);

    GlobalAvgPool<double> pool;
    TensorD cmap = TensorD::full({1, 4, 3, 3}, 2.5);
    TensorD v = pool.forward(cmap, Mode::Eval);
    CHECK(v.shape() == Shape{1, 4});
    for (int64_t i = 0; i < 4; ++i)
        CHECK(v[i] == doctest::Approx(2.5));
}

TEST_CASE("cross entropy: analytic values and gradient") {
    TensorD uniform_logits = TensorD::zeros({2, 7});
    auto r1 = cross_entropy(uniform_logits, {3, 5});
    CHECK(r1.loss == doctest::Approx(std::log(7.0)).epsilon(1e-12));

    TensorD confident = TensorD::zeros({1, 7});
    confident.at(0, 2) = 20.0;
    auto r2 = cross_entropy(confident, {2});
    CHECK(r2.loss < 1e-6);

    Rng rng(7);
    TensorD logits = TensorD::uniform({3, 4}, -2.0, 2.0, rng);
    std::vector<int> labels{0, 3, 1};
    auto loss = [&] { return static_cast<double>(cross_entropy(logits, labels).loss); };
    TensorD grad = cross_entropy(logits, labels).grad_logits;
    CHECK(check_input_gradient<double>(logits, grad, loss).max_rel_err < 1e-6);

    CHECK_THROWS_AS(cross_entropy(logits, {0, 1, 9}), ValueError);
    CHECK_THROWS_AS(cross_entropy(logits, {0, 1}), ValueError);
}

TEST_CASE("sgd: basic step, zero grads, momentum recurrence") {
    TensorD p = TensorD::full({2}, 1.0);
    TensorD g = TensorD::full({2}, 1.0);
    ParamRefs<double> refs{{"p", &p, &g, true}};

    Sgd<double> plain(0.1, 0.0);
    plain.step(refs);
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-15));

    g = TensorD::zeros({2});
    plain.step(refs);
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-15));

    // two momentum steps by hand: v1=g, p1=p0-lr*g; v2=mu*v1+g, p2=p1-lr*v2
    TensorD p2 = TensorD::full({1}, 1.0);
    TensorD g2 = TensorD::full({1}, 1.0);
    ParamRefs<double> refs2{{"p", &p2, &g2, true}};
    Sgd<double> mom(0.1, 0.9);
    mom.step(refs2);
    CHECK(p2[0] == doctest::Approx(0.9).epsilon(1e-15));
    mom.step(refs2);
    CHECK(p2[0] == doctest::Approx(0.71).epsilon(1e-12));

    CHECK_THROWS_AS(Sgd<double>(0.0, 0.9), ConfigError);
    CHECK_THROWS_AS(Sgd<double>(0.1, 1.0), ConfigError);
}

TEST_CASE("finite differences cover batchnorm, linear, pool backwards") {
    Rng rng(8);
    BatchNorm2d<double> bn(2);
    bn.gamma = TensorD::uniform({2}, 0.5, 1.5, rng);
    bn.beta = TensorD::uniform({2}, -0.5, 0.5, rng);
    TensorD x = TensorD::uniform({3, 2, 2, 2}, -1.0, 1.0, rng);
    const TensorD r = random_proj({3, 2, 2, 2}, 23);
    auto loss = [&] { return project(bn.forward(x, Mode::GradCheck), r); };
    loss();
    TensorD gx = bn.backward(r);
    ParamRefs<double> params;
    bn.collect(params, "bn");
    CHECK(check_gradients<double>(params, loss).max_rel_err < 1e-6);
    CHECK(check_input_gradient<double>(x, gx, loss).max_rel_err < 1e-6);

    Linear<double> lin(5, 3);
    lin.init(rng);
    TensorD lx = TensorD::uniform({4, 5}, -1.0, 1.0, rng);
    const TensorD lr = random_proj({4, 3}, 29);
    auto lloss = [&] { return project(lin.forward(lx, Mode::GradCheck), lr); };
    lloss();
    TensorD lgx = lin.backward(lr);
    ParamRefs<double> lparams;
    lin.collect(lparams, "lin");
    CHECK(check_gradients<double>(lparams, lloss).max_rel_err < 1e-6);
    CHECK(check_input_gradient<double>(lx, lgx, lloss).max_rel_err < 1e-6);
}
