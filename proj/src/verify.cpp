#include "glamor/verify.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "glamor/gradcheck.hpp"
#include "glamor/metrics.hpp"
#include "glamor/model.hpp"

namespace glamor {

namespace {

using Clock = std::chrono::steady_clock;

struct Battery {
    VerifyReport report;
    const VerifyOptions& opts;

    explicit Battery(const VerifyOptions& o) : opts(o) {}

    template <class Fn>
    void run(const std::string& name, Fn&& fn) {
        VerifyCheck check;
        check.name = name;
        const auto t0 = Clock::now();
        try {
            std::ostringstream detail;
            check.passed = fn(detail);
            check.detail = detail.str();
        } catch (const std::exception& e) {
            check.passed = false;
            check.detail = std::string("exception: ") + e.what();
        }
        check.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        report.checks.push_back(std::move(check));
    }
};

// Fixed random projection turns a tensor-valued output into a scalar loss
// that is sensitive to every output entry.
TensorD projection_like(const Shape& shape, uint64_t seed) {
    Rng rng(seed);
    return TensorD::uniform(shape, -1.0, 1.0, rng);
}

double project(const TensorD& y, const TensorD& r) {
    double s = 0.0;
    for (int64_t i = 0; i < y.size(); ++i)
        s += static_cast<double>(y[i]) * r[i];
    return s;
}

// Zero-initialized biases can leave relu preactivations exactly at the kink
// (a zeroed sample hits bias-only inputs), where central differences and the
// one-sided analytic derivative legitimately disagree. Small random biases
// keep the checked point off the kink.
void nudge_biases(const ParamRefs<double>& params, Rng& rng) {
    for (const auto& p : params) {
        if (!p.trainable)
            continue;
        if (p.name.ends_with(".bias") || p.name.ends_with(".beta"))
            for (auto& v : p.value->vec())
                v += rng.uniform(0.01, 0.1) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
    }
}

// Distinct values with pairwise gaps >= 0.05 so max-pool winners and relu
// signs cannot flip under the finite-difference step.
TensorD distinct_values(const Shape& shape, Rng& rng) {
    TensorD t(shape);
    std::vector<double> vals(static_cast<size_t>(t.size()));
    for (size_t i = 0; i < vals.size(); ++i)
        vals[i] = 0.05 * static_cast<double>(i + 1) - 0.025 * static_cast<double>(vals.size());
    rng.shuffle(vals);
    for (int64_t i = 0; i < t.size(); ++i)
        t[i] = vals[static_cast<size_t>(i)];
    return t;
}

bool check_conv_backward(std::ostream& detail, const VerifyOptions& opts) {
    double worst = 0.0;
    for (int seed = 0; seed < opts.fd_seeds; ++seed) {
        Rng rng(100 + static_cast<uint64_t>(seed));
        Conv2d<double> conv(2, 3);
        conv.init(rng);
        TensorD x = TensorD::uniform({2, 2, 5, 5}, -1.0, 1.0, rng);
        const TensorD r = projection_like({2, 3, 5, 5}, 7 + static_cast<uint64_t>(seed));

        auto loss = [&] { return project(conv.forward(x, Mode::GradCheck), r); };
        loss();
        TensorD gx = conv.backward(r);
        if (opts.fault == FaultInjection::ConvBackward)
            conv.grad_weight[0] += 1e-3;

        ParamRefs<double> params;
        conv.collect(params, "conv");
        worst = std::max(worst, check_gradients<double>(params, loss).max_rel_err);
        worst = std::max(worst, check_input_gradient<double>(x, gx, loss).max_rel_err);
    }
    detail << "max rel err " << worst;
    return worst < 1e-6;
}

bool check_linear_backward(std::ostream& detail, int seeds) {
    double worst = 0.0;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(200 + static_cast<uint64_t>(seed));
        Linear<double> lin(6, 4);
        lin.init(rng);
        TensorD x = TensorD::uniform({3, 6}, -1.0, 1.0, rng);
        const TensorD r = projection_like({3, 4}, 11 + static_cast<uint64_t>(seed));
        auto loss = [&] { return project(lin.forward(x, Mode::GradCheck), r); };
        loss();
        TensorD gx = lin.backward(r);
        ParamRefs<double> params;
        lin.collect(params, "linear");
        worst = std::max(worst, check_gradients<double>(params, loss).max_rel_err);
        worst = std::max(worst, check_input_gradient<double>(x, gx, loss).max_rel_err);
    }
    detail << "max rel err " << worst;
    return worst < 1e-6;
}

bool check_batchnorm_backward(std::ostream& detail, int seeds) {
    double worst = 0.0;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(300 + static_cast<uint64_t>(seed));
        BatchNorm2d<double> bn(3);
        // non-trivial gamma/beta
        bn.gamma = TensorD::uniform({3}, 0.5, 1.5, rng);
        bn.beta = TensorD::uniform({3}, -0.5, 0.5, rng);
        TensorD x = TensorD::uniform({4, 3, 3, 3}, -1.0, 1.0, rng);
        const TensorD r = projection_like({4, 3, 3, 3}, 13 + static_cast<uint64_t>(seed));
        auto loss = [&] { return project(bn.forward(x, Mode::GradCheck), r); };
        loss();
        TensorD gx = bn.backward(r);
        ParamRefs<double> params;
        bn.collect(params, "bn");
        worst = std::max(worst, check_gradients<double>(params, loss).max_rel_err);
        worst = std::max(worst, check_input_gradient<double>(x, gx, loss).max_rel_err);
    }
    detail << "max rel err " << worst;
    return worst < 1e-6;
}

bool check_maxpool_backward(std::ostream& detail, int seeds) {
    double worst = 0.0;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(400 + static_cast<uint64_t>(seed));
        MaxPool2x2<double> pool;
        TensorD x = distinct_values({2, 2, 4, 4}, rng);
        const TensorD r = projection_like({2, 2, 2, 2}, 17 + static_cast<uint64_t>(seed));
        auto loss = [&] { return project(pool.forward(x, Mode::GradCheck), r); };
        loss();
        TensorD gx = pool.backward(r);
        worst = std::max(worst, check_input_gradient<double>(x, gx, loss).max_rel_err);
    }
    detail << "max rel err " << worst;
    return worst < 1e-6;
}

bool check_relu_backward(std::ostream& detail, int seeds) {
    double worst = 0.0;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(500 + static_cast<uint64_t>(seed));
        ReLU<double> relu;
        TensorD x({2, 10});
        for (int64_t i = 0; i < x.size(); ++i) {
            const double mag = rng.uniform(0.1, 1.0);
            x[i] = rng.bernoulli(0.5) ? mag : -mag;
        }
        const TensorD r = projection_like({2, 10}, 19 + static_cast<uint64_t>(seed));
        auto loss = [&] { return project(relu.forward(x, Mode::GradCheck), r); };
        loss();
        TensorD gx = relu.backward(r);
        worst = std::max(worst, check_input_gradient<double>(x, gx, loss).max_rel_err);
    }
    detail << "max rel err " << worst;
    return worst < 1e-6;
}

bool check_dropout(std::ostream& detail, int seeds) {
    // Eval identity, plus backward consistency against the cached mask.
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(600 + static_cast<uint64_t>(seed));
        Dropout<double> drop(0.5);
        TensorD x = TensorD::uniform({4, 8}, -1.0, 1.0, rng);
        TensorD y_eval = drop.forward(x, Mode::Eval, nullptr);
        for (int64_t i = 0; i < x.size(); ++i)
            if (y_eval[i] != x[i]) {
                detail << "eval mode not identity at " << i;
                return false;
            }
        Rng mask_rng(77);
        TensorD y = drop.forward(x, Mode::Train, &mask_rng);
        TensorD gy = TensorD::uniform({4, 8}, -1.0, 1.0, rng);
        TensorD gx = drop.backward(gy);
        for (int64_t i = 0; i < x.size(); ++i) {
            const double expect = x[i] == 0.0 ? 0.0 : y[i] / x[i] * gy[i];
            if (std::abs(gx[i] - expect) > 1e-12) {
                detail << "backward does not match mask at " << i;
                return false;
            }
        }
    }
    detail << "eval identity + mask routing";
    return true;
}

bool check_global_pool_backward(std::ostream& detail, int seeds) {
    double worst = 0.0;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(700 + static_cast<uint64_t>(seed));
        GlobalAvgPool<double> pool;
        TensorD x = TensorD::uniform({2, 3, 4, 4}, -1.0, 1.0, rng);
        const TensorD r = projection_like({2, 3}, 23 + static_cast<uint64_t>(seed));
        auto loss = [&] { return project(pool.forward(x, Mode::GradCheck), r); };
        loss();
        TensorD gx = pool.backward(r);
        worst = std::max(worst, check_input_gradient<double>(x, gx, loss).max_rel_err);
    }
    detail << "max rel err " << worst;
    return worst < 1e-6;
}

bool check_cross_entropy_grad(std::ostream& detail, int seeds) {
    double worst = 0.0;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(800 + static_cast<uint64_t>(seed));
        TensorD logits = TensorD::uniform({4, 5}, -2.0, 2.0, rng);
        std::vector<int> labels;
        for (int i = 0; i < 4; ++i)
            labels.push_back(static_cast<int>(rng.below(5)));
        auto loss = [&] { return static_cast<double>(cross_entropy(logits, labels).loss); };
        TensorD grad = cross_entropy(logits, labels).grad_logits;
        worst = std::max(worst, check_input_gradient<double>(logits, grad, loss).max_rel_err);
    }
    detail << "max rel err " << worst;
    return worst < 1e-6;
}

bool check_encoder_e2e(std::ostream& detail, int seeds) {
    double worst = 0.0;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(900 + static_cast<uint64_t>(seed));
        CnnEncoder<double> enc(3, {2, 2, 2, 2, 2});
        enc.init(rng);
        ParamRefs<double> nudge;
        enc.collect(nudge, "enc");
        nudge_biases(nudge, rng);
        TensorD x = TensorD::uniform({2, 3, 16, 16}, 0.0, 1.0, rng);
        const TensorD r = projection_like({2, 2, 1, 1}, 29 + static_cast<uint64_t>(seed));
        auto loss = [&] { return project(enc.forward(x, Mode::GradCheck), r); };
        loss();
        enc.backward(r);
        ParamRefs<double> params;
        enc.collect(params, "enc");
        worst = std::max(worst, check_gradients<double>(params, loss).max_rel_err);
    }
    detail << "max rel err " << worst;
    return worst < 1e-5;
}

bool check_gla_backward(std::ostream& detail, int seeds) {
    double worst = 0.0;
    for (int seed = 0; seed < seeds; ++seed) {
        for (AttentionKind kind :
             {AttentionKind::GlobalLocal, AttentionKind::ContextOnly, AttentionKind::None}) {
            Rng rng(1000 + static_cast<uint64_t>(seed));
            GlobalLocalAttention<double> gla(kind, 4, 6);
            gla.init(rng);
            TensorD v_f = TensorD::uniform({2, 4}, -1.0, 1.0, rng);
            TensorD f_c = TensorD::uniform({2, 4, 2, 2}, -1.0, 1.0, rng);
            const TensorD r = projection_like({2, 4}, 31 + static_cast<uint64_t>(seed));
            auto loss = [&] {
                return project(gla.forward(v_f, f_c, Mode::GradCheck).context_vector, r);
            };
            loss();
            auto grads = gla.backward(r);
            ParamRefs<double> params;
            gla.collect(params, "gla");
            worst = std::max(worst,
                             check_gradients<double>(params, loss, 1e-5, 0, 1e-6).max_rel_err);
            worst = std::max(worst,
                             check_input_gradient<double>(f_c, grads.grad_context_features, loss,
                                                          1e-5, 0, 1e-6)
                                 .max_rel_err);
            if (kind == AttentionKind::GlobalLocal)
                worst = std::max(worst,
                                 check_input_gradient<double>(v_f, grads.grad_face_vector, loss,
                                                              1e-5, 0, 1e-6)
                                     .max_rel_err);
        }
    }
    detail << "max rel err " << worst;
    return worst < 1e-6;
}

bool check_fusion_backward(std::ostream& detail, int seeds) {
    double worst = 0.0;
    for (int seed = 0; seed < seeds; ++seed) {
        for (FusionKind kind : {FusionKind::Net, FusionKind::Add, FusionKind::Max}) {
            Rng rng(1100 + static_cast<uint64_t>(seed));
            FusionModule<double> fusion(kind, 8, 3, 8, 0.5);
            fusion.init(rng);
            TensorD v_f = TensorD::uniform({2, 8}, -1.0, 1.0, rng);
            TensorD v_c = TensorD::uniform({2, 8}, -1.0, 1.0, rng);
            if (kind == FusionKind::Max) {
                // keep elementwise pairs clear of ties so the winner cannot
                // flip under the finite-difference step
                v_f = distinct_values({2, 8}, rng);
                v_c = v_f;
                for (int64_t i = 0; i < v_c.size(); ++i)
                    v_c[i] += (i % 2 == 0 ? 0.017 : -0.017);
            }
            const TensorD r = projection_like({2, 3}, 37 + static_cast<uint64_t>(seed));
            auto loss = [&] {
                return project(fusion.forward(v_f, v_c, Mode::GradCheck, nullptr).logits, r);
            };
            loss();
            auto grads = fusion.backward(r);
            ParamRefs<double> params;
            fusion.collect(params, "fusion");
            worst = std::max(worst,
                             check_gradients<double>(params, loss, 1e-5, 0, 1e-6).max_rel_err);
            worst = std::max(worst, check_input_gradient<double>(v_f, grads.grad_face, loss, 1e-5,
                                                                 0, 1e-6)
                                        .max_rel_err);
            worst = std::max(worst, check_input_gradient<double>(v_c, grads.grad_context, loss,
                                                                 1e-5, 0, 1e-6)
                                        .max_rel_err);
        }
    }
    detail << "max rel err " << worst;
    return worst < 1e-6;
}

bool check_model_e2e(std::ostream& detail, int seeds) {
    double worst = 0.0;
    for (int seed = 0; seed < seeds; ++seed) {
        ModelConfig cfg = reduced_model_config();
        GlamorNet<double> net(cfg);
        Rng rng(1200 + static_cast<uint64_t>(seed));
        net.init(rng);
        nudge_biases(net.named_params(), rng);
        TensorD face = TensorD::uniform({2, 3, 16, 16}, 0.0, 1.0, rng);
        TensorD ctx = TensorD::uniform({2, 3, 32, 32}, 0.0, 1.0, rng);
        std::vector<int> labels = {static_cast<int>(rng.below(3)), static_cast<int>(rng.below(3))};
        auto loss = [&] {
            auto out = net.forward(face, ctx, Mode::GradCheck, nullptr);
            return static_cast<double>(cross_entropy(out.logits, labels).loss);
        };
        auto out = net.forward(face, ctx, Mode::GradCheck, nullptr);
        auto ce = cross_entropy(out.logits, labels);
        net.backward(ce.grad_logits);
        worst = std::max(
            worst,
            check_gradients<double>(net.named_params(), loss, 1e-5, 64, 1e-5).max_rel_err);
    }
    detail << "max rel err " << worst;
    return worst < 1e-5;
}

bool check_softmax_invariants(std::ostream& detail) {
    Rng rng(42);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int64_t len = 2 + static_cast<int64_t>(rng.below(30));
        TensorD x = TensorD::uniform({len}, -30.0, 30.0, rng);
        TensorD y = softmax(x, 0);
        double s = 0.0;
        for (int64_t i = 0; i < len; ++i) {
            if (y[i] <= 0.0 || y[i] > 1.0) {
                detail << "softmax output outside (0,1]";
                return false;
            }
            s += y[i];
        }
        worst = std::max(worst, std::abs(s - 1.0));
    }
    // huge inputs must not overflow
    TensorD big = TensorD::full({2}, 1000.0);
    TensorD yb = softmax(big, 0);
    if (!yb.all_finite() || std::abs(yb[0] - 0.5) > 1e-12) {
        detail << "softmax unstable on large inputs";
        return false;
    }
    detail << "max |sum-1| " << worst;
    return worst < 1e-6;
}

bool check_matmul_oracle(std::ostream& detail, int seeds) {
    double worst = 0.0;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(1300 + static_cast<uint64_t>(seed));
        TensorD a = TensorD::uniform({5, 4}, -1.0, 1.0, rng);
        TensorD b = TensorD::uniform({4, 3}, -1.0, 1.0, rng);
        TensorD c = matmul(a, b);
        for (int64_t i = 0; i < 5; ++i)
            for (int64_t j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int64_t kk = 0; kk < 4; ++kk)
                    s += a.at(i, kk) * b.at(kk, j);
                worst = std::max(worst, std::abs(s - c.at(i, j)));
            }
    }
    detail << "max abs err " << worst;
    return worst < 1e-12;
}

bool check_conv_oracle(std::ostream& detail, int seeds) {
    double worst = 0.0;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(1400 + static_cast<uint64_t>(seed));
        Conv2d<double> conv(2, 3);
        conv.init(rng);
        TensorD x = TensorD::uniform({1, 2, 5, 5}, -1.0, 1.0, rng);
        TensorD y = conv.forward(x, Mode::Eval);
        for (int64_t o = 0; o < 3; ++o)
            for (int64_t i = 0; i < 5; ++i)
                for (int64_t j = 0; j < 5; ++j) {
                    double s = conv.bias[o];
                    for (int64_t c = 0; c < 2; ++c)
                        for (int64_t u = 0; u < 3; ++u)
                            for (int64_t v = 0; v < 3; ++v) {
                                const int64_t ii = i + u - 1, jj = j + v - 1;
                                if (ii < 0 || ii >= 5 || jj < 0 || jj >= 5)
                                    continue;
                                s += conv.weight.at(o, c, u, v) * x.at(0, c, ii, jj);
                            }
                    worst = std::max(worst, std::abs(s - y.at(0, o, i, j)));
                }
    }
    detail << "max abs err " << worst;
    return worst < 1e-12;
}

bool check_attention_invariants(std::ostream& detail) {
    Rng rng(4242);
    double worst_sum = 0.0, worst_oracle = 0.0, worst_shift = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int64_t n = 1 + static_cast<int64_t>(rng.below(3));
        const int64_t m = 2 + static_cast<int64_t>(rng.below(10));
        const int64_t d = 1 + static_cast<int64_t>(rng.below(6));
        TensorD scores = TensorD::uniform({n, m}, -20.0, 20.0, rng);
        TensorD cells = TensorD::uniform({n, m, d}, -2.0, 2.0, rng);
        auto res = attend(scores, cells);
        for (int64_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (int64_t c = 0; c < m; ++c)
                s += res.attention.at(i, c);
            worst_sum = std::max(worst_sum, std::abs(s - 1.0));
        }
        // double-loop oracle + convex hull bound
        for (int64_t i = 0; i < n; ++i)
            for (int64_t c = 0; c < d; ++c) {
                double s = 0.0, lo = cells.at(i, 0, c), hi = lo;
                for (int64_t cell = 0; cell < m; ++cell) {
                    s += res.attention.at(i, cell) * cells.at(i, cell, c);
                    lo = std::min(lo, cells.at(i, cell, c));
                    hi = std::max(hi, cells.at(i, cell, c));
                }
                worst_oracle = std::max(worst_oracle,
                                        std::abs(s - res.context_vector.at(i, c)));
                if (res.context_vector.at(i, c) < lo - 1e-9 ||
                    res.context_vector.at(i, c) > hi + 1e-9) {
                    detail << "context vector escaped the convex hull";
                    return false;
                }
            }
        // shift invariance of the softmax
        TensorD shifted = scores;
        const double c0 = rng.uniform(-5.0, 5.0);
        for (auto& v : shifted.vec())
            v += c0;
        auto res2 = attend(shifted, cells);
        for (int64_t i = 0; i < res2.attention.size(); ++i)
            worst_shift = std::max(worst_shift,
                                   std::abs(res.attention[i] - res2.attention[i]));
    }
    detail << "sum " << worst_sum << ", oracle " << worst_oracle << ", shift " << worst_shift;
    return worst_sum < 1e-6 && worst_oracle < 1e-12 && worst_shift < 1e-6;
}

bool check_fusion_invariants(std::ostream& detail) {
    Rng rng(777);
    double worst_sum = 0.0;
    FusionModule<double> fusion(FusionKind::Net, 6, 3, 8, 0.0);
    fusion.init(rng);
    for (int trial = 0; trial < 1000; ++trial) {
        TensorD v_f = TensorD::uniform({2, 6}, -2.0, 2.0, rng);
        TensorD v_c = TensorD::uniform({2, 6}, -2.0, 2.0, rng);
        TensorD w = fusion.branch_weights(v_f, v_c, Mode::Eval);
        for (int64_t i = 0; i < 2; ++i) {
            if (w.at(i, 0) <= 0.0 || w.at(i, 1) <= 0.0) {
                detail << "weights not strictly positive";
                return false;
            }
            worst_sum = std::max(worst_sum, std::abs(w.at(i, 0) + w.at(i, 1) - 1.0));
        }
    }
    // s_f - s_c = ln 3 must give w_f = 0.75 exactly (up to fp rounding)
    const double sf = std::log(3.0), sc = 0.0;
    const double wf = std::exp(sf) / (std::exp(sf) + std::exp(sc));
    if (std::abs(wf - 0.75) > 1e-12) {
        detail << "two-way softmax analytic case failed";
        return false;
    }
    detail << "max |sum-1| " << worst_sum;
    return worst_sum < 1e-7;
}

bool check_uniform_reduction(std::ostream& detail) {
    // Attention=None + Fusion=Add must equal a directly coded two-branch
    // mean-pool classifier with the same parameters.
    ModelConfig cfg = reduced_model_config();
    cfg.attention = AttentionKind::None;
    cfg.fusion = FusionKind::Add;
    GlamorNet<double> net(cfg);
    Rng rng(31337);
    net.init(rng);
    TensorD face = TensorD::uniform({2, 3, 16, 16}, 0.0, 1.0, rng);
    TensorD ctx = TensorD::uniform({2, 3, 32, 32}, 0.0, 1.0, rng);
    auto out = net.forward(face, ctx, Mode::Eval, nullptr);

    TensorD f_f = net.face_encoder().forward(face, Mode::Eval);
    TensorD f_c = net.context_encoder().forward(ctx, Mode::Eval);
    auto mean_pool = [](const TensorD& f) {
        const int64_t n = f.dim(0), c = f.dim(1), hw = f.dim(2) * f.dim(3);
        TensorD v({n, c});
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch) {
                double s = 0.0;
                for (int64_t p = 0; p < hw; ++p)
                    s += f[(i * c + ch) * hw + p];
                v.at(i, ch) = s / static_cast<double>(hw);
            }
        return v;
    };
    TensorD u = add(mean_pool(f_f), mean_pool(f_c));
    // classifier head applied via plain matmul
    MlpHead<double>& head = net.fusion().head();
    std::vector<double> w1t(static_cast<size_t>(head.fc1.in_ * head.fc1.out_));
    transpose<double>(head.fc1.out_, head.fc1.in_, head.fc1.weight.data(), w1t.data());
    TensorD h = matmul(u, TensorD({head.fc1.in_, head.fc1.out_}, w1t));
    for (int64_t i = 0; i < h.dim(0); ++i)
        for (int64_t j = 0; j < h.dim(1); ++j) {
            h.at(i, j) += head.fc1.bias[j];
            h.at(i, j) = std::max(0.0, h.at(i, j));
        }
    std::vector<double> w2t(static_cast<size_t>(head.fc2.in_ * head.fc2.out_));
    transpose<double>(head.fc2.out_, head.fc2.in_, head.fc2.weight.data(), w2t.data());
    TensorD logits = matmul(h, TensorD({head.fc2.in_, head.fc2.out_}, w2t));
    for (int64_t i = 0; i < logits.dim(0); ++i)
        for (int64_t j = 0; j < logits.dim(1); ++j)
            logits.at(i, j) += head.fc2.bias[j];

    double worst = 0.0;
    for (int64_t i = 0; i < logits.size(); ++i)
        worst = std::max(worst, std::abs(logits[i] - out.logits[i]));
    detail << "max abs err " << worst;
    return worst < 1e-10;
}

bool check_sgd_recurrence(std::ostream& detail) {
    Tensor<double> p = TensorD::full({1}, 1.0);
    Tensor<double> g = TensorD::full({1}, 1.0);
    ParamRefs<double> refs{{"p", &p, &g, true}};
    Sgd<double> sgd(0.1, 0.9);
    sgd.step(refs); // v=1, p=0.9
    sgd.step(refs); // v=1.9, p=0.71
    const double err = std::abs(p[0] - 0.71);
    detail << "after two steps p=" << p[0];
    return err < 1e-12;
}

bool check_stuart_maxwell(std::ostream& detail) {
    // symmetric table -> statistic 0, p 1
    ConfusionMatrix sym;
    sym.k = 3;
    sym.counts = {5, 2, 3, 2, 7, 4, 3, 4, 9};
    TestResult r1 = stuart_maxwell(sym);
    if (std::abs(r1.statistic) > 1e-9 || std::abs(r1.p_value - 1.0) > 1e-9) {
        detail << "symmetric table gave stat " << r1.statistic;
        return false;
    }
    // K=2 closed form (McNemar): (b-c)^2/(b+c)
    ConfusionMatrix two;
    two.k = 2;
    two.counts = {10, 9, 1, 12};
    TestResult r2 = stuart_maxwell(two);
    if (std::abs(r2.statistic - 6.4) > 1e-9 || std::abs(r2.p_value - 0.011412) > 1e-4) {
        detail << "K=2 stat " << r2.statistic << " p " << r2.p_value;
        return false;
    }
    // drop-choice invariance
    Rng rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        ConfusionMatrix cm;
        cm.k = 4;
        cm.counts.resize(16);
        for (auto& c : cm.counts)
            c = 1 + static_cast<int64_t>(rng.below(30));
        TestResult base = stuart_maxwell(cm, 0);
        for (int drop = 1; drop < 4; ++drop)
            worst = std::max(worst,
                             std::abs(stuart_maxwell(cm, drop).statistic - base.statistic));
    }
    detail << "drop invariance err " << worst;
    return worst < 1e-8;
}

bool check_chi_square(std::ostream& detail) {
    double worst = 0.0;
    for (double x : {1.0, 2.0, 5.0})
        worst = std::max(worst, std::abs(chi_square_survival(x, 2) - std::exp(-x / 2.0)));
    if (std::abs(chi_square_survival(0.0, 3) - 1.0) > 1e-15) {
        detail << "survival(0,k) != 1";
        return false;
    }
    const double p05 = chi_square_survival(3.841458820694124, 1);
    worst = std::max(worst, std::abs(p05 - 0.05));
    detail << "max abs err " << worst;
    return worst < 1e-9;
}

bool check_rng_reproducibility(std::ostream& detail) {
    Rng a(123), b(123);
    for (int i = 0; i < 1000; ++i)
        if (a.next_u64() != b.next_u64()) {
            detail << "streams diverged at draw " << i;
            return false;
        }
    Rng c(123), d(124);
    bool differ = false;
    for (int i = 0; i < 10; ++i)
        differ |= c.next_u64() != d.next_u64();
    if (!differ) {
        detail << "different seeds produced identical stream";
        return false;
    }
    detail << "identical seeds match, different seeds diverge";
    return true;
}

} // namespace

VerifyReport run_verification(const VerifyOptions& opts) {
    Battery battery(opts);
    const int s = opts.fd_seeds;

    battery.run("rng-reproducibility", [&](std::ostream& d) { return check_rng_reproducibility(d); });
    battery.run("softmax-invariants", [&](std::ostream& d) { return check_softmax_invariants(d); });
    battery.run("matmul-oracle", [&](std::ostream& d) { return check_matmul_oracle(d, s); });
    battery.run("conv-forward-oracle", [&](std::ostream& d) { return check_conv_oracle(d, s); });
    battery.run("conv-backward-fd", [&](std::ostream& d) { return check_conv_backward(d, opts); });
    battery.run("linear-backward-fd", [&](std::ostream& d) { return check_linear_backward(d, s); });
    battery.run("batchnorm-backward-fd",
                [&](std::ostream& d) { return check_batchnorm_backward(d, s); });
    battery.run("maxpool-backward-fd", [&](std::ostream& d) { return check_maxpool_backward(d, s); });
    battery.run("relu-backward-fd", [&](std::ostream& d) { return check_relu_backward(d, s); });
    battery.run("dropout-semantics", [&](std::ostream& d) { return check_dropout(d, s); });
    battery.run("global-pool-backward-fd",
                [&](std::ostream& d) { return check_global_pool_backward(d, s); });
    battery.run("cross-entropy-fd", [&](std::ostream& d) { return check_cross_entropy_grad(d, s); });
    battery.run("encoder-e2e-fd", [&](std::ostream& d) { return check_encoder_e2e(d, s); });
    battery.run("gla-backward-fd", [&](std::ostream& d) { return check_gla_backward(d, s); });
    battery.run("fusion-backward-fd", [&](std::ostream& d) { return check_fusion_backward(d, s); });
    battery.run("model-e2e-fd", [&](std::ostream& d) { return check_model_e2e(d, s); });
    battery.run("attention-invariants",
                [&](std::ostream& d) { return check_attention_invariants(d); });
    battery.run("fusion-weight-invariants",
                [&](std::ostream& d) { return check_fusion_invariants(d); });
    battery.run("uniform-attention-reduction",
                [&](std::ostream& d) { return check_uniform_reduction(d); });
    battery.run("sgd-recurrence", [&](std::ostream& d) { return check_sgd_recurrence(d); });
    battery.run("stuart-maxwell", [&](std::ostream& d) { return check_stuart_maxwell(d); });
    battery.run("chi-square-survival", [&](std::ostream& d) { return check_chi_square(d); });

    return battery.report;
}

} // namespace glamor
