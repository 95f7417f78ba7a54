#pragma once

#include <cmath>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "glamor/gemm.hpp"
#include "glamor/tensor.hpp"

namespace glamor {

// GradCheck behaves like Train (batch statistics, cached activations) except
// that dropout is identity and batch-norm running stats are left untouched,
// so repeated forwards are pure functions of parameters.
enum class Mode { Train, Eval, GradCheck };

template <class T>
struct ParamRef {
    std::string name;
    Tensor<T>* value;
    Tensor<T>* grad;    // null for non-trainable state (running stats)
    bool trainable;
};

template <class T>
using ParamRefs = std::vector<ParamRef<T>>;

// Scaled-uniform init with bound sqrt(6/fan_in); biases stay zero.
template <class T>
void init_fan_in(Tensor<T>& w, int64_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : w.vec())
        v = static_cast<T>(rng.uniform(-bound, bound));
}

namespace conv_detail {

// col[c*9 + u*3 + v][(n*H + i)*W + j] = x[n, c, i+u-1, j+v-1], zero padded.
template <class T>
void im2col_3x3(const Tensor<T>& x, std::vector<T>& col) {
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t cols = n * h * w;
    col.assign(static_cast<size_t>(c * 9 * cols), T(0));
    for (int64_t ci = 0; ci < c; ++ci) {
        for (int64_t u = 0; u < 3; ++u) {
            for (int64_t v = 0; v < 3; ++v) {
                T* dst_row = col.data() + (ci * 9 + u * 3 + v) * cols;
                const int64_t j_lo = std::max<int64_t>(0, 1 - v);
                const int64_t j_hi = std::min<int64_t>(w, w + 1 - v);
                if (j_lo >= j_hi)
                    continue;
                for (int64_t ni = 0; ni < n; ++ni) {
                    const T* src_plane = x.data() + (ni * c + ci) * h * w;
                    for (int64_t i = 0; i < h; ++i) {
                        const int64_t ii = i + u - 1;
                        if (ii < 0 || ii >= h)
                            continue;
                        std::memcpy(dst_row + (ni * h + i) * w + j_lo,
                                    src_plane + ii * w + j_lo + (v - 1),
                                    static_cast<size_t>(j_hi - j_lo) * sizeof(T));
                    }
                }
            }
        }
    }
}

// Scatter-add inverse of im2col_3x3.
template <class T>
void col2im_3x3(const std::vector<T>& col, Tensor<T>& gx) {
    const int64_t n = gx.dim(0), c = gx.dim(1), h = gx.dim(2), w = gx.dim(3);
    const int64_t cols = n * h * w;
    for (int64_t ci = 0; ci < c; ++ci) {
        for (int64_t u = 0; u < 3; ++u) {
            for (int64_t v = 0; v < 3; ++v) {
                const T* src_row = col.data() + (ci * 9 + u * 3 + v) * cols;
                const int64_t j_lo = std::max<int64_t>(0, 1 - v);
                const int64_t j_hi = std::min<int64_t>(w, w + 1 - v);
                if (j_lo >= j_hi)
                    continue;
                for (int64_t ni = 0; ni < n; ++ni) {
                    T* dst_plane = gx.data() + (ni * c + ci) * h * w;
                    for (int64_t i = 0; i < h; ++i) {
                        const int64_t ii = i + u - 1;
                        if (ii < 0 || ii >= h)
                            continue;
                        T* dst = dst_plane + ii * w + j_lo + (v - 1);
                        const T* src = src_row + (ni * h + i) * w + j_lo;
                        for (int64_t j = 0; j < j_hi - j_lo; ++j)
                            dst[j] += src[j];
                    }
                }
            }
        }
    }
}

} // namespace conv_detail

// 3x3 convolution, stride 1, same padding. Output spatial dims equal input.
template <class T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int64_t in_ch, int64_t out_ch)
        : in_ch_(in_ch), out_ch_(out_ch),
          weight(Shape{out_ch, in_ch, 3, 3}), bias(Shape{out_ch}),
          grad_weight(Shape{out_ch, in_ch, 3, 3}), grad_bias(Shape{out_ch}) {}

    void init(Rng& rng) { init_fan_in(weight, in_ch_ * 9, rng); }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        if (x.rank() != 4 || x.dim(1) != in_ch_)
            throw ShapeError("conv2d: expected [N," + std::to_string(in_ch_) + ",H,W], got " +
                             shape_str(x.shape()));
        const int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
        const int64_t cols = n * h * w, hw = h * w, k = in_ch_ * 9;

        std::vector<T> col;
        conv_detail::im2col_3x3(x, col);
        std::vector<T> y_mat(static_cast<size_t>(out_ch_ * cols));
        gemm_nn<T>(out_ch_, cols, k, weight.data(), col.data(), y_mat.data(), false);

        Tensor<T> y({n, out_ch_, h, w});
        for (int64_t ni = 0; ni < n; ++ni)
            for (int64_t o = 0; o < out_ch_; ++o) {
                T* dst = y.data() + (ni * out_ch_ + o) * hw;
                const T* src = y_mat.data() + o * cols + ni * hw;
                const T b = bias[o];
                for (int64_t p = 0; p < hw; ++p)
                    dst[p] = src[p] + b;
            }
        if (mode != Mode::Eval)
            cached_input_ = x;
        has_forward_ = mode != Mode::Eval;
        return y;
    }

    // Overwrites grad_weight/grad_bias; returns dL/dx.
    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!has_forward_)
            throw StateError("conv2d: backward called before forward");
        const Tensor<T>& x = cached_input_;
        const int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
        const int64_t cols = n * h * w, hw = h * w, k = in_ch_ * 9;
        if (grad_out.shape() != Shape{n, out_ch_, h, w})
            throw ShapeError("conv2d: grad_out shape " + shape_str(grad_out.shape()) +
                             " does not match forward output");

        // [O, N*H*W] view of grad_out
        std::vector<T> gy_mat(static_cast<size_t>(out_ch_ * cols));
        for (int64_t ni = 0; ni < n; ++ni)
            for (int64_t o = 0; o < out_ch_; ++o)
                std::memcpy(gy_mat.data() + o * cols + ni * hw,
                            grad_out.data() + (ni * out_ch_ + o) * hw,
                            static_cast<size_t>(hw) * sizeof(T));

        for (int64_t o = 0; o < out_ch_; ++o) {
            T s = T(0);
            const T* row = gy_mat.data() + o * cols;
            for (int64_t p = 0; p < cols; ++p)
                s += row[p];
            grad_bias[o] = s;
        }

        // im2col is recomputed here instead of cached: it is cheap next to the
        // GEMMs and caching it would hold ~100MB across ten conv layers.
        std::vector<T> col;
        conv_detail::im2col_3x3(x, col);
        std::vector<T> col_t(col.size());
        transpose<T>(k, cols, col.data(), col_t.data());
        gemm_nn<T>(out_ch_, k, cols, gy_mat.data(), col_t.data(), grad_weight.data(), false);
        col_t.clear();
        col_t.shrink_to_fit();

        std::vector<T> w_t(static_cast<size_t>(k * out_ch_));
        transpose<T>(out_ch_, k, weight.data(), w_t.data());
        std::vector<T> gcol(col.size());
        gemm_nn<T>(k, cols, out_ch_, w_t.data(), gy_mat.data(), gcol.data(), false);

        Tensor<T> gx(x.shape());
        conv_detail::col2im_3x3(gcol, gx);
        return gx;
    }

    void collect(ParamRefs<T>& out, const std::string& prefix) {
        out.push_back({prefix + ".weight", &weight, &grad_weight, true});
        out.push_back({prefix + ".bias", &bias, &grad_bias, true});
    }

    int64_t in_channels() const { return in_ch_; }
    int64_t out_channels() const { return out_ch_; }

    int64_t in_ch_ = 0, out_ch_ = 0;
    Tensor<T> weight, bias, grad_weight, grad_bias;

private:
    Tensor<T> cached_input_;
    bool has_forward_ = false;
};

// Per-channel batch normalization over (N,H,W).
template <class T>
class BatchNorm2d {
public:
    BatchNorm2d() = default;
    explicit BatchNorm2d(int64_t channels)
        : ch_(channels),
          gamma(Tensor<T>::full({channels}, T(1))), beta(Shape{channels}),
          running_mean(Shape{channels}), running_var(Tensor<T>::full({channels}, T(1))),
          grad_gamma(Shape{channels}), grad_beta(Shape{channels}) {}

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        if (x.rank() != 4 || x.dim(1) != ch_)
            throw ShapeError("batchnorm: expected [N," + std::to_string(ch_) + ",H,W], got " +
                             shape_str(x.shape()));
        const int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
        const int64_t hw = h * w;
        const int64_t m = n * hw;
        Tensor<T> y(x.shape());

        if (mode == Mode::Eval) {
            for (int64_t c = 0; c < ch_; ++c) {
                const T inv = gamma[c] / std::sqrt(running_var[c] + eps_);
                const T shift = beta[c] - running_mean[c] * inv;
                for (int64_t ni = 0; ni < n; ++ni) {
                    const T* src = x.data() + (ni * ch_ + c) * hw;
                    T* dst = y.data() + (ni * ch_ + c) * hw;
                    for (int64_t p = 0; p < hw; ++p)
                        dst[p] = src[p] * inv + shift;
                }
            }
            has_forward_ = false;
            return y;
        }

        if (n < 2)
            throw StateError("batchnorm: train mode needs batch size >= 2, got " +
                             std::to_string(n));

        x_hat_ = Tensor<T>(x.shape());
        inv_std_ = Tensor<T>(Shape{ch_});
        for (int64_t c = 0; c < ch_; ++c) {
            T mean = T(0);
            for (int64_t ni = 0; ni < n; ++ni) {
                const T* src = x.data() + (ni * ch_ + c) * hw;
                for (int64_t p = 0; p < hw; ++p)
                    mean += src[p];
            }
            mean /= static_cast<T>(m);
            T var = T(0);
            for (int64_t ni = 0; ni < n; ++ni) {
                const T* src = x.data() + (ni * ch_ + c) * hw;
                for (int64_t p = 0; p < hw; ++p) {
                    const T d = src[p] - mean;
                    var += d * d;
                }
            }
            var /= static_cast<T>(m);
            const T inv = T(1) / std::sqrt(var + eps_);
            inv_std_[c] = inv;
            for (int64_t ni = 0; ni < n; ++ni) {
                const T* src = x.data() + (ni * ch_ + c) * hw;
                T* xh = x_hat_.data() + (ni * ch_ + c) * hw;
                T* dst = y.data() + (ni * ch_ + c) * hw;
                for (int64_t p = 0; p < hw; ++p) {
                    xh[p] = (src[p] - mean) * inv;
                    dst[p] = xh[p] * gamma[c] + beta[c];
                }
            }
            if (mode == Mode::Train) {
                const T unbiased = var * static_cast<T>(m) / static_cast<T>(m - 1);
                running_mean[c] = momentum_ * running_mean[c] + (T(1) - momentum_) * mean;
                running_var[c] = momentum_ * running_var[c] + (T(1) - momentum_) * unbiased;
            }
        }
        has_forward_ = true;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!has_forward_)
            throw StateError("batchnorm: backward called before train-mode forward");
        const int64_t n = grad_out.dim(0), hw = grad_out.dim(2) * grad_out.dim(3);
        const int64_t m = n * hw;
        Tensor<T> gx(grad_out.shape());
        for (int64_t c = 0; c < ch_; ++c) {
            T sum_gy = T(0), sum_gy_xh = T(0);
            for (int64_t ni = 0; ni < n; ++ni) {
                const T* gy = grad_out.data() + (ni * ch_ + c) * hw;
                const T* xh = x_hat_.data() + (ni * ch_ + c) * hw;
                for (int64_t p = 0; p < hw; ++p) {
                    sum_gy += gy[p];
                    sum_gy_xh += gy[p] * xh[p];
                }
            }
            grad_gamma[c] = sum_gy_xh;
            grad_beta[c] = sum_gy;
            const T k = gamma[c] * inv_std_[c];
            const T mean_gy = sum_gy / static_cast<T>(m);
            const T mean_gy_xh = sum_gy_xh / static_cast<T>(m);
            for (int64_t ni = 0; ni < n; ++ni) {
                const T* gy = grad_out.data() + (ni * ch_ + c) * hw;
                const T* xh = x_hat_.data() + (ni * ch_ + c) * hw;
                T* dst = gx.data() + (ni * ch_ + c) * hw;
                for (int64_t p = 0; p < hw; ++p)
                    dst[p] = k * (gy[p] - mean_gy - xh[p] * mean_gy_xh);
            }
        }
        return gx;
    }

    void collect(ParamRefs<T>& out, const std::string& prefix) {
        out.push_back({prefix + ".gamma", &gamma, &grad_gamma, true});
        out.push_back({prefix + ".beta", &beta, &grad_beta, true});
        out.push_back({prefix + ".running_mean", &running_mean, nullptr, false});
        out.push_back({prefix + ".running_var", &running_var, nullptr, false});
    }

    int64_t ch_ = 0;
    Tensor<T> gamma, beta, running_mean, running_var, grad_gamma, grad_beta;

private:
    static constexpr T eps_ = T(1e-5);
    static constexpr T momentum_ = T(0.9);
    Tensor<T> x_hat_, inv_std_;
    bool has_forward_ = false;
};

template <class T>
class ReLU {
public:
    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        Tensor<T> y(x.shape());
        for (int64_t i = 0; i < x.size(); ++i)
            y[i] = x[i] > T(0) ? x[i] : T(0);
        if (mode != Mode::Eval) {
            mask_.assign(static_cast<size_t>(x.size()), 0);
            for (int64_t i = 0; i < x.size(); ++i)
                mask_[static_cast<size_t>(i)] = x[i] > T(0);
            has_forward_ = true;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!has_forward_ || static_cast<size_t>(grad_out.size()) != mask_.size())
            throw StateError("relu: backward without matching forward");
        Tensor<T> gx(grad_out.shape());
        for (int64_t i = 0; i < grad_out.size(); ++i)
            gx[i] = mask_[static_cast<size_t>(i)] ? grad_out[i] : T(0);
        return gx;
    }

private:
    std::vector<uint8_t> mask_;
    bool has_forward_ = false;
};

// 2x2 max pooling with stride 2. Ties go to the first cell in scan order.
template <class T>
class MaxPool2x2 {
public:
    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        if (x.rank() != 4)
            throw ShapeError("maxpool: expected rank-4 input, got " + shape_str(x.shape()));
        const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        if (h % 2 != 0 || w % 2 != 0)
            throw ShapeError("maxpool: spatial dims must be even, got " + shape_str(x.shape()));
        const int64_t oh = h / 2, ow = w / 2;
        Tensor<T> y({n, c, oh, ow});
        indices_.assign(static_cast<size_t>(y.size()), 0);
        in_shape_ = x.shape();
        int64_t out_idx = 0;
        for (int64_t ni = 0; ni < n; ++ni)
            for (int64_t ci = 0; ci < c; ++ci) {
                const T* plane = x.data() + (ni * c + ci) * h * w;
                for (int64_t i = 0; i < oh; ++i)
                    for (int64_t j = 0; j < ow; ++j) {
                        const int64_t base = (ni * c + ci) * h * w;
                        int64_t best = 2 * i * w + 2 * j;
                        T best_v = plane[best];
                        const int64_t cands[3] = {2 * i * w + 2 * j + 1, (2 * i + 1) * w + 2 * j,
                                                  (2 * i + 1) * w + 2 * j + 1};
                        for (int64_t cand : cands)
                            if (plane[cand] > best_v) {
                                best_v = plane[cand];
                                best = cand;
                            }
                        y[out_idx] = best_v;
                        indices_[static_cast<size_t>(out_idx)] = base + best;
                        ++out_idx;
                    }
            }
        has_forward_ = mode != Mode::Eval;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!has_forward_)
            throw StateError("maxpool: backward called before forward");
        if (static_cast<size_t>(grad_out.size()) != indices_.size())
            throw ShapeError("maxpool: grad_out size does not match forward output");
        Tensor<T> gx(in_shape_);
        for (int64_t i = 0; i < grad_out.size(); ++i)
            gx[indices_[static_cast<size_t>(i)]] += grad_out[i];
        return gx;
    }

    const std::vector<int64_t>& winner_indices() const { return indices_; }

private:
    std::vector<int64_t> indices_;
    Shape in_shape_;
    bool has_forward_ = false;
};

// y = x * W^T + b for x [N, in].
template <class T>
class Linear {
public:
    Linear() = default;
    Linear(int64_t in, int64_t out)
        : in_(in), out_(out), weight(Shape{out, in}), bias(Shape{out}),
          grad_weight(Shape{out, in}), grad_bias(Shape{out}) {}

    void init(Rng& rng) { init_fan_in(weight, in_, rng); }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        if (x.rank() != 2 || x.dim(1) != in_)
            throw ShapeError("linear: expected [N," + std::to_string(in_) + "], got " +
                             shape_str(x.shape()));
        const int64_t n = x.dim(0);
        std::vector<T> w_t(static_cast<size_t>(in_ * out_));
        transpose<T>(out_, in_, weight.data(), w_t.data());
        Tensor<T> y({n, out_});
        gemm_nn<T>(n, out_, in_, x.data(), w_t.data(), y.data(), false);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t o = 0; o < out_; ++o)
                y.at(i, o) += bias[o];
        if (mode != Mode::Eval) {
            cached_input_ = x;
            has_forward_ = true;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!has_forward_)
            throw StateError("linear: backward called before forward");
        const int64_t n = cached_input_.dim(0);
        if (grad_out.shape() != Shape{n, out_})
            throw ShapeError("linear: grad_out shape " + shape_str(grad_out.shape()));
        std::vector<T> gy_t(static_cast<size_t>(out_ * n));
        transpose<T>(n, out_, grad_out.data(), gy_t.data());
        gemm_nn<T>(out_, in_, n, gy_t.data(), cached_input_.data(), grad_weight.data(), false);
        for (int64_t o = 0; o < out_; ++o) {
            T s = T(0);
            for (int64_t i = 0; i < n; ++i)
                s += grad_out.at(i, o);
            grad_bias[o] = s;
        }
        Tensor<T> gx({n, in_});
        gemm_nn<T>(n, in_, out_, grad_out.data(), weight.data(), gx.data(), false);
        return gx;
    }

    void collect(ParamRefs<T>& out, const std::string& prefix) {
        out.push_back({prefix + ".weight", &weight, &grad_weight, true});
        out.push_back({prefix + ".bias", &bias, &grad_bias, true});
    }

    int64_t in_features() const { return in_; }
    int64_t out_features() const { return out_; }

    int64_t in_ = 0, out_ = 0;
    Tensor<T> weight, bias, grad_weight, grad_bias;

private:
    Tensor<T> cached_input_;
    bool has_forward_ = false;
};

// Inverted dropout: train mode zeroes with probability p and scales survivors
// by 1/(1-p), so eval mode is exact identity.
template <class T>
class Dropout {
public:
    explicit Dropout(double p = 0.5) : p_(p) {}

    Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) {
        if (mode != Mode::Train || p_ <= 0.0) {
            has_forward_ = true;
            mask_.assign(static_cast<size_t>(x.size()), T(1));
            return x;
        }
        if (rng == nullptr)
            throw StateError("dropout: train mode requires an rng");
        const T scale = static_cast<T>(1.0 / (1.0 - p_));
        mask_.assign(static_cast<size_t>(x.size()), T(0));
        Tensor<T> y(x.shape());
        for (int64_t i = 0; i < x.size(); ++i) {
            if (!rng->bernoulli(p_)) {
                mask_[static_cast<size_t>(i)] = scale;
                y[i] = x[i] * scale;
            }
        }
        has_forward_ = true;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!has_forward_ || static_cast<size_t>(grad_out.size()) != mask_.size())
            throw StateError("dropout: backward without matching forward");
        Tensor<T> gx(grad_out.shape());
        for (int64_t i = 0; i < grad_out.size(); ++i)
            gx[i] = grad_out[i] * mask_[static_cast<size_t>(i)];
        return gx;
    }

    double rate() const { return p_; }

private:
    double p_ = 0.5;
    std::vector<T> mask_;
    bool has_forward_ = false;
};

// [N,C,H,W] -> [N,C] spatial mean.
template <class T>
class GlobalAvgPool {
public:
    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        if (x.rank() != 4)
            throw ShapeError("global_avg_pool: expected rank-4 input, got " + shape_str(x.shape()));
        const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
        Tensor<T> y({n, c});
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ci = 0; ci < c; ++ci) {
                const T* src = x.data() + (i * c + ci) * hw;
                T s = T(0);
                for (int64_t p = 0; p < hw; ++p)
                    s += src[p];
                y.at(i, ci) = s / static_cast<T>(hw);
            }
        if (mode != Mode::Eval) {
            in_shape_ = x.shape();
            has_forward_ = true;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!has_forward_)
            throw StateError("global_avg_pool: backward called before forward");
        const int64_t n = in_shape_[0], c = in_shape_[1], hw = in_shape_[2] * in_shape_[3];
        Tensor<T> gx(in_shape_);
        const T inv = T(1) / static_cast<T>(hw);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ci = 0; ci < c; ++ci) {
                const T g = grad_out.at(i, ci) * inv;
                T* dst = gx.data() + (i * c + ci) * hw;
                for (int64_t p = 0; p < hw; ++p)
                    dst[p] = g;
            }
        return gx;
    }

private:
    Shape in_shape_;
    bool has_forward_ = false;
};

template <class T>
struct CrossEntropyResult {
    T loss;
    Tensor<T> grad_logits;
};

// Mean negative log-likelihood with log-sum-exp stabilization.
// grad = (softmax - onehot) / N.
template <class T>
CrossEntropyResult<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2)
        throw ShapeError("cross_entropy: logits must be [N,K]");
    const int64_t n = logits.dim(0), k = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != n)
        throw ValueError("cross_entropy: got " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
    for (int label : labels)
        if (label < 0 || label >= k)
            throw ValueError("cross_entropy: label " + std::to_string(label) + " outside [0," +
                             std::to_string(k) + ")");
    Tensor<T> grad({n, k});
    T loss = T(0);
    for (int64_t i = 0; i < n; ++i) {
        const T* row = logits.data() + i * k;
        T mx = row[0];
        for (int64_t j = 1; j < k; ++j)
            mx = std::max(mx, row[j]);
        T sum = T(0);
        for (int64_t j = 0; j < k; ++j)
            sum += std::exp(row[j] - mx);
        const T log_sum = std::log(sum) + mx;
        loss -= row[labels[static_cast<size_t>(i)]] - log_sum;
        for (int64_t j = 0; j < k; ++j)
            grad.at(i, j) = std::exp(row[j] - log_sum) / static_cast<T>(n);
        grad.at(i, labels[static_cast<size_t>(i)]) -= T(1) / static_cast<T>(n);
    }
    return {loss / static_cast<T>(n), std::move(grad)};
}

// SGD with classical momentum: v <- mu*v + g; p <- p - lr*v.
template <class T>
class Sgd {
public:
    Sgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {
        if (lr <= 0.0)
            throw ConfigError("sgd: learning rate must be positive");
        if (momentum < 0.0 || momentum >= 1.0)
            throw ConfigError("sgd: momentum must be in [0,1)");
    }

    void step(const ParamRefs<T>& params) {
        for (const auto& p : params) {
            if (!p.trainable)
                continue;
            if (p.value->shape() != p.grad->shape())
                throw ShapeError("sgd: grad shape mismatch for " + p.name);
            auto [it, inserted] = velocity_.try_emplace(p.name, Tensor<T>(p.value->shape()));
            Tensor<T>& v = it->second;
            if (!inserted && !v.same_shape(*p.value))
                throw ShapeError("sgd: velocity shape changed for " + p.name);
            const T lr = static_cast<T>(lr_), mu = static_cast<T>(momentum_);
            T* pv = v.data();
            T* pp = p.value->data();
            const T* pg = p.grad->data();
            for (int64_t i = 0; i < v.size(); ++i) {
                pv[i] = mu * pv[i] + pg[i];
                pp[i] -= lr * pv[i];
            }
        }
    }

    double lr() const { return lr_; }
    double momentum() const { return momentum_; }

private:
    double lr_, momentum_;
    std::map<std::string, Tensor<T>> velocity_;
};

template <class T>
void zero_grads(const ParamRefs<T>& params) {
    for (const auto& p : params)
        if (p.grad)
            std::fill(p.grad->vec().begin(), p.grad->vec().end(), T(0));
}

} // namespace glamor
