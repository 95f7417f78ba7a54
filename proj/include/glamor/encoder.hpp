#pragma once

#include <memory>
#include <string>
#include <vector>

#include "glamor/layers.hpp"

namespace glamor {

// Contract any feature extractor must satisfy to be dropped into the model
// in place of the built-in CNN (alternative backbones plug in here).
template <class T>
class EncoderInterface {
public:
    virtual ~EncoderInterface() = default;
    virtual Tensor<T> forward(const Tensor<T>& image, Mode mode) = 0;
    virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
    virtual void collect(ParamRefs<T>& out, const std::string& prefix) = 0;
    virtual int64_t out_channels() const = 0;
    // Spatial reduction factor from input to feature map.
    virtual int64_t spatial_divisor() const = 0;
    // Fresh-parameter initialization; pretrained encoders may ignore it.
    virtual void init(Rng&) {}
};

// Five conv(3x3, same) -> batchnorm -> relu stages; stages 1-4 are followed
// by 2x2 max pooling, the last one is not, so the map comes out at 1/16 of
// the input resolution. Channel progression defaults to 32,64,128,256,256.
template <class T>
class CnnEncoder final : public EncoderInterface<T> {
public:
    struct Stage {
        Conv2d<T> conv;
        BatchNorm2d<T> bn;
        ReLU<T> relu;
        MaxPool2x2<T> pool;
        bool pooled = false;
    };

    CnnEncoder() = default; // empty shell; construct with channels before use

    CnnEncoder(int64_t in_channels, std::vector<int64_t> channels)
        : channels_(std::move(channels)) {
        if (channels_.empty())
            throw ConfigError("encoder: channel list must be nonempty");
        stages_.reserve(channels_.size());
        int64_t prev = in_channels;
        for (size_t i = 0; i < channels_.size(); ++i) {
            Stage s;
            s.conv = Conv2d<T>(prev, channels_[i]);
            s.bn = BatchNorm2d<T>(channels_[i]);
            s.pooled = i + 1 < channels_.size();
            stages_.push_back(std::move(s));
            prev = channels_[i];
        }
    }

    void init(Rng& rng) override {
        for (auto& s : stages_)
            s.conv.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& image, Mode mode) override {
        if (stages_.empty())
            throw StateError("encoder: not configured");
        const int64_t div = spatial_divisor();
        if (image.rank() != 4)
            throw ShapeError("encoder: expected [N,C,H,W], got " + shape_str(image.shape()));
        if (image.dim(2) % div != 0 || image.dim(3) % div != 0)
            throw ShapeError("encoder: spatial dims must be divisible by " + std::to_string(div) +
                             ", got " + shape_str(image.shape()));
        Tensor<T> x = image;
        for (auto& s : stages_) {
            x = s.conv.forward(x, mode);
            x = s.bn.forward(x, mode);
            x = s.relu.forward(x, mode);
            if (s.pooled)
                x = s.pool.forward(x, mode);
        }
        has_forward_ = mode != Mode::Eval;
        return x;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        if (!has_forward_)
            throw StateError("encoder: backward called before forward");
        Tensor<T> g = grad_out;
        for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
            if (it->pooled)
                g = it->pool.backward(g);
            g = it->relu.backward(g);
            g = it->bn.backward(g);
            g = it->conv.backward(g);
        }
        return g;
    }

    void collect(ParamRefs<T>& out, const std::string& prefix) override {
        for (size_t i = 0; i < stages_.size(); ++i) {
            const std::string p = prefix + ".stage" + std::to_string(i + 1);
            stages_[i].conv.collect(out, p + ".conv");
            stages_[i].bn.collect(out, p + ".bn");
        }
    }

    int64_t out_channels() const override { return channels_.back(); }

    int64_t spatial_divisor() const override {
        int64_t d = 1;
        for (const auto& s : stages_)
            if (s.pooled)
                d *= 2;
        return d;
    }

    const std::vector<int64_t>& channels() const { return channels_; }
    std::vector<Stage>& stages() { return stages_; }

private:
    std::vector<int64_t> channels_;
    std::vector<Stage> stages_;
    bool has_forward_ = false;
};

} // namespace glamor
