#pragma once

#include <memory>
#include <string>
#include <vector>

#include "glamor/encoder.hpp"
#include "glamor/fusion.hpp"
#include "glamor/gla.hpp"

namespace glamor {

// Which branches feed the classifier. Whether the context images have the
// facial region zeroed out is a data-pipeline property, not a model one.
enum class Ablation { Full, FaceOnly, ContextOnly };

inline const char* ablation_name(Ablation a) {
    switch (a) {
    case Ablation::Full: return "full";
    case Ablation::FaceOnly: return "face_only";
    case Ablation::ContextOnly: return "context_only";
    }
    return "?";
}

struct ModelConfig {
    std::vector<int64_t> channels{32, 64, 128, 256, 256};
    int64_t attention_hidden = 128;
    int64_t fusion_hidden = 128;
    int64_t classes = 7;
    double dropout = 0.5;
    AttentionKind attention = AttentionKind::GlobalLocal;
    FusionKind fusion = FusionKind::Net;
    Ablation ablation = Ablation::Full;
};

// Narrow configuration for finite-difference verification; full-width checks
// would drown the battery in compute without testing anything new.
inline ModelConfig reduced_model_config() {
    ModelConfig cfg;
    cfg.channels = {2, 2, 2, 2, 4};
    cfg.attention_hidden = 8;
    cfg.fusion_hidden = 8;
    cfg.classes = 3;
    return cfg;
}

// Face branch, context branch, global-local attention and fusion assembled
// into the full classifier: encode -> attend -> fuse. Encoders are held
// behind EncoderInterface so alternative backbones can be swapped in.
template <class T>
class GlamorNet {
public:
    struct Output {
        Tensor<T> logits;         // [N,K]
        Tensor<T> attention;      // [N,Hc,Wc]; empty when no context branch
        Tensor<T> fusion_weights; // [N,2]; empty unless full model + net fusion
    };

    GlamorNet() : GlamorNet(ModelConfig{}) {}

    explicit GlamorNet(ModelConfig cfg) : cfg_(std::move(cfg)) {
        const int64_t d = cfg_.channels.back();
        if (uses_face_branch())
            face_encoder_ = std::make_unique<CnnEncoder<T>>(3, cfg_.channels);
        if (uses_context_branch()) {
            context_encoder_ = std::make_unique<CnnEncoder<T>>(3, cfg_.channels);
            gla_ = GlobalLocalAttention<T>(cfg_.attention, d, cfg_.attention_hidden);
        }
        if (cfg_.ablation == Ablation::Full)
            fusion_ = FusionModule<T>(cfg_.fusion, d, cfg_.classes, cfg_.fusion_hidden,
                                      cfg_.dropout);
        else
            head_ = MlpHead<T>(d, cfg_.fusion_hidden, cfg_.classes, cfg_.dropout);
    }

    void init(Rng& rng) {
        if (face_encoder_)
            face_encoder_->init(rng);
        if (context_encoder_) {
            context_encoder_->init(rng);
            gla_.init(rng);
        }
        if (cfg_.ablation == Ablation::Full)
            fusion_.init(rng);
        else
            head_.init(rng);
    }

    bool uses_face_branch() const {
        return cfg_.ablation != Ablation::ContextOnly ||
               cfg_.attention == AttentionKind::GlobalLocal;
    }

    bool uses_context_branch() const { return cfg_.ablation != Ablation::FaceOnly; }

    // Swap in a conforming feature extractor; its channel width must match
    // the configured feature dimension.
    void set_face_encoder(std::unique_ptr<EncoderInterface<T>> enc) {
        check_encoder(enc.get());
        face_encoder_ = std::move(enc);
    }

    void set_context_encoder(std::unique_ptr<EncoderInterface<T>> enc) {
        check_encoder(enc.get());
        context_encoder_ = std::move(enc);
    }

    Output forward(const Tensor<T>& face, const Tensor<T>& context, Mode mode,
                   Rng* dropout_rng = nullptr) {
        Tensor<T> v_f;
        if (uses_face_branch())
            v_f = face_pool_.forward(face_encoder_->forward(face, mode), mode);

        if (cfg_.ablation == Ablation::FaceOnly) {
            has_forward_ = mode != Mode::Eval;
            return {head_.forward(v_f, mode, dropout_rng), Tensor<T>{}, Tensor<T>{}};
        }

        Tensor<T> features = context_encoder_->forward(context, mode);
        auto attended = gla_.forward(v_f, features, mode);
        has_forward_ = mode != Mode::Eval;

        if (cfg_.ablation == Ablation::ContextOnly) {
            // The face vector may still guide the attention map, but only the
            // attended context reaches the classifier.
            return {head_.forward(attended.context_vector, mode, dropout_rng),
                    std::move(attended.attention), Tensor<T>{}};
        }

        auto fused = fusion_.forward(v_f, attended.context_vector, mode, dropout_rng);
        return {std::move(fused.logits), std::move(attended.attention),
                std::move(fused.weights)};
    }

    void backward(const Tensor<T>& grad_logits) {
        if (!has_forward_)
            throw StateError("model: backward called before forward");

        if (cfg_.ablation == Ablation::FaceOnly) {
            face_encoder_->backward(face_pool_.backward(head_.backward(grad_logits)));
            return;
        }

        Tensor<T> gv_f; // accumulated over fusion and attention paths
        Tensor<T> gv_c;
        if (cfg_.ablation == Ablation::ContextOnly) {
            gv_c = head_.backward(grad_logits);
        } else {
            auto g = fusion_.backward(grad_logits);
            gv_f = std::move(g.grad_face);
            gv_c = std::move(g.grad_context);
        }

        auto ga = gla_.backward(gv_c);
        context_encoder_->backward(ga.grad_context_features);

        if (!uses_face_branch())
            return;
        if (gla_.uses_face_vector()) {
            if (gv_f.empty())
                gv_f = std::move(ga.grad_face_vector);
            else
                gv_f = add(gv_f, ga.grad_face_vector);
        }
        if (!gv_f.empty())
            face_encoder_->backward(face_pool_.backward(gv_f));
    }

    ParamRefs<T> named_params() {
        ParamRefs<T> out;
        if (face_encoder_)
            face_encoder_->collect(out, "face_encoder");
        if (context_encoder_) {
            context_encoder_->collect(out, "context_encoder");
            gla_.collect(out, "gla");
        }
        if (cfg_.ablation == Ablation::Full)
            fusion_.collect(out, "fusion");
        else
            head_.collect(out, "classifier");
        return out;
    }

    const ModelConfig& config() const { return cfg_; }
    EncoderInterface<T>& face_encoder() { return *face_encoder_; }
    EncoderInterface<T>& context_encoder() { return *context_encoder_; }
    GlobalLocalAttention<T>& gla() { return gla_; }
    FusionModule<T>& fusion() { return fusion_; }

private:
    void check_encoder(const EncoderInterface<T>* enc) const {
        if (enc == nullptr)
            throw ConfigError("model: null encoder");
        if (enc->out_channels() != cfg_.channels.back())
            throw ConfigError("model: encoder emits " + std::to_string(enc->out_channels()) +
                              " channels, configuration expects " +
                              std::to_string(cfg_.channels.back()));
    }

    ModelConfig cfg_;
    std::unique_ptr<EncoderInterface<T>> face_encoder_;
    std::unique_ptr<EncoderInterface<T>> context_encoder_;
    GlobalAvgPool<T> face_pool_;
    GlobalLocalAttention<T> gla_;
    FusionModule<T> fusion_;
    MlpHead<T> head_;
    bool has_forward_ = false;
};

} // namespace glamor
