#pragma once

#include <string>

#include "glamor/layers.hpp"

namespace glamor {

enum class FusionKind { Net, Add, Max };

inline const char* fusion_kind_name(FusionKind k) {
    switch (k) {
    case FusionKind::Net: return "net";
    case FusionKind::Add: return "add";
    case FusionKind::Max: return "max";
    }
    return "?";
}

// Linear -> ReLU -> Dropout -> Linear classifier head.
template <class T>
class MlpHead {
public:
    MlpHead() = default;
    MlpHead(int64_t in, int64_t hidden, int64_t out, double dropout = 0.5)
        : fc1(in, hidden), fc2(hidden, out), drop(dropout) {}

    void init(Rng& rng) {
        fc1.init(rng);
        fc2.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) {
        Tensor<T> h = relu.forward(fc1.forward(x, mode), mode);
        return fc2.forward(drop.forward(h, mode, rng), mode);
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        return fc1.backward(relu.backward(drop.backward(fc2.backward(grad_out))));
    }

    void collect(ParamRefs<T>& out, const std::string& prefix) {
        fc1.collect(out, prefix + ".fc1");
        fc2.collect(out, prefix + ".fc2");
    }

    Linear<T> fc1, fc2;
    ReLU<T> relu;
    Dropout<T> drop;
};

// Two-layer scalar score network, one per branch.
template <class T>
class ScoreNet {
public:
    ScoreNet() = default;
    ScoreNet(int64_t in, int64_t hidden) : fc1(in, hidden), fc2(hidden, 1) {}

    void init(Rng& rng) {
        fc1.init(rng);
        fc2.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        return fc2.forward(relu.forward(fc1.forward(x, mode), mode), mode);
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        return fc1.backward(relu.backward(fc2.backward(grad_out)));
    }

    void collect(ParamRefs<T>& out, const std::string& prefix) {
        fc1.collect(out, prefix + ".fc1");
        fc2.collect(out, prefix + ".fc2");
    }

    Linear<T> fc1, fc2;
    ReLU<T> relu;
};

// Adaptive fusion of the face and context vectors. The Net variant scores
// each branch independently, softmax-normalizes the two scores into weights
// that sum to 1, scales each vector by its weight and classifies the concat.
// Add/Max combine the vectors elementwise and classify the result.
template <class T>
class FusionModule {
public:
    struct Output {
        Tensor<T> logits;  // [N,K]
        Tensor<T> weights; // [N,2] = (w_f, w_c); empty for Add/Max
    };

    struct Grads {
        Tensor<T> grad_face;    // [N,D]
        Tensor<T> grad_context; // [N,D]
    };

    FusionModule() = default;

    FusionModule(FusionKind kind, int64_t feat_dim, int64_t classes, int64_t hidden = 128,
                 double dropout = 0.5)
        : kind_(kind), feat_dim_(feat_dim) {
        const int64_t head_in = kind == FusionKind::Net ? 2 * feat_dim : feat_dim;
        head_ = MlpHead<T>(head_in, hidden, classes, dropout);
        if (kind == FusionKind::Net) {
            face_score_ = ScoreNet<T>(feat_dim, hidden);
            context_score_ = ScoreNet<T>(feat_dim, hidden);
        }
    }

    void init(Rng& rng) {
        head_.init(rng);
        if (kind_ == FusionKind::Net) {
            face_score_.init(rng);
            context_score_.init(rng);
        }
    }

    // Branch weights (w_f, w_c): two-way softmax over the branch scores.
    Tensor<T> branch_weights(const Tensor<T>& v_face, const Tensor<T>& v_context, Mode mode) {
        if (kind_ != FusionKind::Net)
            throw StateError("fusion: branch weights only exist for the net variant");
        Tensor<T> s_f = face_score_.forward(v_face, mode);
        Tensor<T> s_c = context_score_.forward(v_context, mode);
        const int64_t n = v_face.dim(0);
        Tensor<T> s({n, 2});
        for (int64_t i = 0; i < n; ++i) {
            s.at(i, 0) = s_f.at(i, 0);
            s.at(i, 1) = s_c.at(i, 0);
        }
        return softmax(s, 1);
    }

    Output forward(const Tensor<T>& v_face, const Tensor<T>& v_context, Mode mode, Rng* rng) {
        if (v_face.shape() != v_context.shape() || v_face.rank() != 2 ||
            v_face.dim(1) != feat_dim_)
            throw ShapeError("fusion: expected two [N," + std::to_string(feat_dim_) +
                             "] inputs, got " + shape_str(v_face.shape()) + " and " +
                             shape_str(v_context.shape()));
        const int64_t n = v_face.dim(0), d = feat_dim_;
        has_forward_ = mode != Mode::Eval;

        switch (kind_) {
        case FusionKind::Net: {
            v_face_ = v_face;
            v_context_ = v_context;
            weights_ = branch_weights(v_face, v_context, mode);
            Tensor<T> u({n, 2 * d});
            for (int64_t i = 0; i < n; ++i) {
                const T wf = weights_.at(i, 0), wc = weights_.at(i, 1);
                T* row = u.data() + i * 2 * d;
                const T* f = v_face.data() + i * d;
                const T* c = v_context.data() + i * d;
                for (int64_t j = 0; j < d; ++j) {
                    row[j] = wf * f[j];
                    row[d + j] = wc * c[j];
                }
            }
            return {head_.forward(u, mode, rng), weights_};
        }
        case FusionKind::Add:
            return {head_.forward(add(v_face, v_context), mode, rng), Tensor<T>{}};
        case FusionKind::Max: {
            max_from_face_.assign(static_cast<size_t>(n * d), 0);
            Tensor<T> u({n, d});
            for (int64_t i = 0; i < n * d; ++i) {
                // ties route to the face branch
                const bool face_wins = v_face[i] >= v_context[i];
                max_from_face_[static_cast<size_t>(i)] = face_wins;
                u[i] = face_wins ? v_face[i] : v_context[i];
            }
            return {head_.forward(u, mode, rng), Tensor<T>{}};
        }
        }
        throw ConfigError("fusion: unknown variant");
    }

    Grads backward(const Tensor<T>& grad_logits) {
        if (!has_forward_)
            throw StateError("fusion: backward called before forward");
        Tensor<T> gu = head_.backward(grad_logits);

        switch (kind_) {
        case FusionKind::Net: {
            const int64_t n = gu.dim(0), d = feat_dim_;
            Tensor<T> gv_f({n, d}), gv_c({n, d});
            Tensor<T> gw_f({n, 1}), gw_c({n, 1});
            for (int64_t i = 0; i < n; ++i) {
                const T wf = weights_.at(i, 0), wc = weights_.at(i, 1);
                const T* gu_f = gu.data() + i * 2 * d;
                const T* gu_c = gu_f + d;
                const T* f = v_face_.data() + i * d;
                const T* c = v_context_.data() + i * d;
                T dot_f = T(0), dot_c = T(0);
                for (int64_t j = 0; j < d; ++j) {
                    gv_f.at(i, j) = wf * gu_f[j];
                    gv_c.at(i, j) = wc * gu_c[j];
                    dot_f += gu_f[j] * f[j];
                    dot_c += gu_c[j] * c[j];
                }
                // d(w_f)/d(s_f) = w_f*w_c = -d(w_f)/d(s_c)
                const T gs = wf * wc * (dot_f - dot_c);
                gw_f.at(i, 0) = gs;
                gw_c.at(i, 0) = -gs;
            }
            Tensor<T> gv_f_score = face_score_.backward(gw_f);
            Tensor<T> gv_c_score = context_score_.backward(gw_c);
            for (int64_t i = 0; i < gv_f.size(); ++i) {
                gv_f[i] += gv_f_score[i];
                gv_c[i] += gv_c_score[i];
            }
            return {std::move(gv_f), std::move(gv_c)};
        }
        case FusionKind::Add:
            return {gu, gu};
        case FusionKind::Max: {
            Tensor<T> gv_f(gu.shape()), gv_c(gu.shape());
            for (int64_t i = 0; i < gu.size(); ++i) {
                if (max_from_face_[static_cast<size_t>(i)])
                    gv_f[i] = gu[i];
                else
                    gv_c[i] = gu[i];
            }
            return {std::move(gv_f), std::move(gv_c)};
        }
        }
        throw ConfigError("fusion: unknown variant");
    }

    void collect(ParamRefs<T>& out, const std::string& prefix) {
        if (kind_ == FusionKind::Net) {
            face_score_.collect(out, prefix + ".face_score");
            context_score_.collect(out, prefix + ".context_score");
        }
        head_.collect(out, prefix + ".classifier");
    }

    FusionKind kind() const { return kind_; }
    MlpHead<T>& head() { return head_; }

private:
    FusionKind kind_ = FusionKind::Net;
    int64_t feat_dim_ = 0;
    ScoreNet<T> face_score_, context_score_;
    MlpHead<T> head_;

    Tensor<T> v_face_, v_context_, weights_;
    std::vector<uint8_t> max_from_face_;
    bool has_forward_ = false;
};

} // namespace glamor
