#pragma once

#include <string>

#include "glamor/layers.hpp"

namespace glamor {

// How context cells are scored before the spatial softmax.
//   GlobalLocal: score([v_f ; v_ij])  - face vector guides the attention
//   ContextOnly: score(v_ij)          - cell features alone
//   None:        uniform weights 1/(Hc*Wc)
enum class AttentionKind { GlobalLocal, ContextOnly, None };

inline const char* attention_kind_name(AttentionKind k) {
    switch (k) {
    case AttentionKind::GlobalLocal: return "gla";
    case AttentionKind::ContextOnly: return "ca";
    case AttentionKind::None: return "none";
    }
    return "?";
}

// Spatial mean of the face feature map: [N,D,H,W] -> [N,D].
template <class T>
Tensor<T> pool_face(const Tensor<T>& face_features) {
    if (face_features.rank() != 4)
        throw ShapeError("pool_face: expected [N,D,H,W], got " + shape_str(face_features.shape()));
    const int64_t n = face_features.dim(0), d = face_features.dim(1);
    const int64_t hw = face_features.dim(2) * face_features.dim(3);
    Tensor<T> v({n, d});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < d; ++c) {
            const T* src = face_features.data() + (i * d + c) * hw;
            T s = T(0);
            for (int64_t p = 0; p < hw; ++p)
                s += src[p];
            v.at(i, c) = s / static_cast<T>(hw);
        }
    return v;
}

// [N,D,Hc,Wc] -> [N, Hc*Wc, D]; cell m = i*Wc + j holds the feature vector
// at location (i,j).
template <class T>
Tensor<T> unfold_context(const Tensor<T>& context_features) {
    if (context_features.rank() != 4)
        throw ShapeError("unfold_context: expected [N,D,Hc,Wc], got " +
                         shape_str(context_features.shape()));
    const int64_t n = context_features.dim(0), d = context_features.dim(1);
    const int64_t hc = context_features.dim(2), wc = context_features.dim(3);
    const int64_t m = hc * wc;
    Tensor<T> cells({n, m, d});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < d; ++c) {
            const T* src = context_features.data() + (i * d + c) * m;
            for (int64_t cell = 0; cell < m; ++cell)
                cells.at(i, cell, c) = src[cell];
        }
    return cells;
}

// Inverse of unfold_context.
template <class T>
Tensor<T> fold_context(const Tensor<T>& cells, int64_t hc, int64_t wc) {
    if (cells.rank() != 3 || cells.dim(1) != hc * wc)
        throw ShapeError("fold_context: cells shape " + shape_str(cells.shape()) +
                         " does not match grid " + std::to_string(hc) + "x" + std::to_string(wc));
    const int64_t n = cells.dim(0), d = cells.dim(2), m = hc * wc;
    Tensor<T> out({n, d, hc, wc});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < d; ++c) {
            T* dst = out.data() + (i * d + c) * m;
            for (int64_t cell = 0; cell < m; ++cell)
                dst[cell] = cells.at(i, cell, c);
        }
    return out;
}

template <class T>
struct AttendResult {
    Tensor<T> context_vector; // [N,D]
    Tensor<T> attention;      // [N,M], rows sum to 1
};

// Spatial softmax over raw scores followed by the attention-weighted average
// of the cells.
template <class T>
AttendResult<T> attend(const Tensor<T>& scores, const Tensor<T>& cells) {
    if (scores.rank() != 2 || cells.rank() != 3 || scores.dim(0) != cells.dim(0) ||
        scores.dim(1) != cells.dim(1))
        throw ShapeError("attend: scores " + shape_str(scores.shape()) + " vs cells " +
                         shape_str(cells.shape()));
    const int64_t n = cells.dim(0), m = cells.dim(1), d = cells.dim(2);
    Tensor<T> attn = softmax(scores, 1);
    Tensor<T> v({n, d});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t cell = 0; cell < m; ++cell) {
            const T a = attn.at(i, cell);
            const T* src = cells.data() + (i * m + cell) * d;
            T* dst = v.data() + i * d;
            for (int64_t c = 0; c < d; ++c)
                dst[c] += a * src[c];
        }
    return {std::move(v), std::move(attn)};
}

// Scores every context cell against the pooled face vector with a small
// shared network, normalizes the scores spatially, and returns the weighted
// context vector together with the attention map.
template <class T>
class GlobalLocalAttention {
public:
    struct Output {
        Tensor<T> context_vector; // [N,D]
        Tensor<T> attention;      // [N,Hc,Wc]
    };

    struct Grads {
        Tensor<T> grad_face_vector;      // [N,D]
        Tensor<T> grad_context_features; // [N,D,Hc,Wc]
    };

    GlobalLocalAttention() = default;

    GlobalLocalAttention(AttentionKind kind, int64_t feat_dim, int64_t hidden = 128)
        : kind_(kind), feat_dim_(feat_dim) {
        if (kind_ != AttentionKind::None) {
            const int64_t in = kind_ == AttentionKind::GlobalLocal ? 2 * feat_dim : feat_dim;
            score_hidden_ = Linear<T>(in, hidden);
            score_out_ = Linear<T>(hidden, 1);
        }
    }

    void init(Rng& rng) {
        if (kind_ != AttentionKind::None) {
            score_hidden_.init(rng);
            score_out_.init(rng);
        }
    }

    // One score network evaluated at every cell; weights are shared.
    Tensor<T> scores(const Tensor<T>& face_vector, const Tensor<T>& cells, Mode mode) {
        const int64_t n = cells.dim(0), m = cells.dim(1), d = cells.dim(2);
        if (d != feat_dim_)
            throw ShapeError("attention scores: cells " + shape_str(cells.shape()) +
                             " do not carry " + std::to_string(feat_dim_) + "-dim features");
        if (kind_ == AttentionKind::GlobalLocal && face_vector.shape() != Shape{n, feat_dim_})
            throw ShapeError("attention scores: face vector " + shape_str(face_vector.shape()) +
                             " vs cells " + shape_str(cells.shape()));
        Tensor<T> input;
        if (kind_ == AttentionKind::GlobalLocal) {
            input = Tensor<T>({n * m, 2 * d});
            for (int64_t i = 0; i < n; ++i)
                for (int64_t cell = 0; cell < m; ++cell) {
                    T* row = input.data() + (i * m + cell) * 2 * d;
                    std::memcpy(row, face_vector.data() + i * d, static_cast<size_t>(d) * sizeof(T));
                    std::memcpy(row + d, cells.data() + (i * m + cell) * d,
                                static_cast<size_t>(d) * sizeof(T));
                }
        } else {
            input = cells.reshape({n * m, d});
        }
        Tensor<T> h = score_relu_.forward(score_hidden_.forward(input, mode), mode);
        Tensor<T> s = score_out_.forward(h, mode);
        return s.reshape({n, m});
    }

    Output forward(const Tensor<T>& face_vector, const Tensor<T>& context_features, Mode mode) {
        const int64_t n = context_features.dim(0);
        hc_ = context_features.dim(2);
        wc_ = context_features.dim(3);
        const int64_t m = hc_ * wc_;
        cells_ = unfold_context(context_features);

        if (kind_ == AttentionKind::None) {
            attn_ = Tensor<T>::full({n, m}, T(1) / static_cast<T>(m));
            Tensor<T> v({n, feat_dim_});
            for (int64_t i = 0; i < n; ++i)
                for (int64_t cell = 0; cell < m; ++cell) {
                    const T* src = cells_.data() + (i * m + cell) * feat_dim_;
                    T* dst = v.data() + i * feat_dim_;
                    for (int64_t c = 0; c < feat_dim_; ++c)
                        dst[c] += src[c] / static_cast<T>(m);
                }
            has_forward_ = mode != Mode::Eval;
            return {std::move(v), attn_.reshape({n, hc_, wc_})};
        }

        Tensor<T> s = scores(face_vector, cells_, mode);
        auto res = attend(s, cells_);
        attn_ = res.attention;
        has_forward_ = mode != Mode::Eval;
        return {std::move(res.context_vector), attn_.reshape({n, hc_, wc_})};
    }

    Grads backward(const Tensor<T>& grad_context_vector) {
        if (!has_forward_)
            throw StateError("attention: backward called before forward");
        const int64_t n = cells_.dim(0), m = cells_.dim(1), d = cells_.dim(2);
        if (grad_context_vector.shape() != Shape{n, d})
            throw ShapeError("attention backward: grad shape " +
                             shape_str(grad_context_vector.shape()));

        Tensor<T> g_cells({n, m, d});
        Tensor<T> gv_f({n, d});

        // Direct path through the weighted average.
        for (int64_t i = 0; i < n; ++i)
            for (int64_t cell = 0; cell < m; ++cell) {
                const T a = attn_.at(i, cell);
                const T* g = grad_context_vector.data() + i * d;
                T* dst = g_cells.data() + (i * m + cell) * d;
                for (int64_t c = 0; c < d; ++c)
                    dst[c] = a * g[c];
            }

        if (kind_ == AttentionKind::None)
            return {std::move(gv_f), fold_context(g_cells, hc_, wc_)};

        // Softmax path: ga_m = <gv_c, cell_m>, then gs = a*(ga - sum a*ga).
        Tensor<T> ga({n, m});
        for (int64_t i = 0; i < n; ++i)
            for (int64_t cell = 0; cell < m; ++cell) {
                const T* g = grad_context_vector.data() + i * d;
                const T* src = cells_.data() + (i * m + cell) * d;
                T s = T(0);
                for (int64_t c = 0; c < d; ++c)
                    s += g[c] * src[c];
                ga.at(i, cell) = s;
            }
        Tensor<T> gs({n, m});
        for (int64_t i = 0; i < n; ++i) {
            T dot = T(0);
            for (int64_t cell = 0; cell < m; ++cell)
                dot += attn_.at(i, cell) * ga.at(i, cell);
            for (int64_t cell = 0; cell < m; ++cell)
                gs.at(i, cell) = attn_.at(i, cell) * (ga.at(i, cell) - dot);
        }

        Tensor<T> g_hidden = score_out_.backward(gs.reshape({n * m, 1}));
        Tensor<T> g_input = score_hidden_.backward(score_relu_.backward(g_hidden));

        if (kind_ == AttentionKind::GlobalLocal) {
            // The face vector fed every cell's concat, so its gradient sums
            // over cells; the cell half joins the direct path.
            for (int64_t i = 0; i < n; ++i)
                for (int64_t cell = 0; cell < m; ++cell) {
                    const T* row = g_input.data() + (i * m + cell) * 2 * d;
                    T* gf = gv_f.data() + i * d;
                    T* gc = g_cells.data() + (i * m + cell) * d;
                    for (int64_t c = 0; c < d; ++c) {
                        gf[c] += row[c];
                        gc[c] += row[d + c];
                    }
                }
        } else {
            for (int64_t i = 0; i < n * m * d; ++i)
                g_cells[i] += g_input[i];
        }
        return {std::move(gv_f), fold_context(g_cells, hc_, wc_)};
    }

    void collect(ParamRefs<T>& out, const std::string& prefix) {
        if (kind_ == AttentionKind::None)
            return;
        score_hidden_.collect(out, prefix + ".score_hidden");
        score_out_.collect(out, prefix + ".score_out");
    }

    AttentionKind kind() const { return kind_; }
    bool uses_face_vector() const { return kind_ == AttentionKind::GlobalLocal; }

private:
    AttentionKind kind_ = AttentionKind::GlobalLocal;
    int64_t feat_dim_ = 0;
    Linear<T> score_hidden_;
    ReLU<T> score_relu_;
    Linear<T> score_out_;

    Tensor<T> cells_; // [N,M,D]
    Tensor<T> attn_;  // [N,M]
    int64_t hc_ = 0, wc_ = 0;
    bool has_forward_ = false;
};

} // namespace glamor
