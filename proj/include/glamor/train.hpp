#pragma once

#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "glamor/checkpoint.hpp"
#include "glamor/dataset.hpp"
#include "glamor/metrics.hpp"
#include "glamor/model.hpp"

namespace glamor {

struct TrainConfig {
    double lr = 0.005;
    double momentum = 0.9;
    int batch_size = 16;
    int epochs_pretrain = 2;
    int epochs_joint = 10;
    uint64_t seed = 0;
    std::string precision = "f32"; // f32 | f64
    int threads = 1;               // data-pipeline parallelism only

    void validate() const {
        if (lr <= 0.0)
            throw ConfigError("train: lr must be positive");
        if (momentum < 0.0 || momentum >= 1.0)
            throw ConfigError("train: momentum must be in [0,1)");
        if (batch_size < 2)
            throw ConfigError("train: batch_size must be >= 2");
        if (epochs_pretrain < 0 || epochs_joint < 0)
            throw ConfigError("train: epoch counts must be >= 0");
        if (precision != "f32" && precision != "f64")
            throw ConfigError("train: precision must be f32 or f64");
        if (threads < 1)
            throw ConfigError("train: threads must be >= 1");
    }
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {{"lr", c.lr},
            {"momentum", c.momentum},
            {"batch_size", c.batch_size},
            {"epochs_pretrain", c.epochs_pretrain},
            {"epochs_joint", c.epochs_joint},
            {"seed", c.seed},
            {"precision", c.precision},
            {"threads", c.threads}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("momentum")) c.momentum = j.at("momentum").get<double>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("epochs_pretrain")) c.epochs_pretrain = j.at("epochs_pretrain").get<int>();
    if (j.contains("epochs_joint")) c.epochs_joint = j.at("epochs_joint").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("precision")) c.precision = j.at("precision").get<std::string>();
    if (j.contains("threads")) c.threads = j.at("threads").get<int>();
    return c;
}

inline AttentionKind attention_kind_from_name(const std::string& s) {
    if (s == "gla") return AttentionKind::GlobalLocal;
    if (s == "ca") return AttentionKind::ContextOnly;
    if (s == "none") return AttentionKind::None;
    throw ConfigError("unknown attention variant '" + s + "' (gla|ca|none)");
}

inline FusionKind fusion_kind_from_name(const std::string& s) {
    if (s == "net") return FusionKind::Net;
    if (s == "add") return FusionKind::Add;
    if (s == "max") return FusionKind::Max;
    throw ConfigError("unknown fusion variant '" + s + "' (net|add|max)");
}

inline Ablation ablation_from_name(const std::string& s) {
    if (s == "full") return Ablation::Full;
    if (s == "face_only") return Ablation::FaceOnly;
    if (s == "context_only") return Ablation::ContextOnly;
    throw ConfigError("unknown ablation '" + s + "' (full|face_only|context_only)");
}

inline nlohmann::json model_config_to_json(const ModelConfig& m) {
    return {{"channels", m.channels},
            {"attention_hidden", m.attention_hidden},
            {"fusion_hidden", m.fusion_hidden},
            {"classes", m.classes},
            {"dropout", m.dropout},
            {"attention", attention_kind_name(m.attention)},
            {"fusion", fusion_kind_name(m.fusion)},
            {"ablation", ablation_name(m.ablation)}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig m;
    if (j.contains("channels")) m.channels = j.at("channels").get<std::vector<int64_t>>();
    if (j.contains("attention_hidden")) m.attention_hidden = j.at("attention_hidden").get<int64_t>();
    if (j.contains("fusion_hidden")) m.fusion_hidden = j.at("fusion_hidden").get<int64_t>();
    if (j.contains("classes")) m.classes = j.at("classes").get<int64_t>();
    if (j.contains("dropout")) m.dropout = j.at("dropout").get<double>();
    if (j.contains("attention"))
        m.attention = attention_kind_from_name(j.at("attention").get<std::string>());
    if (j.contains("fusion")) m.fusion = fusion_kind_from_name(j.at("fusion").get<std::string>());
    if (j.contains("ablation")) m.ablation = ablation_from_name(j.at("ablation").get<std::string>());
    return m;
}

inline nlohmann::json prep_options_to_json(const PrepOptions& p) {
    return {{"face_size", p.face_size},
            {"context_resize_h", p.context_resize_h},
            {"context_resize_w", p.context_resize_w},
            {"context_crop", p.context_crop},
            {"mask_face", p.mask_face}};
}

inline PrepOptions prep_options_from_json(const nlohmann::json& j) {
    PrepOptions p;
    if (j.contains("face_size")) p.face_size = j.at("face_size").get<int64_t>();
    if (j.contains("context_resize_h")) p.context_resize_h = j.at("context_resize_h").get<int64_t>();
    if (j.contains("context_resize_w")) p.context_resize_w = j.at("context_resize_w").get<int64_t>();
    if (j.contains("context_crop")) p.context_crop = j.at("context_crop").get<int64_t>();
    if (j.contains("mask_face")) p.mask_face = j.at("mask_face").get<bool>();
    return p;
}

// Manifest records with their decoded images held in memory.
struct LoadedDataset {
    std::vector<SampleRecord> records;
    std::vector<TensorF> images;

    size_t size() const { return records.size(); }
};

inline LoadedDataset load_dataset(const std::string& manifest_path,
                                  const std::string& split_filter = "") {
    LoadedDataset ds;
    for (auto& r : read_manifest(manifest_path)) {
        if (!split_filter.empty() && r.split != split_filter)
            continue;
        ds.images.push_back(load_ppm(r.image_path));
        ds.records.push_back(std::move(r));
    }
    return ds;
}

namespace detail {

// Bounded parallel-for over sample indices. Work for index i must not depend
// on any other index, so results are identical for any thread count.
inline void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    const size_t workers = std::min<size_t>(static_cast<size_t>(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (size_t i = w; i < n; i += workers)
                fn(i);
        });
    for (auto& t : pool)
        t.join();
}

} // namespace detail

template <class T>
struct Batch {
    Tensor<T> faces;    // [B,3,F,F]
    Tensor<T> contexts; // [B,3,C,C]
    std::vector<int> labels;
};

// Assembles one batch; crop rngs are derived from (seed, epoch, record index)
// so results do not depend on batch boundaries or thread count.
template <class T>
Batch<T> make_batch(const LoadedDataset& ds, const std::vector<size_t>& indices, PrepMode mode,
                    uint64_t seed, uint64_t epoch, const PrepOptions& prep, int threads) {
    const int64_t b = static_cast<int64_t>(indices.size());
    Batch<T> out;
    out.faces = Tensor<T>({b, 3, prep.face_size, prep.face_size});
    out.contexts = Tensor<T>({b, 3, prep.context_crop, prep.context_crop});
    out.labels.resize(static_cast<size_t>(b));
    const int64_t face_n = 3 * prep.face_size * prep.face_size;
    const int64_t ctx_n = 3 * prep.context_crop * prep.context_crop;
    detail::parallel_for(indices.size(), threads, [&](size_t bi) {
        const size_t rec = indices[bi];
        Rng crop_rng = derive_rng(seed, "crop", epoch * ds.size() + rec);
        PreparedSample ps = prepare_from_image(ds.images[rec], ds.records[rec], mode,
                                               mode == PrepMode::Train ? &crop_rng : nullptr, prep);
        for (int64_t i = 0; i < face_n; ++i)
            out.faces[static_cast<int64_t>(bi) * face_n + i] = static_cast<T>(ps.face[i]);
        for (int64_t i = 0; i < ctx_n; ++i)
            out.contexts[static_cast<int64_t>(bi) * ctx_n + i] = static_cast<T>(ps.context[i]);
        out.labels[bi] = ps.label;
    });
    return out;
}

// Splits indices into batches; a trailing batch of one sample is folded into
// the previous batch because train-mode batchnorm needs at least two rows.
inline std::vector<std::vector<size_t>> make_batches(std::vector<size_t> order, int batch_size) {
    std::vector<std::vector<size_t>> batches;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size))
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() +
                                 static_cast<std::ptrdiff_t>(
                                     std::min(order.size(), start + static_cast<size_t>(batch_size))));
    if (batches.size() >= 2 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back()[0]);
        batches.pop_back();
    }
    return batches;
}

struct EpochRecord {
    int epoch = 0;
    std::string split;
    double loss = 0.0;
    double accuracy = 0.0;
    double wf_min = 0.0, wf_max = 0.0; // fusion face-branch weight range
    bool has_weights = false;

    nlohmann::json to_json() const {
        nlohmann::json j{{"epoch", epoch}, {"split", split}, {"loss", loss},
                         {"accuracy", accuracy}};
        if (has_weights) {
            j["wf_min"] = wf_min;
            j["wf_max"] = wf_max;
        }
        return j;
    }
};

template <class T>
struct EvalOutcome {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<int> preds;
    std::vector<int> labels;
    double wf_min = 1.0, wf_max = 0.0;
    bool has_weights = false;
};

template <class T>
EvalOutcome<T> evaluate_model(GlamorNet<T>& net, const LoadedDataset& ds, const PrepOptions& prep,
                              int batch_size, int threads = 1) {
    if (ds.size() == 0)
        throw ValueError("evaluate: empty dataset");
    std::vector<size_t> order(ds.size());
    for (size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    EvalOutcome<T> out;
    double loss_sum = 0.0;
    for (const auto& batch_idx : make_batches(order, batch_size)) {
        Batch<T> batch = make_batch<T>(ds, batch_idx, PrepMode::Eval, 0, 0, prep, threads);
        auto y = net.forward(batch.faces, batch.contexts, Mode::Eval, nullptr);
        auto ce = cross_entropy(y.logits, batch.labels);
        loss_sum += static_cast<double>(ce.loss) * static_cast<double>(batch_idx.size());
        Tensor<int64_t> pred = argmax(y.logits, 1);
        for (int64_t i = 0; i < pred.size(); ++i) {
            out.preds.push_back(static_cast<int>(pred[i]));
            out.labels.push_back(batch.labels[static_cast<size_t>(i)]);
        }
        if (!y.fusion_weights.empty()) {
            out.has_weights = true;
            for (int64_t i = 0; i < y.fusion_weights.dim(0); ++i) {
                out.wf_min = std::min(out.wf_min, static_cast<double>(y.fusion_weights.at(i, 0)));
                out.wf_max = std::max(out.wf_max, static_cast<double>(y.fusion_weights.at(i, 0)));
            }
        }
    }
    out.loss = loss_sum / static_cast<double>(ds.size());
    out.accuracy = accuracy(out.preds, out.labels);
    return out;
}

// Trains one encoder branch in isolation: pooled features feed a disposable
// linear head that is dropped afterwards.
template <class T>
void pretrain_branch(EncoderInterface<T>& encoder, bool face_branch, const LoadedDataset& ds,
                     const TrainConfig& cfg, const PrepOptions& prep, std::ostream* log,
                     int64_t classes = 7) {
    cfg.validate();
    if (ds.size() == 0)
        throw ValueError("pretrain: empty dataset");
    const char* tag = face_branch ? "pretrain_face" : "pretrain_context";
    const int64_t d = encoder.out_channels();

    Rng head_rng = derive_rng(cfg.seed, std::string(tag) + "_head");
    Linear<T> head(d, classes);
    head.init(head_rng);
    GlobalAvgPool<T> pool;

    ParamRefs<T> params;
    encoder.collect(params, face_branch ? "face_encoder" : "context_encoder");
    head.collect(params, "pretrain_head");
    Sgd<T> sgd(cfg.lr, cfg.momentum);

    std::vector<size_t> order(ds.size());
    for (size_t i = 0; i < order.size(); ++i)
        order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs_pretrain; ++epoch) {
        Rng shuffle_rng = derive_rng(cfg.seed, std::string(tag) + "_shuffle", static_cast<uint64_t>(epoch));
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        size_t seen = 0;
        for (const auto& batch_idx : make_batches(order, cfg.batch_size)) {
            Batch<T> batch = make_batch<T>(ds, batch_idx, PrepMode::Train, cfg.seed,
                                           static_cast<uint64_t>(epoch), prep, cfg.threads);
            const Tensor<T>& x = face_branch ? batch.faces : batch.contexts;
            Tensor<T> v = pool.forward(encoder.forward(x, Mode::Train), Mode::Train);
            Tensor<T> logits = head.forward(v, Mode::Train);
            auto ce = cross_entropy(logits, batch.labels);
            encoder.backward(pool.backward(head.backward(ce.grad_logits)));
            sgd.step(params);
            loss_sum += static_cast<double>(ce.loss) * static_cast<double>(batch_idx.size());
            seen += batch_idx.size();
        }
        if (log) {
            nlohmann::json j{{"epoch", epoch},
                             {"split", tag},
                             {"loss", loss_sum / static_cast<double>(seen)},
                             {"accuracy", -1.0}};
            *log << j.dump() << "\n";
        }
    }
}

template <class T>
struct TrainResult {
    std::vector<EpochRecord> epochs;
    std::vector<double> step_losses;
    double final_accuracy = 0.0;
    double final_loss = 0.0;
};

// Minibatch SGD over all model parameters. Per-epoch records carry the
// eval-mode (center-crop) loss/accuracy on the training data.
template <class T>
TrainResult<T> train_joint(GlamorNet<T>& net, const LoadedDataset& ds, const TrainConfig& cfg,
                           const PrepOptions& prep, std::ostream* log) {
    cfg.validate();
    if (ds.size() == 0)
        throw ValueError("train: empty dataset");

    ParamRefs<T> params = net.named_params();
    Sgd<T> sgd(cfg.lr, cfg.momentum);
    TrainResult<T> result;

    std::vector<size_t> order(ds.size());
    for (size_t i = 0; i < order.size(); ++i)
        order[i] = i;

    uint64_t global_step = 0;
    for (int epoch = 0; epoch < cfg.epochs_joint; ++epoch) {
        Rng shuffle_rng = derive_rng(cfg.seed, "joint_shuffle", static_cast<uint64_t>(epoch));
        shuffle_rng.shuffle(order);
        for (const auto& batch_idx : make_batches(order, cfg.batch_size)) {
            Batch<T> batch = make_batch<T>(ds, batch_idx, PrepMode::Train, cfg.seed,
                                           static_cast<uint64_t>(epoch), prep, cfg.threads);
            Rng dropout_rng = derive_rng(cfg.seed, "dropout", global_step);
            auto y = net.forward(batch.faces, batch.contexts, Mode::Train, &dropout_rng);
            auto ce = cross_entropy(y.logits, batch.labels);
            net.backward(ce.grad_logits);
            sgd.step(params);
            result.step_losses.push_back(static_cast<double>(ce.loss));
            ++global_step;
        }

        EvalOutcome<T> eval = evaluate_model(net, ds, prep, cfg.batch_size, cfg.threads);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.split = "train";
        rec.loss = eval.loss;
        rec.accuracy = eval.accuracy;
        rec.has_weights = eval.has_weights;
        rec.wf_min = eval.wf_min;
        rec.wf_max = eval.wf_max;
        result.epochs.push_back(rec);
        if (log)
            *log << rec.to_json().dump() << "\n";
    }
    if (!result.epochs.empty()) {
        result.final_accuracy = result.epochs.back().accuracy;
        result.final_loss = result.epochs.back().loss;
    }
    return result;
}

// Full staged run: branch pretraining, joint training, checkpoint.
template <class T>
TrainResult<T> run_training(GlamorNet<T>& net, const LoadedDataset& ds, const TrainConfig& cfg,
                            const PrepOptions& prep, std::ostream* log,
                            const std::string& ckpt_path = "") {
    cfg.validate();
    Rng init_rng = derive_rng(cfg.seed, "init");
    net.init(init_rng);

    if (cfg.epochs_pretrain > 0) {
        if (net.uses_face_branch())
            pretrain_branch(net.face_encoder(), true, ds, cfg, prep, log, net.config().classes);
        if (net.uses_context_branch())
            pretrain_branch(net.context_encoder(), false, ds, cfg, prep, log,
                            net.config().classes);
    }

    TrainResult<T> result = train_joint(net, ds, cfg, prep, log);

    if (!ckpt_path.empty()) {
        nlohmann::json extra{{"model", model_config_to_json(net.config())},
                             {"train", train_config_to_json(cfg)},
                             {"prep", prep_options_to_json(prep)}};
        CheckpointMeta meta;
        meta.epoch = cfg.epochs_joint;
        meta.extra_json = extra.dump();
        meta.config_hash = config_hash(extra.dump());
        save_params(ckpt_path, net.named_params(), meta);
    }
    return result;
}

} // namespace glamor
