// glamor - context-aware emotion recognition engine.
//
// Exit codes: 0 success, 1 verification/internal failure, 2 usage or config
// error, 3 IO or file-format error.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "glamor/metrics.hpp"
#include "glamor/train.hpp"
#include "glamor/verify.hpp"

using namespace glamor;
using nlohmann::json;

namespace {

struct TrainCli {
    std::string manifest;
    std::string config_path;
    std::string variant = "gla";
    std::string fusion = "net";
    std::string ablation = "full";
    std::string split = "train";
    std::string out_ckpt = "model.ckpt";
    std::string log_path;
    TrainConfig cfg;
};

void print_class_table(const std::vector<SampleRecord>& records) {
    const char* splits[] = {"train", "val", "test"};
    std::map<std::string, std::array<int64_t, kNumEmotions>> table;
    for (const char* s : splits)
        table[s] = {};
    for (const auto& r : records) {
        if (table.find(r.split) == table.end())
            table[r.split] = {};
        ++table[r.split][static_cast<size_t>(r.label)];
    }
    std::printf("%-10s", "emotion");
    for (const auto& [split, _] : table)
        std::printf("%10s", split.c_str());
    std::printf("\n");
    std::array<int64_t, 8> totals{};
    for (int cls = 0; cls < kNumEmotions; ++cls) {
        std::printf("%-10s", emotion_name(static_cast<EmotionLabel>(cls)));
        size_t col = 0;
        for (const auto& [split, counts] : table) {
            std::printf("%10lld", static_cast<long long>(counts[static_cast<size_t>(cls)]));
            totals[col++] += counts[static_cast<size_t>(cls)];
        }
        std::printf("\n");
    }
    std::printf("%-10s", "Total");
    for (size_t col = 0; col < table.size(); ++col)
        std::printf("%10lld", static_cast<long long>(totals[col]));
    std::printf("\n");
}

int cmd_gen_synth(const std::string& out_dir, int per_class, uint64_t seed, int64_t height,
                  int64_t width) {
    SynthOptions opts;
    opts.per_class = per_class;
    opts.image_h = height;
    opts.image_w = width;
    Rng rng(seed);
    const std::string manifest = generate_synthetic_dataset(out_dir, opts, rng);
    const auto records = read_manifest(manifest);
    std::printf("manifest: %s\n", manifest.c_str());
    print_class_table(records);
    return 0;
}

int cmd_split(const std::string& manifest, const std::string& out, uint64_t seed,
              double segment_seconds, double balance_tol, double train_frac, double val_frac) {
    auto records = read_manifest(manifest);
    SplitOptions opts;
    opts.segment_seconds = segment_seconds;
    opts.balance_tolerance = balance_tol;
    opts.train_fraction = train_frac;
    opts.val_fraction = val_frac;
    Rng rng(seed);
    auto split_records = ncaer_split(records, rng, opts);
    write_manifest(split_records, out);
    std::printf("wrote %zu records to %s\n", split_records.size(), out.c_str());
    print_class_table(split_records);
    return 0;
}

ModelConfig model_config_from_cli(const TrainCli& cli, PrepOptions& prep) {
    ModelConfig mc;
    mc.attention = attention_kind_from_name(cli.variant);
    mc.fusion = fusion_kind_from_name(cli.fusion);
    if (cli.ablation == "full") {
        mc.ablation = Ablation::Full;
        prep.mask_face = true;
    } else if (cli.ablation == "wF") {
        mc.ablation = Ablation::FaceOnly;
    } else if (cli.ablation == "wmC") {
        mc.ablation = Ablation::ContextOnly;
        prep.mask_face = true;
    } else if (cli.ablation == "wfC") {
        mc.ablation = Ablation::ContextOnly;
        prep.mask_face = false;
    } else {
        throw ConfigError("unknown ablation '" + cli.ablation + "' (full|wF|wmC|wfC)");
    }
    return mc;
}

template <class T>
int run_train(const TrainCli& cli) {
    PrepOptions prep;
    ModelConfig mc = model_config_from_cli(cli, prep);

    LoadedDataset ds = load_dataset(cli.manifest, cli.split == "all" ? "" : cli.split);
    if (ds.size() == 0)
        throw ValueError("no records with split '" + cli.split + "' in " + cli.manifest);

    json effective{{"model", model_config_to_json(mc)},
                   {"train", train_config_to_json(cli.cfg)},
                   {"prep", prep_options_to_json(prep)},
                   {"manifest", cli.manifest},
                   {"records", ds.size()}};
    std::printf("config: %s\n", effective.dump().c_str());

    std::ofstream log;
    if (!cli.log_path.empty()) {
        log.open(cli.log_path);
        if (!log)
            throw IoError(cli.log_path + ": cannot open log for writing");
        log << effective.dump() << "\n";
    }

    GlamorNet<T> net(mc);
    auto result = run_training<T>(net, ds, cli.cfg, prep, log.is_open() ? &log : nullptr,
                                  cli.out_ckpt);
    std::printf("final train accuracy %.4f, loss %.6f\n", result.final_accuracy,
                result.final_loss);
    std::printf("checkpoint: %s\n", cli.out_ckpt.c_str());
    return 0;
}

// Rebuilds the model a checkpoint was trained with from its metadata.
template <class T>
GlamorNet<T> model_from_checkpoint(const std::string& path, PrepOptions& prep) {
    LoadedCheckpoint ck = load_checkpoint_raw(path);
    const json extra = json::parse(ck.meta.extra_json);
    ModelConfig mc = model_config_from_json(extra.at("model"));
    prep = prep_options_from_json(extra.at("prep"));
    GlamorNet<T> net(mc);
    load_params(path, net.named_params());
    return net;
}

std::vector<int> read_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError(path + ": cannot open prediction file");
    std::vector<int> preds;
    int v;
    while (in >> v)
        preds.push_back(v);
    return preds;
}

int cmd_eval(const std::string& manifest, const std::string& split, const std::string& ckpt,
             const std::string& compare_path, const std::string& preds_out,
             const std::string& confusion_json_path, int threads) {
    PrepOptions prep;
    GlamorNet<float> net = model_from_checkpoint<float>(ckpt, prep);
    LoadedDataset ds = load_dataset(manifest, split == "all" ? "" : split);
    if (ds.size() == 0)
        throw ValueError("no records with split '" + split + "' in " + manifest);

    auto eval = evaluate_model(net, ds, prep, 16, threads);
    const int k = static_cast<int>(net.config().classes);
    std::printf("samples: %zu\n", eval.labels.size());
    std::printf("accuracy: %.4f\n", eval.accuracy);
    std::printf("loss: %.6f\n", eval.loss);

    std::vector<std::string> names;
    for (int i = 0; i < k && i < kNumEmotions; ++i)
        names.push_back(emotion_name(static_cast<EmotionLabel>(i)));
    ConfusionMatrix cm = confusion(eval.preds, eval.labels, k);
    std::printf("%s", confusion_to_text(cm, names).c_str());

    if (!confusion_json_path.empty()) {
        std::ofstream out(confusion_json_path);
        if (!out)
            throw IoError(confusion_json_path + ": cannot open for writing");
        out << confusion_to_json(cm) << "\n";
    }

    if (!preds_out.empty()) {
        std::ofstream out(preds_out);
        if (!out)
            throw IoError(preds_out + ": cannot open for writing");
        for (int p : eval.preds)
            out << p << "\n";
    }

    if (!compare_path.empty()) {
        std::vector<int> baseline = read_predictions(compare_path);
        if (baseline.size() != eval.preds.size())
            throw ValueError("baseline has " + std::to_string(baseline.size()) +
                             " predictions, expected " + std::to_string(eval.preds.size()));
        ConfusionMatrix paired = confusion(baseline, eval.preds, k);
        TestResult tr = stuart_maxwell(paired);
        std::printf("stuart-maxwell vs baseline: statistic %.6f, dof %d, p %.6g\n", tr.statistic,
                    tr.dof, tr.p_value);
    }
    return 0;
}

int cmd_infer(const std::string& image_path, const std::string& bbox_str, const std::string& ckpt,
              const std::string& attn_pgm, const std::string& attn_txt) {
    PrepOptions prep;
    GlamorNet<float> net = model_from_checkpoint<float>(ckpt, prep);

    long long bx, by, bw, bh;
    if (std::sscanf(bbox_str.c_str(), "%lld,%lld,%lld,%lld", &bx, &by, &bw, &bh) != 4)
        throw ConfigError("--bbox expects x,y,w,h");
    const BBox bbox{bx, by, bw, bh};

    SampleRecord rec;
    rec.image_path = image_path;
    rec.face_bbox = bbox;
    PreparedSample ps = prepare_sample(rec, PrepMode::Eval, nullptr, prep);

    Tensor<float> face = ps.face.reshape({1, 3, prep.face_size, prep.face_size});
    Tensor<float> ctx = ps.context.reshape({1, 3, prep.context_crop, prep.context_crop});
    auto out = net.forward(face, ctx, Mode::Eval, nullptr);
    TensorF probs = softmax(out.logits, 1);
    const int64_t top = argmax(out.logits, 1)[0];

    const int k = static_cast<int>(net.config().classes);
    auto class_name = [](int64_t i) {
        return i < kNumEmotions ? std::string(emotion_name(static_cast<EmotionLabel>(i)))
                                : std::to_string(i);
    };
    std::printf("prediction: %s\n", class_name(top).c_str());
    for (int i = 0; i < k; ++i)
        std::printf("  %-10s %.6f\n", class_name(i).c_str(),
                    static_cast<double>(probs.at(0, i)));

    if (!out.attention.empty()) {
        const TensorF map = out.attention.reshape({out.attention.dim(1), out.attention.dim(2)});
        if (!attn_pgm.empty()) {
            export_attention_pgm(map, prep.context_crop, prep.context_crop, attn_pgm);
            std::printf("attention map: %s\n", attn_pgm.c_str());
        }
        if (!attn_txt.empty()) {
            export_attention_text(map, attn_txt);
            std::printf("attention grid: %s\n", attn_txt.c_str());
        }
    }
    return 0;
}

int cmd_verify(int seeds, const std::string& fault) {
    VerifyOptions opts;
    opts.fd_seeds = seeds;
    if (fault == "conv-backward")
        opts.fault = FaultInjection::ConvBackward;
    else if (!fault.empty())
        throw ConfigError("unknown fault '" + fault + "'");
    VerifyReport report = run_verification(opts);
    for (const auto& c : report.checks)
        std::printf("[%s] %-28s %s (%.2fs)\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                    c.detail.c_str(), c.seconds);
    std::printf("%s\n", report.all_passed() ? "all checks passed" : "VERIFICATION FAILED");
    return report.all_passed() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"GLAMOR-Net: context-aware emotion recognition engine"};
    app.require_subcommand(1);

    // gen-synth
    auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic PPM dataset + manifest");
    std::string gen_out;
    int gen_per_class = 10;
    uint64_t gen_seed = 0;
    int64_t gen_h = 96, gen_w = 128;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--per-class", gen_per_class, "Images per class");
    gen->add_option("--seed", gen_seed, "Random seed");
    gen->add_option("--height", gen_h, "Image height");
    gen->add_option("--width", gen_w, "Image width");

    // split
    auto* split = app.add_subcommand("split", "Leak-free video-level split of a frame manifest");
    std::string split_manifest, split_out = "split_manifest.jsonl";
    uint64_t split_seed = 0;
    double split_seconds = 2.0, split_tol = 0.1, split_train = 0.7, split_val = 0.15;
    split->add_option("--manifest", split_manifest, "Input manifest (JSON lines)")->required();
    split->add_option("--out", split_out, "Output manifest path");
    split->add_option("--seed", split_seed, "Random seed");
    split->add_option("--segment-seconds", split_seconds, "Frame bin length in seconds");
    split->add_option("--balance-tol", split_tol, "Class balance tolerance");
    split->add_option("--train-frac", split_train, "Fraction of videos in train");
    split->add_option("--val-frac", split_val, "Fraction of videos in val");

    // train
    auto* train = app.add_subcommand("train", "Staged training: branch pretrain + joint SGD");
    TrainCli tc;
    train->add_option("--manifest", tc.manifest, "Dataset manifest")->required();
    train->add_option("--config", tc.config_path, "JSON config file (flat keys)");
    train->add_option("--variant", tc.variant, "Attention variant: gla|ca|none");
    train->add_option("--fusion", tc.fusion, "Fusion variant: net|add|max");
    train->add_option("--ablation", tc.ablation, "Input setting: full|wF|wmC|wfC");
    train->add_option("--split", tc.split, "Manifest split to train on (train|val|test|all)");
    train->add_option("--out", tc.out_ckpt, "Checkpoint output path");
    train->add_option("--log", tc.log_path, "JSON-lines epoch log path");
    auto* f_lr = train->add_option("--lr", tc.cfg.lr, "Learning rate");
    auto* f_mom = train->add_option("--momentum", tc.cfg.momentum, "SGD momentum");
    auto* f_bs = train->add_option("--batch-size", tc.cfg.batch_size, "Minibatch size");
    auto* f_ep = train->add_option("--epochs-pretrain", tc.cfg.epochs_pretrain,
                                   "Branch pretraining epochs");
    auto* f_ej = train->add_option("--epochs-joint", tc.cfg.epochs_joint, "Joint epochs");
    auto* f_seed = train->add_option("--seed", tc.cfg.seed, "Random seed");
    auto* f_prec = train->add_option("--precision", tc.cfg.precision, "f32|f64");
    auto* f_thr = train->add_option("--threads", tc.cfg.threads, "Data pipeline threads");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
    std::string ev_manifest, ev_split = "test", ev_ckpt, ev_compare, ev_preds_out, ev_cm_json;
    int ev_threads = 1;
    eval->add_option("--manifest", ev_manifest, "Dataset manifest")->required();
    eval->add_option("--split", ev_split, "Split to evaluate (train|val|test|all)");
    eval->add_option("--ckpt", ev_ckpt, "Checkpoint path")->required();
    eval->add_option("--compare", ev_compare, "Baseline prediction file for Stuart-Maxwell");
    eval->add_option("--preds-out", ev_preds_out, "Write predictions (one label index per line)");
    eval->add_option("--confusion-json", ev_cm_json, "Write the confusion matrix as JSON");
    eval->add_option("--threads", ev_threads, "Data pipeline threads");

    // infer
    auto* infer = app.add_subcommand("infer", "Classify one image and export its attention map");
    std::string in_image, in_bbox, in_ckpt, in_attn, in_attn_txt;
    infer->add_option("--image", in_image, "PPM image path")->required();
    infer->add_option("--bbox", in_bbox, "Face bbox as x,y,w,h")->required();
    infer->add_option("--ckpt", in_ckpt, "Checkpoint path")->required();
    infer->add_option("--attn-out", in_attn, "Attention PGM output path");
    infer->add_option("--attn-txt", in_attn_txt, "Attention raw text grid output path");

    // verify
    auto* verify = app.add_subcommand("verify", "Run the built-in verification battery");
    int ver_seeds = 3;
    std::string ver_fault;
    verify->add_option("--seeds", ver_seeds, "Seeds per gradient check");
    verify->add_option("--fault", ver_fault, "Inject a known fault (testing aid)")
        ->group(""); // hidden

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed())
            return cmd_gen_synth(gen_out, gen_per_class, gen_seed, gen_h, gen_w);
        if (split->parsed())
            return cmd_split(split_manifest, split_out, split_seed, split_seconds, split_tol,
                             split_train, split_val);
        if (train->parsed()) {
            // flags > config file > defaults
            if (!tc.config_path.empty()) {
                std::ifstream in(tc.config_path);
                if (!in)
                    throw IoError(tc.config_path + ": cannot open config");
                json j;
                try {
                    j = json::parse(in);
                } catch (const json::exception& e) {
                    throw FormatError(tc.config_path + ": bad JSON: " + e.what());
                }
                TrainConfig from_file = train_config_from_json(j);
                if (!f_lr->count()) tc.cfg.lr = from_file.lr;
                if (!f_mom->count()) tc.cfg.momentum = from_file.momentum;
                if (!f_bs->count()) tc.cfg.batch_size = from_file.batch_size;
                if (!f_ep->count()) tc.cfg.epochs_pretrain = from_file.epochs_pretrain;
                if (!f_ej->count()) tc.cfg.epochs_joint = from_file.epochs_joint;
                if (!f_seed->count()) tc.cfg.seed = from_file.seed;
                if (!f_prec->count()) tc.cfg.precision = from_file.precision;
                if (!f_thr->count()) tc.cfg.threads = from_file.threads;
            }
            tc.cfg.validate();
            return tc.cfg.precision == "f64" ? run_train<double>(tc) : run_train<float>(tc);
        }
        if (eval->parsed())
            return cmd_eval(ev_manifest, ev_split, ev_ckpt, ev_compare, ev_preds_out, ev_cm_json,
                            ev_threads);
        if (infer->parsed())
            return cmd_infer(in_image, in_bbox, in_ckpt, in_attn, in_attn_txt);
        if (verify->parsed())
            return cmd_verify(ver_seeds, ver_fault);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ValueError& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return 2;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "shape error: %s\n", e.what());
        return 2;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 3;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
