// Acceptance suite: one pass/fail line per criterion, exit 0 iff all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "glamor/metrics.hpp"
#include "glamor/train.hpp"
#include "glamor/verify.hpp"

using namespace glamor;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Harness {
    int failures = 0;

    void run(int id, const std::string& name, const std::function<bool(std::ostream&)>& fn) {
        const auto t0 = Clock::now();
        std::ostringstream detail;
        bool ok = false;
        try {
            ok = fn(detail);
        } catch (const std::exception& e) {
            detail << "exception: " << e.what();
        }
        const double sec = std::chrono::duration<double>(Clock::now() - t0).count();
        std::printf("[%s] criterion %2d: %-28s %s (%.1fs)\n", ok ? "PASS" : "FAIL", id,
                    name.c_str(), detail.str().c_str(), sec);
        std::fflush(stdout);
        if (!ok)
            ++failures;
    }
};

std::string work_dir() {
    auto p = fs::temp_directory_path() / "glamor_acceptance";
    fs::create_directories(p);
    return p.string();
}

// ---------------------------------------------------------------- criterion 1

bool gradient_correctness(std::ostream& out) {
    const auto t0 = Clock::now();
    VerifyOptions opts;
    opts.fd_seeds = 20;
    VerifyReport report = run_verification(opts);
    const double sec = std::chrono::duration<double>(Clock::now() - t0).count();
    bool ok = true;
    for (const auto& c : report.checks) {
        if (c.name.find("-fd") == std::string::npos && c.name != "dropout-semantics")
            continue;
        if (!c.passed) {
            out << c.name << " failed: " << c.detail << "; ";
            ok = false;
        }
    }
    out << "20-seed battery in " << sec << "s";
    if (sec >= 120.0) {
        out << " (over the 2 min budget)";
        ok = false;
    }
    return ok;
}

// ---------------------------------------------------------------- criterion 2

bool attention_invariants(std::ostream& out) {
    Rng rng(20240001);
    double worst_sum = 0.0, worst_oracle = 0.0, worst_shift = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int64_t n = 1 + static_cast<int64_t>(rng.below(2));
        const int64_t m = 2 + static_cast<int64_t>(rng.below(15));
        const int64_t d = 1 + static_cast<int64_t>(rng.below(8));
        TensorD scores = TensorD::uniform({n, m}, -25.0, 25.0, rng);
        TensorD cells = TensorD::uniform({n, m, d}, -3.0, 3.0, rng);
        auto res = attend(scores, cells);

        for (int64_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (int64_t c = 0; c < m; ++c)
                s += res.attention.at(i, c);
            worst_sum = std::max(worst_sum, std::abs(s - 1.0));
        }
        for (int64_t i = 0; i < n; ++i)
            for (int64_t c = 0; c < d; ++c) {
                double s = 0.0, lo = cells.at(i, 0, c), hi = lo;
                for (int64_t cell = 0; cell < m; ++cell) {
                    s += res.attention.at(i, cell) * cells.at(i, cell, c);
                    lo = std::min(lo, cells.at(i, cell, c));
                    hi = std::max(hi, cells.at(i, cell, c));
                }
                worst_oracle = std::max(worst_oracle, std::abs(s - res.context_vector.at(i, c)));
                if (res.context_vector.at(i, c) < lo - 1e-12 ||
                    res.context_vector.at(i, c) > hi + 1e-12) {
                    out << "hull violation";
                    return false;
                }
            }
        TensorD shifted = scores;
        const double c0 = rng.uniform(-10.0, 10.0);
        for (auto& v : shifted.vec())
            v += c0;
        auto res2 = attend(shifted, cells);
        for (int64_t i = 0; i < res2.attention.size(); ++i)
            worst_shift = std::max(worst_shift, std::abs(res.attention[i] - res2.attention[i]));
    }
    out << "sum " << worst_sum << ", oracle " << worst_oracle << ", shift " << worst_shift;
    return worst_sum < 1e-6 && worst_oracle < 1e-12 && worst_shift < 1e-6;
}

// ---------------------------------------------------------------- criterion 3

bool fusion_invariants(std::ostream& out) {
    Rng rng(20240002);
    FusionModule<double> fusion(FusionKind::Net, 8, 7, 16, 0.0);
    fusion.init(rng);
    double worst_sum = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        TensorD v_f = TensorD::uniform({1, 8}, -4.0, 4.0, rng);
        TensorD v_c = TensorD::uniform({1, 8}, -4.0, 4.0, rng);
        TensorD w = fusion.branch_weights(v_f, v_c, Mode::Eval);
        if (w.at(0, 0) <= 0.0 || w.at(0, 1) <= 0.0) {
            out << "nonpositive weight";
            return false;
        }
        worst_sum = std::max(worst_sum, std::abs(w.at(0, 0) + w.at(0, 1) - 1.0));
    }
    if (worst_sum >= 1e-7) {
        out << "sum err " << worst_sum;
        return false;
    }

    // symmetry: swap inputs and score nets, weights must swap exactly
    FusionModule<double> crossed(FusionKind::Net, 8, 7, 16, 0.0);
    ParamRefs<double> ap, bp;
    fusion.collect(ap, "f");
    crossed.collect(bp, "f");
    for (size_t i = 0; i < ap.size(); ++i) {
        std::string swapped = ap[i].name;
        if (swapped.find("face_score") != std::string::npos)
            swapped.replace(swapped.find("face_score"), 10, "context_score");
        else if (swapped.find("context_score") != std::string::npos)
            swapped.replace(swapped.find("context_score"), 13, "face_score");
        for (auto& q : bp)
            if (q.name == swapped)
                *q.value = *ap[i].value;
    }
    for (int trial = 0; trial < 100; ++trial) {
        TensorD v_f = TensorD::uniform({1, 8}, -2.0, 2.0, rng);
        TensorD v_c = TensorD::uniform({1, 8}, -2.0, 2.0, rng);
        TensorD wa = fusion.branch_weights(v_f, v_c, Mode::Eval);
        TensorD wb = crossed.branch_weights(v_c, v_f, Mode::Eval);
        if (wa.at(0, 0) != wb.at(0, 1) || wa.at(0, 1) != wb.at(0, 0)) {
            out << "swap symmetry not exact";
            return false;
        }
    }

    // s_f - s_c = ln 3 -> w_f = 0.75
    const double wf = std::exp(std::log(3.0)) / (std::exp(std::log(3.0)) + 1.0);
    FusionModule<double> analytic(FusionKind::Net, 8, 7, 16, 0.0);
    ParamRefs<double> pp;
    analytic.collect(pp, "fusion");
    for (auto& p : pp)
        if (p.name == "fusion.face_score.fc2.bias")
            (*p.value)[0] = std::log(3.0);
    TensorD v1 = TensorD::uniform({1, 8}, -1.0, 1.0, rng);
    TensorD v2 = TensorD::uniform({1, 8}, -1.0, 1.0, rng);
    TensorD w = analytic.branch_weights(v1, v2, Mode::Eval);
    const double err = std::abs(w.at(0, 0) - 0.75);
    out << "sum " << worst_sum << ", ln3 err " << err << " (ref " << wf << ")";
    return err < 1e-9;
}

// ---------------------------------------------------------------- criterion 4

bool shape_contract(std::ostream& out) {
    GlamorNet<float> net{ModelConfig{}};
    Rng rng(20240003);
    net.init(rng);
    TensorF face = TensorF::uniform({1, 3, 96, 96}, 0.0f, 1.0f, rng);
    TensorF ctx = TensorF::uniform({1, 3, 112, 112}, 0.0f, 1.0f, rng);
    TensorF f_f = net.face_encoder().forward(face, Mode::Eval);
    TensorF f_c = net.context_encoder().forward(ctx, Mode::Eval);
    auto y = net.forward(face, ctx, Mode::Eval, nullptr);
    out << "face " << shape_str(f_f.shape()) << ", context " << shape_str(f_c.shape())
        << ", map " << shape_str(y.attention.shape()) << ", logits " << shape_str(y.logits.shape());
    return f_f.shape() == Shape{1, 256, 6, 6} && f_c.shape() == Shape{1, 256, 7, 7} &&
           y.attention.shape() == Shape{1, 7, 7} && y.logits.shape() == Shape{1, 7};
}

// ---------------------------------------------------------------- criterion 5

struct OverfitCase {
    std::string name;
    ModelConfig model;
    double min_accuracy;
};

bool overfit_runs(std::ostream& out) {
    const std::string dir = work_dir() + "/overfit_corpus";
    Rng gen_rng(0);
    SynthOptions synth;
    const std::string manifest = generate_synthetic_dataset(dir, synth, gen_rng);
    LoadedDataset ds = load_dataset(manifest);

    std::vector<OverfitCase> cases;
    {
        OverfitCase full;
        full.name = "full";
        full.min_accuracy = 0.95;
        cases.push_back(full);
        OverfitCase face;
        face.name = "wF";
        face.model.ablation = Ablation::FaceOnly;
        face.min_accuracy = 0.90;
        cases.push_back(face);
        OverfitCase fadd;
        fadd.name = "fusion-add";
        fadd.model.fusion = FusionKind::Add;
        fadd.min_accuracy = 0.90;
        cases.push_back(fadd);
        OverfitCase fmax;
        fmax.name = "fusion-max";
        fmax.model.fusion = FusionKind::Max;
        fmax.min_accuracy = 0.90;
        cases.push_back(fmax);
    }

    bool ok = true;
    for (const auto& c : cases) {
        const auto t0 = Clock::now();
        TrainConfig cfg; // defaults, seed 0
        GlamorNet<float> net(c.model);
        PrepOptions prep;
        auto result = run_training<float>(net, ds, cfg, prep, nullptr);
        const double sec = std::chrono::duration<double>(Clock::now() - t0).count();
        const int total_epochs = cfg.epochs_joint;
        out << c.name << ": acc " << result.final_accuracy << " after " << total_epochs
            << " epochs in " << static_cast<int>(sec) << "s";
        if (result.final_accuracy < c.min_accuracy) {
            out << " (below " << c.min_accuracy << ")";
            ok = false;
        }
        if (c.name == "full") {
            if (sec >= 600.0) {
                out << " (over the 10 min budget)";
                ok = false;
            }
            if (cfg.epochs_joint > 300) {
                out << " (epoch cap above 300)";
                ok = false;
            }
            // the fusion weights must stay strictly inside (0,1) all epochs
            for (const auto& rec : result.epochs)
                if (rec.has_weights && (rec.wf_min <= 0.0 || rec.wf_max >= 1.0)) {
                    out << " (fusion weight left (0,1) at epoch " << rec.epoch << ")";
                    ok = false;
                    break;
                }
        }
        out << "; ";
    }
    return ok;
}

// ---------------------------------------------------------------- criterion 6

bool determinism(std::ostream& out) {
    const std::string dir = work_dir() + "/determinism_corpus";
    Rng gen_rng(1);
    SynthOptions synth;
    synth.per_class = 4;
    const std::string manifest = generate_synthetic_dataset(dir, synth, gen_rng);
    LoadedDataset ds = load_dataset(manifest);

    TrainConfig cfg;
    cfg.epochs_pretrain = 1;
    cfg.epochs_joint = 3; // 28 samples / batch 16 = 2 steps per epoch
    cfg.seed = 42;

    const std::string ck_a = work_dir() + "/det_a.ckpt";
    const std::string ck_b = work_dir() + "/det_b.ckpt";
    GlamorNet<float> net_a{ModelConfig{}};
    auto ra = run_training<float>(net_a, ds, cfg, PrepOptions{}, nullptr, ck_a);
    GlamorNet<float> net_b{ModelConfig{}};
    auto rb = run_training<float>(net_b, ds, cfg, PrepOptions{}, nullptr, ck_b);

    if (ra.step_losses.size() < 5 || rb.step_losses.size() < 5) {
        out << "fewer than 5 steps recorded";
        return false;
    }
    for (int i = 0; i < 5; ++i)
        if (ra.step_losses[static_cast<size_t>(i)] != rb.step_losses[static_cast<size_t>(i)]) {
            out << "step " << i << " loss differs: " << ra.step_losses[static_cast<size_t>(i)]
                << " vs " << rb.step_losses[static_cast<size_t>(i)];
            return false;
        }

    std::ifstream fa(ck_a, std::ios::binary), fb(ck_b, std::ios::binary);
    std::string bytes_a((std::istreambuf_iterator<char>(fa)), {});
    std::string bytes_b((std::istreambuf_iterator<char>(fb)), {});
    if (bytes_a.empty() || bytes_a != bytes_b) {
        out << "checkpoints differ (" << bytes_a.size() << " vs " << bytes_b.size() << " bytes)";
        return false;
    }
    out << "first-5 losses bit-identical, checkpoints byte-identical (" << bytes_a.size()
        << " bytes)";
    return true;
}

// ---------------------------------------------------------------- criterion 7

bool checkpoint_roundtrip(std::ostream& out) {
    ModelConfig cfg; // full widths, small spatial inputs below
    GlamorNet<float> net(cfg);
    Rng rng(20240007);
    net.init(rng);
    const std::string path = work_dir() + "/roundtrip.ckpt";
    save_params(path, net.named_params(), {});
    GlamorNet<float> loaded(cfg);
    load_params(path, loaded.named_params());

    for (int trial = 0; trial < 100; ++trial) {
        TensorF face = TensorF::uniform({1, 3, 32, 32}, 0.0f, 1.0f, rng);
        TensorF ctx = TensorF::uniform({1, 3, 48, 48}, 0.0f, 1.0f, rng);
        auto a = net.forward(face, ctx, Mode::Eval, nullptr);
        auto b = loaded.forward(face, ctx, Mode::Eval, nullptr);
        for (int64_t i = 0; i < a.logits.size(); ++i)
            if (a.logits[i] != b.logits[i]) {
                out << "logit mismatch on trial " << trial;
                return false;
            }
    }
    out << "100 random forwards bit-identical";
    return true;
}

// ---------------------------------------------------------------- criterion 8

bool splitter(std::ostream& out) {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Rng data_rng(seed * 7 + 1);
        std::vector<SampleRecord> records;
        for (int v = 0; v < 100; ++v) {
            const auto label = static_cast<EmotionLabel>(data_rng.below(kNumEmotions));
            const int frames = 10 + static_cast<int>(data_rng.below(30));
            for (int f = 0; f < frames; ++f) {
                SampleRecord r;
                r.video_id = "v" + std::to_string(v);
                r.image_path = r.video_id + "/f" + std::to_string(f);
                r.timestamp_s = static_cast<double>(f) * 0.25;
                r.label = label;
                records.push_back(std::move(r));
            }
        }
        Rng rng(seed);
        auto split = ncaer_split(records, rng);

        std::map<std::string, std::set<std::string>> vids;
        for (const auto& r : split)
            vids[r.split].insert(r.video_id);
        for (const auto& vid : vids["train"])
            if (vids["test"].count(vid) || vids["val"].count(vid)) {
                out << "video leaked across splits (seed " << seed << ")";
                return false;
            }

        std::map<std::pair<std::string, int64_t>, int> bins;
        for (const auto& r : split)
            if (++bins[{r.video_id, static_cast<int64_t>(r.timestamp_s / 2.0)}] > 1) {
                out << "more than one frame per 2s bin (seed " << seed << ")";
                return false;
            }

        for (const char* s : {"train", "val", "test"}) {
            std::map<int, int64_t> counts;
            for (const auto& r : split)
                if (r.split == s)
                    ++counts[static_cast<int>(r.label)];
            int64_t lo = INT64_MAX, hi = 0;
            for (const auto& [cls, n] : counts) {
                lo = std::min(lo, n);
                hi = std::max(hi, n);
            }
            if (hi > 0 && static_cast<double>(hi) > 1.1 * static_cast<double>(lo) + 1e-9) {
                out << "class imbalance " << hi << "/" << lo << " in " << s << " (seed " << seed
                    << ")";
                return false;
            }
        }
    }
    out << "20 random manifests: leak-free, binned, balanced";
    return true;
}

// ---------------------------------------------------------------- criterion 9

bool masking(std::ostream& out) {
    Rng rng(20240009);
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t h = 16 + static_cast<int64_t>(rng.below(60));
        const int64_t w = 16 + static_cast<int64_t>(rng.below(80));
        TensorF img = TensorF::uniform({3, h, w}, 0.01f, 1.0f, rng);
        const int64_t bw = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(w)));
        const int64_t bh = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(h)));
        const int64_t bx = static_cast<int64_t>(rng.below(static_cast<uint64_t>(w - bw + 1)));
        const int64_t by = static_cast<int64_t>(rng.below(static_cast<uint64_t>(h - bh + 1)));
        TensorF masked = mask_rect(img, bx, by, bw, bh);
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t i = 0; i < h; ++i)
                for (int64_t j = 0; j < w; ++j) {
                    const bool inside = i >= by && i < by + bh && j >= bx && j < bx + bw;
                    const float got = masked.at(c, i, j);
                    if (inside && got != 0.0f) {
                        out << "nonzero inside bbox (trial " << trial << ")";
                        return false;
                    }
                    if (!inside && got != img.at(c, i, j)) {
                        out << "outside pixel touched (trial " << trial << ")";
                        return false;
                    }
                }
    }
    out << "100 random bboxes exact";
    return true;
}

// --------------------------------------------------------------- criterion 10

double sm_3x3_oracle(const ConfusionMatrix& cm) {
    double d[2], v[2][2];
    for (int i = 0; i < 2; ++i) {
        long long row = 0, col = 0;
        for (int j = 0; j < 3; ++j) {
            row += cm.at(i, j);
            col += cm.at(j, i);
        }
        d[i] = static_cast<double>(row - col);
        v[i][i] = static_cast<double>(row + col - 2 * cm.at(i, i));
    }
    v[0][1] = v[1][0] = -static_cast<double>(cm.at(0, 1) + cm.at(1, 0));
    const double det = v[0][0] * v[1][1] - v[0][1] * v[1][0];
    return (d[0] * d[0] * v[1][1] - 2.0 * d[0] * d[1] * v[0][1] + d[1] * d[1] * v[0][0]) / det;
}

bool statistics(std::ostream& out) {
    ConfusionMatrix sym;
    sym.k = 3;
    sym.counts = {11, 4, 2, 4, 9, 6, 2, 6, 13};
    TestResult r1 = stuart_maxwell(sym);
    if (std::abs(r1.statistic) > 1e-12 || std::abs(r1.p_value - 1.0) > 1e-12) {
        out << "symmetric table: stat " << r1.statistic << ", p " << r1.p_value;
        return false;
    }

    ConfusionMatrix mc;
    mc.k = 2;
    mc.counts = {14, 9, 1, 22};
    TestResult r2 = stuart_maxwell(mc);
    if (std::abs(r2.statistic - 6.4) > 1e-12 || std::abs(r2.p_value - 0.01141) > 1e-4) {
        out << "McNemar case: stat " << r2.statistic << ", p " << r2.p_value;
        return false;
    }

    Rng rng(20240010);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        ConfusionMatrix cm;
        cm.k = 3;
        cm.counts.resize(9);
        for (auto& c : cm.counts)
            c = 1 + static_cast<int64_t>(rng.below(50));
        worst = std::max(worst, std::abs(stuart_maxwell(cm).statistic - sm_3x3_oracle(cm)));
    }
    if (worst >= 1e-9) {
        out << "3x3 oracle deviation " << worst;
        return false;
    }

    double worst_chi = 0.0;
    for (double x : {0.5, 1.0, 2.0, 5.0, 9.0})
        worst_chi = std::max(worst_chi,
                             std::abs(chi_square_survival(x, 2) - std::exp(-x / 2.0)));
    out << "oracle err " << worst << ", chi2 dof-2 err " << worst_chi << ", p(6.4,1)="
        << r2.p_value;
    return worst_chi < 1e-10;
}

// --------------------------------------------------------------- criterion 11

bool uniform_reduction(std::ostream& out) {
    ModelConfig cfg = reduced_model_config();
    cfg.attention = AttentionKind::None;
    cfg.fusion = FusionKind::Add;
    GlamorNet<double> net(cfg);
    Rng rng(20240011);
    net.init(rng);

    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        TensorD face = TensorD::uniform({2, 3, 16, 16}, 0.0, 1.0, rng);
        TensorD ctx = TensorD::uniform({2, 3, 32, 32}, 0.0, 1.0, rng);
        auto got = net.forward(face, ctx, Mode::Eval, nullptr);

        // independently coded two-branch mean-pool baseline, same parameters
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
        MlpHead<double>& head = net.fusion().head();
        const int64_t n = u.dim(0);
        TensorD logits({n, cfg.classes});
        for (int64_t i = 0; i < n; ++i) {
            std::vector<double> hvec(static_cast<size_t>(head.fc1.out_features()));
            for (int64_t o = 0; o < head.fc1.out_features(); ++o) {
                double s = head.fc1.bias[o];
                for (int64_t k = 0; k < head.fc1.in_features(); ++k)
                    s += head.fc1.weight.at(o, k) * u.at(i, k);
                hvec[static_cast<size_t>(o)] = std::max(0.0, s);
            }
            for (int64_t o = 0; o < head.fc2.out_features(); ++o) {
                double s = head.fc2.bias[o];
                for (int64_t k = 0; k < head.fc2.in_features(); ++k)
                    s += head.fc2.weight.at(o, k) * hvec[static_cast<size_t>(k)];
                logits.at(i, o) = s;
            }
        }
        for (int64_t i = 0; i < logits.size(); ++i)
            worst = std::max(worst, std::abs(logits[i] - got.logits[i]));
    }
    out << "max abs deviation " << worst;
    return worst < 1e-10;
}

} // namespace

int main() {
    Harness h;
    h.run(1, "gradient-correctness", gradient_correctness);
    h.run(2, "attention-invariants", attention_invariants);
    h.run(3, "fusion-invariants", fusion_invariants);
    h.run(4, "shape-contract", shape_contract);
    h.run(5, "overfit-runs", overfit_runs);
    h.run(6, "determinism", determinism);
    h.run(7, "checkpoint-roundtrip", checkpoint_roundtrip);
    h.run(8, "splitter", splitter);
    h.run(9, "masking", masking);
    h.run(10, "statistics", statistics);
    h.run(11, "uniform-attention-reduction", uniform_reduction);

    if (h.failures == 0) {
        std::printf("all acceptance criteria passed\n");
        return 0;
    }
    std::printf("%d criteria FAILED\n", h.failures);
    return 1;
}
