#include "glamor/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "glamor/errors.hpp"

namespace glamor {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<const char*, kNumEmotions> kEmotionNames = {
    "angry", "disgust", "fear", "happy", "neutral", "sad", "surprise"};

} // namespace

const char* emotion_name(EmotionLabel label) {
    const int i = static_cast<int>(label);
    if (i < 0 || i >= kNumEmotions)
        throw ValueError("emotion_name: bad label index " + std::to_string(i));
    return kEmotionNames[static_cast<size_t>(i)];
}

EmotionLabel emotion_from_name(const std::string& name) {
    for (int i = 0; i < kNumEmotions; ++i)
        if (name == kEmotionNames[static_cast<size_t>(i)])
            return static_cast<EmotionLabel>(i);
    throw ValueError("unknown emotion label '" + name + "'");
}

std::vector<SampleRecord> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError(path + ": cannot open manifest");
    std::vector<SampleRecord> records;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": bad JSON: " + e.what());
        }
        try {
            SampleRecord r;
            r.image_path = j.at("image_path").get<std::string>();
            const auto& bb = j.at("face_bbox");
            if (!bb.is_array() || bb.size() != 4)
                throw FormatError("face_bbox must be [x,y,w,h]");
            r.face_bbox = {bb[0].get<int64_t>(), bb[1].get<int64_t>(), bb[2].get<int64_t>(),
                           bb[3].get<int64_t>()};
            if (j.at("label").is_string())
                r.label = emotion_from_name(j.at("label").get<std::string>());
            else
                r.label = static_cast<EmotionLabel>(j.at("label").get<int>());
            r.video_id = j.at("video_id").get<std::string>();
            r.timestamp_s = j.at("timestamp_s").get<double>();
            if (r.timestamp_s < 0.0 || !std::isfinite(r.timestamp_s))
                throw ValueError("timestamp_s must be a nonnegative real");
            if (j.contains("split"))
                r.split = j.at("split").get<std::string>();
            records.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

void write_manifest(const std::vector<SampleRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError(path + ": cannot open manifest for writing");
    for (const auto& r : records) {
        json j{{"image_path", r.image_path},
               {"face_bbox", {r.face_bbox.x, r.face_bbox.y, r.face_bbox.w, r.face_bbox.h}},
               {"label", emotion_name(r.label)},
               {"video_id", r.video_id},
               {"timestamp_s", r.timestamp_s},
               {"split", r.split}};
        out << j.dump() << "\n";
    }
    if (!out)
        throw IoError(path + ": manifest write failed");
}

PreparedSample prepare_from_image(const TensorF& image, const SampleRecord& record, PrepMode mode,
                                  Rng* rng, const PrepOptions& opts) {
    const BBox& bb = record.face_bbox;
    const int64_t ih = image.dim(1), iw = image.dim(2);
    if (bb.x < 0 || bb.y < 0 || bb.w < 1 || bb.h < 1 || bb.x + bb.w > iw || bb.y + bb.h > ih)
        throw ValueError(record.image_path + ": face bbox outside image bounds");

    PreparedSample out;
    out.label = static_cast<int>(record.label);

    // Face: crop from the unmasked original, then resize.
    out.face = resize_bilinear(crop(image, bb.x, bb.y, bb.w, bb.h), opts.face_size, opts.face_size);

    // Context: mask in original coordinates, resize, then crop.
    TensorF ctx = opts.mask_face ? mask_rect(image, bb.x, bb.y, bb.w, bb.h) : image;
    ctx = resize_bilinear(ctx, opts.context_resize_h, opts.context_resize_w);
    const int64_t max_oy = opts.context_resize_h - opts.context_crop;
    const int64_t max_ox = opts.context_resize_w - opts.context_crop;
    if (max_oy < 0 || max_ox < 0)
        throw ConfigError("prepare_sample: crop larger than resized context");
    int64_t oy, ox;
    if (mode == PrepMode::Train) {
        if (rng == nullptr)
            throw StateError("prepare_sample: train mode requires an rng");
        oy = static_cast<int64_t>(rng->below(static_cast<uint64_t>(max_oy + 1)));
        ox = static_cast<int64_t>(rng->below(static_cast<uint64_t>(max_ox + 1)));
    } else {
        oy = max_oy / 2;
        ox = max_ox / 2;
    }
    out.context = crop(ctx, ox, oy, opts.context_crop, opts.context_crop);
    return out;
}

PreparedSample prepare_sample(const SampleRecord& record, PrepMode mode, Rng* rng,
                              const PrepOptions& opts) {
    return prepare_from_image(load_ppm(record.image_path), record, mode, rng, opts);
}

std::vector<SampleRecord> ncaer_split(const std::vector<SampleRecord>& records, Rng& rng,
                                      const SplitOptions& opts) {
    if (records.empty())
        throw ValueError("ncaer_split: empty record list");
    if (opts.segment_seconds <= 0.0)
        throw ConfigError("ncaer_split: segment_seconds must be positive");
    for (const auto& r : records) {
        if (r.video_id.empty())
            throw ValueError("ncaer_split: record '" + r.image_path + "' has no video_id");
        if (r.timestamp_s < 0.0 || !std::isfinite(r.timestamp_s))
            throw ValueError("ncaer_split: record '" + r.image_path + "' has a bad timestamp");
    }

    // Deterministic grouping order, then shuffled video-level assignment.
    std::map<std::string, std::vector<SampleRecord>> by_video;
    for (const auto& r : records)
        by_video[r.video_id].push_back(r);

    std::vector<std::string> video_ids;
    video_ids.reserve(by_video.size());
    for (const auto& [vid, _] : by_video)
        video_ids.push_back(vid);
    rng.shuffle(video_ids);

    const size_t n_videos = video_ids.size();
    const size_t n_train = static_cast<size_t>(std::llround(opts.train_fraction * n_videos));
    const size_t n_val = static_cast<size_t>(std::llround(opts.val_fraction * n_videos));
    auto split_of = [&](size_t idx) -> const char* {
        if (idx < n_train)
            return "train";
        if (idx < n_train + n_val)
            return "val";
        return "test";
    };

    // One frame per segment_seconds-long part, drawn uniformly.
    std::vector<SampleRecord> selected;
    for (size_t vi = 0; vi < video_ids.size(); ++vi) {
        auto& frames = by_video[video_ids[vi]];
        std::stable_sort(frames.begin(), frames.end(),
                         [](const SampleRecord& a, const SampleRecord& b) {
                             return a.timestamp_s < b.timestamp_s;
                         });
        std::map<int64_t, std::vector<const SampleRecord*>> bins;
        for (const auto& f : frames)
            bins[static_cast<int64_t>(f.timestamp_s / opts.segment_seconds)].push_back(&f);
        for (const auto& [bin, members] : bins) {
            const SampleRecord* pick = members[rng.below(members.size())];
            SampleRecord r = *pick;
            r.split = split_of(vi);
            selected.push_back(std::move(r));
        }
    }

    // Downsample toward class balance within each split. Tolerance is
    // relative to the smallest nonempty class.
    std::vector<SampleRecord> out;
    for (const char* split : {"train", "val", "test"}) {
        std::array<std::vector<SampleRecord>, kNumEmotions> per_class;
        for (auto& r : selected)
            if (r.split == split)
                per_class[static_cast<size_t>(r.label)].push_back(r);
        int64_t min_count = -1;
        for (const auto& v : per_class)
            if (!v.empty() && (min_count < 0 || static_cast<int64_t>(v.size()) < min_count))
                min_count = static_cast<int64_t>(v.size());
        if (min_count < 0)
            continue;
        const int64_t cap = static_cast<int64_t>(
            std::floor((1.0 + opts.balance_tolerance) * static_cast<double>(min_count)));
        for (auto& v : per_class) {
            while (static_cast<int64_t>(v.size()) > cap) {
                const size_t drop = static_cast<size_t>(rng.below(v.size()));
                v.erase(v.begin() + static_cast<std::ptrdiff_t>(drop));
            }
            out.insert(out.end(), v.begin(), v.end());
        }
    }
    return out;
}

namespace {

// Seven well-separated base colors; the class signal lives in both the
// context background and the face texture.
constexpr std::array<std::array<float, 3>, kNumEmotions> kPalette = {{
    {0.85f, 0.15f, 0.15f},
    {0.15f, 0.80f, 0.15f},
    {0.15f, 0.25f, 0.85f},
    {0.85f, 0.80f, 0.15f},
    {0.80f, 0.15f, 0.80f},
    {0.15f, 0.80f, 0.80f},
    {0.90f, 0.55f, 0.25f},
}};

TensorF synth_image(int cls, int64_t h, int64_t w, const BBox& bb, Rng& rng) {
    TensorF img({3, h, w});
    const auto& base = kPalette[static_cast<size_t>(cls)];
    // Context: class color with a horizontal gradient and mild noise.
    for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) {
            const float g = 0.75f + 0.25f * static_cast<float>(j) / static_cast<float>(w - 1);
            for (int64_t c = 0; c < 3; ++c) {
                float v = base[static_cast<size_t>(c)] * g +
                          0.04f * static_cast<float>(rng.uniform(-1.0, 1.0));
                img[(c * h + i) * w + j] = std::min(1.0f, std::max(0.0f, v));
            }
        }
    // Face: stripe pattern whose period and orientation encode the class.
    const int64_t period = 2 + cls % 4;
    const bool vertical = cls % 2 == 0;
    for (int64_t i = bb.y; i < bb.y + bb.h; ++i)
        for (int64_t j = bb.x; j < bb.x + bb.w; ++j) {
            const int64_t phase = vertical ? (j - bb.x) : (i - bb.y);
            const float stripe = (phase / period) % 2 == 0 ? 0.95f : 0.15f;
            img[(0 * h + i) * w + j] = stripe;
            img[(1 * h + i) * w + j] = 1.0f - stripe * base[1];
            img[(2 * h + i) * w + j] = base[2] * stripe;
        }
    return img;
}

} // namespace

std::string generate_synthetic_dataset(const std::string& out_dir, const SynthOptions& opts,
                                       Rng& rng) {
    if (opts.per_class < 1)
        throw ConfigError("generate_synthetic_dataset: per_class must be >= 1");
    if (opts.image_h < 32 || opts.image_w < 32)
        throw ConfigError("generate_synthetic_dataset: image dims must be >= 32");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec)
        throw IoError(out_dir + ": cannot create output directory: " + ec.message());

    std::vector<SampleRecord> records;
    for (int cls = 0; cls < kNumEmotions; ++cls) {
        for (int i = 0; i < opts.per_class; ++i) {
            const int64_t fh = opts.image_h / 3;
            const int64_t fw = fh;
            BBox bb;
            bb.w = fw;
            bb.h = fh;
            bb.x = static_cast<int64_t>(rng.below(static_cast<uint64_t>(opts.image_w - fw + 1)));
            bb.y = static_cast<int64_t>(rng.below(static_cast<uint64_t>(opts.image_h - fh + 1)));
            const TensorF img = synth_image(cls, opts.image_h, opts.image_w, bb, rng);
            SampleRecord r;
            r.image_path = (fs::path(out_dir) /
                            (std::string(emotion_name(static_cast<EmotionLabel>(cls))) + "_" +
                             std::to_string(i) + ".ppm"))
                               .string();
            r.face_bbox = bb;
            r.label = static_cast<EmotionLabel>(cls);
            r.video_id = std::string("synth_") + emotion_name(static_cast<EmotionLabel>(cls)) +
                         "_" + std::to_string(i);
            r.timestamp_s = 0.0;
            save_ppm(img, r.image_path);
            records.push_back(std::move(r));
        }
    }
    const std::string manifest_path = (fs::path(out_dir) / "manifest.jsonl").string();
    write_manifest(records, manifest_path);
    return manifest_path;
}

} // namespace glamor
