#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "glamor/image.hpp"
#include "glamor/rng.hpp"
#include "glamor/tensor.hpp"

namespace glamor {

// Fixed label order; confusion-matrix axes and checkpoint heads depend on it.
enum class EmotionLabel : int {
    Angry = 0,
    Disgust = 1,
    Fear = 2,
    Happy = 3,
    Neutral = 4,
    Sad = 5,
    Surprise = 6,
};

inline constexpr int kNumEmotions = 7;

const char* emotion_name(EmotionLabel label);
EmotionLabel emotion_from_name(const std::string& name);

struct BBox {
    int64_t x = 0, y = 0, w = 0, h = 0;
};

// One manifest line: a context frame, the face rectangle inside it, the
// label, and the provenance needed for leak-free splitting.
struct SampleRecord {
    std::string image_path;
    BBox face_bbox;
    EmotionLabel label = EmotionLabel::Neutral;
    std::string video_id;
    double timestamp_s = 0.0;
    std::string split = "train"; // train | val | test
};

std::vector<SampleRecord> read_manifest(const std::string& path);
void write_manifest(const std::vector<SampleRecord>& records, const std::string& path);

// Preprocessing geometry. The context frame is resized to
// context_resize_h x context_resize_w (height x width) and then cropped to
// context_crop; the face rectangle is cropped from the original image and
// resized to face_size.
struct PrepOptions {
    int64_t face_size = 96;
    int64_t context_resize_h = 128;
    int64_t context_resize_w = 171;
    int64_t context_crop = 112;
    bool mask_face = true;
};

struct PreparedSample {
    TensorF face;    // [3, face_size, face_size]
    TensorF context; // [3, crop, crop]
    int label = 0;
};

enum class PrepMode { Train, Eval };

// Loads and preprocesses one record. Train mode draws the crop offsets from
// rng; eval mode center-crops and needs no rng.
PreparedSample prepare_sample(const SampleRecord& record, PrepMode mode, Rng* rng,
                              const PrepOptions& opts = {});

// Same, from an already decoded image (lets callers cache decoded frames).
PreparedSample prepare_from_image(const TensorF& image, const SampleRecord& record, PrepMode mode,
                                  Rng* rng, const PrepOptions& opts = {});

struct SplitOptions {
    double segment_seconds = 2.0;
    double balance_tolerance = 0.1; // max class count <= (1+tol) * min
    double train_fraction = 0.7;
    double val_fraction = 0.15; // remainder goes to test
};

// Frame selection and split assignment: per video, frames are binned into
// segment_seconds-long parts by timestamp and one frame per part is drawn at
// random; every video lands in exactly one split, so no video can feed both
// train and test; classes are then downsampled toward balance within each
// split.
std::vector<SampleRecord> ncaer_split(const std::vector<SampleRecord>& records, Rng& rng,
                                      const SplitOptions& opts = {});

struct SynthOptions {
    int64_t image_h = 96;
    int64_t image_w = 128;
    int per_class = 10;
};

// Writes a small PPM corpus where each class has a distinctive face pattern
// and a correlated context background, plus the manifest describing it.
// Returns the manifest path.
std::string generate_synthetic_dataset(const std::string& out_dir, const SynthOptions& opts,
                                       Rng& rng);

} // namespace glamor
