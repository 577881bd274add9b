#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "egossl/signal.hpp"
#include "egossl/tensor.hpp"

namespace egossl::data {

using numerics::Shape;
using numerics::Tensor;

// ---------------------------------------------------------------------------
// Synthetic paired-clip generator
//
// Every pair shares a latent head-motion state: a slow two-axis drift whose
// intensity shows up in the gyroscope as a DC offset and in the video as a
// steady camera pan (optionally with a faint camera-shake echo of the gyro's
// smoothed integral; off by default). On top of that, each action class
// stamps a signature on both sides: a gyro sinusoid at a class-specific
// frequency, and a scene texture translating at a class-specific speed.
// Classes may share either stamp, which controls which modality can
// identify them.
// ---------------------------------------------------------------------------

struct ClassSpec {
    double prior = 0.25;
    double motion_freq = 12.0;  // Hz of the gyro signature sinusoid
    int video_pattern = 0;      // 0 stripes, 1 diagonal, 2 checker, 3 cross-stripes
    double video_speed = 0.0;   // scene translation, widths per second
};

struct GeneratorConfig {
    std::size_t n_pairs = 2000;
    std::size_t n_subjects = 12;

    std::size_t video_frames = 8;
    std::size_t video_height = 16;
    std::size_t video_width = 16;
    double video_fps = 4.0;

    std::size_t motion_samples = 396;
    double motion_rate = 198.0;  // Hz

    double drift_gain = 0.20;    // drift intensity per latent unit, widths/s
    double drift_video = 2.0;    // camera pan per unit of drift intensity
    double gyro_coupling = 6.0;  // rad/s of gyro offset per width/s of drift
    double shake_gain = 0.0;     // camera shake per unit of smoothed gyro integral
    double flicker = 0.10;       // per-frame exposure wobble, stdev in pixel units
    double shake_alpha = 0.05;   // smoothing factor for the shake follower
    double base_amp = 1.0;       // gyro signature amplitude
    double amp_jitter = 0.4;     // latent amplitude variation
    double accel_gravity = 1.0;  // constant bias on the third accelerometer axis
    double pattern_freq = 1.0;   // texture cycles per frame width
    double noise_motion = 0.05;
    double noise_video = 0.02;

    std::vector<ClassSpec> classes;
};

// Four classes over a shared texture, each with its own gyro frequency and
// pan speed, so every class is identifiable from either modality alone.
// Overlapping arrangements (motion-only / video-only classes) are reached by
// overriding `classes`.
GeneratorConfig default_generator();

// Throws "invalid generator spec" / "n_pairs must be positive" on bad input.
void validate(const GeneratorConfig& cfg);

void to_json(nlohmann::json& j, const ClassSpec& c);
void from_json(const nlohmann::json& j, ClassSpec& c);
void to_json(nlohmann::json& j, const GeneratorConfig& cfg);
void from_json(const nlohmann::json& j, GeneratorConfig& cfg);

struct ClipPair {
    std::uint32_t clip_id = 0;
    std::uint32_t subject_id = 0;
    std::uint32_t label = 0;
    Tensor video;   // [3, T, H, W], values in [0, 1]
    Tensor motion;  // [6, samples]: accel x/y/z then gyro x/y/z
};

// Deterministic in (cfg, seed, clip_id) alone.
ClipPair generate_pair(const GeneratorConfig& cfg, std::uint64_t seed, std::uint32_t clip_id);
std::vector<ClipPair> generate_dataset(const GeneratorConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// On-disk dataset: manifest.json plus video.bin / motion.bin blobs. Blobs
// start with an "EGOS" magic, a version, and a record count; each record is
// (clip_id u32, rank u8, dims u32..., float32 payload), little-endian.
// ---------------------------------------------------------------------------

struct Dataset {
    GeneratorConfig generator;
    std::uint64_t seed = 0;
    std::vector<ClipPair> pairs;
};

void save_dataset(const std::filesystem::path& dir, const GeneratorConfig& cfg,
                  std::uint64_t seed, const std::vector<ClipPair>& pairs);
Dataset load_dataset(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Splits and batches
// ---------------------------------------------------------------------------

// Subject-disjoint split: the highest-numbered round(test_fraction *
// n_subjects) subjects (clamped to [1, n_subjects - 1]) form the test pool.
struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

SplitIndices subject_split(const std::vector<ClipPair>& pairs, std::size_t n_subjects,
                           double test_fraction);

// Spectrograms aligned index-for-index with `pairs`.
std::vector<Tensor> compute_spectrograms(const std::vector<ClipPair>& pairs,
                                         const signal::StftConfig& cfg);

struct Batch {
    Tensor video;   // [B, 3, T, H, W]
    Tensor motion;  // [B, 6, bins, frames]
    std::vector<std::size_t> labels;
    std::vector<std::uint32_t> clip_ids;
};

Batch assemble_batch(const std::vector<ClipPair>& pairs, const std::vector<Tensor>& spectrograms,
                     const std::vector<std::size_t>& indices);

// Deterministic epoch order: shuffles with a stream derived from (seed,
// epoch) and yields batches of exactly batch_size, dropping the remainder.
std::vector<std::vector<std::size_t>> epoch_batches(const std::vector<std::size_t>& indices,
                                                    std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch);

}  // namespace egossl::data
