#include "egossl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include "egossl/binio.hpp"
#include "egossl/rng.hpp"

namespace egossl::data {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double pattern_value(int pattern, double freq, double u, double v) {
    switch (pattern) {
        case 0: return 0.5 + 0.5 * std::sin(kTwoPi * freq * u);
        case 1: return 0.5 + 0.5 * std::sin(kTwoPi * freq * (u + v));
        case 2: return 0.5 + 0.5 * std::sin(kTwoPi * freq * u) * std::sin(kTwoPi * freq * v);
        case 3: return 0.5 + 0.5 * std::sin(kTwoPi * freq * v);
        default: throw std::invalid_argument("invalid generator spec");
    }
}

std::size_t sample_label(const std::vector<ClassSpec>& classes, double u) {
    double acc = 0.0;
    for (std::size_t k = 0; k < classes.size(); ++k) {
        acc += classes[k].prior;
        if (u < acc) return k;
    }
    return classes.size() - 1;
}

}  // namespace

GeneratorConfig default_generator() {
    GeneratorConfig cfg;
    // All classes share the checker texture, so appearance statistics carry no
    // label; a class shows itself in video only through its pan speed and in
    // motion only through its gyro tone. Both cues are distinct for every
    // class here — overlapping variants are a config choice, not the default.
    cfg.classes = {
        {0.27, 12.0, 2, 0.0},
        {0.25, 24.0, 2, 0.4},
        {0.25, 36.0, 2, 0.8},
        {0.23, 48.0, 2, 1.2},
    };
    return cfg;
}

void validate(const GeneratorConfig& cfg) {
    if (cfg.n_pairs == 0) throw std::invalid_argument("n_pairs must be positive");
    if (cfg.n_subjects == 0) throw std::invalid_argument("invalid generator spec");
    if (cfg.video_frames == 0 || cfg.video_height == 0 || cfg.video_width == 0) {
        throw std::invalid_argument("invalid generator spec");
    }
    if (!(cfg.video_fps > 0.0) || !(cfg.motion_rate > 0.0) || cfg.motion_samples == 0) {
        throw std::invalid_argument("invalid generator spec");
    }
    if (cfg.classes.size() < 2) throw std::invalid_argument("invalid generator spec");
    double total = 0.0;
    for (const auto& c : cfg.classes) {
        if (!(c.prior > 0.0) || !(c.motion_freq >= 0.0) || c.video_pattern < 0 ||
            c.video_pattern > 3) {
            throw std::invalid_argument("invalid generator spec");
        }
        total += c.prior;
    }
    if (std::abs(total - 1.0) > 1e-6) throw std::invalid_argument("invalid generator spec");
}

ClipPair generate_pair(const GeneratorConfig& cfg, std::uint64_t seed, std::uint32_t clip_id) {
    validate(cfg);
    auto rng = make_rng(mix_seed(seed, tag_hash("clip"), clip_id));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    ClipPair pair;
    pair.clip_id = clip_id;
    pair.subject_id = static_cast<std::uint32_t>(clip_id % cfg.n_subjects);
    pair.label = static_cast<std::uint32_t>(sample_label(cfg.classes, unit(rng)));
    const ClassSpec& cls = cfg.classes[pair.label];

    // Latent state shared by both modalities. Drift is an intensity: the
    // spectrogram magnitude could never recover a direction, so none is
    // encoded on either side.
    const double z0 = sym(rng), z1 = sym(rng), z2 = sym(rng), z3 = sym(rng);
    const double drift_x = cfg.drift_gain * std::abs(z0);  // widths/s
    const double drift_y = cfg.drift_gain * std::abs(z1);
    const double amp = cfg.base_amp * (1.0 + cfg.amp_jitter * z2);
    const double phase = std::numbers::pi * z3;

    // Instance nuisance (texture placement, photometric jitter). Polarity and
    // tint are invisible to the motion track, so matching pressure pushes the
    // video encoder to discard them.
    const double off_u = unit(rng), off_v = unit(rng);
    const double brightness = 0.2 * sym(rng) * 0.5;             // +-0.1
    const double contrast = 1.0 + 0.3 * sym(rng);               // 0.7 .. 1.3
    const double polarity = unit(rng) < 0.5 ? -1.0 : 1.0;       // texture sign flip
    const double tint[3] = {1.0 + 0.3 * sym(rng), 1.0 + 0.3 * sym(rng),
                            1.0 + 0.3 * sym(rng)};              // per-channel gain

    // Mild per-subject effects, stable across that subject's clips.
    auto subject_rng = make_rng(mix_seed(seed, tag_hash("subject"), pair.subject_id));
    std::uniform_real_distribution<double> subj(-0.05, 0.05);
    const double subj_bias_x = subj(subject_rng);
    const double subj_bias_y = subj(subject_rng);
    const double subj_bias_z = subj(subject_rng);
    const double subj_brightness = subj(subject_rng);

    // --- Motion track: accel x/y/z then gyro x/y/z at motion_rate Hz.
    const std::size_t S = cfg.motion_samples;
    pair.motion = Tensor::zeros(Shape{6, S});
    auto chan = [&](std::size_t c) { return pair.motion.data.data() + c * S; };
    double* accel_x = chan(0);
    double* accel_y = chan(1);
    double* accel_z = chan(2);
    double* gyro_x = chan(3);
    double* gyro_y = chan(4);
    double* gyro_z = chan(5);
    for (std::size_t i = 0; i < S; ++i) {
        const double t = static_cast<double>(i) / cfg.motion_rate;
        const double sig = kTwoPi * cls.motion_freq * t + phase;
        accel_x[i] = 0.3 * amp * std::sin(sig + 1.7) + cfg.noise_motion * gauss(rng);
        accel_y[i] = cfg.noise_motion * gauss(rng);
        accel_z[i] = cfg.accel_gravity + cfg.noise_motion * gauss(rng);
        gyro_x[i] = cfg.gyro_coupling * drift_x + amp * std::sin(sig) + subj_bias_x +
                    cfg.noise_motion * gauss(rng);
        gyro_y[i] = cfg.gyro_coupling * drift_y + amp * std::cos(sig) + subj_bias_y +
                    cfg.noise_motion * gauss(rng);
        gyro_z[i] = subj_bias_z + cfg.noise_motion * gauss(rng);
    }

    // Camera shake: a faint echo of the gyro's smoothed integral.
    std::vector<double> follow_x(S), follow_y(S);
    {
        double ix = 0.0, iy = 0.0, ex = 0.0, ey = 0.0;
        for (std::size_t i = 0; i < S; ++i) {
            ix += gyro_x[i] / cfg.motion_rate;
            iy += gyro_y[i] / cfg.motion_rate;
            ex += cfg.shake_alpha * (ix - ex);
            ey += cfg.shake_alpha * (iy - ey);
            follow_x[i] = cfg.shake_gain * ex;
            follow_y[i] = cfg.shake_gain * ey;
        }
    }

    // --- Video track.
    const std::size_t T = cfg.video_frames, H = cfg.video_height, W = cfg.video_width;
    pair.video = Tensor::zeros(Shape{3, T, H, W});
    for (std::size_t f = 0; f < T; ++f) {
        const double t = static_cast<double>(f) / cfg.video_fps;
        const std::size_t si =
            std::min(S - 1, static_cast<std::size_t>(std::lround(t * cfg.motion_rate)));
        const double shift_u = (cls.video_speed + cfg.drift_video * drift_x) * t + follow_x[si] + off_u;
        const double shift_v = cfg.drift_video * drift_y * t + follow_y[si] + off_v;
        const double flick = cfg.flicker * gauss(rng);  // per-frame exposure wobble
        for (std::size_t y = 0; y < H; ++y) {
            const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(H) + shift_v;
            for (std::size_t x = 0; x < W; ++x) {
                const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(W) + shift_u;
                const double base = pattern_value(cls.video_pattern, cfg.pattern_freq, u, v);
                const double lit = polarity * contrast * (base - 0.5);
                for (std::size_t c = 0; c < 3; ++c) {
                    const double noisy = 0.5 + tint[c] * lit + brightness + subj_brightness + flick +
                                         cfg.noise_video * gauss(rng);
                    pair.video.data[((c * T + f) * H + y) * W + x] = std::clamp(noisy, 0.0, 1.0);
                }
            }
        }
    }
    return pair;
}

std::vector<ClipPair> generate_dataset(const GeneratorConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    std::vector<ClipPair> pairs;
    pairs.reserve(cfg.n_pairs);
    for (std::uint32_t id = 0; id < cfg.n_pairs; ++id) {
        pairs.push_back(generate_pair(cfg, seed, id));
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// JSON round-trips (missing keys fall back to defaults)
// ---------------------------------------------------------------------------

void to_json(json& j, const ClassSpec& c) {
    j = json{{"prior", c.prior},
             {"motion_freq", c.motion_freq},
             {"video_pattern", c.video_pattern},
             {"video_speed", c.video_speed}};
}

void from_json(const json& j, ClassSpec& c) {
    ClassSpec d;
    c.prior = j.value("prior", d.prior);
    c.motion_freq = j.value("motion_freq", d.motion_freq);
    c.video_pattern = j.value("video_pattern", d.video_pattern);
    c.video_speed = j.value("video_speed", d.video_speed);
}

void to_json(json& j, const GeneratorConfig& cfg) {
    j = json{{"n_pairs", cfg.n_pairs},
             {"n_subjects", cfg.n_subjects},
             {"video_frames", cfg.video_frames},
             {"video_height", cfg.video_height},
             {"video_width", cfg.video_width},
             {"video_fps", cfg.video_fps},
             {"motion_samples", cfg.motion_samples},
             {"motion_rate", cfg.motion_rate},
             {"drift_gain", cfg.drift_gain},
             {"drift_video", cfg.drift_video},
             {"gyro_coupling", cfg.gyro_coupling},
             {"shake_gain", cfg.shake_gain},
             {"flicker", cfg.flicker},
             {"shake_alpha", cfg.shake_alpha},
             {"base_amp", cfg.base_amp},
             {"amp_jitter", cfg.amp_jitter},
             {"accel_gravity", cfg.accel_gravity},
             {"pattern_freq", cfg.pattern_freq},
             {"noise_motion", cfg.noise_motion},
             {"noise_video", cfg.noise_video},
             {"classes", cfg.classes}};
}

void from_json(const json& j, GeneratorConfig& cfg) {
    const GeneratorConfig d = default_generator();
    cfg.n_pairs = j.value("n_pairs", d.n_pairs);
    cfg.n_subjects = j.value("n_subjects", d.n_subjects);
    cfg.video_frames = j.value("video_frames", d.video_frames);
    cfg.video_height = j.value("video_height", d.video_height);
    cfg.video_width = j.value("video_width", d.video_width);
    cfg.video_fps = j.value("video_fps", d.video_fps);
    cfg.motion_samples = j.value("motion_samples", d.motion_samples);
    cfg.motion_rate = j.value("motion_rate", d.motion_rate);
    cfg.drift_gain = j.value("drift_gain", d.drift_gain);
    cfg.drift_video = j.value("drift_video", d.drift_video);
    cfg.gyro_coupling = j.value("gyro_coupling", d.gyro_coupling);
    cfg.shake_gain = j.value("shake_gain", d.shake_gain);
    cfg.flicker = j.value("flicker", d.flicker);
    cfg.shake_alpha = j.value("shake_alpha", d.shake_alpha);
    cfg.base_amp = j.value("base_amp", d.base_amp);
    cfg.amp_jitter = j.value("amp_jitter", d.amp_jitter);
    cfg.accel_gravity = j.value("accel_gravity", d.accel_gravity);
    cfg.pattern_freq = j.value("pattern_freq", d.pattern_freq);
    cfg.noise_motion = j.value("noise_motion", d.noise_motion);
    cfg.noise_video = j.value("noise_video", d.noise_video);
    cfg.classes = j.value("classes", d.classes);
}

// ---------------------------------------------------------------------------
// Dataset files
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'E', 'G', 'O', 'S'};
constexpr std::uint16_t kVersion = 1;

std::vector<std::uint64_t> write_blob(const std::filesystem::path& path,
                                      const std::vector<ClipPair>& pairs, bool video) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    os.write(kMagic, 4);
    io::put_u16(os, kVersion);
    io::put_u32(os, static_cast<std::uint32_t>(pairs.size()));
    std::vector<std::uint64_t> offsets;
    offsets.reserve(pairs.size());
    for (const auto& pair : pairs) {
        offsets.push_back(static_cast<std::uint64_t>(os.tellp()));
        const Tensor& t = video ? pair.video : pair.motion;
        io::put_u32(os, pair.clip_id);
        os.put(static_cast<char>(t.rank()));
        for (std::size_t d : t.shape) io::put_u32(os, static_cast<std::uint32_t>(d));
        for (double v : t.data) io::put_f32(os, static_cast<float>(v));
    }
    os.flush();
    if (!os) throw std::runtime_error("write failed: " + path.string());
    return offsets;
}

std::vector<Tensor> read_blob(const std::filesystem::path& path,
                              std::vector<std::uint32_t>& clip_ids) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != std::string(kMagic, 4)) {
        throw std::runtime_error("invalid dataset blob: bad magic in " + path.string());
    }
    if (io::get_u16(is) != kVersion) {
        throw std::runtime_error("invalid dataset blob: unsupported version");
    }
    const std::uint32_t count = io::get_u32(is);
    std::vector<Tensor> tensors;
    tensors.reserve(count);
    clip_ids.clear();
    for (std::uint32_t e = 0; e < count && is; ++e) {
        clip_ids.push_back(io::get_u32(is));
        const int rank = is.get();
        if (rank < 0) break;
        Shape shape(static_cast<std::size_t>(rank));
        for (auto& d : shape) d = io::get_u32(is);
        if (!is) break;
        Tensor t(shape);
        for (auto& v : t.data) v = static_cast<double>(io::get_f32(is));
        if (!is) break;
        tensors.push_back(std::move(t));
    }
    if (!is || tensors.size() != count) {
        throw std::runtime_error("invalid dataset blob: truncated " + path.string());
    }
    return tensors;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const GeneratorConfig& cfg,
                  std::uint64_t seed, const std::vector<ClipPair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("no data");
    std::filesystem::create_directories(dir);
    const auto video_offsets = write_blob(dir / "video.bin", pairs, true);
    const auto motion_offsets = write_blob(dir / "motion.bin", pairs, false);

    json clips = json::array();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        clips.push_back({{"clip_id", pairs[i].clip_id},
                         {"subject_id", pairs[i].subject_id},
                         {"label", pairs[i].label},
                         {"video_offset", video_offsets[i]},
                         {"motion_offset", motion_offsets[i]}});
    }
    const json manifest = {{"version", 1},
                           {"seed", seed},
                           {"n_pairs", pairs.size()},
                           {"generator", cfg},
                           {"clips", clips}};
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + (dir / "manifest.json").string());
    os << manifest.dump(2) << '\n';
    if (!os) throw std::runtime_error("write failed: " + (dir / "manifest.json").string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw std::runtime_error("cannot open: " + (dir / "manifest.json").string());
    json manifest;
    is >> manifest;
    if (manifest.value("version", 0) != 1) {
        throw std::runtime_error("invalid dataset: unsupported manifest version");
    }

    Dataset ds;
    ds.generator = manifest.value("generator", default_generator());
    ds.seed = manifest.value("seed", std::uint64_t{0});

    std::vector<std::uint32_t> video_ids, motion_ids;
    auto videos = read_blob(dir / "video.bin", video_ids);
    auto motions = read_blob(dir / "motion.bin", motion_ids);
    const auto& clips = manifest.at("clips");
    if (videos.size() != clips.size() || motions.size() != clips.size()) {
        throw std::runtime_error("invalid dataset: clip count mismatch");
    }
    ds.pairs.resize(clips.size());
    for (std::size_t i = 0; i < clips.size(); ++i) {
        ClipPair& pair = ds.pairs[i];
        pair.clip_id = clips[i].at("clip_id").get<std::uint32_t>();
        pair.subject_id = clips[i].at("subject_id").get<std::uint32_t>();
        pair.label = clips[i].at("label").get<std::uint32_t>();
        if (video_ids[i] != pair.clip_id || motion_ids[i] != pair.clip_id) {
            throw std::runtime_error("invalid dataset: clip id mismatch");
        }
        pair.video = std::move(videos[i]);
        pair.motion = std::move(motions[i]);
    }
    if (ds.pairs.empty()) throw std::runtime_error("no data");
    return ds;
}

// ---------------------------------------------------------------------------
// Splits and batches
// ---------------------------------------------------------------------------

SplitIndices subject_split(const std::vector<ClipPair>& pairs, std::size_t n_subjects,
                           double test_fraction) {
    if (pairs.empty()) throw std::invalid_argument("no data");
    if (n_subjects < 2) throw std::invalid_argument("insufficient subjects");
    if (!(test_fraction > 0.0) || !(test_fraction < 1.0)) {
        throw std::invalid_argument("test_fraction must lie in (0, 1)");
    }
    std::size_t n_test = static_cast<std::size_t>(
        std::lround(test_fraction * static_cast<double>(n_subjects)));
    n_test = std::clamp<std::size_t>(n_test, 1, n_subjects - 1);
    const std::size_t first_test_subject = n_subjects - n_test;

    SplitIndices split;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i].subject_id >= n_subjects) throw std::invalid_argument("insufficient subjects");
        (pairs[i].subject_id >= first_test_subject ? split.test : split.train).push_back(i);
    }
    if (split.train.empty() || split.test.empty()) {
        throw std::invalid_argument("insufficient subjects");
    }
    return split;
}

std::vector<Tensor> compute_spectrograms(const std::vector<ClipPair>& pairs,
                                         const signal::StftConfig& cfg) {
    std::vector<Tensor> specs;
    specs.reserve(pairs.size());
    for (const auto& pair : pairs) specs.push_back(signal::log_spectrogram(pair.motion, cfg));
    return specs;
}

Batch assemble_batch(const std::vector<ClipPair>& pairs, const std::vector<Tensor>& spectrograms,
                     const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw std::invalid_argument("no data");
    if (pairs.size() != spectrograms.size()) throw std::invalid_argument("input shape mismatch");
    const std::size_t B = indices.size();
    const Shape& vs = pairs[indices[0]].video.shape;
    const Shape& ms = spectrograms[indices[0]].shape;

    Batch batch;
    batch.video = Tensor::zeros(Shape{B, vs[0], vs[1], vs[2], vs[3]});
    batch.motion = Tensor::zeros(Shape{B, ms[0], ms[1], ms[2]});
    const std::size_t vn = pairs[indices[0]].video.size();
    const std::size_t mn = spectrograms[indices[0]].size();
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t i = indices[b];
        if (i >= pairs.size()) throw std::invalid_argument("input shape mismatch");
        if (pairs[i].video.shape != vs || spectrograms[i].shape != ms) {
            throw std::invalid_argument("input shape mismatch");
        }
        std::copy(pairs[i].video.data.begin(), pairs[i].video.data.end(),
                  batch.video.data.begin() + b * vn);
        std::copy(spectrograms[i].data.begin(), spectrograms[i].data.end(),
                  batch.motion.data.begin() + b * mn);
        batch.labels.push_back(pairs[i].label);
        batch.clip_ids.push_back(pairs[i].clip_id);
    }
    return batch;
}

std::vector<std::vector<std::size_t>> epoch_batches(const std::vector<std::size_t>& indices,
                                                    std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch) {
    if (indices.empty()) throw std::invalid_argument("no data");
    if (batch_size == 0 || batch_size > indices.size()) {
        throw std::invalid_argument("batch too large");
    }
    std::vector<std::size_t> order = indices;
    auto rng = make_rng(mix_seed(seed, tag_hash("epoch"), epoch));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start + batch_size <= order.size(); start += batch_size) {
        batches.emplace_back(order.begin() + start, order.begin() + start + batch_size);
    }
    return batches;
}

}  // namespace egossl::data
