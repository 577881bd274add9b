#include "egossl/encoders.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "egossl/rng.hpp"

namespace egossl::model {

namespace {

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, const char* what) {
    if (in < k) throw std::invalid_argument(std::string(what) + ": input smaller than kernel");
    return (in - k) / stride + 1;
}

Tensor he_uniform(const Shape& shape, std::size_t fan_in, std::uint64_t seed) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    auto rng = make_rng(seed);
    Tensor t(shape);
    for (auto& v : t.data) v = dist(rng);
    return t;
}

void create_weight(ParamStore& params, const std::string& name, const Shape& shape,
                   std::size_t fan_in, std::uint64_t seed) {
    params.create(name, he_uniform(shape, fan_in, mix_seed(seed, tag_hash(name))));
}

void check_batch(const Tensor& x, std::size_t rank, std::size_t channels, const char* what) {
    if (x.rank() != rank || x.shape[1] != channels) {
        throw std::invalid_argument(std::string(what) + ": input shape mismatch");
    }
}

}  // namespace

std::size_t video_flat_dim(const VideoEncoderConfig& cfg) {
    const std::size_t t1 = conv_out(cfg.frames, 3, 1, "video encoder (time)");
    const std::size_t h1 = conv_out(cfg.height, 3, 2, "video encoder (height)");
    const std::size_t w1 = conv_out(cfg.width, 3, 2, "video encoder (width)");
    const std::size_t h2 = conv_out(h1, 3, 2, "video encoder (height)");
    const std::size_t w2 = conv_out(w1, 3, 2, "video encoder (width)");
    conv_out(t1, 3, 2, "video encoder (time)");
    return cfg.c2 * h2 * w2;
}

std::size_t motion_flat_dim(const MotionEncoderConfig& cfg) {
    const std::size_t h1 = conv_out(cfg.bins, 3, 2, "motion encoder (bins)");
    const std::size_t w1 = conv_out(cfg.frames, 3, 2, "motion encoder (frames)");
    const std::size_t h2 = conv_out(h1, 3, 2, "motion encoder (bins)");
    conv_out(w1, 3, 1, "motion encoder (frames)");
    return cfg.c2 * h2;
}

void init_video_encoder(ParamStore& params, const VideoEncoderConfig& cfg, std::uint64_t seed) {
    const std::size_t flat = video_flat_dim(cfg);
    create_weight(params, "video.conv1.w", Shape{cfg.c1, cfg.in_channels, 3, 3, 3},
                  cfg.in_channels * 27, seed);
    params.create("video.conv1.b", Tensor::zeros(Shape{cfg.c1}));
    create_weight(params, "video.conv2.w", Shape{cfg.c2, cfg.c1, 3, 3, 3}, cfg.c1 * 27, seed);
    params.create("video.conv2.b", Tensor::zeros(Shape{cfg.c2}));
    create_weight(params, "video.fc.w", Shape{flat, cfg.embed_dim}, flat, seed);
    params.create("video.fc.b", Tensor::zeros(Shape{cfg.embed_dim}));
}

void init_motion_encoder(ParamStore& params, const MotionEncoderConfig& cfg, std::uint64_t seed) {
    const std::size_t flat = motion_flat_dim(cfg);
    create_weight(params, "motion.conv1.w", Shape{cfg.c1, cfg.in_channels, 3, 3},
                  cfg.in_channels * 9, seed);
    params.create("motion.conv1.b", Tensor::zeros(Shape{cfg.c1}));
    create_weight(params, "motion.conv2.w", Shape{cfg.c2, cfg.c1, 3, 3}, cfg.c1 * 9, seed);
    params.create("motion.conv2.b", Tensor::zeros(Shape{cfg.c2}));
    create_weight(params, "motion.fc.w", Shape{flat, cfg.embed_dim}, flat, seed);
    params.create("motion.fc.b", Tensor::zeros(Shape{cfg.embed_dim}));
}

Var video_encoder(Graph& g, Var x, const VideoEncoderConfig& cfg) {
    check_batch(g.value(x), 5, cfg.in_channels, "video encoder");
    const std::size_t batch = g.value(x).shape[0];
    Var h = g.conv3d(x, g.param("video.conv1.w"), g.param("video.conv1.b"), 1, 2, 2);
    h = g.relu(h);
    h = g.conv3d(h, g.param("video.conv2.w"), g.param("video.conv2.b"), 2, 2, 2);
    h = g.relu(h);
    h = g.mean_axis(h, 2);  // average the surviving time steps
    h = g.reshape(h, Shape{batch, video_flat_dim(cfg)});
    return g.add_rowvec(g.matmul(h, g.param("video.fc.w")), g.param("video.fc.b"));
}

Var motion_encoder(Graph& g, Var x, const MotionEncoderConfig& cfg) {
    check_batch(g.value(x), 4, cfg.in_channels, "motion encoder");
    const std::size_t batch = g.value(x).shape[0];
    Var h = g.conv2d(x, g.param("motion.conv1.w"), g.param("motion.conv1.b"), 2, 2);
    h = g.relu(h);
    h = g.conv2d(h, g.param("motion.conv2.w"), g.param("motion.conv2.b"), 2, 1);
    h = g.relu(h);
    h = g.mean_axis(h, 3);  // average the surviving frames
    h = g.reshape(h, Shape{batch, motion_flat_dim(cfg)});
    return g.add_rowvec(g.matmul(h, g.param("motion.fc.w")), g.param("motion.fc.b"));
}

Tensor encode_video(ParamStore& params, const VideoEncoderConfig& cfg, const Tensor& batch) {
    Graph g(&params);
    Var emb = video_encoder(g, g.input(batch), cfg);
    return g.value(emb);
}

Tensor encode_motion(ParamStore& params, const MotionEncoderConfig& cfg, const Tensor& batch) {
    Graph g(&params);
    Var emb = motion_encoder(g, g.input(batch), cfg);
    return g.value(emb);
}

}  // namespace egossl::model
