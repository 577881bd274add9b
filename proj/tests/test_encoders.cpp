// Encoder construction: flattened widths, He-uniform init, per-tensor seed
// streams, batch consistency, and gradient flow end to end.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "egossl/contrastive.hpp"
#include "egossl/encoders.hpp"
#include "egossl/graph.hpp"
#include "egossl/param_store.hpp"
#include "egossl/rng.hpp"

using egossl::make_rng;
using egossl::numerics::Graph;
using egossl::numerics::ParamStore;
using egossl::numerics::Shape;
using egossl::numerics::Tensor;
using egossl::numerics::Var;
namespace model = egossl::model;

namespace {

Tensor random_batch(const Shape& shape, std::uint64_t seed) {
    Tensor t(shape);
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : t.data) v = u(rng);
    return t;
}

Tensor embedding_row(const Tensor& emb, std::size_t row) {
    const std::size_t d = emb.shape[1];
    Tensor out(Shape{1, d});
    std::copy(emb.data.begin() + row * d, emb.data.begin() + (row + 1) * d, out.data.begin());
    return out;
}

}  // namespace

TEST_CASE("flattened widths follow the valid-convolution arithmetic") {
    // Video 16x16x8: spatial 16 ->7 ->3 at stride 2, time 8 ->6 ->2, then the
    // time mean leaves c2 * 3 * 3.
    CHECK(model::video_flat_dim(model::VideoEncoderConfig{}) == 144);
    // Motion 33x11: bins 33 ->16 ->7, frames 11 ->5 ->3, then the frame mean
    // leaves c2 * 7.
    CHECK(model::motion_flat_dim(model::MotionEncoderConfig{}) == 112);

    model::VideoEncoderConfig vc;
    vc.frames = 5, vc.height = 9, vc.width = 9, vc.c2 = 3;
    CHECK(model::video_flat_dim(vc) == 3);  // 9 ->4 ->1 both spatial axes

    vc.frames = 4;  // time shrinks to 2 before the second kernel
    CHECK_THROWS_AS(model::video_flat_dim(vc), std::invalid_argument);
    vc.frames = 2;  // too short even for the first kernel
    CHECK_THROWS_AS(model::video_flat_dim(vc), std::invalid_argument);

    model::MotionEncoderConfig mc;
    mc.bins = 4;  // 4 ->1, below the second kernel
    CHECK_THROWS_AS(model::motion_flat_dim(mc), std::invalid_argument);
}

TEST_CASE("initialization is deterministic and per-tensor seeded") {
    ParamStore a, b;
    model::init_video_encoder(a, {}, 42);
    model::init_motion_encoder(a, {}, 42);
    model::init_video_encoder(b, {}, 42);
    model::init_motion_encoder(b, {}, 42);
    for (const char* name : {"video.conv1.w", "video.conv2.w", "video.fc.w", "motion.conv1.w",
                             "motion.conv2.w", "motion.fc.w"}) {
        CHECK(a.tensor(name).data == b.tensor(name).data);
    }

    // A different seed moves the draws.
    ParamStore c;
    model::init_video_encoder(c, {}, 43);
    CHECK(a.tensor("video.conv1.w").data != c.tensor("video.conv1.w").data);

    // Each tensor has its own stream: creating the video encoder first must
    // not shift the motion draws.
    ParamStore motion_only;
    model::init_motion_encoder(motion_only, {}, 42);
    for (const char* name : {"motion.conv1.w", "motion.conv2.w", "motion.fc.w"}) {
        CHECK(motion_only.tensor(name).data == a.tensor(name).data);
    }
}

TEST_CASE("weights stay inside the He-uniform limit and biases start at zero") {
    ParamStore p;
    model::init_video_encoder(p, {}, 7);
    model::init_motion_encoder(p, {}, 7);

    const struct {
        const char* name;
        std::size_t fan_in;
    } weights[] = {
        {"video.conv1.w", 3 * 27}, {"video.conv2.w", 8 * 27}, {"video.fc.w", 144},
        {"motion.conv1.w", 6 * 9}, {"motion.conv2.w", 8 * 9}, {"motion.fc.w", 112},
    };
    for (const auto& w : weights) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.fan_in));
        double peak = 0.0;
        for (double v : p.tensor(w.name).data) {
            CHECK(std::abs(v) <= limit);
            peak = std::max(peak, std::abs(v));
        }
        INFO(w.name);
        CHECK(peak > 0.5 * limit);  // the interval is actually used
    }

    for (const char* name : {"video.conv1.b", "video.conv2.b", "video.fc.b", "motion.conv1.b",
                             "motion.conv2.b", "motion.fc.b"}) {
        for (double v : p.tensor(name).data) CHECK(v == 0.0);
    }
}

TEST_CASE("forward passes produce [B, d] and rows do not depend on batch mates") {
    ParamStore p;
    model::init_video_encoder(p, {}, 11);
    model::init_motion_encoder(p, {}, 11);

    const Tensor video = random_batch(Shape{3, 3, 8, 16, 16}, 1);
    const Tensor motion = random_batch(Shape{3, 6, 33, 11}, 2);

    const Tensor ve = model::encode_video(p, {}, video);
    const Tensor me = model::encode_motion(p, {}, motion);
    REQUIRE(ve.shape == Shape{3, 64});
    REQUIRE(me.shape == Shape{3, 64});

    for (std::size_t b = 0; b < 3; ++b) {
        Tensor one_v(Shape{1, 3, 8, 16, 16});
        std::copy(video.data.begin() + b * one_v.size(),
                  video.data.begin() + (b + 1) * one_v.size(), one_v.data.begin());
        CHECK(model::encode_video(p, {}, one_v).data == embedding_row(ve, b).data);

        Tensor one_m(Shape{1, 6, 33, 11});
        std::copy(motion.data.begin() + b * one_m.size(),
                  motion.data.begin() + (b + 1) * one_m.size(), one_m.data.begin());
        CHECK(model::encode_motion(p, {}, one_m).data == embedding_row(me, b).data);
    }

    // Embeddings are left unnormalized; at least one row norm is far from 1.
    bool off_sphere = false;
    for (std::size_t b = 0; b < 3; ++b) {
        double sq = 0.0;
        for (std::size_t j = 0; j < 64; ++j) sq += ve.data[b * 64 + j] * ve.data[b * 64 + j];
        if (std::abs(std::sqrt(sq) - 1.0) > 1e-3) off_sphere = true;
    }
    CHECK(off_sphere);
}

TEST_CASE("encoders reject malformed batches") {
    ParamStore p;
    model::init_video_encoder(p, {}, 3);
    model::init_motion_encoder(p, {}, 3);
    Graph g(&p);
    CHECK_THROWS_AS(model::video_encoder(g, g.input(random_batch(Shape{2, 6, 33, 11}, 4)), {}),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        model::video_encoder(g, g.input(random_batch(Shape{2, 1, 8, 16, 16}, 4)), {}),
        std::invalid_argument);
    CHECK_THROWS_AS(model::motion_encoder(g, g.input(random_batch(Shape{2, 3, 8, 16, 16}, 4)), {}),
                    std::invalid_argument);
}

TEST_CASE("gradients flow through both encoders and the loss") {
    // Shrunken geometry keeps the finite-difference sweep quick, while each
    // branch keeps a few spatial positions after the second convolution so a
    // random initialization cannot relu an embedding down to all zeros.
    model::VideoEncoderConfig vc;
    vc.frames = 5, vc.height = 11, vc.width = 11, vc.c1 = 2, vc.c2 = 3, vc.embed_dim = 4;
    model::MotionEncoderConfig mc;
    mc.bins = 11, mc.frames = 9, mc.c1 = 2, mc.c2 = 3, mc.embed_dim = 4;

    // A random initialization can occasionally relu an embedding row to zero
    // at this scale, where the cosine map is undefined (the library throws),
    // so the sweep takes the first two seeds whose forward pass is defined.
    std::size_t checked = 0;
    for (std::uint64_t seed = 19; checked < 2 && seed < 64; ++seed) {
        ParamStore p;
        model::init_video_encoder(p, vc, seed);
        model::init_motion_encoder(p, mc, seed + 100);
        const Tensor video = random_batch(Shape{2, 3, 5, 11, 11}, seed + 1);
        const Tensor motion = random_batch(Shape{2, 6, 11, 9}, seed + 2);
        const egossl::numerics::GraphFn pipeline = [&](Graph& g) {
            Var ve = model::video_encoder(g, g.input(video), vc);
            Var me = model::motion_encoder(g, g.input(motion), mc);
            return model::contrastive_loss(g, ve, me, 0.5);
        };
        try {
            egossl::numerics::forward_value(pipeline, p);
        } catch (const std::invalid_argument&) {
            continue;
        }
        const double err = egossl::numerics::fd_check(pipeline, p, 1e-5);
        INFO("seed " << seed);
        CHECK(err < 1e-4);
        ++checked;
    }
    REQUIRE(checked == 2);
}
