#pragma once

#include <cstdint>
#include <string>

#include "egossl/graph.hpp"
#include "egossl/param_store.hpp"

namespace egossl::model {

using numerics::Graph;
using numerics::ParamStore;
using numerics::Shape;
using numerics::Tensor;
using numerics::Var;

// Two small convolutional encoders map each modality into a shared embedding
// space: video clips through a pair of strided 3-d convolutions, motion
// spectrograms through a pair of strided 2-d convolutions. Both finish with
// a temporal mean, a flatten, and one affine layer. Embeddings are left
// unnormalized; cosine similarity normalizes where it is computed.

struct VideoEncoderConfig {
    std::size_t in_channels = 3;
    std::size_t frames = 8;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t c1 = 8;
    std::size_t c2 = 16;
    std::size_t embed_dim = 64;
};

struct MotionEncoderConfig {
    std::size_t in_channels = 6;
    std::size_t bins = 33;
    std::size_t frames = 11;
    std::size_t c1 = 8;
    std::size_t c2 = 16;
    std::size_t embed_dim = 64;
};

// Flattened width after the convolutional stack, as consumed by the affine
// head. Throws when the configured input is too small for the kernels.
std::size_t video_flat_dim(const VideoEncoderConfig& cfg);
std::size_t motion_flat_dim(const MotionEncoderConfig& cfg);

// Create parameters under the "video." / "motion." prefixes. Weights draw
// from He-uniform (limit sqrt(6 / fan_in)); biases start at zero. Each
// tensor gets its own seed stream so unrelated additions never shift
// existing draws.
void init_video_encoder(ParamStore& params, const VideoEncoderConfig& cfg, std::uint64_t seed);
void init_motion_encoder(ParamStore& params, const MotionEncoderConfig& cfg, std::uint64_t seed);

// Forward graphs: video [B, C, T, H, W] -> [B, d]; motion [B, C, bins,
// frames] -> [B, d]. Parameters are pulled from the graph's bound store.
Var video_encoder(Graph& g, Var x, const VideoEncoderConfig& cfg);
Var motion_encoder(Graph& g, Var x, const MotionEncoderConfig& cfg);

// Convenience forward pass without gradient bookkeeping.
Tensor encode_video(ParamStore& params, const VideoEncoderConfig& cfg, const Tensor& batch);
Tensor encode_motion(ParamStore& params, const MotionEncoderConfig& cfg, const Tensor& batch);

}  // namespace egossl::model
