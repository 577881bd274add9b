#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "egossl/data.hpp"
#include "egossl/encoders.hpp"
#include "egossl/signal.hpp"

namespace egossl::config {

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t epochs = 30;
    double lr = 1e-3;
    double temperature = 0.5;
    double test_fraction = 0.25;
    std::size_t eval_group = 32;  // pairs per correspondence scoring group
    std::string optimizer = "adam";
};

struct ProbeConfig {
    double lr = 0.1;
    std::size_t epochs = 500;
    double l2 = 1e-4;
};

struct SupervisedConfig {
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    double lr = 1e-3;
};

struct Config {
    std::uint64_t seed = 0;
    bool deterministic = true;
    data::GeneratorConfig generator = data::default_generator();
    signal::StftConfig stft;
    std::size_t embed_dim = 64;
    std::size_t video_c1 = 8;
    std::size_t video_c2 = 16;
    std::size_t motion_c1 = 8;
    std::size_t motion_c2 = 16;
    TrainConfig train;
    ProbeConfig probe;
    SupervisedConfig supervised;

    // Encoder input dimensions always follow the generator and STFT
    // settings, so the two cannot drift apart.
    model::VideoEncoderConfig video_encoder() const;
    model::MotionEncoderConfig motion_encoder() const;
};

Config config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const Config& cfg);

// Parses a JSON config file; missing keys keep their defaults.
nlohmann::json load_config_file(const std::filesystem::path& path);

// Applies one "dotted.path=value" assignment onto a JSON document. Values
// parse as JSON when possible and fall back to plain strings.
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace egossl::config
