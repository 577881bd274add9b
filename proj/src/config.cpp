#include "egossl/config.hpp"

#include <fstream>
#include <stdexcept>

namespace egossl::config {

using nlohmann::json;

model::VideoEncoderConfig Config::video_encoder() const {
    model::VideoEncoderConfig cfg;
    cfg.frames = generator.video_frames;
    cfg.height = generator.video_height;
    cfg.width = generator.video_width;
    cfg.c1 = video_c1;
    cfg.c2 = video_c2;
    cfg.embed_dim = embed_dim;
    return cfg;
}

model::MotionEncoderConfig Config::motion_encoder() const {
    model::MotionEncoderConfig cfg;
    cfg.bins = stft.n_fft / 2 + 1;
    cfg.frames = signal::frame_count(generator.motion_samples, stft);
    cfg.c1 = motion_c1;
    cfg.c2 = motion_c2;
    cfg.embed_dim = embed_dim;
    return cfg;
}

Config config_from_json(const json& j) {
    Config cfg;
    cfg.seed = j.value("seed", cfg.seed);
    cfg.deterministic = j.value("deterministic", cfg.deterministic);
    if (j.contains("generator")) cfg.generator = j.at("generator").get<data::GeneratorConfig>();
    if (j.contains("stft")) {
        const auto& s = j.at("stft");
        cfg.stft.n_fft = s.value("n_fft", cfg.stft.n_fft);
        cfg.stft.hop = s.value("hop", cfg.stft.hop);
        cfg.stft.log_eps = s.value("log_eps", cfg.stft.log_eps);
    }
    if (j.contains("encoder")) {
        const auto& e = j.at("encoder");
        cfg.embed_dim = e.value("embed_dim", cfg.embed_dim);
        if (e.contains("video")) {
            cfg.video_c1 = e.at("video").value("c1", cfg.video_c1);
            cfg.video_c2 = e.at("video").value("c2", cfg.video_c2);
        }
        if (e.contains("motion")) {
            cfg.motion_c1 = e.at("motion").value("c1", cfg.motion_c1);
            cfg.motion_c2 = e.at("motion").value("c2", cfg.motion_c2);
        }
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
        cfg.train.epochs = t.value("epochs", cfg.train.epochs);
        cfg.train.lr = t.value("lr", cfg.train.lr);
        cfg.train.temperature = t.value("temperature", cfg.train.temperature);
        cfg.train.test_fraction = t.value("test_fraction", cfg.train.test_fraction);
        cfg.train.eval_group = t.value("eval_group", cfg.train.eval_group);
        cfg.train.optimizer = t.value("optimizer", cfg.train.optimizer);
    }
    if (j.contains("probe")) {
        const auto& p = j.at("probe");
        cfg.probe.lr = p.value("lr", cfg.probe.lr);
        cfg.probe.epochs = p.value("epochs", cfg.probe.epochs);
        cfg.probe.l2 = p.value("l2", cfg.probe.l2);
    }
    if (j.contains("supervised")) {
        const auto& s = j.at("supervised");
        cfg.supervised.batch_size = s.value("batch_size", cfg.supervised.batch_size);
        cfg.supervised.epochs = s.value("epochs", cfg.supervised.epochs);
        cfg.supervised.lr = s.value("lr", cfg.supervised.lr);
    }
    if (cfg.train.optimizer != "adam" && cfg.train.optimizer != "sgd") {
        throw std::invalid_argument("train.optimizer must be \"adam\" or \"sgd\"");
    }
    return cfg;
}

json config_to_json(const Config& cfg) {
    return json{
        {"seed", cfg.seed},
        {"deterministic", cfg.deterministic},
        {"generator", cfg.generator},
        {"stft",
         {{"n_fft", cfg.stft.n_fft}, {"hop", cfg.stft.hop}, {"log_eps", cfg.stft.log_eps}}},
        {"encoder",
         {{"embed_dim", cfg.embed_dim},
          {"video", {{"c1", cfg.video_c1}, {"c2", cfg.video_c2}}},
          {"motion", {{"c1", cfg.motion_c1}, {"c2", cfg.motion_c2}}}}},
        {"train",
         {{"batch_size", cfg.train.batch_size},
          {"epochs", cfg.train.epochs},
          {"lr", cfg.train.lr},
          {"temperature", cfg.train.temperature},
          {"test_fraction", cfg.train.test_fraction},
          {"eval_group", cfg.train.eval_group},
          {"optimizer", cfg.train.optimizer}}},
        {"probe", {{"lr", cfg.probe.lr}, {"epochs", cfg.probe.epochs}, {"l2", cfg.probe.l2}}},
        {"supervised",
         {{"batch_size", cfg.supervised.batch_size},
          {"epochs", cfg.supervised.epochs},
          {"lr", cfg.supervised.lr}}},
    };
}

json load_config_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path.string());
    json j;
    try {
        is >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config parse error in " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw std::runtime_error("config must be a JSON object: " + path.string());
    return j;
}

void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw std::invalid_argument("--set expects dotted.path=value, got: " + assignment);
    }
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw std::invalid_argument("--set has an empty path segment: " + assignment);
        if (dot == std::string::npos) {
            json value = json::parse(raw, nullptr, false);
            (*node)[key] = value.is_discarded() ? json(raw) : value;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

}  // namespace egossl::config
