// End-to-end training runs on a miniature dataset: reproducibility, loss
// descent, freeze semantics, and the artifact contract of each command.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "egossl/checkpoint.hpp"
#include "egossl/runner.hpp"

namespace fs = std::filesystem;
using egossl::config::Config;
using json = nlohmann::json;

namespace {

Config tiny_config() {
    Config cfg;
    cfg.seed = 42;
    cfg.generator.n_pairs = 96;
    cfg.generator.n_subjects = 6;
    cfg.train.batch_size = 16;
    cfg.train.epochs = 3;
    cfg.train.eval_group = 8;
    cfg.supervised.batch_size = 16;
    cfg.supervised.epochs = 2;
    cfg.probe.epochs = 120;
    return cfg;
}

fs::path scratch_root() {
    static const fs::path root = [] {
        const fs::path dir = fs::temp_directory_path() / "egossl_training_test";
        fs::remove_all(dir);
        fs::create_directories(dir);
        return dir;
    }();
    return root;
}

// One shared dataset for every case in this suite.
fs::path dataset_dir() {
    static const fs::path dir = [] {
        const fs::path d = scratch_root() / "data";
        egossl::runner::run_gen(tiny_config(), d);
        return d;
    }();
    return dir;
}

fs::path out_dir(const char* tag) {
    const fs::path dir = scratch_root() / tag;
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

json metrics_of(const fs::path& dir) { return json::parse(slurp(dir / "metrics.json")); }

}  // namespace

TEST_CASE("pretraining twice with one seed is byte-identical") {
    const auto a = out_dir("pretrain_a");
    const auto b = out_dir("pretrain_b");
    egossl::runner::run_pretrain(tiny_config(), dataset_dir(), a, {});
    egossl::runner::run_pretrain(tiny_config(), dataset_dir(), b, {});
    CHECK(slurp(a / "checkpoint.bin") == slurp(b / "checkpoint.bin"));
    CHECK(slurp(a / "metrics.json") == slurp(b / "metrics.json"));

    const json m = metrics_of(a);
    const auto curve = m.at("loss_curve").get<std::vector<double>>();
    REQUIRE(curve.size() == 3);
    CHECK(curve.back() < curve.front());  // training actually reduces the loss
    const double auc = m.at("roc_auc").get<double>();
    CHECK(auc >= 0.0);
    CHECK(auc <= 1.0);
    CHECK(m.at("seed") == 42);
}

TEST_CASE("evaluating the written checkpoint reproduces the reported score") {
    const auto pre = out_dir("pretrain_eval");
    egossl::runner::run_pretrain(tiny_config(), dataset_dir(), pre, {});
    const auto ev = out_dir("eval");
    egossl::runner::run_eval(tiny_config(), dataset_dir(), pre / "checkpoint.bin", ev);
    CHECK(metrics_of(ev).at("roc_auc").get<double>() ==
          doctest::Approx(metrics_of(pre).at("roc_auc").get<double>()).epsilon(1e-12));
}

TEST_CASE("freezing everything leaves the loss curve flat") {
    const auto dir = out_dir("frozen_all");
    egossl::runner::run_pretrain(tiny_config(), dataset_dir(), dir, {"video.", "motion."});
    const auto curve = metrics_of(dir).at("loss_curve").get<std::vector<double>>();
    REQUIRE(curve.size() == 3);
    for (double v : curve) CHECK(std::abs(v - curve.front()) <= 1e-9);
}

TEST_CASE("freezing one encoder trains only the other") {
    const auto frozen_all = out_dir("freeze_ref");
    const auto frozen_video = out_dir("freeze_video");
    egossl::runner::run_pretrain(tiny_config(), dataset_dir(), frozen_all, {"video.", "motion."});
    egossl::runner::run_pretrain(tiny_config(), dataset_dir(), frozen_video, {"video."});

    const auto ref = egossl::io::load_checkpoint(frozen_all / "checkpoint.bin");
    const auto got = egossl::io::load_checkpoint(frozen_video / "checkpoint.bin");
    // The frozen-everything checkpoint holds the untouched initialization, so
    // the video-frozen run must match it on the video side exactly ...
    CHECK(got.tensor("video.conv1.w").data == ref.tensor("video.conv1.w").data);
    CHECK(got.tensor("video.fc.w").data == ref.tensor("video.fc.w").data);
    // ... and differ on the side that kept training.
    CHECK(got.tensor("motion.fc.w").data != ref.tensor("motion.fc.w").data);
}

TEST_CASE("an unknown freeze prefix and an undersized batch are rejected") {
    CHECK_THROWS_WITH_AS(
        egossl::runner::run_pretrain(tiny_config(), dataset_dir(), out_dir("bad_freeze"),
                                     {"audio."}),
        "no such parameter group: audio.", std::invalid_argument);

    Config cfg = tiny_config();
    cfg.train.batch_size = 1;
    CHECK_THROWS_WITH_AS(
        egossl::runner::run_pretrain(cfg, dataset_dir(), out_dir("bad_batch"), {}),
        "pretraining batch size must be at least 2", std::invalid_argument);
}

TEST_CASE("a zero-epoch run still writes the initial checkpoint and its score") {
    Config cfg = tiny_config();
    cfg.train.epochs = 0;
    const auto dir = out_dir("zero_epochs");
    egossl::runner::run_pretrain(cfg, dataset_dir(), dir, {});
    CHECK(fs::exists(dir / "checkpoint.bin"));
    const json m = metrics_of(dir);
    CHECK(m.at("loss_curve").is_array());
    CHECK(m.at("loss_curve").empty());
    const double auc = m.at("roc_auc").get<double>();
    CHECK(auc >= 0.0);
    CHECK(auc <= 1.0);
}

TEST_CASE("the ensemble's branches train exactly like the single-modality runs") {
    const auto video_dir = out_dir("sup_video");
    const auto motion_dir = out_dir("sup_motion");
    const auto both_dir = out_dir("sup_ensemble");
    egossl::runner::run_supervised(tiny_config(), dataset_dir(), video_dir, "video", {});
    egossl::runner::run_supervised(tiny_config(), dataset_dir(), motion_dir, "motion", {});
    egossl::runner::run_supervised(tiny_config(), dataset_dir(), both_dir, "ensemble", {});

    // The summed objective shares no parameters across branches, so each
    // branch of the joint run must land exactly where its solo run landed.
    const auto solo_v = egossl::io::load_checkpoint(video_dir / "checkpoint.bin");
    const auto solo_m = egossl::io::load_checkpoint(motion_dir / "checkpoint.bin");
    const auto both = egossl::io::load_checkpoint(both_dir / "checkpoint.bin");
    for (const char* name : {"video.conv1.w", "video.fc.w", "sup.video.w", "sup.video.b"}) {
        CHECK(both.tensor(name).data == solo_v.tensor(name).data);
    }
    for (const char* name : {"motion.conv1.w", "motion.fc.w", "sup.motion.w", "sup.motion.b"}) {
        CHECK(both.tensor(name).data == solo_m.tensor(name).data);
    }

    const json m = metrics_of(both_dir);
    const double acc = m.at("probe_acc_overall").get<double>();
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
    REQUIRE(m.at("probe_acc_per_class").is_object());
    CHECK(m.at("probe_acc_per_class").size() == 4);

    // Attribution buckets partition the held-out set: 2 of 6 subjects.
    REQUIRE(m.at("attribution").is_object());
    std::size_t total = 0;
    for (const auto& [cls, buckets] : m.at("attribution").items()) {
        REQUIRE(buckets.size() == 4);
        for (const auto& b : buckets) total += b.get<std::size_t>();
    }
    CHECK(total == 32);

    // Single-modality runs report no attribution.
    CHECK(metrics_of(video_dir).at("attribution").is_null());
}

TEST_CASE("probing a checkpoint writes probe artifacts and accuracies") {
    const auto pre = out_dir("pretrain_probe");
    egossl::runner::run_pretrain(tiny_config(), dataset_dir(), pre, {});

    const auto pv = out_dir("probe_video");
    egossl::runner::run_probe(tiny_config(), dataset_dir(), pre / "checkpoint.bin", pv, "video");
    CHECK(fs::exists(pv / "probe.bin"));
    const json mv = metrics_of(pv);
    CHECK(mv.at("probe_acc_overall").get<double>() >= 0.0);
    CHECK(mv.at("probe_acc_overall").get<double>() <= 1.0);
    CHECK(mv.at("attribution").is_null());
    CHECK(mv.at("roc_auc").is_null());

    const auto pe = out_dir("probe_ensemble");
    egossl::runner::run_probe(tiny_config(), dataset_dir(), pre / "checkpoint.bin", pe,
                              "ensemble");
    const json me = metrics_of(pe);
    REQUIRE(me.at("attribution").is_object());
    std::size_t total = 0;
    for (const auto& [cls, buckets] : me.at("attribution").items()) {
        for (const auto& b : buckets) total += b.get<std::size_t>();
    }
    CHECK(total == 32);

    // Probes are deterministic: a second identical run writes identical bytes.
    const auto pv2 = out_dir("probe_video2");
    egossl::runner::run_probe(tiny_config(), dataset_dir(), pre / "checkpoint.bin", pv2, "video");
    CHECK(slurp(pv / "probe.bin") == slurp(pv2 / "probe.bin"));
    CHECK(slurp(pv / "metrics.json") == slurp(pv2 / "metrics.json"));

    CHECK_THROWS_AS(egossl::runner::run_probe(tiny_config(), dataset_dir(),
                                              pre / "checkpoint.bin", out_dir("probe_bad"),
                                              "audio"),
                    std::invalid_argument);
}
