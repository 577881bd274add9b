#include "egossl/runner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "egossl/checkpoint.hpp"
#include "egossl/contrastive.hpp"
#include "egossl/eval.hpp"
#include "egossl/graph.hpp"
#include "egossl/optimizer.hpp"

namespace egossl::runner {

using json = nlohmann::json;
using data::Batch;
using data::ClipPair;
using data::Dataset;
using data::SplitIndices;
using numerics::Graph;
using numerics::ParamStore;
using numerics::Shape;
using numerics::Tensor;
using numerics::Var;

namespace {

json empty_metrics(const Config& cfg) {
    return json{{"roc_auc", nullptr},
                {"probe_acc_overall", nullptr},
                {"probe_acc_per_class", nullptr},
                {"attribution", nullptr},
                {"loss_curve", nullptr},
                {"seed", cfg.seed},
                {"config", config::config_to_json(cfg)}};
}

void write_metrics(const std::filesystem::path& out_dir, const json& metrics) {
    std::filesystem::create_directories(out_dir);
    const auto path = out_dir / "metrics.json";
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    os << metrics.dump(2) << '\n';
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

// Refuses to overwrite the last good checkpoint with non-finite parameters.
void save_guarded(const std::filesystem::path& path, const ParamStore& params) {
    for (const auto& name : params.names()) {
        if (!params.tensor(name).all_finite()) throw std::runtime_error("numerical overflow");
    }
    io::save_checkpoint(path, params);
}

struct LoadedData {
    Dataset ds;
    SplitIndices split;
    std::vector<Tensor> spectrograms;  // raw, aligned with ds.pairs
};

LoadedData load_for_training(const Config& cfg, const std::filesystem::path& data_dir) {
    LoadedData ld;
    ld.ds = data::load_dataset(data_dir);
    ld.split =
        data::subject_split(ld.ds.pairs, ld.ds.generator.n_subjects, cfg.train.test_fraction);
    ld.spectrograms = data::compute_spectrograms(ld.ds.pairs, cfg.stft);
    return ld;
}

// Input dimensions follow the dataset; channel widths follow the config.
model::VideoEncoderConfig video_cfg(const Config& cfg, const data::GeneratorConfig& gen) {
    model::VideoEncoderConfig v;
    v.frames = gen.video_frames;
    v.height = gen.video_height;
    v.width = gen.video_width;
    v.c1 = cfg.video_c1;
    v.c2 = cfg.video_c2;
    v.embed_dim = cfg.embed_dim;
    return v;
}

model::MotionEncoderConfig motion_cfg(const Config& cfg, const data::GeneratorConfig& gen) {
    model::MotionEncoderConfig m;
    m.bins = cfg.stft.n_fft / 2 + 1;
    m.frames = signal::frame_count(gen.motion_samples, cfg.stft);
    m.c1 = cfg.motion_c1;
    m.c2 = cfg.motion_c2;
    m.embed_dim = cfg.embed_dim;
    return m;
}

// For commands that start from a checkpoint, the architecture is whatever
// the checkpoint says it is.
model::VideoEncoderConfig video_cfg_from_store(const ParamStore& params, const Config& cfg,
                                               const data::GeneratorConfig& gen) {
    model::VideoEncoderConfig v = video_cfg(cfg, gen);
    v.c1 = params.tensor("video.conv1.w").shape[0];
    v.c2 = params.tensor("video.conv2.w").shape[0];
    v.embed_dim = params.tensor("video.fc.w").shape[1];
    if (model::video_flat_dim(v) != params.tensor("video.fc.w").shape[0]) {
        throw std::runtime_error("checkpoint does not match the dataset's video dimensions");
    }
    return v;
}

model::MotionEncoderConfig motion_cfg_from_store(const ParamStore& params, const Config& cfg,
                                                 const data::GeneratorConfig& gen) {
    model::MotionEncoderConfig m = motion_cfg(cfg, gen);
    m.c1 = params.tensor("motion.conv1.w").shape[0];
    m.c2 = params.tensor("motion.conv2.w").shape[0];
    m.embed_dim = params.tensor("motion.fc.w").shape[1];
    if (model::motion_flat_dim(m) != params.tensor("motion.fc.w").shape[0]) {
        throw std::runtime_error("checkpoint does not match the dataset's motion dimensions");
    }
    return m;
}

signal::NormStats stats_from_store(const ParamStore& params) {
    if (!params.has("motion.norm.mean") || !params.has("motion.norm.std")) {
        throw std::runtime_error("invalid checkpoint: missing normalization statistics");
    }
    return {params.tensor("motion.norm.mean"), params.tensor("motion.norm.std")};
}

std::vector<Tensor> normalize_all(const std::vector<Tensor>& specs,
                                  const signal::NormStats& stats) {
    std::vector<Tensor> out;
    out.reserve(specs.size());
    for (const auto& s : specs) out.push_back(signal::normalize(s, stats));
    return out;
}

signal::NormStats fit_train_stats(const LoadedData& ld) {
    std::vector<Tensor> train_specs;
    train_specs.reserve(ld.split.train.size());
    for (std::size_t i : ld.split.train) train_specs.push_back(ld.spectrograms[i]);
    return signal::fit_normalizer(train_specs);
}

enum class Side { kVideo, kMotion };

Tensor embed_side(ParamStore& params, const model::VideoEncoderConfig& vcfg,
                  const model::MotionEncoderConfig& mcfg, const std::vector<ClipPair>& pairs,
                  const std::vector<Tensor>& specs, const std::vector<std::size_t>& indices,
                  Side side) {
    const std::size_t d = side == Side::kVideo ? vcfg.embed_dim : mcfg.embed_dim;
    Tensor out(Shape{indices.size(), d});
    constexpr std::size_t kChunk = 64;
    for (std::size_t start = 0; start < indices.size(); start += kChunk) {
        const std::size_t stop = std::min(indices.size(), start + kChunk);
        const std::vector<std::size_t> chunk(indices.begin() + start, indices.begin() + stop);
        const Batch batch = data::assemble_batch(pairs, specs, chunk);
        const Tensor emb = side == Side::kVideo ? model::encode_video(params, vcfg, batch.video)
                                                : model::encode_motion(params, mcfg, batch.motion);
        std::copy(emb.data.begin(), emb.data.end(), out.data.begin() + start * d);
    }
    return out;
}

std::vector<std::vector<double>> rows_of(const Tensor& t) {
    const std::size_t n = t.shape[0], d = t.shape[1];
    std::vector<std::vector<double>> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        rows[i].assign(t.data.begin() + i * d, t.data.begin() + (i + 1) * d);
    }
    return rows;
}

std::vector<std::size_t> labels_at(const std::vector<ClipPair>& pairs,
                                   const std::vector<std::size_t>& indices) {
    std::vector<std::size_t> labels;
    labels.reserve(indices.size());
    for (std::size_t i : indices) labels.push_back(pairs[i].label);
    return labels;
}

std::unique_ptr<optim::Optimizer> make_optimizer(const std::string& kind, double lr) {
    if (kind == "sgd") return std::make_unique<optim::Sgd>(lr);
    return std::make_unique<optim::Adam>(lr);
}

Var softmax_ce(Graph& g, Var logits, const std::vector<std::size_t>& labels) {
    Var lse = g.logsumexp_rows(logits);
    Var picked = g.gather_cols(logits, labels);
    return g.mean_all(g.sub(lse, picked));
}

// Softmax class probabilities of an affine head applied to plain embeddings.
std::vector<std::vector<double>> head_probabilities(const Tensor& emb, const Tensor& w,
                                                    const Tensor& b) {
    const std::size_t n = emb.shape[0], d = emb.shape[1], k = w.shape[1];
    std::vector<std::vector<double>> probs(n, std::vector<double>(k));
    for (std::size_t i = 0; i < n; ++i) {
        auto& p = probs[i];
        for (std::size_t c = 0; c < k; ++c) {
            double acc = b.data[c];
            for (std::size_t j = 0; j < d; ++j) acc += emb.data[i * d + j] * w.data[j * k + c];
            p[c] = acc;
        }
        const double mx = *std::max_element(p.begin(), p.end());
        double total = 0.0;
        for (auto& v : p) {
            v = std::exp(v - mx);
            total += v;
        }
        for (auto& v : p) v /= total;
    }
    return probs;
}

std::vector<std::size_t> argmax_rows(const std::vector<std::vector<double>>& probs) {
    std::vector<std::size_t> pred(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        pred[i] = static_cast<std::size_t>(
            std::max_element(probs[i].begin(), probs[i].end()) - probs[i].begin());
    }
    return pred;
}

json attribution_json(const std::vector<eval::AttributionCounts>& counts) {
    json out = json::object();
    for (std::size_t k = 0; k < counts.size(); ++k) {
        out[std::to_string(k)] = {counts[k][0], counts[k][1], counts[k][2], counts[k][3]};
    }
    return out;
}

json per_class_json(const std::vector<double>& acc) {
    json out = json::object();
    for (std::size_t k = 0; k < acc.size(); ++k) out[std::to_string(k)] = acc[k];
    return out;
}

void check_modality(const std::string& modality) {
    if (modality != "video" && modality != "motion" && modality != "ensemble") {
        throw std::invalid_argument("modality must be video, motion, or ensemble");
    }
}

}  // namespace

void run_gen(const Config& cfg, const std::filesystem::path& out_dir) {
    const auto pairs = data::generate_dataset(cfg.generator, cfg.seed);
    data::save_dataset(out_dir, cfg.generator, cfg.seed, pairs);
}

void run_pretrain(const Config& cfg, const std::filesystem::path& data_dir,
                  const std::filesystem::path& out_dir,
                  const std::vector<std::string>& freeze_prefixes) {
    if (cfg.train.batch_size < 2) {
        throw std::invalid_argument("pretraining batch size must be at least 2");
    }
    LoadedData ld = load_for_training(cfg, data_dir);
    const auto vcfg = video_cfg(cfg, ld.ds.generator);
    const auto mcfg = motion_cfg(cfg, ld.ds.generator);
    const auto stats = fit_train_stats(ld);
    const auto norm = normalize_all(ld.spectrograms, stats);

    ParamStore params;
    params.create("meta.seed", Tensor(Shape{1}, {static_cast<double>(cfg.seed)}));
    model::init_video_encoder(params, vcfg, cfg.seed);
    model::init_motion_encoder(params, mcfg, cfg.seed);
    params.create("motion.norm.mean", stats.mean);
    params.create("motion.norm.std", stats.stdev);

    const optim::FreezeMask mask(params, freeze_prefixes);
    auto opt = make_optimizer(cfg.train.optimizer, cfg.train.lr);

    std::filesystem::create_directories(out_dir);
    const auto ckpt = out_dir / "checkpoint.bin";
    save_guarded(ckpt, params);

    // Loss curve entries are measured after each epoch by a forward pass over
    // the train pool in index order, so they depend only on the parameters —
    // a fully frozen run yields a flat curve even though training batches are
    // reshuffled every epoch.
    std::vector<std::vector<std::size_t>> canon;
    for (std::size_t i = 0; i + cfg.train.batch_size <= ld.split.train.size();
         i += cfg.train.batch_size) {
        canon.emplace_back(ld.split.train.begin() + i,
                           ld.split.train.begin() + i + cfg.train.batch_size);
    }
    const auto pool_loss = [&] {
        double total = 0.0;
        for (const auto& bidx : canon) {
            const Batch batch = data::assemble_batch(ld.ds.pairs, norm, bidx);
            total += numerics::forward_value(
                [&](Graph& g) {
                    Var v = model::video_encoder(g, g.input(batch.video), vcfg);
                    Var m = model::motion_encoder(g, g.input(batch.motion), mcfg);
                    return model::contrastive_loss(g, v, m, cfg.train.temperature);
                },
                params);
        }
        return total / static_cast<double>(canon.size());
    };

    std::vector<double> loss_curve;
    for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        const auto batches =
            data::epoch_batches(ld.split.train, cfg.train.batch_size, cfg.seed, epoch);
        for (const auto& bidx : batches) {
            const Batch batch = data::assemble_batch(ld.ds.pairs, norm, bidx);
            numerics::forward_backward(
                [&](Graph& g) {
                    Var v = model::video_encoder(g, g.input(batch.video), vcfg);
                    Var m = model::motion_encoder(g, g.input(batch.motion), mcfg);
                    return model::contrastive_loss(g, v, m, cfg.train.temperature);
                },
                params);
            opt->step(params, mask);
        }
        loss_curve.push_back(pool_loss());
        save_guarded(ckpt, params);
    }

    const Tensor vtest =
        embed_side(params, vcfg, mcfg, ld.ds.pairs, norm, ld.split.test, Side::kVideo);
    const Tensor mtest =
        embed_side(params, vcfg, mcfg, ld.ds.pairs, norm, ld.split.test, Side::kMotion);
    json metrics = empty_metrics(cfg);
    metrics["loss_curve"] = loss_curve;
    metrics["roc_auc"] = eval::correspondence_auc(vtest, mtest, cfg.train.eval_group);
    write_metrics(out_dir, metrics);
}

void run_supervised(const Config& cfg, const std::filesystem::path& data_dir,
                    const std::filesystem::path& out_dir, const std::string& modality,
                    const std::vector<std::string>& freeze_prefixes) {
    check_modality(modality);
    const bool use_video = modality != "motion";
    const bool use_motion = modality != "video";

    LoadedData ld = load_for_training(cfg, data_dir);
    const auto vcfg = video_cfg(cfg, ld.ds.generator);
    const auto mcfg = motion_cfg(cfg, ld.ds.generator);
    const std::size_t classes = ld.ds.generator.classes.size();

    signal::NormStats stats;
    std::vector<Tensor> norm;
    if (use_motion) {
        stats = fit_train_stats(ld);
        norm = normalize_all(ld.spectrograms, stats);
    } else {
        norm = ld.spectrograms;  // assembled but never read by the graph
    }

    ParamStore params;
    params.create("meta.seed", Tensor(Shape{1}, {static_cast<double>(cfg.seed)}));
    if (use_video) {
        model::init_video_encoder(params, vcfg, cfg.seed);
        params.create("sup.video.w", Tensor::zeros(Shape{vcfg.embed_dim, classes}));
        params.create("sup.video.b", Tensor::zeros(Shape{classes}));
    }
    if (use_motion) {
        model::init_motion_encoder(params, mcfg, cfg.seed);
        params.create("sup.motion.w", Tensor::zeros(Shape{mcfg.embed_dim, classes}));
        params.create("sup.motion.b", Tensor::zeros(Shape{classes}));
        params.create("motion.norm.mean", stats.mean);
        params.create("motion.norm.std", stats.stdev);
    }

    const optim::FreezeMask mask(params, freeze_prefixes);
    auto opt = make_optimizer(cfg.train.optimizer, cfg.supervised.lr);

    std::filesystem::create_directories(out_dir);
    const auto ckpt = out_dir / "checkpoint.bin";
    save_guarded(ckpt, params);

    std::vector<double> loss_curve;
    for (std::size_t epoch = 0; epoch < cfg.supervised.epochs; ++epoch) {
        const auto batches =
            data::epoch_batches(ld.split.train, cfg.supervised.batch_size, cfg.seed, epoch);
        double total = 0.0;
        for (const auto& bidx : batches) {
            const Batch batch = data::assemble_batch(ld.ds.pairs, norm, bidx);
            const double loss = numerics::forward_backward(
                [&](Graph& g) {
                    std::vector<Var> losses;
                    if (use_video) {
                        Var emb = model::video_encoder(g, g.input(batch.video), vcfg);
                        Var logits = g.add_rowvec(g.matmul(emb, g.param("sup.video.w")),
                                                  g.param("sup.video.b"));
                        losses.push_back(softmax_ce(g, logits, batch.labels));
                    }
                    if (use_motion) {
                        Var emb = model::motion_encoder(g, g.input(batch.motion), mcfg);
                        Var logits = g.add_rowvec(g.matmul(emb, g.param("sup.motion.w")),
                                                  g.param("sup.motion.b"));
                        losses.push_back(softmax_ce(g, logits, batch.labels));
                    }
                    // The branches share no parameters, so a plain sum gives each
                    // branch the same gradients it would get trained alone; the
                    // ensemble run's classifiers match the single-modality runs.
                    Var loss = losses.front();
                    for (std::size_t i = 1; i < losses.size(); ++i) loss = g.add(loss, losses[i]);
                    return loss;
                },
                params);
            opt->step(params, mask);
            total += loss;
        }
        loss_curve.push_back(total / static_cast<double>(batches.size()));
        save_guarded(ckpt, params);
    }

    const auto test_labels = labels_at(ld.ds.pairs, ld.split.test);
    std::vector<std::vector<double>> probs_v, probs_m;
    if (use_video) {
        const Tensor emb =
            embed_side(params, vcfg, mcfg, ld.ds.pairs, norm, ld.split.test, Side::kVideo);
        probs_v = head_probabilities(emb, params.tensor("sup.video.w"),
                                     params.tensor("sup.video.b"));
    }
    if (use_motion) {
        const Tensor emb =
            embed_side(params, vcfg, mcfg, ld.ds.pairs, norm, ld.split.test, Side::kMotion);
        probs_m = head_probabilities(emb, params.tensor("sup.motion.w"),
                                     params.tensor("sup.motion.b"));
    }

    json metrics = empty_metrics(cfg);
    metrics["loss_curve"] = loss_curve;
    std::vector<std::size_t> pred;
    if (modality == "video") {
        pred = argmax_rows(probs_v);
    } else if (modality == "motion") {
        pred = argmax_rows(probs_m);
    } else {
        pred = eval::ensemble_predictions(probs_v, probs_m);
        metrics["attribution"] = attribution_json(eval::attribute_modalities(
            argmax_rows(probs_v), argmax_rows(probs_m), test_labels, classes));
    }
    metrics["probe_acc_overall"] = eval::accuracy(pred, test_labels);
    metrics["probe_acc_per_class"] = per_class_json(eval::per_class_accuracy(pred, test_labels, classes));
    write_metrics(out_dir, metrics);
}

void run_probe(const Config& cfg, const std::filesystem::path& data_dir,
               const std::filesystem::path& checkpoint_path,
               const std::filesystem::path& out_dir, const std::string& modality) {
    check_modality(modality);
    const bool use_video = modality != "motion";
    const bool use_motion = modality != "video";

    LoadedData ld = load_for_training(cfg, data_dir);
    ParamStore params = io::load_checkpoint(checkpoint_path);
    const std::size_t classes = ld.ds.generator.classes.size();
    const auto train_labels = labels_at(ld.ds.pairs, ld.split.train);
    const auto test_labels = labels_at(ld.ds.pairs, ld.split.test);

    const eval::ProbeOptions popts{cfg.probe.lr, cfg.probe.epochs, cfg.probe.l2};
    ParamStore probe_params;
    probe_params.create("meta.seed", Tensor(Shape{1}, {static_cast<double>(cfg.seed)}));

    auto save_probe = [&](const char* prefix, const eval::ProbeModel& m) {
        const std::string p(prefix);
        probe_params.create(p + ".w", m.weights);
        probe_params.create(p + ".b", m.bias);
        probe_params.create(p + ".mean", m.feat_mean);
        probe_params.create(p + ".std", m.feat_std);
    };

    std::vector<std::vector<double>> probs_v, probs_m;
    std::vector<std::size_t> pred_v, pred_m;
    if (use_video) {
        const auto vcfg = video_cfg_from_store(params, cfg, ld.ds.generator);
        const auto mcfg = motion_cfg(cfg, ld.ds.generator);  // unused by the video side
        const Tensor train_emb = embed_side(params, vcfg, mcfg, ld.ds.pairs, ld.spectrograms,
                                            ld.split.train, Side::kVideo);
        const Tensor test_emb = embed_side(params, vcfg, mcfg, ld.ds.pairs, ld.spectrograms,
                                           ld.split.test, Side::kVideo);
        const auto probe = eval::train_probe(rows_of(train_emb), train_labels, classes, popts);
        const auto test_rows = rows_of(test_emb);
        probs_v.reserve(test_rows.size());
        for (const auto& row : test_rows) probs_v.push_back(eval::probe_probabilities(probe, row));
        pred_v = argmax_rows(probs_v);
        save_probe("probe.video", probe);
    }
    if (use_motion) {
        const auto mcfg = motion_cfg_from_store(params, cfg, ld.ds.generator);
        const auto vcfg = video_cfg(cfg, ld.ds.generator);  // unused by the motion side
        const auto norm = normalize_all(ld.spectrograms, stats_from_store(params));
        const Tensor train_emb =
            embed_side(params, vcfg, mcfg, ld.ds.pairs, norm, ld.split.train, Side::kMotion);
        const Tensor test_emb =
            embed_side(params, vcfg, mcfg, ld.ds.pairs, norm, ld.split.test, Side::kMotion);
        const auto probe = eval::train_probe(rows_of(train_emb), train_labels, classes, popts);
        const auto test_rows = rows_of(test_emb);
        probs_m.reserve(test_rows.size());
        for (const auto& row : test_rows) probs_m.push_back(eval::probe_probabilities(probe, row));
        pred_m = argmax_rows(probs_m);
        save_probe("probe.motion", probe);
    }

    json metrics = empty_metrics(cfg);
    std::vector<std::size_t> pred;
    if (modality == "video") {
        pred = pred_v;
    } else if (modality == "motion") {
        pred = pred_m;
    } else {
        pred = eval::ensemble_predictions(probs_v, probs_m);
        metrics["attribution"] =
            attribution_json(eval::attribute_modalities(pred_v, pred_m, test_labels, classes));
    }
    metrics["probe_acc_overall"] = eval::accuracy(pred, test_labels);
    metrics["probe_acc_per_class"] = per_class_json(eval::per_class_accuracy(pred, test_labels, classes));
    std::filesystem::create_directories(out_dir);
    io::save_checkpoint(out_dir / "probe.bin", probe_params);
    write_metrics(out_dir, metrics);
}

void run_eval(const Config& cfg, const std::filesystem::path& data_dir,
              const std::filesystem::path& checkpoint_path,
              const std::filesystem::path& out_dir) {
    LoadedData ld = load_for_training(cfg, data_dir);
    ParamStore params = io::load_checkpoint(checkpoint_path);
    const auto vcfg = video_cfg_from_store(params, cfg, ld.ds.generator);
    const auto mcfg = motion_cfg_from_store(params, cfg, ld.ds.generator);
    const auto norm = normalize_all(ld.spectrograms, stats_from_store(params));

    const Tensor vtest =
        embed_side(params, vcfg, mcfg, ld.ds.pairs, norm, ld.split.test, Side::kVideo);
    const Tensor mtest =
        embed_side(params, vcfg, mcfg, ld.ds.pairs, norm, ld.split.test, Side::kMotion);

    json metrics = empty_metrics(cfg);
    metrics["roc_auc"] = eval::correspondence_auc(vtest, mtest, cfg.train.eval_group);
    write_metrics(out_dir, metrics);
}

}  // namespace egossl::runner
