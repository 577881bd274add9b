#include "egossl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "egossl/contrastive.hpp"

namespace egossl::eval {

double roc_auc(const std::vector<double>& positives, const std::vector<double>& negatives) {
    if (positives.empty() || negatives.empty()) throw std::invalid_argument("undefined AUC");
    for (double v : positives) {
        if (!std::isfinite(v)) throw std::invalid_argument("invalid similarities");
    }
    for (double v : negatives) {
        if (!std::isfinite(v)) throw std::invalid_argument("invalid similarities");
    }

    // Pool the scores, assign midranks to ties, and sum the positive ranks.
    struct Scored {
        double score;
        bool positive;
    };
    std::vector<Scored> pool;
    pool.reserve(positives.size() + negatives.size());
    for (double v : positives) pool.push_back({v, true});
    for (double v : negatives) pool.push_back({v, false});
    std::sort(pool.begin(), pool.end(),
              [](const Scored& a, const Scored& b) { return a.score < b.score; });

    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < pool.size()) {
        std::size_t j = i;
        while (j < pool.size() && pool[j].score == pool[i].score) ++j;
        // ranks are 1-based; a tie block spanning ranks i+1..j shares the mean
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (pool[k].positive) rank_sum += midrank;
        }
        i = j;
    }

    const double np = static_cast<double>(positives.size());
    const double nn = static_cast<double>(negatives.size());
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double correspondence_auc(const Tensor& video_emb, const Tensor& motion_emb, std::size_t group) {
    if (video_emb.rank() != 2 || !video_emb.same_shape(motion_emb)) {
        throw std::invalid_argument("input shape mismatch");
    }
    if (group < 2) throw std::invalid_argument("undefined AUC");
    const std::size_t n = video_emb.shape[0];
    if (n < 2) throw std::invalid_argument("undefined AUC");
    const std::size_t d = video_emb.shape[1];
    std::vector<double> positives, negatives;
    for (std::size_t start = 0; start < n; start += group) {
        std::size_t stop = std::min(n, start + group);
        // A trailing singleton would have a positive but nothing to mismatch
        // against; stretch the final group instead.
        if (n - stop == 1) stop = n;
        const std::size_t g = stop - start;
        Tensor v(numerics::Shape{g, d});
        Tensor m(numerics::Shape{g, d});
        std::copy(video_emb.data.begin() + start * d, video_emb.data.begin() + stop * d,
                  v.data.begin());
        std::copy(motion_emb.data.begin() + start * d, motion_emb.data.begin() + stop * d,
                  m.data.begin());
        const Tensor sims = model::cosine_similarity(v, m);
        if (!sims.all_finite()) throw std::invalid_argument("invalid similarities");
        auto scores = model::correspondence_scores(sims);
        positives.insert(positives.end(), scores.first.begin(), scores.first.end());
        negatives.insert(negatives.end(), scores.second.begin(), scores.second.end());
        if (stop == n) break;
    }
    return roc_auc(positives, negatives);
}

namespace {

void standardize_row(const ProbeModel& model, const std::vector<double>& x,
                     std::vector<double>& out) {
    const std::size_t d = model.feat_mean.size();
    if (x.size() != d) throw std::invalid_argument("probe/embedding mismatch");
    out.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        out[j] = (x[j] - model.feat_mean.data[j]) / model.feat_std.data[j];
    }
}

std::vector<double> softmax(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        p[k] = std::exp(logits[k] - mx);
        total += p[k];
    }
    for (auto& v : p) v /= total;
    return p;
}

}  // namespace

ProbeModel train_probe(const std::vector<std::vector<double>>& features,
                       const std::vector<std::size_t>& labels, std::size_t classes,
                       const ProbeOptions& opts) {
    if (features.empty()) throw std::invalid_argument("no data");
    if (features.size() != labels.size()) throw std::invalid_argument("misaligned predictions");
    if (classes < 2) throw std::invalid_argument("degenerate probe task");
    const std::size_t n = features.size();
    const std::size_t d = features.front().size();
    std::vector<bool> seen(classes, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (features[i].size() != d) throw std::invalid_argument("probe/embedding mismatch");
        if (labels[i] >= classes) throw std::invalid_argument("degenerate probe task");
        seen[labels[i]] = true;
    }
    if (std::count(seen.begin(), seen.end(), true) < 2) {
        throw std::invalid_argument("degenerate probe task");
    }

    ProbeModel model;
    model.classes = classes;
    model.feat_mean = Tensor::zeros(numerics::Shape{d});
    model.feat_std = Tensor::zeros(numerics::Shape{d});
    for (const auto& row : features) {
        for (std::size_t j = 0; j < d; ++j) model.feat_mean.data[j] += row[j];
    }
    for (auto& v : model.feat_mean.data) v /= static_cast<double>(n);
    for (const auto& row : features) {
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = row[j] - model.feat_mean.data[j];
            model.feat_std.data[j] += diff * diff;
        }
    }
    for (auto& v : model.feat_std.data) {
        v = std::max(std::sqrt(v / static_cast<double>(n)), 1e-8);
    }

    std::vector<std::vector<double>> X(n);
    for (std::size_t i = 0; i < n; ++i) standardize_row(model, features[i], X[i]);

    model.weights = Tensor::zeros(numerics::Shape{d, classes});
    model.bias = Tensor::zeros(numerics::Shape{classes});
    std::vector<double> logits(classes);
    Tensor gw(numerics::Shape{d, classes});
    Tensor gb(numerics::Shape{classes});
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        std::fill(gw.data.begin(), gw.data.end(), 0.0);
        std::fill(gb.data.begin(), gb.data.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < classes; ++k) {
                double acc = model.bias.data[k];
                for (std::size_t j = 0; j < d; ++j) {
                    acc += X[i][j] * model.weights.data[j * classes + k];
                }
                logits[k] = acc;
            }
            const auto p = softmax(logits);
            for (std::size_t k = 0; k < classes; ++k) {
                const double delta = (p[k] - (labels[i] == k ? 1.0 : 0.0)) * inv_n;
                gb.data[k] += delta;
                for (std::size_t j = 0; j < d; ++j) {
                    gw.data[j * classes + k] += delta * X[i][j];
                }
            }
        }
        for (std::size_t jk = 0; jk < gw.size(); ++jk) {
            model.weights.data[jk] -=
                opts.lr * (gw.data[jk] + opts.l2 * model.weights.data[jk]);
        }
        for (std::size_t k = 0; k < classes; ++k) model.bias.data[k] -= opts.lr * gb.data[k];
    }
    return model;
}

std::vector<double> probe_probabilities(const ProbeModel& model, const std::vector<double>& x) {
    std::vector<double> z;
    standardize_row(model, x, z);
    std::vector<double> logits(model.classes);
    const std::size_t d = z.size();
    for (std::size_t k = 0; k < model.classes; ++k) {
        double acc = model.bias.data[k];
        for (std::size_t j = 0; j < d; ++j) acc += z[j] * model.weights.data[j * model.classes + k];
        logits[k] = acc;
    }
    return softmax(logits);
}

std::vector<std::size_t> probe_predictions(const ProbeModel& model,
                                           const std::vector<std::vector<double>>& features) {
    std::vector<std::size_t> pred(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto p = probe_probabilities(model, features[i]);
        pred[i] = static_cast<std::size_t>(
            std::max_element(p.begin(), p.end()) - p.begin());
    }
    return pred;
}

double accuracy(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& labels) {
    if (predicted.size() != labels.size()) throw std::invalid_argument("misaligned predictions");
    if (predicted.empty()) throw std::invalid_argument("no data");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

std::vector<double> per_class_accuracy(const std::vector<std::size_t>& predicted,
                                       const std::vector<std::size_t>& labels,
                                       std::size_t classes) {
    if (predicted.size() != labels.size()) throw std::invalid_argument("misaligned predictions");
    std::vector<std::size_t> hits(classes, 0), totals(classes, 0);
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (labels[i] >= classes) throw std::invalid_argument("misaligned predictions");
        ++totals[labels[i]];
        if (predicted[i] == labels[i]) ++hits[labels[i]];
    }
    std::vector<double> acc(classes, 0.0);
    for (std::size_t k = 0; k < classes; ++k) {
        acc[k] = totals[k] == 0 ? 0.0
                                : static_cast<double>(hits[k]) / static_cast<double>(totals[k]);
    }
    return acc;
}

std::vector<std::size_t> ensemble_predictions(const std::vector<std::vector<double>>& probs_a,
                                              const std::vector<std::vector<double>>& probs_b) {
    if (probs_a.size() != probs_b.size()) throw std::invalid_argument("misaligned predictions");
    if (probs_a.empty()) throw std::invalid_argument("no data");
    auto check_row = [](const std::vector<double>& p) {
        double total = 0.0;
        for (double v : p) {
            if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("not a probability vector");
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-6) throw std::invalid_argument("not a probability vector");
    };
    std::vector<std::size_t> pred(probs_a.size());
    for (std::size_t i = 0; i < probs_a.size(); ++i) {
        if (probs_a[i].size() != probs_b[i].size()) {
            throw std::invalid_argument("misaligned predictions");
        }
        check_row(probs_a[i]);
        check_row(probs_b[i]);
        std::size_t best = 0;
        double best_p = -1.0;
        for (std::size_t k = 0; k < probs_a[i].size(); ++k) {
            const double p = 0.5 * (probs_a[i][k] + probs_b[i][k]);
            if (p > best_p) {
                best_p = p;
                best = k;
            }
        }
        pred[i] = best;
    }
    return pred;
}

std::vector<AttributionCounts> attribute_modalities(const std::vector<std::size_t>& video_pred,
                                                    const std::vector<std::size_t>& motion_pred,
                                                    const std::vector<std::size_t>& labels,
                                                    std::size_t classes) {
    if (video_pred.size() != labels.size() || motion_pred.size() != labels.size()) {
        throw std::invalid_argument("misaligned predictions");
    }
    std::vector<AttributionCounts> counts(classes, AttributionCounts{0, 0, 0, 0});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes) throw std::invalid_argument("misaligned predictions");
        const bool v = video_pred[i] == labels[i];
        const bool m = motion_pred[i] == labels[i];
        std::size_t bucket;
        if (v && !m) {
            bucket = 0;  // video only
        } else if (!v && m) {
            bucket = 1;  // motion only
        } else if (v && m) {
            bucket = 2;  // both
        } else {
            bucket = 3;  // neither
        }
        ++counts[labels[i]][bucket];
    }
    return counts;
}

}  // namespace egossl::eval
