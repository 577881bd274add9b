#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "egossl/tensor.hpp"

namespace egossl::eval {

using numerics::Tensor;

// Area under the ROC curve via the Mann-Whitney statistic with midranks for
// ties. Equals exhaustive pair counting (ties scored one half) exactly.
double roc_auc(const std::vector<double>& positives, const std::vector<double>& negatives);

// Cross-modal correspondence score over paired embedding batches [N, d].
// Rows are chunked into scoring groups of size `group`; within a group the
// matched cosine similarity is a positive and every mismatched one is a
// negative.
double correspondence_auc(const Tensor& video_emb, const Tensor& motion_emb, std::size_t group);

// Multinomial logistic regression on fixed features: standardized inputs,
// zero-initialized weights, full-batch gradient descent, L2 on the weights
// only. Deterministic for a given dataset.
struct ProbeOptions {
    double lr = 0.1;
    std::size_t epochs = 500;
    double l2 = 1e-4;
};

struct ProbeModel {
    Tensor weights;    // [d, k]
    Tensor bias;       // [k]
    Tensor feat_mean;  // [d], fitted on the training features
    Tensor feat_std;   // [d]
    std::size_t classes = 0;
};

ProbeModel train_probe(const std::vector<std::vector<double>>& features,
                       const std::vector<std::size_t>& labels, std::size_t classes,
                       const ProbeOptions& opts = {});

// Class-probability vector for one feature row.
std::vector<double> probe_probabilities(const ProbeModel& model, const std::vector<double>& x);

std::vector<std::size_t> probe_predictions(const ProbeModel& model,
                                           const std::vector<std::vector<double>>& features);

double accuracy(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& labels);

std::vector<double> per_class_accuracy(const std::vector<std::size_t>& predicted,
                                       const std::vector<std::size_t>& labels,
                                       std::size_t classes);

// Averages per-example class-probability vectors from two predictors and
// takes the argmax. Each row must be a proper probability vector and both
// lists must align.
std::vector<std::size_t> ensemble_predictions(const std::vector<std::vector<double>>& probs_a,
                                              const std::vector<std::vector<double>>& probs_b);

// Per-class counts of which modality's probe got each example right:
// [video only, motion only, both, neither]. The four buckets partition each
// class exactly.
using AttributionCounts = std::array<std::size_t, 4>;
std::vector<AttributionCounts> attribute_modalities(const std::vector<std::size_t>& video_pred,
                                                    const std::vector<std::size_t>& motion_pred,
                                                    const std::vector<std::size_t>& labels,
                                                    std::size_t classes);

}  // namespace egossl::eval
