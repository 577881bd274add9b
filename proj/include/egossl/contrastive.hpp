#pragma once

#include "egossl/graph.hpp"
#include "egossl/tensor.hpp"

namespace egossl::model {

using numerics::Graph;
using numerics::Tensor;
using numerics::Var;

// Temperature-scaled cosine similarities between two embedding batches:
// rows are L2-normalized, then logits[i][j] = <v_i, m_j> / temperature.
Var similarity_logits(Graph& g, Var video_emb, Var motion_emb, double temperature);

// Symmetric cross-entropy over a square similarity matrix. With z = S / τ,
// each matched pair (i, i) competes against the other clips in its row and
// in its column:
//
//   loss = (1 / 2N) * sum_i [ (lse(z[i, :]) - z[i, i]) + (lse(z[:, i]) - z[i, i]) ]
//
// A batch of one has nothing to contrast against and scores exactly zero.
Var contrastive_loss(Graph& g, Var similarities, double temperature);

// Same loss built from raw embeddings: cosine similarities first, then the
// matrix form above.
Var contrastive_loss(Graph& g, Var video_emb, Var motion_emb, double temperature);

// Cosine similarity matrix [N, M] between rows of two plain embedding
// tensors, for scoring outside any training graph.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

// Splits a square similarity matrix into correspondence scores: diagonal
// entries are the matched (positive) pairs, everything else is a mismatch.
std::pair<std::vector<double>, std::vector<double>> correspondence_scores(const Tensor& s);

}  // namespace egossl::model
