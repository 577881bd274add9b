#include "egossl/contrastive.hpp"

#include <cmath>
#include <stdexcept>

namespace egossl::model {

namespace {

void check_embeddings(const Tensor& v, const Tensor& m, double temperature) {
    if (v.rank() != 2 || m.rank() != 2 || v.shape[1] != m.shape[1]) {
        throw std::invalid_argument("input shape mismatch");
    }
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
}

}  // namespace

Var similarity_logits(Graph& g, Var video_emb, Var motion_emb, double temperature) {
    check_embeddings(g.value(video_emb), g.value(motion_emb), temperature);
    Var vn = g.row_l2_normalize(video_emb);
    Var mn = g.row_l2_normalize(motion_emb);
    return g.scale(g.matmul_nt(vn, mn), 1.0 / temperature);
}

Var contrastive_loss(Graph& g, Var similarities, double temperature) {
    const Tensor& s = g.value(similarities);
    if (s.rank() != 2 || s.shape[0] != s.shape[1]) {
        throw std::invalid_argument("input shape mismatch");
    }
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    if (!s.all_finite()) throw std::invalid_argument("invalid similarities");
    const std::size_t n = s.shape[0];
    if (n == 0) throw std::invalid_argument("no data");

    Var z = g.scale(similarities, 1.0 / temperature);
    Var diag = g.diag_part(z);
    Var row_lse = g.logsumexp_rows(z);
    Var col_lse = g.logsumexp_rows(g.transpose(z));
    Var total = g.add(g.sum_all(g.sub(row_lse, diag)), g.sum_all(g.sub(col_lse, diag)));
    return g.scale(total, 1.0 / (2.0 * static_cast<double>(n)));
}

Var contrastive_loss(Graph& g, Var video_emb, Var motion_emb, double temperature) {
    const Tensor& v = g.value(video_emb);
    const Tensor& m = g.value(motion_emb);
    check_embeddings(v, m, temperature);
    if (v.shape[0] != m.shape[0]) throw std::invalid_argument("input shape mismatch");
    return contrastive_loss(g, similarity_logits(g, video_emb, motion_emb, 1.0), temperature);
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[1]) {
        throw std::invalid_argument("input shape mismatch");
    }
    const std::size_t n = a.shape[0], m = b.shape[0], d = a.shape[1];
    auto row_norms = [d](const Tensor& t) {
        std::vector<double> norms(t.shape[0]);
        for (std::size_t i = 0; i < t.shape[0]; ++i) {
            double sq = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double v = t.data[i * d + j];
                sq += v * v;
            }
            if (!(sq > 0.0)) throw std::invalid_argument("degenerate embedding");
            norms[i] = std::sqrt(sq);
        }
        return norms;
    };
    const auto na = row_norms(a);
    const auto nb = row_norms(b);
    Tensor out(numerics::Shape{n, m});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += a.data[i * d + k] * b.data[j * d + k];
            out.data[i * m + j] = dot / (na[i] * nb[j]);
        }
    }
    return out;
}

std::pair<std::vector<double>, std::vector<double>> correspondence_scores(const Tensor& s) {
    if (s.rank() != 2 || s.shape[0] != s.shape[1]) {
        throw std::invalid_argument("input shape mismatch");
    }
    const std::size_t n = s.shape[0];
    std::vector<double> positives, negatives;
    positives.reserve(n);
    negatives.reserve(n * n - n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            (i == j ? positives : negatives).push_back(s.data[i * n + j]);
        }
    }
    return {std::move(positives), std::move(negatives)};
}

}  // namespace egossl::model
