#include "tnce/crosseval.hpp"

#include <cmath>

#include "tnce/error.hpp"
#include "tnce/kernels.hpp"
#include "tnce/tape.hpp"

namespace tnce {

double CrossmodalResult::total_accuracy() const {
  double s = 0.0;
  for (double a : accuracies) s += a;
  return s;
}

nlohmann::ordered_json CrossmodalResult::to_json() const {
  nlohmann::ordered_json j;
  j["tau"] = tau;
  j["zeta"] = zeta.as_vector();
  j["accuracies"] = accuracies;
  j["total_accuracy"] = total_accuracy();
  nlohmann::ordered_json mats = nlohmann::ordered_json::array();
  for (const Matrix& p : probabilities) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (int i = 0; i < p.rows(); ++i)
      rows.push_back(std::vector<double>(p.row(i), p.row(i) + p.cols()));
    mats.push_back(rows);
  }
  j["probabilities"] = mats;
  return j;
}

Matrix crossmodal_scores_to_probs(const Matrix& scores, double tau) {
  require(tau > 0.0, "crossmodal probabilities: temperature must be positive, got ",
          tau);
  Matrix scaled = scores;
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled.data()[i] /= tau;
  return softmax_rows(scaled);
}

namespace {

// Queries (modality k alone, augmented) and keys (modality k removed) for
// the whole validation set, encoded in one batch.
Matrix modality_scores(const EncoderState& encoder, const ValidationSet& val,
                       int k, const AugmentParams& zeta) {
  const int m = val.size();
  const int k_count = encoder.modality_count();
  require(m >= 2, "crossmodal_probs: need at least 2 validation tuples");
  require(k >= 0 && k < k_count, "crossmodal_probs: modality ", k,
          " out of range [0, ", k_count, ")");

  std::vector<std::vector<double>> queries = augmented_modality(val, k, zeta);
  std::vector<std::uint8_t> only_k(k_count, 0), all_but_k(k_count, 1);
  only_k[k] = 1;
  all_but_k[k] = 0;

  std::vector<ModalityTuple> batch;
  batch.reserve(2 * m);
  for (int n = 0; n < m; ++n) {
    ModalityTuple q = val.tuples[n];
    q.modalities[k] = std::move(queries[n]);
    batch.push_back(mask_tuple(q, only_k));
  }
  for (int l = 0; l < m; ++l)
    batch.push_back(mask_tuple(val.tuples[l], all_but_k));

  const Matrix embeddings = encoder.encode(batch);
  Matrix query_rows(m, embeddings.cols());
  Matrix key_rows(m, embeddings.cols());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < embeddings.cols(); ++j) {
      query_rows(i, j) = embeddings(i, j);
      key_rows(i, j) = embeddings(m + i, j);
    }
  Matrix scores(m, m);
  kernels::gemm_nt(query_rows, key_rows, scores);
  return scores;
}

}  // namespace

Matrix crossmodal_probs(const EncoderState& encoder, const ValidationSet& val,
                        int k, double tau, const AugmentParams& zeta) {
  return crossmodal_scores_to_probs(modality_scores(encoder, val, k, zeta), tau);
}

double crossmodal_accuracy(const Matrix& probs) {
  require(probs.rows() == probs.cols(), "crossmodal_accuracy: matrix is ",
          shape_str(probs), ", expected square");
  int hits = 0;
  for (int n = 0; n < probs.rows(); ++n) {
    int best = 0;
    const double* row = probs.row(n);
    for (int l = 1; l < probs.cols(); ++l)
      if (row[l] > row[best]) best = l;  // strict: ties keep the smaller index
    if (best == n) ++hits;
  }
  return static_cast<double>(hits) / probs.rows();
}

CrossmodalResult evaluate_crossmodal(const EncoderState& encoder,
                                     const ValidationSet& val,
                                     const AugmentParams& zeta, double tau) {
  require(tau > 0.0, "evaluate_crossmodal: temperature must be positive, got ",
          tau);
  CrossmodalResult result;
  result.tau = tau;
  result.zeta = zeta;
  for (int k = 0; k < encoder.modality_count(); ++k) {
    result.probabilities.push_back(crossmodal_probs(encoder, val, k, tau, zeta));
    result.accuracies.push_back(crossmodal_accuracy(result.probabilities.back()));
  }
  return result;
}

double reward_alpha(const EncoderState& encoder, const ValidationSet& val,
                    const AugmentParams& zeta, double tau) {
  double total = 0.0;
  for (int k = 0; k < encoder.modality_count(); ++k)
    total += crossmodal_accuracy(crossmodal_probs(encoder, val, k, tau, zeta));
  return total;
}

AugmentParams zeta_star_search(const EncoderState& encoder,
                               const ValidationSet& val,
                               const AugmentParams& beta, int grid_points,
                               double tau) {
  require(grid_points >= 1, "zeta_star_search: grid must be nonempty");
  beta.validate();
  AugmentParams zeta_base = beta;
  zeta_base.role = AugmentRole::validation;
  const std::vector<double> bounds = beta.bounds_vector();
  const std::vector<double> base = beta.as_vector();
  std::vector<double> best = base;

  // Coordinate c only moves modality c/3's queries, so only that modality's
  // accuracy needs re-evaluation along its grid.
  for (std::size_t c = 0; c < base.size(); ++c) {
    const int modality = static_cast<int>(c) / 3;
    double best_acc = -1.0, best_value = 0.0;
    for (int g = 0; g < grid_points; ++g) {
      const double value =
          grid_points == 1
              ? 0.0
              : bounds[c] * static_cast<double>(g) / (grid_points - 1);
      std::vector<double> coords = base;
      coords[c] = value;
      const AugmentParams zeta = zeta_base.with_vector(coords);
      const double acc = crossmodal_accuracy(
          crossmodal_probs(encoder, val, modality, tau, zeta));
      if (acc > best_acc) {  // strict: ties keep the smaller grid value
        best_acc = acc;
        best_value = value;
      }
    }
    best[c] = best_value;
  }
  return zeta_base.with_vector(best);
}

double reward_beta_value(double total_accuracy, int modality_count,
                         std::span<const double> beta,
                         std::span<const double> zeta_star, double lambda,
                         std::span<const double> beta_max) {
  require(modality_count >= 1, "reward_beta: modality count ", modality_count);
  require(lambda >= 0.0, "reward_beta: lambda must be >= 0, got ", lambda);
  require(beta.size() == zeta_star.size() && beta.size() == beta_max.size(),
          "reward_beta: coordinate counts differ (", beta.size(), ", ",
          zeta_star.size(), ", ", beta_max.size(), ")");
  double div = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < beta.size(); ++i) {
    const double d = beta[i] - zeta_star[i];
    div += d * d;
    norm += beta_max[i] * beta_max[i];
  }
  require(norm > 0.0, "reward_beta: beta_max is all zero; nothing to normalize by");
  return 1.0 - total_accuracy / modality_count - lambda * div / norm;
}

double reward_beta(const EncoderState& encoder, const ValidationSet& val,
                   const AugmentParams& beta, const AugmentParams& zeta_star,
                   double lambda, double tau) {
  AugmentParams zeta = beta;
  zeta.role = AugmentRole::validation;
  const double total = reward_alpha(encoder, val, zeta, tau);
  return reward_beta_value(total, encoder.modality_count(), beta.as_vector(),
                           zeta_star.as_vector(), lambda, beta.bounds_vector());
}

}  // namespace tnce
