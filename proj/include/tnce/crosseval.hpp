#pragma once

#include <span>
#include <vector>

#include "json.hpp"
#include "tnce/encoder.hpp"
#include "tnce/synthgen.hpp"

namespace tnce {

// Crossmodal discrimination: match the augmented single modality v'^k_n to
// its complement (the tuple with modality k removed) among the M validation
// tuples. Queries encode tuples with only modality k present; keys encode
// tuples with modality k absent.
struct CrossmodalResult {
  std::vector<Matrix> probabilities;  // one MxM matrix per modality
  std::vector<double> accuracies;     // diagonal-argmax fraction per modality
  double tau = 0.0;
  AugmentParams zeta;

  double total_accuracy() const;
  nlohmann::ordered_json to_json() const;
};

// softmax over rows of scores / tau; separated out so scoring stubs can be
// tested without an encoder.
Matrix crossmodal_scores_to_probs(const Matrix& scores, double tau);

Matrix crossmodal_probs(const EncoderState& encoder, const ValidationSet& val,
                        int k, double tau, const AugmentParams& zeta);

// Fraction of rows whose argmax sits on the diagonal; ties break toward the
// smallest index.
double crossmodal_accuracy(const Matrix& probs);

CrossmodalResult evaluate_crossmodal(const EncoderState& encoder,
                                     const ValidationSet& val,
                                     const AugmentParams& zeta, double tau);

// R(alpha) = sum_k A^k, evaluated with the validation augmentation zeta.
double reward_alpha(const EncoderState& encoder, const ValidationSet& val,
                    const AugmentParams& zeta, double tau);

// argmax over the per-coordinate grid of the total crossmodal accuracy,
// searched one coordinate at a time holding the others at beta. Grid points
// are uniform over [0, beta_max] per coordinate; ties take the smallest
// value. Deterministic given encoder, validation set and grid.
AugmentParams zeta_star_search(const EncoderState& encoder,
                               const ValidationSet& val,
                               const AugmentParams& beta, int grid_points,
                               double tau);

// R(beta) = 1 - sum_k A^k / K - lambda * |beta - zeta*|^2 / |beta_max|^2.
double reward_beta_value(double total_accuracy, int modality_count,
                         std::span<const double> beta,
                         std::span<const double> zeta_star, double lambda,
                         std::span<const double> beta_max);

double reward_beta(const EncoderState& encoder, const ValidationSet& val,
                   const AugmentParams& beta, const AugmentParams& zeta_star,
                   double lambda, double tau);

}  // namespace tnce
