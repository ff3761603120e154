#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tnce/matrix.hpp"
#include "tnce/rng.hpp"

namespace tnce {

// Linear-Gaussian scene model: a latent scene z ~ N(0, I) observed through
// one mixing matrix per modality, v^k = W_k z + sigma_k * eps. The joint
// distribution of all modalities is Gaussian with a closed-form covariance,
// which makes every mutual information the training objective is supposed to
// bound exactly computable.
struct ModalitySpec {
  int dim = 1;
  double noise_std = 1.0;
  Matrix mixing;  // dim x latent_dim
};

struct SceneSpec {
  int latent_dim = 1;
  std::vector<ModalitySpec> modalities;
  std::uint64_t seed = 0;

  int modality_count() const { return static_cast<int>(modalities.size()); }
  int total_dim() const;
  std::vector<int> modality_dims() const;
  void validate() const;
};

struct ModalityTuple {
  std::vector<std::vector<double>> modalities;
  std::vector<std::uint8_t> present;  // absent modality holds all zeros
  std::int64_t scene_id = 0;
};

// Copy with the given modality availability; dropped modalities are zeroed.
ModalityTuple mask_tuple(const ModalityTuple& t, std::span<const std::uint8_t> mask);

// Per-modality augmentation magnitudes. The flattened coordinate order
// (noise, mask, rotation per modality) is the beta/zeta vector seen by the
// hyper-parameter optimizer.
struct AugmentMagnitudes {
  double noise_std = 0.0;
  double mask_fraction = 0.0;
  double rotation_deg = 0.0;

  bool operator==(const AugmentMagnitudes&) const = default;
};

enum class AugmentRole { train, validation };

struct AugmentParams {
  std::vector<AugmentMagnitudes> per_modality;
  std::vector<AugmentMagnitudes> bounds;  // beta_max, same length
  AugmentRole role = AugmentRole::train;

  static AugmentParams none(int modality_count,
                            std::vector<AugmentMagnitudes> bounds,
                            AugmentRole role = AugmentRole::train);
  int coordinate_count() const { return 3 * static_cast<int>(per_modality.size()); }
  std::vector<double> as_vector() const;
  std::vector<double> bounds_vector() const;
  AugmentParams with_vector(std::span<const double> coords) const;
  void validate() const;  // every coordinate in [0, bound]

  bool operator==(const AugmentParams&) const = default;
};

// n i.i.d. tuples; scene ids are id_base, id_base+1, ... Draw order per tuple
// is fixed (z first, then each modality's noise), and noise is drawn even
// when sigma is zero so consumption never depends on parameter values.
std::vector<ModalityTuple> sample_batch(const SceneSpec& spec, int n,
                                        RngStream& rng,
                                        std::int64_t id_base = 0);

// Applies, per present modality: planar rotation of consecutive coordinate
// pairs, additive Gaussian noise, then coordinate masking (masked -> 0).
ModalityTuple augment_tuple(const ModalityTuple& t, const AugmentParams& params,
                            RngStream& rng);

// Covariance of concat(v^1..v^K); block (k, j) is W_k W_j^T + delta_kj sigma_k^2 I.
Matrix joint_covariance(const SceneSpec& spec);

// log det of a symmetric positive-definite matrix via Cholesky; throws with a
// jitter hint when the matrix is numerically singular.
double logdet_spd(Matrix m);

// I(v^k; complement of v^k) in nats, closed form.
double analytic_pair_mi(const SceneSpec& spec, int k);

// I(t ; t + e) where e is independent noise with the given per-modality
// std; this is I(t2; t1 | beta) for the additive-noise augmentation family.
double analytic_view_mi(const SceneSpec& spec,
                        std::span<const double> view_noise_std);

// Scene spec whose modality noise includes an extra independent component,
// sigma' = sqrt(sigma^2 + extra^2); the marginal law of additively augmented
// positives.
SceneSpec with_added_noise(const SceneSpec& spec,
                           std::span<const double> extra_std);

// Plug-in binned estimator for 1-D pairs; positively biased at small sample
// counts. At least bins^2 samples required, 10x that recommended.
double empirical_mi_estimate(std::span<const double> a,
                             std::span<const double> b, int bins);

// Holdout set for crossmodal discrimination: M base tuples plus a fixed
// augmentation seed so queries regenerate identically for any zeta.
struct ValidationSet {
  std::vector<ModalityTuple> tuples;
  std::uint64_t augment_seed = 0;

  int size() const { return static_cast<int>(tuples.size()); }
};

ValidationSet make_validation_set(const SceneSpec& spec, int m, RngKey key);

// Augmented copies of modality k for each validation tuple (index-aligned).
std::vector<std::vector<double>> augmented_modality(const ValidationSet& val,
                                                    int k,
                                                    const AugmentParams& zeta);

}  // namespace tnce
