#pragma once

#include <optional>
#include <span>
#include <vector>

#include "tnce/crosseval.hpp"
#include "tnce/training.hpp"

namespace tnce {

// Gaussian search distribution over one hyper-parameter vector (the alpha
// mixture weights or the beta augmentation coordinates), updated by the
// score-function estimator with sigma held fixed.
struct HyperDist {
  enum class Target { alpha, beta };

  std::vector<double> mu;
  double sigma = 0.1;
  double eta = 0.05;
  int candidates = 4;  // candidates sampled per epoch
  Target target = Target::alpha;

  void validate() const;
};

struct CandidateSet {
  std::vector<std::vector<double>> raw;      // exact Gaussian draws
  std::vector<std::vector<double>> clipped;  // projected to the valid domain
};

// B i.i.d. draws from N(mu, sigma^2 I); the raw draw feeds the REINFORCE
// density, the clipped draw is what training uses.
CandidateSet sample_candidates(const HyperDist& dist,
                               std::span<const double> lower,
                               std::span<const double> upper, RngStream& rng);

// mu += eta * (1/B) * sum_i R_i * (raw_i - mu) / sigma^2. With the baseline
// flag the mean reward is subtracted first (variance reduction, off by
// default). Rewards must be finite; exclusion happens upstream.
void reinforce_update(HyperDist& dist,
                      std::span<const std::vector<double>> raw_candidates,
                      std::span<const double> rewards, bool baseline = false);

struct CandidateRecord {
  int candidate_id = 0;
  std::vector<double> raw;
  std::vector<double> clipped;
  double reward = 0.0;
  double train_loss = 0.0;
  std::vector<double> accuracies;
  bool excluded = false;  // non-finite loss even after one retry
  bool chosen = false;
};

struct EpochRecord {
  int epoch = 0;
  HyperDist::Target target = HyperDist::Target::alpha;
  std::vector<double> mu_before;
  std::vector<double> mu_after;
  int chosen_index = -1;  // -1 when every candidate was excluded
  double wall_seconds = 0.0;
  std::vector<CandidateRecord> candidates;
};

struct RewardTrace {
  std::vector<EpochRecord> epochs;
};

struct AlternatingConfig {
  TrainSettings train;
  int epochs = 8;  // T; epoch t optimizes beta when odd, alpha when even
  double lambda = 1.0;
  int validation_size = 128;
  int zeta_grid_points = 9;
  bool reinforce_baseline = false;
};

// Algorithm-1 style sample optimization: per epoch, branch the encoder into
// one snapshot per candidate, train each for one epoch under the candidate's
// objective (identical data order across candidates), score with R(alpha) or
// R(beta), REINFORCE-update the distribution, and continue from the best
// branch. A candidate whose training loss turns non-finite is retried once on
// a fresh substream and then excluded with reward -inf.
RewardTrace run_alternating(EncoderState& encoder, const SceneSpec& spec,
                            HyperDist& alpha_dist, HyperDist& beta_dist,
                            const AugmentParams& beta_template,
                            const AlternatingConfig& config, RngKey master);

}  // namespace tnce
