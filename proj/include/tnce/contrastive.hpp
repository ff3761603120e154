#pragma once

#include <span>
#include <vector>

#include "json.hpp"
#include "tnce/encoder.hpp"
#include "tnce/synthgen.hpp"
#include "tnce/tape.hpp"

namespace tnce {

// Mixture weights of the negative proposal distribution: weights[0] is the
// ratio of ordinary corresponding negatives, weights[k] the ratio of
// k-disturbed negatives (modality k-1 replaced from another scene). Stored
// weights may be unnormalized; sampling renormalizes.
struct NegativeMix {
  std::vector<double> weights;

  static NegativeMix ordinary_only(int modality_count);
  static NegativeMix uniform(int modality_count);
  int modality_count() const { return static_cast<int>(weights.size()) - 1; }
  std::vector<double> normalized() const;

  bool operator==(const NegativeMix&) const = default;
};

// type 0: ordinary; type k in [1, K]: modality k-1 taken from `source`;
// type -1: naive all-modality disturb with one source per modality.
struct NegativeProvenance {
  int type = 0;
  int base = -1;
  int source = -1;
  std::vector<int> sources;
};

enum class DisturbScheme { per_modality, naive };

struct ContrastBatch {
  std::vector<ModalityTuple> anchors;
  std::vector<ModalityTuple> positives;  // augmented under beta, index-aligned
  std::vector<ModalityTuple> negatives;  // grouped per anchor, (N-1) per group
  std::vector<NegativeProvenance> provenance;
  DropoutMasks masks;
  double temperature = 0.1;

  int candidates_per_anchor() const {
    return anchors.empty()
               ? 0
               : 1 + static_cast<int>(negatives.size() / anchors.size());
  }
  nlohmann::ordered_json to_json() const;
};

struct DisturbResult {
  std::vector<ModalityTuple> tuples;
  std::vector<int> index_map;  // d(j), uniform over indices != j
};

// One k-disturbed copy of every tuple in the batch.
DisturbResult disturb(std::span<const ModalityTuple> batch, int k,
                      RngStream& rng);

struct NaiveDisturbResult {
  std::vector<ModalityTuple> tuples;
  std::vector<std::vector<int>> index_maps;  // index_maps[k][j]
};

// Appendix-D baseline: every modality independently re-indexed.
NaiveDisturbResult disturb_naive(std::span<const ModalityTuple> batch,
                                 RngStream& rng);

struct SampledNegatives {
  std::vector<ModalityTuple> tuples;
  std::vector<NegativeProvenance> provenance;
};

// `count` negatives drawn i.i.d. from the pool: base index uniform, type by
// the renormalized mix, disturbed source uniform over indices != base.
SampledNegatives sample_negatives(std::span<const ModalityTuple> pool,
                                  const NegativeMix& mix, int count,
                                  RngStream& rng);

// Mean over anchors of -log softmax(scores/tau)[positive]. Candidates are
// grouped per anchor, positive first in each group of N.
double infonce_loss(const Matrix& anchor_embeddings,
                    const Matrix& candidate_embeddings, double tau);

// Fully assembled batch plus the encode plan: deduplicated masked inputs and
// the row indices wiring each anchor to its own candidate list. Assembly
// consumes rng only; the loss below is a deterministic function of encoder
// parameters given a plan (which is what the gradient checks rely on).
struct ContrastPlan {
  ContrastBatch batch;
  std::vector<ModalityTuple> encode_inputs;
  std::vector<int> query_rows;
  std::vector<int> candidate_rows;
  int group = 0;
};

// Substreams consumed: key/"dropout", key/"augment", key/"disturb".
ContrastPlan assemble_contrast_batch(std::span<const ModalityTuple> anchors,
                                     const AugmentParams& beta,
                                     const NegativeMix& alpha, double tau,
                                     const DropoutPolicy& dropout,
                                     DisturbScheme scheme, RngKey step_key);

Tape::NodeId contrast_loss_node(Tape& tape, const EncoderState& encoder,
                                const ContrastPlan& plan);

struct TupleLossResult {
  double loss = 0.0;
  Tape::NodeId node = -1;
  ContrastBatch batch;
};

// The TupleInfoNCE objective over one batch: positives by augmentation,
// negatives by the alpha mixture, dropout masks bound per batch, scored
// with f = exp(g . g / tau).
TupleLossResult tuple_infonce_loss(Tape& tape, const EncoderState& encoder,
                                   std::span<const ModalityTuple> anchors,
                                   const AugmentParams& beta,
                                   const NegativeMix& alpha, double tau,
                                   const DropoutPolicy& dropout,
                                   RngKey step_key,
                                   DisturbScheme scheme = DisturbScheme::per_modality);

// The InfoNCE baseline: the same pipeline with the mixture collapsed to
// ordinary negatives.
TupleLossResult plain_infonce_loss(Tape& tape, const EncoderState& encoder,
                                   std::span<const ModalityTuple> anchors,
                                   const AugmentParams& beta, double tau,
                                   const DropoutPolicy& dropout,
                                   RngKey step_key);

}  // namespace tnce
