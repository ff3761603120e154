#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "tnce/rng.hpp"
#include "tnce/synthgen.hpp"
#include "tnce/tape.hpp"

namespace tnce {

struct EncoderConfig {
  int hidden = 64;            // width of every hidden layer
  int modality_code_dim = 16; // per-modality code size before fusion
  int embed_dim = 32;         // final embedding size
  bool normalize_output = true;
  double norm_eps = 1e-12;

  bool operator==(const EncoderConfig&) const = default;
};

// Multimodal fusion encoder: one single-hidden-layer MLP per modality over
// [modality ; present flag], codes concatenated into a single-hidden-layer
// fusion MLP, output L2-normalized. Absent modalities enter as the zero
// placeholder with a zero flag, so the same weights serve full tuples,
// dropout batches, and the single-modality probes of crossmodal evaluation.
class EncoderState {
 public:
  EncoderState(std::vector<int> modality_dims, EncoderConfig cfg,
               RngStream& init_rng);

  int modality_count() const { return static_cast<int>(modality_dims_.size()); }
  const std::vector<int>& modality_dims() const { return modality_dims_; }
  const EncoderConfig& config() const { return cfg_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }

  // Forward pass recorded on the given tape; returns the embeddings node
  // (rows align with the batch).
  Tape::NodeId encode_on_tape(Tape& tape,
                              std::span<const ModalityTuple> batch) const;

  // Evaluation-only convenience; no gradients are touched.
  Matrix encode(std::span<const ModalityTuple> batch) const;

  // Value snapshot in registry order; restores must match dimensions exactly.
  std::vector<double> snapshot() const { return params_.flatten(); }
  void restore(std::span<const double> image);

  // Versioned binary checkpoint: "TNCE" magic, format version, dims, then
  // little-endian float64 parameters in registry order.
  void save(std::ostream& out) const;
  static EncoderState load(std::istream& in);

 private:
  struct ModalityHead {
    int w1, b1, w2, b2;
  };
  EncoderState(std::vector<int> modality_dims, EncoderConfig cfg);

  std::vector<int> modality_dims_;
  EncoderConfig cfg_;
  ParameterStore params_;
  std::vector<ModalityHead> heads_;
  int fusion_w1_ = -1, fusion_b1_ = -1, fusion_w2_ = -1, fusion_b2_ = -1;
};

// Appendix-style modality dropout: with the activation probability a batch
// becomes a dropout batch with one shared mask for positives and negatives
// and an independently drawn mask for anchors; otherwise everything is
// present. A mask never drops all modalities.
struct DropoutPolicy {
  double batch_probability = 0.6;
};

struct DropoutMasks {
  bool active = false;
  std::vector<std::uint8_t> anchor;
  std::vector<std::uint8_t> posneg;
};

DropoutMasks sample_dropout_masks(const DropoutPolicy& policy, int modality_count,
                                  RngStream& rng);

}  // namespace tnce
