#pragma once

#include "tnce/contrastive.hpp"
#include "tnce/encoder.hpp"
#include "tnce/synthgen.hpp"

namespace tnce {

struct TrainSettings {
  int batch_size = 64;
  int steps = 50;  // one desk-scale "epoch" is a fixed number of fresh batches
  double learning_rate = 0.5;
  double momentum = 0.9;
  double tau = 0.1;
  DropoutPolicy dropout;
  DisturbScheme scheme = DisturbScheme::per_modality;
};

// Plain SGD with optional momentum. Velocity state lives with the caller so a
// continuing run keeps it and a candidate branch starts fresh.
class SgdOptimizer {
 public:
  SgdOptimizer(double learning_rate, double momentum)
      : learning_rate_(learning_rate), momentum_(momentum) {}
  void step(ParameterStore& params);

 private:
  double learning_rate_;
  double momentum_;
  std::vector<Matrix> velocity_;
};

struct TrainEpochResult {
  double mean_loss = 0.0;
  double final_loss = 0.0;
  bool finite = true;  // false as soon as any step loss is non-finite
};

// Trains under L_TNCE with fixed (alpha, beta) for settings.steps batches.
// Batch i draws data from data_key/i and loss randomness (dropout, augment,
// disturb) from loss_key/i, so two candidates sharing keys see identical
// draws. Stops early if the loss turns non-finite.
TrainEpochResult train_one_epoch(EncoderState& encoder, const SceneSpec& spec,
                                 const NegativeMix& alpha,
                                 const AugmentParams& beta,
                                 const TrainSettings& settings, RngKey data_key,
                                 RngKey loss_key, SgdOptimizer& optimizer);

}  // namespace tnce
