#include "tnce/training.hpp"

#include <cmath>

#include "tnce/error.hpp"

namespace tnce {

void SgdOptimizer::step(ParameterStore& params) {
  if (velocity_.empty()) {
    velocity_.reserve(params.count());
    for (int p = 0; p < params.count(); ++p) {
      const Matrix& v = params.entry(p).value;
      velocity_.emplace_back(v.rows(), v.cols());
    }
  }
  require(static_cast<int>(velocity_.size()) == params.count(),
          "SgdOptimizer: store layout changed under the optimizer");
  for (int p = 0; p < params.count(); ++p) {
    Matrix& value = params.entry(p).value;
    const Matrix& grad = params.entry(p).grad;
    Matrix& vel = velocity_[p];
    for (std::size_t i = 0; i < value.size(); ++i) {
      vel.data()[i] = momentum_ * vel.data()[i] - learning_rate_ * grad.data()[i];
      value.data()[i] += vel.data()[i];
    }
  }
}

TrainEpochResult train_one_epoch(EncoderState& encoder, const SceneSpec& spec,
                                 const NegativeMix& alpha,
                                 const AugmentParams& beta,
                                 const TrainSettings& settings, RngKey data_key,
                                 RngKey loss_key, SgdOptimizer& optimizer) {
  require(settings.steps >= 1, "train_one_epoch: steps must be >= 1, got ",
          settings.steps);
  require(settings.batch_size >= 2, "train_one_epoch: batch size must be >= 2, got ",
          settings.batch_size);
  TrainEpochResult result;
  double loss_sum = 0.0;
  for (int step = 0; step < settings.steps; ++step) {
    RngStream data_rng = data_key.child(step).stream();
    const auto anchors =
        sample_batch(spec, settings.batch_size, data_rng,
                     static_cast<std::int64_t>(step) * settings.batch_size);
    Tape tape(&encoder.params());
    TupleLossResult loss = tuple_infonce_loss(
        tape, encoder, anchors, beta, alpha, settings.tau, settings.dropout,
        loss_key.child(step), settings.scheme);
    if (!std::isfinite(loss.loss)) {
      result.finite = false;
      result.final_loss = loss.loss;
      return result;
    }
    tape.backward(loss.node);
    optimizer.step(encoder.params());
    loss_sum += loss.loss;
    result.final_loss = loss.loss;
  }
  result.mean_loss = loss_sum / settings.steps;
  return result;
}

}  // namespace tnce
