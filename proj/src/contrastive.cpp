#include "tnce/contrastive.hpp"

#include <cmath>

#include "tnce/error.hpp"

namespace tnce {

NegativeMix NegativeMix::ordinary_only(int modality_count) {
  NegativeMix m;
  m.weights.assign(modality_count + 1, 0.0);
  m.weights[0] = 1.0;
  return m;
}

NegativeMix NegativeMix::uniform(int modality_count) {
  NegativeMix m;
  m.weights.assign(modality_count + 1,
                   1.0 / static_cast<double>(modality_count + 1));
  return m;
}

std::vector<double> NegativeMix::normalized() const {
  require(weights.size() >= 2, "NegativeMix: need at least (alpha_0, alpha_1)");
  double sum = 0.0;
  for (double w : weights) {
    require(std::isfinite(w) && w >= 0.0, "NegativeMix: weight ", w,
            " is negative or non-finite");
    sum += w;
  }
  require(sum > 0.0, "NegativeMix: all weights are zero; nothing to sample");
  std::vector<double> out(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) out[i] = weights[i] / sum;
  return out;
}

namespace {

nlohmann::ordered_json tuple_to_json(const ModalityTuple& t) {
  nlohmann::ordered_json j;
  j["scene_id"] = t.scene_id;
  j["present"] = std::vector<int>(t.present.begin(), t.present.end());
  j["modalities"] = t.modalities;
  return j;
}

// Uniform index over [0, n) \ {skip}; consumes exactly one draw.
int uniform_index_excluding(int n, int skip, RngStream& rng) {
  const int r = static_cast<int>(rng.uniform_int(n - 1));
  return r < skip ? r : r + 1;
}

// Draws one negative: type by the cumulative mixture, base uniform over the
// pool (optionally excluding an anchor), sources excluding the base.
NegativeProvenance draw_negative(std::span<const double> cum, int pool_size,
                                 int exclude, int modality_count,
                                 DisturbScheme scheme, RngStream& rng) {
  NegativeProvenance prov;
  const double u = rng.uniform();
  int type = static_cast<int>(cum.size()) - 1;
  for (std::size_t c = 0; c < cum.size(); ++c) {
    if (u < cum[c]) {
      type = static_cast<int>(c);
      break;
    }
  }
  prov.base = exclude < 0 ? static_cast<int>(rng.uniform_int(pool_size))
                          : uniform_index_excluding(pool_size, exclude, rng);
  if (type == 0) {
    prov.type = 0;
    return prov;
  }
  if (scheme == DisturbScheme::per_modality) {
    prov.type = type;
    prov.source = uniform_index_excluding(pool_size, prov.base, rng);
  } else {
    prov.type = -1;
    prov.sources.resize(modality_count);
    for (int k = 0; k < modality_count; ++k)
      prov.sources[k] = uniform_index_excluding(pool_size, prov.base, rng);
  }
  return prov;
}

ModalityTuple materialize_negative(std::span<const ModalityTuple> pool,
                                   const NegativeProvenance& prov) {
  ModalityTuple t = pool[prov.base];
  if (prov.type > 0) {
    t.modalities[prov.type - 1] = pool[prov.source].modalities[prov.type - 1];
  } else if (prov.type == -1) {
    for (std::size_t k = 0; k < t.modalities.size(); ++k)
      t.modalities[k] = pool[prov.sources[k]].modalities[k];
  }
  return t;
}

std::vector<double> cumulative(const std::vector<double>& probs) {
  std::vector<double> cum(probs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    cum[i] = acc;
  }
  cum.back() = 1.0 + 1e-9;  // absorb rounding at the top end
  return cum;
}

}  // namespace

nlohmann::ordered_json ContrastBatch::to_json() const {
  nlohmann::ordered_json j;
  j["temperature"] = temperature;
  j["candidates_per_anchor"] = candidates_per_anchor();
  j["masks"] = {{"active", masks.active},
                {"anchor", std::vector<int>(masks.anchor.begin(), masks.anchor.end())},
                {"posneg", std::vector<int>(masks.posneg.begin(), masks.posneg.end())}};
  auto dump = [](const std::vector<ModalityTuple>& ts) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& t : ts) arr.push_back(tuple_to_json(t));
    return arr;
  };
  j["anchors"] = dump(anchors);
  j["positives"] = dump(positives);
  j["negatives"] = dump(negatives);
  nlohmann::ordered_json prov = nlohmann::ordered_json::array();
  for (const auto& p : provenance) {
    nlohmann::ordered_json pj;
    pj["type"] = p.type;
    pj["base"] = p.base;
    if (p.type > 0) pj["source"] = p.source;
    if (p.type == -1) pj["sources"] = p.sources;
    prov.push_back(pj);
  }
  j["provenance"] = prov;
  return j;
}

DisturbResult disturb(std::span<const ModalityTuple> batch, int k,
                      RngStream& rng) {
  require(batch.size() >= 2,
          "disturb: batch size ", batch.size(),
          " too small; no distinct index exists for d(j)");
  require(k >= 0 && !batch.empty() &&
              k < static_cast<int>(batch[0].modalities.size()),
          "disturb: modality ", k, " out of range");
  DisturbResult out;
  const int n = static_cast<int>(batch.size());
  out.tuples.reserve(n);
  out.index_map.reserve(n);
  for (int j = 0; j < n; ++j) {
    const int d = uniform_index_excluding(n, j, rng);
    out.index_map.push_back(d);
    ModalityTuple t = batch[j];
    t.modalities[k] = batch[d].modalities[k];
    out.tuples.push_back(std::move(t));
  }
  return out;
}

NaiveDisturbResult disturb_naive(std::span<const ModalityTuple> batch,
                                 RngStream& rng) {
  require(batch.size() >= 2, "disturb_naive: batch size ", batch.size(),
          " too small; no distinct index exists");
  NaiveDisturbResult out;
  const int n = static_cast<int>(batch.size());
  const int k_count = static_cast<int>(batch[0].modalities.size());
  out.index_maps.assign(k_count, std::vector<int>(n));
  out.tuples.assign(batch.begin(), batch.end());
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < k_count; ++k) {
      const int d = uniform_index_excluding(n, j, rng);
      out.index_maps[k][j] = d;
      out.tuples[j].modalities[k] = batch[d].modalities[k];
    }
  return out;
}

SampledNegatives sample_negatives(std::span<const ModalityTuple> pool,
                                  const NegativeMix& mix, int count,
                                  RngStream& rng) {
  require(pool.size() >= 2, "sample_negatives: pool size ", pool.size(),
          " too small");
  require(count >= 1, "sample_negatives: count must be >= 1, got ", count);
  const int modality_count = static_cast<int>(pool[0].modalities.size());
  require(mix.modality_count() == modality_count, "sample_negatives: mix has ",
          mix.modality_count(), " disturb types for ", modality_count,
          " modalities");
  const std::vector<double> cum = cumulative(mix.normalized());
  SampledNegatives out;
  out.tuples.reserve(count);
  out.provenance.reserve(count);
  for (int i = 0; i < count; ++i) {
    NegativeProvenance prov =
        draw_negative(cum, static_cast<int>(pool.size()), /*exclude=*/-1,
                      modality_count, DisturbScheme::per_modality, rng);
    out.tuples.push_back(materialize_negative(pool, prov));
    out.provenance.push_back(std::move(prov));
  }
  return out;
}

double infonce_loss(const Matrix& anchor_embeddings,
                    const Matrix& candidate_embeddings, double tau) {
  require(tau > 0.0, "infonce_loss: temperature must be positive, got ", tau);
  const int b = anchor_embeddings.rows();
  require(candidate_embeddings.cols() == anchor_embeddings.cols(),
          "infonce_loss: embedding dims differ, ",
          shape_str(anchor_embeddings), " vs ", shape_str(candidate_embeddings));
  require(candidate_embeddings.rows() % b == 0,
          "infonce_loss: candidate rows (", candidate_embeddings.rows(),
          ") not a multiple of anchors (", b, ")");
  const int n = candidate_embeddings.rows() / b;
  require(n >= 2, "infonce_loss: need at least 2 candidates per anchor, got ", n);
  Matrix scores(b, n);
  const int d = anchor_embeddings.cols();
  for (int i = 0; i < b; ++i) {
    const double* a = anchor_embeddings.row(i);
    for (int m = 0; m < n; ++m) {
      const double* c = candidate_embeddings.row(i * n + m);
      double acc = 0.0;
      for (int j = 0; j < d; ++j) acc += a[j] * c[j];
      scores(i, m) = acc / tau;
    }
  }
  std::vector<int> targets(b, 0);
  return softmax_cross_entropy_value(scores, targets);
}

ContrastPlan assemble_contrast_batch(std::span<const ModalityTuple> anchors,
                                     const AugmentParams& beta,
                                     const NegativeMix& alpha, double tau,
                                     const DropoutPolicy& dropout,
                                     DisturbScheme scheme, RngKey step_key) {
  require(anchors.size() >= 2, "assemble_contrast_batch: batch size ",
          anchors.size(), " too small for in-batch negatives");
  require(tau > 0.0, "assemble_contrast_batch: temperature must be positive, got ",
          tau);
  const int b = static_cast<int>(anchors.size());
  const int modality_count = static_cast<int>(anchors[0].modalities.size());
  require(alpha.modality_count() == modality_count,
          "assemble_contrast_batch: mix has ", alpha.modality_count(),
          " disturb types for ", modality_count, " modalities");
  const std::vector<double> cum = cumulative(alpha.normalized());

  ContrastPlan plan;
  plan.batch.temperature = tau;
  plan.batch.anchors.assign(anchors.begin(), anchors.end());

  // Substream order is part of the reproducibility contract: dropout masks,
  // then positive augmentation, then negative draws.
  RngStream dropout_rng = step_key.child("dropout").stream();
  plan.batch.masks =
      sample_dropout_masks(dropout, modality_count, dropout_rng);

  RngStream augment_rng = step_key.child("augment").stream();
  plan.batch.positives.reserve(b);
  for (const ModalityTuple& a : anchors)
    plan.batch.positives.push_back(augment_tuple(a, beta, augment_rng));

  // Encode rows: anchors [0, b), positives [b, 2b), disturbed extras after.
  plan.encode_inputs.reserve(2 * b);
  for (const ModalityTuple& a : anchors)
    plan.encode_inputs.push_back(mask_tuple(a, plan.batch.masks.anchor));
  for (const ModalityTuple& p : plan.batch.positives)
    plan.encode_inputs.push_back(mask_tuple(p, plan.batch.masks.posneg));

  plan.group = b;  // 1 positive + (b-1) negatives per anchor
  plan.query_rows.resize(b);
  for (int i = 0; i < b; ++i) plan.query_rows[i] = i;
  plan.candidate_rows.reserve(static_cast<std::size_t>(b) * b);

  RngStream disturb_rng = step_key.child("disturb").stream();
  const std::span<const ModalityTuple> pool(plan.batch.positives);
  for (int i = 0; i < b; ++i) {
    require(plan.batch.positives[i].scene_id == anchors[i].scene_id,
            "assemble_contrast_batch: positive ", i, " lost its scene id");
    plan.candidate_rows.push_back(b + i);  // own positive first
    for (int m = 0; m < b - 1; ++m) {
      NegativeProvenance prov = draw_negative(cum, b, /*exclude=*/i,
                                              modality_count, scheme,
                                              disturb_rng);
      ModalityTuple neg = materialize_negative(pool, prov);
      if (prov.type == 0) {
        plan.candidate_rows.push_back(b + prov.base);  // shares the encode row
      } else {
        plan.candidate_rows.push_back(
            static_cast<int>(plan.encode_inputs.size()));
        plan.encode_inputs.push_back(
            mask_tuple(neg, plan.batch.masks.posneg));
      }
      plan.batch.negatives.push_back(std::move(neg));
      plan.batch.provenance.push_back(std::move(prov));
    }
  }
  return plan;
}

Tape::NodeId contrast_loss_node(Tape& tape, const EncoderState& encoder,
                                const ContrastPlan& plan) {
  auto embeddings = encoder.encode_on_tape(tape, plan.encode_inputs);
  auto scores = tape.contrast_scores(embeddings, plan.query_rows,
                                     plan.candidate_rows, plan.group);
  auto logits = tape.scale(scores, 1.0 / plan.batch.temperature);
  std::vector<int> targets(plan.query_rows.size(), 0);
  return tape.softmax_cross_entropy(logits, std::move(targets));
}

TupleLossResult tuple_infonce_loss(Tape& tape, const EncoderState& encoder,
                                   std::span<const ModalityTuple> anchors,
                                   const AugmentParams& beta,
                                   const NegativeMix& alpha, double tau,
                                   const DropoutPolicy& dropout,
                                   RngKey step_key, DisturbScheme scheme) {
  ContrastPlan plan = assemble_contrast_batch(anchors, beta, alpha, tau,
                                              dropout, scheme, step_key);
  TupleLossResult result;
  result.node = contrast_loss_node(tape, encoder, plan);
  result.loss = tape.scalar(result.node);
  result.batch = std::move(plan.batch);
  return result;
}

TupleLossResult plain_infonce_loss(Tape& tape, const EncoderState& encoder,
                                   std::span<const ModalityTuple> anchors,
                                   const AugmentParams& beta, double tau,
                                   const DropoutPolicy& dropout,
                                   RngKey step_key) {
  const int modality_count =
      anchors.empty() ? 0 : static_cast<int>(anchors[0].modalities.size());
  return tuple_infonce_loss(tape, encoder, anchors, beta,
                            NegativeMix::ordinary_only(modality_count), tau,
                            dropout, step_key);
}

}  // namespace tnce
