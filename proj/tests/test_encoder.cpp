#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "tnce/encoder.hpp"
#include "tnce/gradcheck.hpp"

using namespace tnce;

namespace {

SceneSpec small_scene() {
  SceneSpec spec;
  spec.latent_dim = 2;
  spec.modalities.resize(2);
  spec.modalities[0] = {3, 0.2, Matrix::from_rows({{1.0, 0.0},
                                                   {0.5, 0.5},
                                                   {0.0, 1.0}})};
  spec.modalities[1] = {2, 0.4, Matrix::from_rows({{1.0, 0.3},
                                                   {0.2, 0.9}})};
  return spec;
}

EncoderState small_encoder(std::uint64_t seed = 1) {
  EncoderConfig cfg;
  cfg.hidden = 8;
  cfg.modality_code_dim = 4;
  cfg.embed_dim = 5;
  RngStream rng(seed);
  return EncoderState({3, 2}, cfg, rng);
}

std::vector<ModalityTuple> small_batch(int n, std::uint64_t seed = 3) {
  RngStream rng(seed);
  return sample_batch(small_scene(), n, rng);
}

}  // namespace

TEST_CASE("embedding rows are unit norm") {
  EncoderState enc = small_encoder();
  auto batch = small_batch(16);
  Matrix e = enc.encode(batch);
  REQUIRE(e.rows() == 16);
  REQUIRE(e.cols() == 5);
  for (int i = 0; i < e.rows(); ++i) {
    double n = 0.0;
    for (int j = 0; j < e.cols(); ++j) n += e(i, j) * e(i, j);
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-9);
  }
}

TEST_CASE("encode is a per-row function: permutation equivariance") {
  EncoderState enc = small_encoder();
  auto batch = small_batch(6);
  Matrix e = enc.encode(batch);
  std::vector<ModalityTuple> permuted = {batch[4], batch[0], batch[5],
                                         batch[2], batch[1], batch[3]};
  Matrix ep = enc.encode(permuted);
  const int perm[] = {4, 0, 5, 2, 1, 3};
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < e.cols(); ++j) CHECK(ep(i, j) == e(perm[i], j));
}

TEST_CASE("all-absent tuples map to one fixed embedding") {
  EncoderState enc = small_encoder();
  auto batch = small_batch(3);
  std::vector<std::uint8_t> none = {0, 0};
  std::vector<ModalityTuple> absent;
  for (const auto& t : batch) absent.push_back(mask_tuple(t, none));
  Matrix e = enc.encode(absent);
  for (int i = 1; i < e.rows(); ++i)
    for (int j = 0; j < e.cols(); ++j) CHECK(e(i, j) == e(0, j));
}

TEST_CASE("masked modality content is ignored") {
  EncoderState enc = small_encoder();
  auto batch = small_batch(2);
  std::vector<std::uint8_t> drop_second = {1, 0};
  ModalityTuple a = mask_tuple(batch[0], drop_second);
  ModalityTuple b = a;
  // Re-fill the dropped modality with garbage, then mask again: encode must
  // not see it.
  b.modalities[1] = {123.0, -77.0};
  b = mask_tuple(b, drop_second);
  std::vector<ModalityTuple> pair = {a, b};
  Matrix e = enc.encode(pair);
  for (int j = 0; j < e.cols(); ++j) CHECK(e(0, j) == e(1, j));
}

TEST_CASE("encode rejects mismatched dims with both sizes in the message") {
  EncoderState enc = small_encoder();
  ModalityTuple t;
  t.modalities = {{1.0, 2.0}, {3.0, 4.0}};  // first modality should be dim 3
  t.present = {1, 1};
  std::vector<ModalityTuple> batch = {t};
  try {
    enc.encode(batch);
    FAIL("expected dim mismatch");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2") != std::string::npos);
    CHECK(msg.find("3") != std::string::npos);
  }
}

TEST_CASE("parameter count is a pure function of the dims") {
  EncoderState a = small_encoder(1);
  EncoderState b = small_encoder(999);
  CHECK(a.parameter_count() == b.parameter_count());
  // (3+1)*8+8 + 8*4+4 + (2+1)*8+8 + 8*4+4 : modality heads
  // (2*4)*8+8 + 8*5+5 : fusion
  const std::size_t expected = (4 * 8 + 8 + 8 * 4 + 4) + (3 * 8 + 8 + 8 * 4 + 4) +
                               (8 * 8 + 8 + 8 * 5 + 5);
  CHECK(a.parameter_count() == expected);
}

TEST_CASE("snapshot/restore round-trips bit-exactly") {
  EncoderState enc = small_encoder();
  auto batch = small_batch(4);
  Matrix before = enc.encode(batch);
  auto snap = enc.snapshot();

  // Mutate in place.
  enc.params().entry(0).value(0, 0) += 0.5;
  Matrix mutated = enc.encode(batch);
  CHECK(mutated.max_abs_diff(before) > 0.0);

  enc.restore(snap);
  CHECK(enc.encode(batch) == before);

  CHECK_THROWS_AS(enc.restore(std::vector<double>(3)), Error);
}

TEST_CASE("snapshots are value copies: branches evolve independently") {
  EncoderState enc = small_encoder();
  auto snap = enc.snapshot();
  EncoderState branch_a = small_encoder();
  branch_a.restore(snap);
  EncoderState branch_b = small_encoder();
  branch_b.restore(snap);
  branch_a.params().entry(2).value(0, 0) = 42.0;
  CHECK(branch_b.params().entry(2).value(0, 0) != 42.0);
  CHECK(branch_b.snapshot() == snap);
}

TEST_CASE("checkpoint stream round-trip preserves encode outputs") {
  EncoderState enc = small_encoder(17);
  auto batch = small_batch(5);
  Matrix before = enc.encode(batch);

  std::stringstream buf;
  enc.save(buf);
  EncoderState loaded = EncoderState::load(buf);
  CHECK(loaded.encode(batch) == before);
}

TEST_CASE("checkpoint rejects corruption") {
  EncoderState enc = small_encoder();
  std::stringstream buf;
  enc.save(buf);
  const std::string bytes = buf.str();

  {
    std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(EncoderState::load(truncated), Error);
  }
  {
    std::string wrong = bytes;
    wrong[0] = 'X';
    std::stringstream bad(wrong);
    try {
      EncoderState::load(bad);
      FAIL("expected magic error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("TNCE") != std::string::npos);
    }
  }
}

TEST_CASE("dropout frequency and mask structure") {
  DropoutPolicy policy;
  RngStream rng(404);
  int active = 0;
  int anchor_differs = 0;
  for (int i = 0; i < 10000; ++i) {
    DropoutMasks m = sample_dropout_masks(policy, 3, rng);
    if (m.active) {
      ++active;
      bool any_pos = false, any_anchor = false;
      for (int k = 0; k < 3; ++k) {
        any_pos = any_pos || m.posneg[k];
        any_anchor = any_anchor || m.anchor[k];
      }
      CHECK(any_pos);
      CHECK(any_anchor);
      if (m.anchor != m.posneg) ++anchor_differs;
    } else {
      CHECK(m.anchor == std::vector<std::uint8_t>({1, 1, 1}));
      CHECK(m.posneg == std::vector<std::uint8_t>({1, 1, 1}));
    }
  }
  const double freq = active / 10000.0;
  CHECK(freq >= 0.58);
  CHECK(freq <= 0.62);
  CHECK(anchor_differs > 0);
}

TEST_CASE("dropout with a single modality never drops it") {
  DropoutPolicy policy;
  RngStream rng(11);
  for (int i = 0; i < 200; ++i) {
    DropoutMasks m = sample_dropout_masks(policy, 1, rng);
    CHECK(m.anchor[0] == 1);
    CHECK(m.posneg[0] == 1);
  }
}

TEST_CASE("encode gradients pass the finite-difference check") {
  EncoderState enc = small_encoder(5);
  auto batch = small_batch(3, 21);
  std::vector<int> targets = {1, 0, 2};
  auto loss_fn = [&](bool g) {
    Tape tape(&enc.params());
    auto e = enc.encode_on_tape(tape, batch);
    auto scores = tape.contrast_scores(e, {0, 1, 2},
                                       {0, 1, 2, 1, 2, 0, 2, 0, 1}, 3);
    auto l = tape.softmax_cross_entropy(tape.scale(scores, 5.0), targets);
    if (g) tape.backward(l);
    return tape.scalar(l);
  };
  auto res = finite_difference_check(enc.params(), loss_fn, 1e-5);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("encode is deterministic given state, inputs and masks") {
  EncoderState enc = small_encoder();
  auto batch = small_batch(8);
  CHECK(enc.encode(batch) == enc.encode(batch));
}
