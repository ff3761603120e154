#include "tnce/encoder.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "tnce/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace tnce {

namespace {

constexpr char kMagic[4] = {'T', 'N', 'C', 'E'};
constexpr std::uint32_t kFormatVersion = 1;

Matrix uniform_init(int rows, int cols, int fan_in, RngStream& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      m(i, j) = bound * (2.0 * rng.uniform() - 1.0);
  return m;
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(in.good(), "checkpoint: truncated while reading ", what);
  return v;
}

}  // namespace

EncoderState::EncoderState(std::vector<int> modality_dims, EncoderConfig cfg)
    : modality_dims_(std::move(modality_dims)), cfg_(cfg) {
  require(!modality_dims_.empty(), "EncoderState: no modalities");
  for (std::size_t k = 0; k < modality_dims_.size(); ++k)
    require(modality_dims_[k] >= 1, "EncoderState: modality ", k, " has dim ",
            modality_dims_[k]);
  require(cfg_.hidden >= 1 && cfg_.modality_code_dim >= 1 && cfg_.embed_dim >= 1,
          "EncoderState: dims must be positive (hidden ", cfg_.hidden,
          ", code ", cfg_.modality_code_dim, ", embed ", cfg_.embed_dim, ")");
}

EncoderState::EncoderState(std::vector<int> modality_dims, EncoderConfig cfg,
                           RngStream& init_rng)
    : EncoderState(std::move(modality_dims), cfg) {
  const int h = cfg_.hidden, dm = cfg_.modality_code_dim, d = cfg_.embed_dim;
  for (std::size_t k = 0; k < modality_dims_.size(); ++k) {
    const int din = modality_dims_[k] + 1;  // +1 carries the present flag
    const std::string tag = "mod" + std::to_string(k);
    ModalityHead head;
    head.w1 = params_.add(tag + ".w1", uniform_init(din, h, din, init_rng));
    head.b1 = params_.add(tag + ".b1", uniform_init(1, h, din, init_rng));
    head.w2 = params_.add(tag + ".w2", uniform_init(h, dm, h, init_rng));
    head.b2 = params_.add(tag + ".b2", uniform_init(1, dm, h, init_rng));
    heads_.push_back(head);
  }
  const int fin = static_cast<int>(modality_dims_.size()) * dm;
  fusion_w1_ = params_.add("fusion.w1", uniform_init(fin, h, fin, init_rng));
  fusion_b1_ = params_.add("fusion.b1", uniform_init(1, h, fin, init_rng));
  fusion_w2_ = params_.add("fusion.w2", uniform_init(h, d, h, init_rng));
  fusion_b2_ = params_.add("fusion.b2", uniform_init(1, d, h, init_rng));
}

Tape::NodeId EncoderState::encode_on_tape(
    Tape& tape, std::span<const ModalityTuple> batch) const {
  require(!batch.empty(), "encode: empty batch");
  require(tape.params() == &params_,
          "encode: tape is bound to a different parameter store");
  const int b = static_cast<int>(batch.size());

  std::vector<Tape::NodeId> codes;
  codes.reserve(heads_.size());
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    const int dk = modality_dims_[k];
    Matrix input(b, dk + 1);
    for (int i = 0; i < b; ++i) {
      const ModalityTuple& t = batch[i];
      require(static_cast<int>(t.modalities.size()) == modality_count(),
              "encode: tuple ", i, " has ", t.modalities.size(),
              " modalities, encoder expects ", modality_count());
      require(static_cast<int>(t.modalities[k].size()) == dk,
              "encode: tuple ", i, " modality ", k, " has dim ",
              t.modalities[k].size(), ", encoder expects ", dk);
      const bool present = t.present[k] != 0;
      double* row = input.row(i);
      if (present) {
        for (int j = 0; j < dk; ++j) row[j] = t.modalities[k][j];
        row[dk] = 1.0;
      }  // absent: zero placeholder, zero flag (rows start zeroed)
    }
    const ModalityHead& head = heads_[k];
    auto x = tape.input(std::move(input));
    auto h = tape.relu(tape.affine(x, tape.param(head.w1), tape.param(head.b1)));
    codes.push_back(tape.affine(h, tape.param(head.w2), tape.param(head.b2)));
  }
  auto fused_in = tape.concat_cols(codes);
  auto fh = tape.relu(
      tape.affine(fused_in, tape.param(fusion_w1_), tape.param(fusion_b1_)));
  auto out = tape.affine(fh, tape.param(fusion_w2_), tape.param(fusion_b2_));
  if (cfg_.normalize_output) out = tape.normalize_rows(out, cfg_.norm_eps);
  return out;
}

Matrix EncoderState::encode(std::span<const ModalityTuple> batch) const {
  Tape tape(const_cast<ParameterStore*>(&params_));
  return tape.value(encode_on_tape(tape, batch));
}

void EncoderState::restore(std::span<const double> image) {
  params_.assign(image);
}

void EncoderState::save(std::ostream& out) const {
  out.write(kMagic, 4);
  write_pod(out, kFormatVersion);
  write_pod(out, static_cast<std::uint32_t>(modality_dims_.size()));
  for (int d : modality_dims_) write_pod(out, static_cast<std::uint32_t>(d));
  write_pod(out, static_cast<std::uint32_t>(cfg_.hidden));
  write_pod(out, static_cast<std::uint32_t>(cfg_.modality_code_dim));
  write_pod(out, static_cast<std::uint32_t>(cfg_.embed_dim));
  write_pod(out, static_cast<std::uint8_t>(cfg_.normalize_output ? 1 : 0));
  write_pod(out, cfg_.norm_eps);
  const std::vector<double> flat = params_.flatten();
  write_pod(out, static_cast<std::uint64_t>(flat.size()));
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
  require(out.good(), "checkpoint: write failed");
}

EncoderState EncoderState::load(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  require(in.good() && std::memcmp(magic, kMagic, 4) == 0,
          "checkpoint: bad magic header, expected \"TNCE\"");
  const auto version = read_pod<std::uint32_t>(in, "format version");
  require(version == kFormatVersion, "checkpoint: format version ", version,
          " unsupported, expected ", kFormatVersion);
  const auto k = read_pod<std::uint32_t>(in, "modality count");
  require(k >= 1 && k <= 4096, "checkpoint: implausible modality count ", k);
  std::vector<int> dims(k);
  for (auto& d : dims)
    d = static_cast<int>(read_pod<std::uint32_t>(in, "modality dim"));
  EncoderConfig cfg;
  cfg.hidden = static_cast<int>(read_pod<std::uint32_t>(in, "hidden dim"));
  cfg.modality_code_dim =
      static_cast<int>(read_pod<std::uint32_t>(in, "code dim"));
  cfg.embed_dim = static_cast<int>(read_pod<std::uint32_t>(in, "embed dim"));
  cfg.normalize_output = read_pod<std::uint8_t>(in, "normalize flag") != 0;
  cfg.norm_eps = read_pod<double>(in, "norm eps");

  RngStream dummy(0);
  EncoderState state(dims, cfg, dummy);
  const auto count = read_pod<std::uint64_t>(in, "parameter count");
  require(count == state.parameter_count(), "checkpoint: holds ", count,
          " parameters but dims (", k, " modalities, hidden ", cfg.hidden,
          ", code ", cfg.modality_code_dim, ", embed ", cfg.embed_dim,
          ") imply ", state.parameter_count());
  std::vector<double> flat(count);
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  require(in.good(), "checkpoint: truncated parameter image");
  state.restore(flat);
  return state;
}

DropoutMasks sample_dropout_masks(const DropoutPolicy& policy,
                                  int modality_count, RngStream& rng) {
  require(modality_count >= 1, "sample_dropout_masks: modality count ",
          modality_count);
  DropoutMasks masks;
  masks.anchor.assign(modality_count, 1);
  masks.posneg.assign(modality_count, 1);
  masks.active = rng.bernoulli(policy.batch_probability);
  if (!masks.active) return masks;

  auto draw_mask = [&](std::vector<std::uint8_t>& mask) {
    // Each modality kept with probability 1/2, redrawn until one survives.
    for (;;) {
      bool any = false;
      for (int k = 0; k < modality_count; ++k) {
        mask[k] = rng.bernoulli(0.5) ? 1 : 0;
        any = any || mask[k];
      }
      if (any) return;
    }
  };
  draw_mask(masks.posneg);
  draw_mask(masks.anchor);
  return masks;
}

}  // namespace tnce
