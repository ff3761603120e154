#include "tnce/synthgen.hpp"

#include <algorithm>
#include <cmath>

#include "tnce/error.hpp"

namespace tnce {

int SceneSpec::total_dim() const {
  int d = 0;
  for (const auto& m : modalities) d += m.dim;
  return d;
}

std::vector<int> SceneSpec::modality_dims() const {
  std::vector<int> dims;
  dims.reserve(modalities.size());
  for (const auto& m : modalities) dims.push_back(m.dim);
  return dims;
}

void SceneSpec::validate() const {
  require(latent_dim >= 1, "SceneSpec: latent_dim must be >= 1, got ", latent_dim);
  require(!modalities.empty(), "SceneSpec: at least one modality required");
  for (std::size_t k = 0; k < modalities.size(); ++k) {
    const auto& m = modalities[k];
    require(m.dim >= 1, "SceneSpec: modality ", k, " has dim ", m.dim);
    require(m.noise_std >= 0.0 && std::isfinite(m.noise_std),
            "SceneSpec: modality ", k, " has noise_std ", m.noise_std);
    require(m.mixing.rows() == m.dim && m.mixing.cols() == latent_dim,
            "SceneSpec: modality ", k, " mixing is ", shape_str(m.mixing),
            ", expected ", m.dim, "x", latent_dim);
    require(m.mixing.all_finite(), "SceneSpec: modality ", k,
            " mixing has non-finite entries");
  }
}

ModalityTuple mask_tuple(const ModalityTuple& t,
                         std::span<const std::uint8_t> mask) {
  require(mask.size() == t.modalities.size(), "mask_tuple: mask has ",
          mask.size(), " entries for ", t.modalities.size(), " modalities");
  ModalityTuple out = t;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (mask[k] && t.present[k]) continue;
    out.present[k] = 0;
    std::fill(out.modalities[k].begin(), out.modalities[k].end(), 0.0);
  }
  return out;
}

AugmentParams AugmentParams::none(int modality_count,
                                  std::vector<AugmentMagnitudes> bounds,
                                  AugmentRole role) {
  AugmentParams p;
  p.per_modality.assign(modality_count, AugmentMagnitudes{});
  p.bounds = std::move(bounds);
  p.role = role;
  require(static_cast<int>(p.bounds.size()) == modality_count,
          "AugmentParams::none: ", p.bounds.size(), " bounds for ",
          modality_count, " modalities");
  return p;
}

std::vector<double> AugmentParams::as_vector() const {
  std::vector<double> v;
  v.reserve(per_modality.size() * 3);
  for (const auto& m : per_modality) {
    v.push_back(m.noise_std);
    v.push_back(m.mask_fraction);
    v.push_back(m.rotation_deg);
  }
  return v;
}

std::vector<double> AugmentParams::bounds_vector() const {
  std::vector<double> v;
  v.reserve(bounds.size() * 3);
  for (const auto& m : bounds) {
    v.push_back(m.noise_std);
    v.push_back(m.mask_fraction);
    v.push_back(m.rotation_deg);
  }
  return v;
}

AugmentParams AugmentParams::with_vector(std::span<const double> coords) const {
  require(coords.size() == per_modality.size() * 3,
          "AugmentParams::with_vector: got ", coords.size(),
          " coordinates, expected ", per_modality.size() * 3);
  AugmentParams out = *this;
  for (std::size_t k = 0; k < per_modality.size(); ++k) {
    out.per_modality[k].noise_std = coords[3 * k];
    out.per_modality[k].mask_fraction = coords[3 * k + 1];
    out.per_modality[k].rotation_deg = coords[3 * k + 2];
  }
  return out;
}

void AugmentParams::validate() const {
  require(bounds.size() == per_modality.size(), "AugmentParams: ",
          bounds.size(), " bounds for ", per_modality.size(), " modalities");
  for (std::size_t k = 0; k < per_modality.size(); ++k) {
    const auto& m = per_modality[k];
    const auto& b = bounds[k];
    auto in_range = [](double v, double hi) {
      return std::isfinite(v) && v >= 0.0 && v <= hi;
    };
    require(in_range(m.noise_std, b.noise_std), "AugmentParams: modality ", k,
            " noise_std ", m.noise_std, " outside [0, ", b.noise_std, "]");
    require(in_range(m.mask_fraction, b.mask_fraction),
            "AugmentParams: modality ", k, " mask_fraction ", m.mask_fraction,
            " outside [0, ", b.mask_fraction, "]");
    require(in_range(m.rotation_deg, b.rotation_deg),
            "AugmentParams: modality ", k, " rotation_deg ", m.rotation_deg,
            " outside [0, ", b.rotation_deg, "]");
  }
}

std::vector<ModalityTuple> sample_batch(const SceneSpec& spec, int n,
                                        RngStream& rng, std::int64_t id_base) {
  spec.validate();
  require(n >= 1, "sample_batch: n must be >= 1, got ", n);
  const int k_count = spec.modality_count();
  std::vector<ModalityTuple> out(n);
  std::vector<double> z(spec.latent_dim);
  for (int i = 0; i < n; ++i) {
    for (double& zc : z) zc = rng.normal();
    ModalityTuple& t = out[i];
    t.scene_id = id_base + i;
    t.present.assign(k_count, 1);
    t.modalities.resize(k_count);
    for (int k = 0; k < k_count; ++k) {
      const ModalitySpec& m = spec.modalities[k];
      std::vector<double>& v = t.modalities[k];
      v.assign(m.dim, 0.0);
      for (int r = 0; r < m.dim; ++r) {
        double acc = 0.0;
        for (int c = 0; c < spec.latent_dim; ++c) acc += m.mixing(r, c) * z[c];
        v[r] = acc + m.noise_std * rng.normal();
      }
    }
  }
  return out;
}

ModalityTuple augment_tuple(const ModalityTuple& t, const AugmentParams& params,
                            RngStream& rng) {
  params.validate();
  require(params.per_modality.size() == t.modalities.size(),
          "augment_tuple: params cover ", params.per_modality.size(),
          " modalities, tuple has ", t.modalities.size());
  ModalityTuple out = t;
  for (std::size_t k = 0; k < t.modalities.size(); ++k) {
    const AugmentMagnitudes& mag = params.per_modality[k];
    std::vector<double>& v = out.modalities[k];
    const bool present = t.present[k] != 0;
    // Rotate consecutive coordinate pairs; an odd trailing coordinate passes
    // through.
    if (present && mag.rotation_deg != 0.0) {
      const double rad = mag.rotation_deg * 3.14159265358979323846 / 180.0;
      const double c = std::cos(rad), s = std::sin(rad);
      for (std::size_t j = 0; j + 1 < v.size(); j += 2) {
        const double a = v[j], b = v[j + 1];
        v[j] = c * a - s * b;
        v[j + 1] = s * a + c * b;
      }
    }
    // Noise and mask draws are consumed for every coordinate regardless of
    // magnitude so that draw counts never depend on parameter values.
    for (std::size_t j = 0; j < v.size(); ++j) {
      const double noise = mag.noise_std * rng.normal();
      if (present) v[j] += noise;
    }
    for (std::size_t j = 0; j < v.size(); ++j) {
      const bool masked = rng.uniform() < mag.mask_fraction;
      if (present && masked) v[j] = 0.0;
    }
  }
  return out;
}

Matrix joint_covariance(const SceneSpec& spec) {
  spec.validate();
  const int d = spec.total_dim();
  Matrix cov(d, d);
  int row_off = 0;
  for (int a = 0; a < spec.modality_count(); ++a) {
    const ModalitySpec& ma = spec.modalities[a];
    int col_off = 0;
    for (int b = 0; b < spec.modality_count(); ++b) {
      const ModalitySpec& mb = spec.modalities[b];
      for (int i = 0; i < ma.dim; ++i)
        for (int j = 0; j < mb.dim; ++j) {
          double acc = 0.0;
          for (int l = 0; l < spec.latent_dim; ++l)
            acc += ma.mixing(i, l) * mb.mixing(j, l);
          cov(row_off + i, col_off + j) = acc;
        }
      col_off += mb.dim;
    }
    for (int i = 0; i < ma.dim; ++i)
      cov(row_off + i, row_off + i) += ma.noise_std * ma.noise_std;
    row_off += ma.dim;
  }
  return cov;
}

double logdet_spd(Matrix m) {
  require(m.rows() == m.cols(), "logdet_spd: matrix is ", shape_str(m));
  const int n = m.rows();
  double logdet = 0.0;
  // In-place Cholesky, lower triangle.
  for (int j = 0; j < n; ++j) {
    double d = m(j, j);
    for (int k = 0; k < j; ++k) d -= m(j, k) * m(j, k);
    require(d > 0.0 && std::isfinite(d),
            "logdet_spd: covariance is singular or not positive definite "
            "(pivot ", d, " at index ", j,
            "); add noise jitter (every sigma_k > 0) to make it nonsingular");
    const double root = std::sqrt(d);
    m(j, j) = root;
    logdet += 2.0 * std::log(root);
    for (int i = j + 1; i < n; ++i) {
      double acc = m(i, j);
      for (int k = 0; k < j; ++k) acc -= m(i, k) * m(j, k);
      m(i, j) = acc / root;
    }
  }
  return logdet;
}

namespace {

Matrix submatrix(const Matrix& m, int row_off, int col_off, int rows, int cols) {
  Matrix out(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out(i, j) = m(row_off + i, col_off + j);
  return out;
}

}  // namespace

double analytic_pair_mi(const SceneSpec& spec, int k) {
  spec.validate();
  require(k >= 0 && k < spec.modality_count(), "analytic_pair_mi: modality ",
          k, " out of range [0, ", spec.modality_count(), ")");
  require(spec.modality_count() >= 2,
          "analytic_pair_mi: need at least two modalities");
  const Matrix joint = joint_covariance(spec);
  int off = 0;
  for (int i = 0; i < k; ++i) off += spec.modalities[i].dim;
  const int dk = spec.modalities[k].dim;
  const int d = spec.total_dim();

  const Matrix own = submatrix(joint, off, off, dk, dk);
  // Complement block: everything except modality k, order preserved.
  Matrix rest(d - dk, d - dk);
  {
    std::vector<int> idx;
    idx.reserve(d - dk);
    for (int i = 0; i < d; ++i)
      if (i < off || i >= off + dk) idx.push_back(i);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < idx.size(); ++j)
        rest(static_cast<int>(i), static_cast<int>(j)) = joint(idx[i], idx[j]);
  }
  return 0.5 * (logdet_spd(own) + logdet_spd(rest) - logdet_spd(joint));
}

double analytic_view_mi(const SceneSpec& spec,
                        std::span<const double> view_noise_std) {
  spec.validate();
  require(view_noise_std.size() == spec.modalities.size(),
          "analytic_view_mi: ", view_noise_std.size(), " noise stds for ",
          spec.modalities.size(), " modalities");
  const Matrix cov = joint_covariance(spec);
  const int d = spec.total_dim();
  // I(t; t + e) = 1/2 (logdet(Sigma + D) - logdet(D)) with D the diagonal
  // augmentation-noise covariance; the Schur complement of the two-view joint.
  Matrix noised = cov;
  double logdet_noise = 0.0;
  int off = 0;
  for (int k = 0; k < spec.modality_count(); ++k) {
    const double b = view_noise_std[k];
    require(b > 0.0 && std::isfinite(b),
            "analytic_view_mi: view noise for modality ", k, " is ", b,
            "; the two-view covariance is singular at zero augmentation "
            "noise (the positive is a deterministic copy), add jitter");
    for (int i = 0; i < spec.modalities[k].dim; ++i) {
      noised(off + i, off + i) += b * b;
      logdet_noise += 2.0 * std::log(b);
    }
    off += spec.modalities[k].dim;
  }
  (void)d;
  return 0.5 * (logdet_spd(noised) - logdet_noise);
}

SceneSpec with_added_noise(const SceneSpec& spec,
                           std::span<const double> extra_std) {
  require(extra_std.size() == spec.modalities.size(), "with_added_noise: ",
          extra_std.size(), " stds for ", spec.modalities.size(),
          " modalities");
  SceneSpec out = spec;
  for (std::size_t k = 0; k < out.modalities.size(); ++k) {
    require(extra_std[k] >= 0.0, "with_added_noise: negative std ",
            extra_std[k], " for modality ", k);
    const double s = out.modalities[k].noise_std;
    out.modalities[k].noise_std = std::sqrt(s * s + extra_std[k] * extra_std[k]);
  }
  return out;
}

double empirical_mi_estimate(std::span<const double> a,
                             std::span<const double> b, int bins) {
  require(bins >= 2, "empirical_mi_estimate: need >= 2 bins, got ", bins);
  require(a.size() == b.size(), "empirical_mi_estimate: ", a.size(), " vs ",
          b.size(), " samples");
  const std::size_t need = static_cast<std::size_t>(bins) * bins;
  require(a.size() >= need, "empirical_mi_estimate: ", a.size(),
          " samples, need at least bins^2 = ", need);

  auto edges = [bins](std::span<const double> x, double& lo, double& width) {
    lo = x[0];
    double hi = x[0];
    for (double v : x) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    width = (hi - lo) / bins;
    if (width <= 0.0) width = 1.0;  // constant input: everything in bin 0
  };
  double alo, awidth, blo, bwidth;
  edges(a, alo, awidth);
  edges(b, blo, bwidth);
  auto bin_of = [bins](double v, double lo, double width) {
    int idx = static_cast<int>((v - lo) / width);
    return std::clamp(idx, 0, bins - 1);
  };

  std::vector<double> counts(static_cast<std::size_t>(bins) * bins, 0.0);
  std::vector<double> pa(bins, 0.0), pb(bins, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int ia = bin_of(a[i], alo, awidth);
    const int ib = bin_of(b[i], blo, bwidth);
    counts[static_cast<std::size_t>(ia) * bins + ib] += 1.0;
    pa[ia] += 1.0;
    pb[ib] += 1.0;
  }
  const double n = static_cast<double>(a.size());
  double mi = 0.0;
  for (int i = 0; i < bins; ++i)
    for (int j = 0; j < bins; ++j) {
      const double c = counts[static_cast<std::size_t>(i) * bins + j];
      if (c == 0.0) continue;
      mi += (c / n) * std::log(c * n / (pa[i] * pb[j]));
    }
  return mi;
}

ValidationSet make_validation_set(const SceneSpec& spec, int m, RngKey key) {
  require(m >= 2, "make_validation_set: need at least 2 tuples, got ", m);
  ValidationSet val;
  RngStream tuples_rng = key.child("tuples").stream();
  val.tuples = sample_batch(spec, m, tuples_rng);
  val.augment_seed = key.child("augment").value;
  return val;
}

std::vector<std::vector<double>> augmented_modality(const ValidationSet& val,
                                                    int k,
                                                    const AugmentParams& zeta) {
  require(k >= 0 && !val.tuples.empty() &&
              k < static_cast<int>(val.tuples[0].modalities.size()),
          "augmented_modality: modality ", k, " out of range");
  std::vector<std::vector<double>> out;
  out.reserve(val.tuples.size());
  RngStream rng = RngKey{val.augment_seed}.stream();
  for (const ModalityTuple& t : val.tuples) {
    ModalityTuple aug = augment_tuple(t, zeta, rng);
    out.push_back(std::move(aug.modalities[k]));
  }
  return out;
}

}  // namespace tnce
