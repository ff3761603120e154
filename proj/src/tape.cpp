#include "tnce/tape.hpp"

#include <algorithm>
#include <cmath>

#include "tnce/error.hpp"
#include "tnce/kernels.hpp"

namespace tnce {

int ParameterStore::add(const std::string& name, Matrix initial) {
  require(index_.find(name) == index_.end(), "ParameterStore: duplicate name '",
          name, "'");
  Matrix grad(initial.rows(), initial.cols());
  entries_.push_back(Entry{name, std::move(initial), std::move(grad)});
  const int idx = static_cast<int>(entries_.size()) - 1;
  index_[name] = idx;
  return idx;
}

int ParameterStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

std::vector<double> ParameterStore::flatten() const {
  std::vector<double> flat;
  flat.reserve(scalar_count());
  for (const auto& e : entries_)
    flat.insert(flat.end(), e.value.data(), e.value.data() + e.value.size());
  return flat;
}

void ParameterStore::assign(std::span<const double> flat) {
  require(flat.size() == scalar_count(), "ParameterStore::assign: image has ",
          flat.size(), " scalars, store holds ", scalar_count());
  std::size_t off = 0;
  for (auto& e : entries_) {
    std::copy(flat.begin() + off, flat.begin() + off + e.value.size(),
              e.value.data());
    off += e.value.size();
  }
}

void Tape::check_open(const char* op) const {
  require(!consumed_, op, ": tape already consumed by backward; build a new tape");
}

Tape::NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

const Tape::Node& Tape::node_at(NodeId id) const {
  require(id >= 0 && id < static_cast<int>(nodes_.size()),
          "Tape: node id ", id, " out of range (", nodes_.size(), " nodes)");
  return nodes_[id];
}

Matrix& Tape::grad_of(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

const Matrix& Tape::value(NodeId id) const { return node_at(id).value; }

double Tape::scalar(NodeId id) const {
  const Matrix& v = node_at(id).value;
  require(v.rows() == 1 && v.cols() == 1, "Tape::scalar: node is ",
          shape_str(v), ", expected 1x1");
  return v(0, 0);
}

Tape::NodeId Tape::input(Matrix value) {
  check_open("input");
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::NodeId Tape::param(int param_index) {
  check_open("param");
  require(params_ != nullptr, "Tape::param: tape has no parameter store");
  require(param_index >= 0 && param_index < params_->count(),
          "Tape::param: index ", param_index, " out of range");
  Node n;
  n.value = params_->entry(param_index).value;
  n.needs_grad = true;
  n.param_index = param_index;
  n.backward = [](Tape& t, Node& self) {
    if (self.grad.empty()) return;
    Matrix& acc = t.params_->entry(self.param_index).grad;
    for (std::size_t i = 0; i < acc.size(); ++i)
      acc.data()[i] += self.grad.data()[i];
  };
  return push(std::move(n));
}

Tape::NodeId Tape::affine(NodeId x, NodeId w, NodeId b) {
  check_open("affine");
  const Matrix& xv = value(x);
  const Matrix& wv = value(w);
  const Matrix& bv = value(b);
  require(xv.cols() == wv.rows(), "affine: x is ", shape_str(xv),
          " but w is ", shape_str(wv));
  require(bv.rows() == 1 && bv.cols() == wv.cols(), "affine: bias is ",
          shape_str(bv), ", expected 1x", wv.cols());
  Node n;
  n.value = Matrix(xv.rows(), wv.cols());
  kernels::gemm_nn(xv, wv, n.value);
  kernels::add_row_vector(n.value, bv);
  n.needs_grad = nodes_[x].needs_grad || nodes_[w].needs_grad || nodes_[b].needs_grad;
  n.backward = [x, w, b](Tape& t, Node& self) {
    if (self.grad.empty()) return;
    if (t.node(x).needs_grad)
      kernels::gemm_nt(self.grad, t.value(w), t.grad_of(x), /*accumulate=*/true);
    if (t.node(w).needs_grad)
      kernels::gemm_tn(t.value(x), self.grad, t.grad_of(w), /*accumulate=*/true);
    if (t.node(b).needs_grad)
      kernels::column_sums(self.grad, t.grad_of(b), /*accumulate=*/true);
  };
  return push(std::move(n));
}

Tape::NodeId Tape::relu(NodeId x) {
  check_open("relu");
  const Matrix& xv = value(x);
  Node n;
  n.value = xv;
  for (std::size_t i = 0; i < n.value.size(); ++i)
    if (n.value.data()[i] < 0.0) n.value.data()[i] = 0.0;
  n.needs_grad = nodes_[x].needs_grad;
  // Subgradient at 0 is 0.
  n.backward = [x](Tape& t, Node& self) {
    if (self.grad.empty() || !t.node(x).needs_grad) return;
    Matrix& gx = t.grad_of(x);
    const Matrix& xv = t.value(x);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xv.data()[i] > 0.0) gx.data()[i] += self.grad.data()[i];
  };
  return push(std::move(n));
}

Tape::NodeId Tape::normalize_rows(NodeId x, double eps) {
  check_open("normalize_rows");
  require(eps > 0.0, "normalize_rows: eps must be positive, got ", eps);
  const Matrix& xv = value(x);
  Node n;
  n.value = Matrix(xv.rows(), xv.cols());
  std::vector<double> norms(xv.rows());
  for (int i = 0; i < xv.rows(); ++i) {
    const double* r = xv.row(i);
    double s = 0.0;
    for (int j = 0; j < xv.cols(); ++j) s += r[j] * r[j];
    const double norm = std::sqrt(s);
    norms[i] = norm;
    const double div = std::max(norm, eps);
    double* o = n.value.row(i);
    for (int j = 0; j < xv.cols(); ++j) o[j] = r[j] / div;
  }
  n.needs_grad = nodes_[x].needs_grad;
  n.backward = [x, eps, norms = std::move(norms)](Tape& t, Node& self) {
    if (self.grad.empty() || !t.node(x).needs_grad) return;
    Matrix& gx = t.grad_of(x);
    const int cols = gx.cols();
    for (int i = 0; i < gx.rows(); ++i) {
      const double* gy = self.grad.row(i);
      double* gxr = gx.row(i);
      if (norms[i] > eps) {
        const double* y = self.value.row(i);
        double dot = 0.0;
        for (int j = 0; j < cols; ++j) dot += y[j] * gy[j];
        for (int j = 0; j < cols; ++j)
          gxr[j] += (gy[j] - y[j] * dot) / norms[i];
      } else {
        for (int j = 0; j < cols; ++j) gxr[j] += gy[j] / eps;
      }
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::concat_cols(std::span<const NodeId> parts) {
  check_open("concat_cols");
  require(!parts.empty(), "concat_cols: no inputs");
  const int rows = value(parts[0]).rows();
  int cols = 0;
  for (NodeId p : parts) {
    require(value(p).rows() == rows, "concat_cols: row mismatch, ",
            shape_str(value(p)), " vs ", rows, " rows");
    cols += value(p).cols();
  }
  Node n;
  n.value = Matrix(rows, cols);
  int off = 0;
  for (NodeId p : parts) {
    const Matrix& pv = value(p);
    for (int i = 0; i < rows; ++i)
      std::copy(pv.row(i), pv.row(i) + pv.cols(), n.value.row(i) + off);
    off += pv.cols();
    n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
  }
  n.backward = [ids = std::vector<NodeId>(parts.begin(), parts.end())](
                   Tape& t, Node& self) {
    if (self.grad.empty()) return;
    int off = 0;
    for (NodeId p : ids) {
      const int pc = t.value(p).cols();
      if (t.node(p).needs_grad) {
        Matrix& gp = t.grad_of(p);
        for (int i = 0; i < gp.rows(); ++i) {
          const double* g = self.grad.row(i) + off;
          double* o = gp.row(i);
          for (int j = 0; j < pc; ++j) o[j] += g[j];
        }
      }
      off += pc;
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::scale(NodeId x, double c) {
  check_open("scale");
  Node n;
  n.value = value(x);
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data()[i] *= c;
  n.needs_grad = nodes_[x].needs_grad;
  n.backward = [x, c](Tape& t, Node& self) {
    if (self.grad.empty() || !t.node(x).needs_grad) return;
    Matrix& gx = t.grad_of(x);
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx.data()[i] += c * self.grad.data()[i];
  };
  return push(std::move(n));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  check_open("add");
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  require(av.same_shape(bv), "add: shapes differ, ", shape_str(av), " vs ",
          shape_str(bv));
  Node n;
  n.value = av;
  for (std::size_t i = 0; i < n.value.size(); ++i)
    n.value.data()[i] += bv.data()[i];
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.backward = [a, b](Tape& t, Node& self) {
    if (self.grad.empty()) return;
    for (NodeId id : {a, b}) {
      if (!t.node(id).needs_grad) continue;
      Matrix& g = t.grad_of(id);
      for (std::size_t i = 0; i < g.size(); ++i)
        g.data()[i] += self.grad.data()[i];
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  check_open("mul");
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  require(av.same_shape(bv), "mul: shapes differ, ", shape_str(av), " vs ",
          shape_str(bv));
  Node n;
  n.value = av;
  for (std::size_t i = 0; i < n.value.size(); ++i)
    n.value.data()[i] *= bv.data()[i];
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.backward = [a, b](Tape& t, Node& self) {
    if (self.grad.empty()) return;
    if (t.node(a).needs_grad) {
      Matrix& ga = t.grad_of(a);
      const Matrix& bv2 = t.value(b);
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga.data()[i] += self.grad.data()[i] * bv2.data()[i];
    }
    if (t.node(b).needs_grad) {
      Matrix& gb = t.grad_of(b);
      const Matrix& av2 = t.value(a);
      for (std::size_t i = 0; i < gb.size(); ++i)
        gb.data()[i] += self.grad.data()[i] * av2.data()[i];
    }
  };
  return push(std::move(n));
}

Tape::NodeId Tape::sum(NodeId x) {
  check_open("sum");
  const Matrix& xv = value(x);
  Node n;
  n.value = Matrix(1, 1);
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv.data()[i];
  n.value(0, 0) = s;
  n.needs_grad = nodes_[x].needs_grad;
  n.backward = [x](Tape& t, Node& self) {
    if (self.grad.empty() || !t.node(x).needs_grad) return;
    const double g = self.grad(0, 0);
    Matrix& gx = t.grad_of(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx.data()[i] += g;
  };
  return push(std::move(n));
}

Tape::NodeId Tape::contrast_scores(NodeId embeddings,
                                   std::vector<int> query_rows,
                                   std::vector<int> candidate_rows,
                                   int group) {
  check_open("contrast_scores");
  const Matrix& e = value(embeddings);
  require(group >= 1, "contrast_scores: group must be >= 1, got ", group);
  require(candidate_rows.size() == query_rows.size() * static_cast<std::size_t>(group),
          "contrast_scores: ", candidate_rows.size(), " candidate rows, expected ",
          query_rows.size() * static_cast<std::size_t>(group));
  for (int r : query_rows)
    require(r >= 0 && r < e.rows(), "contrast_scores: query row ", r,
            " out of range [0, ", e.rows(), ")");
  for (int r : candidate_rows)
    require(r >= 0 && r < e.rows(), "contrast_scores: candidate row ", r,
            " out of range [0, ", e.rows(), ")");
  const int b = static_cast<int>(query_rows.size());
  const int d = e.cols();
  Node n;
  n.value = Matrix(b, group);
  for (int i = 0; i < b; ++i) {
    const double* q = e.row(query_rows[i]);
    double* out = n.value.row(i);
    for (int m = 0; m < group; ++m) {
      const double* c = e.row(candidate_rows[static_cast<std::size_t>(i) * group + m]);
      double acc = 0.0;
      for (int j = 0; j < d; ++j) acc += q[j] * c[j];
      out[m] = acc;
    }
  }
  n.needs_grad = nodes_[embeddings].needs_grad;
  // Backward runs serially: candidate rows repeat across anchors, and a fixed
  // accumulation order keeps gradients bit-reproducible.
  n.backward = [embeddings, qr = std::move(query_rows),
                cr = std::move(candidate_rows), group](Tape& t, Node& self) {
    if (self.grad.empty() || !t.node(embeddings).needs_grad) return;
    const Matrix& e2 = t.value(embeddings);
    Matrix& ge = t.grad_of(embeddings);
    const int d2 = e2.cols();
    for (std::size_t i = 0; i < qr.size(); ++i) {
      const double* g = self.grad.row(static_cast<int>(i));
      double* gq = ge.row(qr[i]);
      const double* q = e2.row(qr[i]);
      for (int m = 0; m < group; ++m) {
        const int crow = cr[i * group + m];
        const double gv = g[m];
        const double* c = e2.row(crow);
        double* gc = ge.row(crow);
        for (int j = 0; j < d2; ++j) {
          gq[j] += gv * c[j];
          gc[j] += gv * q[j];
        }
      }
    }
  };
  return push(std::move(n));
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (int i = 0; i < logits.rows(); ++i) {
    const double* l = logits.row(i);
    double m = l[0];
    for (int j = 1; j < logits.cols(); ++j) m = std::max(m, l[j]);
    double z = 0.0;
    double* pr = p.row(i);
    for (int j = 0; j < logits.cols(); ++j) {
      pr[j] = std::exp(l[j] - m);
      z += pr[j];
    }
    for (int j = 0; j < logits.cols(); ++j) pr[j] /= z;
  }
  return p;
}

double softmax_cross_entropy_value(const Matrix& logits,
                                   std::span<const int> targets) {
  require(static_cast<int>(targets.size()) == logits.rows(),
          "softmax_cross_entropy: ", targets.size(), " targets for ",
          logits.rows(), " rows");
  double total = 0.0;
  for (int i = 0; i < logits.rows(); ++i) {
    const int t = targets[i];
    require(t >= 0 && t < logits.cols(), "softmax_cross_entropy: target ", t,
            " out of range [0, ", logits.cols(), ") at row ", i);
    const double* l = logits.row(i);
    double m = l[0];
    for (int j = 1; j < logits.cols(); ++j) m = std::max(m, l[j]);
    double z = 0.0;
    for (int j = 0; j < logits.cols(); ++j) z += std::exp(l[j] - m);
    total += std::log(z) - (l[t] - m);
  }
  return total / logits.rows();
}

Tape::NodeId Tape::softmax_cross_entropy(NodeId logits, std::vector<int> targets) {
  check_open("softmax_cross_entropy");
  const Matrix& lv = value(logits);
  require(lv.cols() >= 1, "softmax_cross_entropy: need at least one class");
  Node n;
  n.value = Matrix(1, 1);
  n.value(0, 0) = softmax_cross_entropy_value(lv, targets);
  Matrix probs = softmax_rows(lv);
  n.needs_grad = nodes_[logits].needs_grad;
  n.backward = [logits, targets = std::move(targets),
                probs = std::move(probs)](Tape& t, Node& self) {
    if (self.grad.empty() || !t.node(logits).needs_grad) return;
    const double g = self.grad(0, 0) / probs.rows();
    Matrix& gl = t.grad_of(logits);
    for (int i = 0; i < probs.rows(); ++i) {
      const double* p = probs.row(i);
      double* gr = gl.row(i);
      for (int j = 0; j < probs.cols(); ++j) gr[j] += g * p[j];
      gr[targets[i]] -= g;
    }
  };
  return push(std::move(n));
}

void Tape::backward(NodeId loss) {
  require(!consumed_, "backward: tape already consumed; run a new forward pass");
  require(!nodes_.empty(), "backward: no forward pass recorded");
  const Matrix& lv = value(loss);
  require(lv.rows() == 1 && lv.cols() == 1, "backward: loss node is ",
          shape_str(lv), ", expected 1x1 scalar");
  if (params_) params_->zero_grad();
  grad_of(loss)(0, 0) = 1.0;
  for (int id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.backward && n.needs_grad && !n.grad.empty()) n.backward(*this, n);
  }
  consumed_ = true;
}

}  // namespace tnce
