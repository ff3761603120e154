#pragma once

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tnce/matrix.hpp"

namespace tnce {

// Named registry of trainable parameters with gradient accumulators.
// Registry order (insertion order) is the canonical order for snapshots and
// checkpoints.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Matrix value;
    Matrix grad;  // same shape as value, zeroed on creation
  };

  int add(const std::string& name, Matrix initial);
  int index_of(const std::string& name) const;  // -1 if absent
  int count() const { return static_cast<int>(entries_.size()); }
  Entry& entry(int index) { return entries_[index]; }
  const Entry& entry(int index) const { return entries_[index]; }

  void zero_grad();
  std::size_t scalar_count() const;

  // Flat parameter image in registry order, and its inverse.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

// Define-by-run reverse-mode tape over Matrix values. A tape records one
// forward pass as a topologically ordered node list; backward() visits the
// list once in reverse, accumulating into the ParameterStore's gradients.
// A tape is single-owner and single-use: rebuild per batch.
class Tape {
 public:
  using NodeId = int;

  explicit Tape(ParameterStore* params = nullptr) : params_(params) {}

  // Leaves
  NodeId input(Matrix value);          // constant, no gradient
  NodeId param(int param_index);       // trainable leaf bound to the store

  // Primitives
  NodeId affine(NodeId x, NodeId w, NodeId b);  // x*w + rowwise b (b is 1xN)
  NodeId relu(NodeId x);
  NodeId normalize_rows(NodeId x, double eps);
  NodeId concat_cols(std::span<const NodeId> parts);
  NodeId scale(NodeId x, double c);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);  // elementwise
  NodeId sum(NodeId x);            // 1x1 total
  // scores[i, m] = rows[query_rows[i]] . rows[candidate_rows[i*group + m]]
  // of one embeddings node; used to score each anchor against its own
  // candidate list.
  NodeId contrast_scores(NodeId embeddings, std::vector<int> query_rows,
                         std::vector<int> candidate_rows, int group);
  NodeId softmax_cross_entropy(NodeId logits, std::vector<int> targets);

  const Matrix& value(NodeId id) const;
  double scalar(NodeId id) const;  // value of a 1x1 node
  int node_count() const { return static_cast<int>(nodes_.size()); }

  // Zeroes the store's gradient accumulators, then runs the reverse sweep
  // from `loss` (must be 1x1). The tape is consumed afterwards.
  void backward(NodeId loss);
  bool consumed() const { return consumed_; }

  ParameterStore* params() { return params_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // allocated lazily during backward
    bool needs_grad = false;
    int param_index = -1;
    std::function<void(Tape&, Node&)> backward;
  };

  NodeId push(Node node);
  Node& node(NodeId id) { return nodes_[id]; }
  const Node& node_at(NodeId id) const;
  Matrix& grad_of(NodeId id);  // allocates zeros on first touch
  void check_open(const char* op) const;

  std::vector<Node> nodes_;
  ParameterStore* params_ = nullptr;
  bool consumed_ = false;
};

// Row-wise numerically stabilized softmax (max subtraction). Shared by the
// loss primitive and by evaluation-only scoring paths.
Matrix softmax_rows(const Matrix& logits);

// Mean over rows of -log softmax(logits)[target], computed stably without
// materializing probabilities.
double softmax_cross_entropy_value(const Matrix& logits,
                                   std::span<const int> targets);

}  // namespace tnce
