#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace fmridec::ad {

using Mat = Eigen::MatrixXd;

// A named, persistent tensor with accumulated gradient and optimizer slots.
// Parameters live outside any tape; tapes borrow them per step.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  Mat m;  // AdamW first moment
  Mat v;  // AdamW second moment

  Parameter() = default;
  Parameter(std::string n, Mat val) : name(std::move(n)), value(std::move(val)) {}

  void zero_grad() { grad = Mat::Zero(value.rows(), value.cols()); }
  void accumulate(const Mat& g) {
    if (grad.size() == 0) zero_grad();
    grad += g;
  }
};

class Tape;

struct Node {
  Mat value;
  Mat grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::function<void(Node&)> backprop;  // pushes node.grad into parents
  Tape* tape = nullptr;
};

// Handle to a node owned by a Tape. Cheap to copy; invalidated by Tape reset.
class Var {
 public:
  Var() = default;
  Var(Node* n) : node_(n) {}

  const Mat& val() const { return node_->value; }
  const Mat& grad() const { return node_->grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool defined() const { return node_ != nullptr; }
  Node* node() const { return node_; }

 private:
  Node* node_ = nullptr;
};

// Records the forward graph of one step. backward() runs reverse order.
// grad_enabled=false turns every leaf into a constant so generation and
// feature extraction pay no bookkeeping cost.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  // Grad-tracked leaf; read leaf.grad() after backward().
  Var leaf(Mat value);
  // Leaf bound to a persistent parameter; backward() accumulates into
  // p.grad. Repeated calls with the same parameter return the same node.
  // trainable=false (or a grad-disabled tape) degrades to a constant view.
  Var param(Parameter& p, bool trainable = true);

  Var make(Mat value, bool requires_grad, std::function<void(Node&)> backprop);

  void backward(const Var& loss);
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  bool grad_enabled_;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::unordered_map<const Parameter*, Node*> param_nodes_;
};

inline void add_grad(Node* n, const Mat& g) {
  if (!n->requires_grad) return;
  if (n->grad.size() == 0) n->grad = Mat::Zero(n->value.rows(), n->value.cols());
  n->grad += g;
}

// ---- operations ------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var cmul(Var a, Var b);   // elementwise product
Var cdiv(Var a, Var b);   // elementwise quotient
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var add_rowvec(Var a, Var row);  // broadcast a [T x C] + row [1 x C]
Var transpose(Var a);
Var rows(Var a, Eigen::Index start, Eigen::Index n);
Var cols(Var a, Eigen::Index start, Eigen::Index n);
Var vcat(const std::vector<Var>& parts);
Var hcat(const std::vector<Var>& parts);
Var softmax_rows(Var a);
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
Var gelu(Var a);
Var cw_exp(Var a);
Var cw_log(Var a);
Var cw_sqrt(Var a);
Var sum(Var a);        // 1x1
Var mean_all(Var a);   // 1x1
Var mean_rows(Var a);  // 1 x C, mean over rows

// Gather rows of an embedding table; backward scatter-adds.
Var embedding_rows(Var table, const std::vector<int>& ids);

// Token-level cross entropy over row logits. labels[i] < 0 means the row
// carries no target. mean_reduction divides by the number of scored rows.
Var cross_entropy_rows(Var logits, const std::vector<int>& labels, bool mean_reduction);

// cos(a, b) over the flattened entries (Frobenius inner product; identical
// to row-major concatenation). zero_norm is set when either side has norm
// below 1e-12, in which case the result is the constant 0.
Var cosine(Var a, Var b, bool* zero_norm = nullptr);

}  // namespace fmridec::ad
