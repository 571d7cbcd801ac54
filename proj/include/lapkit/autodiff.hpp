#pragma once

#include <Eigen/Core>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lapkit/rng.hpp"

namespace lapkit::ad {

using Mat = Eigen::MatrixXd;

// A named tensor that persists across training steps, together with its
// accumulated gradient and Adam state. Parameters live in a ParameterStore;
// tapes reference them through leaf nodes.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  Mat adam_m;
  Mat adam_v;
  long adam_t = 0;
  bool trainable = true;

  void zero_grad() { grad.setZero(); }
  void reset_optimizer_state() {
    adam_m.setZero();
    adam_v.setZero();
    adam_t = 0;
  }
};

class ParameterStore {
 public:
  ParameterStore() = default;
  // Deep copies; live tapes referencing the source are unaffected.
  ParameterStore(const ParameterStore& other);
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Parameter& add(const std::string& name, const Mat& value);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  void zero_grad();
  std::size_t size() const { return params_.size(); }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Tape;

struct Node {
  Mat value;
  Mat grad;
  bool requires_grad = false;
  bool grad_ready = false;
  Parameter* param = nullptr;
  std::function<void(Node&)> backward;
};

// Lightweight handle into a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, Node* node) : tape_(tape), node_(node) {}

  const Mat& value() const { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }
  bool requires_grad() const { return node_->requires_grad; }
  Node* node() const { return node_; }
  Tape* tape() const { return tape_; }
  explicit operator bool() const { return node_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  Node* node_ = nullptr;
};

// Reverse-mode tape. Nodes are created in topological order by construction,
// so backward() is a single reverse sweep. All arithmetic is double precision.
class Tape {
 public:
  Var constant(Mat v);
  Var constant_scalar(double v);
  // Leaf referencing a persistent parameter; gradient flows into p.grad.
  Var leaf(Parameter& p);
  // Like leaf() but detached: the value is used, no gradient flows.
  Var frozen_leaf(const Parameter& p);

  Var make_node(Mat value, bool requires_grad, std::function<void(Node&)> backward);

  // loss must be 1x1. Accumulates into every touched Parameter's grad.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  static void ensure_grad(Node& n);

 private:
  std::deque<Node> nodes_;
};

// ---- elementary ops ----
Var matmul(Var a, Var b);     // a * b
Var matmul_nt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);        // same shape
Var sub(Var a, Var b);
Var add_rowvec(Var a, Var r);  // r: 1 x cols, broadcast over rows
Var add_const(Var a, const Mat& c);
Var cmul(Var a, Var b);  // Hadamard
Var scale(Var a, double c);
Var mul_scalar(Var a, Var s);  // s: 1x1
Var sum_all(Var a);            // 1x1
Var mean_all(Var a);           // 1x1
Var row_sums(Var a);           // n x 1

// ---- nonlinearities ----
Var tanh_v(Var a);
Var sigmoid_v(Var a);
Var relu_v(Var a);
Var elu_v(Var a, double alpha = 1.0);
Var gelu_v(Var a);  // exact erf form
Var exp_v(Var a);

// ---- structure ----
Var rows_select(Var a, std::vector<int> idx);  // gather rows
Var cols_slice(Var a, Eigen::Index start, Eigen::Index len);
Var cols_select(Var a, std::vector<int> idx);
Var vcat(const std::vector<Var>& parts);  // stack rows
Var hcat(const std::vector<Var>& parts);  // concat columns

// ---- normalization / attention / losses ----
Var softmax_rows(Var a);
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-12);
// Inverted dropout; identity when !training or p == 0.
Var dropout(Var x, double p, Rng& rng, bool training);
// Mean cross-entropy of row-wise softmax against integer labels.
Var cross_entropy_mean(Var logits, const std::vector<int>& labels);

}  // namespace lapkit::ad
