#include "lapkit/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace lapkit::ad {

ParameterStore::ParameterStore(const ParameterStore& other) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_)
    params_.push_back(std::make_unique<Parameter>(*p));
}

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
  if (this != &other) {
    ParameterStore copy(other);
    params_ = std::move(copy.params_);
  }
  return *this;
}

Parameter& ParameterStore::add(const std::string& name, Eigen::Index rows,
                               Eigen::Index cols) {
  return add(name, Mat::Zero(rows, cols));
}

Parameter& ParameterStore::add(const std::string& name, const Mat& value) {
  if (find(name) != nullptr)
    throw std::invalid_argument("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = value;
  p->grad = Mat::Zero(value.rows(), value.cols());
  p->adam_m = Mat::Zero(value.rows(), value.cols());
  p->adam_v = Mat::Zero(value.rows(), value.cols());
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

Parameter& ParameterStore::at(const std::string& name) {
  Parameter* p = find(name);
  if (!p) throw std::out_of_range("no such parameter: " + name);
  return *p;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  const Parameter* p = find(name);
  if (!p) throw std::out_of_range("no such parameter: " + name);
  return *p;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void Tape::ensure_grad(Node& n) {
  if (!n.grad_ready) {
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad_ready = true;
  }
}

Var Tape::constant(Mat v) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.value = std::move(v);
  return Var(this, &n);
}

Var Tape::constant_scalar(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Var Tape::leaf(Parameter& p) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.param = p.trainable ? &p : nullptr;
  return Var(this, &n);
}

Var Tape::frozen_leaf(const Parameter& p) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.value = p.value;
  return Var(this, &n);
}

Var Tape::make_node(Mat value, bool requires_grad,
                    std::function<void(Node&)> backward) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  return Var(this, &n);
}

void Tape::backward(Var loss) {
  Node* root = loss.node();
  if (root->value.rows() != 1 || root->value.cols() != 1)
    throw std::invalid_argument("backward() expects a 1x1 loss node");
  ensure_grad(*root);
  root->grad(0, 0) = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = *it;
    if (!n.requires_grad || !n.grad_ready) continue;
    if (n.backward) n.backward(n);
    if (n.param) n.param->grad += n.grad;
  }
}

namespace {

bool rg(Var a) { return a.requires_grad(); }
bool rg(Var a, Var b) { return a.requires_grad() || b.requires_grad(); }

void accum(Node* n, const Mat& g) {
  if (!n->requires_grad) return;
  Tape::ensure_grad(*n);
  n->grad += g;
}

// Elementwise op with derivative expressed in terms of (x, y).
template <typename F, typename DF>
Var unary_elementwise(Var a, F f, DF df) {
  Mat y = a.value().unaryExpr(f);
  Node* an = a.node();
  Mat yv = y;  // captured for backward forms that use the output
  return a.tape()->make_node(std::move(y), rg(a), [an, df, yv](Node& n) {
    Tape::ensure_grad(*an);
    for (Eigen::Index j = 0; j < n.grad.cols(); ++j)
      for (Eigen::Index i = 0; i < n.grad.rows(); ++i)
        an->grad(i, j) += n.grad(i, j) * df(an->value(i, j), yv(i, j));
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul shape mismatch");
  Node* an = a.node();
  Node* bn = b.node();
  Mat y = a.value() * b.value();
  return a.tape()->make_node(std::move(y), rg(a, b), [an, bn](Node& n) {
    if (an->requires_grad) {
      Tape::ensure_grad(*an);
      an->grad.noalias() += n.grad * bn->value.transpose();
    }
    if (bn->requires_grad) {
      Tape::ensure_grad(*bn);
      bn->grad.noalias() += an->value.transpose() * n.grad;
    }
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("matmul_nt shape mismatch");
  Node* an = a.node();
  Node* bn = b.node();
  Mat y = a.value() * b.value().transpose();
  return a.tape()->make_node(std::move(y), rg(a, b), [an, bn](Node& n) {
    if (an->requires_grad) {
      Tape::ensure_grad(*an);
      an->grad.noalias() += n.grad * bn->value;
    }
    if (bn->requires_grad) {
      Tape::ensure_grad(*bn);
      bn->grad.noalias() += n.grad.transpose() * an->value;
    }
  });
}

Var add(Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("add shape mismatch");
  Node* an = a.node();
  Node* bn = b.node();
  return a.tape()->make_node(a.value() + b.value(), rg(a, b), [an, bn](Node& n) {
    accum(an, n.grad);
    accum(bn, n.grad);
  });
}

Var sub(Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("sub shape mismatch");
  Node* an = a.node();
  Node* bn = b.node();
  return a.tape()->make_node(a.value() - b.value(), rg(a, b), [an, bn](Node& n) {
    accum(an, n.grad);
    accum(bn, -n.grad);
  });
}

Var add_rowvec(Var a, Var r) {
  if (r.rows() != 1 || r.cols() != a.cols())
    throw std::invalid_argument("add_rowvec shape mismatch");
  Node* an = a.node();
  Node* rn = r.node();
  Mat y = a.value().rowwise() + r.value().row(0);
  return a.tape()->make_node(std::move(y), rg(a, r), [an, rn](Node& n) {
    accum(an, n.grad);
    if (rn->requires_grad) {
      Tape::ensure_grad(*rn);
      rn->grad.row(0) += n.grad.colwise().sum();
    }
  });
}

Var add_const(Var a, const Mat& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols())
    throw std::invalid_argument("add_const shape mismatch");
  Node* an = a.node();
  return a.tape()->make_node(a.value() + c, rg(a),
                             [an](Node& n) { accum(an, n.grad); });
}

Var cmul(Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("cmul shape mismatch");
  Node* an = a.node();
  Node* bn = b.node();
  Mat y = a.value().cwiseProduct(b.value());
  return a.tape()->make_node(std::move(y), rg(a, b), [an, bn](Node& n) {
    if (an->requires_grad) accum(an, n.grad.cwiseProduct(bn->value));
    if (bn->requires_grad) accum(bn, n.grad.cwiseProduct(an->value));
  });
}

Var scale(Var a, double c) {
  Node* an = a.node();
  return a.tape()->make_node(a.value() * c, rg(a),
                             [an, c](Node& n) { accum(an, n.grad * c); });
}

Var mul_scalar(Var a, Var s) {
  if (s.rows() != 1 || s.cols() != 1)
    throw std::invalid_argument("mul_scalar expects 1x1 scalar");
  Node* an = a.node();
  Node* sn = s.node();
  const double sv = s.scalar();
  return a.tape()->make_node(a.value() * sv, rg(a, s), [an, sn, sv](Node& n) {
    if (an->requires_grad) accum(an, n.grad * sv);
    if (sn->requires_grad) {
      Tape::ensure_grad(*sn);
      sn->grad(0, 0) += n.grad.cwiseProduct(an->value).sum();
    }
  });
}

Var sum_all(Var a) {
  Node* an = a.node();
  Mat y(1, 1);
  y(0, 0) = a.value().sum();
  return a.tape()->make_node(std::move(y), rg(a), [an](Node& n) {
    if (!an->requires_grad) return;
    Tape::ensure_grad(*an);
    an->grad.array() += n.grad(0, 0);
  });
}

Var mean_all(Var a) {
  const double m = static_cast<double>(a.rows() * a.cols());
  return scale(sum_all(a), 1.0 / m);
}

Var row_sums(Var a) {
  Node* an = a.node();
  Mat y = a.value().rowwise().sum();
  return a.tape()->make_node(std::move(y), rg(a), [an](Node& n) {
    if (!an->requires_grad) return;
    Tape::ensure_grad(*an);
    an->grad.colwise() += n.grad.col(0);
  });
}

Var tanh_v(Var a) {
  return unary_elementwise(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid_v(Var a) {
  return unary_elementwise(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu_v(Var a) {
  return unary_elementwise(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var elu_v(Var a, double alpha) {
  return unary_elementwise(
      a, [alpha](double x) { return x > 0.0 ? x : alpha * (std::exp(x) - 1.0); },
      [alpha](double x, double y) { return x > 0.0 ? 1.0 : y + alpha; });
}

Var gelu_v(Var a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary_elementwise(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

Var exp_v(Var a) {
  return unary_elementwise(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var rows_select(Var a, std::vector<int> idx) {
  Node* an = a.node();
  Mat y(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a.rows())
      throw std::out_of_range("rows_select index out of range");
    y.row(static_cast<Eigen::Index>(i)) = a.value().row(idx[i]);
  }
  return a.tape()->make_node(std::move(y), rg(a),
                             [an, idx = std::move(idx)](Node& n) {
                               if (!an->requires_grad) return;
                               Tape::ensure_grad(*an);
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                 an->grad.row(idx[i]) +=
                                     n.grad.row(static_cast<Eigen::Index>(i));
                             });
}

Var cols_slice(Var a, Eigen::Index start, Eigen::Index len) {
  if (start < 0 || start + len > a.cols())
    throw std::out_of_range("cols_slice out of range");
  Node* an = a.node();
  Mat y = a.value().middleCols(start, len);
  return a.tape()->make_node(std::move(y), rg(a), [an, start, len](Node& n) {
    if (!an->requires_grad) return;
    Tape::ensure_grad(*an);
    an->grad.middleCols(start, len) += n.grad;
  });
}

Var cols_select(Var a, std::vector<int> idx) {
  Node* an = a.node();
  Mat y(a.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] < 0 || idx[j] >= a.cols())
      throw std::out_of_range("cols_select index out of range");
    y.col(static_cast<Eigen::Index>(j)) = a.value().col(idx[j]);
  }
  return a.tape()->make_node(std::move(y), rg(a),
                             [an, idx = std::move(idx)](Node& n) {
                               if (!an->requires_grad) return;
                               Tape::ensure_grad(*an);
                               for (std::size_t j = 0; j < idx.size(); ++j)
                                 an->grad.col(idx[j]) +=
                                     n.grad.col(static_cast<Eigen::Index>(j));
                             });
}

Var vcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("vcat of nothing");
  Eigen::Index total = 0;
  const Eigen::Index c = parts[0].cols();
  bool any_grad = false;
  for (const Var& p : parts) {
    if (p.cols() != c) throw std::invalid_argument("vcat column mismatch");
    total += p.rows();
    any_grad = any_grad || p.requires_grad();
  }
  Mat y(total, c);
  Eigen::Index r = 0;
  std::vector<Node*> nodes;
  std::vector<Eigen::Index> offsets;
  nodes.reserve(parts.size());
  for (const Var& p : parts) {
    y.middleRows(r, p.rows()) = p.value();
    nodes.push_back(p.node());
    offsets.push_back(r);
    r += p.rows();
  }
  return parts[0].tape()->make_node(
      std::move(y), any_grad,
      [nodes = std::move(nodes), offsets = std::move(offsets)](Node& n) {
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          Node* p = nodes[i];
          if (!p->requires_grad) continue;
          Tape::ensure_grad(*p);
          p->grad += n.grad.middleRows(offsets[i], p->value.rows());
        }
      });
}

Var hcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("hcat of nothing");
  Eigen::Index total = 0;
  const Eigen::Index r = parts[0].rows();
  bool any_grad = false;
  for (const Var& p : parts) {
    if (p.rows() != r) throw std::invalid_argument("hcat row mismatch");
    total += p.cols();
    any_grad = any_grad || p.requires_grad();
  }
  Mat y(r, total);
  Eigen::Index c = 0;
  std::vector<Node*> nodes;
  std::vector<Eigen::Index> offsets;
  for (const Var& p : parts) {
    y.middleCols(c, p.cols()) = p.value();
    nodes.push_back(p.node());
    offsets.push_back(c);
    c += p.cols();
  }
  return parts[0].tape()->make_node(
      std::move(y), any_grad,
      [nodes = std::move(nodes), offsets = std::move(offsets)](Node& n) {
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          Node* p = nodes[i];
          if (!p->requires_grad) continue;
          Tape::ensure_grad(*p);
          p->grad += n.grad.middleCols(offsets[i], p->value.cols());
        }
      });
}

Var softmax_rows(Var a) {
  Node* an = a.node();
  Mat y = a.value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double mx = y.row(i).maxCoeff();
    y.row(i) = (y.row(i).array() - mx).exp();
    y.row(i) /= y.row(i).sum();
  }
  Mat yv = y;
  return a.tape()->make_node(std::move(y), rg(a), [an, yv](Node& n) {
    if (!an->requires_grad) return;
    Tape::ensure_grad(*an);
    for (Eigen::Index i = 0; i < n.grad.rows(); ++i) {
      const double dot = n.grad.row(i).dot(yv.row(i));
      an->grad.row(i) +=
          ((n.grad.row(i).array() - dot) * yv.row(i).array()).matrix();
    }
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 ||
      bias.cols() != x.cols())
    throw std::invalid_argument("layer_norm_rows shape mismatch");
  Node* xn = x.node();
  Node* gn = gain.node();
  Node* bn = bias.node();
  const Eigen::Index d = x.cols();
  Mat xhat(x.rows(), d);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.value().row(i).mean();
    const double var =
        (x.value().row(i).array() - mu).square().sum() / static_cast<double>(d);
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.value().row(i).array() - mu) * inv_std(i);
  }
  Mat y = xhat;
  y.array().rowwise() *= gain.value().row(0).array();
  y.array().rowwise() += bias.value().row(0).array();
  return x.tape()->make_node(
      std::move(y), rg(x, gain) || rg(bias),
      [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std),
       d](Node& n) {
        if (gn->requires_grad) {
          Tape::ensure_grad(*gn);
          gn->grad.row(0) += n.grad.cwiseProduct(xhat).colwise().sum();
        }
        if (bn->requires_grad) {
          Tape::ensure_grad(*bn);
          bn->grad.row(0) += n.grad.colwise().sum();
        }
        if (xn->requires_grad) {
          Tape::ensure_grad(*xn);
          for (Eigen::Index i = 0; i < n.grad.rows(); ++i) {
            Eigen::RowVectorXd dxhat =
                n.grad.row(i).cwiseProduct(gn->value.row(0));
            const double m1 = dxhat.mean();
            const double m2 =
                dxhat.cwiseProduct(xhat.row(i)).sum() / static_cast<double>(d);
            xn->grad.row(i) +=
                (((dxhat.array() - m1) - xhat.row(i).array() * m2) * inv_std(i))
                    .matrix();
          }
        }
      });
}

Var dropout(Var x, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout probability must be < 1");
  Node* xn = x.node();
  const double keep = 1.0 - p;
  Mat mask(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < mask.cols(); ++j)
    for (Eigen::Index i = 0; i < mask.rows(); ++i)
      mask(i, j) = rng.bernoulli(p) ? 0.0 : 1.0 / keep;
  Mat y = x.value().cwiseProduct(mask);
  return x.tape()->make_node(std::move(y), rg(x),
                             [xn, mask = std::move(mask)](Node& n) {
                               if (!xn->requires_grad) return;
                               Tape::ensure_grad(*xn);
                               xn->grad += n.grad.cwiseProduct(mask);
                             });
}

Var cross_entropy_mean(Var logits, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows())
    throw std::invalid_argument("cross_entropy_mean label count mismatch");
  if (labels.empty())
    throw std::invalid_argument("cross_entropy_mean with zero rows");
  Node* ln = logits.node();
  const Eigen::Index n_rows = logits.rows();
  Mat probs = logits.value();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    if (labels[i] < 0 || labels[i] >= logits.cols())
      throw std::out_of_range("cross_entropy_mean label out of range");
    const double mx = probs.row(i).maxCoeff();
    const double lse = std::log((probs.row(i).array() - mx).exp().sum()) + mx;
    total += lse - probs(i, labels[i]);
    probs.row(i) = ((probs.row(i).array() - mx) - (lse - mx)).exp();
  }
  Mat y(1, 1);
  y(0, 0) = total / static_cast<double>(n_rows);
  return logits.tape()->make_node(
      std::move(y), rg(logits),
      [ln, probs = std::move(probs), labels, n_rows](Node& n) {
        if (!ln->requires_grad) return;
        Tape::ensure_grad(*ln);
        const double g = n.grad(0, 0) / static_cast<double>(n_rows);
        ln->grad += probs * g;
        for (Eigen::Index i = 0; i < n_rows; ++i) ln->grad(i, labels[i]) -= g;
      });
}

}  // namespace lapkit::ad
