#include "fmridec/autodiff.hpp"

#include <cmath>

#include "fmridec/errors.hpp"

namespace fmridec::ad {

Var Tape::constant(Mat value) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  n->tape = this;
  nodes_.push_back(std::move(n));
  return Var(nodes_.back().get());
}

Var Tape::leaf(Mat value) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  n->requires_grad = grad_enabled_;
  n->tape = this;
  nodes_.push_back(std::move(n));
  return Var(nodes_.back().get());
}

Var Tape::param(Parameter& p, bool trainable) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(it->second);
  auto n = std::make_unique<Node>();
  n->value = p.value;
  n->tape = this;
  if (grad_enabled_ && trainable) {
    n->requires_grad = true;
    Parameter* target = &p;
    n->backprop = [target](Node& self) { target->accumulate(self.grad); };
  }
  Node* raw = n.get();
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, raw);
  return Var(raw);
}

Var Tape::make(Mat value, bool requires_grad, std::function<void(Node&)> backprop) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad && grad_enabled_;
  if (n->requires_grad) n->backprop = std::move(backprop);
  n->tape = this;
  nodes_.push_back(std::move(n));
  return Var(nodes_.back().get());
}

void Tape::backward(const Var& loss) {
  if (loss.rows() != 1 || loss.cols() != 1)
    fail(ErrorKind::input, "backward expects a 1x1 loss");
  if (!grad_enabled_) fail(ErrorKind::input, "backward on a grad-disabled tape");
  loss.node()->grad = Mat::Ones(1, 1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (!n.requires_grad || n.grad.size() == 0 || !n.backprop) continue;
    n.backprop(n);
  }
}

namespace {

Tape* tape_of(Var a) { return a.node()->tape; }

void check_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail(ErrorKind::input, std::string(op) + ": shape mismatch " +
                               std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                               " vs " + std::to_string(b.rows()) + "x" +
                               std::to_string(b.cols()));
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) fail(ErrorKind::input, "matmul: inner dimension mismatch");
  Node* an = a.node();
  Node* bn = b.node();
  return tape_of(a)->make(
      a.val() * b.val(), an->requires_grad || bn->requires_grad, [an, bn](Node& self) {
        if (an->requires_grad) add_grad(an, self.grad * bn->value.transpose());
        if (bn->requires_grad) add_grad(bn, an->value.transpose() * self.grad);
      });
}

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Node* an = a.node();
  Node* bn = b.node();
  return tape_of(a)->make(a.val() + b.val(), an->requires_grad || bn->requires_grad,
                          [an, bn](Node& self) {
                            add_grad(an, self.grad);
                            add_grad(bn, self.grad);
                          });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Node* an = a.node();
  Node* bn = b.node();
  return tape_of(a)->make(a.val() - b.val(), an->requires_grad || bn->requires_grad,
                          [an, bn](Node& self) {
                            add_grad(an, self.grad);
                            add_grad(bn, -self.grad);
                          });
}

Var cmul(Var a, Var b) {
  check_same_shape(a, b, "cmul");
  Node* an = a.node();
  Node* bn = b.node();
  return tape_of(a)->make(a.val().cwiseProduct(b.val()),
                          an->requires_grad || bn->requires_grad, [an, bn](Node& self) {
                            add_grad(an, self.grad.cwiseProduct(bn->value));
                            add_grad(bn, self.grad.cwiseProduct(an->value));
                          });
}

Var cdiv(Var a, Var b) {
  check_same_shape(a, b, "cdiv");
  Node* an = a.node();
  Node* bn = b.node();
  return tape_of(a)->make(a.val().cwiseQuotient(b.val()),
                          an->requires_grad || bn->requires_grad, [an, bn](Node& self) {
                            add_grad(an, self.grad.cwiseQuotient(bn->value));
                            add_grad(bn, -self.grad.cwiseProduct(an->value)
                                              .cwiseQuotient(bn->value.cwiseProduct(bn->value)));
                          });
}

Var scale(Var a, double s) {
  Node* an = a.node();
  return tape_of(a)->make(a.val() * s, an->requires_grad,
                          [an, s](Node& self) { add_grad(an, self.grad * s); });
}

Var add_scalar(Var a, double s) {
  Node* an = a.node();
  return tape_of(a)->make(a.val().array() + s, an->requires_grad,
                          [an](Node& self) { add_grad(an, self.grad); });
}

Var add_rowvec(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    fail(ErrorKind::input, "add_rowvec: broadcast shape mismatch");
  Node* an = a.node();
  Node* rn = row.node();
  Mat out = a.val();
  out.rowwise() += row.val().row(0);
  return tape_of(a)->make(std::move(out), an->requires_grad || rn->requires_grad,
                          [an, rn](Node& self) {
                            add_grad(an, self.grad);
                            add_grad(rn, self.grad.colwise().sum());
                          });
}

Var transpose(Var a) {
  Node* an = a.node();
  return tape_of(a)->make(a.val().transpose(), an->requires_grad,
                          [an](Node& self) { add_grad(an, self.grad.transpose()); });
}

Var rows(Var a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.rows()) fail(ErrorKind::input, "rows: out of range");
  Node* an = a.node();
  return tape_of(a)->make(a.val().middleRows(start, n), an->requires_grad,
                          [an, start, n](Node& self) {
                            if (!an->requires_grad) return;
                            Mat g = Mat::Zero(an->value.rows(), an->value.cols());
                            g.middleRows(start, n) = self.grad;
                            add_grad(an, g);
                          });
}

Var cols(Var a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.cols()) fail(ErrorKind::input, "cols: out of range");
  Node* an = a.node();
  return tape_of(a)->make(a.val().middleCols(start, n), an->requires_grad,
                          [an, start, n](Node& self) {
                            if (!an->requires_grad) return;
                            Mat g = Mat::Zero(an->value.rows(), an->value.cols());
                            g.middleCols(start, n) = self.grad;
                            add_grad(an, g);
                          });
}

Var vcat(const std::vector<Var>& parts) {
  if (parts.empty()) fail(ErrorKind::input, "vcat: no parts");
  Eigen::Index total = 0;
  const Eigen::Index c = parts.front().cols();
  bool needs = false;
  for (const Var& p : parts) {
    if (p.cols() != c) fail(ErrorKind::input, "vcat: column mismatch");
    total += p.rows();
    needs = needs || p.node()->requires_grad;
  }
  Mat out(total, c);
  Eigen::Index at = 0;
  std::vector<Node*> nodes;
  nodes.reserve(parts.size());
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.val();
    at += p.rows();
    nodes.push_back(p.node());
  }
  return tape_of(parts.front())->make(std::move(out), needs, [nodes](Node& self) {
    Eigen::Index at = 0;
    for (Node* p : nodes) {
      add_grad(p, self.grad.middleRows(at, p->value.rows()));
      at += p->value.rows();
    }
  });
}

Var hcat(const std::vector<Var>& parts) {
  if (parts.empty()) fail(ErrorKind::input, "hcat: no parts");
  Eigen::Index total = 0;
  const Eigen::Index r = parts.front().rows();
  bool needs = false;
  for (const Var& p : parts) {
    if (p.rows() != r) fail(ErrorKind::input, "hcat: row mismatch");
    total += p.cols();
    needs = needs || p.node()->requires_grad;
  }
  Mat out(r, total);
  Eigen::Index at = 0;
  std::vector<Node*> nodes;
  nodes.reserve(parts.size());
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.val();
    at += p.cols();
    nodes.push_back(p.node());
  }
  return tape_of(parts.front())->make(std::move(out), needs, [nodes](Node& self) {
    Eigen::Index at = 0;
    for (Node* p : nodes) {
      add_grad(p, self.grad.middleCols(at, p->value.cols()));
      at += p->value.cols();
    }
  });
}

Var softmax_rows(Var a) {
  Mat s = a.val();
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - mx).exp();
    s.row(r) /= s.row(r).sum();
  }
  Node* an = a.node();
  return tape_of(a)->make(s, an->requires_grad, [an](Node& self) {
    // dA = S .* (G - rowsum(G .* S))
    Eigen::VectorXd rs = self.grad.cwiseProduct(self.value).rowwise().sum();
    Mat shifted = self.grad;
    shifted.colwise() -= rs;
    add_grad(an, self.value.cwiseProduct(shifted));
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 ||
      bias.cols() != x.cols())
    fail(ErrorKind::input, "layer_norm_rows: gain/bias must be 1 x cols");
  const Eigen::Index T = x.rows(), D = x.cols();
  Mat xhat(T, D);
  Eigen::VectorXd inv_std(T);
  for (Eigen::Index r = 0; r < T; ++r) {
    const double mu = x.val().row(r).mean();
    const double var = (x.val().row(r).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std(r) = is;
    xhat.row(r) = (x.val().row(r).array() - mu) * is;
  }
  Mat out = xhat;
  out.array().rowwise() *= gain.val().row(0).array();
  out.rowwise() += bias.val().row(0);
  Node* xn = x.node();
  Node* gn = gain.node();
  Node* bn = bias.node();
  bool needs = xn->requires_grad || gn->requires_grad || bn->requires_grad;
  return tape_of(x)->make(std::move(out), needs, [xn, gn, bn, xhat, inv_std, D](Node& self) {
    if (gn->requires_grad) add_grad(gn, self.grad.cwiseProduct(xhat).colwise().sum());
    if (bn->requires_grad) add_grad(bn, self.grad.colwise().sum());
    if (!xn->requires_grad) return;
    Mat dxhat = self.grad;
    dxhat.array().rowwise() *= gn->value.row(0).array();
    Mat dx(dxhat.rows(), D);
    for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
      const double m1 = dxhat.row(r).mean();
      const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
      dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
    }
    add_grad(xn, dx);
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var a) {
  const Mat& x = a.val();
  Mat t = (kGeluC * (x.array() + kGeluA * x.array().cube())).tanh();
  Mat out = 0.5 * x.array() * (1.0 + t.array());
  Node* an = a.node();
  return tape_of(a)->make(std::move(out), an->requires_grad, [an, t](Node& self) {
    const auto& x = an->value.array();
    auto dt = (1.0 - t.array().square()) * (kGeluC * (1.0 + 3.0 * kGeluA * x.square()));
    Mat dx = (0.5 * (1.0 + t.array()) + 0.5 * x * dt).matrix();
    add_grad(an, self.grad.cwiseProduct(dx));
  });
}

Var cw_exp(Var a) {
  Mat out = a.val().array().exp();
  Node* an = a.node();
  return tape_of(a)->make(out, an->requires_grad, [an](Node& self) {
    add_grad(an, self.grad.cwiseProduct(self.value));
  });
}

Var cw_log(Var a) {
  Node* an = a.node();
  return tape_of(a)->make(a.val().array().log(), an->requires_grad, [an](Node& self) {
    add_grad(an, self.grad.cwiseQuotient(an->value));
  });
}

Var cw_sqrt(Var a) {
  Mat out = a.val().array().sqrt();
  Node* an = a.node();
  return tape_of(a)->make(out, an->requires_grad, [an](Node& self) {
    add_grad(an, (self.grad.array() * 0.5 / self.value.array()).matrix());
  });
}

Var sum(Var a) {
  Node* an = a.node();
  Mat out(1, 1);
  out(0, 0) = a.val().sum();
  return tape_of(a)->make(std::move(out), an->requires_grad, [an](Node& self) {
    add_grad(an, Mat::Constant(an->value.rows(), an->value.cols(), self.grad(0, 0)));
  });
}

Var mean_all(Var a) {
  const double n = static_cast<double>(a.rows() * a.cols());
  return scale(sum(a), 1.0 / n);
}

Var mean_rows(Var a) {
  Node* an = a.node();
  const double n = static_cast<double>(a.rows());
  return tape_of(a)->make(a.val().colwise().mean(), an->requires_grad, [an, n](Node& self) {
    Mat g = (self.grad / n).replicate(an->value.rows(), 1);
    add_grad(an, g);
  });
}

Var embedding_rows(Var table, const std::vector<int>& ids) {
  Node* tn = table.node();
  const Eigen::Index V = table.rows();
  Mat out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= V)
      fail(ErrorKind::input, "embedding_rows: token id " + std::to_string(ids[i]) +
                                 " outside vocabulary of " + std::to_string(V));
    out.row(static_cast<Eigen::Index>(i)) = table.val().row(ids[i]);
  }
  return tape_of(table)->make(std::move(out), tn->requires_grad, [tn, ids](Node& self) {
    if (!tn->requires_grad) return;
    Mat g = Mat::Zero(tn->value.rows(), tn->value.cols());
    for (std::size_t i = 0; i < ids.size(); ++i)
      g.row(ids[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    add_grad(tn, g);
  });
}

Var cross_entropy_rows(Var logits, const std::vector<int>& labels, bool mean_reduction) {
  const Eigen::Index T = logits.rows(), V = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != T)
    fail(ErrorKind::input, "cross_entropy_rows: labels/rows mismatch");
  Eigen::Index counted = 0;
  double total = 0.0;
  Mat probs(T, V);
  for (Eigen::Index r = 0; r < T; ++r) {
    const double mx = logits.val().row(r).maxCoeff();
    Eigen::RowVectorXd e = (logits.val().row(r).array() - mx).exp();
    const double z = e.sum();
    probs.row(r) = e / z;
    const int lbl = labels[r];
    if (lbl < 0) continue;
    if (lbl >= V)
      fail(ErrorKind::input, "cross_entropy_rows: label " + std::to_string(lbl) +
                                 " outside vocabulary of " + std::to_string(V));
    total += std::log(z) + mx - logits.val()(r, lbl);
    ++counted;
  }
  if (counted == 0) fail(ErrorKind::input, "cross_entropy_rows: no scored positions");
  const double divisor = mean_reduction ? static_cast<double>(counted) : 1.0;
  Mat out(1, 1);
  out(0, 0) = total / divisor;
  Node* ln = logits.node();
  return tape_of(logits)->make(std::move(out), ln->requires_grad,
                               [ln, labels, probs, divisor](Node& self) {
                                 if (!ln->requires_grad) return;
                                 const double g = self.grad(0, 0) / divisor;
                                 Mat dx = Mat::Zero(ln->value.rows(), ln->value.cols());
                                 for (Eigen::Index r = 0; r < dx.rows(); ++r) {
                                   if (labels[r] < 0) continue;
                                   dx.row(r) = probs.row(r) * g;
                                   dx(r, labels[r]) -= g;
                                 }
                                 add_grad(ln, dx);
                               });
}

Var cosine(Var a, Var b, bool* zero_norm) {
  check_same_shape(a, b, "cosine");
  const double na = a.val().norm();
  const double nb = b.val().norm();
  if (zero_norm) *zero_norm = false;
  if (na < 1e-12 || nb < 1e-12) {
    if (zero_norm) *zero_norm = true;
    return tape_of(a)->constant(Mat::Zero(1, 1));
  }
  Var dot = sum(cmul(a, b));
  Var den = cw_sqrt(cmul(sum(cmul(a, a)), sum(cmul(b, b))));
  return cdiv(dot, den);
}

}  // namespace fmridec::ad
