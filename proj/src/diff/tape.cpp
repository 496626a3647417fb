#include "netmarl/diff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "netmarl/error.hpp"

namespace netmarl::diff {

namespace {
inline double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }
constexpr double kLogitClamp = 30.0;
}  // namespace

Var Tape::push(Node nd, int n) {
  nd.off = static_cast<std::uint32_t>(vals_.size());
  nd.n = static_cast<std::uint32_t>(n);
  vals_.resize(vals_.size() + static_cast<std::size_t>(n), 0.0);
  nodes_.push_back(nd);
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.index < 0 || v.index >= static_cast<int>(nodes_.size())) {
    throw ShapeMismatch("invalid tape variable");
  }
  return nodes_[static_cast<std::size_t>(v.index)];
}

void Tape::check_param(ParamId w, int cols, const char* what) const {
  if (!w.valid() || w.index >= static_cast<int>(store_->size())) {
    throw ShapeMismatch(std::string(what) + ": invalid parameter");
  }
  if (param(w.index).cols != cols) {
    throw ShapeMismatch(std::string(what) + ": '" + param(w.index).name + "' has " +
                        std::to_string(param(w.index).cols) + " columns, input has " +
                        std::to_string(cols));
  }
}

std::span<const double> Tape::value(Var v) const {
  const Node& nd = node(v);
  return {vals_.data() + nd.off, nd.n};
}

std::span<const double> Tape::grad(Var v) const {
  const Node& nd = node(v);
  if (grads_.size() < vals_.size()) throw MissingGradient("backward has not been run");
  return {grads_.data() + nd.off, nd.n};
}

int Tape::size(Var v) const { return static_cast<int>(node(v).n); }
bool Tape::requires_grad(Var v) const { return node(v).needs_grad; }

Var Tape::constant(std::span<const double> values) {
  Var v = push(Node{}, static_cast<int>(values.size()));
  std::copy(values.begin(), values.end(), val(v.index));
  return v;
}

Var Tape::zeros(int n) { return push(Node{}, n); }

Var Tape::matvec(ParamId w, Var x) {
  const int cols = size(x);
  check_param(w, cols, "matvec");
  const auto& W = param(w.index);
  Node nd;
  nd.op = Op::MatVec;
  nd.a = x.index;
  nd.p0 = w.index;
  nd.needs_grad = true;
  Var out = push(nd, W.rows);
  const double* xv = val(x.index);
  double* o = val(out.index);
  for (int r = 0; r < W.rows; ++r) {
    const double* row = W.value.data() + static_cast<std::size_t>(r) * cols;
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += row[c] * xv[c];
    o[r] = s;
  }
  return out;
}

Var Tape::affine(ParamId w, ParamId b, Var x) {
  const int cols = size(x);
  check_param(w, cols, "affine");
  const auto& W = param(w.index);
  check_param(b, 1, "affine bias");
  if (param(b.index).rows != W.rows) throw ShapeMismatch("affine: bias rows differ from weight rows");
  Node nd;
  nd.op = Op::Affine;
  nd.a = x.index;
  nd.p0 = w.index;
  nd.p1 = b.index;
  nd.needs_grad = true;
  Var out = push(nd, W.rows);
  const double* xv = val(x.index);
  const double* bv = param(b.index).value.data();
  double* o = val(out.index);
  for (int r = 0; r < W.rows; ++r) {
    const double* row = W.value.data() + static_cast<std::size_t>(r) * cols;
    double s = bv[r];
    for (int c = 0; c < cols; ++c) s += row[c] * xv[c];
    o[r] = s;
  }
  return out;
}

Var Tape::affine2(ParamId w1, Var x1, ParamId w2, Var x2, ParamId b) {
  const int c1 = size(x1), c2 = size(x2);
  check_param(w1, c1, "affine2");
  check_param(w2, c2, "affine2");
  check_param(b, 1, "affine2 bias");
  const auto& W1 = param(w1.index);
  const auto& W2 = param(w2.index);
  if (W2.rows != W1.rows || param(b.index).rows != W1.rows) {
    throw ShapeMismatch("affine2: row counts differ");
  }
  Node nd;
  nd.op = Op::Affine2;
  nd.a = x1.index;
  nd.b = x2.index;
  nd.p0 = w1.index;
  nd.p1 = w2.index;
  nd.p2 = b.index;
  nd.needs_grad = true;
  Var out = push(nd, W1.rows);
  const double* xa = val(x1.index);
  const double* xb = val(x2.index);
  const double* bv = param(b.index).value.data();
  double* o = val(out.index);
  for (int r = 0; r < W1.rows; ++r) {
    const double* ra = W1.value.data() + static_cast<std::size_t>(r) * c1;
    const double* rb = W2.value.data() + static_cast<std::size_t>(r) * c2;
    double s = bv[r];
    for (int c = 0; c < c1; ++c) s += ra[c] * xa[c];
    for (int c = 0; c < c2; ++c) s += rb[c] * xb[c];
    o[r] = s;
  }
  return out;
}

Var Tape::add(Var a, Var b) {
  const int n = size(a);
  if (size(b) != n) throw ShapeMismatch("add: sizes differ");
  Node nd;
  nd.op = Op::Add;
  nd.a = a.index;
  nd.b = b.index;
  nd.needs_grad = ng(a.index) || ng(b.index);
  Var out = push(nd, n);
  const double* x = val(a.index);
  const double* y = val(b.index);
  double* o = val(out.index);
  for (int i = 0; i < n; ++i) o[i] = x[i] + y[i];
  return out;
}

Var Tape::mul(Var a, Var b) {
  const int n = size(a);
  if (size(b) != n) throw ShapeMismatch("mul: sizes differ");
  Node nd;
  nd.op = Op::Mul;
  nd.a = a.index;
  nd.b = b.index;
  nd.needs_grad = ng(a.index) || ng(b.index);
  Var out = push(nd, n);
  const double* x = val(a.index);
  const double* y = val(b.index);
  double* o = val(out.index);
  for (int i = 0; i < n; ++i) o[i] = x[i] * y[i];
  return out;
}

Var Tape::scale(Var a, double s) {
  const int n = size(a);
  Node nd;
  nd.op = Op::Scale;
  nd.a = a.index;
  nd.s = s;
  nd.needs_grad = ng(a.index);
  Var out = push(nd, n);
  const double* x = val(a.index);
  double* o = val(out.index);
  for (int i = 0; i < n; ++i) o[i] = s * x[i];
  return out;
}

Var Tape::dot(Var a, Var b) {
  const int n = size(a);
  if (size(b) != n) throw ShapeMismatch("dot: sizes differ");
  Node nd;
  nd.op = Op::Dot;
  nd.a = a.index;
  nd.b = b.index;
  nd.needs_grad = ng(a.index) || ng(b.index);
  Var out = push(nd, 1);
  const double* x = val(a.index);
  const double* y = val(b.index);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += x[i] * y[i];
  *val(out.index) = s;
  return out;
}

Var Tape::sum(Var a) {
  const int n = size(a);
  Node nd;
  nd.op = Op::Sum;
  nd.a = a.index;
  nd.needs_grad = ng(a.index);
  Var out = push(nd, 1);
  const double* x = val(a.index);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += x[i];
  *val(out.index) = s;
  return out;
}

Var Tape::slice(Var a, int offset, int n) {
  if (offset < 0 || n < 0 || offset + n > size(a)) throw ShapeMismatch("slice out of range");
  Node nd;
  nd.op = Op::Slice;
  nd.a = a.index;
  nd.k = offset;
  nd.needs_grad = ng(a.index);
  Var out = push(nd, n);
  std::copy_n(val(a.index) + offset, n, val(out.index));
  return out;
}

Var Tape::relu(Var a) {
  const int n = size(a);
  Node nd;
  nd.op = Op::Relu;
  nd.a = a.index;
  nd.needs_grad = ng(a.index);
  Var out = push(nd, n);
  const double* x = val(a.index);
  double* o = val(out.index);
  for (int i = 0; i < n; ++i) o[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

Var Tape::sigmoid(Var a) {
  const int n = size(a);
  Node nd;
  nd.op = Op::Sigmoid;
  nd.a = a.index;
  nd.needs_grad = ng(a.index);
  Var out = push(nd, n);
  const double* x = val(a.index);
  double* o = val(out.index);
  for (int i = 0; i < n; ++i) o[i] = sigm(x[i]);
  return out;
}

Var Tape::tanh(Var a) {
  const int n = size(a);
  Node nd;
  nd.op = Op::Tanh;
  nd.a = a.index;
  nd.needs_grad = ng(a.index);
  Var out = push(nd, n);
  const double* x = val(a.index);
  double* o = val(out.index);
  for (int i = 0; i < n; ++i) o[i] = std::tanh(x[i]);
  return out;
}

Var Tape::softmax(Var a) {
  const int n = size(a);
  if (n == 0) throw ShapeMismatch("softmax of empty vector");
  Node nd;
  nd.op = Op::Softmax;
  nd.a = a.index;
  nd.needs_grad = ng(a.index);
  Var out = push(nd, n);
  const double* x = val(a.index);
  double* o = val(out.index);
  const double mx = *std::max_element(x, x + n);
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += (o[i] = std::exp(x[i] - mx));
  for (int i = 0; i < n; ++i) o[i] /= z;
  return out;
}

Var Tape::log_softmax(Var a) {
  const int n = size(a);
  if (n == 0) throw ShapeMismatch("log_softmax of empty vector");
  Node nd;
  nd.op = Op::LogSoftmax;
  nd.a = a.index;
  nd.needs_grad = ng(a.index);
  Var out = push(nd, n);
  const double* x = val(a.index);
  double* o = val(out.index);
  const double mx = *std::max_element(x, x + n);
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += std::exp(x[i] - mx);
  const double lz = mx + std::log(z);
  for (int i = 0; i < n; ++i) o[i] = x[i] - lz;
  return out;
}

Var Tape::pick(Var a, int index) {
  if (index < 0 || index >= size(a)) throw ShapeMismatch("pick index out of range");
  Node nd;
  nd.op = Op::Pick;
  nd.a = a.index;
  nd.k = index;
  nd.needs_grad = ng(a.index);
  Var out = push(nd, 1);
  *val(out.index) = val(a.index)[index];
  return out;
}

Var Tape::lstm_cell(Var gates, Var c) {
  const int h = size(c);
  if (size(gates) != 4 * h) throw ShapeMismatch("lstm_cell: gates must be 4x the cell size");
  Node nd;
  nd.op = Op::LstmCell;
  nd.a = gates.index;
  nd.b = c.index;
  nd.needs_grad = ng(gates.index) || ng(c.index);
  nd.aux_off = static_cast<std::uint32_t>(aux_.size());
  nd.aux_n = static_cast<std::uint32_t>(5 * h);
  aux_.resize(aux_.size() + static_cast<std::size_t>(5 * h));
  Var out = push(nd, 2 * h);
  const double* g = val(gates.index);
  const double* cp = val(c.index);
  double* act = aux_.data() + nodes_[static_cast<std::size_t>(out.index)].aux_off;
  double* o = val(out.index);
  for (int i = 0; i < h; ++i) {
    const double ig = sigm(g[i]);
    const double fg = sigm(g[h + i]);
    const double gg = std::tanh(g[2 * h + i]);
    const double og = sigm(g[3 * h + i]);
    const double cn = fg * cp[i] + ig * gg;
    const double tc = std::tanh(cn);
    act[i] = ig;
    act[h + i] = fg;
    act[2 * h + i] = gg;
    act[3 * h + i] = og;
    act[4 * h + i] = tc;
    o[i] = og * tc;
    o[h + i] = cn;
  }
  return out;
}

Var Tape::gumbel_binary(Var logits, std::span<const double> noise, double tau, bool hard) {
  const int n2 = size(logits);
  if (n2 % 2 != 0) throw ShapeMismatch("gumbel_binary expects logit pairs");
  if (static_cast<int>(noise.size()) != n2) throw ShapeMismatch("gumbel_binary noise size");
  if (!(tau > 0.0)) throw ShapeMismatch("gumbel temperature must be positive");
  const int d = n2 / 2;
  Node nd;
  nd.op = Op::Gumbel;
  nd.a = logits.index;
  nd.s = tau;
  nd.needs_grad = ng(logits.index);
  nd.aux_off = static_cast<std::uint32_t>(aux_.size());
  nd.aux_n = static_cast<std::uint32_t>(d);
  aux_.resize(aux_.size() + static_cast<std::size_t>(d));
  Var out = push(nd, d);
  const double* l = val(logits.index);
  double* y = aux_.data() + nodes_[static_cast<std::size_t>(out.index)].aux_off;
  double* o = val(out.index);
  for (int k = 0; k < d; ++k) {
    const double l0 = std::clamp(l[2 * k], -kLogitClamp, kLogitClamp);
    const double l1 = std::clamp(l[2 * k + 1], -kLogitClamp, kLogitClamp);
    const double z = ((l1 + noise[static_cast<std::size_t>(2 * k + 1)]) -
                      (l0 + noise[static_cast<std::size_t>(2 * k)])) / tau;
    y[k] = sigm(z);
    o[k] = hard ? (z > 0.0 ? 1.0 : 0.0) : y[k];
  }
  return out;
}

std::span<const double> Tape::relaxed(Var v) const {
  const Node& nd = node(v);
  if (nd.op != Op::Gumbel) throw ShapeMismatch("not a gumbel node");
  return {aux_.data() + nd.aux_off, nd.aux_n};
}

Var Tape::attention(Var query, std::span<const Var> messages) {
  if (messages.empty()) throw EmptyInbox("attention over an empty inbox");
  const int d = size(query);
  Node nd;
  nd.op = Op::Attention;
  nd.a = query.index;
  nd.needs_grad = ng(query.index);
  for (Var m : messages) {
    if (size(m) != d) throw ShapeMismatch("attention: message size differs from query size");
    nd.needs_grad = nd.needs_grad || ng(m.index);
  }
  const int k = static_cast<int>(messages.size());
  nd.iaux_off = static_cast<std::uint32_t>(iaux_.size());
  nd.iaux_n = static_cast<std::uint32_t>(k);
  for (Var m : messages) iaux_.push_back(m.index);
  nd.aux_off = static_cast<std::uint32_t>(aux_.size());
  nd.aux_n = static_cast<std::uint32_t>(k);
  aux_.resize(aux_.size() + static_cast<std::size_t>(k));
  Var out = push(nd, d);
  double* alpha = aux_.data() + nodes_[static_cast<std::size_t>(out.index)].aux_off;
  const double* q = val(query.index);
  double mx = -HUGE_VAL;
  for (int j = 0; j < k; ++j) {
    const double* m = val(messages[static_cast<std::size_t>(j)].index);
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += q[i] * m[i];
    alpha[j] = s;
    mx = std::max(mx, s);
  }
  double z = 0.0;
  for (int j = 0; j < k; ++j) z += (alpha[j] = std::exp(alpha[j] - mx));
  for (int j = 0; j < k; ++j) alpha[j] /= z;
  double* o = val(out.index);
  for (int j = 0; j < k; ++j) {
    const double* m = val(messages[static_cast<std::size_t>(j)].index);
    for (int i = 0; i < d; ++i) o[i] += alpha[j] * m[i];
  }
  return out;
}

std::span<const double> Tape::attention_weights(Var v) const {
  const Node& nd = node(v);
  if (nd.op != Op::Attention) throw ShapeMismatch("not an attention node");
  return {aux_.data() + nd.aux_off, nd.aux_n};
}

Var Tape::weighted_sum(std::span<const Var> scalars, std::span<const double> weights) {
  if (scalars.size() != weights.size()) throw ShapeMismatch("weighted_sum: size mismatch");
  Node nd;
  nd.op = Op::WeightedSum;
  nd.iaux_off = static_cast<std::uint32_t>(iaux_.size());
  nd.iaux_n = static_cast<std::uint32_t>(scalars.size());
  nd.aux_off = static_cast<std::uint32_t>(aux_.size());
  nd.aux_n = static_cast<std::uint32_t>(weights.size());
  double s = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (size(scalars[i]) != 1) throw ShapeMismatch("weighted_sum expects scalars");
    iaux_.push_back(scalars[i].index);
    aux_.push_back(weights[i]);
    nd.needs_grad = nd.needs_grad || ng(scalars[i].index);
    s += weights[i] * *val(scalars[i].index);
  }
  Var out = push(nd, 1);
  *val(out.index) = s;
  return out;
}

void Tape::clear() {
  nodes_.clear();
  vals_.clear();
  grads_.clear();
  aux_.clear();
  iaux_.clear();
}

void Tape::backward(Var target) {
  if (size(target) != 1) throw ShapeMismatch("backward target must be a scalar");
  grads_.assign(vals_.size(), 0.0);
  grads_[nodes_[static_cast<std::size_t>(target.index)].off] = 1.0;
  auto& P = store_->params();

  for (int idx = target.index; idx >= 0; --idx) {
    const Node& nd = nodes_[static_cast<std::size_t>(idx)];
    if (!nd.needs_grad) continue;
    const int n = static_cast<int>(nd.n);
    const double* g = grads_.data() + nd.off;
    bool any = false;
    for (int i = 0; i < n && !any; ++i) any = g[i] != 0.0;
    if (!any) continue;

    switch (nd.op) {
      case Op::Constant:
        break;
      case Op::MatVec:
      case Op::Affine: {
        auto& W = P[static_cast<std::size_t>(nd.p0)];
        const int cols = W.cols;
        const double* x = val(nd.a);
        double* gx = ng(nd.a) ? grd(nd.a) : nullptr;
        for (int r = 0; r < n; ++r) {
          const double gr = g[r];
          if (gr == 0.0) continue;
          double* gw = W.grad.data() + static_cast<std::size_t>(r) * cols;
          const double* wr = W.value.data() + static_cast<std::size_t>(r) * cols;
          for (int c = 0; c < cols; ++c) gw[c] += gr * x[c];
          if (gx) {
            for (int c = 0; c < cols; ++c) gx[c] += gr * wr[c];
          }
        }
        if (nd.op == Op::Affine) {
          auto& B = P[static_cast<std::size_t>(nd.p1)];
          for (int r = 0; r < n; ++r) B.grad[static_cast<std::size_t>(r)] += g[r];
        }
        break;
      }
      case Op::Affine2: {
        for (int part = 0; part < 2; ++part) {
          auto& W = P[static_cast<std::size_t>(part == 0 ? nd.p0 : nd.p1)];
          const int in = part == 0 ? nd.a : nd.b;
          const int cols = W.cols;
          const double* x = val(in);
          double* gx = ng(in) ? grd(in) : nullptr;
          for (int r = 0; r < n; ++r) {
            const double gr = g[r];
            if (gr == 0.0) continue;
            double* gw = W.grad.data() + static_cast<std::size_t>(r) * cols;
            const double* wr = W.value.data() + static_cast<std::size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) gw[c] += gr * x[c];
            if (gx) {
              for (int c = 0; c < cols; ++c) gx[c] += gr * wr[c];
            }
          }
        }
        auto& B = P[static_cast<std::size_t>(nd.p2)];
        for (int r = 0; r < n; ++r) B.grad[static_cast<std::size_t>(r)] += g[r];
        break;
      }
      case Op::Add:
        if (ng(nd.a)) {
          double* ga = grd(nd.a);
          for (int i = 0; i < n; ++i) ga[i] += g[i];
        }
        if (ng(nd.b)) {
          double* gb = grd(nd.b);
          for (int i = 0; i < n; ++i) gb[i] += g[i];
        }
        break;
      case Op::Mul: {
        const double* x = val(nd.a);
        const double* y = val(nd.b);
        if (ng(nd.a)) {
          double* ga = grd(nd.a);
          for (int i = 0; i < n; ++i) ga[i] += g[i] * y[i];
        }
        if (ng(nd.b)) {
          double* gb = grd(nd.b);
          for (int i = 0; i < n; ++i) gb[i] += g[i] * x[i];
        }
        break;
      }
      case Op::Scale: {
        double* ga = grd(nd.a);
        for (int i = 0; i < n; ++i) ga[i] += nd.s * g[i];
        break;
      }
      case Op::Dot: {
        const int m = static_cast<int>(nodes_[static_cast<std::size_t>(nd.a)].n);
        const double* x = val(nd.a);
        const double* y = val(nd.b);
        if (ng(nd.a)) {
          double* ga = grd(nd.a);
          for (int i = 0; i < m; ++i) ga[i] += g[0] * y[i];
        }
        if (ng(nd.b)) {
          double* gb = grd(nd.b);
          for (int i = 0; i < m; ++i) gb[i] += g[0] * x[i];
        }
        break;
      }
      case Op::Sum: {
        const int m = static_cast<int>(nodes_[static_cast<std::size_t>(nd.a)].n);
        double* ga = grd(nd.a);
        for (int i = 0; i < m; ++i) ga[i] += g[0];
        break;
      }
      case Op::Slice: {
        double* ga = grd(nd.a) + nd.k;
        for (int i = 0; i < n; ++i) ga[i] += g[i];
        break;
      }
      case Op::Relu: {
        const double* x = val(nd.a);
        double* ga = grd(nd.a);
        for (int i = 0; i < n; ++i) ga[i] += x[i] > 0.0 ? g[i] : 0.0;
        break;
      }
      case Op::Sigmoid: {
        const double* y = vals_.data() + nd.off;
        double* ga = grd(nd.a);
        for (int i = 0; i < n; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Op::Tanh: {
        const double* y = vals_.data() + nd.off;
        double* ga = grd(nd.a);
        for (int i = 0; i < n; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::Softmax: {
        const double* y = vals_.data() + nd.off;
        double dotgy = 0.0;
        for (int i = 0; i < n; ++i) dotgy += g[i] * y[i];
        double* ga = grd(nd.a);
        for (int i = 0; i < n; ++i) ga[i] += y[i] * (g[i] - dotgy);
        break;
      }
      case Op::LogSoftmax: {
        const double* y = vals_.data() + nd.off;
        double gs = 0.0;
        for (int i = 0; i < n; ++i) gs += g[i];
        double* ga = grd(nd.a);
        for (int i = 0; i < n; ++i) ga[i] += g[i] - std::exp(y[i]) * gs;
        break;
      }
      case Op::Pick:
        grd(nd.a)[nd.k] += g[0];
        break;
      case Op::LstmCell: {
        const int h = n / 2;
        const double* act = aux_.data() + nd.aux_off;
        const double* cp = val(nd.b);
        double* gg = ng(nd.a) ? grd(nd.a) : nullptr;
        double* gc = ng(nd.b) ? grd(nd.b) : nullptr;
        for (int i = 0; i < h; ++i) {
          const double ig = act[i], fg = act[h + i], cg = act[2 * h + i], og = act[3 * h + i];
          const double tc = act[4 * h + i];
          const double gh = g[i];
          const double dc = g[h + i] + gh * og * (1.0 - tc * tc);
          if (gg) {
            gg[i] += dc * cg * ig * (1.0 - ig);
            gg[h + i] += dc * cp[i] * fg * (1.0 - fg);
            gg[2 * h + i] += dc * ig * (1.0 - cg * cg);
            gg[3 * h + i] += gh * tc * og * (1.0 - og);
          }
          if (gc) gc[i] += dc * fg;
        }
        break;
      }
      case Op::Gumbel: {
        const double* y = aux_.data() + nd.aux_off;
        const double* l = val(nd.a);
        double* gl = grd(nd.a);
        for (int k = 0; k < n; ++k) {
          const double d = g[k] * y[k] * (1.0 - y[k]) / nd.s;
          if (std::abs(l[2 * k + 1]) <= kLogitClamp) gl[2 * k + 1] += d;
          if (std::abs(l[2 * k]) <= kLogitClamp) gl[2 * k] -= d;
        }
        break;
      }
      case Op::Attention: {
        const int k = static_cast<int>(nd.iaux_n);
        const int* msgs = iaux_.data() + nd.iaux_off;
        const double* alpha = aux_.data() + nd.aux_off;
        const double* q = val(nd.a);
        double galpha_mean = 0.0;
        std::vector<double> galpha(static_cast<std::size_t>(k));
        for (int j = 0; j < k; ++j) {
          const double* m = val(msgs[j]);
          double s = 0.0;
          for (int i = 0; i < n; ++i) s += g[i] * m[i];
          galpha[static_cast<std::size_t>(j)] = s;
          galpha_mean += alpha[j] * s;
        }
        double* gq = ng(nd.a) ? grd(nd.a) : nullptr;
        for (int j = 0; j < k; ++j) {
          const double* m = val(msgs[j]);
          const double gs = alpha[j] * (galpha[static_cast<std::size_t>(j)] - galpha_mean);
          if (gq) {
            for (int i = 0; i < n; ++i) gq[i] += gs * m[i];
          }
          if (ng(msgs[j])) {
            double* gm = grd(msgs[j]);
            for (int i = 0; i < n; ++i) gm[i] += alpha[j] * g[i] + gs * q[i];
          }
        }
        break;
      }
      case Op::WeightedSum: {
        const int* in = iaux_.data() + nd.iaux_off;
        const double* w = aux_.data() + nd.aux_off;
        for (std::uint32_t i = 0; i < nd.iaux_n; ++i) {
          if (ng(in[i])) grd(in[i])[0] += w[i] * g[0];
        }
        break;
      }
    }
  }
  store_->mark_gradients();
}

}  // namespace netmarl::diff
