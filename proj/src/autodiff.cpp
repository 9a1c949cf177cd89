#include "qrec/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "qrec/errors.hpp"

namespace qrec::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using NodePtr = std::shared_ptr<Node>;

std::size_t cols_of(const Shape& s) { return s.empty() ? 1 : s.back(); }
std::size_t rows_of(const Shape& s) {
  std::size_t c = cols_of(s);
  return c == 0 ? 0 : shape_size(s) / c;
}

NodePtr make_node(Shape shape, bool track) {
  auto n = std::make_shared<Node>();
  n->value.assign(shape_size(shape), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = track;
  return n;
}

bool tracks(const Graph& g, std::initializer_list<const Tensor*> inputs) {
  if (!g.recording()) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

void check_finite(const Node& n, const char* op) {
  for (double v : n.value) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw StructuralError(std::string(op) + ": undefined tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw StructuralError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                          shape_string(b.shape()));
  }
}

Tensor wrap(NodePtr n) { return Tensor::from_node(std::move(n)); }

void check_segments(const Segments& seg, std::size_t rows, const char* op) {
  if (seg.empty() || seg.front() != 0 || seg.back() != rows) {
    throw StructuralError(std::string(op) + ": segments do not cover the input rows");
  }
  for (std::size_t i = 1; i < seg.size(); ++i) {
    if (seg[i] < seg[i - 1]) throw StructuralError(std::string(op) + ": segments must be non-decreasing");
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(Graph& g, const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
  require_defined(a, op);
  const bool track = tracks(g, {&a});
  NodePtr out = make_node(a.shape(), track);
  const auto& av = a.node()->value;
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = fwd(av[i]);
  check_finite(*out, op);
  if (track) {
    NodePtr an = a.node();
    NodePtr on = out;
    g.record([an, on, deriv] {
      if (on->grad.empty()) return;
      auto& ag = an->grad_buffer();
      for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += on->grad[i] * deriv(an->value[i], on->value[i]);
    });
  }
  return wrap(out);
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  if (shape_size(shape) != values.size()) {
    throw StructuralError("tensor values do not match shape " + shape_string(shape));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = make_node(std::move(shape), requires_grad);
  return Tensor(std::move(n));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

Tensor Tensor::scalar(double value) { return constant({}, {value}); }

std::size_t Tensor::cols() const { return cols_of(node_->shape); }
std::size_t Tensor::rows() const { return rows_of(node_->shape); }

double Tensor::item() const {
  if (size() != 1) throw StructuralError("item() on a tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

void Graph::backward(const Tensor& loss) {
  if (consumed_) throw StructuralError("graph already consumed by a previous backward()");
  if (!loss.defined() || loss.size() != 1) throw StructuralError("backward() needs a scalar loss");
  consumed_ = true;
  if (!loss.requires_grad()) {
    backward_fns_.clear();
    return;
  }
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = backward_fns_.rbegin(); it != backward_fns_.rend(); ++it) (*it)();
  backward_fns_.clear();
}

Segments segments_from_lengths(std::span<const std::size_t> lengths) {
  Segments seg(lengths.size() + 1, 0);
  for (std::size_t i = 0; i < lengths.size(); ++i) seg[i + 1] = seg[i] + lengths[i];
  return seg;
}

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (b.shape().size() != 2 || a.cols() != b.shape()[0]) {
    throw StructuralError("matmul: cannot multiply " + shape_string(a.shape()) + " by " + shape_string(b.shape()));
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Shape out_shape = a.shape().empty() ? Shape{m} : a.shape();
  if (!out_shape.empty()) out_shape.back() = m;
  const bool track = tracks(g, {&a, &b});
  NodePtr out = make_node(out_shape, track);
  MatMap(out->value.data(), n, m).noalias() =
      ConstMatMap(a.node()->value.data(), n, k) * ConstMatMap(b.node()->value.data(), k, m);
  check_finite(*out, "matmul");
  if (track) {
    NodePtr an = a.node(), bn = b.node();
    NodePtr on = out;
    g.record([an, bn, on, n, k, m] {
      if (on->grad.empty()) return;
      ConstMatMap dc(on->grad.data(), n, m);
      if (an->requires_grad) {
        MatMap(an->grad_buffer().data(), n, k).noalias() += dc * ConstMatMap(bn->value.data(), k, m).transpose();
      }
      if (bn->requires_grad) {
        MatMap(bn->grad_buffer().data(), k, m).noalias() += ConstMatMap(an->value.data(), n, k).transpose() * dc;
      }
    });
  }
  return wrap(out);
}

namespace {
template <typename Combine, typename GradA, typename GradB>
Tensor binary_same_shape(Graph& g, const Tensor& a, const Tensor& b, const char* op, Combine combine, GradA ga,
                         GradB gb) {
  require_defined(a, op);
  require_defined(b, op);
  require_same_shape(a, b, op);
  const bool track = tracks(g, {&a, &b});
  NodePtr out = make_node(a.shape(), track);
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = combine(av[i], bv[i]);
  check_finite(*out, op);
  if (track) {
    NodePtr an = a.node(), bn = b.node();
    NodePtr on = out;
    g.record([an, bn, on, ga, gb] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        auto& d = an->grad_buffer();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += on->grad[i] * ga(an->value[i], bn->value[i]);
      }
      if (bn->requires_grad) {
        auto& d = bn->grad_buffer();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += on->grad[i] * gb(an->value[i], bn->value[i]);
      }
    });
  }
  return wrap(out);
}
}  // namespace

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      g, a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      g, a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      g, a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor add_broadcast(Graph& g, const Tensor& a, const Tensor& bias) {
  require_defined(a, "add_broadcast");
  require_defined(bias, "add_broadcast");
  if (bias.size() != a.cols()) {
    throw StructuralError("add_broadcast: bias " + shape_string(bias.shape()) + " does not match " +
                          shape_string(a.shape()));
  }
  const std::size_t n = a.rows(), m = a.cols();
  const bool track = tracks(g, {&a, &bias});
  NodePtr out = make_node(a.shape(), track);
  const auto& av = a.node()->value;
  const auto& bv = bias.node()->value;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) out->value[r * m + c] = av[r * m + c] + bv[c];
  }
  check_finite(*out, "add_broadcast");
  if (track) {
    NodePtr an = a.node(), bn = bias.node();
    NodePtr on = out;
    g.record([an, bn, on, n, m] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        auto& d = an->grad_buffer();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        auto& d = bn->grad_buffer();
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < m; ++c) d[c] += on->grad[r * m + c];
        }
      }
    });
  }
  return wrap(out);
}

Tensor scale(Graph& g, const Tensor& a, double factor) {
  return unary(
      g, a, "scale", [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor reshape(Graph& g, const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_size(shape) != a.size()) {
    throw StructuralError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  const bool track = tracks(g, {&a});
  NodePtr out = make_node(std::move(shape), track);
  out->value = a.node()->value;
  if (track) {
    NodePtr an = a.node();
    NodePtr on = out;
    g.record([an, on] {
      if (on->grad.empty()) return;
      auto& d = an->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += on->grad[i];
    });
  }
  return wrap(out);
}

Tensor tanh(Graph& g, const Tensor& a) {
  return unary(
      g, a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(Graph& g, const Tensor& a) {
  return unary(
      g, a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(Graph& g, const Tensor& a) {
  return unary(
      g, a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sigmoid(Graph& g, const Tensor& a) {
  return unary(
      g, a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor abs(Graph& g, const Tensor& a) {
  return unary(
      g, a, "abs", [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor softmax_lastdim(Graph& g, const Tensor& a) {
  require_defined(a, "softmax_lastdim");
  const std::size_t n = a.rows(), m = a.cols();
  const bool track = tracks(g, {&a});
  NodePtr out = make_node(a.shape(), track);
  const auto& av = a.node()->value;
  for (std::size_t r = 0; r < n; ++r) {
    const double* x = av.data() + r * m;
    double* y = out->value.data() + r * m;
    double mx = *std::max_element(x, x + m);
    double z = 0.0;
    for (std::size_t c = 0; c < m; ++c) z += (y[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < m; ++c) y[c] /= z;
  }
  check_finite(*out, "softmax_lastdim");
  if (track) {
    NodePtr an = a.node();
    NodePtr on = out;
    g.record([an, on, n, m] {
      if (on->grad.empty()) return;
      auto& d = an->grad_buffer();
      for (std::size_t r = 0; r < n; ++r) {
        const double* y = on->value.data() + r * m;
        const double* dy = on->grad.data() + r * m;
        double dot = 0.0;
        for (std::size_t c = 0; c < m; ++c) dot += dy[c] * y[c];
        for (std::size_t c = 0; c < m; ++c) d[r * m + c] += y[c] * (dy[c] - dot);
      }
    });
  }
  return wrap(out);
}

Tensor log_softmax_lastdim(Graph& g, const Tensor& a) {
  require_defined(a, "log_softmax_lastdim");
  const std::size_t n = a.rows(), m = a.cols();
  const bool track = tracks(g, {&a});
  NodePtr out = make_node(a.shape(), track);
  const auto& av = a.node()->value;
  for (std::size_t r = 0; r < n; ++r) {
    const double* x = av.data() + r * m;
    double* y = out->value.data() + r * m;
    double mx = *std::max_element(x, x + m);
    double z = 0.0;
    for (std::size_t c = 0; c < m; ++c) z += std::exp(x[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < m; ++c) y[c] = x[c] - lse;
  }
  check_finite(*out, "log_softmax_lastdim");
  if (track) {
    NodePtr an = a.node();
    NodePtr on = out;
    g.record([an, on, n, m] {
      if (on->grad.empty()) return;
      auto& d = an->grad_buffer();
      for (std::size_t r = 0; r < n; ++r) {
        const double* y = on->value.data() + r * m;
        const double* dy = on->grad.data() + r * m;
        double total = 0.0;
        for (std::size_t c = 0; c < m; ++c) total += dy[c];
        for (std::size_t c = 0; c < m; ++c) d[r * m + c] += dy[c] - std::exp(y[c]) * total;
      }
    });
  }
  return wrap(out);
}

Tensor sum_lastdim(Graph& g, const Tensor& a) {
  require_defined(a, "sum_lastdim");
  const std::size_t n = a.rows(), m = a.cols();
  Shape shape = a.shape();
  if (!shape.empty()) shape.pop_back();
  const bool track = tracks(g, {&a});
  NodePtr out = make_node(shape, track);
  const auto& av = a.node()->value;
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += av[r * m + c];
    out->value[r] = s;
  }
  check_finite(*out, "sum_lastdim");
  if (track) {
    NodePtr an = a.node();
    NodePtr on = out;
    g.record([an, on, n, m] {
      if (on->grad.empty()) return;
      auto& d = an->grad_buffer();
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < m; ++c) d[r * m + c] += on->grad[r];
      }
    });
  }
  return wrap(out);
}

Tensor concat_lastdim(Graph& g, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw StructuralError("concat_lastdim: no inputs");
  const std::size_t n = parts.front().rows();
  std::size_t total_cols = 0;
  bool track = false;
  for (const Tensor& p : parts) {
    require_defined(p, "concat_lastdim");
    if (p.rows() != n) throw StructuralError("concat_lastdim: row count mismatch");
    total_cols += p.cols();
    track = track || p.requires_grad();
  }
  track = track && g.recording();
  Shape shape = parts.front().shape();
  if (shape.empty()) shape.push_back(1);
  shape.back() = total_cols;
  NodePtr out = make_node(shape, track);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t m = p.cols();
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(p.node()->value.data() + r * m, m, out->value.data() + r * total_cols + offset);
    }
    offset += m;
  }
  if (track) {
    std::vector<NodePtr> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.node());
    NodePtr on = out;
    g.record([nodes, on, n, total_cols] {
      if (on->grad.empty()) return;
      std::size_t off = 0;
      for (const NodePtr& pn : nodes) {
        const std::size_t m = cols_of(pn->shape);
        if (pn->requires_grad) {
          auto& d = pn->grad_buffer();
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < m; ++c) d[r * m + c] += on->grad[r * total_cols + off + c];
          }
        }
        off += m;
      }
    });
  }
  return wrap(out);
}

Tensor pick_lastdim(Graph& g, const Tensor& a, std::span<const std::size_t> index) {
  require_defined(a, "pick_lastdim");
  const std::size_t n = a.rows(), m = a.cols();
  if (index.size() != n) throw StructuralError("pick_lastdim: one index per row required");
  std::vector<std::size_t> idx(index.begin(), index.end());
  for (std::size_t i : idx) {
    if (i >= m) throw StructuralError("pick_lastdim: index out of range");
  }
  const bool track = tracks(g, {&a});
  NodePtr out = make_node({n}, track);
  for (std::size_t r = 0; r < n; ++r) out->value[r] = a.node()->value[r * m + idx[r]];
  if (track) {
    NodePtr an = a.node();
    NodePtr on = out;
    g.record([an, on, idx = std::move(idx), m] {
      if (on->grad.empty()) return;
      auto& d = an->grad_buffer();
      for (std::size_t r = 0; r < idx.size(); ++r) d[r * m + idx[r]] += on->grad[r];
    });
  }
  return wrap(out);
}

Tensor sum(Graph& g, const Tensor& a) {
  require_defined(a, "sum");
  const bool track = tracks(g, {&a});
  NodePtr out = make_node({}, track);
  double s = 0.0;
  for (double v : a.node()->value) s += v;
  out->value[0] = s;
  check_finite(*out, "sum");
  if (track) {
    NodePtr an = a.node();
    NodePtr on = out;
    g.record([an, on] {
      if (on->grad.empty()) return;
      auto& d = an->grad_buffer();
      for (double& x : d) x += on->grad[0];
    });
  }
  return wrap(out);
}

Tensor mean(Graph& g, const Tensor& a) {
  if (a.size() == 0) throw StructuralError("mean of an empty tensor");
  return scale(g, sum(g, a), 1.0 / static_cast<double>(a.size()));
}

Tensor gather_rows(Graph& g, const Tensor& a, std::span<const std::size_t> index) {
  require_defined(a, "gather_rows");
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<std::size_t> idx(index.begin(), index.end());
  for (std::size_t i : idx) {
    if (i >= n) throw StructuralError("gather_rows: row index out of range");
  }
  const bool track = tracks(g, {&a});
  NodePtr out = make_node({idx.size(), m}, track);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(a.node()->value.data() + idx[r] * m, m, out->value.data() + r * m);
  }
  if (track) {
    NodePtr an = a.node();
    NodePtr on = out;
    g.record([an, on, idx = std::move(idx), m] {
      if (on->grad.empty()) return;
      auto& d = an->grad_buffer();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        double* dst = d.data() + idx[r] * m;
        const double* src = on->grad.data() + r * m;
        for (std::size_t c = 0; c < m; ++c) dst[c] += src[c];
      }
    });
  }
  return wrap(out);
}

Tensor scatter_rows(Graph& g, const Tensor& a, std::span<const std::size_t> index, std::size_t rows) {
  require_defined(a, "scatter_rows");
  const std::size_t m = a.cols();
  if (index.size() != a.rows()) throw StructuralError("scatter_rows: one target row per input row required");
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<bool> seen(rows, false);
  for (std::size_t i : idx) {
    if (i >= rows || seen[i]) throw StructuralError("scatter_rows: target rows must be distinct and in range");
    seen[i] = true;
  }
  const bool track = tracks(g, {&a});
  NodePtr out = make_node({rows, m}, track);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(a.node()->value.data() + r * m, m, out->value.data() + idx[r] * m);
  }
  if (track) {
    NodePtr an = a.node();
    NodePtr on = out;
    g.record([an, on, idx = std::move(idx), m] {
      if (on->grad.empty()) return;
      auto& d = an->grad_buffer();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        for (std::size_t c = 0; c < m; ++c) d[r * m + c] += on->grad[idx[r] * m + c];
      }
    });
  }
  return wrap(out);
}

Tensor dropout(Graph& g, const Tensor& a, double p, bool train, Rng& rng) {
  require_defined(a, "dropout");
  if (!(p >= 0.0 && p < 1.0)) throw StructuralError("dropout: p must be in [0, 1)");
  if (!train || p == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(a.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& m : mask) m = u(rng) < p ? 0.0 : keep_scale;
  const bool track = tracks(g, {&a});
  NodePtr out = make_node(a.shape(), track);
  for (std::size_t i = 0; i < mask.size(); ++i) out->value[i] = a.node()->value[i] * mask[i];
  if (track) {
    NodePtr an = a.node();
    NodePtr on = out;
    g.record([an, on, mask = std::move(mask)] {
      if (on->grad.empty()) return;
      auto& d = an->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += on->grad[i] * mask[i];
    });
  }
  return wrap(out);
}

Tensor segment_softmax(Graph& g, const Tensor& logits, const Segments& seg) {
  require_defined(logits, "segment_softmax");
  const std::size_t n = logits.size();
  check_segments(seg, n, "segment_softmax");
  const bool track = tracks(g, {&logits});
  NodePtr out = make_node({n}, track);
  const auto& x = logits.node()->value;
  for (std::size_t s = 0; s + 1 < seg.size(); ++s) {
    const std::size_t b = seg[s], e = seg[s + 1];
    if (b == e) continue;
    double mx = *std::max_element(x.begin() + static_cast<std::ptrdiff_t>(b), x.begin() + static_cast<std::ptrdiff_t>(e));
    double z = 0.0;
    for (std::size_t i = b; i < e; ++i) z += (out->value[i] = std::exp(x[i] - mx));
    for (std::size_t i = b; i < e; ++i) out->value[i] /= z;
  }
  check_finite(*out, "segment_softmax");
  if (track) {
    NodePtr an = logits.node();
    NodePtr on = out;
    g.record([an, on, seg] {
      if (on->grad.empty()) return;
      auto& d = an->grad_buffer();
      for (std::size_t s = 0; s + 1 < seg.size(); ++s) {
        double dot = 0.0;
        for (std::size_t i = seg[s]; i < seg[s + 1]; ++i) dot += on->grad[i] * on->value[i];
        for (std::size_t i = seg[s]; i < seg[s + 1]; ++i) d[i] += on->value[i] * (on->grad[i] - dot);
      }
    });
  }
  return wrap(out);
}

Tensor segment_weighted_sum(Graph& g, const Tensor& weights, const Tensor& x, const Segments& seg) {
  require_defined(weights, "segment_weighted_sum");
  require_defined(x, "segment_weighted_sum");
  const std::size_t n = x.rows(), m = x.cols();
  if (weights.size() != n) throw StructuralError("segment_weighted_sum: one weight per row required");
  check_segments(seg, n, "segment_weighted_sum");
  const std::size_t count = seg.size() - 1;
  const bool track = tracks(g, {&weights, &x});
  NodePtr out = make_node({count, m}, track);
  const auto& w = weights.node()->value;
  const auto& xv = x.node()->value;
  for (std::size_t s = 0; s < count; ++s) {
    double* o = out->value.data() + s * m;
    for (std::size_t i = seg[s]; i < seg[s + 1]; ++i) {
      for (std::size_t c = 0; c < m; ++c) o[c] += w[i] * xv[i * m + c];
    }
  }
  check_finite(*out, "segment_weighted_sum");
  if (track) {
    NodePtr wn = weights.node(), xn = x.node();
    NodePtr on = out;
    g.record([wn, xn, on, seg, count, m] {
      if (on->grad.empty()) return;
      for (std::size_t s = 0; s < count; ++s) {
        const double* go = on->grad.data() + s * m;
        for (std::size_t i = seg[s]; i < seg[s + 1]; ++i) {
          if (wn->requires_grad) {
            double dot = 0.0;
            for (std::size_t c = 0; c < m; ++c) dot += go[c] * xn->value[i * m + c];
            wn->grad_buffer()[i] += dot;
          }
          if (xn->requires_grad) {
            auto& dx = xn->grad_buffer();
            const double wi = wn->value[i];
            for (std::size_t c = 0; c < m; ++c) dx[i * m + c] += wi * go[c];
          }
        }
      }
    });
  }
  return wrap(out);
}

Tensor segment_attention(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v, const Segments& seg,
                         std::size_t heads) {
  require_defined(q, "segment_attention");
  require_defined(k, "segment_attention");
  require_defined(v, "segment_attention");
  require_same_shape(q, k, "segment_attention");
  require_same_shape(q, v, "segment_attention");
  const std::size_t n = q.rows(), d = q.cols();
  if (heads == 0 || d % heads != 0) throw StructuralError("segment_attention: width not divisible by heads");
  check_segments(seg, n, "segment_attention");
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool track = tracks(g, {&q, &k, &v});
  NodePtr out = make_node(q.shape(), track);

  // Attention probabilities per (segment, head), kept for the backward pass.
  auto probs = std::make_shared<std::vector<RowMat>>();
  probs->reserve((seg.size() - 1) * heads);
  const double* qv = q.node()->value.data();
  const double* kv = k.node()->value.data();
  const double* vv = v.node()->value.data();
  for (std::size_t s = 0; s + 1 < seg.size(); ++s) {
    const std::size_t b = seg[s];
    const auto len = static_cast<Eigen::Index>(seg[s + 1] - b);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = b * d + h * dh;
      ConstStridedMap qs(qv + off, len, static_cast<Eigen::Index>(dh), Eigen::OuterStride<>(d));
      ConstStridedMap ks(kv + off, len, static_cast<Eigen::Index>(dh), Eigen::OuterStride<>(d));
      ConstStridedMap vs(vv + off, len, static_cast<Eigen::Index>(dh), Eigen::OuterStride<>(d));
      RowMat p = (qs * ks.transpose()) * inv_sqrt;
      for (Eigen::Index r = 0; r < len; ++r) {
        const double mx = p.row(r).maxCoeff();
        p.row(r) = (p.row(r).array() - mx).exp();
        p.row(r) /= p.row(r).sum();
      }
      StridedMap(out->value.data() + off, len, static_cast<Eigen::Index>(dh), Eigen::OuterStride<>(d)).noalias() =
          p * vs;
      if (track) probs->push_back(std::move(p));
    }
  }
  check_finite(*out, "segment_attention");
  if (track) {
    NodePtr qn = q.node(), kn = k.node(), vn = v.node();
    NodePtr on = out;
    g.record([qn, kn, vn, on, seg, heads, d, dh, inv_sqrt, probs] {
      if (on->grad.empty()) return;
      double* dq = qn->requires_grad ? qn->grad_buffer().data() : nullptr;
      double* dk = kn->requires_grad ? kn->grad_buffer().data() : nullptr;
      double* dv = vn->requires_grad ? vn->grad_buffer().data() : nullptr;
      std::size_t pi = 0;
      for (std::size_t s = 0; s + 1 < seg.size(); ++s) {
        const std::size_t b = seg[s];
        const auto len = static_cast<Eigen::Index>(seg[s + 1] - b);
        for (std::size_t h = 0; h < heads; ++h, ++pi) {
          const std::size_t off = b * d + h * dh;
          const auto w = static_cast<Eigen::Index>(dh);
          const Eigen::OuterStride<> stride(d);
          const RowMat& p = (*probs)[pi];
          ConstStridedMap go(on->grad.data() + off, len, w, stride);
          ConstStridedMap qs(qn->value.data() + off, len, w, stride);
          ConstStridedMap ks(kn->value.data() + off, len, w, stride);
          ConstStridedMap vs(vn->value.data() + off, len, w, stride);
          if (dv) StridedMap(dv + off, len, w, stride).noalias() += p.transpose() * go;
          RowMat dp = go * vs.transpose();
          RowMat ds = p.array() * (dp.colwise() - (dp.array() * p.array()).rowwise().sum().matrix()).array();
          ds *= inv_sqrt;
          if (dq) StridedMap(dq + off, len, w, stride).noalias() += ds * ks;
          if (dk) StridedMap(dk + off, len, w, stride).noalias() += ds.transpose() * qs;
        }
      }
    });
  }
  return wrap(out);
}

}  // namespace qrec::ad
