#pragma once

// Minimal define-by-run reverse-mode differentiation over dense row-major
// double tensors.
//
// Every op takes the Graph explicitly. When the graph is recording and any
// input requires a gradient, the op appends its backward closure to the
// graph; Graph::backward replays those closures in reverse. Most ops view
// their operands as matrices: the last dimension is the column count and all
// leading dimensions fold into rows.
//
// Variable-length sequences are packed back to back into one matrix and
// described by Segments (offsets of length count+1), so a batch of news
// titles needs no padding and no masks: padded positions simply do not exist.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace qrec::ad {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first written
  bool requires_grad = false;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  // Used by ops to hand out freshly computed nodes.
  static Tensor from_node(std::shared_ptr<Node> node) { return Tensor(std::move(node)); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t cols() const;
  std::size_t rows() const;

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  double item() const;
  double at(std::size_t row, std::size_t col) const { return node_->value[row * cols() + col]; }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

// Records backward closures for one step. Single use: backward() consumes it.
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return grad_enabled_ && !consumed_; }
  std::size_t size() const { return backward_fns_.size(); }
  void record(std::function<void()> fn) { backward_fns_.push_back(std::move(fn)); }

  // Seeds d(loss)/d(loss) = 1 and accumulates into every requires_grad
  // tensor reachable through recorded ops. Throws StructuralError for a
  // non-scalar loss and for a consumed graph.
  void backward(const Tensor& loss);

 private:
  std::vector<std::function<void()>> backward_fns_;
  bool grad_enabled_;
  bool consumed_ = false;
};

using Segments = std::vector<std::size_t>;

// Offsets from a list of lengths.
Segments segments_from_lengths(std::span<const std::size_t> lengths);

// Dense algebra.
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);
Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
// a[..., m] + bias[m] broadcast over rows.
Tensor add_broadcast(Graph& g, const Tensor& a, const Tensor& bias);
Tensor scale(Graph& g, const Tensor& a, double factor);
Tensor reshape(Graph& g, const Tensor& a, Shape shape);

// Element-wise nonlinearities.
Tensor tanh(Graph& g, const Tensor& a);
Tensor exp(Graph& g, const Tensor& a);
Tensor log(Graph& g, const Tensor& a);
Tensor sigmoid(Graph& g, const Tensor& a);
Tensor abs(Graph& g, const Tensor& a);

// Row-wise operations along the last dimension.
Tensor softmax_lastdim(Graph& g, const Tensor& a);
Tensor log_softmax_lastdim(Graph& g, const Tensor& a);
Tensor sum_lastdim(Graph& g, const Tensor& a);  // [..., m] -> [...]
Tensor concat_lastdim(Graph& g, const std::vector<Tensor>& parts);
// out[r] = a[r, index[r]].
Tensor pick_lastdim(Graph& g, const Tensor& a, std::span<const std::size_t> index);

// Reductions to a scalar.
Tensor sum(Graph& g, const Tensor& a);
Tensor mean(Graph& g, const Tensor& a);

// Row gather/scatter on the matrix view.
Tensor gather_rows(Graph& g, const Tensor& a, std::span<const std::size_t> index);
// out has `rows` rows; out[index[i]] = a[i], every other row zero.
Tensor scatter_rows(Graph& g, const Tensor& a, std::span<const std::size_t> index, std::size_t rows);

// Inverted dropout: identity when !train; otherwise zero with probability p
// and scale survivors by 1/(1-p).
Tensor dropout(Graph& g, const Tensor& a, double p, bool train, Rng& rng);

// Softmax of a flat vector independently inside each segment.
Tensor segment_softmax(Graph& g, const Tensor& logits, const Segments& seg);
// out[s] = sum_{i in s} w[i] * x[i]; empty segments yield zero rows.
Tensor segment_weighted_sum(Graph& g, const Tensor& weights, const Tensor& x, const Segments& seg);
// Multi-head scaled dot-product attention restricted to each segment: rows
// only attend to rows of their own segment. q, k, v are [n, d], d % heads == 0.
Tensor segment_attention(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v, const Segments& seg,
                         std::size_t heads);

}  // namespace qrec::ad
