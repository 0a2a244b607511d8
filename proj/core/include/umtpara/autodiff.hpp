#pragma once

// Reverse-mode differentiation over row-major 2-D tensors.
//
// Every op appends a node to a Tape holding its forward value and a closure
// that pushes the node's gradient back to its inputs. Sequence models work on
// "packed" tensors: the rows of several sentences are stacked, and ops that
// need sentence boundaries (attention, pooling) take a list of Segments.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "umtpara/corpus.hpp"

namespace umtpara::nn {

template <typename T>
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}

  std::size_t size() const { return data.size(); }
  std::vector<std::size_t> shape() const { return {rows, cols}; }
  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  T operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<T> row(std::size_t r) { return std::span<T>(data).subspan(r * cols, cols); }
  std::span<const T> row(std::size_t r) const {
    return std::span<const T>(data).subspan(r * cols, cols);
  }
  T scalar() const;
};

std::string shape_string(std::size_t rows, std::size_t cols);

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

// Owns parameters in registration order; addresses stay stable.
template <typename T>
class ParameterStore {
 public:
  Parameter<T>& add(std::string name, std::size_t rows, std::size_t cols);
  std::vector<Parameter<T>*> all() const;
  Parameter<T>* find(std::string_view name) const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

struct Var {
  std::uint32_t id = 0;
};

// Half-open row range [offset, offset + length) of one sentence in a packed tensor.
struct Segment {
  std::uint32_t offset = 0;
  std::uint32_t length = 0;
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  // With grad disabled no closures are kept, which is what inference wants.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor<T> value);
  // Trainable leaf: backward accumulates into p.grad.
  Var parameter(Parameter<T>& p);
  // Leaf that reads p.value but never receives gradient.
  Var frozen(const Parameter<T>& p);

  const Tensor<T>& value(Var v) const;
  // Gradient buffer of a node; only valid inside backward closures.
  Tensor<T>& grad(Var v);
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  // Records an op output. `back` runs only when some input requires grad.
  Var record(Tensor<T> value, std::initializer_list<Var> inputs, Backward back);

  // Seeds d(loss)/d(loss) = 1 and runs every closure once in reverse order.
  void backward(Var loss);

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;  // parameter value, not copied
    Tensor<T> grad;
    Tensor<T>* grad_target = nullptr;  // parameter grad buffer
    bool requires_grad = false;
    Backward back;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

// ---------------------------------------------------------------------------
// Primitive ops. Shape mismatches raise ShapeError naming the op and shapes.

template <typename T> Var detach(Tape<T>& t, Var x);
template <typename T> Var matmul(Tape<T>& t, Var a, Var b);
// x * w + b, with b a 1 x cols row broadcast over rows.
template <typename T> Var affine(Tape<T>& t, Var x, Var w, Var b);
template <typename T> Var add(Tape<T>& t, Var a, Var b);
// Adds a 1 x cols row to every row of x.
template <typename T> Var add_row(Tape<T>& t, Var x, Var row);
template <typename T> Var scale(Tape<T>& t, Var x, T factor);
template <typename T> Var relu(Tape<T>& t, Var x);
template <typename T> Var tanh(Tape<T>& t, Var x);
template <typename T> Var softmax(Tape<T>& t, Var x);
template <typename T> Var log_softmax(Tape<T>& t, Var x);
template <typename T> Var layer_norm(Tape<T>& t, Var x, Var gain, Var bias);
// Rows of `table` selected by ids.
template <typename T> Var embedding(Tape<T>& t, Var table, std::span<const TokenId> ids);
// Rows of x in the given order (indices may repeat).
template <typename T> Var gather_rows(Tape<T>& t, Var x, std::span<const std::uint32_t> rows);
template <typename T> Var concat_rows(Tape<T>& t, Var a, Var b);
// Mean over the rows of each segment: one output row per segment.
template <typename T> Var segment_mean(Tape<T>& t, Var x, std::span<const Segment> segments);
// Multi-head scaled dot-product attention. Query segment i attends to key
// segment i only; with `causal`, query row j sees key rows 0..j of its segment.
template <typename T>
Var attention(Tape<T>& t, Var q, Var k, Var v, std::size_t heads,
              std::span<const Segment> q_segments, std::span<const Segment> k_segments,
              bool causal);
// sum_i weights[i] * -log softmax(logits_i)[targets[i]], a 1 x 1 scalar.
template <typename T>
Var cross_entropy(Tape<T>& t, Var logits, std::span<const TokenId> targets,
                  std::span<const T> weights);

}  // namespace umtpara::nn
