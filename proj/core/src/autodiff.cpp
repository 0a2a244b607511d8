#include "umtpara/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "umtpara/error.hpp"

namespace umtpara::nn {

namespace {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<RowMajor<T>>;
template <typename T>
using CMapM = Eigen::Map<const RowMajor<T>>;

template <typename T>
MapM<T> as_matrix(Tensor<T>& x) {
  return MapM<T>(x.data.data(), static_cast<Eigen::Index>(x.rows), static_cast<Eigen::Index>(x.cols));
}
template <typename T>
CMapM<T> as_matrix(const Tensor<T>& x) {
  return CMapM<T>(x.data.data(), static_cast<Eigen::Index>(x.rows),
                  static_cast<Eigen::Index>(x.cols));
}

[[noreturn]] void shape_fail(const std::string& op, const std::string& detail) {
  throw ShapeError(op + ": " + detail);
}

template <typename T>
std::string shape_of(const Tensor<T>& x) {
  return shape_string(x.rows, x.cols);
}

template <typename T>
void check_segments(const std::string& op, std::span<const Segment> segs, std::size_t rows) {
  for (const auto& s : segs) {
    if (static_cast<std::size_t>(s.offset) + s.length > rows) {
      shape_fail(op, "segment [" + std::to_string(s.offset) + ", +" + std::to_string(s.length) +
                         ") exceeds " + std::to_string(rows) + " rows");
    }
  }
}

}  // namespace

std::string shape_string(std::size_t rows, std::size_t cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

template <typename T>
T Tensor<T>::scalar() const {
  if (rows != 1 || cols != 1) throw ShapeError("scalar: tensor has shape " + shape_string(rows, cols));
  return data[0];
}

// ---------------------------------------------------------------------------

template <typename T>
Parameter<T>& ParameterStore<T>::add(std::string name, std::size_t rows, std::size_t cols) {
  if (find(name) != nullptr) throw InputError("duplicate parameter name " + name);
  auto p = std::make_unique<Parameter<T>>();
  p->name = std::move(name);
  p->value = Tensor<T>(rows, cols);
  p->grad = Tensor<T>(rows, cols);
  params_.push_back(std::move(p));
  return *params_.back();
}

template <typename T>
std::vector<Parameter<T>*> ParameterStore<T>::all() const {
  std::vector<Parameter<T>*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

template <typename T>
Parameter<T>* ParameterStore<T>::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

template <typename T>
std::size_t ParameterStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) std::fill(p->grad.data.begin(), p->grad.data.end(), T(0));
}

// ---------------------------------------------------------------------------

template <typename T>
Var Tape<T>::push(Node node) {
  if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max()) {
    throw Error("tape exhausted its node index space");
  }
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::parameter(Parameter<T>& p) {
  Node n;
  n.external = &p.value;
  n.grad_target = &p.grad;
  n.requires_grad = grad_enabled_;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::frozen(const Parameter<T>& p) {
  Node n;
  n.external = &p.value;
  return push(std::move(n));
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  const auto& n = nodes_.at(v.id);
  return n.external != nullptr ? *n.external : n.value;
}

template <typename T>
Tensor<T>& Tape<T>::grad(Var v) {
  auto& n = nodes_[v.id];
  return n.grad_target != nullptr ? *n.grad_target : n.grad;
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, std::initializer_list<Var> inputs, Backward back) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (Var in : inputs) {
      if (nodes_[in.id].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) n.back = std::move(back);
  }
  return push(std::move(n));
}

template <typename T>
void Tape<T>::backward(Var loss) {
  const auto& lv = value(loss);
  if (lv.rows != 1 || lv.cols != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + shape_of(lv));
  }
  if (!grad_enabled_) throw Error("backward: tape was created with gradients disabled");
  for (auto& n : nodes_) {
    if (n.requires_grad && n.grad_target == nullptr) {
      const auto& v = n.external != nullptr ? *n.external : n.value;
      n.grad = Tensor<T>(v.rows, v.cols);
    }
  }
  if (!nodes_[loss.id].requires_grad) return;
  grad(loss).data[0] += T(1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.back) n.back(*this);
  }
}

// ---------------------------------------------------------------------------
// Ops

template <typename T>
Var detach(Tape<T>& t, Var x) {
  return t.constant(t.value(x));
}

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  if (A.cols != B.rows) shape_fail("matmul", shape_of(A) + " x " + shape_of(B));
  Tensor<T> out(A.rows, B.cols);
  as_matrix(out).noalias() = as_matrix(A) * as_matrix(B);
  Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(std::move(out), {a, b}, [a, b, self](Tape<T>& t) {
    const auto& g = t.grad(self);
    if (t.requires_grad(a)) as_matrix(t.grad(a)).noalias() += as_matrix(g) * as_matrix(t.value(b)).transpose();
    if (t.requires_grad(b)) as_matrix(t.grad(b)).noalias() += as_matrix(t.value(a)).transpose() * as_matrix(g);
  });
}

template <typename T>
Var affine(Tape<T>& t, Var x, Var w, Var b) {
  const auto& X = t.value(x);
  const auto& W = t.value(w);
  const auto& Bv = t.value(b);
  if (X.cols != W.rows || Bv.rows != 1 || Bv.cols != W.cols) {
    shape_fail("affine", shape_of(X) + " x " + shape_of(W) + " + " + shape_of(Bv));
  }
  Tensor<T> out(X.rows, W.cols);
  auto O = as_matrix(out);
  O.noalias() = as_matrix(X) * as_matrix(W);
  O.rowwise() += as_matrix(Bv).row(0);
  Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(std::move(out), {x, w, b}, [x, w, b, self](Tape<T>& t) {
    const auto G = as_matrix(t.grad(self));
    if (t.requires_grad(x)) as_matrix(t.grad(x)).noalias() += G * as_matrix(t.value(w)).transpose();
    if (t.requires_grad(w)) as_matrix(t.grad(w)).noalias() += as_matrix(t.value(x)).transpose() * G;
    if (t.requires_grad(b)) as_matrix(t.grad(b)).row(0) += G.colwise().sum();
  });
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  if (A.rows != B.rows || A.cols != B.cols) shape_fail("add", shape_of(A) + " + " + shape_of(B));
  Tensor<T> out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
  Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(std::move(out), {a, b}, [a, b, self](Tape<T>& t) {
    const auto& g = t.grad(self);
    for (Var in : {a, b}) {
      if (!t.requires_grad(in)) continue;
      auto& gi = t.grad(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi.data[i] += g.data[i];
    }
  });
}

template <typename T>
Var add_row(Tape<T>& t, Var x, Var r) {
  const auto& X = t.value(x);
  const auto& R = t.value(r);
  if (R.rows != 1 || R.cols != X.cols) shape_fail("add_row", shape_of(X) + " + " + shape_of(R));
  Tensor<T> out = X;
  as_matrix(out).rowwise() += as_matrix(R).row(0);
  Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(std::move(out), {x, r}, [x, r, self](Tape<T>& t) {
    const auto& g = t.grad(self);
    if (t.requires_grad(x)) as_matrix(t.grad(x)) += as_matrix(g);
    if (t.requires_grad(r)) as_matrix(t.grad(r)).row(0) += as_matrix(g).colwise().sum();
  });
}

template <typename T>
Var scale(Tape<T>& t, Var x, T factor) {
  Tensor<T> out = t.value(x);
  for (auto& v : out.data) v *= factor;
  Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(std::move(out), {x}, [x, factor, self](Tape<T>& t) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += factor * g.data[i];
  });
}

template <typename T>
Var relu(Tape<T>& t, Var x) {
  Tensor<T> out = t.value(x);
  for (auto& v : out.data) v = v > T(0) ? v : T(0);
  Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(std::move(out), {x}, [x, self](Tape<T>& t) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(x);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv.data[i] > T(0)) gx.data[i] += g.data[i];
    }
  });
}

template <typename T>
Var tanh(Tape<T>& t, Var x) {
  Tensor<T> out = t.value(x);
  for (auto& v : out.data) v = std::tanh(v);
  Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(std::move(out), {x}, [x, self](Tape<T>& t) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i] * (T(1) - y.data[i] * y.data[i]);
  });
}

namespace {

template <typename T>
void softmax_row(std::span<const T> in, std::span<T> out) {
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : in) mx = std::max(mx, v);
  T sum = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
}

template <typename T>
void log_softmax_row(std::span<const T> in, std::span<T> out) {
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : in) mx = std::max(mx, v);
  T sum = 0;
  for (T v : in) sum += std::exp(v - mx);
  const T lse = mx + std::log(sum);
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] - lse;
}

}  // namespace

template <typename T>
Var softmax(Tape<T>& t, Var x) {
  const auto& X = t.value(x);
  Tensor<T> out(X.rows, X.cols);
  for (std::size_t r = 0; r < X.rows; ++r) softmax_row<T>(X.row(r), out.row(r));
  Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(std::move(out), {x}, [x, self](Tape<T>& t) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& gx = t.grad(x);
    for (std::size_t r = 0; r < y.rows; ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < y.cols; ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols; ++c) gx(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

template <typename T>
Var log_softmax(Tape<T>& t, Var x) {
  const auto& X = t.value(x);
  Tensor<T> out(X.rows, X.cols);
  for (std::size_t r = 0; r < X.rows; ++r) log_softmax_row<T>(X.row(r), out.row(r));
  Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(std::move(out), {x}, [x, self](Tape<T>& t) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& gx = t.grad(x);
    for (std::size_t r = 0; r < y.rows; ++r) {
      T gsum = 0;
      for (std::size_t c = 0; c < y.cols; ++c) gsum += g(r, c);
      for (std::size_t c = 0; c < y.cols; ++c) gx(r, c) += g(r, c) - std::exp(y(r, c)) * gsum;
    }
  });
}

template <typename T>
Var layer_norm(Tape<T>& t, Var x, Var gain, Var bias) {
  constexpr T kEps = T(1e-5);
  const auto& X = t.value(x);
  const auto& Gm = t.value(gain);
  const auto& Bt = t.value(bias);
  if (Gm.rows != 1 || Gm.cols != X.cols || Bt.rows != 1 || Bt.cols != X.cols) {
    shape_fail("layer_norm", shape_of(X) + " with gain " + shape_of(Gm) + " bias " + shape_of(Bt));
  }
  const std::size_t n = X.cols;
  Tensor<T> out(X.rows, n);
  Tensor<T> xhat(X.rows, n);
  std::vector<T> inv_std(X.rows);
  for (std::size_t r = 0; r < X.rows; ++r) {
    T mean = 0;
    for (std::size_t c = 0; c < n; ++c) mean += X(r, c);
    mean /= static_cast<T>(n);
    T var = 0;
    for (std::size_t c = 0; c < n; ++c) var += (X(r, c) - mean) * (X(r, c) - mean);
    var /= static_cast<T>(n);
    inv_std[r] = T(1) / std::sqrt(var + kEps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat(r, c) = (X(r, c) - mean) * inv_std[r];
      out(r, c) = xhat(r, c) * Gm(0, c) + Bt(0, c);
    }
  }
  Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(std::move(out), {x, gain, bias},
                  [x, gain, bias, self, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t) {
                    const auto& g = t.grad(self);
                    const auto& Gm = t.value(gain);
                    const std::size_t n = g.cols;
                    if (t.requires_grad(gain) || t.requires_grad(bias)) {
                      for (std::size_t r = 0; r < g.rows; ++r) {
                        for (std::size_t c = 0; c < n; ++c) {
                          if (t.requires_grad(gain)) t.grad(gain)(0, c) += g(r, c) * xhat(r, c);
                          if (t.requires_grad(bias)) t.grad(bias)(0, c) += g(r, c);
                        }
                      }
                    }
                    if (!t.requires_grad(x)) return;
                    auto& gx = t.grad(x);
                    for (std::size_t r = 0; r < g.rows; ++r) {
                      T mean_d = 0, mean_dx = 0;
                      for (std::size_t c = 0; c < n; ++c) {
                        const T d = g(r, c) * Gm(0, c);
                        mean_d += d;
                        mean_dx += d * xhat(r, c);
                      }
                      mean_d /= static_cast<T>(n);
                      mean_dx /= static_cast<T>(n);
                      for (std::size_t c = 0; c < n; ++c) {
                        const T d = g(r, c) * Gm(0, c);
                        gx(r, c) += inv_std[r] * (d - mean_d - xhat(r, c) * mean_dx);
                      }
                    }
                  });
}

template <typename T>
Var embedding(Tape<T>& t, Var table, std::span<const TokenId> ids) {
  const auto& E = t.value(table);
  Tensor<T> out(ids.size(), E.cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= E.rows) {
      shape_fail("embedding", "id " + std::to_string(ids[i]) + " outside table " + shape_of(E));
    }
    const auto src = E.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(std::move(out), {table},
                  [table, self, ids = std::vector<TokenId>(ids.begin(), ids.end())](Tape<T>& t) {
                    const auto& g = t.grad(self);
                    auto& ge = t.grad(table);
                    for (std::size_t i = 0; i < ids.size(); ++i) {
                      auto dst = ge.row(static_cast<std::size_t>(ids[i]));
                      const auto src = g.row(i);
                      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                    }
                  });
}

template <typename T>
Var gather_rows(Tape<T>& t, Var x, std::span<const std::uint32_t> rows) {
  const auto& X = t.value(x);
  Tensor<T> out(rows.size(), X.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= X.rows) shape_fail("gather_rows", "row " + std::to_string(rows[i]) + " of " + shape_of(X));
    const auto src = X.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(std::move(out), {x},
                  [x, self, rows = std::vector<std::uint32_t>(rows.begin(), rows.end())](Tape<T>& t) {
                    const auto& g = t.grad(self);
                    auto& gx = t.grad(x);
                    for (std::size_t i = 0; i < rows.size(); ++i) {
                      auto dst = gx.row(rows[i]);
                      const auto src = g.row(i);
                      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                    }
                  });
}

template <typename T>
Var concat_rows(Tape<T>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  if (A.cols != B.cols && A.rows > 0 && B.rows > 0) {
    shape_fail("concat_rows", shape_of(A) + " ++ " + shape_of(B));
  }
  Tensor<T> out(A.rows + B.rows, A.rows > 0 ? A.cols : B.cols);
  std::copy(A.data.begin(), A.data.end(), out.data.begin());
  std::copy(B.data.begin(), B.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(A.size()));
  Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(std::move(out), {a, b}, [a, b, self](Tape<T>& t) {
    const auto& g = t.grad(self);
    const std::size_t split = t.value(a).size();
    if (t.requires_grad(a)) {
      auto& ga = t.grad(a);
      for (std::size_t i = 0; i < split; ++i) ga.data[i] += g.data[i];
    }
    if (t.requires_grad(b)) {
      auto& gb = t.grad(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] += g.data[split + i];
    }
  });
}

template <typename T>
Var segment_mean(Tape<T>& t, Var x, std::span<const Segment> segments) {
  const auto& X = t.value(x);
  check_segments<T>("segment_mean", segments, X.rows);
  Tensor<T> out(segments.size(), X.cols);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (segments[s].length == 0) shape_fail("segment_mean", "empty segment");
    for (std::size_t r = segments[s].offset; r < segments[s].offset + segments[s].length; ++r) {
      for (std::size_t c = 0; c < X.cols; ++c) out(s, c) += X(r, c);
    }
    for (std::size_t c = 0; c < X.cols; ++c) out(s, c) /= static_cast<T>(segments[s].length);
  }
  Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(std::move(out), {x},
                  [x, self, segs = std::vector<Segment>(segments.begin(), segments.end())](Tape<T>& t) {
                    const auto& g = t.grad(self);
                    auto& gx = t.grad(x);
                    for (std::size_t s = 0; s < segs.size(); ++s) {
                      const T inv = T(1) / static_cast<T>(segs[s].length);
                      for (std::size_t r = segs[s].offset; r < segs[s].offset + segs[s].length; ++r) {
                        for (std::size_t c = 0; c < g.cols; ++c) gx(r, c) += g(s, c) * inv;
                      }
                    }
                  });
}

template <typename T>
Var attention(Tape<T>& t, Var q, Var k, Var v, std::size_t heads,
              std::span<const Segment> q_segments, std::span<const Segment> k_segments,
              bool causal) {
  const auto& Q = t.value(q);
  const auto& K = t.value(k);
  const auto& V = t.value(v);
  const std::string op = "attention";
  if (Q.cols != K.cols || K.cols != V.cols || K.rows != V.rows) {
    shape_fail(op, "q " + shape_of(Q) + " k " + shape_of(K) + " v " + shape_of(V));
  }
  if (heads == 0 || Q.cols % heads != 0) {
    shape_fail(op, "width " + std::to_string(Q.cols) + " not divisible by " + std::to_string(heads) + " heads");
  }
  if (q_segments.size() != k_segments.size()) shape_fail(op, "query/key segment counts differ");
  check_segments<T>(op, q_segments, Q.rows);
  check_segments<T>(op, k_segments, K.rows);
  for (std::size_t s = 0; s < q_segments.size(); ++s) {
    if (k_segments[s].length == 0 && q_segments[s].length > 0) shape_fail(op, "query segment with no keys");
    if (causal && q_segments[s].length != k_segments[s].length) {
      shape_fail(op, "causal attention needs equal query and key segment lengths");
    }
  }
  const std::size_t dh = Q.cols / heads;
  const T scale_f = T(1) / std::sqrt(static_cast<T>(dh));

  // Probabilities for every (segment, head) block, stored contiguously.
  std::vector<std::size_t> block_offset(q_segments.size() + 1, 0);
  for (std::size_t s = 0; s < q_segments.size(); ++s) {
    block_offset[s + 1] = block_offset[s] + heads * q_segments[s].length * k_segments[s].length;
  }
  std::vector<T> probs(block_offset.back());
  Tensor<T> out(Q.rows, Q.cols);
  std::vector<T> scores;
  for (std::size_t s = 0; s < q_segments.size(); ++s) {
    const std::size_t lq = q_segments[s].length, lk = k_segments[s].length;
    const std::size_t qo = q_segments[s].offset, ko = k_segments[s].offset;
    for (std::size_t h = 0; h < heads; ++h) {
      T* P = probs.data() + block_offset[s] + h * lq * lk;
      const std::size_t c0 = h * dh;
      for (std::size_t i = 0; i < lq; ++i) {
        const std::size_t visible = causal ? i + 1 : lk;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < visible; ++j) {
          T dot = 0;
          for (std::size_t c = 0; c < dh; ++c) dot += Q(qo + i, c0 + c) * K(ko + j, c0 + c);
          P[i * lk + j] = dot * scale_f;
          mx = std::max(mx, P[i * lk + j]);
        }
        T sum = 0;
        for (std::size_t j = 0; j < visible; ++j) {
          P[i * lk + j] = std::exp(P[i * lk + j] - mx);
          sum += P[i * lk + j];
        }
        for (std::size_t j = 0; j < lk; ++j) P[i * lk + j] = j < visible ? P[i * lk + j] / sum : T(0);
        for (std::size_t j = 0; j < visible; ++j) {
          const T p = P[i * lk + j];
          for (std::size_t c = 0; c < dh; ++c) out(qo + i, c0 + c) += p * V(ko + j, c0 + c);
        }
      }
    }
  }
  Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(
      std::move(out), {q, k, v},
      [q, k, v, self, heads, dh, scale_f, causal, probs = std::move(probs),
       block_offset = std::move(block_offset),
       qs = std::vector<Segment>(q_segments.begin(), q_segments.end()),
       ks = std::vector<Segment>(k_segments.begin(), k_segments.end())](Tape<T>& t) {
        const auto& G = t.grad(self);
        const auto& Q = t.value(q);
        const auto& K = t.value(k);
        const auto& V = t.value(v);
        const bool gq = t.requires_grad(q), gk = t.requires_grad(k), gv = t.requires_grad(v);
        std::vector<T> dP;
        for (std::size_t s = 0; s < qs.size(); ++s) {
          const std::size_t lq = qs[s].length, lk = ks[s].length;
          const std::size_t qo = qs[s].offset, ko = ks[s].offset;
          for (std::size_t h = 0; h < heads; ++h) {
            const T* P = probs.data() + block_offset[s] + h * lq * lk;
            const std::size_t c0 = h * dh;
            dP.assign(lq * lk, T(0));
            for (std::size_t i = 0; i < lq; ++i) {
              const std::size_t visible = causal ? i + 1 : lk;
              for (std::size_t j = 0; j < visible; ++j) {
                T d = 0;
                for (std::size_t c = 0; c < dh; ++c) d += G(qo + i, c0 + c) * V(ko + j, c0 + c);
                dP[i * lk + j] = d;
                if (gv) {
                  auto& GV = t.grad(v);
                  const T p = P[i * lk + j];
                  for (std::size_t c = 0; c < dh; ++c) GV(ko + j, c0 + c) += p * G(qo + i, c0 + c);
                }
              }
              if (!gq && !gk) continue;
              T dot = 0;
              for (std::size_t j = 0; j < visible; ++j) dot += dP[i * lk + j] * P[i * lk + j];
              for (std::size_t j = 0; j < visible; ++j) {
                const T ds = P[i * lk + j] * (dP[i * lk + j] - dot) * scale_f;
                if (ds == T(0)) continue;
                if (gq) {
                  auto& GQ = t.grad(q);
                  for (std::size_t c = 0; c < dh; ++c) GQ(qo + i, c0 + c) += ds * K(ko + j, c0 + c);
                }
                if (gk) {
                  auto& GK = t.grad(k);
                  for (std::size_t c = 0; c < dh; ++c) GK(ko + j, c0 + c) += ds * Q(qo + i, c0 + c);
                }
              }
            }
          }
        }
      });
}

template <typename T>
Var cross_entropy(Tape<T>& t, Var logits, std::span<const TokenId> targets,
                  std::span<const T> weights) {
  const auto& L = t.value(logits);
  if (targets.size() != L.rows || weights.size() != L.rows) {
    shape_fail("cross_entropy", "logits " + shape_of(L) + " with " + std::to_string(targets.size()) +
                                    " targets and " + std::to_string(weights.size()) + " weights");
  }
  Tensor<T> logp(L.rows, L.cols);
  T loss = 0;
  for (std::size_t r = 0; r < L.rows; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= L.cols) {
      shape_fail("cross_entropy", "target " + std::to_string(targets[r]) + " outside " + shape_of(L));
    }
    log_softmax_row<T>(L.row(r), logp.row(r));
    loss -= weights[r] * logp(r, static_cast<std::size_t>(targets[r]));
  }
  Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(Tensor<T>(1, 1, loss), {logits},
                  [logits, self, logp = std::move(logp),
                   tg = std::vector<TokenId>(targets.begin(), targets.end()),
                   w = std::vector<T>(weights.begin(), weights.end())](Tape<T>& t) {
                    const T g = t.grad(self).data[0];
                    auto& gl = t.grad(logits);
                    for (std::size_t r = 0; r < logp.rows; ++r) {
                      const T f = g * w[r];
                      if (f == T(0)) continue;
                      for (std::size_t c = 0; c < logp.cols; ++c) gl(r, c) += f * std::exp(logp(r, c));
                      gl(r, static_cast<std::size_t>(tg[r])) -= f;
                    }
                  });
}

#define UMTPARA_INSTANTIATE(T)                                                                  \
  template struct Tensor<T>;                                                                    \
  template class ParameterStore<T>;                                                             \
  template class Tape<T>;                                                                       \
  template Var detach<T>(Tape<T>&, Var);                                                        \
  template Var matmul<T>(Tape<T>&, Var, Var);                                                   \
  template Var affine<T>(Tape<T>&, Var, Var, Var);                                              \
  template Var add<T>(Tape<T>&, Var, Var);                                                      \
  template Var add_row<T>(Tape<T>&, Var, Var);                                                  \
  template Var scale<T>(Tape<T>&, Var, T);                                                      \
  template Var relu<T>(Tape<T>&, Var);                                                          \
  template Var tanh<T>(Tape<T>&, Var);                                                          \
  template Var softmax<T>(Tape<T>&, Var);                                                       \
  template Var log_softmax<T>(Tape<T>&, Var);                                                   \
  template Var layer_norm<T>(Tape<T>&, Var, Var, Var);                                          \
  template Var embedding<T>(Tape<T>&, Var, std::span<const TokenId>);                           \
  template Var gather_rows<T>(Tape<T>&, Var, std::span<const std::uint32_t>);                   \
  template Var concat_rows<T>(Tape<T>&, Var, Var);                                              \
  template Var segment_mean<T>(Tape<T>&, Var, std::span<const Segment>);                        \
  template Var attention<T>(Tape<T>&, Var, Var, Var, std::size_t, std::span<const Segment>,     \
                            std::span<const Segment>, bool);                                    \
  template Var cross_entropy<T>(Tape<T>&, Var, std::span<const TokenId>, std::span<const T>);

UMTPARA_INSTANTIATE(float)
UMTPARA_INSTANTIATE(double)

}  // namespace umtpara::nn
