#pragma once

// ============================================================================
// Tensor core: n-dimensional value container + reverse-mode autodiff tape.
//
// Design in one paragraph: a Tensor<T> is an immutable handle onto a
// TensorNode<T> (shape + flat row-major values + gradient buffer).  Ops build
// new tensors and, while a Tape<T> is active on the current thread, append a
// backward closure to that tape.  The tape is therefore an ordered record of
// executed operations — a Wengert list — and is topologically sorted by
// construction, so backward() is a single reverse sweep, no graph search.
//
// Gradient contract:
//   * backward(loss) requires a scalar loss recorded on the tape, otherwise
//     contract_error.
//   * Gradients of tape outputs (intermediates, including the loss) are reset
//     at the start of every backward run.
//   * Leaf gradients (parameters/inputs created with requires_grad=true) are
//     accumulated with "+=" and are NOT reset by backward — call clear_grad()
//     between steps.  Two identical backward passes therefore double a leaf's
//     gradient; this is asserted in the test-suite.
//
// Precision: everything is templated on T in {float, double}.  Training runs
// float for speed; gradient checks and numeric oracles run double.
// ============================================================================

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "canet/error.hpp"

namespace canet {

using Shape = std::vector<std::int64_t>;

// --------------------------------------------------------------------------
// Shape helpers
// --------------------------------------------------------------------------

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (std::int64_t d : s) n *= d;
  return n;
}

inline std::string format_shape(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline std::vector<std::int64_t> row_major_strides(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// NumPy broadcasting: shapes align on the trailing axes; a dimension of 1 (or
// a missing leading dimension) stretches.  Throws shape_error naming both
// shapes when they are incompatible.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t nd = std::max(a.size(), b.size());
  Shape out(nd, 1);
  for (std::size_t i = 0; i < nd; ++i) {
    const std::int64_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const std::int64_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw shape_error("cannot broadcast shapes " + format_shape(a) + " and " +
                        format_shape(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides for reading a tensor of shape `from` at coordinates of the
// broadcast shape `to`: stretched axes get stride 0.
inline std::vector<std::int64_t> broadcast_strides(const Shape& from,
                                                   const Shape& to) {
  std::vector<std::int64_t> st(to.size(), 0);
  const auto own = row_major_strides(from);
  const std::size_t off = to.size() - from.size();
  for (std::size_t i = 0; i < from.size(); ++i) {
    st[off + i] = from[i] == 1 && to[off + i] != 1 ? 0 : own[i];
  }
  return st;
}

// --------------------------------------------------------------------------
// Tape plumbing
// --------------------------------------------------------------------------

template <class T>
struct TensorNode;

template <class T>
struct TapeImpl {
  // Backward closures in execution (forward) order.
  std::vector<std::function<void()>> ops;
  // Every node produced by a recorded op; their grads are reset per backward.
  std::vector<std::shared_ptr<TensorNode<T>>> outputs;
};

template <class T>
inline std::vector<std::shared_ptr<TapeImpl<T>>>& active_tape_stack() {
  thread_local std::vector<std::shared_ptr<TapeImpl<T>>> stack;
  return stack;
}

// Innermost active tape on this thread, or nullptr.
template <class T>
inline std::shared_ptr<TapeImpl<T>> current_tape() {
  auto& stack = active_tape_stack<T>();
  return stack.empty() ? nullptr : stack.back();
}

// --------------------------------------------------------------------------
// TensorNode / Tensor
// --------------------------------------------------------------------------

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until a backward pass touches this node
  bool requires_grad = false;
  std::weak_ptr<TapeImpl<T>> tape;  // tape that recorded this node, if any
};

template <class T>
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<TensorNode<T>>()) {
    if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
      throw shape_error("tensor data size " + std::to_string(values.size()) +
                        " does not match shape " + format_shape(shape));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)), T(0));
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor full(Shape shape, T fill, bool requires_grad = false) {
    std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)), fill);
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return Tensor(Shape{}, std::vector<T>{v}, requires_grad);
  }

  static Tensor uniform(Shape shape, T lo, T hi, std::mt19937_64& rng,
                        bool requires_grad = false) {
    std::uniform_real_distribution<double> dist(static_cast<double>(lo),
                                                static_cast<double>(hi));
    std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = static_cast<T>(dist(rng));
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor normal(Shape shape, T mean, T stddev, std::mt19937_64& rng,
                       bool requires_grad = false) {
    std::normal_distribution<double> dist(static_cast<double>(mean),
                                          static_cast<double>(stddev));
    std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = static_cast<T>(dist(rng));
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return check_defined().shape; }
  std::int64_t ndim() const { return static_cast<std::int64_t>(shape().size()); }
  std::int64_t dim(std::int64_t i) const { return shape().at(static_cast<std::size_t>(i)); }
  std::int64_t numel() const { return shape_numel(shape()); }

  const std::vector<T>& values() const { return check_defined().value; }
  bool requires_grad() const { return check_defined().requires_grad; }

  // Scalar extraction (any single-element tensor).
  T item() const {
    if (numel() != 1) {
      throw contract_error("item() requires a single-element tensor, got shape " +
                           format_shape(shape()));
    }
    return values()[0];
  }

  // Bounds-checked multi-index element access (tests / oracles).
  T at(const Shape& idx) const {
    const auto& s = shape();
    if (idx.size() != s.size()) {
      throw shape_error("index rank " + std::to_string(idx.size()) +
                        " does not match tensor shape " + format_shape(s));
    }
    std::int64_t flat = 0;
    const auto st = row_major_strides(s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= s[i]) {
        throw shape_error("index " + format_shape(idx) + " out of range for " +
                          format_shape(s));
      }
      flat += idx[i] * st[i];
    }
    return values()[static_cast<std::size_t>(flat)];
  }

  bool has_grad() const { return defined() && !node_->grad.empty(); }

  const std::vector<T>& grad() const {
    if (!has_grad()) {
      throw contract_error(
          "gradient requested but none was produced; run backward() over a "
          "tape this tensor participates in");
    }
    return node_->grad;
  }

  void clear_grad() const {
    if (defined()) node_->grad.clear();
  }

  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

 private:
  TensorNode<T>& check_defined() const {
    if (!node_) throw contract_error("operation on an undefined (moved-from or default) tensor");
    return *node_;
  }

  std::shared_ptr<TensorNode<T>> node_;
};

// --------------------------------------------------------------------------
// Recording helpers (used by ops.hpp)
// --------------------------------------------------------------------------

namespace detail {

// Grows a node's gradient buffer to match its value, zero-filled, on first
// touch.  Returns the buffer.
template <class T>
std::vector<T>& ensure_grad(TensorNode<T>& node) {
  if (node.grad.empty()) node.grad.assign(node.value.size(), T(0));
  return node.grad;
}

// True when the op currently being built must be recorded: a tape is active
// on this thread and at least one input carries requires_grad.
template <class T>
bool should_record(std::initializer_list<const Tensor<T>*> inputs) {
  if (!current_tape<T>()) return false;
  for (const Tensor<T>* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

// Registers `fn` as the backward closure of an op whose outputs are `outs`.
// Marks outputs as gradient-carrying members of the active tape.
template <class T>
void record(std::initializer_list<Tensor<T>*> outs, std::function<void()> fn) {
  auto tape = current_tape<T>();
  for (Tensor<T>* out : outs) {
    out->node()->requires_grad = true;
    out->node()->tape = tape;
    tape->outputs.push_back(out->node());
  }
  tape->ops.push_back(std::move(fn));
}

}  // namespace detail

// --------------------------------------------------------------------------
// Tape
// --------------------------------------------------------------------------

template <class T>
class Tape {
 public:
  Tape() : impl_(std::make_shared<TapeImpl<T>>()) {}

  // RAII activation: ops executed while the scope lives are recorded here.
  // Scopes nest; the innermost active tape records.
  class Scope {
   public:
    explicit Scope(std::shared_ptr<TapeImpl<T>> impl) : impl_(std::move(impl)) {
      active_tape_stack<T>().push_back(impl_);
    }
    ~Scope() { active_tape_stack<T>().pop_back(); }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    std::shared_ptr<TapeImpl<T>> impl_;
  };

  [[nodiscard]] Scope activate() { return Scope(impl_); }

  std::size_t op_count() const { return impl_->ops.size(); }

  // Reverse sweep.  See the gradient contract at the top of this header.
  void backward(const Tensor<T>& loss) const {
    if (!loss.defined() || loss.numel() != 1) {
      throw contract_error(
          "backward() requires a scalar loss, got shape " +
          (loss.defined() ? format_shape(loss.shape()) : std::string("<undefined>")));
    }
    auto owner = loss.node()->tape.lock();
    if (owner != impl_) {
      throw contract_error(
          "backward() loss does not participate in this tape (was it computed "
          "while the tape was active, from inputs with requires_grad?)");
    }
    // Reset intermediate gradients so repeated backward runs start clean;
    // leaf gradients are deliberately left alone (they accumulate).
    for (auto& node : impl_->outputs) {
      node->grad.assign(node->value.size(), T(0));
    }
    loss.node()->grad.assign(1, T(1));
    for (auto it = impl_->ops.rbegin(); it != impl_->ops.rend(); ++it) (*it)();
  }

 private:
  std::shared_ptr<TapeImpl<T>> impl_;

  template <class U>
  friend void backward(const Tensor<U>& loss);
};

// Free-function form: runs the reverse sweep of whatever tape recorded the
// loss.  contract_error when the loss is not scalar or was never recorded.
template <class T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw contract_error(
        "backward() requires a scalar loss, got shape " +
        (loss.defined() ? format_shape(loss.shape()) : std::string("<undefined>")));
  }
  auto owner = loss.node()->tape.lock();
  if (!owner) {
    throw contract_error(
        "backward() loss does not participate in any live tape (was it "
        "computed while a tape was active, from inputs with requires_grad?)");
  }
  Tape<T> view;
  view.impl_ = owner;
  view.backward(loss);
}

}  // namespace canet
