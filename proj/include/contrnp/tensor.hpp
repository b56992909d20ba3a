#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "contrnp/error.hpp"

namespace contrnp {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

class GradientTape;

/// Dense row-major array of doubles.
///
/// A Tensor is a plain value. When a GradientTape is active on the current
/// thread and at least one input of an op is tracked by it, the op result is
/// tracked too, and the tape remembers how to push gradients back through it.
/// Parameters become tracked leaves through GradientTape::watch; after
/// backward() their grad() buffer holds dLoss/dParam.
class Tensor {
 public:
  /// Rank-0 scalar zero.
  Tensor() : data_(1, 0.0) {}

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(numel_of(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != numel_of(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  static Tensor vector(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  bool is_scalar() const noexcept { return shape_.empty(); }

  std::span<const double> data() const noexcept { return data_; }
  /// Mutable view; writing into a tensor that an active tape already
  /// recorded invalidates that recording.
  std::span<double> mutable_data() noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }

  double item() const {
    if (data_.size() != 1) {
      throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    }
    return data_[0];
  }

  double at(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) {
      throw ShapeError("index rank mismatch for shape " + shape_str(shape_));
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
      if (i >= shape_[axis]) throw ShapeError("index out of range for shape " + shape_str(shape_));
      flat = flat * shape_[axis] + i;
      ++axis;
    }
    return data_[flat];
  }

  const std::optional<std::vector<double>>& grad() const noexcept { return grad_; }
  void clear_grad() noexcept { grad_.reset(); }
  void set_grad(std::vector<double> g) {
    if (g.size() != data_.size()) {
      throw ShapeError("gradient length " + std::to_string(g.size()) + " does not match shape " +
                       shape_str(shape_));
    }
    grad_ = std::move(g);
  }

  /// Copy of the values with no tape tracking and no gradient.
  Tensor detach() const { return Tensor(shape_, data_); }

 private:
  friend class GradientTape;

  struct TapeHandle {
    std::uint64_t tape_serial;
    std::uint32_t node;
  };

  Shape shape_;
  std::vector<double> data_;
  std::optional<std::vector<double>> grad_;
  std::optional<TapeHandle> tape_id_;
};

/// Records executed ops for one reverse pass.
///
/// Constructing a tape makes it the active tape of the calling thread until
/// it is destroyed (the previous tape, if any, is restored). Nodes are
/// appended as ops execute, so parents always precede children. backward()
/// may run once per tape.
class GradientTape {
 public:
  using NodeId = std::uint32_t;
  using BackwardFn = std::function<void(std::span<const double> grad_out, GradientTape& tape)>;

  GradientTape() : serial_(next_serial()), previous_(active_) { active_ = this; }
  ~GradientTape() { active_ = previous_; }

  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  static GradientTape* active() noexcept { return active_; }

  /// Registers `leaf` as a differentiable input. The tensor must stay at the
  /// same address until backward() has run.
  void watch(Tensor& leaf) {
    if (node_of(leaf)) return;
    const NodeId id = push_node({}, leaf.numel(), nullptr);
    leaf.tape_id_ = Tensor::TapeHandle{serial_, id};
    leaves_.push_back({&leaf, id});
  }

  std::optional<NodeId> node_of(const Tensor& t) const noexcept {
    if (t.tape_id_ && t.tape_id_->tape_serial == serial_) return t.tape_id_->node;
    return std::nullopt;
  }

  /// Records `out` as the result of an op over `parents`.
  void attach(Tensor& out, std::vector<NodeId> parents, BackwardFn fn) {
    const NodeId id = push_node(std::move(parents), out.numel(), std::move(fn));
    out.tape_id_ = Tensor::TapeHandle{serial_, id};
  }

  /// Gradient accumulator of a node, zero-initialised on first use.
  std::span<double> grad_buffer(NodeId node) {
    auto& g = grads_[node];
    if (g.empty()) g.assign(nodes_[node].numel, 0.0);
    return g;
  }

  void backward(const Tensor& loss) {
    if (consumed_) throw TapeError("backward() already ran on this tape");
    if (!loss.is_scalar()) {
      throw TapeError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
    }
    consumed_ = true;
    if (auto root = node_of(loss)) {
      grad_buffer(*root)[0] = 1.0;
      for (std::size_t i = *root + 1; i-- > 0;) {
        if (grads_[i].empty() || !nodes_[i].backward) continue;
        nodes_[i].backward(grads_[i], *this);
      }
    }
    for (auto& leaf : leaves_) {
      auto& g = grads_[leaf.node];
      if (g.empty()) g.assign(nodes_[leaf.node].numel, 0.0);
      leaf.tensor->set_grad(std::move(g));
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }
  const std::vector<NodeId>& parents(NodeId node) const { return nodes_.at(node).parents; }

 private:
  struct Node {
    std::vector<NodeId> parents;
    std::size_t numel;
    BackwardFn backward;
  };
  struct Leaf {
    Tensor* tensor;
    NodeId node;
  };

  NodeId push_node(std::vector<NodeId> parents, std::size_t numel, BackwardFn fn) {
    if (consumed_) throw TapeError("cannot record ops on a tape after backward()");
    nodes_.push_back({std::move(parents), numel, std::move(fn)});
    grads_.emplace_back();
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  static std::uint64_t next_serial() noexcept {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
  }

  std::uint64_t serial_;
  GradientTape* previous_;
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  std::vector<Leaf> leaves_;
  bool consumed_ = false;

  inline static thread_local GradientTape* active_ = nullptr;
};

/// Runs backward on the thread's active tape.
inline void backward(const Tensor& loss) {
  auto* tape = GradientTape::active();
  if (!tape) throw TapeError("backward() called with no active gradient tape");
  tape->backward(loss);
}

}  // namespace contrnp
