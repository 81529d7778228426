#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mgt {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

// Receives d(loss)/d(output) and the output values; accumulates into input gradients.
using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::span<const double> out, Tape& tape)>;

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  // Set only for values recorded on a tape; leaves (parameters, inputs) keep nullptr.
  const Tape* owner = nullptr;
  std::size_t slot = 0;
};
}  // namespace detail

// Immutable dense row-major array of doubles. Copies share storage.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor parameter(Shape shape, std::vector<double> data) {
    return Tensor(std::move(shape), std::move(data), true);
  }

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Negative axes count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const { return data().size(); }
  std::span<const double> data() const;
  double operator[](std::size_t flat) const { return data()[flat]; }
  double item() const;
  bool requires_grad() const;

  // Same values, cut from any tape and from gradient tracking.
  Tensor detach() const;

  const detail::Node* node() const noexcept { return node_.get(); }

 private:
  friend class Tape;
  friend Tensor record_op(std::string_view, Shape, std::vector<double>,
                          const std::vector<const Tensor*>&,
                          BackwardFn);
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

// Ordered record of executed primitives. Ops executed while a TapeScope is
// active, with at least one gradient-tracking input, append one entry each.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Seeds d(loss)/d(loss) = 1 and replays entries in reverse execution order.
  void backward(const Tensor& loss);

  // Gradient accumulated for `t`; zeros when `t` did not influence the loss.
  Tensor grad(const Tensor& t) const;

  // Mutable accumulation buffer for `t`, empty when `t` does not track gradients.
  std::span<double> grad_buffer(const Tensor& t);

  std::size_t size() const noexcept { return entries_.size(); }
  // Primitive names in the order backward visited them.
  const std::vector<std::string_view>& backward_trace() const noexcept { return trace_; }

  static Tape* active() noexcept;

 private:
  friend class TapeScope;
  friend Tensor record_op(std::string_view, Shape, std::vector<double>,
                          const std::vector<const Tensor*>&,
                          BackwardFn);

  struct Entry {
    std::string_view name;
    std::size_t out_slot;
    BackwardFn backward;
    // Keeps the output alive so its slot stays valid.
    std::shared_ptr<detail::Node> out;
  };

  std::size_t slot_for(const detail::Node* node);
  std::size_t find_slot(const detail::Node* node) const;

  std::vector<Entry> entries_;
  std::vector<std::vector<double>> grads_;
  std::vector<std::size_t> slot_sizes_;
  std::unordered_map<const detail::Node*, std::size_t> leaf_slots_;
  std::vector<std::string_view> trace_;
};

// Makes `tape` the recording target for the current thread until destroyed.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording for the current thread (evaluation, finite differences).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

// Builds the output of a primitive: checks finiteness, and when recording
// registers `backward`, which receives d(loss)/d(output) and the output values.
Tensor record_op(std::string_view name, Shape shape, std::vector<double> data,
                 const std::vector<const Tensor*>& inputs,
                 BackwardFn backward);

}  // namespace mgt
