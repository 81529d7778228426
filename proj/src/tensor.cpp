#include "mgt/tensor.hpp"

#include <cmath>
#include <sstream>

#include "mgt/error.hpp"

namespace mgt {

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw ConfigError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw ConfigError("tensor shape " + shape_str(shape) + " does not match " +
                      std::to_string(data.size()) + " elements");
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in tensor construction");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node_ = std::move(node);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

const Shape& Tensor::shape() const {
  if (!node_) throw ConfigError("use of an undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(int axis) const {
  const auto r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ConfigError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  }
  return shape()[static_cast<std::size_t>(a)];
}

std::span<const double> Tensor::data() const {
  if (!node_) throw ConfigError("use of an undefined tensor");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ConfigError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor Tensor::detach() const {
  return Tensor(shape(), std::vector<double>(data().begin(), data().end()), false);
}

// ---------------------------------------------------------------------------

Tape* Tape::active() noexcept { return g_active_tape; }

std::size_t Tape::slot_for(const detail::Node* node) {
  if (node->owner == this) return node->slot;
  auto [it, inserted] = leaf_slots_.try_emplace(node, grads_.size());
  if (inserted) {
    grads_.emplace_back();
    slot_sizes_.push_back(node->data.size());
  }
  return it->second;
}

std::size_t Tape::find_slot(const detail::Node* node) const {
  if (node->owner == this) return node->slot;
  auto it = leaf_slots_.find(node);
  return it == leaf_slots_.end() ? static_cast<std::size_t>(-1) : it->second;
}

std::span<double> Tape::grad_buffer(const Tensor& t) {
  if (!t.requires_grad()) return {};
  const std::size_t slot = slot_for(t.node());
  auto& g = grads_[slot];
  if (g.empty()) g.assign(slot_sizes_[slot], 0.0);
  return g;
}

Tensor Tape::grad(const Tensor& t) const {
  const std::size_t slot = find_slot(t.node());
  if (slot == static_cast<std::size_t>(-1) || grads_[slot].empty()) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), grads_[slot]);
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) throw ConfigError("backward requires a scalar loss, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;
  grad_buffer(loss)[0] += 1.0;
  trace_.clear();
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (grads_[it->out_slot].empty()) continue;
    trace_.push_back(it->name);
    // Moved out: the rule may add leaf slots and reallocate grads_.
    std::vector<double> grad_out = std::move(grads_[it->out_slot]);
    it->backward(grad_out, it->out->data, *this);
    grads_[it->out_slot] = std::move(grad_out);
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tensor record_op(std::string_view name, Shape shape, std::vector<double> data,
                 const std::vector<const Tensor*>& inputs, BackwardFn backward) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NumericError("primitive '" + std::string(name) + "' produced a non-finite value");
    }
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);

  Tape* tape = g_active_tape;
  bool tracked = false;
  if (tape) {
    for (const Tensor* in : inputs) tracked = tracked || in->requires_grad();
  }
  if (tracked) {
    node->requires_grad = true;
    node->owner = tape;
    node->slot = tape->grads_.size();
    tape->grads_.emplace_back();
    tape->slot_sizes_.push_back(node->data.size());
    tape->entries_.push_back({name, node->slot, std::move(backward), node});
  }
  return Tensor(std::move(node));
}

}  // namespace mgt
