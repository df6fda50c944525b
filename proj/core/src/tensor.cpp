#include "rml/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace rml {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto storage = std::make_shared<detail::TensorStorage>();
  storage->shape = std::move(shape);
  storage->values.assign(shape_size(storage->shape), value);
  storage->requires_grad = requires_grad;
  if (requires_grad) storage->grad.assign(storage->values.size(), 0.0);
  return Tensor(std::move(storage));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw std::invalid_argument("Tensor::from_values: shape " + shape_str(shape) +
                                " does not match " + std::to_string(values.size()) +
                                " values");
  }
  auto storage = std::make_shared<detail::TensorStorage>();
  storage->shape = std::move(shape);
  storage->values = std::move(values);
  storage->requires_grad = requires_grad;
  if (requires_grad) storage->grad.assign(storage->values.size(), 0.0);
  return Tensor(std::move(storage));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!storage_) throw std::logic_error("Tensor: undefined");
  return storage_->shape;
}

std::size_t Tensor::size() const { return storage_ ? storage_->values.size() : 0; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw std::out_of_range("Tensor::dim: axis out of range");
  return s[axis];
}

std::size_t Tensor::rows() const {
  const Shape& s = shape();
  if (s.empty()) throw std::logic_error("Tensor::rows: rank-0 tensor");
  std::size_t n = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) n *= s[i];
  return n;
}

std::size_t Tensor::cols() const {
  const Shape& s = shape();
  if (s.empty()) throw std::logic_error("Tensor::cols: rank-0 tensor");
  return s.back();
}

bool Tensor::requires_grad() const { return storage_ && storage_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!storage_) throw std::logic_error("Tensor: undefined");
  storage_->requires_grad = on;
  if (on && storage_->grad.size() != storage_->values.size()) {
    storage_->grad.assign(storage_->values.size(), 0.0);
  }
}

std::span<const double> Tensor::values() const {
  if (!storage_) throw std::logic_error("Tensor: undefined");
  return storage_->values;
}

std::span<double> Tensor::values() {
  if (!storage_) throw std::logic_error("Tensor: undefined");
  return storage_->values;
}

std::span<const double> Tensor::grad() const {
  if (!requires_grad()) throw std::logic_error("Tensor::grad: tensor does not track gradients");
  return storage_->grad;
}

std::span<double> Tensor::grad() {
  if (!requires_grad()) throw std::logic_error("Tensor::grad: tensor does not track gradients");
  return storage_->grad;
}

void Tensor::zero_grad() {
  if (requires_grad()) std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::logic_error("Tensor::item: tensor has " + std::to_string(size()) +
                           " elements, expected 1");
  }
  return storage_->values[0];
}

Tensor Tensor::clone() const {
  if (!storage_) return Tensor();
  return from_values(storage_->shape, storage_->values, false);
}

void Tape::record(std::string name, std::shared_ptr<detail::TensorStorage> output,
                  std::function<void()> backward) {
  entries_.push_back({std::move(name), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw std::invalid_argument("Tape::backward: loss must be a scalar, got shape " +
                                shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw std::invalid_argument("Tape::backward: loss does not track gradients");
  }
  // Intermediate adjoints are rebuilt each pass; only leaves accumulate.
  for (Entry& entry : entries_) {
    if (entry.output->requires_grad) {
      std::fill(entry.output->grad.begin(), entry.output->grad.end(), 0.0);
    }
  }
  loss.storage()->grad[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    it->backward();
  }
}

void Tape::clear() { entries_.clear(); }

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(entries_.size());
  for (const Entry& e : entries_) names.push_back(e.name);
  return names;
}

}  // namespace rml
