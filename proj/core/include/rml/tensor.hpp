#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rml {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorStorage {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // sized like values when requires_grad
  bool requires_grad = false;
};
}  // namespace detail

// Dense row-major tensor of doubles. Copies of a Tensor share storage; use
// clone() for an independent copy. Gradients live next to the values and are
// filled in by Tape::backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;
  // Rank >= 2 helpers: rows() collapses all leading axes, cols() is the last.
  std::size_t rows() const;
  std::size_t cols() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  std::span<const double> values() const;
  std::span<double> values();
  std::span<const double> grad() const;
  std::span<double> grad();
  void zero_grad();

  double item() const;  // defined for single-element tensors only
  Tensor clone() const;
  bool same_storage(const Tensor& other) const {
    return storage_ == other.storage_;
  }

  std::shared_ptr<detail::TensorStorage> storage() const { return storage_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorStorage> storage)
      : storage_(std::move(storage)) {}
  std::shared_ptr<detail::TensorStorage> storage_;
};

// Ordered record of executed differentiable operations. backward(loss) seeds
// d loss / d loss = 1 and replays the recorded adjoint steps in exact reverse
// execution order. Adjoints of intermediate results are recomputed from
// scratch on every call, while leaf tensors (parameters, inputs) accumulate
// across calls until zero_grad is invoked on them.
class Tape {
 public:
  void record(std::string name, std::shared_ptr<detail::TensorStorage> output,
              std::function<void()> backward);
  void backward(const Tensor& loss);
  void clear();
  std::size_t op_count() const { return entries_.size(); }
  std::vector<std::string> op_names() const;

 private:
  struct Entry {
    std::string name;
    std::shared_ptr<detail::TensorStorage> output;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
};

}  // namespace rml
