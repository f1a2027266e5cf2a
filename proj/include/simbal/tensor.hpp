// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace simbal {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense 64-bit tensor with shared storage. Copies of a Tensor alias the same
// buffer; use clone() for a deep copy. A gradient buffer of identical shape
// exists exactly when requires_grad() is true.
class Tensor {
 public:
  Tensor() = default;
  // Zero-filled.
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad) {
    Tensor t(std::move(shape));
    t.set_requires_grad(requires_grad);
    return t;
  }

  static Tensor scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  std::span<const double> grad() const;
  // Gradient accumulation goes through handles captured by backward closures.
  std::span<double> mutable_grad() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  void zero_grad();

  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t row, std::size_t col) const { return data()[row * dim(1) + col]; }

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> storage_;
};

// Define-by-run tape. Ops append a backward closure as they execute;
// backward() replays the closures once, in reverse append order.
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  void record(std::string_view op, std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and propagates. loss must be a single value.
  void backward(const Tensor& loss);

  // Names of recorded ops in append order.
  std::vector<std::string_view> op_names() const;

 private:
  struct Node {
    std::string_view op;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
  bool recording_;
  bool consumed_ = false;
};

}  // namespace simbal
