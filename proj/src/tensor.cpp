// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include "simbal/tensor.hpp"

#include <algorithm>
#include <numeric>

#include "simbal/error.hpp"

namespace simbal {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape) : storage_(std::make_shared<Storage>()) {
  storage_->values.assign(numel(shape), 0.0);
  storage_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : storage_(std::make_shared<Storage>()) {
  if (numel(shape) != values.size()) {
    throw DimensionError("Tensor: shape " + shape_string(shape) + " needs " +
                         std::to_string(numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  storage_->shape = std::move(shape);
  storage_->values = std::move(values);
  set_requires_grad(requires_grad);
}

const Shape& Tensor::shape() const {
  if (!storage_) throw Error("Tensor: use of undefined tensor");
  return storage_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("Tensor: axis " + std::to_string(axis) + " out of range for " +
                         shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::size() const { return storage_ ? storage_->values.size() : 0; }

std::span<const double> Tensor::data() const { return storage_->values; }
std::span<double> Tensor::mutable_data() { return storage_->values; }
std::span<const double> Tensor::grad() const { return storage_->grad; }
std::span<double> Tensor::mutable_grad() const { return storage_->grad; }

bool Tensor::requires_grad() const { return storage_ && storage_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  storage_->requires_grad = flag;
  if (flag) {
    storage_->grad.assign(storage_->values.size(), 0.0);
  } else {
    storage_->grad.clear();
    storage_->grad.shrink_to_fit();
  }
}

void Tensor::zero_grad() {
  if (storage_) std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (size() != 1) {
    throw DimensionError("Tensor::item: expected one value, shape is " + shape_string(shape()));
  }
  return storage_->values[0];
}

Tensor Tensor::clone() const { return Tensor(shape(), storage_->values); }

void Graph::record(std::string_view op, std::function<void()> backward) {
  if (consumed_) throw Error("Graph: cannot record after backward()");
  nodes_.push_back(Node{op, std::move(backward)});
}

void Graph::backward(const Tensor& loss) {
  if (consumed_) throw Error("Graph: backward() already ran on this graph");
  if (loss.size() != 1) {
    throw DimensionError("Graph::backward: loss must be scalar, got " +
                         shape_string(loss.shape()));
  }
  consumed_ = true;
  if (!loss.requires_grad()) return;
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
}

std::vector<std::string_view> Graph::op_names() const {
  std::vector<std::string_view> names;
  names.reserve(nodes_.size());
  for (const auto& n : nodes_) names.push_back(n.op);
  return names;
}

}  // namespace simbal
