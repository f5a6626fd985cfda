#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "numkit/rng.hpp"
#include "numkit/tensor.hpp"

namespace biden {

// Ordered, named parameter tensors. Order is the checkpoint manifest order and
// the optimizer traversal order.
template <typename T>
class ParamStore {
 public:
  numkit::Tensor<T>& add(const std::string& name, numkit::Shape shape) {
    if (index_.count(name)) throw std::logic_error("duplicate parameter: " + name);
    index_[name] = order_.size();
    order_.push_back(name);
    tensors_.emplace_back(std::move(shape), T(0), true);
    return tensors_.back();
  }

  numkit::Tensor<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return tensors_[it->second];
  }
  const numkit::Tensor<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return tensors_[it->second];
  }
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::string>& names() const { return order_; }
  std::size_t count() const { return order_.size(); }
  numkit::Tensor<T>& at(std::size_t i) { return tensors_[i]; }
  const numkit::Tensor<T>& at(std::size_t i) const { return tensors_[i]; }

  std::int64_t total_scalars() const {
    std::int64_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (std::size_t i = 0; i < order_.size(); ++i) {
      auto& t = out.add(order_[i], tensors_[i].shape);
      for (std::size_t k = 0; k < t.data.size(); ++k)
        t.data[k] = static_cast<U>(tensors_[i].data[k]);
    }
    return out;
  }

 private:
  std::vector<std::string> order_;
  std::vector<numkit::Tensor<T>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Glorot-style uniform for projections; dedicated scale for tables.
template <typename T>
void init_uniform_fan(numkit::Tensor<T>& t, numkit::Rng& rng) {
  const int fan_in = t.rows(), fan_out = t.cols();
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (T& v : t.data) v = static_cast<T>(rng.uniform(-a, a));
}

template <typename T>
void init_uniform_scale(numkit::Tensor<T>& t, numkit::Rng& rng, double a) {
  for (T& v : t.data) v = static_cast<T>(rng.uniform(-a, a));
}

}  // namespace biden
