#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lpwn::nn {

// Activations are channels x time, column major: one column per sample.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

inline std::size_t shape_size(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s)
      : shape(std::move(s)), data(shape_size(shape), T(0)) {}

  std::size_t size() const { return data.size(); }
};

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Directory of named tensors packed into one flat parameter vector.
class ParamLayout {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t add(std::string name, std::vector<std::size_t> shape) {
    TensorInfo info{std::move(name), std::move(shape), total_, 0};
    info.size = shape_size(info.shape);
    total_ += info.size;
    tensors_.push_back(std::move(info));
    return tensors_.size() - 1;
  }

  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  const TensorInfo& operator[](std::size_t i) const { return tensors_[i]; }
  std::size_t total() const { return total_; }

  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      if (tensors_[i].name == name) return i;
    }
    return npos;
  }

  // Tensor that owns flat element `index`.
  const TensorInfo& owner(std::size_t index) const {
    for (const auto& t : tensors_) {
      if (index >= t.offset && index < t.offset + t.size) return t;
    }
    return tensors_.back();
  }

 private:
  std::vector<TensorInfo> tensors_;
  std::size_t total_ = 0;
};

}  // namespace lpwn::nn
