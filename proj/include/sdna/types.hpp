#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sdna/errors.hpp"

namespace sdna {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// A nonempty, strictly increasing set of 0-based coordinates inside an
// ambient dimension. This is the S of principal submatrices M_S and of the
// random subsets the samplings draw.
class Subset {
 public:
  Subset(std::vector<Index> indices, Index ambient)
      : indices_(std::move(indices)), ambient_(ambient) {
    if (indices_.empty()) throw InvalidSubsetError("subset must be nonempty");
    for (std::size_t k = 0; k < indices_.size(); ++k) {
      const Index i = indices_[k];
      if (i < 0 || i >= ambient_) {
        throw InvalidSubsetError("subset index " + std::to_string(i) +
                                 " out of range for dimension " +
                                 std::to_string(ambient_));
      }
      if (k > 0 && indices_[k - 1] >= i) {
        throw InvalidSubsetError("subset indices must be strictly increasing");
      }
    }
  }

  Subset(std::initializer_list<Index> indices, Index ambient)
      : Subset(std::vector<Index>(indices), ambient) {}

  // {0, 1, ..., n-1}
  static Subset full(Index n) {
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    return Subset(std::move(idx), n);
  }

  static Subset single(Index i, Index n) { return Subset({i}, n); }

  Index size() const { return static_cast<Index>(indices_.size()); }
  Index ambient() const { return ambient_; }
  Index operator[](Index k) const { return indices_[static_cast<std::size_t>(k)]; }
  const std::vector<Index>& indices() const { return indices_; }

  auto begin() const { return indices_.begin(); }
  auto end() const { return indices_.end(); }

  bool contains(Index i) const {
    return std::binary_search(indices_.begin(), indices_.end(), i);
  }

  bool operator==(const Subset& other) const {
    return ambient_ == other.ambient_ && indices_ == other.indices_;
  }

  std::string to_string() const {
    std::ostringstream os;
    os << '{';
    for (std::size_t k = 0; k < indices_.size(); ++k) {
      if (k > 0) os << ',';
      os << indices_[k];
    }
    os << '}';
    return os.str();
  }

 private:
  std::vector<Index> indices_;
  Index ambient_;
};

}  // namespace sdna
