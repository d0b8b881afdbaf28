#pragma once

#include <cstddef>
#include <string>

#include <Eigen/Core>

#include "edm/error.hpp"

namespace edm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// A point or an image stored as a flat vector. Images are row-major with
/// pixel intensities in [-1, 1]; points have height == 0 and width == D.
struct Sample {
  Vec values;
  std::size_t height = 0;
  std::size_t width = 0;

  static Sample point(Vec v) {
    Sample s;
    s.width = static_cast<std::size_t>(v.size());
    s.values = std::move(v);
    return s;
  }

  static Sample image(Vec v, std::size_t height, std::size_t width) {
    if (static_cast<std::size_t>(v.size()) != height * width) {
      throw DimensionError("image of " + std::to_string(height) + "x" + std::to_string(width) +
                           " needs " + std::to_string(height * width) + " values, got " +
                           std::to_string(v.size()));
    }
    Sample s;
    s.values = std::move(v);
    s.height = height;
    s.width = width;
    return s;
  }

  bool is_image() const { return height > 0; }
  std::size_t dim() const { return static_cast<std::size_t>(values.size()); }
  bool all_finite() const { return values.allFinite(); }
};

inline void require_same_dim(const Vec& a, const Vec& b, const char* what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": dimension " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
}

}  // namespace edm
