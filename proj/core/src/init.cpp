#include "edm/init.hpp"

#include <algorithm>

#include <Eigen/QR>

namespace edm {

Mat orthogonal_matrix(std::size_t rows, std::size_t cols, CounterRng& rng, double gain) {
  const auto big = static_cast<Eigen::Index>(std::max(rows, cols));
  const auto small = static_cast<Eigen::Index>(std::min(rows, cols));
  Mat a(big, small);
  for (Eigen::Index j = 0; j < small; ++j) {
    for (Eigen::Index i = 0; i < big; ++i) a(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Mat> qr(a);
  Mat q = qr.householderQ() * Mat::Identity(big, small);
  const Mat r = qr.matrixQR().topRows(small).template triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < small; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  q *= gain;
  if (rows < cols) return q.transpose();
  return q;
}

}  // namespace edm
