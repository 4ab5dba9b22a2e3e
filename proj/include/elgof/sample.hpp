#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace elgof {

/// Paired observations: covariates X (n x d) and responses Y (n x k).
struct Sample {
  Eigen::MatrixXd X;
  Eigen::MatrixXd Y;

  Eigen::Index n() const noexcept { return X.rows(); }
  Eigen::Index d() const noexcept { return X.cols(); }
  Eigen::Index k() const noexcept { return Y.cols(); }

  void validate() const {
    if (X.rows() != Y.rows()) throw std::invalid_argument("X and Y must have the same row count");
    if (X.rows() < 1 || X.cols() < 1 || Y.cols() < 1) {
      throw std::invalid_argument("sample must have at least one row, covariate and response");
    }
    if (!X.allFinite() || !Y.allFinite()) throw std::invalid_argument("sample has non-finite entries");
  }
};

/// Row order sorting (X, Y, extra) lexicographically. Statistics computed on
/// the reordered rows depend only on the multiset of rows.
inline std::vector<Eigen::Index> canonical_order(const Sample& s,
                                                 const Eigen::MatrixXd* extra = nullptr) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(s.n()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  auto less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < s.X.cols(); ++j) {
      if (s.X(a, j) != s.X(b, j)) return s.X(a, j) < s.X(b, j);
    }
    for (Eigen::Index j = 0; j < s.Y.cols(); ++j) {
      if (s.Y(a, j) != s.Y(b, j)) return s.Y(a, j) < s.Y(b, j);
    }
    if (extra) {
      for (Eigen::Index j = 0; j < extra->cols(); ++j) {
        if ((*extra)(a, j) != (*extra)(b, j)) return (*extra)(a, j) < (*extra)(b, j);
      }
    }
    return false;
  };
  std::stable_sort(idx.begin(), idx.end(), less);
  return idx;
}

inline Eigen::MatrixXd permute_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& order) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t i = 0; i < order.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(order[i]);
  return out;
}

inline Sample permute_rows(const Sample& s, const std::vector<Eigen::Index>& order) {
  return Sample{permute_rows(s.X, order), permute_rows(s.Y, order)};
}

}  // namespace elgof
