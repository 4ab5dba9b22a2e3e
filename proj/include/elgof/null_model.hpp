#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "elgof/sample.hpp"

namespace elgof {

/// Response built from an underlying observation Z, e.g. (Z, vec(ZZ')).
/// Lets the bootstrap regenerate Z* and rebuild the response from it.
struct DerivedResponse {
  Eigen::MatrixXd base_response;  ///< Z, n x k1
  Eigen::MatrixXd base_fitted;    ///< fitted mean of Z under the null
  Eigen::VectorXd base_scale;     ///< null standard deviation of each column of Z
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)> to_response;
};

/// A fitted hypothesised model m(., theta_hat, g_hat). Immutable once built;
/// copies share the captured estimator state.
struct NullModelFit {
  std::string model;
  Eigen::VectorXd theta;    ///< finite-dimensional part, may be empty
  Eigen::MatrixXd fitted;   ///< m(X_i, theta_hat, g_hat), n x k
  double nuisance_bandwidth = 0.0;
  /// Nuisance curve evaluator; empty for fully parametric models.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> g_hat;
  /// Re-estimates the model on a sample with the same covariates.
  std::function<NullModelFit(const Sample&)> refit;
  std::optional<DerivedResponse> derived;
};

}  // namespace elgof
