#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace elgof {

/// Base for every numerical failure raised by the library. The CLI maps
/// these to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Kernel window around an evaluation point contains no observation.
class DegenerateWindow : public NumericalError {
 public:
  DegenerateWindow(std::vector<double> point, int coordinate = -1)
      : NumericalError(describe(point, coordinate)),
        point_(std::move(point)),
        coordinate_(coordinate) {}

  const std::vector<double>& point() const noexcept { return point_; }
  /// Response coordinate whose smoother failed, or -1 when not applicable.
  int coordinate() const noexcept { return coordinate_; }

 private:
  static std::string describe(const std::vector<double>& x, int l) {
    std::ostringstream os;
    os << "empty kernel window at x=(";
    for (std::size_t j = 0; j < x.size(); ++j) os << (j ? "," : "") << x[j];
    os << ")";
    if (l >= 0) os << " for response coordinate " << l;
    return os.str();
  }

  std::vector<double> point_;
  int coordinate_;
};

class NoFeasibleBandwidth : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Too many quadrature nodes were dropped for an empty window.
class UnreliableIntegration : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class RankDeficiency : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class FitFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IllConditionedField : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Too many bootstrap replicates failed for the quantile to be trusted.
class CalibrationUnreliable : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// A weight function whose support has zero volume, or a node outside it.
class InvalidWeight : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace elgof
