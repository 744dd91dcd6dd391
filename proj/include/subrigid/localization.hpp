#pragma once

#include "subrigid/errors.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>

namespace subrigid {

/// Per-robot range-only position filter.
struct FilterState {
  Eigen::VectorXd estimate;      // x_hat (m)
  Eigen::MatrixXd covariance;    // P (m^2)
  double measurement_variance = 0.01;  // sigma^2 per range (m^2)
  bool is_anchor = false;

  static FilterState initial(const Eigen::VectorXd& guess, double position_variance,
                             double measurement_variance, bool anchor = false) {
    FilterState st;
    st.estimate = guess;
    st.covariance = position_variance * Eigen::MatrixXd::Identity(guess.size(), guess.size());
    st.measurement_variance = measurement_variance;
    st.is_anchor = anchor;
    return st;
  }
};

/// Predicted ranges ||x_hat_i - x_hat_j|| to each neighbor estimate (columns of
/// `neighbors`, in the robot's fixed neighbor order).
inline Eigen::VectorXd predict_ranges(const Eigen::VectorXd& estimate, const Eigen::MatrixXd& neighbors) {
  Eigen::VectorXd z(neighbors.cols());
  for (Eigen::Index k = 0; k < neighbors.cols(); ++k) {
    z(k) = (estimate - neighbors.col(k)).norm();
    if (!(z(k) > 0.0)) throw CoincidentNodes(0, static_cast<std::size_t>(k) + 1);
  }
  return z;
}

/// Jacobian of predict_ranges w.r.t. the robot's own estimate; row k is the
/// unit vector from neighbor k toward the robot.
inline Eigen::MatrixXd range_jacobian(const Eigen::VectorXd& estimate, const Eigen::MatrixXd& neighbors) {
  Eigen::MatrixXd F(neighbors.cols(), estimate.size());
  for (Eigen::Index k = 0; k < neighbors.cols(); ++k) {
    const Eigen::VectorXd diff = estimate - neighbors.col(k);
    const double len = diff.norm();
    if (!(len > 0.0)) throw CoincidentNodes(0, static_cast<std::size_t>(k) + 1);
    F.row(k) = diff.transpose() / len;
  }
  return F;
}

/// Kalman measurement update from range measurements `z` to the given
/// neighbor estimates:
///   K = P F^T (F P F^T + C)^-1,  x_hat += K (z - z_hat),  P -= K F P.
inline FilterState filter_update(const FilterState& state, const Eigen::VectorXd& z,
                                 const Eigen::MatrixXd& neighbors) {
  if (z.size() != neighbors.cols()) throw std::invalid_argument("one range per neighbor required");
  if (!(state.measurement_variance > 0.0))
    throw std::invalid_argument("measurement variance must be positive");
  if (z.size() == 0) return state;

  const Eigen::VectorXd z_hat = predict_ranges(state.estimate, neighbors);
  const Eigen::MatrixXd F = range_jacobian(state.estimate, neighbors);
  const Eigen::MatrixXd PFt = state.covariance * F.transpose();
  Eigen::MatrixXd innovation = F * PFt;
  innovation.diagonal().array() += state.measurement_variance;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(innovation);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw std::runtime_error("singular innovation covariance");
  const Eigen::MatrixXd gain = ldlt.solve(PFt.transpose()).transpose();

  FilterState out = state;
  out.estimate += gain * (z - z_hat);
  out.covariance -= gain * F * state.covariance;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

/// Linear update from an absolute position fix (identity observation).
inline FilterState anchor_update(const FilterState& state, const Eigen::VectorXd& absolute_position,
                                 double anchor_variance) {
  if (!state.is_anchor) throw std::invalid_argument("absolute fixes are only available to anchors");
  if (!(anchor_variance > 0.0)) throw std::invalid_argument("anchor variance must be positive");
  const auto d = state.estimate.size();
  Eigen::MatrixXd innovation = state.covariance;
  innovation.diagonal().array() += anchor_variance;
  const Eigen::MatrixXd gain = innovation.ldlt().solve(state.covariance).transpose();

  FilterState out = state;
  out.estimate += gain * (absolute_position - state.estimate);
  out.covariance = (Eigen::MatrixXd::Identity(d, d) - gain) * state.covariance;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

/// P += amount * I. Used for process noise and for the motion inflation
/// lambda_P dt^2 ||u||^2 between updates.
inline FilterState inflate_covariance(const FilterState& state, double amount) {
  if (amount < 0.0) throw std::invalid_argument("covariance inflation must be non-negative");
  FilterState out = state;
  out.covariance.diagonal().array() += amount;
  return out;
}

}  // namespace subrigid
