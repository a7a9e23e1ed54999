#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <limits>

namespace wfrdoc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Weighted point cloud sum_i w_i delta_{x_i}. Row i of `points` is x_i.
class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;
  /// Throws InvalidArgument on length mismatch, negative/non-finite weights,
  /// or non-positive total mass.
  DiscreteMeasure(Eigen::MatrixXd points, Eigen::VectorXd weights);

  const Eigen::MatrixXd& points() const noexcept { return points_; }
  const Eigen::VectorXd& weights() const noexcept { return weights_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(weights_.size()); }
  std::size_t dimension() const noexcept { return static_cast<std::size_t>(points_.cols()); }
  double total_mass() const noexcept { return weights_.sum(); }

  /// Same support, weights multiplied by `s` (> 0).
  DiscreteMeasure scaled(double s) const;

 private:
  Eigen::MatrixXd points_;
  Eigen::VectorXd weights_;
};

enum class CostKind { euclidean, wfr_log };

/// Pairwise ground costs between the supports of two measures.
/// For `wfr_log`, entries may be +infinity (pair beyond the transport cutoff).
struct CostMatrix {
  Eigen::MatrixXd entries;
  CostKind kind = CostKind::euclidean;
  double eta = 0.0;  // only meaningful for wfr_log

  std::size_t rows() const noexcept { return static_cast<std::size_t>(entries.rows()); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(entries.cols()); }
  CostMatrix transposed() const { return {entries.transpose(), kind, eta}; }
};

/// Pairwise Euclidean distances between point rows of two matrices.
Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// C_ij = |x_i - y_j|.
CostMatrix euclidean_cost(const DiscreteMeasure& a, const DiscreteMeasure& b);

/// Cone cost of a single pair distance: -2 log cos+(d / 2 eta).
/// Returns +infinity at or beyond d = pi * eta, and whenever cos+ underflows below 1e-300.
double wfr_pair_cost(double distance, double eta);

/// C_ij = -2 log cos+(|x_i - y_j| / 2 eta). Throws InvalidArgument if eta <= 0.
CostMatrix wfr_cost(const DiscreteMeasure& a, const DiscreteMeasure& b, double eta);

/// Unnormalized KL: sum_i a_i log(a_i / b_i) - a_i + b_i, with 0 log 0 = 0.
/// Requires a >= 0, b > 0, equal lengths.
double generalized_kl(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace wfrdoc
