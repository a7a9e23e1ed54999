#include "wfrdoc/measures.hpp"

#include "wfrdoc/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace wfrdoc {

DiscreteMeasure::DiscreteMeasure(Eigen::MatrixXd points, Eigen::VectorXd weights)
    : points_(std::move(points)), weights_(std::move(weights)) {
  if (points_.rows() != weights_.size())
    throw InvalidArgument("measure has " + std::to_string(points_.rows()) + " points but " +
                          std::to_string(weights_.size()) + " weights");
  for (Eigen::Index i = 0; i < weights_.size(); ++i)
    if (!std::isfinite(weights_[i]) || weights_[i] < 0.0)
      throw InvalidArgument("measure weight " + std::to_string(i) + " is negative or non-finite");
  if (!(weights_.sum() > 0.0)) throw InvalidArgument("measure has zero total mass");
  if (!points_.allFinite()) throw InvalidArgument("measure has non-finite point coordinates");
}

DiscreteMeasure DiscreteMeasure::scaled(double s) const {
  if (!(s > 0.0)) throw InvalidArgument("mass scale must be positive");
  return DiscreteMeasure(points_, weights_ * s);
}

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols())
    throw InvalidArgument("point dimension mismatch: " + std::to_string(a.cols()) + " vs " +
                          std::to_string(b.cols()));
  Eigen::MatrixXd d(a.rows(), b.rows());
  // Explicit differences rather than the |a|^2 + |b|^2 - 2ab expansion: coincident
  // points must give exactly 0.
  for (Eigen::Index j = 0; j < b.rows(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) d(i, j) = (a.row(i) - b.row(j)).norm();
  return d;
}

CostMatrix euclidean_cost(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  return {pairwise_distances(a.points(), b.points()), CostKind::euclidean, 0.0};
}

double wfr_pair_cost(double distance, double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidArgument("eta must be a positive finite number");
  const double z = distance / (2.0 * eta);
  if (z >= std::numbers::pi / 2.0) return kInf;
  const double c = std::cos(z);
  if (c < 1e-300) return kInf;
  return -2.0 * std::log(c);
}

CostMatrix wfr_cost(const DiscreteMeasure& a, const DiscreteMeasure& b, double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidArgument("eta must be a positive finite number");
  Eigen::MatrixXd c = pairwise_distances(a.points(), b.points());
  c = c.unaryExpr([eta](double d) { return wfr_pair_cost(d, eta); });
  return {std::move(c), CostKind::wfr_log, eta};
}

double generalized_kl(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw InvalidArgument("generalized_kl: length mismatch");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] < 0.0 || b[i] < 0.0) throw InvalidArgument("generalized_kl: negative entry");
    if (a[i] > 0.0) {
      if (b[i] == 0.0) return kInf;
      sum += a[i] * std::log(a[i] / b[i]) - a[i] + b[i];
    } else {
      sum += b[i];
    }
  }
  return sum < 0.0 ? 0.0 : sum;
}

}  // namespace wfrdoc
