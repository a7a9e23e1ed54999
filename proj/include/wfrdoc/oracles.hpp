#pragma once

#include "wfrdoc/measures.hpp"
#include "wfrdoc/wfr_solver.hpp"

#include <Eigen/Dense>

#include <vector>

namespace wfrdoc {

/// cos clamped to zero outside [-pi/2, pi/2].
double cos_plus(double x);

/// Closed-form WFR distance between h0 delta_{x0} and h1 delta_{x1}:
/// sqrt(2) eta [h0 + h1 - 2 sqrt(h0 h1) cos+(|x1 - x0| / 2 eta)]^{1/2}.
double dirac_wfr(double h0, const Eigen::VectorXd& x0, double h1, const Eigen::VectorXd& x1,
                 double eta);

struct SingleSourcePlan {
  Eigen::VectorXd row;
  double objective;
};

/// Exact minimizer of the unbalanced objective when the source is one Dirac of mass
/// `mu_mass`: r_j = nu_j e^{-C_j} sqrt(mu / S), S = sum_k nu_k e^{-C_k}.
/// Infinite costs contribute e^{-inf} = 0; S = 0 yields the zero row.
SingleSourcePlan single_source_plan(double mu_mass, const Eigen::VectorXd& cost_row,
                                    const Eigen::VectorXd& nu);

/// Largest I*J accepted by splitting_bruteforce.
inline constexpr std::size_t kSplittingMaxPairs = 9;

/// Squared WFR distance from the mass-splitting formulation: the minimum over
/// splittings sum_j alpha_ij = mu_i, sum_i beta_ji = nu_j of
/// sum_ij WFR^2(alpha_ij delta_{x_i}, beta_ji delta_{y_j}).
/// Solved by exact block-coordinate ascent on the concave part
/// sum_ij cos+_ij sqrt(alpha_ij beta_ji), started from the uniform splitting.
/// Test oracle only; throws InvalidArgument when I*J > kSplittingMaxPairs.
double splitting_bruteforce(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double eta);

struct BalancedSolveResult {
  TransportPlan plan;
  double primal = 0.0;
  double marginal_error = 0.0;
  /// Marginal error at the end of each schedule stage.
  std::vector<double> stage_marginal_errors;
};

/// Entropic balanced transport (WMD-style) with the same log-domain absorption
/// and epsilon-continuation as the WFR solver. Works with either cost kind.
/// Throws InvalidArgument on a mass mismatch beyond 1e-9 and InfeasibleError when
/// a row or column has no finite cost.
BalancedSolveResult balanced_sinkhorn(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                      const CostMatrix& cost, const SolverSchedule& schedule);

}  // namespace wfrdoc
