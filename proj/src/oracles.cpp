#include "wfrdoc/oracles.hpp"

#include "wfrdoc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace wfrdoc {

double cos_plus(double x) {
  return std::abs(x) <= std::numbers::pi / 2.0 ? std::cos(x) : 0.0;
}

double dirac_wfr(double h0, const Eigen::VectorXd& x0, double h1, const Eigen::VectorXd& x1,
                 double eta) {
  if (h0 < 0.0 || h1 < 0.0) throw InvalidArgument("dirac masses must be nonnegative");
  if (!(eta > 0.0)) throw InvalidArgument("eta must be positive");
  if (x0.size() != x1.size()) throw InvalidArgument("dirac locations differ in dimension");
  const double c = cos_plus((x1 - x0).norm() / (2.0 * eta));
  const double bracket = std::max(h0 + h1 - 2.0 * std::sqrt(h0 * h1) * c, 0.0);
  return std::sqrt(2.0) * eta * std::sqrt(bracket);
}

SingleSourcePlan single_source_plan(double mu_mass, const Eigen::VectorXd& cost_row,
                                    const Eigen::VectorXd& nu) {
  if (!(mu_mass > 0.0)) throw InvalidArgument("source mass must be positive");
  if (cost_row.size() != nu.size()) throw InvalidArgument("cost row and target differ in length");
  if ((nu.array() < 0.0).any()) throw InvalidArgument("target weights must be nonnegative");

  Eigen::VectorXd weighted(nu.size());
  for (Eigen::Index j = 0; j < nu.size(); ++j)
    weighted[j] = std::isinf(cost_row[j]) ? 0.0 : nu[j] * std::exp(-cost_row[j]);
  const double s = weighted.sum();

  SingleSourcePlan out;
  if (s == 0.0) {
    out.row = Eigen::VectorXd::Zero(nu.size());
    out.objective = mu_mass + nu.sum();
    return out;
  }
  out.row = weighted * std::sqrt(mu_mass / s);

  CostMatrix cost{cost_row.transpose(), CostKind::wfr_log, 0.0};
  Eigen::VectorXd mu(1);
  mu[0] = mu_mass;
  out.objective = primal_objective(TransportPlan(out.row.transpose()), cost, mu, nu);
  return out;
}

double splitting_bruteforce(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double eta) {
  if (!(eta > 0.0)) throw InvalidArgument("eta must be positive");
  const Eigen::Index I = static_cast<Eigen::Index>(mu.size());
  const Eigen::Index J = static_cast<Eigen::Index>(nu.size());
  if (static_cast<std::size_t>(I * J) > kSplittingMaxPairs)
    throw InvalidArgument("splitting_bruteforce is limited to I*J <= 9");

  const Eigen::MatrixXd d = pairwise_distances(mu.points(), nu.points());
  const Eigen::MatrixXd c = d.unaryExpr([eta](double x) { return cos_plus(x / (2.0 * eta)); });
  const Eigen::VectorXd& m = mu.weights();
  const Eigen::VectorXd& n = nu.weights();

  // alpha(i, j) splits mu_i, beta(i, j) splits nu_j; both start uniform.
  Eigen::MatrixXd alpha(I, J), beta(I, J);
  for (Eigen::Index i = 0; i < I; ++i) alpha.row(i).setConstant(m[i] / static_cast<double>(J));
  for (Eigen::Index j = 0; j < J; ++j) beta.col(j).setConstant(n[j] / static_cast<double>(I));

  auto coupling = [&] { return (c.array() * (alpha.array() * beta.array()).sqrt()).sum(); };

  // With the other block fixed, max sum_j w_j sqrt(alpha_j) s.t. sum_j alpha_j = mass
  // is attained at alpha_j = mass * w_j^2 / sum_k w_k^2.
  auto best_split = [](const Eigen::VectorXd& w, double mass, Eigen::Ref<Eigen::VectorXd> out) {
    const double norm2 = w.squaredNorm();
    if (norm2 > 0.0) out = mass * w.array().square().matrix() / norm2;
  };

  double value = coupling();
  constexpr int kMaxSweeps = 5'000'000;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    for (Eigen::Index i = 0; i < I; ++i) {
      const Eigen::VectorXd w = (c.row(i).array() * beta.row(i).array().sqrt()).matrix().transpose();
      Eigen::VectorXd row = alpha.row(i).transpose();
      best_split(w, m[i], row);
      alpha.row(i) = row.transpose();
    }
    for (Eigen::Index j = 0; j < J; ++j) {
      const Eigen::VectorXd w = (c.col(j).array() * alpha.col(j).array().sqrt()).matrix();
      Eigen::VectorXd col = beta.col(j);
      best_split(w, n[j], col);
      beta.col(j) = col;
    }
    const double next = coupling();
    const bool converged = std::abs(next - value) < 1e-14 * std::max(1.0, std::abs(next));
    value = next;
    if (converged) break;
  }
  const double squared = 2.0 * eta * eta * (m.sum() + n.sum() - 2.0 * value);
  return std::max(squared, 0.0);
}

namespace {

double marginal_error(const Eigen::MatrixXd& plan, const Eigen::VectorXd& mu, const Eigen::VectorXd& nu) {
  const double rows = (plan.rowwise().sum() - mu).cwiseAbs().maxCoeff();
  const double cols = (plan.colwise().sum().transpose() - nu).cwiseAbs().maxCoeff();
  return std::max(rows, cols);
}

}  // namespace

BalancedSolveResult balanced_sinkhorn(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                      const CostMatrix& cost, const SolverSchedule& schedule) {
  const Eigen::VectorXd& wmu = mu.weights();
  const Eigen::VectorXd& wnu = nu.weights();
  const Eigen::MatrixXd& c = cost.entries;
  if (c.rows() != wmu.size() || c.cols() != wnu.size())
    throw InvalidArgument("cost matrix does not match the measures");
  if (std::abs(wmu.sum() - wnu.sum()) > 1e-9)
    throw InvalidArgument("balanced transport needs equal total masses");
  if ((wmu.array() <= 0.0).any() || (wnu.array() <= 0.0).any())
    throw InvalidArgument("balanced transport needs strictly positive weights");
  const Eigen::MatrixXd finite = c.unaryExpr([](double x) { return std::isinf(x) ? 0.0 : 1.0; });
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    if (finite.row(i).sum() == 0.0)
      throw InfeasibleError("source point " + std::to_string(i) + " has no finite-cost target");
  for (Eigen::Index j = 0; j < c.cols(); ++j)
    if (finite.col(j).sum() == 0.0)
      throw InfeasibleError("target point " + std::to_string(j) + " has no finite-cost source");

  const Eigen::Index I = wmu.size();
  const Eigen::Index J = wnu.size();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(I), g = Eigen::VectorXd::Zero(J);
  auto kernel_at = [&](double eps) {
    Eigen::MatrixXd k(I, J);
    for (Eigen::Index j = 0; j < J; ++j)
      for (Eigen::Index i = 0; i < I; ++i)
        k(i, j) = std::isinf(c(i, j)) ? 0.0 : std::exp((f[i] + g[j] - c(i, j)) / eps);
    return k;
  };

  BalancedSolveResult out;
  Eigen::MatrixXd kernel;
  for (std::size_t m = 0; m < schedule.size(); ++m) {
    const double eps = schedule[m].epsilon;
    kernel = kernel_at(eps);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(J);
    for (std::size_t k = 0; k < schedule[m].iterations; ++k) {
      const Eigen::ArrayXd log_u =
          wmu.array().log() - (kernel * v).array().max(1e-300).log();
      const Eigen::VectorXd u = log_u.min(700.0).exp().matrix();
      const Eigen::ArrayXd log_v =
          wnu.array().log() - (kernel.transpose() * u).array().max(1e-300).log();
      v = log_v.min(700.0).exp().matrix();
      const bool last = k + 1 == schedule[m].iterations;
      if (last || log_u.abs().maxCoeff() > kAbsorbThreshold || log_v.abs().maxCoeff() > kAbsorbThreshold) {
        f.array() += eps * log_u;
        g.array() += eps * log_v;
        if (!f.allFinite() || !g.allFinite())
          throw NumericalError("non-finite balanced potentials", m + 1);
        kernel = kernel_at(eps);
        v.setOnes();
      }
    }
    out.stage_marginal_errors.push_back(marginal_error(kernel, wmu, wnu));
  }
  out.plan = std::move(kernel);
  out.marginal_error = out.stage_marginal_errors.back();
  double primal = 0.0;
  for (Eigen::Index j = 0; j < J; ++j)
    for (Eigen::Index i = 0; i < I; ++i)
      if (!std::isinf(c(i, j))) primal += c(i, j) * out.plan(i, j);
  out.primal = primal;
  return out;
}

}  // namespace wfrdoc
