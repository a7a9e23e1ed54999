#include "wfrdoc/wfr_solver.hpp"

#include "wfrdoc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wfrdoc {

namespace {

constexpr double kDenominatorFloor = 1e-300;
// exp() overflows past ~709.8; a scaling this large always triggers absorption,
// which uses the unclamped logarithm.
constexpr double kMaxLogScaling = 700.0;

void check_instance(const Eigen::VectorXd& mu, const Eigen::VectorXd& nu, const CostMatrix& cost) {
  if (static_cast<Eigen::Index>(cost.rows()) != mu.size() ||
      static_cast<Eigen::Index>(cost.cols()) != nu.size())
    throw InvalidArgument("cost matrix is " + std::to_string(cost.rows()) + "x" +
                          std::to_string(cost.cols()) + " but measures have " +
                          std::to_string(mu.size()) + " and " + std::to_string(nu.size()) +
                          " points");
}

void require_positive_weights(const Eigen::VectorXd& w, const char* which) {
  if (w.size() == 0 || !(w.sum() > 0.0))
    throw InvalidArgument(std::string(which) + " has zero mass");
  if ((w.array() <= 0.0).any())
    throw InvalidArgument(std::string(which) + " has a zero-weight point; drop it before solving");
}

Eigen::MatrixXd stabilized_kernel(const Eigen::VectorXd& phi, const Eigen::VectorXd& psi,
                                  const Eigen::MatrixXd& c, double eps) {
  Eigen::MatrixXd r(c.rows(), c.cols());
  for (Eigen::Index j = 0; j < c.cols(); ++j)
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      const double cij = c(i, j);
      r(i, j) = std::isinf(cij) ? 0.0 : std::exp((phi[i] + psi[j] - cij) / eps);
    }
  return r;
}

}  // namespace

SolverSchedule::SolverSchedule(std::vector<SolverStage> stages) : stages_(std::move(stages)) {
  if (stages_.empty()) throw InvalidArgument("schedule has no stages");
  for (std::size_t m = 0; m < stages_.size(); ++m) {
    if (!(stages_[m].epsilon > 0.0) || !std::isfinite(stages_[m].epsilon))
      throw InvalidArgument("schedule stage " + std::to_string(m + 1) + ": epsilon must be positive");
    if (stages_[m].iterations == 0)
      throw InvalidArgument("schedule stage " + std::to_string(m + 1) + ": zero iterations");
    if (m > 0 && !(stages_[m].epsilon < stages_[m - 1].epsilon))
      throw InvalidArgument("schedule epsilons must be strictly decreasing");
  }
}

SolverSchedule SolverSchedule::standard(std::size_t stages) {
  std::vector<SolverStage> s;
  for (std::size_t m = 1; m <= stages; ++m)
    s.push_back({std::exp(-static_cast<double>(m) - 1.0), 32 * m});
  return SolverSchedule(std::move(s));
}

SolverSchedule SolverSchedule::converged(std::size_t stages, double sweeps) {
  std::vector<SolverStage> s;
  for (std::size_t m = 1; m <= stages; ++m) {
    const double eps = std::exp(-static_cast<double>(m) - 1.0);
    const auto n = static_cast<std::size_t>(std::ceil(sweeps / eps));
    s.push_back({eps, std::max<std::size_t>(32 * m, n)});
  }
  return SolverSchedule(std::move(s));
}

SolverSchedule SolverSchedule::parse(const std::string& text) {
  std::vector<SolverStage> s;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("schedule item '" + item + "' is not eps:iters");
    try {
      std::size_t used = 0;
      const double eps = std::stod(item.substr(0, colon), &used);
      if (used != colon) throw std::invalid_argument("eps");
      const std::string iters = item.substr(colon + 1);
      const long long n = std::stoll(iters, &used);
      if (used != iters.size() || n <= 0) throw std::invalid_argument("iters");
      s.push_back({eps, static_cast<std::size_t>(n)});
    } catch (const std::logic_error&) {
      throw ConfigError("schedule item '" + item + "' is not eps:iters");
    }
  }
  try {
    return SolverSchedule(std::move(s));
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

StageResult sinkhorn_stage(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                           const CostMatrix& cost, double epsilon, std::size_t iterations,
                           const std::optional<DualPotentials>& warm, std::size_t stage_index) {
  const Eigen::VectorXd& wmu = mu.weights();
  const Eigen::VectorXd& wnu = nu.weights();
  check_instance(wmu, wnu, cost);
  require_positive_weights(wmu, "source measure");
  require_positive_weights(wnu, "target measure");
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  if (iterations == 0) throw InvalidArgument("a stage needs at least one iteration");

  const Eigen::Index I = wmu.size();
  const Eigen::Index J = wnu.size();
  StageResult out;
  DualPotentials& pot = out.potentials;
  if (warm) {
    if (warm->phi.size() != I || warm->psi.size() != J)
      throw InvalidArgument("warm-start potentials do not match the measures");
    pot = *warm;
  } else {
    pot.phi = Eigen::VectorXd::Zero(I);
    pot.psi = Eigen::VectorXd::Zero(J);
  }

  const double power = 1.0 / (1.0 + epsilon);
  const Eigen::ArrayXd log_mu = wmu.array().log();
  const Eigen::ArrayXd log_nu = wnu.array().log();
  const Eigen::MatrixXd& c = cost.entries;

  Eigen::MatrixXd kernel = stabilized_kernel(pot.phi, pot.psi, c, epsilon);
  Eigen::VectorXd a(I), b = Eigen::VectorXd::Ones(J);
  Eigen::VectorXd log_a(I), log_b(J), kb(I), ka(J);
  // Parts of the log-scalings that only change on absorption.
  Eigen::VectorXd offset_a = power * (log_mu.matrix() - pot.phi);
  Eigen::VectorXd offset_b = power * (log_nu.matrix() - pot.psi);

  for (std::size_t k = 0; k < iterations; ++k) {
    kb.setZero();
    for (Eigen::Index j = 0; j < J; ++j) kb += kernel.col(j) * b[j];
    double peak = 0.0;
    for (Eigen::Index i = 0; i < I; ++i) {
      log_a[i] = offset_a[i] - power * std::log(std::max(kb[i], kDenominatorFloor));
      a[i] = std::exp(std::min(log_a[i], kMaxLogScaling));
      peak = std::max(peak, std::abs(log_a[i]));
    }

    for (Eigen::Index j = 0; j < J; ++j) ka[j] = kernel.col(j).dot(a);
    for (Eigen::Index j = 0; j < J; ++j) {
      log_b[j] = offset_b[j] - power * std::log(std::max(ka[j], kDenominatorFloor));
      b[j] = std::exp(std::min(log_b[j], kMaxLogScaling));
      peak = std::max(peak, std::abs(log_b[j]));
    }

    if (k + 1 == iterations || peak > kAbsorbThreshold) {
      pot.phi += epsilon * log_a;
      pot.psi += epsilon * log_b;
      if (!pot.phi.allFinite() || !pot.psi.allFinite())
        throw NumericalError("non-finite potentials after absorption at iteration " +
                                 std::to_string(k + 1),
                             stage_index);
      kernel = stabilized_kernel(pot.phi, pot.psi, c, epsilon);
      offset_a = power * (log_mu.matrix() - pot.phi);
      offset_b = power * (log_nu.matrix() - pot.psi);
      b.setOnes();
      ++out.absorptions;
    }
  }
  out.plan = std::move(kernel);
  return out;
}

double primal_objective(const TransportPlan& plan, const CostMatrix& cost, const Eigen::VectorXd& mu,
                        const Eigen::VectorXd& nu) {
  check_instance(mu, nu, cost);
  if (plan.rows() != mu.size() || plan.cols() != nu.size())
    throw InvalidArgument("plan shape does not match the measures");
  double transport = 0.0;
  const Eigen::MatrixXd& c = cost.entries;
  for (Eigen::Index j = 0; j < plan.cols(); ++j)
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
      const double r = plan(i, j);
      if (r < 0.0) throw InvalidArgument("plan has a negative entry");
      if (std::isinf(c(i, j))) {
        if (r > 0.0) throw InvalidArgument("plan moves mass across an infinite-cost pair");
        continue;
      }
      transport += c(i, j) * r;
    }
  const Eigen::VectorXd rows = plan.rowwise().sum();
  const Eigen::VectorXd cols = plan.colwise().sum().transpose();
  return transport + generalized_kl(rows, mu) + generalized_kl(cols, nu);
}

double primal_objective(const TransportPlan& plan, const CostMatrix& cost, const DiscreteMeasure& mu,
                        const DiscreteMeasure& nu) {
  return primal_objective(plan, cost, mu.weights(), nu.weights());
}

double dual_objective(const DualPotentials& potentials, const Eigen::VectorXd& mu,
                      const Eigen::VectorXd& nu) {
  if (potentials.phi.size() != mu.size() || potentials.psi.size() != nu.size())
    throw InvalidArgument("potentials do not match the measures");
  const double source = ((1.0 - (-potentials.phi.array()).exp()) * mu.array()).sum();
  const double target = ((1.0 - (-potentials.psi.array()).exp()) * nu.array()).sum();
  return source + target;
}

double dual_objective(const DualPotentials& potentials, const DiscreteMeasure& mu,
                      const DiscreteMeasure& nu) {
  return dual_objective(potentials, mu.weights(), nu.weights());
}

bool dual_feasible(const DualPotentials& potentials, const CostMatrix& cost) {
  const Eigen::MatrixXd& c = cost.entries;
  for (Eigen::Index j = 0; j < c.cols(); ++j)
    for (Eigen::Index i = 0; i < c.rows(); ++i)
      if (potentials.phi[i] + potentials.psi[j] > c(i, j)) return false;
  return true;
}

double distance_from_primal(double primal, double eta) {
  return eta * std::sqrt(2.0 * std::max(primal, 0.0));
}

bool canonical_order(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  if (a.dimension() != b.dimension()) return a.dimension() < b.dimension();
  const auto lex = [](const double* x, const double* y, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i)
      if (x[i] != y[i]) return x[i] < y[i] ? -1 : 1;
    return 0;
  };
  if (int w = lex(a.weights().data(), b.weights().data(), a.weights().size())) return w < 0;
  return lex(a.points().data(), b.points().data(), a.points().size()) < 0;
}

StagedSolve::StagedSolve(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                         const SolverSchedule& schedule)
    : source_(&mu), target_(&nu), cost_(&cost), schedule_(&schedule) {
  check_instance(mu.weights(), nu.weights(), cost);
  if (canonical_order(nu, mu)) {
    swapped_ = true;
    std::swap(source_, target_);
    transposed_ = cost.transposed();
  }
}

void StagedSolve::advance() {
  if (done()) throw InvalidArgument("all schedule stages already ran");
  const SolverStage& stage = (*schedule_)[next_];
  std::optional<DualPotentials> warm;
  if (next_ > 0) warm = std::move(state_.potentials);
  const CostMatrix& cost = oriented_cost();
  state_ = sinkhorn_stage(*source_, *target_, cost, stage.epsilon, stage.iterations, warm, next_ + 1);
  const double primal = primal_objective(state_.plan, cost, *source_, *target_);
  const double dual = dual_objective(state_.potentials, *source_, *target_);
  const bool feasible = dual_feasible(state_.potentials, cost);
  trace_.push_back({stage.epsilon, stage.iterations, primal, dual, feasible});
  ++next_;
}

StageResult StagedSolve::current() const {
  if (!swapped_) return state_;
  return {state_.plan.transpose(), {state_.potentials.psi, state_.potentials.phi}, state_.absorptions};
}

SolveResult StagedSolve::result(double eta) const {
  if (!done()) throw InvalidArgument("solve has not finished its schedule");
  StageResult oriented = current();
  SolveResult r;
  r.plan = std::move(oriented.plan);
  r.potentials = std::move(oriented.potentials);
  r.primal = trace_.back().primal;
  r.dual = trace_.back().dual;
  r.gap = r.primal - r.dual;
  r.distance = distance_from_primal(r.primal, eta);
  r.stage_trace = trace_;
  return r;
}

SolveResult solve_wfr(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                      const SolverSchedule& schedule) {
  if (cost.kind != CostKind::wfr_log) throw InvalidArgument("solve_wfr needs a wfr_log cost matrix");
  StagedSolve solve(mu, nu, cost, schedule);
  while (!solve.done()) solve.advance();
  return solve.result(cost.eta);
}

SolveResult solve_wfr(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double eta,
                      const SolverSchedule& schedule) {
  const CostMatrix cost = wfr_cost(mu, nu, eta);
  return solve_wfr(mu, nu, cost, schedule);
}

}  // namespace wfrdoc
