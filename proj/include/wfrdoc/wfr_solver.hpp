#pragma once

#include "wfrdoc/measures.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace wfrdoc {

/// Dual variables of the unbalanced problem, one per source point (phi) and
/// target point (psi). The scaling vectors u = exp(phi/eps), v = exp(psi/eps)
/// are never materialized.
struct DualPotentials {
  Eigen::VectorXd phi;
  Eigen::VectorXd psi;
};

/// Nonnegative I x J matrix; zero wherever the cost is infinite.
using TransportPlan = Eigen::MatrixXd;

struct SolverStage {
  double epsilon;
  std::size_t iterations;
};

/// Decreasing sequence of entropic regularization levels.
class SolverSchedule {
 public:
  /// Throws InvalidArgument if empty, if an epsilon is not positive, if an
  /// iteration count is zero, or if epsilons are not strictly decreasing.
  explicit SolverSchedule(std::vector<SolverStage> stages);

  /// (eps_m, n_m) = (e^{-m-1}, 32 m) for m = 1..stages; the default has 5 stages.
  static SolverSchedule standard(std::size_t stages = 5);

  /// Same epsilons as standard(stages), but with n_m = max(32 m, ceil(sweeps / eps_m))
  /// iterations so each stage contracts to its entropic fixed point. Used where a
  /// solve is compared with the unregularized closed forms.
  static SolverSchedule converged(std::size_t stages, double sweeps = 4.0);

  const std::vector<SolverStage>& stages() const noexcept { return stages_; }
  std::size_t size() const noexcept { return stages_.size(); }
  const SolverStage& operator[](std::size_t m) const { return stages_[m]; }

  /// Parses "eps:iters,eps:iters,...". Throws ConfigError on bad syntax.
  static SolverSchedule parse(const std::string& text);

 private:
  std::vector<SolverStage> stages_;
};

struct StageResult {
  TransportPlan plan;
  DualPotentials potentials;
  std::size_t absorptions = 0;
};

struct StageTrace {
  double epsilon;
  std::size_t iterations;
  double primal;
  double dual;
  /// Potentials satisfy phi_i + psi_j <= C_ij, so `dual` lower-bounds the optimum.
  bool dual_feasible;
};

struct SolveResult {
  TransportPlan plan;
  DualPotentials potentials;
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
  double distance = 0.0;
  std::vector<StageTrace> stage_trace;
};

/// Width of the "absorb scalings into potentials" trigger on |log a|, |log b|.
inline constexpr double kAbsorbThreshold = 50.0;

/// One log-stabilized unbalanced Sinkhorn stage at fixed epsilon.
///
/// Runs `iterations` alternating updates
///   a_i <- (mu_i / (e^{phi_i} sum_j R_ij b_j))^{1/(1+eps)}
///   b_j <- (nu_j / (e^{psi_j} sum_i R_ij a_i))^{1/(1+eps)}
/// on the kernel R_ij = exp((phi_i + psi_j - C_ij)/eps). Scalings are absorbed
/// into the potentials (phi += eps log a) whenever one of |log a|, |log b|
/// exceeds kAbsorbThreshold, and always after the last iteration, so the
/// returned plan is exp((phi + psi - C)/eps) at the returned potentials.
///
/// `stage_index` only labels NumericalError messages.
StageResult sinkhorn_stage(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                           const CostMatrix& cost, double epsilon, std::size_t iterations,
                           const std::optional<DualPotentials>& warm = std::nullopt,
                           std::size_t stage_index = 0);

/// sum_ij C_ij R_ij + KL(R 1 | mu) + KL(R^T 1 | nu), with 0 * inf = 0.
/// Throws InvalidArgument when the plan puts mass on an infinite-cost entry.
double primal_objective(const TransportPlan& plan, const CostMatrix& cost,
                        const DiscreteMeasure& mu, const DiscreteMeasure& nu);
double primal_objective(const TransportPlan& plan, const CostMatrix& cost,
                        const Eigen::VectorXd& mu, const Eigen::VectorXd& nu);

/// sum_i (1 - e^{-phi_i}) mu_i + sum_j (1 - e^{-psi_j}) nu_j.
double dual_objective(const DualPotentials& potentials, const Eigen::VectorXd& mu,
                      const Eigen::VectorXd& nu);
double dual_objective(const DualPotentials& potentials, const DiscreteMeasure& mu,
                      const DiscreteMeasure& nu);

/// True when phi_i + psi_j <= C_ij everywhere, i.e. the potentials are feasible
/// for the unregularized dual and dual_objective is a certified lower bound.
bool dual_feasible(const DualPotentials& potentials, const CostMatrix& cost);

/// Normalized distance eta * sqrt(2 * max(J, 0)); matches the two-Dirac closed form.
double distance_from_primal(double primal, double eta);

/// Incremental solver state for one (mu, nu, cost) instance; advances one stage
/// at a time with warm-started potentials. solve_wfr and the pruned top-k query
/// both drive this, so they produce bitwise-identical results.
///
/// The pair is solved in a canonical orientation (see canonical_order) and results
/// are mapped back, so swapping mu and nu yields the transposed plan and exactly
/// the same objective values.
class StagedSolve {
 public:
  /// Keeps references; all four arguments must outlive the object.
  StagedSolve(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
              const SolverSchedule& schedule);

  /// Runs the next stage and records its trace. Throws if already done.
  void advance();
  bool done() const noexcept { return next_ >= schedule_->size(); }
  std::size_t stages_run() const noexcept { return next_; }

  /// Plan and potentials of the last stage, in the caller's (mu, nu) orientation.
  StageResult current() const;
  const std::vector<StageTrace>& trace() const noexcept { return trace_; }

  /// Valid after all stages ran.
  SolveResult result(double eta) const;

 private:
  const DiscreteMeasure* source_;
  const DiscreteMeasure* target_;
  const CostMatrix* cost_;
  const SolverSchedule* schedule_;
  bool swapped_ = false;
  CostMatrix transposed_;
  std::size_t next_ = 0;
  StageResult state_;
  std::vector<StageTrace> trace_;

  const CostMatrix& oriented_cost() const noexcept { return swapped_ ? transposed_ : *cost_; }
};

/// Strict total order on measures (size, then weights, then coordinates).
/// Returns true when `a` sorts before `b`.
bool canonical_order(const DiscreteMeasure& a, const DiscreteMeasure& b);

/// Epsilon-continuation over `schedule` on a precomputed WFR cost matrix.
SolveResult solve_wfr(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                      const SolverSchedule& schedule);

/// Builds the WFR cost for `eta` and solves.
SolveResult solve_wfr(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double eta,
                      const SolverSchedule& schedule);

}  // namespace wfrdoc
