// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. `acceptance 3 5` runs a subset.
#include "support.hpp"
#include "wfrdoc/eval.hpp"
#include "wfrdoc/oracles.hpp"
#include "wfrdoc/retrieval.hpp"
#include "wfrdoc/wfr_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

using namespace wfrdoc;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances and limits.
constexpr double kDiracRel = 1e-3;
constexpr double kDiracAbs = 1e-4;
constexpr double kDiracSeconds = 5.0;
constexpr double kSingleSourceRel = 1e-3;
constexpr double kSingleSourceSeconds = 5.0;
constexpr double kSplittingRel = 1e-2;
constexpr double kSplittingSeconds = 30.0;
constexpr double kGapMeanRel = 1e-3;
constexpr double kGapSeconds = 120.0;
constexpr double kPruneSeconds = 120.0;
constexpr double kTable1Tol = 0.15;
constexpr double kDemoSeconds = 10.0;
constexpr double kSelfDistance = 0.05;  // times eta
constexpr double kSymmetryRel = 1e-6;
constexpr double kHomogeneityRel = 1e-3;
constexpr double kNoTransportRel = 1e-3;
constexpr double kSanitySeconds = 30.0;
constexpr double kTasksSeconds = 180.0;
constexpr double kDoublingRatio = 5.0;

// Schedule for comparisons against unregularized closed forms: standard
// epsilons continued to e^-12 with enough iterations per stage to converge.
SolverSchedule closed_form_schedule() { return SolverSchedule::converged(11, 1.0); }
// Per-entry plan comparisons need the entropic bias of small entries below 1e-3.
SolverSchedule plan_entry_schedule() { return SolverSchedule::converged(9, 2.0); }

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// 1 -------------------------------------------------------------------------
Outcome dirac_consistency() {
  const SolverSchedule schedule = closed_form_schedule();
  const double masses[] = {0.25, 1.0, 4.0};
  const double gaps[] = {0.0, 0.5, 1.0, 2.0, std::numbers::pi, 4.0};  // times eta
  const double etas[] = {0.25, 1.0, 4.0};
  std::size_t cases = 0, failures = 0;
  double worst_rel = 0.0, worst_abs = 0.0, worst_all = 0.0;
  for (double eta : etas)
    for (double h0 : masses)
      for (double h1 : masses)
        for (double g : gaps) {
          const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(2);
          Eigen::VectorXd x1 = Eigen::VectorXd::Zero(2);
          x1[0] = g * eta;
          const DiscreteMeasure mu(x0.transpose(), Eigen::VectorXd::Constant(1, h0));
          const DiscreteMeasure nu(x1.transpose(), Eigen::VectorXd::Constant(1, h1));
          const double expected = dirac_wfr(h0, x0, h1, x1, eta);
          const double got = solve_wfr(mu, nu, eta, schedule).distance;
          const double abs_err = std::abs(got - expected);
          const double rel_err = expected > 0.0 ? abs_err / expected : INFINITY;
          ++cases;
          if (expected > 0.0) worst_all = std::max(worst_all, rel_err);
          if (!(rel_err <= kDiracRel || abs_err <= kDiracAbs)) {
            ++failures;
            worst_rel = std::max(worst_rel, rel_err);
            worst_abs = std::max(worst_abs, abs_err);
          }
        }
  return {failures == 0, fmt("%zu/%zu cases within %.0e rel or %.0e abs; worst rel over nonzero cases %.2e; "
                             "worst failing rel %.2e abs %.2e",
                             cases - failures, cases, kDiracRel, kDiracAbs, worst_all, worst_rel, worst_abs)};
}

// 2 -------------------------------------------------------------------------
Outcome single_source() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<Eigen::Index> size(1, 50);
  std::normal_distribution<double> gauss(0.0, 0.8);
  std::uniform_real_distribution<double> weight(0.1, 1.0);
  const SolverSchedule schedule = plan_entry_schedule();
  double worst = 0.0;
  std::size_t entries = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index J = size(rng);
    Eigen::MatrixXd y(J, 3);
    for (Eigen::Index k = 0; k < y.size(); ++k) y.data()[k] = gauss(rng);
    Eigen::VectorXd nu(J);
    for (auto& w : nu) w = weight(rng);
    nu /= nu.sum();
    const DiscreteMeasure source(Eigen::MatrixXd::Zero(1, 3), Eigen::VectorXd::Ones(1));
    const DiscreteMeasure target(y, nu);
    const CostMatrix cost = wfr_cost(source, target, 1.0);
    const SolveResult r = solve_wfr(source, target, cost, schedule);
    const SingleSourcePlan closed = single_source_plan(1.0, cost.entries.row(0).transpose(), nu);
    for (Eigen::Index j = 0; j < J; ++j) {
      if (closed.row[j] == 0.0) {
        worst = std::max(worst, r.plan(0, j) == 0.0 ? 0.0 : INFINITY);
        continue;
      }
      worst = std::max(worst, std::abs(r.plan(0, j) - closed.row[j]) / closed.row[j]);
      ++entries;
    }
  }
  return {worst <= kSingleSourceRel,
          fmt("30 instances, %zu positive entries; worst relative entry error %.2e (limit %.0e)", entries, worst,
              kSingleSourceRel)};
}

// 3 -------------------------------------------------------------------------
Outcome splitting_equivalence() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<Eigen::Index> size(1, 3);
  std::uniform_real_distribution<double> mass(0.1, 2.0), unit(0.0, 1.0), angle(0.0, 2.0 * std::numbers::pi);
  const double etas[] = {0.5, 1.0, 2.0};
  const SolverSchedule schedule = closed_form_schedule();
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const double eta = etas[trial % 3];
    // Points in a disc of diameter 1.5 pi eta, so pair distances span [0, 1.5 pi eta].
    auto cloud = [&](Eigen::Index n) {
      Eigen::MatrixXd x(n, 2);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double r = 0.75 * std::numbers::pi * eta * std::sqrt(unit(rng)), a = angle(rng);
        x(i, 0) = r * std::cos(a);
        x(i, 1) = r * std::sin(a);
      }
      Eigen::VectorXd w(n);
      for (auto& v : w) v = mass(rng);
      return DiscreteMeasure(x, w);
    };
    const DiscreteMeasure mu = cloud(size(rng));
    const DiscreteMeasure nu = cloud(size(rng));
    const double split = splitting_bruteforce(mu, nu, eta);
    const double solved = 2.0 * eta * eta * solve_wfr(mu, nu, eta, schedule).primal;
    worst = std::max(worst, std::abs(split - solved) / split);
  }
  return {worst <= kSplittingRel, fmt("50 instances; worst relative difference %.2e (limit %.0e)", worst, kSplittingRel)};
}

// 4 -------------------------------------------------------------------------
Outcome duality_gap() {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<Eigen::Index> size(10, 200);
  const SolverSchedule schedule = SolverSchedule::standard();
  // Spread chosen so typical word-pair distances (about 2.5 eta) match real
  // embedding neighborhoods.
  constexpr double sigma = 0.56;
  double sum = 0.0, worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const DiscreteMeasure mu = testing::random_measure(rng, size(rng), 10, sigma);
    const DiscreteMeasure nu = testing::random_measure(rng, size(rng), 10, sigma);
    const SolveResult r = solve_wfr(mu, nu, 1.0, schedule);
    const double rel = r.gap / std::max(std::abs(r.primal), 1e-12);
    sum += rel;
    worst = std::max(worst, rel);
  }
  const double mean = sum / 100.0;
  return {mean <= kGapMeanRel, fmt("100 pairs; mean relative gap %.3e (limit %.0e), worst %.3e", mean, kGapMeanRel, worst)};
}

// 5 -------------------------------------------------------------------------
struct PruneRun {
  bool exact = true;
  bool monotone = true;
  double stage1 = 0.0;
  std::vector<double> mean_fraction;
  double pruned_seconds = 0.0;
  double exhaustive_seconds = 0.0;
};

PruneRun prune_experiment(std::size_t queries) {
  std::mt19937_64 rng(5);
  const DocumentIndex index = testing::topic_index(rng, 200, 10, 5, 5, 30);
  std::mt19937_64 qrng(55);
  const DocumentIndex probe = testing::topic_index(qrng, queries, 10, 5, 5, 30);
  const SolverSchedule schedule = SolverSchedule::standard();
  PruneRun out;
  out.mean_fraction.assign(schedule.size(), 0.0);
  for (const auto& q : probe.measures) {
    auto t0 = Clock::now();
    const QueryResult pruned = topk_query(q, index, 20, 1.0, schedule);
    out.pruned_seconds += seconds_since(t0);
    t0 = Clock::now();
    const QueryResult full = topk_query(q, index, 20, 1.0, schedule, true);
    out.exhaustive_seconds += seconds_since(t0);
    if (pruned.hits.size() != full.hits.size()) out.exact = false;
    for (std::size_t i = 0; out.exact && i < pruned.hits.size(); ++i)
      out.exact = pruned.hits[i].id == full.hits[i].id && pruned.hits[i].distance == full.hits[i].distance;
    const auto& f = pruned.prune_stats.survivors_after_stage;
    for (std::size_t m = 0; m < f.size(); ++m) {
      out.mean_fraction[m] += f[m] / static_cast<double>(queries);
      if (m > 0 && f[m] > f[m - 1]) out.monotone = false;
    }
  }
  out.stage1 = out.mean_fraction[0];
  return out;
}

std::optional<PruneRun> cached_prune;

Outcome pruning_exactness() {
  const auto t0 = Clock::now();
  cached_prune = prune_experiment(20);
  const double elapsed = seconds_since(t0);
  const PruneRun& r = *cached_prune;
  std::string fractions;
  for (double f : r.mean_fraction) fractions += fmt("%s%.3f", fractions.empty() ? "" : " ", f);
  return {r.exact && r.monotone && elapsed < kPruneSeconds,
          fmt("20 queries, k=20, 200 docs: hits %s; survivor fractions by stage [%s] %s; stage-1 mean %.3f",
              r.exact ? "identical" : "DIFFER", fractions.c_str(), r.monotone ? "nonincreasing" : "NOT monotone",
              r.stage1)};
}

// 6 -------------------------------------------------------------------------
Outcome ordering_flip() {
  const DemoReport r =
      length_varying_demo(synthetic_demo_table(1.0), default_demo_sentences(), 1.0, SolverSchedule::standard());
  bool pass = r.wmd_prefers_a() && r.wfr_prefers_c() && r.wfr_masses_decrease();
  std::string detail = fmt("synthetic: WMD(A,B)=%.3f < WMD(B,C)=%.3f %s; WFR(B,C)=%.3f < WFR(A,B)=%.3f %s; "
                           "B->C masses decreasing in cost %s",
                           r.b_to_a.wmd, r.b_to_c.wmd, r.wmd_prefers_a() ? "yes" : "no", r.b_to_c.wfr, r.b_to_a.wfr,
                           r.wfr_prefers_c() ? "yes" : "no", r.wfr_masses_decrease() ? "yes" : "no");

  // Optional check against the published table with a user-supplied embedding.
  if (const char* path = std::getenv("WFRDOC_FASTTEXT")) {
    const char* eta_env = std::getenv("WFRDOC_FASTTEXT_ETA");
    const double eta = eta_env ? std::atof(eta_env) : 1.0;
    try {
      const EmbeddingTable table = load_embeddings(path);
      const DemoReport real = length_varying_demo(table, default_demo_sentences(), eta, SolverSchedule::standard());
      const double got[4] = {real.b_to_a.wmd_total, real.b_to_c.wmd_total, real.b_to_a.wfr_share_total,
                             real.b_to_c.wfr_share_total};
      const double want[4] = {1.43, 1.50, 2.04, 1.96};
      bool close = true;
      for (int k = 0; k < 4; ++k) close = close && std::abs(got[k] - want[k]) <= kTable1Tol;
      pass = pass && close;
      detail += fmt("; embedding totals %.2f/%.2f/%.2f/%.2f vs 1.43/1.50/2.04/1.96 %s", got[0], got[1], got[2], got[3],
                    close ? "within 0.15" : "OUTSIDE 0.15");
    } catch (const std::exception& e) {
      pass = false;
      detail += std::string("; embedding check failed: ") + e.what();
    }
  } else {
    detail += "; published-table check SKIPPED (set WFRDOC_FASTTEXT)";
  }
  return {pass, detail};
}

// 7 -------------------------------------------------------------------------
Outcome metric_sanity() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<Eigen::Index> size(3, 40);
  const SolverSchedule standard = SolverSchedule::standard();
  const double etas[] = {0.25, 1.0, 4.0};
  double worst_self = 0.0, worst_sym = 0.0, worst_hom = 0.0, worst_none = 0.0;
  bool cutoff_ok = true;
  for (int trial = 0; trial < 30; ++trial) {
    const double eta = etas[trial % 3];
    const DiscreteMeasure mu = testing::random_measure(rng, size(rng), 5, 0.5 * eta);
    const DiscreteMeasure nu = testing::random_measure(rng, size(rng), 5, 0.5 * eta);

    worst_self = std::max(worst_self, solve_wfr(mu, mu, eta, standard).distance / eta);

    const CostMatrix cost = wfr_cost(mu, nu, eta);
    const SolveResult ab = solve_wfr(mu, nu, cost, standard);
    const SolveResult ba = solve_wfr(nu, mu, eta, standard);
    for (auto [x, y] : {std::pair{ab.primal, ba.primal}, {ab.dual, ba.dual}, {ab.distance, ba.distance}})
      worst_sym = std::max(worst_sym, std::abs(x - y) / std::max(std::abs(x), 1e-300));

    for (Eigen::Index i = 0; i < cost.entries.rows(); ++i)
      for (Eigen::Index j = 0; j < cost.entries.cols(); ++j)
        if (std::isinf(cost.entries(i, j)) && ab.plan(i, j) != 0.0) cutoff_ok = false;
  }
  for (int trial = 0; trial < 6; ++trial) {
    const double eta = etas[trial % 3];
    const DiscreteMeasure mu = testing::random_measure(rng, 4, 3, 0.6 * eta);
    const DiscreteMeasure nu = testing::random_measure(rng, 5, 3, 0.6 * eta);
    const double base = solve_wfr(mu, nu, eta, closed_form_schedule()).primal;
    for (double s : {0.3, 2.5}) {
      const double scaled = solve_wfr(mu.scaled(s), nu.scaled(s), eta, closed_form_schedule()).primal;
      worst_hom = std::max(worst_hom, std::abs(scaled - s * base) / (s * base));
    }
  }
  for (int trial = 0; trial < 9; ++trial) {
    const double eta = etas[trial % 3];
    DiscreteMeasure mu = testing::random_measure(rng, 6, 3, 0.3 * eta);
    Eigen::MatrixXd far = testing::random_measure(rng, 7, 3, 0.3 * eta).points();
    far.col(0).array() += 10.0 * eta;  // every pair beyond pi eta
    const DiscreteMeasure nu(far, testing::nbow_weights(rng, 7) * 1.7);
    const double d = solve_wfr(mu, nu, eta, standard).distance;
    const double expected = 2.0 * eta * eta * (mu.total_mass() + nu.total_mass());
    worst_none = std::max(worst_none, std::abs(d * d - expected) / expected);
  }
  const bool pass = worst_self <= kSelfDistance && worst_sym <= kSymmetryRel && worst_hom <= kHomogeneityRel &&
                    cutoff_ok && worst_none <= kNoTransportRel;
  return {pass, fmt("self/eta max %.2e (<=%.2f); symmetry %.1e (<=%.0e); homogeneity %.1e (<=%.0e); "
                    "cutoff mass %s; no-transport %.1e (<=%.0e)",
                    worst_self, kSelfDistance, worst_sym, kSymmetryRel, worst_hom, kHomogeneityRel,
                    cutoff_ok ? "zero" : "NONZERO", worst_none, kNoTransportRel)};
}

// 8 -------------------------------------------------------------------------
Outcome task_substitutes() {
  const SolverSchedule schedule = SolverSchedule::standard();
  const ClusterFixture f = two_cluster_corpus(20, 15, 8);
  const CrossValidationResult cv1 = cross_validate(f.train, f.table, schedule);
  const CrossValidationResult cv2 = cross_validate(f.train, f.table, schedule);
  const CrossValidationOptions grid;
  const bool in_grid =
      std::count(grid.k_grid.begin(), grid.k_grid.end(), cv1.best_k) == 1 &&
      std::count(grid.eta_grid.begin(), grid.eta_grid.end(), cv1.best_eta) == 1;
  const bool deterministic = cv1.best_k == cv2.best_k && cv1.best_eta == cv2.best_eta &&
                             cv1.mean_errors == cv2.mean_errors;
  const KnnReport knn = knn_error_rate(f.train, f.test, f.table, cv1.best_k, cv1.best_eta, schedule);

  const PairFixture pairs = synthetic_pr_fixture(40, 40, 88);
  const auto wfr = pr_curve(score_pairs(pairs.pairs, pairs.table, {}, Metric::wfr(1.0), schedule));
  const auto wmd = pr_curve(score_pairs(pairs.pairs, pairs.table, {}, Metric::wmd(), schedule));
  const bool dominates_wmd = dominates(wfr, wmd);
  const double wfr_f1 = f1_score(best_f1(wfr)), wmd_f1 = f1_score(best_f1(wmd));

  return {knn.error_rate == 0.0 && in_grid && deterministic && dominates_wmd,
          fmt("two-cluster KNN error %.3f with cv (k=%zu, eta=%.3g) %s, %s; PR: WFR %s WMD (best F1 %.3f vs %.3f)",
              knn.error_rate, cv1.best_k, cv1.best_eta, in_grid ? "in grid" : "OFF GRID",
              deterministic ? "deterministic" : "NOT deterministic", dominates_wmd ? "dominates" : "does NOT dominate",
              wfr_f1, wmd_f1)};
}

// 9 -------------------------------------------------------------------------
double median_solve_seconds(Eigen::Index length, std::mt19937_64& rng) {
  const SolverSchedule schedule = SolverSchedule::standard();
  std::vector<double> times;
  for (int rep = 0; rep < 7; ++rep) {
    const DiscreteMeasure mu = testing::random_measure(rng, length, 10, 0.56);
    const DiscreteMeasure nu = testing::random_measure(rng, length, 10, 0.56);
    const auto t0 = Clock::now();
    const SolveResult r = solve_wfr(mu, nu, 1.0, schedule);
    times.push_back(seconds_since(t0));
    if (!std::isfinite(r.primal)) return INFINITY;
  }
  std::nth_element(times.begin(), times.begin() + 3, times.end());
  return times[3];
}

Outcome complexity() {
  std::mt19937_64 rng(9);
  double worst = 0.0;
  std::string ratios;
  for (Eigen::Index L : {50, 100, 200}) {
    const double single = median_solve_seconds(L, rng);
    const double doubled = median_solve_seconds(2 * L, rng);
    const double ratio = doubled / single;
    worst = std::max(worst, ratio);
    ratios += fmt("%sL=%ld->%ld: %.2fx", ratios.empty() ? "" : ", ", static_cast<long>(L), static_cast<long>(2 * L),
                  ratio);
  }
  if (!cached_prune) cached_prune = prune_experiment(20);
  const PruneRun& p = *cached_prune;
  const bool faster = p.pruned_seconds < p.exhaustive_seconds;
  return {worst <= kDoublingRatio && faster,
          fmt("%s (limit %.0fx); pruned KNN %.2fs vs exhaustive %.2fs", ratios.c_str(), kDoublingRatio,
              p.pruned_seconds, p.exhaustive_seconds)};
}

struct Criterion {
  int number;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "Dirac consistency", kDiracSeconds, dirac_consistency},
      {2, "single-source closed form", kSingleSourceSeconds, single_source},
      {3, "splitting equivalence", kSplittingSeconds, splitting_equivalence},
      {4, "duality-gap accuracy", kGapSeconds, duality_gap},
      {5, "pruning exactness", kPruneSeconds, pruning_exactness},
      {6, "length-varying ordering flip", kDemoSeconds, ordering_flip},
      {7, "metric sanity", kSanitySeconds, metric_sanity},
      {8, "task substitutes (KNN, PR dominance)", kTasksSeconds, task_substitutes},
      {9, "complexity smoke check", 0.0, complexity},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  bool all = true;
  for (const auto& c : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.number) == selected.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed = seconds_since(t0);
    const bool in_time = c.limit_seconds <= 0.0 || elapsed < c.limit_seconds;
    const bool pass = o.pass && in_time;
    all = all && pass;
    std::string timing = fmt("%.2fs", elapsed);
    if (c.limit_seconds > 0.0) timing += fmt(" (limit %.0fs%s)", c.limit_seconds, in_time ? "" : ", EXCEEDED");
    std::printf("criterion %d %s: %s | %s | %s\n", c.number, c.name, pass ? "PASS" : "FAIL", o.detail.c_str(),
                timing.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
