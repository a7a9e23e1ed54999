#pragma once

#include "wfrdoc/corpus.hpp"
#include "wfrdoc/measures.hpp"
#include "wfrdoc/wfr_solver.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace wfrdoc {

/// Labeled collection of document measures sharing one embedding dimension.
struct DocumentIndex {
  std::vector<DiscreteMeasure> measures;
  std::vector<std::string> labels;  // "" when unlabeled
  std::vector<std::string> ids;
  std::size_t embedding_dimension = 0;

  std::size_t size() const noexcept { return measures.size(); }
  /// Throws InvalidArgument on a dimension mismatch.
  void add(std::string id, std::string label, DiscreteMeasure measure);
};

struct IndexBuild {
  DocumentIndex index;
  /// Ids of corpus documents left out because no token was in vocabulary.
  std::vector<std::string> degenerate;
};

IndexBuild build_index(const Corpus& corpus, const EmbeddingTable& table);

/// Binary cache: "WFRDIDX\0", u32 version, u64 dimension, u64 count, then per
/// document id, label, point count, coordinates and weights. Integers and
/// doubles are little-endian.
void save_index(const DocumentIndex& index, const std::filesystem::path& path);
/// Throws ParseError on a bad magic, unsupported version or truncated file.
DocumentIndex load_index(const std::filesystem::path& path);

/// Document distance used for ranking.
struct Metric {
  enum class Kind { wfr, wmd, balanced_wfr_cost };
  Kind kind = Kind::wfr;
  double eta = 1.0;

  static Metric wfr(double eta) { return {Kind::wfr, eta}; }
  static Metric wmd() { return {Kind::wmd, 1.0}; }
  static Metric balanced_wfr_cost(double eta) { return {Kind::balanced_wfr_cost, eta}; }
  /// "wfr", "wmd" or "balanced_wfr_cost"; throws ConfigError otherwise.
  static Metric parse(const std::string& name, double eta);
  std::string name() const;
};

/// WFR: normalized distance. WMD / balanced ablation: entropic balanced transport cost.
double document_score(const DiscreteMeasure& a, const DiscreteMeasure& b, const Metric& metric,
                      const SolverSchedule& schedule);

struct Hit {
  std::string id;
  double distance;
  std::size_t position;  // row in the index
};

struct PruneStats {
  /// Fraction of the index still alive after pruning at each stage.
  std::vector<double> survivors_after_stage;
  /// Candidates run through the whole schedule.
  std::size_t full_solves = 0;
};

struct QueryResult {
  std::vector<Hit> hits;
  PruneStats prune_stats;
};

/// Relative slack on the prune test: a candidate is dropped only when its dual
/// bound exceeds threshold * (1 + kPruneSlack).
inline constexpr double kPruneSlack = 1e-9;

/// k smallest WFR distances from `query` to the index, ascending, ties by id.
///
/// With `exhaustive`, every document is solved to the end of the schedule.
/// Otherwise candidates advance one stage at a time; after each stage the k
/// best by current primal are finished, the largest of their final primals is
/// the threshold, and any candidate whose stage dual is a certified lower bound
/// (dual-feasible potentials) above the threshold is dropped. Both modes return
/// identical hits.
QueryResult topk_query(const DiscreteMeasure& query, const DocumentIndex& index, std::size_t k,
                       double eta, const SolverSchedule& schedule, bool exhaustive = false,
                       std::size_t threads = 1);

/// Exhaustive top-k under any metric (no pruning; the dual bound is WFR-specific).
QueryResult topk_by_metric(const DiscreteMeasure& query, const DocumentIndex& index, std::size_t k,
                           const Metric& metric, const SolverSchedule& schedule,
                           std::size_t threads = 1);

/// Majority label over `hits` (in order); ties go to the smaller summed distance,
/// then to the lexicographically smaller label.
std::string majority_label(const std::vector<Hit>& hits, const DocumentIndex& index);

std::string knn_classify(const DiscreteMeasure& query, const DocumentIndex& index, std::size_t k,
                         double eta, const SolverSchedule& schedule, std::size_t threads = 1);

struct CrossValidationResult {
  std::size_t best_k = 0;
  double best_eta = 0.0;
  /// Validation error of (best_k, best_eta) in each fold.
  std::vector<double> fold_errors;
  /// mean_errors[e][k] = mean validation error for eta_grid[e], k_grid[k].
  std::vector<std::vector<double>> mean_errors;
  std::vector<std::string> warnings;
};

struct CrossValidationOptions {
  std::vector<std::size_t> k_grid = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
  std::vector<double> eta_grid = {1.0, 1.0 / 2.0, 1.0 / 3.0, 1.0 / 4.0};
  std::size_t folds = 5;
  std::uint64_t seed = 42;
  std::size_t threads = 1;
};

/// Stratified, seeded k-fold selection of (k, eta) minimizing mean validation
/// error; ties prefer smaller k, then larger eta. Classes smaller than the fold
/// count trigger a warning and an unstratified split.
CrossValidationResult cross_validate(const Corpus& corpus, const EmbeddingTable& table,
                                     const SolverSchedule& schedule,
                                     const CrossValidationOptions& options = {});

}  // namespace wfrdoc
