#pragma once

#include "wfrdoc/corpus.hpp"
#include "wfrdoc/retrieval.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace wfrdoc {

/// One concept-project pair.
struct DocPair {
  std::string id;
  std::string concept_text;
  std::string project_text;
  bool label = false;
};

/// JSONL with fields concept_text, project_text, label (bool or 0/1) and an
/// optional id (default "#<position>"). Throws ParseError naming the line.
std::vector<DocPair> load_pairs(const std::filesystem::path& path);

struct ScoredPair {
  std::string pair_id;
  double score;
  bool label;
};

/// Scores in input order. A degenerate side throws DegenerateDocumentError whose
/// id is "<pair_id>/concept" or "<pair_id>/project".
std::vector<ScoredPair> score_pairs(const std::vector<DocPair>& pairs, const EmbeddingTable& table,
                                    const PreprocessOptions& options, const Metric& metric,
                                    const SolverSchedule& schedule, std::size_t threads = 1);

struct PRPoint {
  double threshold;
  double precision;
  double recall;
};

/// Predict positive when score < threshold. Thresholds are a sentinel below the
/// smallest score, midpoints between consecutive distinct scores, and a sentinel
/// above the largest. Points with no positive prediction are omitted.
/// Throws InvalidArgument when there is no positive label.
std::vector<PRPoint> pr_curve(const std::vector<ScoredPair>& scored);

/// Point with the largest F1 (first one on ties). Throws on an empty curve.
PRPoint best_f1(const std::vector<PRPoint>& curve);
double f1_score(const PRPoint& p);

/// Best precision among points with recall >= r (0 if none).
double interpolated_precision(const std::vector<PRPoint>& curve, double recall);

/// True when `a`'s interpolated precision is at least `b`'s at every recall level
/// reached by either curve.
bool dominates(const std::vector<PRPoint>& a, const std::vector<PRPoint>& b, double tol = 1e-12);

struct KnnReport {
  std::size_t total = 0;
  std::size_t misclassified = 0;
  double error_rate = 0.0;
  /// Test documents with nothing in vocabulary; counted as errors.
  std::vector<std::string> degenerate;
  /// Mean over test queries of the per-stage survivor fraction.
  std::vector<double> mean_survivors;
  double mean_full_solves = 0.0;
};

KnnReport knn_error_rate(const Corpus& train, const Corpus& test, const EmbeddingTable& table,
                         std::size_t k, double eta, const SolverSchedule& schedule,
                         std::size_t threads = 1);

/// Fixed-column pruning table: stage, epsilon, survivor fraction.
std::string prune_report_table(const SolverSchedule& schedule, const std::vector<double>& survivors,
                               double full_solves, std::size_t index_size);

// ---------------------------------------------------------------------------
// Length-varying demo

struct DemoWord {
  std::string word;
  double wmd_cost;   // embedding distance
  double wmd_mass;   // balanced plan mass
  double wfr_cost;   // -2 log cos+(d / 2 eta)
  double wfr_mass;   // share of the transported mass
};

struct DemoSide {
  std::vector<DemoWord> words;
  double wmd_total = 0.0;        // sum cost * mass
  double wfr_share_total = 0.0;  // sum cost * share
  double wmd = 0.0;              // balanced transport cost
  double wfr = 0.0;              // WFR document distance
};

struct DemoReport {
  std::array<std::string, 3> sentences;
  std::vector<std::string> oov;
  DemoSide b_to_a;
  DemoSide b_to_c;
  double eta = 1.0;

  bool wfr_prefers_c() const { return b_to_c.wfr < b_to_a.wfr; }
  bool wmd_prefers_a() const { return b_to_a.wmd < b_to_c.wmd; }
  /// B->C WFR shares strictly decrease as the word cost increases.
  bool wfr_masses_decrease() const;
  std::string text() const;
};

/// Sentence A, B, C from the motivating example after stop-word removal.
std::array<std::string, 3> default_demo_sentences();

/// Throws DegenerateDocumentError (id "A", "B" or "C") when a sentence has no
/// in-vocabulary word; out-of-vocabulary words are listed in the report.
DemoReport length_varying_demo(const EmbeddingTable& table, const std::array<std::string, 3>& sentences,
                               double eta, const SolverSchedule& schedule,
                               const PreprocessOptions& options = {});

/// Each word on its own axis with "awful" at the origin; distances (in units of
/// eta) reproduce the example's cost ordering.
EmbeddingTable synthetic_demo_table(double eta = 1.0);

// ---------------------------------------------------------------------------
// Synthetic fixtures

struct PairFixture {
  EmbeddingTable table;
  std::vector<DocPair> pairs;
};

/// Positives: a one-word concept against a project with one close word and four
/// far details. Negatives: a one-word concept against a single mid-range word.
/// Balanced transport ranks the negatives first; WFR does not.
PairFixture synthetic_pr_fixture(std::size_t positives, std::size_t negatives, std::uint64_t seed,
                                 double eta = 1.0);

struct ClusterFixture {
  EmbeddingTable table;
  Corpus train;
  Corpus test;
};

/// Two labeled clusters ("east", "west") whose centers are 10x further apart
/// than any two words inside a cluster.
ClusterFixture two_cluster_corpus(std::size_t train_per_class, std::size_t test_per_class,
                                  std::uint64_t seed);

/// Lowercase letter name for n (0 -> "a", 26 -> "aa"); tokens survive preprocessing.
std::string letter_name(std::size_t n);

/// Exact decimal text ("%.17g").
std::string format_double(double x);

std::string pr_curve_csv(const std::vector<PRPoint>& curve);

}  // namespace wfrdoc
