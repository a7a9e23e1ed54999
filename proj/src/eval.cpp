#include "wfrdoc/eval.hpp"

#include "wfrdoc/errors.hpp"
#include "wfrdoc/oracles.hpp"
#include "wfrdoc/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace wfrdoc {

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string letter_name(std::size_t n) {
  std::string s;
  do {
    s.insert(s.begin(), static_cast<char>('a' + n % 26));
    n /= 26;
  } while (n-- > 0);
  return s;
}

// ---------------------------------------------------------------------------
// Pairs

std::vector<DocPair> load_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open pairs file " + path.string(), 0);
  std::vector<DocPair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
    }
    if (!obj.is_object()) throw ParseError("expected a JSON object", lineno);
    DocPair p;
    auto text = [&](const char* key) {
      auto it = obj.find(key);
      if (it == obj.end() || !it->is_string())
        throw ParseError(std::string("missing string field '") + key + "'", lineno);
      return it->get<std::string>();
    };
    p.concept_text = text("concept_text");
    p.project_text = text("project_text");
    auto label = obj.find("label");
    if (label == obj.end()) throw ParseError("missing field 'label'", lineno);
    if (label->is_boolean()) {
      p.label = label->get<bool>();
    } else if (label->is_number_integer() && (*label == 0 || *label == 1)) {
      p.label = *label == 1;
    } else {
      throw ParseError("field 'label' must be true/false or 0/1", lineno);
    }
    auto id = obj.find("id");
    if (id == obj.end() || id->is_null())
      p.id = "#" + std::to_string(pairs.size());
    else if (id->is_string())
      p.id = id->get<std::string>();
    else if (id->is_number())
      p.id = id->dump();
    else
      throw ParseError("field 'id' must be a string or number", lineno);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<ScoredPair> score_pairs(const std::vector<DocPair>& pairs, const EmbeddingTable& table,
                                    const PreprocessOptions& options, const Metric& metric,
                                    const SolverSchedule& schedule, std::size_t threads) {
  std::vector<ScoredPair> out(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t n) {
    const DocPair& p = pairs[n];
    auto side = [&](const std::string& text, const char* which) {
      ProcessedDocument doc{p.id + "/" + which, std::nullopt, preprocess(text, options)};
      return to_nbow(doc, table).measure;
    };
    const DiscreteMeasure concept_doc = side(p.concept_text, "concept");
    const DiscreteMeasure project_doc = side(p.project_text, "project");
    const double score = document_score(concept_doc, project_doc, metric, schedule);
    if (!std::isfinite(score)) throw NumericalError("non-finite score for pair '" + p.id + "'", 0);
    out[n] = {p.id, score, p.label};
  });
  return out;
}

// ---------------------------------------------------------------------------
// Precision-recall

std::vector<PRPoint> pr_curve(const std::vector<ScoredPair>& scored) {
  std::vector<ScoredPair> sorted = scored;
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredPair& a, const ScoredPair& b) { return a.score < b.score; });
  const auto positives = static_cast<std::size_t>(
      std::count_if(sorted.begin(), sorted.end(), [](const ScoredPair& s) { return s.label; }));
  if (positives == 0) throw InvalidArgument("precision-recall needs at least one positive label");

  std::vector<double> distinct;
  for (const auto& s : sorted)
    if (distinct.empty() || s.score != distinct.back()) distinct.push_back(s.score);
  auto pad = [](double x) { return 1e-9 * std::max(1.0, std::abs(x)); };
  std::vector<double> thresholds;
  thresholds.push_back(distinct.front() - pad(distinct.front()));
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i)
    thresholds.push_back(0.5 * (distinct[i] + distinct[i + 1]));
  thresholds.push_back(distinct.back() + pad(distinct.back()));

  std::vector<PRPoint> curve;
  std::size_t pos = 0, tp = 0, fp = 0;
  for (double t : thresholds) {
    while (pos < sorted.size() && sorted[pos].score < t) {
      (sorted[pos].label ? tp : fp) += 1;
      ++pos;
    }
    if (tp + fp == 0) continue;
    curve.push_back({t, static_cast<double>(tp) / static_cast<double>(tp + fp),
                     static_cast<double>(tp) / static_cast<double>(positives)});
  }
  return curve;
}

double f1_score(const PRPoint& p) {
  const double s = p.precision + p.recall;
  return s > 0.0 ? 2.0 * p.precision * p.recall / s : 0.0;
}

PRPoint best_f1(const std::vector<PRPoint>& curve) {
  if (curve.empty()) throw InvalidArgument("empty precision-recall curve");
  const PRPoint* best = &curve.front();
  for (const auto& p : curve)
    if (f1_score(p) > f1_score(*best)) best = &p;
  return *best;
}

double interpolated_precision(const std::vector<PRPoint>& curve, double recall) {
  double best = 0.0;
  for (const auto& p : curve)
    if (p.recall >= recall - 1e-12) best = std::max(best, p.precision);
  return best;
}

bool dominates(const std::vector<PRPoint>& a, const std::vector<PRPoint>& b, double tol) {
  std::vector<double> levels;
  for (const auto& p : a) levels.push_back(p.recall);
  for (const auto& p : b) levels.push_back(p.recall);
  for (double r : levels)
    if (interpolated_precision(a, r) < interpolated_precision(b, r) - tol) return false;
  return true;
}

std::string pr_curve_csv(const std::vector<PRPoint>& curve) {
  std::string out = "threshold,precision,recall\n";
  for (const auto& p : curve)
    out += format_double(p.threshold) + "," + format_double(p.precision) + "," + format_double(p.recall) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// KNN

KnnReport knn_error_rate(const Corpus& train, const Corpus& test, const EmbeddingTable& table,
                         std::size_t k, double eta, const SolverSchedule& schedule, std::size_t threads) {
  const IndexBuild built = build_index(train, table);
  const DocumentIndex& index = built.index;
  if (index.size() == 0) throw InvalidArgument("training corpus has no usable document");
  for (std::size_t n = 0; n < index.size(); ++n)
    if (index.labels[n].empty()) throw InvalidArgument("training document '" + index.ids[n] + "' has no label");
  for (const auto& doc : test.documents)
    if (!doc.label) throw InvalidArgument("test document '" + doc.id + "' has no label");

  const std::size_t n_test = test.size();
  std::vector<int> outcome(n_test, 0);  // 1 correct, 0 wrong, -1 degenerate
  std::vector<PruneStats> stats(n_test);
  parallel_for(n_test, threads, [&](std::size_t t) {
    const ProcessedDocument& doc = test.documents[t];
    std::optional<DiscreteMeasure> query;
    try {
      query = to_nbow(doc, table).measure;
    } catch (const DegenerateDocumentError&) {
      outcome[t] = -1;
      return;
    }
    const QueryResult r = topk_query(*query, index, k, eta, schedule);
    stats[t] = r.prune_stats;
    outcome[t] = majority_label(r.hits, index) == *doc.label ? 1 : 0;
  });

  KnnReport report;
  report.total = n_test;
  report.mean_survivors.assign(schedule.size(), 0.0);
  std::size_t solved = 0;
  for (std::size_t t = 0; t < n_test; ++t) {
    if (outcome[t] != 1) ++report.misclassified;
    if (outcome[t] == -1) {
      report.degenerate.push_back(test.documents[t].id);
      continue;
    }
    ++solved;
    for (std::size_t m = 0; m < schedule.size(); ++m) report.mean_survivors[m] += stats[t].survivors_after_stage[m];
    report.mean_full_solves += static_cast<double>(stats[t].full_solves);
  }
  if (solved > 0) {
    for (double& s : report.mean_survivors) s /= static_cast<double>(solved);
    report.mean_full_solves /= static_cast<double>(solved);
  }
  report.error_rate = n_test ? static_cast<double>(report.misclassified) / static_cast<double>(n_test) : 0.0;
  return report;
}

std::string prune_report_table(const SolverSchedule& schedule, const std::vector<double>& survivors,
                               double full_solves, std::size_t index_size) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-6s %-12s %-10s\n", "stage", "epsilon", "survivors");
  out += buf;
  for (std::size_t m = 0; m < survivors.size() && m < schedule.size(); ++m) {
    std::snprintf(buf, sizeof buf, "%-6zu %-12.6g %-10.4f\n", m + 1, schedule[m].epsilon, survivors[m]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "full solves: %.2f of %zu\n", full_solves, index_size);
  out += buf;
  return out;
}

// ---------------------------------------------------------------------------
// Length-varying demo

std::array<std::string, 3> default_demo_sentences() {
  return {"happy", "awful", "sad lost key evening restaurant"};
}

EmbeddingTable synthetic_demo_table(double eta) {
  if (!(eta > 0.0)) throw InvalidArgument("eta must be positive");
  const std::vector<std::pair<std::string, double>> words = {
      {"happy", 2.4}, {"sad", 1.0}, {"lost", 2.8}, {"key", 2.9}, {"evening", 3.0}, {"restaurant", 3.1}};
  const auto dim = static_cast<Eigen::Index>(words.size());
  EmbeddingTable table(words.size());
  table.add("awful", Eigen::VectorXd::Zero(dim));
  for (Eigen::Index k = 0; k < dim; ++k) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
    v[k] = words[static_cast<std::size_t>(k)].second * eta;
    table.add(words[static_cast<std::size_t>(k)].first, v);
  }
  return table;
}

namespace {

DemoSide demo_side(const NbowDocument& source, const NbowDocument& target, double eta,
                   const SolverSchedule& schedule) {
  const DiscreteMeasure& b = source.measure;
  const DiscreteMeasure& x = target.measure;
  const CostMatrix euclid = euclidean_cost(b, x);
  const CostMatrix cone = wfr_cost(b, x, eta);
  const BalancedSolveResult balanced = balanced_sinkhorn(b, x, euclid, schedule);
  const SolveResult unbalanced = solve_wfr(b, x, cone, schedule);

  // Per-target cost: plan-weighted over source words, source-weighted when no
  // mass arrives. With a one-word source this is just the pair cost.
  auto column_cost = [&](const Eigen::MatrixXd& plan, const Eigen::MatrixXd& cost, Eigen::Index j) {
    double mass = 0.0, acc = 0.0;
    for (Eigen::Index i = 0; i < plan.rows(); ++i)
      if (plan(i, j) > 0.0) {
        mass += plan(i, j);
        acc += plan(i, j) * cost(i, j);
      }
    if (mass > 0.0 && std::isfinite(acc)) return acc / mass;
    double fallback = 0.0;
    for (Eigen::Index i = 0; i < cost.rows(); ++i) fallback += b.weights()[i] * cost(i, j);
    return fallback / b.total_mass();
  };

  DemoSide side;
  const double moved = unbalanced.plan.sum();
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(x.size()); ++j) {
    DemoWord w;
    w.word = target.tokens[static_cast<std::size_t>(j)];
    w.wmd_mass = balanced.plan.col(j).sum();
    w.wmd_cost = column_cost(balanced.plan, euclid.entries, j);
    w.wfr_mass = moved > 0.0 ? unbalanced.plan.col(j).sum() / moved : 0.0;
    w.wfr_cost = column_cost(unbalanced.plan, cone.entries, j);
    side.wmd_total += w.wmd_cost * w.wmd_mass;
    if (w.wfr_mass > 0.0) side.wfr_share_total += w.wfr_cost * w.wfr_mass;
    side.words.push_back(std::move(w));
  }
  side.wmd = balanced.primal;
  side.wfr = unbalanced.distance;
  return side;
}

}  // namespace

bool DemoReport::wfr_masses_decrease() const {
  std::vector<DemoWord> words = b_to_c.words;
  std::sort(words.begin(), words.end(), [](const DemoWord& a, const DemoWord& b) { return a.wfr_cost < b.wfr_cost; });
  for (std::size_t j = 1; j < words.size(); ++j)
    if (words[j].wfr_cost > words[j - 1].wfr_cost && !(words[j].wfr_mass < words[j - 1].wfr_mass)) return false;
  return true;
}

std::string DemoReport::text() const {
  std::ostringstream out;
  char buf[160];
  out << "A: " << sentences[0] << "\nB: " << sentences[1] << "\nC: " << sentences[2] << "\n";
  std::snprintf(buf, sizeof buf, "eta = %g\n\n", eta);
  out << buf;
  std::snprintf(buf, sizeof buf, "%-14s | %-28s | %-28s\n", "", "WMD (from B)", "WFR (from B)");
  out << buf;
  std::snprintf(buf, sizeof buf, "%-14s | %9s %8s %9s | %9s %8s %9s\n", "word", "cost", "mass", "amount", "cost",
                "mass", "amount");
  out << buf;
  auto rows = [&](const char* tag, const DemoSide& side) {
    for (const auto& w : side.words) {
      std::snprintf(buf, sizeof buf, "%s %-12s | %9.2f %8.2f %9.2f | %9.2f %8.2f %9.2f\n", tag, w.word.c_str(),
                    w.wmd_cost, w.wmd_mass, w.wmd_cost * w.wmd_mass, w.wfr_cost, w.wfr_mass,
                    w.wfr_mass > 0.0 ? w.wfr_cost * w.wfr_mass : 0.0);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%-14s | %28.2f | %28.2f\n", "  total", side.wmd_total, side.wfr_share_total);
    out << buf;
  };
  rows("A", b_to_a);
  rows("C", b_to_c);
  out << "\n";
  std::snprintf(buf, sizeof buf, "WMD(A,B) = %.4f, WMD(B,C) = %.4f\n", b_to_a.wmd, b_to_c.wmd);
  out << buf;
  std::snprintf(buf, sizeof buf, "WFR(A,B) = %.4f, WFR(B,C) = %.4f\n", b_to_a.wfr, b_to_c.wfr);
  out << buf;
  if (!oov.empty()) {
    out << "out of vocabulary:";
    for (const auto& w : oov) out << " " << w;
    out << "\n";
  }
  out << "WFR(B,C) < WFR(A,B): " << (wfr_prefers_c() ? "true" : "false")
      << "; WMD(A,B) < WMD(B,C): " << (wmd_prefers_a() ? "true" : "false") << "\n";
  return out.str();
}

DemoReport length_varying_demo(const EmbeddingTable& table, const std::array<std::string, 3>& sentences,
                               double eta, const SolverSchedule& schedule, const PreprocessOptions& options) {
  DemoReport report;
  report.sentences = sentences;
  report.eta = eta;
  const char* names[3] = {"A", "B", "C"};
  std::vector<NbowDocument> docs;
  for (std::size_t s = 0; s < 3; ++s) {
    ProcessedDocument doc{names[s], std::nullopt, preprocess(sentences[s], options)};
    for (const auto& [token, count] : doc.token_counts)
      if (!table.contains(token) &&
          std::find(report.oov.begin(), report.oov.end(), token) == report.oov.end())
        report.oov.push_back(token);
    docs.push_back(to_nbow(doc, table));
  }
  report.b_to_a = demo_side(docs[1], docs[0], eta, schedule);
  report.b_to_c = demo_side(docs[1], docs[2], eta, schedule);
  return report;
}

// ---------------------------------------------------------------------------
// Fixtures

PairFixture synthetic_pr_fixture(std::size_t positives, std::size_t negatives, std::uint64_t seed, double eta) {
  if (!(eta > 0.0)) throw InvalidArgument("eta must be positive");
  constexpr Eigen::Index dim = 5;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> near(0.95, 1.05), detail(2.7, 3.1), mid(2.36, 2.45);
  PairFixture f{EmbeddingTable(dim), {}};
  auto axis = [&](Eigen::Index k, double d) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
    v[k] = d * eta;
    return v;
  };
  const std::size_t total = positives + negatives;
  // Interleave so input order carries no label information.
  for (std::size_t n = 0; n < total; ++n) {
    const bool positive = (n * positives) / total != ((n + 1) * positives) / total;
    const std::string tag = letter_name(n);
    f.table.add("con" + tag, Eigen::VectorXd::Zero(dim));
    DocPair p;
    p.id = "pair" + std::to_string(n);
    p.concept_text = "con" + tag;
    p.label = positive;
    if (positive) {
      f.table.add("near" + tag, axis(0, near(rng)));
      p.project_text = "near" + tag;
      for (Eigen::Index k = 1; k < dim; ++k) {
        const std::string word = "det" + letter_name(static_cast<std::size_t>(k)) + tag;
        f.table.add(word, axis(k, detail(rng)));
        p.project_text += " " + word;
      }
    } else {
      f.table.add("mid" + tag, axis(0, mid(rng)));
      p.project_text = "mid" + tag;
    }
    f.pairs.push_back(std::move(p));
  }
  return f;
}

ClusterFixture two_cluster_corpus(std::size_t train_per_class, std::size_t test_per_class, std::uint64_t seed) {
  constexpr Eigen::Index dim = 3;
  constexpr std::size_t words_per_class = 12;
  constexpr double radius = 0.2;  // intra-cluster distance <= 0.4; centers 4 apart
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit;
  ClusterFixture f{EmbeddingTable(dim), {}, {}};
  const std::array<std::string, 2> labels = {"east", "west"};
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t w = 0; w < words_per_class; ++w) {
      Eigen::VectorXd v(dim);
      for (Eigen::Index d = 0; d < dim; ++d) v[d] = gauss(rng);
      v *= radius * std::cbrt(unit(rng)) / v.norm();
      v[0] += c == 0 ? 2.0 : -2.0;
      f.table.add(labels[c] + letter_name(w), v);
    }
  std::uniform_int_distribution<std::size_t> pick(0, words_per_class - 1), length(3, 6);
  std::uniform_int_distribution<int> count(1, 3);
  auto fill = [&](Corpus& corpus, std::size_t per_class, const std::string& prefix) {
    for (std::size_t n = 0; n < per_class; ++n)
      for (std::size_t c = 0; c < 2; ++c) {
        ProcessedDocument doc{prefix + std::to_string(corpus.size()), labels[c], {}};
        for (std::size_t t = length(rng); t > 0; --t) doc.token_counts[labels[c] + letter_name(pick(rng))] += count(rng);
        corpus.add(std::move(doc));
      }
  };
  fill(f.train, train_per_class, "train");
  fill(f.test, test_per_class, "test");
  return f;
}

}  // namespace wfrdoc
