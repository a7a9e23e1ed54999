#include "wfrdoc/retrieval.hpp"

#include "wfrdoc/errors.hpp"
#include "wfrdoc/oracles.hpp"
#include "wfrdoc/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>

namespace wfrdoc {

void DocumentIndex::add(std::string id, std::string label, DiscreteMeasure measure) {
  if (measures.empty() && embedding_dimension == 0) embedding_dimension = measure.dimension();
  if (measure.dimension() != embedding_dimension)
    throw InvalidArgument("document '" + id + "' has dimension " + std::to_string(measure.dimension()) +
                          ", index has " + std::to_string(embedding_dimension));
  ids.push_back(std::move(id));
  labels.push_back(std::move(label));
  measures.push_back(std::move(measure));
}

IndexBuild build_index(const Corpus& corpus, const EmbeddingTable& table) {
  IndexBuild out;
  out.index.embedding_dimension = table.dimension();
  for (const auto& doc : corpus.documents) {
    try {
      out.index.add(doc.id, doc.label.value_or(""), to_nbow(doc, table).measure);
    } catch (const DegenerateDocumentError&) {
      out.degenerate.push_back(doc.id);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Index cache

namespace {

constexpr char kMagic[8] = {'W', 'F', 'R', 'D', 'I', 'D', 'X', '\0'};
constexpr std::uint32_t kIndexVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t b = 0; b < sizeof(T); ++b)
    out.put(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * b)) & 0xff));
}

void put_f64(std::ostream& out, double x) { put_le(out, std::bit_cast<std::uint64_t>(x)); }

void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <typename T>
  T le() {
    unsigned char buf[sizeof(T)];
    read(buf, sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) v |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
    return static_cast<T>(v);
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string str() {
    const auto n = le<std::uint64_t>();
    if (n > (1u << 20)) throw ParseError("index cache: implausible string length", 0);
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw ParseError("index cache is truncated", 0);
  }

 private:
  std::istream& in_;
};

}  // namespace

void save_index(const DocumentIndex& index, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write index cache " + path.string());
  out.write(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kIndexVersion);
  put_le<std::uint64_t>(out, index.embedding_dimension);
  put_le<std::uint64_t>(out, index.size());
  for (std::size_t n = 0; n < index.size(); ++n) {
    put_string(out, index.ids[n]);
    put_string(out, index.labels[n]);
    const DiscreteMeasure& m = index.measures[n];
    put_le<std::uint64_t>(out, m.size());
    for (Eigen::Index i = 0; i < m.points().rows(); ++i)
      for (Eigen::Index d = 0; d < m.points().cols(); ++d) put_f64(out, m.points()(i, d));
    for (Eigen::Index i = 0; i < m.weights().size(); ++i) put_f64(out, m.weights()[i]);
  }
  if (!out) throw Error("failed writing index cache " + path.string());
}

DocumentIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open index cache " + path.string(), 0);
  Reader r(in);
  char magic[8];
  r.read(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw ParseError("not a document index cache", 0);
  const auto version = r.le<std::uint32_t>();
  if (version != kIndexVersion)
    throw ParseError("unsupported index cache version " + std::to_string(version), 0);
  DocumentIndex index;
  index.embedding_dimension = r.le<std::uint64_t>();
  const auto count = r.le<std::uint64_t>();
  const auto dim = static_cast<Eigen::Index>(index.embedding_dimension);
  for (std::uint64_t n = 0; n < count; ++n) {
    std::string id = r.str();
    std::string label = r.str();
    const auto points = static_cast<Eigen::Index>(r.le<std::uint64_t>());
    if (points <= 0 || points > (1 << 24)) throw ParseError("index cache: bad point count", 0);
    Eigen::MatrixXd x(points, dim);
    for (Eigen::Index i = 0; i < points; ++i)
      for (Eigen::Index d = 0; d < dim; ++d) x(i, d) = r.f64();
    Eigen::VectorXd w(points);
    for (Eigen::Index i = 0; i < points; ++i) w[i] = r.f64();
    try {
      index.add(std::move(id), std::move(label), DiscreteMeasure(std::move(x), std::move(w)));
    } catch (const InvalidArgument& e) {
      throw ParseError(std::string("index cache: ") + e.what(), 0);
    }
  }
  return index;
}

// ---------------------------------------------------------------------------
// Metrics

Metric Metric::parse(const std::string& name, double eta) {
  if (name == "wfr") return wfr(eta);
  if (name == "wmd") return wmd();
  if (name == "balanced_wfr_cost") return balanced_wfr_cost(eta);
  throw ConfigError("unknown metric '" + name + "' (expected wfr, wmd or balanced_wfr_cost)");
}

std::string Metric::name() const {
  switch (kind) {
    case Kind::wfr: return "wfr";
    case Kind::wmd: return "wmd";
    case Kind::balanced_wfr_cost: return "balanced_wfr_cost";
  }
  return "?";
}

double document_score(const DiscreteMeasure& a, const DiscreteMeasure& b, const Metric& metric,
                      const SolverSchedule& schedule) {
  switch (metric.kind) {
    case Metric::Kind::wfr:
      return solve_wfr(a, b, metric.eta, schedule).distance;
    case Metric::Kind::wmd:
      return balanced_sinkhorn(a, b, euclidean_cost(a, b), schedule).primal;
    case Metric::Kind::balanced_wfr_cost:
      return balanced_sinkhorn(a, b, wfr_cost(a, b, metric.eta), schedule).primal;
  }
  throw InvalidArgument("unknown metric");
}

// ---------------------------------------------------------------------------
// Top-k

namespace {

void check_query(const DiscreteMeasure& query, const DocumentIndex& index, std::size_t k) {
  if (k == 0) throw InvalidArgument("k must be at least 1");
  if (index.size() == 0) throw InvalidArgument("index is empty");
  if (query.dimension() != index.embedding_dimension)
    throw InvalidArgument("query dimension " + std::to_string(query.dimension()) +
                          " does not match index dimension " + std::to_string(index.embedding_dimension));
}

std::vector<Hit> smallest(std::vector<Hit> all, std::size_t k) {
  std::sort(all.begin(), all.end(), [](const Hit& x, const Hit& y) {
    if (x.distance != y.distance) return x.distance < y.distance;
    return x.id < y.id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

}  // namespace

QueryResult topk_query(const DiscreteMeasure& query, const DocumentIndex& index, std::size_t k,
                       double eta, const SolverSchedule& schedule, bool exhaustive, std::size_t threads) {
  check_query(query, index, k);
  const std::size_t n_docs = index.size();
  const std::size_t keep = std::min(k, n_docs);
  const std::size_t stages = schedule.size();

  std::vector<CostMatrix> costs(n_docs);
  std::vector<std::unique_ptr<StagedSolve>> solves(n_docs);
  parallel_for(n_docs, threads, [&](std::size_t n) {
    costs[n] = wfr_cost(query, index.measures[n], eta);
    solves[n] = std::make_unique<StagedSolve>(query, index.measures[n], costs[n], schedule);
  });

  auto finish = [&](std::size_t n) {
    while (!solves[n]->done()) solves[n]->advance();
  };
  auto final_hit = [&](std::size_t n) {
    return Hit{index.ids[n], distance_from_primal(solves[n]->trace().back().primal, eta), n};
  };

  QueryResult result;
  std::vector<std::size_t> alive(n_docs);
  std::iota(alive.begin(), alive.end(), 0);

  if (exhaustive || keep == n_docs) {
    parallel_for(n_docs, threads, [&](std::size_t n) { finish(n); });
    result.prune_stats.survivors_after_stage.assign(stages, 1.0);
    result.prune_stats.full_solves = n_docs;
  } else {
    std::vector<char> finished(n_docs, 0);
    for (std::size_t m = 0; m < stages; ++m) {
      parallel_for(alive.size(), threads, [&](std::size_t a) {
        StagedSolve& s = *solves[alive[a]];
        if (s.stages_run() == m) s.advance();
      });

      std::vector<std::size_t> ranked = alive;
      std::sort(ranked.begin(), ranked.end(), [&](std::size_t x, std::size_t y) {
        const double px = solves[x]->trace()[m].primal, py = solves[y]->trace()[m].primal;
        if (px != py) return px < py;
        return index.ids[x] < index.ids[y];
      });
      ranked.resize(keep);
      parallel_for(ranked.size(), threads, [&](std::size_t a) { finish(ranked[a]); });
      double threshold = 0.0;
      for (std::size_t n : ranked) {
        finished[n] = 1;
        threshold = std::max(threshold, solves[n]->trace().back().primal);
      }

      const double cutoff = threshold * (1.0 + kPruneSlack);
      std::erase_if(alive, [&](std::size_t n) {
        const StageTrace& t = solves[n]->trace()[m];
        return t.dual_feasible && t.dual > cutoff;
      });
      result.prune_stats.survivors_after_stage.push_back(static_cast<double>(alive.size()) /
                                                         static_cast<double>(n_docs));
    }
    // Survivors of the last stage have all run the full schedule.
    for (std::size_t n : alive) finished[n] = 1;
    result.prune_stats.full_solves =
        static_cast<std::size_t>(std::count(finished.begin(), finished.end(), 1));
  }

  std::vector<Hit> candidates;
  candidates.reserve(alive.size());
  for (std::size_t n : alive) candidates.push_back(final_hit(n));
  result.hits = smallest(std::move(candidates), keep);
  return result;
}

QueryResult topk_by_metric(const DiscreteMeasure& query, const DocumentIndex& index, std::size_t k,
                           const Metric& metric, const SolverSchedule& schedule, std::size_t threads) {
  if (metric.kind == Metric::Kind::wfr) return topk_query(query, index, k, metric.eta, schedule, true, threads);
  check_query(query, index, k);
  std::vector<Hit> all(index.size());
  parallel_for(index.size(), threads, [&](std::size_t n) {
    all[n] = {index.ids[n], document_score(query, index.measures[n], metric, schedule), n};
  });
  QueryResult result;
  result.hits = smallest(std::move(all), std::min(k, index.size()));
  result.prune_stats.survivors_after_stage.assign(schedule.size(), 1.0);
  result.prune_stats.full_solves = index.size();
  return result;
}

// ---------------------------------------------------------------------------
// KNN

std::string majority_label(const std::vector<Hit>& hits, const DocumentIndex& index) {
  if (hits.empty()) throw InvalidArgument("no neighbors to vote");
  struct Tally {
    std::size_t votes = 0;
    double distance = 0.0;
  };
  std::map<std::string, Tally> tally;
  for (const Hit& h : hits) {
    const std::string& label = index.labels.at(h.position);
    if (label.empty()) throw InvalidArgument("neighbor '" + h.id + "' has no label");
    auto& t = tally[label];
    ++t.votes;
    t.distance += h.distance;
  }
  // std::map iterates labels in lexicographic order, so strict comparisons keep
  // the smaller label on a full tie.
  auto best = tally.begin();
  for (auto it = std::next(tally.begin()); it != tally.end(); ++it) {
    const Tally& a = it->second;
    const Tally& b = best->second;
    if (a.votes > b.votes || (a.votes == b.votes && a.distance < b.distance)) best = it;
  }
  return best->first;
}

std::string knn_classify(const DiscreteMeasure& query, const DocumentIndex& index, std::size_t k,
                         double eta, const SolverSchedule& schedule, std::size_t threads) {
  const QueryResult r = topk_query(query, index, k, eta, schedule, false, threads);
  return majority_label(r.hits, index);
}

// ---------------------------------------------------------------------------
// Cross-validation

namespace {

std::vector<std::size_t> assign_folds(const std::vector<std::string>& labels, std::size_t folds,
                                      std::uint64_t seed, bool stratified) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> fold(labels.size());
  std::size_t counter = 0;
  auto deal = [&](std::vector<std::size_t> members) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t n : members) fold[n] = counter++ % folds;
  };
  if (stratified) {
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t n = 0; n < labels.size(); ++n) by_label[labels[n]].push_back(n);
    for (auto& [label, members] : by_label) deal(std::move(members));
  } else {
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), 0);
    deal(std::move(all));
  }
  return fold;
}

}  // namespace

CrossValidationResult cross_validate(const Corpus& corpus, const EmbeddingTable& table,
                                     const SolverSchedule& schedule,
                                     const CrossValidationOptions& options) {
  if (options.folds < 2) throw InvalidArgument("cross-validation needs at least 2 folds");
  if (options.k_grid.empty() || options.eta_grid.empty()) throw InvalidArgument("empty search grid");
  for (std::size_t k : options.k_grid)
    if (k == 0) throw InvalidArgument("k grid contains 0");
  for (double eta : options.eta_grid)
    if (!(eta > 0.0)) throw InvalidArgument("eta grid contains a non-positive value");

  CrossValidationResult out;
  IndexBuild built = build_index(corpus, table);
  for (const auto& id : built.degenerate)
    out.warnings.push_back("document '" + id + "' has no in-vocabulary tokens; skipped");
  const DocumentIndex& all = built.index;
  for (std::size_t n = 0; n < all.size(); ++n)
    if (all.labels[n].empty()) throw InvalidArgument("document '" + all.ids[n] + "' has no label");
  if (all.size() < options.folds)
    throw InvalidArgument("corpus has fewer usable documents than folds");

  std::map<std::string, std::size_t> class_sizes;
  for (const auto& l : all.labels) ++class_sizes[l];
  bool stratified = true;
  for (const auto& [label, count] : class_sizes)
    if (count < options.folds) {
      out.warnings.push_back("class '" + label + "' has " + std::to_string(count) +
                             " documents, fewer than " + std::to_string(options.folds) +
                             " folds; using an unstratified split");
      stratified = false;
      break;
    }
  const std::vector<std::size_t> fold = assign_folds(all.labels, options.folds, options.seed, stratified);
  const std::size_t k_max = *std::max_element(options.k_grid.begin(), options.k_grid.end());

  const std::size_t n_eta = options.eta_grid.size(), n_k = options.k_grid.size();
  // errors[f][e][k]
  std::vector<std::vector<std::vector<double>>> errors(
      options.folds, std::vector<std::vector<double>>(n_eta, std::vector<double>(n_k, 0.0)));
  std::vector<char> fold_used(options.folds, 0);

  for (std::size_t f = 0; f < options.folds; ++f) {
    DocumentIndex train;
    std::vector<std::size_t> validation;
    for (std::size_t n = 0; n < all.size(); ++n) {
      if (fold[n] == f)
        validation.push_back(n);
      else
        train.add(all.ids[n], all.labels[n], all.measures[n]);
    }
    if (validation.empty() || train.size() == 0) continue;
    fold_used[f] = 1;
    const std::size_t query_k = std::min(k_max, train.size());
    for (std::size_t e = 0; e < n_eta; ++e) {
      std::vector<std::vector<Hit>> neighbors(validation.size());
      parallel_for(validation.size(), options.threads, [&](std::size_t v) {
        neighbors[v] =
            topk_query(all.measures[validation[v]], train, query_k, options.eta_grid[e], schedule).hits;
      });
      for (std::size_t ki = 0; ki < n_k; ++ki) {
        std::size_t wrong = 0;
        for (std::size_t v = 0; v < validation.size(); ++v) {
          const auto& hits = neighbors[v];
          const std::vector<Hit> prefix(hits.begin(),
                                        hits.begin() + static_cast<std::ptrdiff_t>(
                                                           std::min(options.k_grid[ki], hits.size())));
          if (majority_label(prefix, train) != all.labels[validation[v]]) ++wrong;
        }
        errors[f][e][ki] = static_cast<double>(wrong) / static_cast<double>(validation.size());
      }
    }
  }

  const auto used = static_cast<double>(std::count(fold_used.begin(), fold_used.end(), 1));
  out.mean_errors.assign(n_eta, std::vector<double>(n_k, 0.0));
  for (std::size_t e = 0; e < n_eta; ++e)
    for (std::size_t ki = 0; ki < n_k; ++ki) {
      double sum = 0.0;
      for (std::size_t f = 0; f < options.folds; ++f)
        if (fold_used[f]) sum += errors[f][e][ki];
      out.mean_errors[e][ki] = sum / used;
    }

  std::optional<std::pair<std::size_t, std::size_t>> best;
  for (std::size_t e = 0; e < n_eta; ++e)
    for (std::size_t ki = 0; ki < n_k; ++ki) {
      if (!best) {
        best = {e, ki};
        continue;
      }
      const auto [be, bk] = *best;
      const double err = out.mean_errors[e][ki], best_err = out.mean_errors[be][bk];
      const std::size_t k = options.k_grid[ki], bkv = options.k_grid[bk];
      const double eta = options.eta_grid[e], beta = options.eta_grid[be];
      if (err < best_err || (err == best_err && (k < bkv || (k == bkv && eta > beta)))) best = {e, ki};
    }
  out.best_eta = options.eta_grid[best->first];
  out.best_k = options.k_grid[best->second];
  for (std::size_t f = 0; f < options.folds; ++f)
    if (fold_used[f]) out.fold_errors.push_back(errors[f][best->first][best->second]);
  return out;
}

}  // namespace wfrdoc
