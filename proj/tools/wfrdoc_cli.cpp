// wfrdoc: WFR document distance, top-k retrieval, KNN and PR-curve experiments.
#include "wfrdoc/corpus.hpp"
#include "wfrdoc/errors.hpp"
#include "wfrdoc/eval.hpp"
#include "wfrdoc/parallel.hpp"
#include "wfrdoc/retrieval.hpp"
#include "wfrdoc/wfr_solver.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wfrdoc;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;

// Input or usage problem; maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string embeddings;
  double eta = 1.0;
  std::string schedule_text = "standard";
  std::size_t threads = 0;
  std::string stopwords;
  bool no_lowercase = false;
  std::uint64_t seed = 42;
  std::string format = "json";

  SolverSchedule schedule() const {
    if (schedule_text == "standard") return SolverSchedule::standard();
    if (schedule_text == "converged") return SolverSchedule::converged(11, 1.0);
    return SolverSchedule::parse(schedule_text);
  }
  PreprocessOptions preprocess() const {
    PreprocessOptions o;
    o.lowercase = !no_lowercase;
    if (!stopwords.empty()) o.stopwords = load_stopwords(stopwords);
    return o;
  }
  std::size_t worker_threads() const { return threads ? threads : default_threads(); }
  bool csv() const { return format == "csv"; }
  EmbeddingTable table() const {
    if (embeddings.empty()) throw UsageError("--embeddings is required for this command");
    return load_embeddings(embeddings);
  }
};

struct TextInput {
  std::string text;
  std::string name;
};

// An argument naming an existing file is read; anything else is the text itself.
TextInput text_or_file(const std::string& arg) {
  std::error_code ec;
  if (fs::is_regular_file(arg, ec)) {
    auto text = read_file(arg);
    if (!text) throw UsageError("cannot read " + arg);
    return {*text, "file '" + arg + "'"};
  }
  return {arg, "text '" + arg + "'"};
}

DiscreteMeasure document(const TextInput& in, const EmbeddingTable& table, const PreprocessOptions& options) {
  try {
    return to_nbow({in.name, std::nullopt, preprocess(in.text, options)}, table).measure;
  } catch (const DegenerateDocumentError&) {
    throw UsageError(in.name + " has no in-vocabulary tokens after preprocessing");
  }
}

CorpusFormat corpus_format(const std::string& path, const std::string& flag) {
  if (flag == "jsonl") return CorpusFormat::jsonl;
  if (flag == "tsv") return CorpusFormat::tsv;
  return fs::path(path).extension() == ".tsv" ? CorpusFormat::tsv : CorpusFormat::jsonl;
}

json trace_json(const std::vector<StageTrace>& trace) {
  json out = json::array();
  for (const auto& t : trace)
    out.push_back({{"epsilon", t.epsilon},
                   {"iterations", t.iterations},
                   {"primal", t.primal},
                   {"dual", t.dual},
                   {"dual_feasible", t.dual_feasible}});
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

// ---------------------------------------------------------------------------

int cmd_dist(const RunConfig& cfg, const std::string& a, const std::string& b) {
  const EmbeddingTable table = cfg.table();
  const PreprocessOptions options = cfg.preprocess();
  const DiscreteMeasure mu = document(text_or_file(a), table, options);
  const DiscreteMeasure nu = document(text_or_file(b), table, options);
  const SolveResult r = solve_wfr(mu, nu, cfg.eta, cfg.schedule());
  if (cfg.csv()) {
    std::cout << "distance,primal,dual,gap\n"
              << format_double(r.distance) << "," << format_double(r.primal) << "," << format_double(r.dual)
              << "," << format_double(r.gap) << "\n";
  } else {
    json out = {{"distance", r.distance},
                {"primal", r.primal},
                {"dual", r.dual},
                {"gap", r.gap},
                {"stage_trace", trace_json(r.stage_trace)}};
    std::cout << out.dump(2) << "\n";
  }
  return 0;
}

int cmd_topk(const RunConfig& cfg, const std::string& corpus_path, const std::string& format_flag,
             const std::string& query_arg, long long k, bool exhaustive, const std::string& metric_name) {
  if (k < 1) throw UsageError("k must be at least 1");
  const Metric metric = Metric::parse(metric_name, cfg.eta);
  const EmbeddingTable table = cfg.table();
  const PreprocessOptions options = cfg.preprocess();
  const Corpus corpus = load_corpus(corpus_path, corpus_format(corpus_path, format_flag), options);
  const IndexBuild built = build_index(corpus, table);
  for (const auto& id : built.degenerate)
    std::cerr << "warning: document '" << id << "' has no in-vocabulary tokens; skipped\n";
  if (built.index.size() == 0) throw UsageError("corpus has no usable document");
  if (static_cast<std::size_t>(k) > built.index.size())
    std::cerr << "warning: k = " << k << " exceeds the " << built.index.size()
              << " indexed documents; returning all of them\n";
  const DiscreteMeasure query = document(text_or_file(query_arg), table, options);
  const SolverSchedule schedule = cfg.schedule();
  const auto kk = static_cast<std::size_t>(k);
  const QueryResult r = metric.kind == Metric::Kind::wfr
                            ? topk_query(query, built.index, kk, cfg.eta, schedule, exhaustive, cfg.worker_threads())
                            : topk_by_metric(query, built.index, kk, metric, schedule, cfg.worker_threads());
  if (cfg.csv()) {
    std::cout << "rank,id,distance\n";
    for (std::size_t i = 0; i < r.hits.size(); ++i)
      std::cout << i + 1 << "," << csv_field(r.hits[i].id) << "," << format_double(r.hits[i].distance) << "\n";
  } else {
    json hits = json::array();
    for (const auto& h : r.hits) hits.push_back({{"id", h.id}, {"distance", h.distance}});
    json out = {{"metric", metric.name()},
                {"hits", hits},
                {"prune_stats",
                 {{"survivors_after_stage", r.prune_stats.survivors_after_stage},
                  {"full_solves", r.prune_stats.full_solves}}}};
    std::cout << out.dump(2) << "\n";
  }
  return 0;
}

int cmd_knn(const RunConfig& cfg, const std::string& train_path, const std::string& test_path,
            const std::string& format_flag, std::optional<long long> k_flag, bool cv) {
  if (!cv && !k_flag) throw UsageError("knn needs --k or --cv");
  if (k_flag && *k_flag < 1) throw UsageError("k must be at least 1");
  const EmbeddingTable table = cfg.table();
  const PreprocessOptions options = cfg.preprocess();
  const Corpus train = load_corpus(train_path, corpus_format(train_path, format_flag), options);
  const Corpus test = load_corpus(test_path, corpus_format(test_path, format_flag), options);
  for (const auto& doc : train.documents)
    if (!doc.label) throw UsageError("training document '" + doc.id + "' has no label");
  bool shared = false;
  for (const auto& l : test.label_set) shared = shared || train.label_set.count(l);
  if (!shared && !test.label_set.empty()) std::cerr << "warning: train and test label sets are disjoint\n";

  const SolverSchedule schedule = cfg.schedule();
  std::size_t k = k_flag ? static_cast<std::size_t>(*k_flag) : 0;
  double eta = cfg.eta;
  json cv_json;
  if (cv) {
    CrossValidationOptions o;
    o.seed = cfg.seed;
    o.threads = cfg.worker_threads();
    const CrossValidationResult r = cross_validate(train, table, schedule, o);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    k = r.best_k;
    eta = r.best_eta;
    cv_json = {{"k_grid", o.k_grid},
               {"eta_grid", o.eta_grid},
               {"mean_errors", r.mean_errors},
               {"fold_errors", r.fold_errors},
               {"seed", o.seed}};
  }
  const KnnReport rep = knn_error_rate(train, test, table, k, eta, schedule, cfg.worker_threads());
  for (const auto& id : rep.degenerate)
    std::cerr << "warning: test document '" << id << "' has no in-vocabulary tokens; counted as an error\n";

  if (cfg.csv()) {
    std::cout << "k,eta,error_rate,misclassified,total\n"
              << k << "," << format_double(eta) << "," << format_double(rep.error_rate) << ","
              << rep.misclassified << "," << rep.total << "\n";
  } else {
    json out = {{"k", k},
                {"eta", eta},
                {"error_rate", rep.error_rate},
                {"misclassified", rep.misclassified},
                {"total", rep.total},
                {"degenerate", rep.degenerate},
                {"prune_report",
                 {{"mean_survivors_after_stage", rep.mean_survivors}, {"mean_full_solves", rep.mean_full_solves}}}};
    if (cv) out["cross_validation"] = cv_json;
    std::cout << out.dump(2) << "\n";
  }
  std::cerr << prune_report_table(schedule, rep.mean_survivors, rep.mean_full_solves,
                                  build_index(train, table).index.size());
  return 0;
}

int cmd_prcurve(const RunConfig& cfg, const std::string& pairs_path, const std::string& metric_name,
                const std::string& output) {
  const Metric metric = Metric::parse(metric_name, cfg.eta);
  const std::vector<DocPair> pairs = load_pairs(pairs_path);
  if (pairs.empty()) throw UsageError("pairs file is empty");
  if (std::none_of(pairs.begin(), pairs.end(), [](const DocPair& p) { return p.label; }))
    throw UsageError("pairs file has no positive label");
  const EmbeddingTable table = cfg.table();
  std::vector<ScoredPair> scored;
  try {
    scored = score_pairs(pairs, table, cfg.preprocess(), metric, cfg.schedule(), cfg.worker_threads());
  } catch (const DegenerateDocumentError& e) {
    throw UsageError("pair document '" + e.id() + "' has no in-vocabulary tokens");
  }
  const std::vector<PRPoint> curve = pr_curve(scored);

  std::string body;
  if (cfg.csv()) {
    body = pr_curve_csv(curve);
  } else {
    json points = json::array();
    for (const auto& p : curve)
      points.push_back({{"threshold", p.threshold}, {"precision", p.precision}, {"recall", p.recall}});
    json scores = json::array();
    for (const auto& s : scored) scores.push_back({{"pair_id", s.pair_id}, {"score", s.score}, {"label", s.label}});
    body = json{{"metric", metric.name()}, {"eta", metric.eta}, {"curve", points}, {"scores", scores}}.dump(2) + "\n";
  }
  if (output.empty()) {
    std::cout << body;
  } else {
    std::ofstream out(output);
    if (!(out << body)) throw UsageError("cannot write " + output);
  }
  const PRPoint best = best_f1(curve);
  std::cerr << "best F1 " << format_double(f1_score(best)) << " at threshold " << format_double(best.threshold)
            << " (precision " << format_double(best.precision) << ", recall " << format_double(best.recall)
            << ")\n";
  return 0;
}

int cmd_demo(const RunConfig& cfg, bool synthetic, std::array<std::string, 3> sentences) {
  if (!synthetic && cfg.embeddings.empty()) throw UsageError("demo needs --embeddings or --synthetic");
  const EmbeddingTable table = synthetic ? synthetic_demo_table(cfg.eta) : cfg.table();
  const PreprocessOptions options = cfg.preprocess();
  std::set<std::string> missing;
  for (const auto& s : sentences)
    for (const auto& [token, count] : preprocess(s, options))
      if (!table.contains(token)) missing.insert(token);
  if (!missing.empty()) {
    std::string list;
    for (const auto& w : missing) list += " " + w;
    throw UsageError("demo words missing from the embedding:" + list);
  }
  const DemoReport report = length_varying_demo(table, sentences, cfg.eta, cfg.schedule(), options);
  std::cout << report.text();
  if (synthetic && !(report.wfr_prefers_c() && report.wmd_prefers_a() && report.wfr_masses_decrease())) {
    std::cerr << "error: the synthetic geometry did not reproduce the ordering flip\n";
    return kExitInternal;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"WFR document distance: pairwise distance, top-k retrieval, KNN and PR curves"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  RunConfig cfg;
  app.add_option("--embeddings", cfg.embeddings, "word vector file (word2vec/fastText text format)");
  app.add_option("--eta", cfg.eta, "WFR length scale")->check(CLI::PositiveNumber);
  app.add_option("--schedule", cfg.schedule_text, "standard | converged | eps:iters,eps:iters,...");
  app.add_option("--threads", cfg.threads, "worker threads (0 = all cores)")->envname("WFRDOC_THREADS");
  app.add_option("--stopwords", cfg.stopwords, "stop-word file, one per line")->check(CLI::ExistingFile);
  app.add_flag("--no-lowercase", cfg.no_lowercase, "keep token case");
  app.add_option("--seed", cfg.seed, "seed for cross-validation folds");
  app.add_option("--format", cfg.format, "json or csv")
      ->check(CLI::IsMember({"json", "csv"}))
      ->envname("WFRDOC_FORMAT");

  std::string doc_a, doc_b;
  auto* dist = app.add_subcommand("dist", "distance between two documents");
  dist->add_option("doc_a", doc_a, "text or file")->required();
  dist->add_option("doc_b", doc_b, "text or file")->required();

  std::string corpus_path, corpus_fmt = "auto", query, metric = "wfr";
  long long k = 0;
  bool exhaustive = false;
  auto* topk = app.add_subcommand("topk", "k nearest corpus documents to a query");
  topk->add_option("--corpus", corpus_path, "corpus file (.jsonl or .tsv)")->required()->check(CLI::ExistingFile);
  topk->add_option("--corpus-format", corpus_fmt)->check(CLI::IsMember({"auto", "jsonl", "tsv"}));
  topk->add_option("query", query, "text or file")->required();
  topk->add_option("-k,--k", k, "number of hits")->required();
  topk->add_flag("--exhaustive", exhaustive, "solve every document (no pruning)");
  topk->add_option("--metric", metric)->check(CLI::IsMember({"wfr", "wmd", "balanced_wfr_cost"}));

  std::string train_path, test_path;
  std::optional<long long> knn_k;
  bool cv = false;
  auto* knn = app.add_subcommand("knn", "KNN classification error");
  knn->add_option("--train", train_path)->required()->check(CLI::ExistingFile);
  knn->add_option("--test", test_path)->required()->check(CLI::ExistingFile);
  knn->add_option("--corpus-format", corpus_fmt)->check(CLI::IsMember({"auto", "jsonl", "tsv"}));
  auto* k_opt = knn->add_option("-k,--k", knn_k, "neighborhood size");
  knn->add_flag("--cv", cv, "choose k and eta by 5-fold cross-validation on train")->excludes(k_opt);

  std::string pairs_path, output;
  auto* pr = app.add_subcommand("prcurve", "precision-recall curve over scored pairs");
  pr->add_option("--pairs", pairs_path, "JSONL with concept_text, project_text, label")
      ->required()
      ->check(CLI::ExistingFile);
  pr->add_option("--metric", metric)->check(CLI::IsMember({"wfr", "wmd", "balanced_wfr_cost"}));
  pr->add_option("-o,--output", output, "write the curve here instead of stdout");

  bool synthetic = false;
  std::array<std::string, 3> sentences = default_demo_sentences();
  auto* demo = app.add_subcommand("demo", "length-varying example: WMD vs WFR transport plans");
  demo->add_flag("--synthetic", synthetic, "use the built-in geometry instead of --embeddings");
  demo->add_option("--sentence-a", sentences[0]);
  demo->add_option("--sentence-b", sentences[1]);
  demo->add_option("--sentence-c", sentences[2]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    cfg.schedule();  // validate before any work
    if (*dist) return cmd_dist(cfg, doc_a, doc_b);
    if (*topk) return cmd_topk(cfg, corpus_path, corpus_fmt, query, k, exhaustive, metric);
    if (*knn) return cmd_knn(cfg, train_path, test_path, corpus_fmt, knn_k, cv);
    if (*pr) return cmd_prcurve(cfg, pairs_path, metric, output);
    if (*demo) return cmd_demo(cfg, synthetic, sentences);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitInternal;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitInput;
  } catch (const DegenerateDocumentError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const InvalidArgument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
