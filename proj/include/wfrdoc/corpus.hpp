#pragma once

#include "wfrdoc/measures.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace wfrdoc {

/// Token -> dense vector lookup. Immutable once loaded.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dimension) : dimension_(dimension) {}

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  bool contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

  /// Row of `vectors()` holding `token`, or nullopt when out of vocabulary.
  std::optional<std::size_t> find(std::string_view token) const;
  Eigen::VectorXd vector(std::size_t row) const { return vectors_.row(static_cast<Eigen::Index>(row)); }
  /// One row per token, in load order.
  auto vectors() const { return vectors_.topRows(static_cast<Eigen::Index>(tokens_.size())); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// Number of repeated tokens ignored while loading (first occurrence wins).
  std::size_t duplicates_ignored() const noexcept { return duplicates_; }

  /// Adds a token; returns false (and counts a duplicate) if it already exists.
  /// Throws InvalidArgument on empty token or wrong dimension.
  bool add(const std::string& token, const Eigen::VectorXd& v);

 private:
  std::size_t dimension_ = 0;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  Eigen::MatrixXd vectors_;
  std::size_t duplicates_ = 0;
};

/// Reads `token v1 ... vD` lines, with an optional `V D` header line.
/// Throws ParseError (empty file, ragged dimensions, bad numbers) or ConfigError
/// when `expected_dimension` is given and differs from the file.
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               std::optional<std::size_t> expected_dimension = std::nullopt);

struct PreprocessOptions {
  bool lowercase = true;
  std::set<std::string> stopwords;
};

using TokenCounts = std::map<std::string, int>;

/// Maximal runs of letters (ASCII letters and any non-ASCII UTF-8 byte), optionally
/// ASCII-lowercased, minus stop words, counted.
TokenCounts preprocess(std::string_view text, const PreprocessOptions& options);

/// One token per line; blank lines and surrounding whitespace are ignored.
std::set<std::string> load_stopwords(const std::filesystem::path& path);

struct ProcessedDocument {
  std::string id;
  std::optional<std::string> label;
  TokenCounts token_counts;
};

struct NbowDocument {
  DiscreteMeasure measure;
  /// Token of each support point, in measure order.
  std::vector<std::string> tokens;
  /// Distinct tokens dropped because the table lacks them.
  std::size_t oov_dropped = 0;
};

/// Normalized bag of words: weight c_k / sum c over in-vocabulary tokens.
/// Throws DegenerateDocumentError when nothing is left.
NbowDocument to_nbow(const ProcessedDocument& doc, const EmbeddingTable& table);

struct Corpus {
  std::vector<ProcessedDocument> documents;
  std::set<std::string> label_set;

  /// Appends; throws InvalidArgument on a duplicate id.
  void add(ProcessedDocument doc);
  std::size_t size() const noexcept { return documents.size(); }

 private:
  std::set<std::string> ids_;
};

enum class CorpusFormat { jsonl, tsv };

/// JSONL objects {id?, label?, text} or `label<TAB>text` lines, in file order.
/// Missing ids become "#<position>". Throws ParseError naming the line.
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                   const PreprocessOptions& options = {});

/// Reads a whole file; returns nullopt if it cannot be opened.
std::optional<std::string> read_file(const std::filesystem::path& path);

}  // namespace wfrdoc
