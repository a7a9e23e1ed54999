#pragma once
// Shared generators and file helpers for the test binaries.

#include "wfrdoc/corpus.hpp"
#include "wfrdoc/measures.hpp"
#include "wfrdoc/retrieval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <unistd.h>

namespace wfrdoc::testing {

/// Weights proportional to word counts drawn from 1..5.
inline Eigen::VectorXd nbow_weights(std::mt19937_64& rng, Eigen::Index n) {
  std::uniform_int_distribution<int> count(1, 5);
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) w[i] = count(rng);
  return w / w.sum();
}

/// n Gaussian points (per-coordinate spread `sigma`) with nBOW weights.
inline DiscreteMeasure random_measure(std::mt19937_64& rng, Eigen::Index n, Eigen::Index dim, double sigma) {
  std::normal_distribution<double> gauss(0.0, sigma);
  Eigen::MatrixXd x(n, dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index d = 0; d < dim; ++d) x(i, d) = gauss(rng);
  return {x, nbow_weights(rng, n)};
}

/// Documents drawn from `topics` Gaussian topics over a shared vocabulary; each
/// document mixes words of its own topic with a few from anywhere. Labels are
/// the topic names "t0", "t1", ...
inline DocumentIndex topic_index(std::mt19937_64& rng, std::size_t docs, Eigen::Index dim, std::size_t topics,
                                 std::size_t min_len, std::size_t max_len) {
  constexpr std::size_t words_per_topic = 40;
  std::normal_distribution<double> center(0.0, 0.8), spread(0.0, 0.45);
  Eigen::MatrixXd vocab(static_cast<Eigen::Index>(topics * words_per_topic), dim);
  for (std::size_t t = 0; t < topics; ++t) {
    Eigen::VectorXd c(dim);
    for (auto& v : c) v = center(rng);
    for (std::size_t w = 0; w < words_per_topic; ++w)
      for (Eigen::Index d = 0; d < dim; ++d)
        vocab(static_cast<Eigen::Index>(t * words_per_topic + w), d) = c[d] + spread(rng);
  }
  std::uniform_int_distribution<std::size_t> length(min_len, max_len), own(0, words_per_topic - 1),
      any(0, topics * words_per_topic - 1);
  std::uniform_real_distribution<double> unit;
  DocumentIndex index;
  index.embedding_dimension = static_cast<std::size_t>(dim);
  for (std::size_t n = 0; n < docs; ++n) {
    const std::size_t topic = n % topics;
    std::vector<Eigen::Index> rows;
    for (std::size_t k = length(rng); k > 0; --k) {
      const std::size_t w = unit(rng) < 0.8 ? topic * words_per_topic + own(rng) : any(rng);
      const auto r = static_cast<Eigen::Index>(w);
      if (std::find(rows.begin(), rows.end(), r) == rows.end()) rows.push_back(r);
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = vocab.row(rows[i]);
    index.add("doc" + std::to_string(1000 + n), "t" + std::to_string(topic),
              DiscreteMeasure(x, nbow_weights(rng, x.rows())));
  }
  return index;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("wfrdoc_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline void write_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << table.size() << " " << table.dimension() << "\n";
  out.precision(17);
  for (std::size_t r = 0; r < table.size(); ++r) {
    out << table.tokens()[r];
    const Eigen::VectorXd v = table.vector(r);
    for (Eigen::Index d = 0; d < v.size(); ++d) out << " " << v[d];
    out << "\n";
  }
}

/// JSONL corpus whose texts repeat each token by its count.
inline void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  for (const auto& doc : corpus.documents) {
    std::string text;
    for (const auto& [token, count] : doc.token_counts)
      for (int c = 0; c < count; ++c) text += (text.empty() ? "" : " ") + token;
    out << "{\"id\": \"" << doc.id << "\", \"label\": \"" << doc.label.value_or("") << "\", \"text\": \"" << text
        << "\"}\n";
  }
}

}  // namespace wfrdoc::testing
