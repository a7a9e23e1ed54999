#include "wfrdoc/corpus.hpp"

#include "wfrdoc/errors.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace wfrdoc {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool parse_size(std::string_view s, std::size_t& out) {
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool is_blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

}  // namespace

std::optional<std::size_t> EmbeddingTable::find(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool EmbeddingTable::add(const std::string& token, const Eigen::VectorXd& v) {
  if (token.empty()) throw InvalidArgument("empty embedding token");
  if (static_cast<std::size_t>(v.size()) != dimension_)
    throw InvalidArgument("embedding for '" + token + "' has dimension " + std::to_string(v.size()) +
                          ", table has " + std::to_string(dimension_));
  if (index_.count(token)) {
    ++duplicates_;
    return false;
  }
  const auto row = static_cast<Eigen::Index>(tokens_.size());
  if (row >= vectors_.rows()) vectors_.conservativeResize(std::max<Eigen::Index>(16, 2 * row), dimension_);
  vectors_.row(row) = v.transpose();
  index_.emplace(token, tokens_.size());
  tokens_.push_back(token);
  return true;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               std::optional<std::size_t> expected_dimension) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embedding file " + path.string(), 0);

  std::optional<std::size_t> header_dim;
  std::optional<EmbeddingTable> table;
  std::string line;
  std::size_t lineno = 0;
  Eigen::VectorXd v;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (is_blank(line)) continue;
    const auto fields = split_fields(line);
    if (!table && !header_dim && fields.size() == 2) {
      std::size_t count = 0, dim = 0;
      if (parse_size(fields[0], count) && parse_size(fields[1], dim)) {
        if (dim == 0) throw ParseError("header declares dimension 0", lineno);
        header_dim = dim;
        continue;
      }
    }
    if (fields.size() < 2) throw ParseError("expected a token followed by vector entries", lineno);
    const std::size_t dim = fields.size() - 1;
    if (!table) {
      if (header_dim && *header_dim != dim)
        throw ParseError("vector has " + std::to_string(dim) + " entries, header declares " +
                             std::to_string(*header_dim),
                         lineno);
      if (expected_dimension && *expected_dimension != dim)
        throw ConfigError("embedding dimension is " + std::to_string(dim) + ", expected " +
                          std::to_string(*expected_dimension));
      table.emplace(dim);
      v.resize(static_cast<Eigen::Index>(dim));
    } else if (dim != table->dimension()) {
      throw ParseError("vector has " + std::to_string(dim) + " entries, expected " +
                           std::to_string(table->dimension()),
                       lineno);
    }
    for (std::size_t k = 0; k < dim; ++k) {
      double x = 0.0;
      if (!parse_double(fields[k + 1], x) || !std::isfinite(x))
        throw ParseError("bad number '" + std::string(fields[k + 1]) + "'", lineno);
      v[static_cast<Eigen::Index>(k)] = x;
    }
    table->add(std::string(fields[0]), v);
  }
  if (!table) throw ParseError("embedding file " + path.string() + " has no vectors", 0);
  return std::move(*table);
}

TokenCounts preprocess(std::string_view text, const PreprocessOptions& options) {
  TokenCounts counts;
  const auto is_letter = [](unsigned char ch) {
    return (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || ch >= 0x80;
  };
  std::size_t i = 0;
  std::string token;
  while (i < text.size()) {
    while (i < text.size() && !is_letter(static_cast<unsigned char>(text[i]))) ++i;
    token.clear();
    while (i < text.size() && is_letter(static_cast<unsigned char>(text[i]))) {
      char ch = text[i++];
      if (options.lowercase && ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
      token.push_back(ch);
    }
    if (!token.empty() && !options.stopwords.count(token)) ++counts[token];
  }
  return counts;
}

std::set<std::string> load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open stop-word file " + path.string(), 0);
  std::set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    const auto fields = split_fields(line);
    if (fields.size() == 1) words.emplace(fields[0]);
  }
  return words;
}

NbowDocument to_nbow(const ProcessedDocument& doc, const EmbeddingTable& table) {
  std::vector<std::size_t> rows;
  std::vector<double> counts;
  NbowDocument out;
  for (const auto& [token, count] : doc.token_counts) {
    if (count < 1) throw InvalidArgument("document '" + doc.id + "' has a non-positive count");
    if (const auto row = table.find(token)) {
      rows.push_back(*row);
      counts.push_back(count);
      out.tokens.push_back(token);
    } else {
      ++out.oov_dropped;
    }
  }
  if (rows.empty()) throw DegenerateDocumentError(doc.id);

  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd points(n, static_cast<Eigen::Index>(table.dimension()));
  Eigen::VectorXd weights(n);
  double total = 0.0;
  for (double c : counts) total += c;
  for (Eigen::Index k = 0; k < n; ++k) {
    points.row(k) = table.vectors().row(static_cast<Eigen::Index>(rows[k]));
    weights[k] = counts[k] / total;
  }
  out.measure = DiscreteMeasure(std::move(points), std::move(weights));
  return out;
}

void Corpus::add(ProcessedDocument doc) {
  if (!ids_.insert(doc.id).second) throw InvalidArgument("duplicate document id '" + doc.id + "'");
  if (doc.label) label_set.insert(*doc.label);
  documents.push_back(std::move(doc));
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                   const PreprocessOptions& options) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file " + path.string(), 0);
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (is_blank(line)) continue;
    ProcessedDocument doc;
    std::string text;
    if (format == CorpusFormat::tsv) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw ParseError("expected label<TAB>text", lineno);
      if (tab > 0) doc.label = line.substr(0, tab);
      text = line.substr(tab + 1);
    } else {
      nlohmann::json obj;
      try {
        obj = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
      }
      if (!obj.is_object()) throw ParseError("expected a JSON object", lineno);
      const auto scalar = [&](const char* key) -> std::optional<std::string> {
        const auto it = obj.find(key);
        if (it == obj.end() || it->is_null()) return std::nullopt;
        if (it->is_string()) return it->get<std::string>();
        if (it->is_number() || it->is_boolean()) return it->dump();
        throw ParseError(std::string("field '") + key + "' must be a string or number", lineno);
      };
      const auto t = obj.find("text");
      if (t == obj.end() || !t->is_string()) throw ParseError("missing string field 'text'", lineno);
      text = t->get<std::string>();
      if (auto id = scalar("id")) doc.id = *id;
      doc.label = scalar("label");
    }
    if (doc.id.empty()) doc.id = "#" + std::to_string(corpus.size());
    doc.token_counts = preprocess(text, options);
    try {
      corpus.add(std::move(doc));
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return corpus;
}

std::optional<std::string> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace wfrdoc
