#include "hrchunk/embeddings.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hrchunk/error.hpp"
#include "hrchunk/numparse.hpp"
#include "hrchunk/rng.hpp"

namespace hrchunk {

ProviderSpec ProviderSpec::parse(std::string_view text) {
  ProviderSpec spec;
  bool have_kind = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    std::string_view item = text.substr(pos, comma - pos);
    pos = comma + 1;
    if (item.empty()) {
      if (comma == text.size()) break;
      continue;
    }
    auto eq = item.find('=');
    if (eq == std::string_view::npos) throw Error("embedding spec item '" + std::string(item) + "' lacks '='");
    std::string key(item.substr(0, eq));
    std::string value(item.substr(eq + 1));
    try {
      if (key == "kind") {
        have_kind = true;
        if (value == "file") spec.kind = Kind::File;
        else if (value == "hashed") spec.kind = Kind::Hashed;
        else if (value == "lookup") spec.kind = Kind::Lookup;
        else throw Error("unknown embedding kind '" + value + "'");
      } else if (key == "d") {
        spec.dim = std::stoi(value);
      } else if (key == "seed") {
        spec.seed = std::stoull(value);
      } else if (key == "path") {
        spec.path = value;
      } else {
        throw Error("unknown embedding spec key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw Error("bad value for embedding spec key '" + key + "': " + value);
    }
    if (comma == text.size()) break;
  }
  if (!have_kind) throw Error("embedding spec needs kind=file|hashed|lookup");
  if (spec.dim < 1) throw Error("embedding dimension must be at least 1");
  if (spec.kind == Kind::File && spec.path.empty()) throw Error("file embeddings need path=...");
  return spec;
}

std::string ProviderSpec::to_string() const {
  std::string k = kind == Kind::File ? "file" : kind == Kind::Hashed ? "hashed" : "lookup";
  std::string s = "kind=" + k + ",d=" + std::to_string(dim) + ",seed=" + std::to_string(seed);
  if (!path.empty()) s += ",path=" + path;
  return s;
}

Vector hashed_vector(std::string_view form, int dim, std::uint64_t seed) {
  Vector v(dim);
  std::uint64_t h = stable_hash(form, seed);
  for (int k = 0; k < dim; ++k) {
    std::uint64_t bits = splitmix64(h + static_cast<std::uint64_t>(k));
    double u = static_cast<double>(bits >> 11) * 0x1.0p-53;
    v[k] = -0.1 + 0.2 * u;
  }
  return v;
}

LookupTable::LookupTable(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  types_.push_back(kUnknown);
  ids_.emplace(kUnknown, 0);
  params_.add("table", 1, dim_);
  params_.tensor(0).row(0) = hashed_vector(kUnknown, dim_, seed_).transpose();
}

void LookupTable::add_types(std::span<const Sentence> sentences) {
  std::vector<std::string> fresh;
  for (const auto& s : sentences)
    for (const auto& t : s.tokens)
      if (ids_.emplace(t.form, types_.size() + fresh.size()).second) fresh.push_back(t.form);
  if (fresh.empty()) return;
  Matrix old = params_.tensor(0);
  ParamSet grown;
  grown.add("table", static_cast<Eigen::Index>(types_.size() + fresh.size()), dim_);
  auto table = grown.tensor(0);
  table.topRows(old.rows()) = old;
  for (std::size_t i = 0; i < fresh.size(); ++i)
    table.row(old.rows() + static_cast<Eigen::Index>(i)) =
        hashed_vector(fresh[i], dim_, seed_).transpose();
  params_ = std::move(grown);
  for (auto& f : fresh) types_.push_back(std::move(f));
}

std::size_t LookupTable::index(const std::string& form) const {
  auto it = ids_.find(form);
  return it == ids_.end() ? 0 : it->second;
}

void LookupTable::restore(std::vector<std::string> types, const ParamSet& stored) {
  ParamSet expected;
  expected.add("table", static_cast<Eigen::Index>(types.size()), dim_);
  expected.assign_from(stored);
  if (types.empty() || types[0] != kUnknown) throw ShapeError("lookup vocabulary must start with <unk>");
  ids_.clear();
  for (std::size_t i = 0; i < types.size(); ++i) ids_.emplace(types[i], i);
  types_ = std::move(types);
  params_ = std::move(expected);
}

EmbeddingProvider::EmbeddingProvider(ProviderSpec spec) : spec_(std::move(spec)) {
  if (spec_.dim < 1) throw Error("embedding dimension must be at least 1");
  if (spec_.kind == ProviderSpec::Kind::File) {
    std::ifstream in(spec_.path, std::ios::binary);
    if (!in) throw LookupError("cannot open embedding file " + spec_.path);
    std::ostringstream buf;
    buf << in.rdbuf();
    file_vectors_ = read_embedding_file(buf.str(), spec_.dim);
  } else if (spec_.kind == ProviderSpec::Kind::Lookup) {
    table_.emplace(spec_.dim, spec_.seed);
  }
}

EmbeddingMatrix EmbeddingProvider::embed(const Sentence& s) const {
  const auto n = static_cast<Eigen::Index>(s.size());
  EmbeddingMatrix x(n, spec_.dim);
  switch (spec_.kind) {
    case ProviderSpec::Kind::Hashed:
      for (Eigen::Index i = 0; i < n; ++i)
        x.row(i) = hashed_vector(s.tokens[static_cast<std::size_t>(i)].form, spec_.dim, spec_.seed).transpose();
      break;
    case ProviderSpec::Kind::Lookup: {
      auto table = table_->params().tensor(0);
      for (Eigen::Index i = 0; i < n; ++i)
        x.row(i) = table.row(static_cast<Eigen::Index>(table_->index(s.tokens[static_cast<std::size_t>(i)].form)));
      break;
    }
    case ProviderSpec::Kind::File: {
      auto it = file_vectors_.find(s.id);
      if (it == file_vectors_.end()) throw LookupError("no embeddings for sentence id '" + s.id + "'");
      if (it->second.rows() != n)
        throw LookupError("embeddings for sentence '" + s.id + "' have " +
                          std::to_string(it->second.rows()) + " rows, sentence has " +
                          std::to_string(n) + " tokens");
      x = it->second;
      break;
    }
  }
  return x;
}

void EmbeddingProvider::build_vocabulary(std::span<const Sentence> sentences) {
  if (table_) table_->add_types(sentences);
}

std::vector<std::size_t> EmbeddingProvider::rows(const Sentence& s) const {
  if (!table_) throw Error("rows() is only defined for the lookup provider");
  std::vector<std::size_t> out;
  out.reserve(s.size());
  for (const auto& t : s.tokens) out.push_back(table_->index(t.form));
  return out;
}

std::unordered_map<std::string, EmbeddingMatrix> read_embedding_file(std::string_view text, int dim) {
  std::unordered_map<std::string, EmbeddingMatrix> out;
  std::istringstream in{std::string(text)};
  std::string line, current;
  std::vector<std::vector<double>> rows;
  std::size_t no = 0;
  auto flush = [&] {
    if (current.empty()) return;
    EmbeddingMatrix m(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (int c = 0; c < dim; ++c) m(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
    out[current] = std::move(m);
    rows.clear();
  };
  while (std::getline(in, line)) {
    ++no;
    if (line.starts_with("#id ")) {
      flush();
      current = line.substr(4);
      while (!current.empty() && (current.back() == '\r' || current.back() == ' ')) current.pop_back();
      continue;
    }
    std::istringstream ls(line);
    std::vector<double> row;
    for (std::string tok; ls >> tok;) {
      auto v = parse_double(tok);
      if (!v) throw ParseError("bad embedding value '" + tok + "'", no);
      row.push_back(*v);
    }
    if (row.empty()) continue;
    if (current.empty()) throw ParseError("embedding row before any '#id' header", no);
    if (row.size() != static_cast<std::size_t>(dim))
      throw ShapeError("line " + std::to_string(no) + ": embedding dimension " +
                       std::to_string(row.size()) + " does not match d=" + std::to_string(dim));
    rows.push_back(std::move(row));
  }
  flush();
  return out;
}

std::string write_embedding_file(const std::vector<std::pair<std::string, EmbeddingMatrix>>& items) {
  std::ostringstream out;
  char buf[40];
  for (const auto& [id, m] : items) {
    out << "#id " << id << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
        out << (c ? " " : "") << buf;
      }
      out << '\n';
    }
  }
  return out.str();
}

double cosine(const Vector& u, const Vector& v, std::size_t* zero_count) {
  if (u.size() != v.size()) throw ShapeError("cosine: dimension mismatch");
  double nu = u.norm(), nv = v.norm();
  if (nu == 0.0 || nv == 0.0) {
    if (zero_count) ++*zero_count;
    return 0.0;
  }
  double c = u.dot(v) / (nu * nv);
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace hrchunk
