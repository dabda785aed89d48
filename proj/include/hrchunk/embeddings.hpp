#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hrchunk/corpus.hpp"
#include "hrchunk/params.hpp"

namespace hrchunk {

// n x d, one row per token.
using EmbeddingMatrix = Matrix;

struct ProviderSpec {
  enum class Kind { File, Hashed, Lookup };
  Kind kind = Kind::Hashed;
  int dim = 32;
  std::uint64_t seed = 0;
  std::string path;  // file provider only

  // "kind=hashed,d=32,seed=7" or "kind=file,d=768,path=vecs.txt".
  static ProviderSpec parse(std::string_view text);
  std::string to_string() const;
};

// Position-independent vector for one token form: d values in [-0.1, 0.1]
// derived from a stable hash of (form, seed).
Vector hashed_vector(std::string_view form, int dim, std::uint64_t seed);

// Trainable per-type rows. Row 0 is reserved for unknown tokens. Rows start
// at their hashed vectors so a fresh table embeds like the hashed provider.
class LookupTable {
 public:
  static constexpr const char* kUnknown = "<unk>";

  LookupTable(int dim, std::uint64_t seed);
  void add_types(std::span<const Sentence> sentences);
  std::size_t index(const std::string& form) const;  // 0 for unknown forms
  const std::vector<std::string>& types() const { return types_; }

  // Tensor "table", |types| x dim.
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // Rebuilds from a stored vocabulary and parameter set.
  void restore(std::vector<std::string> types, const ParamSet& stored);

 private:
  int dim_;
  std::uint64_t seed_;
  std::vector<std::string> types_;
  std::unordered_map<std::string, std::size_t> ids_;
  ParamSet params_;
};

class EmbeddingProvider {
 public:
  explicit EmbeddingProvider(ProviderSpec spec);

  const ProviderSpec& spec() const { return spec_; }
  int dim() const { return spec_.dim; }

  // Deterministic per (spec, sentence). Throws LookupError when the file
  // provider has no vectors for s.id or the row count differs.
  EmbeddingMatrix embed(const Sentence& s) const;

  // Lookup provider only; no-op for the other kinds.
  void build_vocabulary(std::span<const Sentence> sentences);
  LookupTable* lookup() { return table_ ? &*table_ : nullptr; }
  const LookupTable* lookup() const { return table_ ? &*table_ : nullptr; }

  // Lookup provider: table row of every token.
  std::vector<std::size_t> rows(const Sentence& s) const;

 private:
  ProviderSpec spec_;
  std::unordered_map<std::string, EmbeddingMatrix> file_vectors_;
  std::optional<LookupTable> table_;
};

// `#id <sentence-id>` then one line of d decimals per token. Throws
// ShapeError on a row with a dimension other than d.
std::unordered_map<std::string, EmbeddingMatrix> read_embedding_file(std::string_view text, int dim);
std::string write_embedding_file(const std::vector<std::pair<std::string, EmbeddingMatrix>>& items);

// Cosine similarity. A zero vector gives 0 and increments *zero_count.
double cosine(const Vector& u, const Vector& v, std::size_t* zero_count = nullptr);

}  // namespace hrchunk
