#include "hrchunk/synthetic.hpp"

#include <algorithm>
#include <functional>

#include "hrchunk/error.hpp"
#include "hrchunk/rng.hpp"

namespace hrchunk {

namespace {

constexpr const char* kBuiltinGrammar = R"(# clause level
ROOT CL 1.0
BIN CL NP VP 0.5
BIN CL PRON VP 0.3
BIN CL NP VERB 0.2
BIN VP VERB NP 0.3
BIN VP VC NP 0.2
BIN VP VERB OBJ 0.2
BIN VP VERB PP 0.15
BIN VP VC PP 0.15
BIN OBJ NP PP 1.0
BIN PP PREP NP 1.0
# chunks
BIN NP DET NOUN 0.45
BIN NP NB NOUN 0.35
BIN NP ADJ NOUN 0.2
BIN NB DET ADJ 0.75
BIN NB NB ADJ 0.25
BIN VC ADV VERB 1.0
LEX DET the 0.35
LEX DET a 0.3
LEX DET this 0.15
LEX DET every 0.1
LEX DET some 0.1
LEX ADJ big 0.2
LEX ADJ small 0.2
LEX ADJ red 0.15
LEX ADJ old 0.15
LEX ADJ happy 0.15
LEX ADJ quick 0.15
LEX NOUN cat 0.15
LEX NOUN dog 0.15
LEX NOUN man 0.15
LEX NOUN house 0.1
LEX NOUN tree 0.1
LEX NOUN car 0.15
LEX NOUN book 0.1
LEX NOUN idea 0.1
LEX VERB sees 0.2
LEX VERB likes 0.2
LEX VERB takes 0.15
LEX VERB finds 0.15
LEX VERB wants 0.15
LEX VERB builds 0.15
LEX ADV often 0.3
LEX ADV never 0.3
LEX ADV quickly 0.2
LEX ADV rarely 0.2
LEX PREP in 0.25
LEX PREP on 0.25
LEX PREP with 0.2
LEX PREP near 0.15
LEX PREP under 0.15
LEX PRON he 0.3
LEX PRON she 0.3
LEX PRON it 0.2
LEX PRON they 0.2
)";

}  // namespace

ChunkGrammar builtin_chunk_grammar() {
  ChunkGrammar cg{read_grammar(kBuiltinGrammar), {}};
  validate(cg.grammar);
  for (const char* name : {"NP", "VC"}) cg.chunk_symbols.push_back(*cg.grammar.symbol_index(name));
  return cg;
}

ChunkSet gold_chunks(const Derivation& d, const std::vector<std::size_t>& chunk_symbols) {
  ChunkSet out;
  std::function<void(BinaryTree::NodeId)> walk = [&](BinaryTree::NodeId id) {
    const auto& n = d.tree.node(id);
    bool is_chunk = std::find(chunk_symbols.begin(), chunk_symbols.end(),
                              d.symbols[static_cast<std::size_t>(id)]) != chunk_symbols.end();
    if (n.is_leaf() || is_chunk) {
      out.push_back({n.start, n.end});
      return;
    }
    walk(n.left);
    walk(n.right);
  };
  walk(d.tree.root());
  return out;
}

std::vector<SyntheticSentence> sample_corpus(const ChunkGrammar& cg, std::size_t count,
                                             std::uint64_t seed, std::size_t min_len,
                                             std::size_t max_len, const std::string& id_prefix) {
  if (min_len < 1 || min_len > max_len) throw Error("sample_corpus: bad length range");
  Rng rng(seed);
  std::vector<SyntheticSentence> out;
  out.reserve(count);
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > 1000 * (count + 1)) throw Error("sample_corpus: length constraints too tight");
    auto d = sample_derivation(cg.grammar, rng, max_len);
    if (!d || d->tree.leaf_count() < min_len) continue;
    SyntheticSentence s;
    s.labeled.sentence.id = id_prefix + std::to_string(out.size());
    const std::size_t n = d->tree.leaf_count();
    s.labeled.sentence.tokens.resize(n);
    for (std::size_t id = 0; id < d->tree.node_count(); ++id) {
      const auto& node = d->tree.node(static_cast<BinaryTree::NodeId>(id));
      if (!node.is_leaf()) continue;
      s.labeled.sentence.tokens[node.start] = {d->tree.words()[node.start],
                                               cg.grammar.symbol_name(d->symbols[id])};
    }
    s.labeled.tags = spans_to_tags(gold_chunks(*d, cg.chunk_symbols), n, OMask(n, false));
    s.tree = std::move(d->tree);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace hrchunk
