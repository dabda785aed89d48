#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hrchunk/corpus.hpp"
#include "hrchunk/grammar.hpp"
#include "hrchunk/tree.hpp"

namespace hrchunk {

// A generating PCFG whose derivations carry gold chunks: every node labelled
// with a chunk symbol is one chunk, and every leaf outside such a node is a
// singleton chunk.
struct ChunkGrammar {
  Pcfg grammar;
  std::vector<std::size_t> chunk_symbols;
};

// Built-in English-like grammar: noun chunks are left-branching
// ((DET ADJ) NOUN), clauses are right-branching, and intransitive clauses
// (NP VERB) are the one construction where left-branching over-merges.
ChunkGrammar builtin_chunk_grammar();

struct SyntheticSentence {
  LabeledSentence labeled;
  BinaryTree tree;
};

ChunkSet gold_chunks(const Derivation& d, const std::vector<std::size_t>& chunk_symbols);

// Rejection-samples `count` sentences of length in [min_len, max_len]. Ids are
// id_prefix + index.
std::vector<SyntheticSentence> sample_corpus(const ChunkGrammar& cg, std::size_t count,
                                             std::uint64_t seed, std::size_t min_len = 2,
                                             std::size_t max_len = 20,
                                             const std::string& id_prefix = "syn");

}  // namespace hrchunk
