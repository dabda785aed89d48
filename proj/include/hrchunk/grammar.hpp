#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hrchunk/tree.hpp"

namespace hrchunk {

// PCFG restricted to the three rule forms S -> A, A -> B C and T -> w.
//
// Nonterminals and preterminals share one symbol index space: [0, |N|) are
// nonterminals, [|N|, |N|+|P|) are preterminals. Root rules range over the
// whole space; a root rule to a preterminal only ever derives a one-word
// sentence.
class Pcfg {
 public:
  Pcfg() = default;
  Pcfg(std::vector<std::string> nonterminals, std::vector<std::string> preterminals,
       std::vector<std::string> terminals);

  std::size_t num_nonterminals() const { return nonterminals_.size(); }
  std::size_t num_preterminals() const { return preterminals_.size(); }
  std::size_t num_symbols() const { return nonterminals_.size() + preterminals_.size(); }
  std::size_t num_terminals() const { return terminals_.size(); }

  const std::vector<std::string>& nonterminals() const { return nonterminals_; }
  const std::vector<std::string>& preterminals() const { return preterminals_; }
  const std::vector<std::string>& terminals() const { return terminals_; }
  const std::string& symbol_name(std::size_t sym) const;
  bool is_preterminal(std::size_t sym) const { return sym >= nonterminals_.size(); }

  std::optional<std::size_t> terminal_index(std::string_view word) const;
  std::optional<std::size_t> symbol_index(std::string_view name) const;

  double& root(std::size_t sym) { return root_[sym]; }
  double root(std::size_t sym) const { return root_[sym]; }
  // a: nonterminal index; b, c: symbol indices.
  double& binary(std::size_t a, std::size_t b, std::size_t c) { return binary_[bin_index(a, b, c)]; }
  double binary(std::size_t a, std::size_t b, std::size_t c) const { return binary_[bin_index(a, b, c)]; }
  // t: preterminal ordinal in [0, |P|); w: terminal index.
  double& lexical(std::size_t t, std::size_t w) { return lexical_[t * terminals_.size() + w]; }
  double lexical(std::size_t t, std::size_t w) const { return lexical_[t * terminals_.size() + w]; }

  std::span<const double> root_rules() const { return root_; }
  std::span<const double> binary_rules() const { return binary_; }
  std::span<const double> lexical_rules() const { return lexical_; }
  std::span<double> root_rules() { return root_; }
  std::span<double> binary_rules() { return binary_; }
  std::span<double> lexical_rules() { return lexical_; }

  // Maps words to terminal indices. Unknown words map to `unk` when given,
  // otherwise throw VocabularyError.
  std::vector<std::size_t> encode(std::span<const std::string> words,
                                  const std::optional<std::string>& unk = std::nullopt) const;

 private:
  std::size_t bin_index(std::size_t a, std::size_t b, std::size_t c) const {
    std::size_t s = num_symbols();
    return (a * s + b) * s + c;
  }

  std::vector<std::string> nonterminals_;
  std::vector<std::string> preterminals_;
  std::vector<std::string> terminals_;
  std::unordered_map<std::string, std::size_t> terminal_ids_;
  std::unordered_map<std::string, std::size_t> symbol_ids_;
  std::vector<double> root_;
  std::vector<double> binary_;
  std::vector<double> lexical_;
};

// Throws GrammarError naming the offending left-hand side: probabilities
// outside [0, 1], or a rule distribution whose mass differs from 1 by > 1e-9.
void validate(const Pcfg& g);

// `ROOT A p`, `BIN A B C p`, `LEX T w p`, `#` comments; validated on load.
// Nonterminals are the BIN left-hand sides and preterminals the LEX
// left-hand sides.
Pcfg read_grammar(std::string_view text);
// Nonzero rules only, probabilities with 17 significant digits.
std::string write_grammar(const Pcfg& g);

// Dirichlet(1) rows, deterministic per seed. Root rules cover nonterminals
// only. Terminals are named w0..w{k-1} unless given explicitly.
Pcfg random_pcfg(std::uint64_t seed, std::size_t num_nonterminals, std::size_t num_preterminals,
                 std::size_t num_terminals);
Pcfg random_pcfg(std::uint64_t seed, std::size_t num_nonterminals, std::size_t num_preterminals,
                 std::vector<std::string> terminals);

// Log of the total probability of all parses; -inf when none exists.
double inside_logprob(const Pcfg& g, std::span<const std::size_t> words);
double inside_logprob(const Pcfg& g, std::span<const std::string> words);

struct ViterbiParse {
  BinaryTree tree;
  double logprob = 0.0;
  std::vector<std::size_t> symbols;  // symbol of each tree node, indexed by NodeId
};

// Highest-probability parse. Ties prefer the smaller split point, then the
// lexicographically smaller symbol triple. Throws NoParseError.
ViterbiParse viterbi_cyk(const Pcfg& g, std::span<const std::size_t> words,
                         std::span<const std::string> forms = {});
ViterbiParse viterbi_cyk(const Pcfg& g, std::span<const std::string> words);

struct EmResult {
  Pcfg grammar;
  double loglik = 0.0;  // corpus log-likelihood under the input grammar
  std::size_t used = 0;
  std::size_t skipped = 0;  // unparseable sentences
};

// One inside-outside update. Expected counts are reduced in sentence order, so
// the result does not depend on `threads`. Throws Error if no sentence parses.
EmResult em_step(const Pcfg& g, std::span<const std::vector<std::size_t>> corpus,
                 unsigned threads = 1);

struct Derivation {
  BinaryTree tree;
  std::vector<std::size_t> symbols;  // per NodeId
};

class Rng;
// Top-down sample. Returns nullopt if the derivation exceeds max_leaves.
std::optional<Derivation> sample_derivation(const Pcfg& g, Rng& rng, std::size_t max_leaves);

}  // namespace hrchunk
