#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hrchunk/corpus.hpp"
#include "hrchunk/embeddings.hpp"
#include "hrchunk/params.hpp"

namespace hrchunk {

// ---------------------------------------------------------------------------
// PMI chunker

struct PmiCounts {
  std::unordered_map<std::string, std::size_t> unigrams;
  std::map<std::pair<std::string, std::string>, std::size_t> bigrams;
  std::size_t total_tokens = 0;
  std::size_t total_bigrams = 0;
  bool lowercase = false;
};

struct PmiModel {
  PmiCounts counts;
  double tau = 0.0;
};

// Raw counts; add-one smoothing is applied at query time.
PmiCounts pmi_fit(std::span<const Sentence> corpus, bool lowercase = false);

// log p(a,b) - log p(a) - log p(b) with add-one smoothed unigram and bigram
// estimates over a vocabulary of the seen types plus one unseen type.
double pmi_score(const PmiCounts& counts, const std::string& a, const std::string& b);

// B at position 0 and wherever PMI(w[i-1], w[i]) < tau; masked positions O.
TagSeq pmi_chunk(const PmiModel& m, const Sentence& s, const OMask& mask);

// ---------------------------------------------------------------------------
// Baum-Welch HMM chunker

struct HmmModel {
  std::size_t num_states = 2;
  Vector initial;                       // K
  Matrix transition;                    // K x K, row = from
  Matrix emission;                      // K x V
  std::vector<std::string> vocabulary;  // emission columns
  std::vector<Tag> state_tags;          // B or I per state
  bool lowercase = false;

  std::size_t word_index(const std::string& form) const;  // npos when unseen
};

struct HmmFitResult {
  HmmModel model;
  std::vector<double> loglik;  // corpus log-likelihood before each update
};

// Forward-backward in log space, deterministic per seed. K < 2 is rejected.
HmmFitResult hmm_fit(std::span<const Sentence> corpus, std::size_t num_states, std::uint64_t seed,
                     int iterations, bool lowercase = false);

// Viterbi state path (unseen tokens emit with probability 1e-10).
std::vector<std::size_t> hmm_viterbi(const HmmModel& m, const Sentence& s);

// Viterbi states mapped through state_tags; the result is normalized and
// masked positions are O.
TagSeq hmm_chunk(const HmmModel& m, const Sentence& s, const OMask& mask);

// Chooses the state -> tag map with the highest phrase F1 on `valid`.
// Ties keep the map with the smaller code (state k is I iff bit k is set).
std::vector<Tag> hmm_select_state_tags(const HmmModel& m, std::span<const LabeledSentence> valid);

// ---------------------------------------------------------------------------
// LM chunker: thresholded cosine similarity of consecutive token vectors.

TagSeq lm_chunk(const EmbeddingProvider& provider, const Sentence& s, double tau, const OMask& mask,
                std::size_t* zero_vectors = nullptr);

// ---------------------------------------------------------------------------

// Inclusive grid "lo:hi:step".
std::vector<double> parse_grid(const std::string& spec);

struct GridResult {
  double best_value = 0.0;
  double best_f1 = -1.0;
  std::vector<std::pair<double, double>> scores;  // (value, f1)
};

// Picks the value with the highest F1; ties keep the earliest grid value.
GridResult grid_search(const std::vector<double>& grid, const std::function<double(double)>& f1_of);

// Plain-text key-value model files shared by all baselines.
std::string write_pmi_model(const PmiModel& m);
std::string write_hmm_model(const HmmModel& m);
std::string write_lm_model(const ProviderSpec& spec, double tau);

struct BaselineModel {
  std::string kind;  // "pmi", "hmm" or "lm"
  PmiModel pmi;
  HmmModel hmm;
  ProviderSpec lm_spec;
  double lm_tau = 0.0;
};

BaselineModel read_baseline_model(std::string_view text);

}  // namespace hrchunk
