#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hrchunk {

struct Token {
  std::string form;
  std::optional<std::string> pos;
};

struct Sentence {
  std::string id;
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  std::vector<std::string> forms() const;
};

enum class Tag : std::uint8_t { B, I, O };

using TagSeq = std::vector<Tag>;

// Per-token exclusion mask; true marks an O token that is fed to models but
// never chunked, scored, or trained on.
using OMask = std::vector<bool>;

struct ChunkSpan {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive

  std::size_t length() const { return end - start + 1; }
  auto operator<=>(const ChunkSpan&) const = default;
};

using ChunkSet = std::vector<ChunkSpan>;

struct LabeledSentence {
  Sentence sentence;
  TagSeq tags;
};

struct ConllReadResult {
  std::vector<LabeledSentence> sentences;
  // Number of I tags rewritten to B because they followed O or opened a sentence.
  std::size_t normalized = 0;
};

char tag_char(Tag t);
Tag tag_from_char(char c);
std::string tags_to_string(const TagSeq& tags);  // "BIIO"
TagSeq tags_from_string(std::string_view s);

// Lines are `word [POS] chunktag`; blank lines separate sentences. Lines that
// start with "## " are provenance comments and are skipped. Sentence ids are
// assigned as "s<index>" in file order.
ConllReadResult read_conll2000(std::string_view text);

// One `word [POS] TAG` line per token with single spaces, a blank line after
// every sentence. Tags are written untyped (B, I, O).
std::string write_conll2000(std::span<const LabeledSentence> sentences);

// Checks the TagSeq invariants: the first non-O tag is B and no I follows an O.
bool is_valid_tags(const TagSeq& tags);

// Rewrites I after O (or at the start) to B. Returns the number of rewrites.
std::size_t normalize_tags(TagSeq& tags);

OMask o_mask(const TagSeq& tags);

// Forces masked positions to O, then normalizes the result.
TagSeq apply_mask(TagSeq tags, const OMask& mask);

ChunkSet tags_to_spans(const TagSeq& tags);

// Throws CoverageError when a token outside the mask is uncovered, a masked
// token is covered, two spans overlap, or a span leaves the sentence.
TagSeq spans_to_tags(const ChunkSet& chunks, std::size_t n, const OMask& mask);

// True when the spans are sorted, pairwise disjoint and cover 0..n-1 exactly.
bool is_partition(const ChunkSet& chunks, std::size_t n);

}  // namespace hrchunk
