#include "hrchunk/corpus.hpp"

#include <sstream>

#include "hrchunk/error.hpp"

namespace hrchunk {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

Tag parse_chunk_tag(std::string_view field, std::size_t line_no) {
  if (field == "O") return Tag::O;
  if (!field.empty() && (field[0] == 'B' || field[0] == 'I') &&
      (field.size() == 1 || field[1] == '-')) {
    return field[0] == 'B' ? Tag::B : Tag::I;
  }
  throw ParseError("bad chunk tag '" + std::string(field) + "'", line_no);
}

}  // namespace

std::vector<std::string> Sentence::forms() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.form);
  return out;
}

char tag_char(Tag t) {
  switch (t) {
    case Tag::B: return 'B';
    case Tag::I: return 'I';
    case Tag::O: return 'O';
  }
  return '?';
}

Tag tag_from_char(char c) {
  switch (c) {
    case 'B': return Tag::B;
    case 'I': return Tag::I;
    case 'O': return Tag::O;
  }
  throw Error(std::string("bad tag character '") + c + "'");
}

std::string tags_to_string(const TagSeq& tags) {
  std::string s;
  s.reserve(tags.size());
  for (Tag t : tags) s.push_back(tag_char(t));
  return s;
}

TagSeq tags_from_string(std::string_view s) {
  TagSeq t;
  t.reserve(s.size());
  for (char c : s) t.push_back(tag_from_char(c));
  return t;
}

ConllReadResult read_conll2000(std::string_view text) {
  ConllReadResult result;
  LabeledSentence current;
  std::size_t line_no = 0;

  auto flush = [&] {
    if (current.sentence.tokens.empty()) return;
    current.sentence.id = "s" + std::to_string(result.sentences.size());
    result.normalized += normalize_tags(current.tags);
    result.sentences.push_back(std::move(current));
    current = LabeledSentence{};
  };

  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    ++line_no;
    pos = nl + 1;
    if (line.starts_with("## ")) continue;
    auto fields = split_ws(line);
    if (fields.empty()) {
      flush();
      if (nl == text.size()) break;
      continue;
    }
    if (fields.size() != 2 && fields.size() != 3) {
      throw ParseError("expected 'word [POS] chunktag', got " + std::to_string(fields.size()) +
                           " fields",
                       line_no);
    }
    Token tok{std::string(fields[0]), std::nullopt};
    if (fields.size() == 3) tok.pos = std::string(fields[1]);
    current.tags.push_back(parse_chunk_tag(fields.back(), line_no));
    current.sentence.tokens.push_back(std::move(tok));
    if (nl == text.size()) break;
  }
  flush();
  return result;
}

std::string write_conll2000(std::span<const LabeledSentence> sentences) {
  std::ostringstream out;
  for (const auto& ls : sentences) {
    if (ls.tags.size() != ls.sentence.size())
      throw Error("sentence " + ls.sentence.id + ": tag count differs from token count");
    for (std::size_t i = 0; i < ls.sentence.size(); ++i) {
      const auto& tok = ls.sentence.tokens[i];
      out << tok.form << ' ';
      if (tok.pos) out << *tok.pos << ' ';
      out << tag_char(ls.tags[i]) << '\n';
    }
    out << '\n';
  }
  return out.str();
}

bool is_valid_tags(const TagSeq& tags) {
  Tag prev = Tag::O;
  for (Tag t : tags) {
    if (t == Tag::I && prev == Tag::O) return false;
    prev = t;
  }
  return true;
}

std::size_t normalize_tags(TagSeq& tags) {
  std::size_t fixed = 0;
  Tag prev = Tag::O;
  for (Tag& t : tags) {
    if (t == Tag::I && prev == Tag::O) {
      t = Tag::B;
      ++fixed;
    }
    prev = t;
  }
  return fixed;
}

OMask o_mask(const TagSeq& tags) {
  OMask mask(tags.size());
  for (std::size_t i = 0; i < tags.size(); ++i) mask[i] = tags[i] == Tag::O;
  return mask;
}

TagSeq apply_mask(TagSeq tags, const OMask& mask) {
  for (std::size_t i = 0; i < tags.size() && i < mask.size(); ++i)
    if (mask[i]) tags[i] = Tag::O;
  normalize_tags(tags);
  return tags;
}

ChunkSet tags_to_spans(const TagSeq& tags) {
  ChunkSet spans;
  bool open = false;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    switch (tags[i]) {
      case Tag::B:
        spans.push_back({i, i});
        open = true;
        break;
      case Tag::I:
        if (open) {
          spans.back().end = i;
        } else {
          spans.push_back({i, i});
          open = true;
        }
        break;
      case Tag::O:
        open = false;
        break;
    }
  }
  return spans;
}

TagSeq spans_to_tags(const ChunkSet& chunks, std::size_t n, const OMask& mask) {
  constexpr Tag kUnset = static_cast<Tag>(255);
  TagSeq tags(n, kUnset);
  for (std::size_t i = 0; i < n && i < mask.size(); ++i)
    if (mask[i]) tags[i] = Tag::O;
  for (const auto& c : chunks) {
    if (c.start > c.end || c.end >= n)
      throw CoverageError("span [" + std::to_string(c.start) + "," + std::to_string(c.end) +
                              "] lies outside a sentence of length " + std::to_string(n),
                          c.end);
    for (std::size_t i = c.start; i <= c.end; ++i) {
      if (tags[i] != kUnset)
        throw CoverageError("token " + std::to_string(i) + " is covered twice or masked", i);
      tags[i] = i == c.start ? Tag::B : Tag::I;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (tags[i] == kUnset)
      throw CoverageError("token " + std::to_string(i) + " is not covered by any span", i);
  return tags;
}

bool is_partition(const ChunkSet& chunks, std::size_t n) {
  std::size_t next = 0;
  for (const auto& c : chunks) {
    if (c.start != next || c.end < c.start || c.end >= n) return false;
    next = c.end + 1;
  }
  return next == n;
}

}  // namespace hrchunk
