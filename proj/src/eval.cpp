#include "hrchunk/eval.hpp"

#include <cstdio>

#include "hrchunk/error.hpp"

namespace hrchunk {

EvalReport evaluate(std::span<const TagSeq> gold, std::span<const TagSeq> pred,
                    std::span<const std::string> ids) {
  if (gold.size() != pred.size())
    throw Error("evaluate: " + std::to_string(gold.size()) + " gold sentences but " +
                std::to_string(pred.size()) + " predicted");
  EvalReport r;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const auto& g = gold[s];
    const auto& p = pred[s];
    if (g.size() != p.size()) {
      std::string id = s < ids.size() ? ids[s] : "#" + std::to_string(s);
      throw Error("evaluate: sentence " + id + " has " + std::to_string(g.size()) +
                  " gold tags but " + std::to_string(p.size()) + " predicted");
    }
    ChunkSet gs = tags_to_spans(g);
    ChunkSet ps = tags_to_spans(p);
    r.n_gold_spans += gs.size();
    r.n_pred_spans += ps.size();
    // Both lists are sorted by start and disjoint: merge.
    std::size_t a = 0, b = 0;
    while (a < gs.size() && b < ps.size()) {
      if (gs[a] == ps[b]) {
        ++r.n_correct_spans;
        ++a;
        ++b;
      } else if (gs[a].start < ps[b].start || (gs[a].start == ps[b].start && gs[a].end < ps[b].end)) {
        ++a;
      } else {
        ++b;
      }
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i] == Tag::O) continue;
      ++r.n_tokens;
      if (g[i] == p[i]) ++r.n_correct_tags;
    }
  }
  r.precision = r.n_pred_spans ? 100.0 * static_cast<double>(r.n_correct_spans) / static_cast<double>(r.n_pred_spans) : 0.0;
  r.recall = r.n_gold_spans ? 100.0 * static_cast<double>(r.n_correct_spans) / static_cast<double>(r.n_gold_spans) : 0.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  r.tag_accuracy = r.n_tokens ? 100.0 * static_cast<double>(r.n_correct_tags) / static_cast<double>(r.n_tokens) : 0.0;
  return r;
}

std::string format_report(const EvalReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "processed %zu tokens with %zu phrases; found: %zu phrases; correct: %zu.\n"
                "accuracy: %6.2f%%; precision: %6.2f%%; recall: %6.2f%%; FB1: %6.2f\n",
                r.n_tokens, r.n_gold_spans, r.n_pred_spans, r.n_correct_spans, r.tag_accuracy,
                r.precision, r.recall, r.f1);
  return buf;
}

std::string report_key_values(const EvalReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "precision %.2f\nrecall %.2f\nf1 %.2f\ntag_accuracy %.2f\n"
                "gold_spans %zu\npred_spans %zu\ncorrect_spans %zu\n",
                r.precision, r.recall, r.f1, r.tag_accuracy, r.n_gold_spans, r.n_pred_spans,
                r.n_correct_spans);
  return buf;
}

}  // namespace hrchunk
