#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hrchunk/corpus.hpp"

namespace hrchunk {

// conlleval-style scores over untyped chunks. Percentages are in [0, 100].
struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double tag_accuracy = 0.0;
  std::size_t n_gold_spans = 0;
  std::size_t n_pred_spans = 0;
  std::size_t n_correct_spans = 0;
  std::size_t n_tokens = 0;  // non-O tokens scored for tag accuracy
  std::size_t n_correct_tags = 0;
};

// Micro-averaged: span and tag counts are summed over sentences before any
// ratio is taken. Throws Error naming the sentence when lengths differ.
EvalReport evaluate(std::span<const TagSeq> gold, std::span<const TagSeq> pred,
                    std::span<const std::string> ids = {});

// Fixed-format human report, two decimals.
std::string format_report(const EvalReport& r);
// `key value` lines.
std::string report_key_values(const EvalReport& r);

}  // namespace hrchunk
