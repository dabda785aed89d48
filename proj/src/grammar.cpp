#include "hrchunk/grammar.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "hrchunk/error.hpp"
#include "hrchunk/numparse.hpp"
#include "hrchunk/parallel.hpp"
#include "hrchunk/rng.hpp"

namespace hrchunk {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMassTolerance = 1e-9;

double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

// Cell-major chart over spans [i, j] and symbols.
class Chart {
 public:
  Chart(std::size_t n, std::size_t symbols)
      : n_(n), s_(symbols), data_(n * n * symbols, kNegInf) {}
  double* cell(std::size_t i, std::size_t j) { return &data_[(i * n_ + j) * s_]; }
  const double* cell(std::size_t i, std::size_t j) const { return &data_[(i * n_ + j) * s_]; }

 private:
  std::size_t n_, s_;
  std::vector<double> data_;
};

// max over [first, first+count); kNegInf when all are -inf.
double max_of(const double* v, std::size_t count) {
  double m = kNegInf;
  for (std::size_t i = 0; i < count; ++i) m = std::max(m, v[i]);
  return m;
}

void shifted_exp(const double* v, std::size_t count, double shift, std::vector<double>& out) {
  out.resize(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = v[i] == kNegInf ? 0.0 : std::exp(v[i] - shift);
}

void fill_lexical(const Pcfg& g, std::span<const std::size_t> words, Chart& chart) {
  const std::size_t nn = g.num_nonterminals();
  for (std::size_t i = 0; i < words.size(); ++i) {
    double* c = chart.cell(i, i);
    for (std::size_t t = 0; t < g.num_preterminals(); ++t) c[nn + t] = safe_log(g.lexical(t, words[i]));
  }
}

// Inside pass. Each (span, split) term is a log-sum-exp factored through the
// maxima of the two child cells.
Chart inside_chart(const Pcfg& g, std::span<const std::size_t> words) {
  const std::size_t n = words.size();
  const std::size_t S = g.num_symbols();
  const std::size_t N = g.num_nonterminals();
  Chart chart(n, S);
  fill_lexical(g, words, chart);
  std::vector<double> eb, ec;
  auto bin = g.binary_rules();
  for (std::size_t len = 2; len <= n; ++len) {
    for (std::size_t i = 0; i + len <= n; ++i) {
      std::size_t j = i + len - 1;
      double* target = chart.cell(i, j);
      for (std::size_t k = i; k < j; ++k) {
        const double* left = chart.cell(i, k);
        const double* right = chart.cell(k + 1, j);
        double mb = max_of(left, S);
        double mc = max_of(right, S);
        if (mb == kNegInf || mc == kNegInf) continue;
        shifted_exp(left, S, mb, eb);
        shifted_exp(right, S, mc, ec);
        for (std::size_t a = 0; a < N; ++a) {
          double s = 0.0;
          const double* row = &bin[a * S * S];
          for (std::size_t b = 0; b < S; ++b) {
            if (eb[b] == 0.0) continue;
            double inner = 0.0;
            const double* rb = row + b * S;
            for (std::size_t c = 0; c < S; ++c) inner += rb[c] * ec[c];
            s += eb[b] * inner;
          }
          if (s > 0.0) target[a] = logaddexp(target[a], std::log(s) + mb + mc);
        }
      }
    }
  }
  return chart;
}

double root_logprob(const Pcfg& g, const Chart& inside, std::size_t n) {
  const double* top = inside.cell(0, n - 1);
  double z = kNegInf;
  for (std::size_t x = 0; x < g.num_symbols(); ++x) {
    if (g.root(x) <= 0.0 || top[x] == kNegInf) continue;
    z = logaddexp(z, std::log(g.root(x)) + top[x]);
  }
  return z;
}

struct SentenceCounts {
  double loglik = kNegInf;
  std::vector<double> root;
  std::vector<double> binary;
  std::vector<std::pair<std::size_t, double>> lexical;  // (t * |Σ| + w, count)
};

SentenceCounts expected_counts(const Pcfg& g, std::span<const std::size_t> words) {
  SentenceCounts out;
  const std::size_t n = words.size();
  const std::size_t S = g.num_symbols();
  const std::size_t N = g.num_nonterminals();
  const std::size_t V = g.num_terminals();
  Chart in = inside_chart(g, words);
  double z = root_logprob(g, in, n);
  out.loglik = z;
  if (z == kNegInf) return out;

  out.root.assign(S, 0.0);
  out.binary.assign(N * S * S, 0.0);
  Chart outside(n, S);
  {
    const double* top = in.cell(0, n - 1);
    double* o = outside.cell(0, n - 1);
    for (std::size_t x = 0; x < S; ++x) {
      o[x] = safe_log(g.root(x));
      if (o[x] != kNegInf && top[x] != kNegInf) out.root[x] = std::exp(o[x] + top[x] - z);
    }
  }

  auto bin = g.binary_rules();
  std::vector<double> ea, eb, ec, to_left(S), to_right(S);
  for (std::size_t len = n; len >= 2; --len) {
    for (std::size_t i = 0; i + len <= n; ++i) {
      std::size_t j = i + len - 1;
      const double* oa = outside.cell(i, j);
      double ma = max_of(oa, N);
      if (ma == kNegInf) continue;
      shifted_exp(oa, N, ma, ea);
      for (std::size_t k = i; k < j; ++k) {
        const double* left = in.cell(i, k);
        const double* right = in.cell(k + 1, j);
        double mb = max_of(left, S);
        double mc = max_of(right, S);
        shifted_exp(left, S, mb == kNegInf ? 0.0 : mb, eb);
        shifted_exp(right, S, mc == kNegInf ? 0.0 : mc, ec);
        std::fill(to_left.begin(), to_left.end(), 0.0);
        std::fill(to_right.begin(), to_right.end(), 0.0);
        const bool both = mb != kNegInf && mc != kNegInf;
        const double scale = both ? std::exp(ma + mb + mc - z) : 0.0;
        for (std::size_t a = 0; a < N; ++a) {
          if (ea[a] == 0.0) continue;
          const double* row = &bin[a * S * S];
          double* crow = &out.binary[a * S * S];
          for (std::size_t b = 0; b < S; ++b) {
            const double* rb = row + b * S;
            double acc_left = 0.0;
            for (std::size_t c = 0; c < S; ++c) {
              double r = rb[c];
              if (r == 0.0) continue;
              acc_left += r * ec[c];
              to_right[c] += ea[a] * r * eb[b];
              if (both) crow[b * S + c] += scale * ea[a] * eb[b] * ec[c] * r;
            }
            to_left[b] += ea[a] * acc_left;
          }
        }
        if (mc != kNegInf) {
          double* ol = outside.cell(i, k);
          for (std::size_t b = 0; b < S; ++b)
            if (to_left[b] > 0.0) ol[b] = logaddexp(ol[b], std::log(to_left[b]) + ma + mc);
        }
        if (mb != kNegInf) {
          double* orr = outside.cell(k + 1, j);
          for (std::size_t c = 0; c < S; ++c)
            if (to_right[c] > 0.0) orr[c] = logaddexp(orr[c], std::log(to_right[c]) + ma + mb);
        }
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const double* o = outside.cell(i, i);
    const double* c = in.cell(i, i);
    for (std::size_t t = 0; t < g.num_preterminals(); ++t) {
      double v = o[N + t] + c[N + t];
      if (v == kNegInf || std::isnan(v)) continue;
      double cnt = std::exp(v - z);
      if (cnt > 0.0) out.lexical.emplace_back(t * V + words[i], cnt);
    }
  }
  return out;
}

void check_range(double p, const std::string& what) {
  if (!(p >= 0.0 && p <= 1.0))
    throw GrammarError("probability out of range [0,1] for " + what + ": " + std::to_string(p));
}

void check_mass(double mass, const std::string& lhs) {
  if (std::abs(mass - 1.0) > kMassTolerance) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", mass);
    throw GrammarError("rules of " + lhs + " have total probability " + buf + ", expected 1");
  }
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void dirichlet_row(Rng& rng, std::span<double> row) {
  double total = 0.0;
  for (double& v : row) total += (v = rng.exponential());
  for (double& v : row) v /= total;
}

std::size_t sample_index(Rng& rng, std::span<const double> probs) {
  double u = rng.uniform();
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last = i;
    acc += probs[i];
    if (u < acc) return i;
  }
  return last;
}

}  // namespace

Pcfg::Pcfg(std::vector<std::string> nonterminals, std::vector<std::string> preterminals,
           std::vector<std::string> terminals)
    : nonterminals_(std::move(nonterminals)),
      preterminals_(std::move(preterminals)),
      terminals_(std::move(terminals)) {
  for (std::size_t i = 0; i < terminals_.size(); ++i) {
    if (!terminal_ids_.emplace(terminals_[i], i).second)
      throw GrammarError("duplicate terminal '" + terminals_[i] + "'");
  }
  for (std::size_t i = 0; i < num_symbols(); ++i) {
    if (!symbol_ids_.emplace(symbol_name(i), i).second)
      throw GrammarError("symbol '" + symbol_name(i) +
                         "' is declared twice (nonterminals and preterminals must be disjoint)");
  }
  const std::size_t s = num_symbols();
  root_.assign(s, 0.0);
  binary_.assign(nonterminals_.size() * s * s, 0.0);
  lexical_.assign(preterminals_.size() * terminals_.size(), 0.0);
}

const std::string& Pcfg::symbol_name(std::size_t sym) const {
  return sym < nonterminals_.size() ? nonterminals_[sym] : preterminals_[sym - nonterminals_.size()];
}

std::optional<std::size_t> Pcfg::terminal_index(std::string_view word) const {
  auto it = terminal_ids_.find(std::string(word));
  if (it == terminal_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Pcfg::symbol_index(std::string_view name) const {
  auto it = symbol_ids_.find(std::string(name));
  if (it == symbol_ids_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> Pcfg::encode(std::span<const std::string> words,
                                      const std::optional<std::string>& unk) const {
  std::optional<std::size_t> unk_id;
  if (unk) {
    unk_id = terminal_index(*unk);
    if (!unk_id) throw VocabularyError(*unk);
  }
  std::vector<std::size_t> ids;
  ids.reserve(words.size());
  for (const auto& w : words) {
    auto id = terminal_index(w);
    if (!id) {
      if (!unk_id) throw VocabularyError(w);
      id = unk_id;
    }
    ids.push_back(*id);
  }
  return ids;
}

void validate(const Pcfg& g) {
  const std::size_t S = g.num_symbols();
  double mass = 0.0;
  for (std::size_t x = 0; x < S; ++x) {
    check_range(g.root(x), "ROOT " + g.symbol_name(x));
    mass += g.root(x);
  }
  check_mass(mass, "the start symbol");
  for (std::size_t a = 0; a < g.num_nonterminals(); ++a) {
    mass = 0.0;
    for (std::size_t b = 0; b < S; ++b)
      for (std::size_t c = 0; c < S; ++c) {
        double p = g.binary(a, b, c);
        if (!(p >= 0.0 && p <= 1.0))
          check_range(p, "BIN " + g.symbol_name(a) + " " + g.symbol_name(b) + " " + g.symbol_name(c));
        mass += p;
      }
    check_mass(mass, "nonterminal " + g.symbol_name(a));
  }
  for (std::size_t t = 0; t < g.num_preterminals(); ++t) {
    mass = 0.0;
    for (std::size_t w = 0; w < g.num_terminals(); ++w) {
      double p = g.lexical(t, w);
      if (!(p >= 0.0 && p <= 1.0))
        check_range(p, "LEX " + g.preterminals()[t] + " " + g.terminals()[w]);
      mass += p;
    }
    check_mass(mass, "preterminal " + g.preterminals()[t]);
  }
}

Pcfg read_grammar(std::string_view text) {
  struct Line {
    std::size_t no;
    std::vector<std::string> fields;
  };
  std::vector<Line> lines;
  std::vector<std::string> nts, pts, terms;
  std::set<std::string> seen_nt, seen_pt, seen_t;

  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t no = 0;
  while (std::getline(in, raw)) {
    ++no;
    std::istringstream ls(raw);
    Line line{no, {}};
    for (std::string f; ls >> f;) line.fields.push_back(f);
    if (line.fields.empty() || line.fields[0][0] == '#') continue;
    const auto& kind = line.fields[0];
    std::size_t want = kind == "ROOT" ? 3 : kind == "BIN" ? 5 : kind == "LEX" ? 4 : 0;
    if (want == 0) throw ParseError("unknown rule kind '" + kind + "'", no);
    // Trailing comment after a complete rule; '#' alone may still be a terminal.
    if (line.fields.size() > want && line.fields[want][0] == '#') line.fields.resize(want);
    if (line.fields.size() != want)
      throw ParseError(kind + " rule needs " + std::to_string(want - 1) + " fields", no);
    if (kind == "BIN" && seen_nt.insert(line.fields[1]).second) nts.push_back(line.fields[1]);
    if (kind == "LEX") {
      if (seen_pt.insert(line.fields[1]).second) pts.push_back(line.fields[1]);
      if (seen_t.insert(line.fields[2]).second) terms.push_back(line.fields[2]);
    }
    lines.push_back(std::move(line));
  }

  Pcfg g(nts, pts, terms);
  auto sym = [&](const std::string& name, std::size_t line_no) {
    auto id = g.symbol_index(name);
    if (!id) throw ParseError("symbol '" + name + "' has no BIN or LEX rules", line_no);
    return *id;
  };
  auto prob = [](const std::string& s, std::size_t line_no) {
    auto p = parse_double(s);
    if (!p) throw ParseError("bad probability '" + s + "'", line_no);
    return *p;
  };
  for (const auto& line : lines) {
    const auto& f = line.fields;
    if (f[0] == "ROOT") {
      g.root(sym(f[1], line.no)) += prob(f[2], line.no);
    } else if (f[0] == "BIN") {
      std::size_t a = sym(f[1], line.no);
      if (g.is_preterminal(a)) throw ParseError("'" + f[1] + "' is a preterminal", line.no);
      g.binary(a, sym(f[2], line.no), sym(f[3], line.no)) += prob(f[4], line.no);
    } else {
      std::size_t t = sym(f[1], line.no);
      g.lexical(t - g.num_nonterminals(), *g.terminal_index(f[2])) += prob(f[3], line.no);
    }
  }
  validate(g);
  return g;
}

std::string write_grammar(const Pcfg& g) {
  std::string out;
  const std::size_t S = g.num_symbols();
  for (std::size_t x = 0; x < S; ++x)
    if (g.root(x) != 0.0) out += "ROOT " + g.symbol_name(x) + " " + fmt17(g.root(x)) + "\n";
  for (std::size_t a = 0; a < g.num_nonterminals(); ++a)
    for (std::size_t b = 0; b < S; ++b)
      for (std::size_t c = 0; c < S; ++c)
        if (double p = g.binary(a, b, c); p != 0.0)
          out += "BIN " + g.symbol_name(a) + " " + g.symbol_name(b) + " " + g.symbol_name(c) + " " +
                 fmt17(p) + "\n";
  for (std::size_t t = 0; t < g.num_preterminals(); ++t)
    for (std::size_t w = 0; w < g.num_terminals(); ++w)
      if (double p = g.lexical(t, w); p != 0.0)
        out += "LEX " + g.preterminals()[t] + " " + g.terminals()[w] + " " + fmt17(p) + "\n";
  return out;
}

Pcfg random_pcfg(std::uint64_t seed, std::size_t num_nonterminals, std::size_t num_preterminals,
                 std::size_t num_terminals) {
  std::vector<std::string> terms;
  for (std::size_t i = 0; i < num_terminals; ++i) terms.push_back("w" + std::to_string(i));
  return random_pcfg(seed, num_nonterminals, num_preterminals, std::move(terms));
}

Pcfg random_pcfg(std::uint64_t seed, std::size_t num_nonterminals, std::size_t num_preterminals,
                 std::vector<std::string> terminals) {
  if (num_nonterminals == 0 || num_preterminals == 0 || terminals.empty())
    throw GrammarError("random_pcfg: all sizes must be at least 1");
  std::vector<std::string> nts, pts;
  for (std::size_t i = 0; i < num_nonterminals; ++i) nts.push_back("N" + std::to_string(i));
  for (std::size_t i = 0; i < num_preterminals; ++i) pts.push_back("T" + std::to_string(i));
  Pcfg g(std::move(nts), std::move(pts), std::move(terminals));
  Rng rng(seed);
  const std::size_t S = g.num_symbols();
  dirichlet_row(rng, g.root_rules().subspan(0, num_nonterminals));
  for (std::size_t a = 0; a < num_nonterminals; ++a)
    dirichlet_row(rng, g.binary_rules().subspan(a * S * S, S * S));
  for (std::size_t t = 0; t < num_preterminals; ++t)
    dirichlet_row(rng, g.lexical_rules().subspan(t * g.num_terminals(), g.num_terminals()));
  return g;
}

double inside_logprob(const Pcfg& g, std::span<const std::size_t> words) {
  if (words.empty()) return kNegInf;
  Chart chart = inside_chart(g, words);
  return root_logprob(g, chart, words.size());
}

double inside_logprob(const Pcfg& g, std::span<const std::string> words) {
  auto ids = g.encode(words);
  return inside_logprob(g, ids);
}

ViterbiParse viterbi_cyk(const Pcfg& g, std::span<const std::size_t> words,
                         std::span<const std::string> forms) {
  const std::size_t n = words.size();
  if (n == 0) throw NoParseError("empty sentence");
  const std::size_t S = g.num_symbols();
  const std::size_t N = g.num_nonterminals();

  std::vector<double> log_bin(g.binary_rules().size());
  for (std::size_t i = 0; i < log_bin.size(); ++i) log_bin[i] = safe_log(g.binary_rules()[i]);

  struct Back {
    std::uint32_t split = 0, left = 0, right = 0;
  };
  Chart best(n, S);
  std::vector<Back> back(n * n * S);
  auto back_at = [&](std::size_t i, std::size_t j, std::size_t x) -> Back& {
    return back[(i * n + j) * S + x];
  };
  fill_lexical(g, words, best);

  for (std::size_t len = 2; len <= n; ++len) {
    for (std::size_t i = 0; i + len <= n; ++i) {
      std::size_t j = i + len - 1;
      double* target = best.cell(i, j);
      for (std::size_t a = 0; a < N; ++a) {
        double top = kNegInf;
        Back bp;
        const double* row = &log_bin[a * S * S];
        for (std::size_t k = i; k < j; ++k) {
          const double* left = best.cell(i, k);
          const double* right = best.cell(k + 1, j);
          for (std::size_t b = 0; b < S; ++b) {
            if (left[b] == kNegInf) continue;
            for (std::size_t c = 0; c < S; ++c) {
              double r = row[b * S + c];
              if (r == kNegInf || right[c] == kNegInf) continue;
              double score = r + left[b] + right[c];
              if (score > top) {
                top = score;
                bp = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(b),
                      static_cast<std::uint32_t>(c)};
              }
            }
          }
        }
        target[a] = top;
        back_at(i, j, a) = bp;
      }
    }
  }

  const double* top = best.cell(0, n - 1);
  double best_score = kNegInf;
  std::size_t best_sym = 0;
  for (std::size_t x = 0; x < S; ++x) {
    if (g.root(x) <= 0.0 || top[x] == kNegInf) continue;
    double score = std::log(g.root(x)) + top[x];
    if (score > best_score) {
      best_score = score;
      best_sym = x;
    }
  }
  if (best_score == kNegInf) throw NoParseError("sentence has no parse under the grammar");

  ViterbiParse result;
  result.logprob = best_score;
  std::function<BinaryTree::NodeId(std::size_t, std::size_t, std::size_t)> build =
      [&](std::size_t i, std::size_t j, std::size_t x) -> BinaryTree::NodeId {
    if (i == j) {
      std::string word = i < forms.size() ? forms[i] : g.terminals()[words[i]];
      result.symbols.push_back(x);
      return result.tree.add_leaf(std::move(word));
    }
    const Back& bp = back_at(i, j, x);
    auto l = build(i, bp.split, bp.left);
    auto r = build(bp.split + 1, j, bp.right);
    result.symbols.push_back(x);
    return result.tree.add_internal(l, r);
  };
  result.tree.set_root(build(0, n - 1, best_sym));
  return result;
}

ViterbiParse viterbi_cyk(const Pcfg& g, std::span<const std::string> words) {
  auto ids = g.encode(words);
  return viterbi_cyk(g, ids, words);
}

EmResult em_step(const Pcfg& g, std::span<const std::vector<std::size_t>> corpus, unsigned threads) {
  const std::size_t S = g.num_symbols();
  const std::size_t N = g.num_nonterminals();
  std::vector<double> root(S, 0.0), binary(N * S * S, 0.0), lexical(g.lexical_rules().size(), 0.0);
  EmResult result;
  result.loglik = 0.0;

  constexpr std::size_t kBlock = 64;
  std::vector<SentenceCounts> block;
  for (std::size_t start = 0; start < corpus.size(); start += kBlock) {
    std::size_t count = std::min(kBlock, corpus.size() - start);
    block.assign(count, SentenceCounts{});
    parallel_for(count, threads, [&](std::size_t i) {
      if (!corpus[start + i].empty()) block[i] = expected_counts(g, corpus[start + i]);
    });
    for (const auto& sc : block) {
      if (sc.loglik == kNegInf) {
        ++result.skipped;
        continue;
      }
      ++result.used;
      result.loglik += sc.loglik;
      for (std::size_t x = 0; x < S; ++x) root[x] += sc.root[x];
      for (std::size_t r = 0; r < binary.size(); ++r) binary[r] += sc.binary[r];
      for (const auto& [idx, v] : sc.lexical) lexical[idx] += v;
    }
  }
  if (result.used == 0) throw Error("em_step: no sentence in the corpus has a parse");

  // Left-hand sides with zero expected count keep their old distribution.
  Pcfg next = g;
  auto renormalize = [](std::span<const double> counts, std::span<double> target) {
    double total = 0.0;
    for (double c : counts) total += c;
    if (total <= 0.0) return;
    for (std::size_t i = 0; i < counts.size(); ++i) target[i] = counts[i] / total;
  };
  renormalize(root, next.root_rules());
  for (std::size_t a = 0; a < N; ++a)
    renormalize(std::span<const double>(binary).subspan(a * S * S, S * S),
                next.binary_rules().subspan(a * S * S, S * S));
  const std::size_t V = g.num_terminals();
  for (std::size_t t = 0; t < g.num_preterminals(); ++t)
    renormalize(std::span<const double>(lexical).subspan(t * V, V),
                next.lexical_rules().subspan(t * V, V));
  result.grammar = std::move(next);
  return result;
}

std::optional<Derivation> sample_derivation(const Pcfg& g, Rng& rng, std::size_t max_leaves) {
  Derivation d;
  const std::size_t S = g.num_symbols();
  bool overflow = false;
  std::function<BinaryTree::NodeId(std::size_t)> expand = [&](std::size_t x) -> BinaryTree::NodeId {
    if (overflow) return BinaryTree::kNone;
    if (g.is_preterminal(x)) {
      if (d.tree.leaf_count() >= max_leaves) {
        overflow = true;
        return BinaryTree::kNone;
      }
      std::size_t t = x - g.num_nonterminals();
      std::size_t w = sample_index(
          rng, g.lexical_rules().subspan(t * g.num_terminals(), g.num_terminals()));
      d.symbols.push_back(x);
      return d.tree.add_leaf(g.terminals()[w]);
    }
    std::size_t r = sample_index(rng, g.binary_rules().subspan(x * S * S, S * S));
    auto l = expand(r / S);
    if (overflow) return BinaryTree::kNone;
    auto rr = expand(r % S);
    if (overflow) return BinaryTree::kNone;
    d.symbols.push_back(x);
    return d.tree.add_internal(l, rr);
  };
  auto root = expand(sample_index(rng, g.root_rules()));
  if (overflow) return std::nullopt;
  d.tree.set_root(root);
  return d;
}

}  // namespace hrchunk
