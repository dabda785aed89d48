#include "hrchunk/baselines.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "hrchunk/error.hpp"
#include "hrchunk/numparse.hpp"
#include "hrchunk/eval.hpp"
#include "hrchunk/rng.hpp"

namespace hrchunk {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kEmissionFloor = 1e-10;

std::string fold(const std::string& s, bool lowercase) {
  if (!lowercase) return s;
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

double logsumexp(const double* v, std::size_t n) {
  double m = kNegInf;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void random_row(Rng& rng, double* row, std::size_t n) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += (row[i] = rng.uniform(0.5, 1.5));
  for (std::size_t i = 0; i < n; ++i) row[i] /= total;
}

}  // namespace

// ---------------------------------------------------------------------------

PmiCounts pmi_fit(std::span<const Sentence> corpus, bool lowercase) {
  if (corpus.empty()) throw Error("pmi_fit: empty corpus");
  PmiCounts c;
  c.lowercase = lowercase;
  for (const auto& s : corpus) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      std::string w = fold(s.tokens[i].form, lowercase);
      ++c.unigrams[w];
      ++c.total_tokens;
      if (i > 0) {
        ++c.bigrams[{fold(s.tokens[i - 1].form, lowercase), w}];
        ++c.total_bigrams;
      }
    }
  }
  return c;
}

double pmi_score(const PmiCounts& c, const std::string& a_raw, const std::string& b_raw) {
  const std::string a = fold(a_raw, c.lowercase);
  const std::string b = fold(b_raw, c.lowercase);
  const double v = static_cast<double>(c.unigrams.size() + 1);
  auto uni = [&](const std::string& w) {
    auto it = c.unigrams.find(w);
    double n = it == c.unigrams.end() ? 0.0 : static_cast<double>(it->second);
    return (n + 1.0) / (static_cast<double>(c.total_tokens) + v);
  };
  auto it = c.bigrams.find({a, b});
  double nab = it == c.bigrams.end() ? 0.0 : static_cast<double>(it->second);
  double pab = (nab + 1.0) / (static_cast<double>(c.total_bigrams) + v * v);
  return std::log(pab) - std::log(uni(a)) - std::log(uni(b));
}

TagSeq pmi_chunk(const PmiModel& m, const Sentence& s, const OMask& mask) {
  TagSeq tags(s.size(), Tag::I);
  if (!tags.empty()) tags[0] = Tag::B;
  for (std::size_t i = 1; i < s.size(); ++i)
    if (pmi_score(m.counts, s.tokens[i - 1].form, s.tokens[i].form) < m.tau) tags[i] = Tag::B;
  return apply_mask(std::move(tags), mask);
}

// ---------------------------------------------------------------------------

std::size_t HmmModel::word_index(const std::string& form) const {
  std::string w = fold(form, lowercase);
  auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), w);
  if (it == vocabulary.end() || *it != w) return std::string::npos;
  return static_cast<std::size_t>(it - vocabulary.begin());
}

HmmFitResult hmm_fit(std::span<const Sentence> corpus, std::size_t num_states, std::uint64_t seed,
                     int iterations, bool lowercase) {
  if (num_states < 2) throw Error("hmm_fit: at least 2 hidden states are needed to express B and I");
  if (corpus.empty()) throw Error("hmm_fit: empty corpus");
  const std::size_t K = num_states;

  HmmModel m;
  m.num_states = K;
  m.lowercase = lowercase;
  for (const auto& s : corpus)
    for (const auto& t : s.tokens) m.vocabulary.push_back(fold(t.form, lowercase));
  std::sort(m.vocabulary.begin(), m.vocabulary.end());
  m.vocabulary.erase(std::unique(m.vocabulary.begin(), m.vocabulary.end()), m.vocabulary.end());
  const std::size_t V = m.vocabulary.size();

  std::vector<std::vector<std::size_t>> encoded;
  encoded.reserve(corpus.size());
  for (const auto& s : corpus) {
    std::vector<std::size_t> ids;
    for (const auto& t : s.tokens) ids.push_back(m.word_index(t.form));
    if (!ids.empty()) encoded.push_back(std::move(ids));
  }
  if (encoded.empty()) throw Error("hmm_fit: corpus has no tokens");

  Rng rng(seed);
  m.initial.resize(static_cast<Eigen::Index>(K));
  m.transition.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
  m.emission.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(V));
  {
    std::vector<double> row(std::max(K, V));
    random_row(rng, row.data(), K);
    for (std::size_t k = 0; k < K; ++k) m.initial[static_cast<Eigen::Index>(k)] = row[k];
    for (std::size_t j = 0; j < K; ++j) {
      random_row(rng, row.data(), K);
      for (std::size_t k = 0; k < K; ++k) m.transition(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = row[k];
    }
    for (std::size_t k = 0; k < K; ++k) {
      random_row(rng, row.data(), V);
      for (std::size_t w = 0; w < V; ++w) m.emission(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(w)) = row[w];
    }
  }
  m.state_tags.assign(K, Tag::I);
  m.state_tags[0] = Tag::B;

  HmmFitResult result;
  std::vector<double> log_a(K * K), log_b(K * V), log_pi(K);
  std::vector<double> alpha, beta, buf(K);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t j = 0; j < K; ++j) {
      log_pi[j] = safe_log(m.initial[static_cast<Eigen::Index>(j)]);
      for (std::size_t k = 0; k < K; ++k)
        log_a[j * K + k] = safe_log(m.transition(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)));
      for (std::size_t w = 0; w < V; ++w)
        log_b[j * V + w] = safe_log(m.emission(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(w)));
    }
    Vector pi_counts = Vector::Zero(static_cast<Eigen::Index>(K));
    Matrix a_counts = Matrix::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
    Matrix b_counts = Matrix::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(V));
    double total_ll = 0.0;

    for (const auto& obs : encoded) {
      const std::size_t T = obs.size();
      alpha.assign(T * K, kNegInf);
      beta.assign(T * K, kNegInf);
      for (std::size_t k = 0; k < K; ++k) alpha[k] = log_pi[k] + log_b[k * V + obs[0]];
      for (std::size_t t = 1; t < T; ++t)
        for (std::size_t k = 0; k < K; ++k) {
          for (std::size_t j = 0; j < K; ++j) buf[j] = alpha[(t - 1) * K + j] + log_a[j * K + k];
          alpha[t * K + k] = logsumexp(buf.data(), K) + log_b[k * V + obs[t]];
        }
      for (std::size_t k = 0; k < K; ++k) beta[(T - 1) * K + k] = 0.0;
      for (std::size_t t = T - 1; t-- > 0;)
        for (std::size_t j = 0; j < K; ++j) {
          for (std::size_t k = 0; k < K; ++k)
            buf[k] = log_a[j * K + k] + log_b[k * V + obs[t + 1]] + beta[(t + 1) * K + k];
          beta[t * K + j] = logsumexp(buf.data(), K);
        }
      const double ll = logsumexp(&alpha[(T - 1) * K], K);
      if (ll == kNegInf) continue;
      total_ll += ll;
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t k = 0; k < K; ++k) {
          double g = std::exp(alpha[t * K + k] + beta[t * K + k] - ll);
          if (t == 0) pi_counts[static_cast<Eigen::Index>(k)] += g;
          b_counts(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(obs[t])) += g;
        }
      for (std::size_t t = 0; t + 1 < T; ++t)
        for (std::size_t j = 0; j < K; ++j) {
          if (alpha[t * K + j] == kNegInf) continue;
          for (std::size_t k = 0; k < K; ++k) {
            double lx = alpha[t * K + j] + log_a[j * K + k] + log_b[k * V + obs[t + 1]] +
                        beta[(t + 1) * K + k] - ll;
            if (lx != kNegInf) a_counts(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) += std::exp(lx);
          }
        }
    }
    result.loglik.push_back(total_ll);

    // Rows without expected counts keep their previous distribution.
    if (double s = pi_counts.sum(); s > 0.0) m.initial = pi_counts / s;
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(K); ++j) {
      if (double s = a_counts.row(j).sum(); s > 0.0) m.transition.row(j) = a_counts.row(j) / s;
      if (double s = b_counts.row(j).sum(); s > 0.0) m.emission.row(j) = b_counts.row(j) / s;
    }
  }
  result.model = std::move(m);
  return result;
}

std::vector<std::size_t> hmm_viterbi(const HmmModel& m, const Sentence& s) {
  const std::size_t K = m.num_states;
  const std::size_t T = s.size();
  if (T == 0) return {};
  auto log_emit = [&](std::size_t k, std::size_t t) {
    std::size_t w = m.word_index(s.tokens[t].form);
    double p = w == std::string::npos ? 0.0 : m.emission(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(w));
    return std::log(std::max(p, kEmissionFloor));
  };
  std::vector<double> score(T * K, kNegInf);
  std::vector<std::size_t> back(T * K, 0);
  for (std::size_t k = 0; k < K; ++k) score[k] = safe_log(m.initial[static_cast<Eigen::Index>(k)]) + log_emit(k, 0);
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t k = 0; k < K; ++k) {
      double best = kNegInf;
      std::size_t arg = 0;
      for (std::size_t j = 0; j < K; ++j) {
        double v = score[(t - 1) * K + j] + safe_log(m.transition(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)));
        if (v > best) {
          best = v;
          arg = j;
        }
      }
      score[t * K + k] = best + log_emit(k, t);
      back[t * K + k] = arg;
    }
  std::vector<std::size_t> path(T);
  double best = kNegInf;
  for (std::size_t k = 0; k < K; ++k)
    if (score[(T - 1) * K + k] > best) {
      best = score[(T - 1) * K + k];
      path[T - 1] = k;
    }
  for (std::size_t t = T - 1; t > 0; --t) path[t - 1] = back[t * K + path[t]];
  return path;
}

namespace {

TagSeq map_states(const std::vector<std::size_t>& path, const std::vector<Tag>& state_tags, const OMask& mask) {
  TagSeq tags(path.size());
  for (std::size_t t = 0; t < path.size(); ++t) tags[t] = state_tags.at(path[t]);
  if (!tags.empty()) tags[0] = Tag::B;
  return apply_mask(std::move(tags), mask);
}

}  // namespace

TagSeq hmm_chunk(const HmmModel& m, const Sentence& s, const OMask& mask) {
  if (m.state_tags.size() != m.num_states) throw Error("hmm_chunk: state -> tag map is not set");
  return map_states(hmm_viterbi(m, s), m.state_tags, mask);
}

std::vector<Tag> hmm_select_state_tags(const HmmModel& m, std::span<const LabeledSentence> valid) {
  const std::size_t K = m.num_states;
  if (K > 16) throw Error("hmm_select_state_tags: too many states for exhaustive search");
  std::vector<std::vector<std::size_t>> paths;
  std::vector<TagSeq> gold;
  for (const auto& ls : valid) {
    paths.push_back(hmm_viterbi(m, ls.sentence));
    gold.push_back(ls.tags);
  }
  std::vector<Tag> best_map;
  double best_f1 = -1.0;
  std::vector<TagSeq> pred(valid.size());
  for (std::uint32_t code = 0; code < (1u << K); ++code) {
    std::vector<Tag> map(K);
    for (std::size_t k = 0; k < K; ++k) map[k] = (code >> k) & 1u ? Tag::I : Tag::B;
    for (std::size_t i = 0; i < valid.size(); ++i) pred[i] = map_states(paths[i], map, o_mask(gold[i]));
    double f1 = evaluate(gold, pred).f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best_map = map;
    }
  }
  return best_map;
}

// ---------------------------------------------------------------------------

TagSeq lm_chunk(const EmbeddingProvider& provider, const Sentence& s, double tau, const OMask& mask,
                std::size_t* zero_vectors) {
  Matrix x = provider.embed(s);
  TagSeq tags(s.size(), Tag::I);
  if (!tags.empty()) tags[0] = Tag::B;
  for (Eigen::Index i = 1; i < x.rows(); ++i) {
    Vector prev = x.row(i - 1).transpose();
    Vector cur = x.row(i).transpose();
    if (cosine(prev, cur, zero_vectors) < tau) tags[static_cast<std::size_t>(i)] = Tag::B;
  }
  return apply_mask(std::move(tags), mask);
}

// ---------------------------------------------------------------------------

std::vector<double> parse_grid(const std::string& spec) {
  double lo = 0, hi = 0, step = 0;
  char c1 = 0, c2 = 0;
  std::istringstream in(spec);
  if (!(in >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || !(in >> std::ws).eof())
    throw Error("grid must look like lo:hi:step, got '" + spec + "'");
  if (step <= 0.0 || hi < lo) throw Error("grid needs step > 0 and hi >= lo");
  std::vector<double> out;
  for (std::size_t k = 0;; ++k) {
    double v = lo + static_cast<double>(k) * step;
    if (v > hi + 1e-9 * step) break;
    out.push_back(v);
  }
  return out;
}

GridResult grid_search(const std::vector<double>& grid, const std::function<double(double)>& f1_of) {
  if (grid.empty()) throw Error("grid_search: empty grid");
  GridResult r;
  for (double v : grid) {
    double f1 = f1_of(v);
    r.scores.emplace_back(v, f1);
    if (f1 > r.best_f1) {
      r.best_f1 = f1;
      r.best_value = v;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

std::string write_pmi_model(const PmiModel& m) {
  std::ostringstream out;
  out << "kind pmi\ntau " << fmt17(m.tau) << "\nlowercase " << (m.counts.lowercase ? 1 : 0)
      << "\ntotal_tokens " << m.counts.total_tokens << "\ntotal_bigrams " << m.counts.total_bigrams << '\n';
  std::vector<std::pair<std::string, std::size_t>> uni(m.counts.unigrams.begin(), m.counts.unigrams.end());
  std::sort(uni.begin(), uni.end());
  for (const auto& [w, c] : uni) out << "unigram " << w << ' ' << c << '\n';
  for (const auto& [ab, c] : m.counts.bigrams) out << "bigram " << ab.first << ' ' << ab.second << ' ' << c << '\n';
  return out.str();
}

std::string write_hmm_model(const HmmModel& m) {
  std::ostringstream out;
  out << "kind hmm\nstates " << m.num_states << "\nlowercase " << (m.lowercase ? 1 : 0) << "\nstate_tags";
  for (Tag t : m.state_tags) out << ' ' << tag_char(t);
  out << "\ninitial";
  for (Eigen::Index k = 0; k < m.initial.size(); ++k) out << ' ' << fmt17(m.initial[k]);
  out << '\n';
  for (Eigen::Index j = 0; j < m.transition.rows(); ++j) {
    out << "transition " << j;
    for (Eigen::Index k = 0; k < m.transition.cols(); ++k) out << ' ' << fmt17(m.transition(j, k));
    out << '\n';
  }
  for (const auto& w : m.vocabulary) out << "vocab " << w << '\n';
  for (Eigen::Index k = 0; k < m.emission.rows(); ++k) {
    out << "emission " << k;
    for (Eigen::Index w = 0; w < m.emission.cols(); ++w) out << ' ' << fmt17(m.emission(k, w));
    out << '\n';
  }
  return out.str();
}

std::string write_lm_model(const ProviderSpec& spec, double tau) {
  return "kind lm\ntau " + fmt17(tau) + "\nembeddings " + spec.to_string() + "\n";
}

BaselineModel read_baseline_model(std::string_view text) {
  BaselineModel bm;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t no = 0;
  std::vector<std::vector<double>> transition, emission;
  auto numbers = [&](std::istringstream& ls) {
    std::vector<double> v;
    for (std::string tok; ls >> tok;) {
      auto x = parse_double(tok);
      if (!x) throw ParseError("bad number '" + tok + "'", no);
      v.push_back(*x);
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "kind") {
      ls >> bm.kind;
    } else if (key == "tau") {
      double t = numbers(ls).at(0);
      bm.pmi.tau = t;
      bm.lm_tau = t;
    } else if (key == "lowercase") {
      int v = 0;
      ls >> v;
      bm.pmi.counts.lowercase = bm.hmm.lowercase = v != 0;
    } else if (key == "total_tokens") {
      ls >> bm.pmi.counts.total_tokens;
    } else if (key == "total_bigrams") {
      ls >> bm.pmi.counts.total_bigrams;
    } else if (key == "unigram") {
      std::string w;
      std::size_t c = 0;
      if (!(ls >> w >> c)) throw ParseError("bad unigram line", no);
      bm.pmi.counts.unigrams[w] = c;
    } else if (key == "bigram") {
      std::string a, b;
      std::size_t c = 0;
      if (!(ls >> a >> b >> c)) throw ParseError("bad bigram line", no);
      bm.pmi.counts.bigrams[{a, b}] = c;
    } else if (key == "states") {
      ls >> bm.hmm.num_states;
    } else if (key == "state_tags") {
      for (std::string t; ls >> t;) bm.hmm.state_tags.push_back(tag_from_char(t.at(0)));
    } else if (key == "initial") {
      auto v = numbers(ls);
      bm.hmm.initial = Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    } else if (key == "transition" || key == "emission") {
      std::size_t idx = 0;
      ls >> idx;
      auto& rows = key == "transition" ? transition : emission;
      if (idx != rows.size()) throw ParseError(key + " rows out of order", no);
      rows.push_back(numbers(ls));
    } else if (key == "vocab") {
      std::string w;
      ls >> w;
      bm.hmm.vocabulary.push_back(w);
    } else if (key == "embeddings") {
      std::string spec;
      ls >> spec;
      bm.lm_spec = ProviderSpec::parse(spec);
    } else {
      throw ParseError("unknown model key '" + key + "'", no);
    }
  }
  if (bm.kind != "pmi" && bm.kind != "hmm" && bm.kind != "lm")
    throw Error("model file has unknown kind '" + bm.kind + "'");
  if (bm.kind == "hmm") {
    const auto K = static_cast<Eigen::Index>(bm.hmm.num_states);
    const auto V = static_cast<Eigen::Index>(bm.hmm.vocabulary.size());
    if (bm.hmm.initial.size() != K || static_cast<Eigen::Index>(transition.size()) != K ||
        static_cast<Eigen::Index>(emission.size()) != K || static_cast<Eigen::Index>(bm.hmm.state_tags.size()) != K)
      throw ShapeError("HMM model file is inconsistent with states=" + std::to_string(K));
    bm.hmm.transition.resize(K, K);
    bm.hmm.emission.resize(K, V);
    for (Eigen::Index j = 0; j < K; ++j) {
      if (static_cast<Eigen::Index>(transition[static_cast<std::size_t>(j)].size()) != K ||
          static_cast<Eigen::Index>(emission[static_cast<std::size_t>(j)].size()) != V)
        throw ShapeError("HMM row " + std::to_string(j) + " has the wrong length");
      for (Eigen::Index k = 0; k < K; ++k) bm.hmm.transition(j, k) = transition[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
      for (Eigen::Index w = 0; w < V; ++w) bm.hmm.emission(j, w) = emission[static_cast<std::size_t>(j)][static_cast<std::size_t>(w)];
    }
    if (!std::is_sorted(bm.hmm.vocabulary.begin(), bm.hmm.vocabulary.end()))
      throw Error("HMM vocabulary must be sorted");
  }
  return bm;
}

}  // namespace hrchunk
