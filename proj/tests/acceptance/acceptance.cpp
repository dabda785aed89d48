// Acceptance runner: one PASS/FAIL/SKIP line per criterion, then a non-zero
// exit status if anything failed.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "checks.hpp"
#include "hrchunk/baselines.hpp"
#include "hrchunk/corpus.hpp"
#include "hrchunk/error.hpp"
#include "hrchunk/eval.hpp"
#include "hrchunk/finetune.hpp"
#include "hrchunk/grammar.hpp"
#include "hrchunk/induction.hpp"
#include "hrchunk/synthetic.hpp"
#include "hrchunk/tree.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace hrchunk;

namespace {

enum class Outcome { Pass, Fail, Skip };

struct Verdict {
  Outcome outcome = Outcome::Fail;
  std::string detail;
};

Verdict pass(std::string d) { return {Outcome::Pass, std::move(d)}; }
Verdict fail(std::string d) { return {Outcome::Fail, std::move(d)}; }
Verdict verdict(bool ok, std::string d) { return {ok ? Outcome::Pass : Outcome::Fail, std::move(d)}; }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// CLI plumbing

const fs::path kWork = fs::absolute("acceptance_work");

int run(const std::string& args, const std::string& log = "cli.log") {
  const std::string cmd = "cd '" + kWork.string() + "' && '" HRCHUNK_BIN "' " + args + " >>" + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

double report_f1(const std::string& name) {
  std::istringstream in(slurp(kWork / name));
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream f(line);
    std::string k;
    double v;
    if (f >> k >> v && k == "f1") return v;
  }
  throw Error("no f1 in " + name);
}

// ---------------------------------------------------------------------------

Verdict criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1);
  std::size_t trees = 0, bad = 0;
  for (auto h : {Heuristic::Left, Heuristic::Right, Heuristic::Small})
    for (int k = 0; k < 1000; ++k) {
      const std::size_t n = 1 + rng.below(50);
      BinaryTree t = oracle::to_tree(oracle::random_shape(rng, 0, n - 1));
      ++trees;
      if (!is_partition(induce(t, h), n)) ++bad;
    }
  std::size_t shapes = 0, mismatches = 0;
  for (std::size_t n = 1; n <= 10; ++n)
    for (auto& s : oracle::all_shapes(0, n - 1)) {
      BinaryTree t = oracle::to_tree(s);
      ++shapes;
      if (induce(t, Heuristic::Left) != oracle::left_chunks(s)) ++mismatches;
      if (induce(t, Heuristic::Right) != oracle::right_chunks(s)) ++mismatches;
      if (induce(t, Heuristic::Small) != oracle::small_chunks(s)) ++mismatches;
    }
  const double secs = seconds_since(t0);
  return verdict(bad == 0 && mismatches == 0 && secs < 10.0,
                 std::to_string(trees - bad) + "/" + std::to_string(trees) + " random trees partition, " +
                     std::to_string(mismatches) + " oracle mismatches over " + std::to_string(shapes) +
                     " shapes (n<=10), " + fmt("%.2f s", secs));
}

Verdict criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::vector<oracle::ShapePtr>> shapes(7);
  for (std::size_t n = 1; n <= 6; ++n) shapes[n] = oracle::all_shapes(0, n - 1);
  double worst_inside = 0.0, worst_viterbi = 0.0;
  std::size_t sentences = 0, failures = 0;
  Rng rng(2);
  for (int k = 0; k < 100; ++k) {
    const std::size_t N = 1 + rng.below(3), P = 1 + rng.below(3), V = 1 + rng.below(4);
    Pcfg g = random_pcfg(1000 + static_cast<std::uint64_t>(k), N, P, V);
    if (k % 2 == 1) {  // move root mass onto a preterminal so 1-word sentences parse
      const double share = 0.3;
      for (std::size_t a = 0; a < N; ++a) g.root(a) *= 1.0 - share;
      g.root(N + rng.below(P)) = share;
    }
    validate(g);
    for (std::size_t n = 1; n <= 6; ++n) {
      std::vector<std::size_t> w(n, 0);
      while (true) {
        ++sentences;
        const auto e = oracle::enumerate(g, shapes[n], w);
        const double ins = inside_logprob(g, w);
        if (e.total == 0.0) {
          bool threw = false;
          try {
            viterbi_cyk(g, w);
          } catch (const NoParseError&) {
            threw = true;
          }
          if (!std::isinf(ins) || !threw) ++failures;
        } else {
          worst_inside = std::max(worst_inside, std::abs(ins - std::log(e.total)));
          worst_viterbi = std::max(worst_viterbi, std::abs(viterbi_cyk(g, w).logprob - std::log(e.best)));
        }
        std::size_t i = 0;  // next sentence in Sigma^n
        while (i < n && ++w[i] == V) w[i++] = 0;
        if (i == n) break;
      }
    }
  }
  const double secs = seconds_since(t0);
  return verdict(failures == 0 && worst_inside < 1e-9 && worst_viterbi < 1e-9 && secs < 60.0,
                 std::to_string(sentences) + " sentences, max |inside - enum| " + fmt("%.2e", worst_inside) +
                     ", max |viterbi - enum max| " + fmt("%.2e", worst_viterbi) + ", " +
                     std::to_string(failures) + " no-parse disagreements, " + fmt("%.1f s", secs));
}

Verdict criterion3() {
  double hrnn = 0.0, joint = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto r = checks::hrnn_grad_check(30000 + s);
    hrnn = std::max({hrnn, r.params, r.inputs});
    auto j = checks::joint_grad_check(40000 + s);
    joint = std::max({joint, j.params, j.decoder, j.inputs});
  }
  return verdict(hrnn < 1e-5 && joint < 1e-5,
                 "max relative error " + fmt("%.2e", hrnn) + " (HRNN, 50 configs), " + fmt("%.2e", joint) +
                     " (decoder + HRNN jointly, 50 configs)");
}

Verdict criterion4() {
  double gap = 0.0, rep = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    gap = std::max(gap, checks::soft_hard_gap(50000 + s));
    rep = std::max(rep, checks::chunk_representation_error(60000 + s));
  }
  return verdict(gap < 1e-9 && rep < 1e-12, "soft/hard max gap " + fmt("%.2e", gap) +
                                                ", chunk representation max error " + fmt("%.2e", rep) +
                                                " (100 trials each)");
}

Verdict criterion5() {
  Vector s0 = Vector::Zero(2), m0(2);
  m0 << 0.0, std::log(3.0);
  Vector a = reweighted_attention(s0, m0, 1.0);
  const double worked = std::max(std::abs(a[0] - 0.25), std::abs(a[1] - 0.75));
  double row = 0.0, plain = 0.0;
  Rng rng(5);
  for (int k = 0; k < 1000; ++k) {
    const auto n = static_cast<Eigen::Index>(1 + rng.below(20));
    Vector q(4), m(n);
    Matrix keys(4, n);
    for (Eigen::Index i = 0; i < 4; ++i) q[i] = rng.uniform(-5, 5);
    for (Eigen::Index i = 0; i < keys.size(); ++i) keys.data()[i] = rng.uniform(-5, 5);
    for (Eigen::Index i = 0; i < n; ++i) m[i] = rng.uniform(-30, 30);
    Vector p = reweighted_attention(q, keys, m, rng.uniform(0, 5));
    row = std::max(row, std::abs(p.sum() - 1.0));
    Vector sc = keys.transpose() * q / 2.0;
    Vector e = (sc.array() - sc.maxCoeff()).exp();
    plain = std::max(plain, (reweighted_attention(q, keys, m, 0.0) - e / e.sum()).cwiseAbs().maxCoeff());
  }
  return verdict(worked < 1e-12 && row < 1e-9 && plain < 1e-12,
                 "worked example error " + fmt("%.1e", worked) + ", max |row sum - 1| " + fmt("%.1e", row) +
                     ", max |gamma=0 - softmax| " + fmt("%.1e", plain));
}

Verdict criterion6() {
  const double hand = std::abs(aux_loss({0.9, 0.2}, 0.5).loss - 0.05);
  const double all = std::abs(aux_loss({0.9, 0.2, 0.5}, 1.0).loss - 0.9);
  const double zero = aux_loss({1.0, 0.0, 1.0, 0.0}, 0.5).loss;
  std::size_t card = 0;
  for (std::uint64_t s = 0; s < 500; ++s) card += checks::aux_cardinality_holds(70000 + s);
  auto [low, high] = checks::kappa_pressure(7, 0.1, 0.9, 2.0);
  const bool ok = hand < 1e-12 && all < 1e-12 && zero == 0.0 && card == 500 && high > low;
  return verdict(ok, "0.05 case error " + fmt("%.1e", hand) + ", cardinality " + std::to_string(card) +
                         "/500, B tags after one aux step: " + std::to_string(low) + " (kappa 0.1) vs " +
                         std::to_string(high) + " (kappa 0.9)");
}

Verdict criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  ChunkGrammar cg = builtin_chunk_grammar();
  auto data = sample_corpus(cg, 200, 77, 2, 12);
  Pcfg g = random_pcfg(78, 5, 8, cg.grammar.terminals());
  std::vector<std::vector<std::size_t>> ids;
  std::vector<Sentence> sents;
  for (auto& s : data) {
    ids.push_back(g.encode(s.labeled.sentence.forms()));
    sents.push_back(s.labeled.sentence);
  }
  double worst_em = 0.0, prev = -INFINITY, first = 0.0;
  for (int it = 0; it < 50; ++it) {
    EmResult r = em_step(g, ids);
    if (it == 0) first = r.loglik;
    worst_em = std::max(worst_em, prev - r.loglik);
    prev = r.loglik;
    g = r.grammar;
  }
  auto hmm = hmm_fit(sents, 4, 79, 50);
  double worst_hmm = 0.0;
  for (std::size_t i = 1; i < hmm.loglik.size(); ++i)
    worst_hmm = std::max(worst_hmm, hmm.loglik[i - 1] - hmm.loglik[i]);
  const double secs = seconds_since(t0);
  return verdict(worst_em <= 1e-8 && worst_hmm <= 1e-8 && secs < 60.0,
                 "pcfg-em loglik " + fmt("%.2f", first) + " -> " + fmt("%.2f", prev) + ", largest drop " +
                     fmt("%.1e", std::max(0.0, worst_em)) + "; hmm " + fmt("%.2f", hmm.loglik.front()) + " -> " +
                     fmt("%.2f", hmm.loglik.back()) + ", largest drop " + fmt("%.1e", std::max(0.0, worst_hmm)) +
                     "; " + fmt("%.1f s", secs));
}

Verdict criterion8() {
  std::vector<TagSeq> g1{tags_from_string("BIB")}, p1{tags_from_string("BBI")};
  auto hand = evaluate(g1, p1);
  char f1[16], acc[16];
  std::snprintf(f1, sizeof f1, "%.2f", hand.f1);
  std::snprintf(acc, sizeof acc, "%.2f", hand.tag_accuracy);
  std::size_t agree = 0;
  Rng rng(8);
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 1 + rng.below(15);
    std::vector<TagSeq> gold{oracle::random_tags(rng, n)};
    std::vector<TagSeq> pred{apply_mask(oracle::random_tags(rng, n, false), o_mask(gold[0]))};
    auto r = evaluate(gold, pred);
    auto o = oracle::score(gold, pred);
    agree += r.n_gold_spans == o.gold && r.n_pred_spans == o.pred && r.n_correct_spans == o.correct &&
             r.f1 == o.f1 && r.tag_accuracy == o.tag_accuracy;
  }
  return verdict(agree == 200 && std::string(f1) == "0.00" && std::string(acc) == "33.33",
                 std::to_string(agree) + "/200 oracle agreements; hand example F1 " + f1 + ", tag accuracy " + acc);
}

Verdict criterion9() {
  const std::vector<std::string> steps{
      "synth --seed 1 --count 800 --out train.conll --grammar-out known.gr",
      "synth --seed 2 --count 200 --out valid.conll",
      "synth --seed 3 --count 300 --out test.conll",
      "pcfg-em --seed 5 --init known.gr --randomize --corpus train.conll --iters 50 --out em.gr --log em.csv",
      "parse --grammar em.gr --in train.conll --out train.trees --skip-unparseable",
      "induce --trees train.trees --heuristic left --out train_left.conll",
      "pretrain --seed 1 --train train_left.conll --valid valid.conll --epochs 10 --out hrnn.ckpt --log pretrain.csv",
      "chunk --model hrnn.ckpt --in test.conll --out hrnn_test.conll",
      "eval --gold test.conll --pred hrnn_test.conll --out hrnn_eval.txt",
      "baseline pmi --train train.conll --valid valid.conll --tau-grid -5:5:0.5 --out pmi.model",
      "chunk --model pmi.model --in test.conll --out pmi_test.conll",
      "eval --gold test.conll --pred pmi_test.conll --out pmi_eval.txt",
  };
  for (const auto& s : steps)
    if (run(s) != 0) return fail("step failed: hrchunk " + s);
  const double hrnn = report_f1("hrnn_eval.txt");
  const double pmi = report_f1("pmi_eval.txt");
  return verdict(hrnn >= pmi + 10.0,
                 "held-out phrase F1: HRNN " + fmt("%.2f", hrnn) + " vs tuned PMI " + fmt("%.2f", pmi));
}

struct Transience {
  bool ok = false;
  std::string detail;
};

Transience transience(std::uint64_t seed) {
  const std::string curves = "curves_" + std::to_string(seed) + ".csv";
  Transience t;
  if (run("finetune --seed " + std::to_string(seed) + " --model hrnn.ckpt --task chunk-heads --steps 600 "
          "--eval-every 50 --curves " + curves + " --out ft_" + std::to_string(seed) + ".ckpt") != 0) {
    t.detail = "seed " + std::to_string(seed) + ": finetune failed";
    return t;
  }
  std::istringstream in(slurp(kWork / curves));
  std::string line;
  std::vector<std::size_t> step;
  std::vector<double> loss, f1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line[0] == 's') continue;
    std::istringstream f(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(f, cell, ',')) cells.push_back(cell);
    step.push_back(std::stoul(cells[0]));
    loss.push_back(std::stod(cells[1]));
    f1.push_back(std::stod(cells[2]));
  }
  if (step.empty()) {
    t.detail = "seed " + std::to_string(seed) + ": empty curves";
    return t;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < f1.size(); ++i)
    if (f1[i] > f1[best]) best = i;
  const std::size_t last = step.size() - 1;
  t.ok = best < last && loss[last] < loss[best];
  t.detail = "seed " + std::to_string(seed) + ": max F1 " + fmt("%.2f", f1[best]) + " at step " +
             std::to_string(step[best]) + " (loss " + fmt("%.4f", loss[best]) + "), final F1 " +
             fmt("%.2f", f1[last]) + " at step " + std::to_string(step[last]) + " (loss " + fmt("%.4f", loss[last]) +
             ")";
  return t;
}

Verdict criterion10(bool have_model) {
  if (!have_model) return fail("needs the pretrained model from criterion 9");
  Transience first = transience(1);
  if (first.ok) return pass(first.detail);
  std::size_t hits = 0;
  std::string detail = first.detail;
  for (std::uint64_t s : {2, 3, 4}) {
    Transience t = transience(s);
    hits += t.ok;
    detail += "; " + t.detail;
  }
  return verdict(hits >= 2, detail + " (" + std::to_string(hits) + " of 4 seeds transient)");
}

// Trees may cover every token or only the non-O tokens of each sentence.
Verdict criterion11() {
  const char* conll = std::getenv("HRCHUNK_CONLL");
  const char* trees_path = std::getenv("HRCHUNK_TREES");
  if (!conll || !trees_path) return {Outcome::Skip, "set HRCHUNK_CONLL and HRCHUNK_TREES to run"};
  auto gold = read_conll2000(slurp(conll)).sentences;
  auto trees = read_trees(slurp(trees_path));
  if (gold.size() != trees.size())
    return fail(std::to_string(gold.size()) + " sentences but " + std::to_string(trees.size()) + " trees");
  double f1[3];
  const Heuristic hs[3] = {Heuristic::Left, Heuristic::Right, Heuristic::Small};
  for (int h = 0; h < 3; ++h) {
    std::vector<TagSeq> g, p;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const TagSeq& gt = gold[i].tags;
      const OMask mask = o_mask(gt);
      const std::size_t n = gt.size(), leaves = trees[i].leaf_count();
      TagSeq induced = spans_to_tags(induce(trees[i], hs[h]), leaves, OMask(leaves, false));
      TagSeq full;
      if (leaves == n) {
        full = apply_mask(induced, mask);
      } else {
        std::size_t kept = 0;
        for (bool m : mask) kept += !m;
        if (leaves != kept) return fail("tree " + std::to_string(i) + " does not match its sentence length");
        std::size_t k = 0;
        for (std::size_t t = 0; t < n; ++t) full.push_back(mask[t] ? Tag::O : induced[k++]);
        normalize_tags(full);
      }
      g.push_back(gt);
      p.push_back(full);
    }
    f1[h] = evaluate(g, p).f1;
  }
  return verdict(f1[0] > f1[1] && f1[0] > f1[2], "phrase F1 left " + fmt("%.2f", f1[0]) + ", right " +
                                                     fmt("%.2f", f1[1]) + ", 1&2-word " + fmt("%.2f", f1[2]));
}

Verdict guarded(const std::function<Verdict()>& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return fail(std::string("exception: ") + e.what());
  }
}

}  // namespace

int main() {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  std::vector<std::function<Verdict()>> criteria{criterion1, criterion2, criterion3, criterion4,
                                                 criterion5, criterion6, criterion7, criterion8};
  int failed = 0;
  auto report = [&](int k, const Verdict& v, double secs) {
    const char* word = v.outcome == Outcome::Pass ? "PASS" : v.outcome == Outcome::Skip ? "SKIP" : "FAIL";
    failed += v.outcome == Outcome::Fail;
    std::cout << "CRITERION " << k << ": " << word << " - " << v.detail << " [" << fmt("%.1f", secs) << " s]"
              << std::endl;
  };
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v = guarded(criteria[k]);
    report(static_cast<int>(k + 1), v, seconds_since(t0));
  }
  auto t0 = std::chrono::steady_clock::now();
  Verdict v9 = guarded(criterion9);
  report(9, v9, seconds_since(t0));
  t0 = std::chrono::steady_clock::now();
  const bool have_model = fs::exists(kWork / "hrnn.ckpt");
  Verdict v10 = guarded([&] { return criterion10(have_model); });
  report(10, v10, seconds_since(t0));
  t0 = std::chrono::steady_clock::now();
  Verdict v11 = guarded(criterion11);
  report(11, v11, seconds_since(t0));
  std::cout << (failed ? "ACCEPTANCE: FAIL" : "ACCEPTANCE: PASS") << std::endl;
  return failed ? 1 : 0;
}
