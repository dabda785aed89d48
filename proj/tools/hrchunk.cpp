// hrchunk: command-line front end for the chunking toolkit.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hrchunk/baselines.hpp"
#include "hrchunk/corpus.hpp"
#include "hrchunk/error.hpp"
#include "hrchunk/eval.hpp"
#include "hrchunk/finetune.hpp"
#include "hrchunk/grammar.hpp"
#include "hrchunk/hrnn.hpp"
#include "hrchunk/induction.hpp"
#include "hrchunk/parallel.hpp"
#include "hrchunk/rng.hpp"
#include "hrchunk/synthetic.hpp"
#include "hrchunk/tree.hpp"
#include "hrchunk/version.hpp"

namespace fs = std::filesystem;
using namespace hrchunk;

namespace {

// Bad or missing flags detected after CLI11 parsing; exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Global {
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  int precision = 64;
  std::string out_dir;
  std::string config;
  std::string provenance;  // "## ..." line, filled after parsing
};

Global g;

std::string read_file(const std::string& path) {
  if (path == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string out_path(const std::string& path) {
  if (path == "-" || g.out_dir.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(g.out_dir) / path).string();
}

// Every output file starts with the provenance comment line.
void write_output(const std::string& path, const std::string& body) {
  const std::string target = out_path(path);
  if (target == "-") {
    std::cout << g.provenance << body;
    std::cout.flush();
    return;
  }
  const fs::path p(target);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(target, std::ios::binary);
  if (!out) throw Error("cannot write '" + target + "'");
  out << g.provenance << body;
  if (!out) throw Error("write to '" + target + "' failed");
}

std::uint64_t require_seed(const std::string& cmd) {
  if (!g.seed) throw UsageError(cmd + ": --seed is required");
  return *g.seed;
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t k) { return splitmix64(seed ^ (0x9e3779b97f4a7c15ULL * (k + 1))); }

std::vector<LabeledSentence> read_corpus(const std::string& path) {
  auto r = read_conll2000(read_file(path));
  if (r.normalized > 0)
    std::cerr << "note: " << r.normalized << " tag(s) in " << path << " normalized (I after O or at start)\n";
  return std::move(r.sentences);
}

std::vector<Sentence> sentences_of(const std::vector<LabeledSentence>& c) {
  std::vector<Sentence> out;
  out.reserve(c.size());
  for (const auto& ls : c) out.push_back(ls.sentence);
  return out;
}

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void add_common(CLI::App* sub) {
  sub->add_option("--seed", g.seed, "Random seed (required for stochastic commands)");
  sub->add_option("--threads", g.threads, "Worker threads; results do not depend on it")
      ->check(CLI::Range(1u, 256u))
      ->capture_default_str();
  sub->add_option("--precision", g.precision, "Floating point precision in bits (64)")->capture_default_str();
  sub->add_option("--out-dir", g.out_dir, "Directory for relative output paths");
  sub->add_option("--config", g.config, "File of 'key = value' lines; flags override it");
}

std::string trim(std::string s) {
  auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && issp(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && issp(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

// Appends `--key value` for config entries whose flag is not on the command line.
std::vector<std::string> merge_config(CLI::App& app, std::vector<std::string> args) {
  std::string config_path;
  std::set<std::string> given;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (!a.starts_with("--")) continue;
    const std::string name = a.substr(0, a.find('='));
    given.insert(name);
    if (name == "--config") {
      if (a.find('=') != std::string::npos) config_path = a.substr(a.find('=') + 1);
      else if (i + 1 < args.size()) config_path = args[i + 1];
    }
  }
  if (config_path.empty()) return args;

  CLI::App* leaf = &app;
  std::size_t pos = 0;
  while (pos < args.size()) {
    CLI::App* next = nullptr;
    try {
      next = leaf->get_subcommand(args[pos]);
    } catch (const CLI::OptionNotFound&) {
      break;
    }
    leaf = next;
    ++pos;
  }
  if (leaf == &app) throw UsageError("--config needs a subcommand");

  std::istringstream in(read_file(config_path));
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(config_path + ":" + std::to_string(no) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.starts_with("--")) key = key.substr(2);
    const std::string flag = "--" + key;
    if (flag == "--config") continue;
    CLI::Option* opt = leaf->get_option_no_throw(flag);
    if (opt == nullptr) throw UsageError(config_path + ":" + std::to_string(no) + ": unknown key '" + key + "'");
    if (given.count(flag)) continue;
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1" || value == "yes") args.push_back(flag);
      else if (value != "false" && value != "0" && value != "no")
        throw UsageError(config_path + ":" + std::to_string(no) + ": '" + key + "' takes true or false");
    } else {
      args.push_back(flag);
      args.push_back(value);
    }
  }
  return args;
}

std::string provenance_line(const CLI::App* leaf) {
  std::string path;
  for (const CLI::App* a = leaf; a != nullptr && a->get_parent() != nullptr; a = a->get_parent())
    path = a->get_name() + (path.empty() ? "" : " " + path);
  std::string line = std::string("## hrchunk ") + kToolVersion + " " + path;
  for (const CLI::Option* opt : leaf->get_options()) {
    if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
    std::string value;
    if (opt->count() > 0) {
      if (opt->get_expected_min() == 0) {
        value = "true";
      } else {
        for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
      }
    } else {
      value = opt->get_default_str();
      if (value.empty()) continue;
    }
    line += " " + opt->get_name() + "=" + value;
  }
  return line + "\n";
}

// ---------------------------------------------------------------------------

struct SynthOpts {
  std::size_t count = 1000;
  std::size_t min_len = 2, max_len = 20;
  std::string prefix = "syn";
  std::string out, trees_out, grammar_out;
} synth_o;

int run_synth() {
  const std::uint64_t seed = require_seed("synth");
  ChunkGrammar cg = builtin_chunk_grammar();
  auto data = sample_corpus(cg, synth_o.count, seed, synth_o.min_len, synth_o.max_len, synth_o.prefix);
  std::vector<LabeledSentence> labeled;
  std::vector<BinaryTree> trees;
  for (auto& s : data) {
    labeled.push_back(s.labeled);
    trees.push_back(std::move(s.tree));
  }
  write_output(synth_o.out, write_conll2000(labeled));
  if (!synth_o.trees_out.empty()) write_output(synth_o.trees_out, write_trees(trees));
  if (!synth_o.grammar_out.empty()) write_output(synth_o.grammar_out, write_grammar(cg.grammar));
  std::cerr << "synth: " << labeled.size() << " sentences\n";
  return 0;
}

struct InduceOpts {
  std::string trees, heuristic = "left", out, pos_from;
} induce_o;

int run_induce() {
  const Heuristic h = parse_heuristic(induce_o.heuristic);
  auto trees = read_trees(read_file(induce_o.trees));
  std::vector<LabeledSentence> pos_source;
  if (!induce_o.pos_from.empty()) pos_source = read_corpus(induce_o.pos_from);
  std::vector<LabeledSentence> out;
  out.reserve(trees.size());
  for (std::size_t i = 0; i < trees.size(); ++i) {
    const auto& t = trees[i];
    LabeledSentence ls;
    ls.sentence.id = "s" + std::to_string(i);
    for (const auto& w : t.words()) ls.sentence.tokens.push_back({w, std::nullopt});
    if (i < pos_source.size() && pos_source[i].sentence.size() == t.leaf_count())
      for (std::size_t k = 0; k < t.leaf_count(); ++k) ls.sentence.tokens[k].pos = pos_source[i].sentence.tokens[k].pos;
    ls.tags = spans_to_tags(induce(t, h), t.leaf_count(), OMask(t.leaf_count(), false));
    out.push_back(std::move(ls));
  }
  write_output(induce_o.out, write_conll2000(out));
  std::cerr << "induce: " << out.size() << " sentences, heuristic " << induce_o.heuristic << '\n';
  return 0;
}

struct ParseOpts {
  std::string grammar, in, out, unk;
  bool skip_unparseable = false;
} parse_o;

int run_parse() {
  Pcfg gr = read_grammar(read_file(parse_o.grammar));
  auto corpus = read_corpus(parse_o.in);
  std::optional<std::string> unk;
  if (!parse_o.unk.empty()) {
    if (!gr.terminal_index(parse_o.unk)) throw Error("--unk '" + parse_o.unk + "' is not a terminal of the grammar");
    unk = parse_o.unk;
  }
  std::vector<BinaryTree> trees;
  std::size_t skipped = 0;
  for (const auto& ls : corpus) {
    auto forms = ls.sentence.forms();
    try {
      auto ids = gr.encode(forms, unk);
      ViterbiParse vp = viterbi_cyk(gr, ids, forms);
      trees.push_back(std::move(vp.tree));
    } catch (const NoParseError& e) {
      if (!parse_o.skip_unparseable) throw NoParseError("sentence " + ls.sentence.id + ": " + e.what());
      ++skipped;
    } catch (const VocabularyError& e) {
      if (!parse_o.skip_unparseable) throw;
      ++skipped;
    }
  }
  write_output(parse_o.out, write_trees(trees));
  std::cerr << "parse: " << trees.size() << " parsed, " << skipped << " skipped\n";
  return 0;
}

struct EmOpts {
  std::string init, corpus, out, log, unk;
  std::string random;  // "N:P"
  bool randomize = false;
  int iters = 20;
} em_o;

Pcfg randomize_support(const Pcfg& init, std::uint64_t seed) {
  Pcfg g = init;
  Rng rng(seed);
  auto redraw = [&](std::span<double> row) {
    double total = 0.0;
    for (double& p : row)
      if (p > 0.0) total += (p = rng.exponential());
    for (double& p : row)
      if (p > 0.0) p /= total;
  };
  redraw(g.root_rules());
  const std::size_t S = g.num_symbols();
  for (std::size_t a = 0; a < g.num_nonterminals(); ++a) redraw(g.binary_rules().subspan(a * S * S, S * S));
  for (std::size_t t = 0; t < g.num_preterminals(); ++t)
    redraw(g.lexical_rules().subspan(t * g.num_terminals(), g.num_terminals()));
  return g;
}

int run_pcfg_em() {
  auto corpus = read_corpus(em_o.corpus);
  Pcfg gr;
  if (!em_o.random.empty()) {
    if (!em_o.init.empty()) throw UsageError("pcfg-em: --init and --random are exclusive");
    const std::uint64_t seed = require_seed("pcfg-em --random");
    std::size_t n = 0, p = 0;
    char colon = 0;
    std::istringstream in(em_o.random);
    if (!(in >> n >> colon >> p) || colon != ':' || n == 0 || p == 0)
      throw UsageError("--random expects N:P with positive counts");
    std::set<std::string> vocab;
    for (const auto& ls : corpus)
      for (const auto& t : ls.sentence.tokens) vocab.insert(t.form);
    if (!em_o.unk.empty()) vocab.insert(em_o.unk);
    gr = random_pcfg(seed, n, p, std::vector<std::string>(vocab.begin(), vocab.end()));
  } else {
    if (em_o.init.empty()) throw UsageError("pcfg-em: one of --init or --random is required");
    gr = read_grammar(read_file(em_o.init));
    if (em_o.randomize) gr = randomize_support(gr, require_seed("pcfg-em --randomize"));
  }
  std::optional<std::string> unk;
  if (!em_o.unk.empty()) unk = em_o.unk;
  std::vector<std::vector<std::size_t>> ids;
  for (const auto& ls : corpus) ids.push_back(gr.encode(ls.sentence.forms(), unk));

  std::string log = "iter,loglik,parsed,skipped\n";
  for (int it = 0; it <= em_o.iters; ++it) {
    EmResult r = em_step(gr, ids, g.threads);
    log += std::to_string(it) + "," + fmt(r.loglik, "%.10f") + "," + std::to_string(r.used) + "," +
           std::to_string(r.skipped) + "\n";
    std::cerr << "pcfg-em: iter " << it << " loglik " << fmt(r.loglik, "%.4f") << '\n';
    if (it < em_o.iters) gr = std::move(r.grammar);
  }
  write_output(em_o.out, write_grammar(gr));
  if (!em_o.log.empty()) write_output(em_o.log, log);
  return 0;
}

struct PretrainOpts {
  std::string train, valid, out, log;
  std::string emb = "kind=lookup,d=32,seed=1";
  int hidden = 32;
  int epochs = 20;
  std::size_t batch = 32;
  double lr = 1e-2;
  double threshold = 0.5;
} pre_o;

int run_pretrain() {
  const std::uint64_t seed = require_seed("pretrain");
  auto train = read_corpus(pre_o.train);
  std::vector<LabeledSentence> valid;
  if (!pre_o.valid.empty()) valid = read_corpus(pre_o.valid);
  ChunkerOptions opts;
  opts.threshold = pre_o.threshold;
  HrnnChunker model(ProviderSpec::parse(pre_o.emb), pre_o.hidden, derive(seed, 0), opts);
  PretrainConfig cfg;
  cfg.epochs = pre_o.epochs;
  cfg.batch_size = pre_o.batch;
  cfg.adam.lr = pre_o.lr;
  cfg.seed = derive(seed, 1);
  cfg.threads = g.threads;
  std::string log = "epoch,train_loss,valid_f1,valid_tag_acc\n";
  train_pretrain(model, train, valid, cfg, [&](const EpochLog& e) {
    std::string f1 = e.valid ? fmt(e.valid->f1) : "", acc = e.valid ? fmt(e.valid->tag_accuracy) : "";
    log += std::to_string(e.epoch) + "," + fmt(e.train_loss, "%.8f") + "," + f1 + "," + acc + "\n";
    std::cerr << "pretrain: epoch " << e.epoch << " loss " << fmt(e.train_loss, "%.5f");
    if (e.valid) std::cerr << " valid F1 " << fmt(e.valid->f1, "%.2f");
    std::cerr << '\n';
  });
  write_output(pre_o.out, write_checkpoint(model.to_checkpoint()));
  if (!pre_o.log.empty()) write_output(pre_o.log, log);
  return 0;
}

struct FinetuneOpts {
  std::string model, task = "chunk-heads", task_data, task_heldout, eval, curves, out, last_out;
  bool scratch = false;
  std::string emb = "kind=lookup,d=32,seed=1";
  int hidden = 32;
  std::size_t task_count = 400, heldout_count = 100;
  double gamma = 0.1, eta = 0.1, kappa = 0.5, lr = 1e-3;
  std::size_t steps = 1000, batch = 16, eval_every = 50;
  int dec_embed = 16, dec_hidden = 32, heads = 1, head_dim = 16;
} ft_o;

int run_finetune() {
  const std::uint64_t seed = require_seed("finetune");
  if (ft_o.model.empty() == !ft_o.scratch) throw UsageError("finetune: give exactly one of --model or --scratch");
  std::optional<HrnnChunker> model;
  if (ft_o.scratch) model.emplace(ProviderSpec::parse(ft_o.emb), ft_o.hidden, derive(seed, 0));
  else model.emplace(HrnnChunker::from_checkpoint(read_checkpoint(read_file(ft_o.model))));

  std::vector<LabeledSentence> train, heldout, eval;
  if (!ft_o.task_data.empty()) {
    train = read_corpus(ft_o.task_data);
    if (!ft_o.task_heldout.empty()) heldout = read_corpus(ft_o.task_heldout);
  } else {
    ChunkGrammar cg = builtin_chunk_grammar();
    for (auto& s : sample_corpus(cg, ft_o.task_count, derive(seed, 2), 2, 20, "task"))
      train.push_back(std::move(s.labeled));
    for (auto& s : sample_corpus(cg, ft_o.heldout_count, derive(seed, 3), 2, 20, "held"))
      heldout.push_back(std::move(s.labeled));
  }
  eval = ft_o.eval.empty() ? heldout : read_corpus(ft_o.eval);
  if (eval.empty()) throw UsageError("finetune: no chunk evaluation set (--eval or a held-out task split)");

  ToyTask task = make_toy_task(parse_task_kind(ft_o.task), train, heldout);
  DecoderConfig dc{ft_o.dec_embed, ft_o.dec_hidden, ft_o.heads, ft_o.head_dim};
  DecoderParams dec = DecoderParams::random(task.vocab.size(), model->params().hidden_dim(), dc, derive(seed, 4));
  FinetuneConfig cfg;
  cfg.gamma = ft_o.gamma;
  cfg.eta = ft_o.eta;
  cfg.kappa = ft_o.kappa;
  cfg.adam.lr = ft_o.lr;
  cfg.steps = ft_o.steps;
  cfg.batch_size = ft_o.batch;
  cfg.eval_every = ft_o.eval_every;
  cfg.seed = derive(seed, 5);
  cfg.threads = g.threads;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(std::string("finetune: ") + e.what());
  }
  FinetuneResult r = finetune_loop(*model, dec, task, eval, cfg, [](const CurvePoint& p) {
    std::cerr << "finetune: step " << p.step << " task " << fmt(p.task_loss, "%.4f") << " F1 "
              << fmt(p.phrase_f1, "%.2f") << " polarized " << fmt(p.polarized_frac, "%.3f") << '\n';
  });
  write_output(ft_o.curves, write_curves(r.curves));
  write_output(ft_o.out, write_checkpoint(r.best));
  if (!ft_o.last_out.empty()) write_output(ft_o.last_out, write_checkpoint(r.last));
  std::cerr << "finetune: best F1 " << fmt(r.best_f1, "%.2f") << " at step " << r.best_step << '\n';
  return 0;
}

struct ChunkOpts {
  std::string model, in, out;
  std::optional<double> threshold;
} chunk_o;

bool is_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') return line.starts_with("hrchunk-checkpoint");
  return false;
}

int run_chunk() {
  const std::string text = read_file(chunk_o.model);
  auto corpus = read_corpus(chunk_o.in);
  std::vector<LabeledSentence> out(corpus.size());
  if (is_checkpoint(text)) {
    HrnnChunker model = HrnnChunker::from_checkpoint(read_checkpoint(text));
    if (chunk_o.threshold) model.options().threshold = *chunk_o.threshold;
    parallel_for(corpus.size(), g.threads, [&](std::size_t i) {
      out[i].sentence = corpus[i].sentence;
      out[i].tags = model.chunk(corpus[i].sentence, o_mask(corpus[i].tags));
    });
  } else {
    BaselineModel bm = read_baseline_model(text);
    std::optional<EmbeddingProvider> provider;
    if (bm.kind == "lm") provider.emplace(bm.lm_spec);
    const double tau = chunk_o.threshold.value_or(bm.kind == "lm" ? bm.lm_tau : bm.pmi.tau);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const auto& s = corpus[i].sentence;
      const OMask mask = o_mask(corpus[i].tags);
      out[i].sentence = s;
      if (bm.kind == "pmi") out[i].tags = pmi_chunk(PmiModel{bm.pmi.counts, tau}, s, mask);
      else if (bm.kind == "hmm") out[i].tags = hmm_chunk(bm.hmm, s, mask);
      else out[i].tags = lm_chunk(*provider, s, tau, mask);
    }
  }
  write_output(chunk_o.out, write_conll2000(out));
  return 0;
}

struct EvalOpts {
  std::string gold, pred, out;
} eval_o;

int run_eval() {
  auto gold = read_corpus(eval_o.gold);
  auto pred = read_corpus(eval_o.pred);
  if (gold.size() != pred.size())
    throw Error("gold has " + std::to_string(gold.size()) + " sentences, prediction " + std::to_string(pred.size()));
  std::vector<TagSeq> gt, pt;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].sentence.forms() != pred[i].sentence.forms())
      throw Error("sentence " + gold[i].sentence.id + ": gold and prediction tokens differ");
    gt.push_back(gold[i].tags);
    pt.push_back(pred[i].tags);
    ids.push_back(gold[i].sentence.id);
  }
  EvalReport r = evaluate(gt, pt, ids);
  std::cout << format_report(r);
  if (!eval_o.out.empty()) write_output(eval_o.out, report_key_values(r));
  return 0;
}

struct BaselineOpts {
  std::string train, valid, out, grid, emb = "kind=hashed,d=32,seed=1", log;
  std::optional<double> tau;
  bool lowercase = false;
  std::size_t states = 2;
  int iters = 30;
} base_o;

double f1_on(const std::vector<LabeledSentence>& valid, const std::function<TagSeq(const LabeledSentence&)>& f) {
  std::vector<TagSeq> gold, pred;
  for (const auto& ls : valid) {
    gold.push_back(ls.tags);
    pred.push_back(f(ls));
  }
  return evaluate(gold, pred).f1;
}

double select_tau(const std::string& name, const std::vector<LabeledSentence>& valid,
                  const std::function<double(double)>& f1_of) {
  if (base_o.tau) {
    if (!base_o.grid.empty()) throw UsageError(name + ": --tau and --tau-grid are exclusive");
    return *base_o.tau;
  }
  if (valid.empty()) throw UsageError(name + ": --valid is required for the tau grid search");
  GridResult gr = grid_search(parse_grid(base_o.grid.empty() ? (name == "lm" ? "-1:1:0.05" : "-5:5:0.5") : base_o.grid),
                              f1_of);
  std::cout << "selected tau " << fmt(gr.best_value, "%g") << " validation F1 " << fmt(gr.best_f1, "%.2f") << '\n';
  return gr.best_value;
}

int run_pmi() {
  auto train = read_corpus(base_o.train);
  std::vector<LabeledSentence> valid;
  if (!base_o.valid.empty()) valid = read_corpus(base_o.valid);
  PmiModel m{pmi_fit(sentences_of(train), base_o.lowercase), 0.0};
  m.tau = select_tau("pmi", valid, [&](double tau) {
    PmiModel t{m.counts, tau};
    return f1_on(valid, [&](const LabeledSentence& ls) { return pmi_chunk(t, ls.sentence, o_mask(ls.tags)); });
  });
  write_output(base_o.out, write_pmi_model(m));
  return 0;
}

int run_hmm() {
  const std::uint64_t seed = require_seed("baseline hmm");
  auto train = read_corpus(base_o.train);
  HmmFitResult r = hmm_fit(sentences_of(train), base_o.states, seed, base_o.iters, base_o.lowercase);
  if (!base_o.valid.empty()) {
    auto valid = read_corpus(base_o.valid);
    r.model.state_tags = hmm_select_state_tags(r.model, valid);
    HmmModel& m = r.model;
    std::cout << "validation F1 "
              << fmt(f1_on(valid, [&](const LabeledSentence& ls) { return hmm_chunk(m, ls.sentence, o_mask(ls.tags)); }),
                     "%.2f")
              << '\n';
  }
  write_output(base_o.out, write_hmm_model(r.model));
  if (!base_o.log.empty()) {
    std::string log = "iter,loglik\n";
    for (std::size_t i = 0; i < r.loglik.size(); ++i) log += std::to_string(i) + "," + fmt(r.loglik[i], "%.10f") + "\n";
    write_output(base_o.log, log);
  }
  return 0;
}

int run_lm() {
  std::vector<LabeledSentence> valid;
  if (!base_o.valid.empty()) valid = read_corpus(base_o.valid);
  const ProviderSpec spec = ProviderSpec::parse(base_o.emb);
  EmbeddingProvider provider(spec);
  const double tau = select_tau("lm", valid, [&](double t) {
    return f1_on(valid, [&](const LabeledSentence& ls) { return lm_chunk(provider, ls.sentence, t, o_mask(ls.tags)); });
  });
  write_output(base_o.out, write_lm_model(spec, tau));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hrchunk: unsupervised chunking toolkit", "hrchunk"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  std::map<const CLI::App*, std::function<int()>> handlers;
  auto add = [&](CLI::App* parent, const std::string& name, const std::string& desc, std::function<int()> fn) {
    CLI::App* sub = parent->add_subcommand(name, desc);
    add_common(sub);
    handlers[sub] = std::move(fn);
    return sub;
  };

  auto* synth = add(&app, "synth", "Sample a chunk-annotated corpus from the built-in grammar", run_synth);
  synth->add_option("--count", synth_o.count)->capture_default_str();
  synth->add_option("--min-len", synth_o.min_len)->capture_default_str();
  synth->add_option("--max-len", synth_o.max_len)->capture_default_str();
  synth->add_option("--prefix", synth_o.prefix)->capture_default_str();
  synth->add_option("--out", synth_o.out, "CoNLL output")->required();
  synth->add_option("--trees-out", synth_o.trees_out, "Gold derivation trees");
  synth->add_option("--grammar-out", synth_o.grammar_out, "The generating grammar");

  auto* ind = add(&app, "induce", "Chunk tags from binary trees", run_induce);
  ind->add_option("--trees", induce_o.trees)->required();
  ind->add_option("--heuristic", induce_o.heuristic)
      ->check(CLI::IsMember({"left", "right", "small"}))
      ->capture_default_str();
  ind->add_option("--pos-from", induce_o.pos_from, "CoNLL file to copy POS tags from");
  ind->add_option("--out", induce_o.out)->required();

  auto* parse = add(&app, "parse", "Viterbi-CYK parse a corpus", run_parse);
  parse->add_option("--grammar", parse_o.grammar)->required();
  parse->add_option("--in", parse_o.in, "CoNLL input")->required();
  parse->add_option("--out", parse_o.out, "Trees output")->required();
  parse->add_option("--unk", parse_o.unk, "Terminal standing in for unknown words");
  parse->add_flag("--skip-unparseable", parse_o.skip_unparseable);

  auto* em = add(&app, "pcfg-em", "Inside-outside EM", run_pcfg_em);
  em->add_option("--init", em_o.init, "Initial grammar");
  em->add_option("--random", em_o.random, "Random initial grammar with N:P symbols");
  em->add_flag("--randomize", em_o.randomize, "Redraw the probabilities of the --init grammar's rules");
  em->add_option("--corpus", em_o.corpus)->required();
  em->add_option("--iters", em_o.iters)->check(CLI::NonNegativeNumber)->capture_default_str();
  em->add_option("--unk", em_o.unk);
  em->add_option("--out", em_o.out)->required();
  em->add_option("--log", em_o.log, "Likelihood log");

  auto* pre = add(&app, "pretrain", "Train the HRNN on chunk tags", run_pretrain);
  pre->add_option("--train", pre_o.train)->required();
  pre->add_option("--valid", pre_o.valid);
  pre->add_option("--emb", pre_o.emb)->capture_default_str();
  pre->add_option("--hidden", pre_o.hidden)->check(CLI::PositiveNumber)->capture_default_str();
  pre->add_option("--epochs", pre_o.epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
  pre->add_option("--batch", pre_o.batch)->check(CLI::PositiveNumber)->capture_default_str();
  pre->add_option("--lr", pre_o.lr)->capture_default_str();
  pre->add_option("--threshold", pre_o.threshold)->capture_default_str();
  pre->add_option("--out", pre_o.out)->required();
  pre->add_option("--log", pre_o.log);

  auto* ft = add(&app, "finetune", "Finetune through a toy transduction task", run_finetune);
  ft->add_option("--model", ft_o.model, "Pretrained checkpoint");
  ft->add_flag("--scratch", ft_o.scratch, "Start from a random HRNN");
  ft->add_option("--emb", ft_o.emb, "Embeddings with --scratch")->capture_default_str();
  ft->add_option("--hidden", ft_o.hidden, "HRNN width with --scratch")->capture_default_str();
  ft->add_option("--task", ft_o.task)->check(CLI::IsMember({"copy", "reverse", "chunk-heads"}))->capture_default_str();
  ft->add_option("--task-data", ft_o.task_data, "CoNLL task sources (default: synthetic)");
  ft->add_option("--task-heldout", ft_o.task_heldout);
  ft->add_option("--task-count", ft_o.task_count)->capture_default_str();
  ft->add_option("--heldout-count", ft_o.heldout_count)->capture_default_str();
  ft->add_option("--eval", ft_o.eval, "Chunk evaluation set (default: the held-out split)");
  ft->add_option("--gamma", ft_o.gamma)->capture_default_str();
  ft->add_option("--eta", ft_o.eta)->capture_default_str();
  ft->add_option("--kappa", ft_o.kappa)->capture_default_str();
  ft->add_option("--lr", ft_o.lr)->capture_default_str();
  ft->add_option("--steps", ft_o.steps)->capture_default_str();
  ft->add_option("--batch", ft_o.batch)->check(CLI::PositiveNumber)->capture_default_str();
  ft->add_option("--eval-every", ft_o.eval_every)->check(CLI::PositiveNumber)->capture_default_str();
  ft->add_option("--dec-embed", ft_o.dec_embed)->capture_default_str();
  ft->add_option("--dec-hidden", ft_o.dec_hidden)->capture_default_str();
  ft->add_option("--heads", ft_o.heads)->capture_default_str();
  ft->add_option("--head-dim", ft_o.head_dim)->capture_default_str();
  ft->add_option("--curves", ft_o.curves)->required();
  ft->add_option("--out", ft_o.out, "Best checkpoint by phrase F1")->required();
  ft->add_option("--last-out", ft_o.last_out, "Final checkpoint");

  auto* ch = add(&app, "chunk", "Tag a corpus with an HRNN or baseline model", run_chunk);
  ch->add_option("--model", chunk_o.model)->required();
  ch->add_option("--in", chunk_o.in)->required();
  ch->add_option("--out", chunk_o.out)->required();
  ch->add_option("--threshold", chunk_o.threshold, "Override the gate threshold or tau");

  auto* ev = add(&app, "eval", "Phrase F1 and tag accuracy", run_eval);
  ev->add_option("--gold", eval_o.gold)->required();
  ev->add_option("--pred", eval_o.pred)->required();
  ev->add_option("--out", eval_o.out, "Key-value report");

  auto* base = app.add_subcommand("baseline", "Classical unsupervised chunkers");
  base->require_subcommand(1);
  auto* pmi = add(base, "pmi", "PMI chunker", run_pmi);
  auto* hmm = add(base, "hmm", "Baum-Welch HMM chunker", run_hmm);
  auto* lm = add(base, "lm", "Embedding similarity chunker", run_lm);
  for (auto* b : {pmi, hmm}) {
    b->add_option("--train", base_o.train)->required();
    b->add_flag("--lowercase", base_o.lowercase);
  }
  for (auto* b : {pmi, lm}) {
    b->add_option("--tau-grid", base_o.grid, "lo:hi:step");
    b->add_option("--tau", base_o.tau, "Fixed threshold instead of a grid search");
  }
  for (auto* b : {pmi, hmm, lm}) {
    b->add_option("--valid", base_o.valid);
    b->add_option("--out", base_o.out)->required();
  }
  hmm->add_option("--states", base_o.states)->capture_default_str();
  hmm->add_option("--iters", base_o.iters)->capture_default_str();
  hmm->add_option("--log", base_o.log, "Likelihood log");
  lm->add_option("--emb", base_o.emb)->capture_default_str();

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = merge_config(app, std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  const CLI::App* leaf = &app;
  while (!leaf->get_subcommands().empty()) leaf = leaf->get_subcommands().front();
  auto it = handlers.find(leaf);
  if (it == handlers.end()) {
    std::cerr << app.help();
    return 2;
  }
  try {
    if (g.precision != 64) throw UsageError("--precision " + std::to_string(g.precision) + " is not supported (only 64)");
    g.provenance = provenance_line(leaf);
    return it->second();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
