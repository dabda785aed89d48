#include "hrchunk/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "hrchunk/error.hpp"
#include "hrchunk/eval.hpp"
#include "hrchunk/parallel.hpp"
#include "hrchunk/rng.hpp"

namespace hrchunk {

Vector reweighted_attention(const Vector& scores, const Vector& m_logit, double gamma) {
  if (scores.size() != m_logit.size())
    throw NumericError("attention: " + std::to_string(scores.size()) + " scores for " +
                       std::to_string(m_logit.size()) + " gate logits");
  if (scores.size() == 0) throw NumericError("attention over an empty sequence");
  Vector z = scores + gamma * m_logit;
  if (z.hasNaN()) throw NumericError("attention logits contain NaN");
  const double mx = z.maxCoeff();
  Vector e = (z.array() - mx).exp();
  return e / e.sum();
}

Vector reweighted_attention(const Vector& q, const Matrix& keys, const Vector& m_logit, double gamma) {
  if (keys.rows() != q.size()) throw ShapeError("attention: key and query dimensions differ");
  Vector scores = keys.transpose() * q / std::sqrt(static_cast<double>(q.size()));
  return reweighted_attention(scores, m_logit, gamma);
}

AuxLoss aux_loss(const std::vector<double>& gates, double kappa, const std::vector<bool>& excluded) {
  const std::size_t n = gates.size();
  AuxLoss out;
  out.d_gate.assign(n, 0.0);
  out.top.assign(n, false);
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < n; ++t)
    if (t >= excluded.size() || !excluded[t]) idx.push_back(t);
  const auto k = static_cast<std::size_t>(std::floor(kappa * static_cast<double>(idx.size()) + 0.5));
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return gates[a] > gates[b]; });
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const std::size_t t = idx[r];
    const double target = r < k ? 1.0 : 0.0;
    const double diff = gates[t] - target;
    out.top[t] = r < k;
    out.loss += diff * diff;
    out.d_gate[t] = 2.0 * diff;
  }
  return out;
}

std::vector<bool> aux_exclusions(const HrnnTrace& trace, const OMask& mask) {
  std::vector<bool> ex(trace.size(), false);
  for (std::size_t t = 0; t < trace.size(); ++t) ex[t] = trace.forced(t) || (t < mask.size() && mask[t]);
  return ex;
}

// ---------------------------------------------------------------------------

DecoderParams::DecoderParams(std::size_t vocab_size, int encoder_hidden, DecoderConfig cfg)
    : vocab_(vocab_size), enc_h_(encoder_hidden), cfg_(cfg) {
  if (vocab_ < 2 || enc_h_ < 1 || cfg_.embed_dim < 1 || cfg_.hidden_dim < 1 || cfg_.heads < 1 || cfg_.head_dim < 1)
    throw ShapeError("decoder dimensions must be positive and the vocabulary needs two symbols");
  const auto V = static_cast<Eigen::Index>(vocab_);
  const int a = cfg_.heads * cfg_.head_dim;
  set_.add("tgt_emb", V, cfg_.embed_dim);
  set_.add("dec_wx", cfg_.hidden_dim, cfg_.embed_dim);
  set_.add("dec_wh", cfg_.hidden_dim, cfg_.hidden_dim);
  set_.add("dec_b", cfg_.hidden_dim, 1);
  set_.add("dec_s0", cfg_.hidden_dim, 1);
  set_.add("att_wq", a, cfg_.hidden_dim);
  set_.add("att_wk", a, enc_h_);
  set_.add("att_wv", a, 2 * enc_h_);
  set_.add("out_w", V, cfg_.hidden_dim + a);
  set_.add("out_b", V, 1);
}

DecoderParams DecoderParams::random(std::size_t vocab_size, int encoder_hidden, DecoderConfig cfg,
                                    std::uint64_t seed) {
  DecoderParams p(vocab_size, encoder_hidden, cfg);
  Rng rng(seed);
  auto fill = [&](Tensor t) {
    auto m = p[t];
    const double scale = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-scale, scale);
  };
  for (Tensor t : {kTgtEmb, kWx, kWh, kWq, kWk, kWv, kWo}) fill(t);
  return p;
}

DecoderParams DecoderParams::from_set(const ParamSet& stored, int heads) {
  if (stored.entries().size() != 10) throw ShapeError("decoder parameter set must hold 10 tensors");
  if (heads < 1) throw ShapeError("decoder needs at least one head");
  const auto& e = stored.entries();
  DecoderConfig cfg;
  cfg.embed_dim = static_cast<int>(e[kTgtEmb].cols);
  cfg.hidden_dim = static_cast<int>(e[kWh].rows);
  cfg.heads = heads;
  if (e[kWq].rows % heads != 0) throw ShapeError("decoder attention width is not a multiple of the head count");
  cfg.head_dim = static_cast<int>(e[kWq].rows / heads);
  DecoderParams p(static_cast<std::size_t>(e[kTgtEmb].rows), static_cast<int>(e[kWk].cols), cfg);
  p.set_.assign_from(stored);
  return p;
}

XentResult seq_xent(const DecoderParams& dec, const HrnnTrace& trace, const std::vector<std::size_t>& target,
                    std::size_t bos, double gamma, ParamSet* dec_grad, TraceGrad* enc_grad, double scale) {
  const auto& cfg = dec.config();
  const int H = cfg.heads, dk = cfg.head_dim, hd = cfg.hidden_dim;
  const auto V = static_cast<Eigen::Index>(dec.vocab_size());
  const auto n = static_cast<Eigen::Index>(trace.size());
  const auto T = target.size();
  if (T == 0) throw Error("seq_xent: empty target");
  if (trace.upper.rows() != dec.encoder_hidden()) throw ShapeError("seq_xent: encoder width mismatch");
  if (bos >= dec.vocab_size()) throw VocabularyError("id " + std::to_string(bos));
  for (std::size_t y : target)
    if (y >= dec.vocab_size()) throw VocabularyError("id " + std::to_string(y));

  auto emb = dec[DecoderParams::kTgtEmb];
  auto wx = dec[DecoderParams::kWx];
  auto wh = dec[DecoderParams::kWh];
  auto b = dec[DecoderParams::kB];
  auto wq = dec[DecoderParams::kWq];
  auto wk = dec[DecoderParams::kWk];
  auto wv = dec[DecoderParams::kWv];
  auto wo = dec[DecoderParams::kWo];
  auto bo = dec[DecoderParams::kBo];

  const Eigen::Map<const Vector> m_logit(trace.logit.data(), n);
  Matrix enc(2 * trace.upper.rows(), n);
  enc.topRows(trace.upper.rows()) = trace.upper;
  enc.bottomRows(trace.upper.rows()) = trace.lower;
  const Matrix keys = wk * trace.upper;  // (H dk) x n
  const Matrix vals = wv * enc;          // (H dk) x n
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

  // Forward, keeping what the backward pass needs.
  Matrix states(hd, static_cast<Eigen::Index>(T + 1));
  states.col(0) = dec[DecoderParams::kS0];
  std::vector<Matrix> alphas(T);  // n x H per step
  Matrix feats(hd + H * dk, static_cast<Eigen::Index>(T));
  Matrix probs(V, static_cast<Eigen::Index>(T));
  XentResult res;
  for (std::size_t j = 0; j < T; ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    const std::size_t in = j == 0 ? bos : target[j - 1];
    const Vector drive = wx * emb.row(static_cast<Eigen::Index>(in)).transpose() + wh * states.col(c) + b;
    states.col(c + 1) = drive.array().tanh();
    const Vector s = states.col(c + 1);
    const Vector q = wq * s;
    feats.col(c).head(hd) = s;
    alphas[j].resize(n, H);
    for (int h = 0; h < H; ++h) {
      Vector scores = keys.middleRows(h * dk, dk).transpose() * q.segment(h * dk, dk) * inv_sqrt;
      Vector a = reweighted_attention(scores, m_logit, gamma);
      alphas[j].col(h) = a;
      feats.col(c).segment(hd + h * dk, dk) = vals.middleRows(h * dk, dk) * a;
    }
    Vector o = wo * feats.col(c) + bo;
    const double mx = o.maxCoeff();
    Vector e = (o.array() - mx).exp();
    const double z = e.sum();
    probs.col(c) = e / z;
    res.loss -= (o(static_cast<Eigen::Index>(target[j])) - mx - std::log(z));
    Eigen::Index arg = 0;
    o.maxCoeff(&arg);
    res.argmax.push_back(static_cast<std::size_t>(arg));
  }
  const double inv_t = 1.0 / static_cast<double>(T);
  res.loss *= inv_t;
  if (!std::isfinite(res.loss)) throw NumericError("seq_xent: non-finite loss");
  if (dec_grad == nullptr) return res;
  if (!dec.set().same_layout(*dec_grad)) throw ShapeError("seq_xent: gradient layout mismatch");

  auto g_emb = dec_grad->tensor(DecoderParams::kTgtEmb);
  auto g_wx = dec_grad->tensor(DecoderParams::kWx);
  auto g_wh = dec_grad->tensor(DecoderParams::kWh);
  auto g_b = dec_grad->tensor(DecoderParams::kB);
  auto g_s0 = dec_grad->tensor(DecoderParams::kS0);
  auto g_wq = dec_grad->tensor(DecoderParams::kWq);
  auto g_wk = dec_grad->tensor(DecoderParams::kWk);
  auto g_wv = dec_grad->tensor(DecoderParams::kWv);
  auto g_wo = dec_grad->tensor(DecoderParams::kWo);
  auto g_bo = dec_grad->tensor(DecoderParams::kBo);

  Matrix d_keys = Matrix::Zero(keys.rows(), n);
  Matrix d_vals = Matrix::Zero(vals.rows(), n);
  Vector d_logit = Vector::Zero(n);
  Matrix d_states = Matrix::Zero(hd, static_cast<Eigen::Index>(T + 1));
  const double w = scale * inv_t;

  for (std::size_t j = 0; j < T; ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    Vector d_o = probs.col(c) * w;
    d_o(static_cast<Eigen::Index>(target[j])) -= w;
    g_wo += d_o * feats.col(c).transpose();
    g_bo += d_o;
    const Vector d_feat = wo.transpose() * d_o;
    d_states.col(c + 1) += d_feat.head(hd);
    const Vector s = states.col(c + 1);
    const Vector q = wq * s;
    Vector d_q = Vector::Zero(q.size());
    for (int h = 0; h < H; ++h) {
      const Vector a = alphas[j].col(h);
      const Vector d_ctx = d_feat.segment(hd + h * dk, dk);
      d_vals.middleRows(h * dk, dk) += d_ctx * a.transpose();
      const Vector d_a = vals.middleRows(h * dk, dk).transpose() * d_ctx;
      const Vector d_z = a.array() * (d_a.array() - a.dot(d_a));
      d_logit += gamma * d_z;
      d_q.segment(h * dk, dk) += keys.middleRows(h * dk, dk) * d_z * inv_sqrt;
      d_keys.middleRows(h * dk, dk) += q.segment(h * dk, dk) * d_z.transpose() * inv_sqrt;
    }
    g_wq += d_q * s.transpose();
    d_states.col(c + 1) += wq.transpose() * d_q;
  }
  for (std::size_t j = T; j-- > 0;) {
    const auto c = static_cast<Eigen::Index>(j);
    const std::size_t in = j == 0 ? bos : target[j - 1];
    const Vector s = states.col(c + 1);
    const Vector d_pre = d_states.col(c + 1).array() * (1.0 - s.array().square());
    g_wx += d_pre * emb.row(static_cast<Eigen::Index>(in));
    g_emb.row(static_cast<Eigen::Index>(in)) += (wx.transpose() * d_pre).transpose();
    g_wh += d_pre * states.col(c).transpose();
    g_b += d_pre;
    d_states.col(c) += wh.transpose() * d_pre;
  }
  g_s0 += d_states.col(0);
  g_wk += d_keys * trace.upper.transpose();
  g_wv += d_vals * enc.transpose();

  if (enc_grad != nullptr) {
    const Eigen::Index eh = trace.upper.rows();
    const Matrix d_enc = wv.transpose() * d_vals;
    enc_grad->upper += wk.transpose() * d_keys + d_enc.topRows(eh);
    enc_grad->lower += d_enc.bottomRows(eh);
    for (Eigen::Index t = 0; t < n; ++t) enc_grad->logit[static_cast<std::size_t>(t)] += d_logit(t);
  }
  return res;
}

// ---------------------------------------------------------------------------

TaskKind parse_task_kind(const std::string& s) {
  if (s == "copy") return TaskKind::Copy;
  if (s == "reverse") return TaskKind::Reverse;
  if (s == "chunk-heads") return TaskKind::ChunkHeads;
  throw Error("unknown task '" + s + "' (expected copy, reverse or chunk-heads)");
}

std::string task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::Copy: return "copy";
    case TaskKind::Reverse: return "reverse";
    case TaskKind::ChunkHeads: return "chunk-heads";
  }
  return "?";
}

std::size_t ToyTask::id(const std::string& form) const {
  auto it = std::lower_bound(vocab.begin() + 2, vocab.end(), form);
  if (it == vocab.end() || *it != form) throw VocabularyError(form);
  return static_cast<std::size_t>(it - vocab.begin());
}

namespace {

std::vector<std::string> target_forms(TaskKind kind, const LabeledSentence& ls) {
  std::vector<std::string> out;
  const auto& toks = ls.sentence.tokens;
  switch (kind) {
    case TaskKind::Copy:
      for (const auto& t : toks) out.push_back(t.form);
      break;
    case TaskKind::Reverse:
      for (auto it = toks.rbegin(); it != toks.rend(); ++it) out.push_back(it->form);
      break;
    case TaskKind::ChunkHeads:
      if (ls.tags.size() != toks.size())
        throw Error("chunk-heads needs gold tags for sentence " + ls.sentence.id);
      for (const auto& sp : tags_to_spans(ls.tags)) out.push_back(toks[sp.start].form);
      break;
  }
  return out;
}

}  // namespace

ToyTask make_toy_task(TaskKind kind, std::span<const LabeledSentence> train,
                      std::span<const LabeledSentence> heldout) {
  ToyTask task;
  task.kind = kind;
  std::vector<std::string> forms;
  for (auto split : {train, heldout})
    for (const auto& ls : split)
      for (auto& f : target_forms(kind, ls)) forms.push_back(std::move(f));
  std::sort(forms.begin(), forms.end());
  forms.erase(std::unique(forms.begin(), forms.end()), forms.end());
  task.vocab = {"<s>", "</s>"};
  for (auto& f : forms)
    if (f != "<s>" && f != "</s>") task.vocab.push_back(std::move(f));

  auto build = [&](std::span<const LabeledSentence> split, std::vector<TaskExample>& dst) {
    for (const auto& ls : split) {
      if (ls.sentence.size() == 0) continue;
      TaskExample ex{ls.sentence, {}, {}};
      if (ls.tags.size() == ls.sentence.size()) ex.mask = o_mask(ls.tags);
      for (const auto& f : target_forms(kind, ls)) ex.target.push_back(task.id(f));
      ex.target.push_back(ToyTask::kEos);
      dst.push_back(std::move(ex));
    }
  };
  build(train, task.train);
  build(heldout, task.heldout);
  if (task.train.empty()) throw Error("toy task has no training examples");
  return task;
}

// ---------------------------------------------------------------------------

void FinetuneConfig::validate() const {
  if (!(kappa >= 0.0 && kappa <= 1.0)) throw Error("kappa must lie in [0, 1]");
  if (!(gamma >= 0.0) || !(eta >= 0.0)) throw Error("gamma and eta must be non-negative");
  if (batch_size == 0 || eval_every == 0) throw Error("batch size and eval interval must be positive");
}

Checkpoint finetune_checkpoint(const HrnnChunker& model, const DecoderParams& decoder, const ToyTask& task,
                               std::size_t step) {
  Checkpoint ck = model.to_checkpoint();
  ck.meta["step"] = std::to_string(step);
  ck.meta["task"] = task_kind_name(task.kind);
  ck.meta["decoder_heads"] = std::to_string(decoder.config().heads);
  ck.params.emplace("decoder", decoder.set());
  ck.vocabs["target"] = task.vocab;
  return ck;
}

GateStats gate_stats(const HrnnChunker& model, std::span<const LabeledSentence> data) {
  std::vector<double> sum(data.size(), 0.0);
  std::vector<std::size_t> count(data.size(), 0), polar(data.size(), 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    HrnnTrace tr = model.forward(data[i].sentence);
    auto ex = aux_exclusions(tr, o_mask(data[i].tags));
    for (std::size_t t = 0; t < tr.size(); ++t) {
      if (ex[t]) continue;
      const double m = tr.gate[t];
      sum[i] += m;
      ++count[i];
      if (m <= 0.1 || m >= 0.9) ++polar[i];
    }
  }
  double s = 0.0;
  std::size_t c = 0, p = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    s += sum[i];
    c += count[i];
    p += polar[i];
  }
  GateStats g;
  if (c > 0) {
    g.mean_gate = s / static_cast<double>(c);
    g.polarized_frac = static_cast<double>(p) / static_cast<double>(c);
  }
  return g;
}

namespace {

struct ExampleGrad {
  ModelGrad model;
  ParamSet decoder;
  double task = 0.0;
  double aux = 0.0;
};

double heldout_loss(const HrnnChunker& model, const DecoderParams& dec, const std::vector<TaskExample>& data,
                    double gamma, unsigned threads) {
  std::vector<double> losses(data.size(), 0.0);
  parallel_for(data.size(), threads, [&](std::size_t i) {
    HrnnTrace tr = model.forward(data[i].source);
    losses[i] = seq_xent(dec, tr, data[i].target, ToyTask::kBos, gamma).loss;
  });
  double total = 0.0;
  for (double l : losses) total += l;
  return data.empty() ? 0.0 : total / static_cast<double>(data.size());
}

}  // namespace

FinetuneResult finetune_loop(HrnnChunker& model, DecoderParams& decoder, const ToyTask& task,
                             std::span<const LabeledSentence> chunk_eval, const FinetuneConfig& cfg,
                             const std::function<void(const CurvePoint&)>& on_record) {
  cfg.validate();
  if (task.train.empty()) throw Error("finetune_loop: empty task");
  if (decoder.vocab_size() != task.vocab.size()) throw ShapeError("decoder vocabulary differs from the task's");
  if (decoder.encoder_hidden() != model.params().hidden_dim()) throw ShapeError("decoder and HRNN widths differ");
  {
    std::vector<Sentence> sents;
    for (const auto& ex : task.train) sents.push_back(ex.source);
    model.provider().build_vocabulary(sents);
  }

  Adam adam(model.params().set().size(), cfg.adam, cfg.steps);
  Adam dec_adam(decoder.set().size(), cfg.adam, cfg.steps);
  std::optional<Adam> table_adam;
  if (auto* table = model.provider().lookup()) table_adam.emplace(table->params().size(), cfg.adam, cfg.steps);

  std::vector<std::size_t> order(task.train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);
  rng.shuffle(order.begin(), order.end());
  std::size_t cursor = 0;

  FinetuneResult result;
  double last_batch_loss = 0.0;
  auto record = [&](std::size_t step) {
    CurvePoint pt;
    pt.step = step;
    pt.task_loss = task.heldout.empty() ? last_batch_loss
                                        : heldout_loss(model, decoder, task.heldout, cfg.gamma, cfg.threads);
    EvalReport rep = model.evaluate_on(chunk_eval, cfg.threads);
    pt.phrase_f1 = rep.f1;
    pt.tag_acc = rep.tag_accuracy;
    GateStats gs = gate_stats(model, chunk_eval);
    pt.mean_gate = gs.mean_gate;
    pt.polarized_frac = gs.polarized_frac;
    result.curves.push_back(pt);
    if (pt.phrase_f1 > result.best_f1) {
      result.best_f1 = pt.phrase_f1;
      result.best_step = step;
      result.best = finetune_checkpoint(model, decoder, task, step);
    }
    if (on_record) on_record(pt);
  };

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    std::vector<std::size_t> batch;
    while (batch.size() < std::min(cfg.batch_size, order.size())) {
      if (cursor == order.size()) {
        rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    std::vector<ExampleGrad> grads(batch.size());
    parallel_for(batch.size(), cfg.threads, [&](std::size_t b) {
      const TaskExample& ex = task.train[batch[b]];
      Matrix x = model.provider().embed(ex.source);
      HrnnTrace tr = hrnn_forward(model.params(), x, GateMode::Soft, model.options().force_first_cut);
      ExampleGrad& g = grads[b];
      g.model = zero_grad(model);
      g.decoder = decoder.set().zeros_like();
      TraceGrad seed(tr.size(), model.params().hidden_dim());
      g.task = seq_xent(decoder, tr, ex.target, ToyTask::kBos, cfg.gamma, &g.decoder, &seed).loss;
      if (cfg.eta > 0.0) {
        AuxLoss aux = aux_loss(tr.gate, cfg.kappa, aux_exclusions(tr, ex.mask));
        g.aux = aux.loss;
        for (std::size_t t = 0; t < tr.size(); ++t) seed.gate[t] += cfg.eta * aux.d_gate[t];
      }
      Matrix gx = Matrix::Zero(x.rows(), x.cols());
      hrnn_backward(model.params(), x, tr, seed, g.model.hrnn, g.model.table ? &gx : nullptr);
      add_input_grad(model, ex.source, gx, g.model);
    });
    ModelGrad total = zero_grad(model);
    ParamSet dec_total = decoder.set().zeros_like();
    double batch_loss = 0.0;
    for (const auto& g : grads) {
      total.hrnn.values() += g.model.hrnn.values();
      if (total.table) total.table->values() += g.model.table->values();
      dec_total.values() += g.decoder.values();
      batch_loss += total_loss(g.task, g.aux, cfg.eta);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    batch_loss *= inv;
    if (!std::isfinite(batch_loss) || !total.hrnn.values().allFinite() || !dec_total.values().allFinite())
      throw NumericError("finetuning diverged at step " + std::to_string(step) + " (batch loss " +
                         std::to_string(batch_loss) + ")");
    last_batch_loss = 0.0;
    for (const auto& g : grads) last_batch_loss += g.task;
    last_batch_loss *= inv;
    adam.step(model.params().set().values(), total.hrnn.values() * inv);
    dec_adam.step(decoder.set().values(), dec_total.values() * inv);
    if (table_adam) table_adam->step(model.provider().lookup()->params().values(), total.table->values() * inv);

    if (step % cfg.eval_every == 0 || step == cfg.steps) record(step);
  }
  if (cfg.steps == 0) record(0);
  result.last = finetune_checkpoint(model, decoder, task, cfg.steps);
  return result;
}

std::string write_curves(const std::vector<CurvePoint>& curves) {
  std::ostringstream out;
  out << "step,task_loss,phrase_f1,tag_acc,mean_gate,polarized_frac\n";
  char buf[256];
  for (const auto& p : curves) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n", p.step, p.task_loss, p.phrase_f1,
                  p.tag_acc, p.mean_gate, p.polarized_frac);
    out << buf;
  }
  return out.str();
}

}  // namespace hrchunk
