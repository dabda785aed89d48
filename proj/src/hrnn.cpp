#include "hrchunk/hrnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "hrchunk/error.hpp"
#include "hrchunk/numparse.hpp"
#include "hrchunk/parallel.hpp"
#include "hrchunk/rng.hpp"

namespace hrchunk {

namespace {

void fill_uniform(Eigen::Map<Matrix> m, Rng& rng, double scale) {
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-scale, scale);
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

HrnnParams::HrnnParams(int input_dim, int hidden_dim) : d_(input_dim), h_(hidden_dim) {
  if (d_ < 1 || h_ < 1) throw ShapeError("HRNN dimensions must be positive");
  set_.add("gate_w", 1, 2 * h_ + d_);
  set_.add("gate_b", 1, 1);
  set_.add("lower_wx", h_, d_);
  set_.add("lower_wh", h_, h_);
  set_.add("lower_b", h_, 1);
  set_.add("upper_wx", h_, h_);
  set_.add("upper_wh", h_, h_);
  set_.add("upper_b", h_, 1);
  set_.add("h_sos", h_, 1);
  set_.add("h_up0", h_, 1);
}

HrnnParams HrnnParams::random(int input_dim, int hidden_dim, std::uint64_t seed) {
  HrnnParams p(input_dim, hidden_dim);
  Rng rng(seed);
  const double d = input_dim, h = hidden_dim;
  fill_uniform(p[kGateW], rng, std::sqrt(6.0 / (2 * h + d + 1)));
  fill_uniform(p[kLowerWx], rng, std::sqrt(6.0 / (h + d)));
  fill_uniform(p[kLowerWh], rng, std::sqrt(6.0 / (2 * h)));
  fill_uniform(p[kUpperWx], rng, std::sqrt(6.0 / (2 * h)));
  fill_uniform(p[kUpperWh], rng, std::sqrt(6.0 / (2 * h)));
  fill_uniform(p[kSos], rng, 0.1);
  fill_uniform(p[kUp0], rng, 0.1);
  return p;
}

HrnnParams HrnnParams::from_set(const ParamSet& stored) {
  if (stored.entries().size() != 10) throw ShapeError("HRNN parameter set must hold 10 tensors");
  const auto& lw = stored.entries()[kLowerWx];
  HrnnParams p(static_cast<int>(lw.cols), static_cast<int>(lw.rows));
  p.set_.assign_from(stored);
  return p;
}

HrnnTrace hrnn_forward(const HrnnParams& p, const Matrix& x, GateMode mode, bool force_first_cut) {
  const int h = p.hidden_dim();
  const int d = p.input_dim();
  if (x.cols() != d)
    throw ShapeError("input has " + std::to_string(x.cols()) + " columns, HRNN expects " + std::to_string(d));
  const auto n = static_cast<std::size_t>(x.rows());
  if (n == 0) throw Error("hrnn_forward: empty sentence");

  HrnnTrace tr;
  tr.mode = mode;
  tr.force_first_cut = force_first_cut;
  tr.logit.resize(n);
  tr.gate.resize(n);
  const auto cols = static_cast<Eigen::Index>(n);
  tr.lower.resize(h, cols);
  tr.upper.resize(h, cols);
  tr.lower_cut.resize(h, cols);
  tr.lower_nocut.resize(h, cols);
  tr.upper_cut.resize(h, cols);

  auto gw = p[HrnnParams::kGateW];
  const double gb = p[HrnnParams::kGateB](0, 0);
  auto wx = p[HrnnParams::kLowerWx];
  auto wh = p[HrnnParams::kLowerWh];
  auto lb = p[HrnnParams::kLowerB];
  auto ux = p[HrnnParams::kUpperWx];
  auto uh = p[HrnnParams::kUpperWh];
  auto ub = p[HrnnParams::kUpperB];
  const Vector sos = p[HrnnParams::kSos];

  // The cut branch of the lower RNN always restarts from h_sos.
  const Vector sos_drive = wh * sos + lb;
  Vector lower_prev = sos;
  Vector upper_prev = p[HrnnParams::kUp0];
  for (std::size_t t = 0; t < n; ++t) {
    const auto c = static_cast<Eigen::Index>(t);
    const Vector xt = x.row(c).transpose();
    double logit = gb + (gw.leftCols(h) * lower_prev)(0) + (gw.middleCols(h, h) * upper_prev)(0) +
                   (gw.rightCols(d) * xt)(0);
    double m = sigmoid(logit);
    if (tr.forced(t)) m = 1.0;
    if (mode == GateMode::Hard) m = m >= 0.5 ? 1.0 : 0.0;
    tr.logit[t] = logit;
    tr.gate[t] = m;

    const Vector x_drive = wx * xt;
    tr.lower_cut.col(c) = (x_drive + sos_drive).array().tanh();
    tr.lower_nocut.col(c) = (x_drive + wh * lower_prev + lb).array().tanh();
    tr.upper_cut.col(c) = (ux * lower_prev + uh * upper_prev + ub).array().tanh();

    tr.upper.col(c) = m * tr.upper_cut.col(c) + (1.0 - m) * upper_prev;
    tr.lower.col(c) = m * tr.lower_cut.col(c) + (1.0 - m) * tr.lower_nocut.col(c);
    if (!std::isfinite(logit) || !tr.upper.col(c).allFinite() || !tr.lower.col(c).allFinite())
      throw NumericError("non-finite HRNN state at step " + std::to_string(t + 1));
    lower_prev = tr.lower.col(c);
    upper_prev = tr.upper.col(c);
  }
  return tr;
}

TraceGrad::TraceGrad(std::size_t n, int hidden_dim)
    : gate(n, 0.0),
      logit(n, 0.0),
      upper(Matrix::Zero(hidden_dim, static_cast<Eigen::Index>(n))),
      lower(Matrix::Zero(hidden_dim, static_cast<Eigen::Index>(n))) {}

void hrnn_backward(const HrnnParams& p, const Matrix& x, const HrnnTrace& tr, const TraceGrad& seed,
                   ParamSet& grad, Matrix* input_grad) {
  if (tr.mode == GateMode::Hard) throw Error("hrnn_backward: hard-mode traces are not differentiable");
  if (!grad.same_layout(p.set())) throw ShapeError("hrnn_backward: gradient layout mismatch");
  const int h = p.hidden_dim();
  const int d = p.input_dim();
  const std::size_t n = tr.size();
  if (input_grad && (input_grad->rows() != x.rows() || input_grad->cols() != d))
    throw ShapeError("hrnn_backward: input gradient has the wrong shape");

  auto gw = p[HrnnParams::kGateW];
  auto wx = p[HrnnParams::kLowerWx];
  auto wh = p[HrnnParams::kLowerWh];
  auto ux = p[HrnnParams::kUpperWx];
  auto uh = p[HrnnParams::kUpperWh];
  const Vector sos = p[HrnnParams::kSos];
  const Vector up0 = p[HrnnParams::kUp0];

  auto d_gw = grad.tensor(HrnnParams::kGateW);
  auto d_gb = grad.tensor(HrnnParams::kGateB);
  auto d_wx = grad.tensor(HrnnParams::kLowerWx);
  auto d_wh = grad.tensor(HrnnParams::kLowerWh);
  auto d_lb = grad.tensor(HrnnParams::kLowerB);
  auto d_ux = grad.tensor(HrnnParams::kUpperWx);
  auto d_uh = grad.tensor(HrnnParams::kUpperWh);
  auto d_ub = grad.tensor(HrnnParams::kUpperB);
  auto d_sos = grad.tensor(HrnnParams::kSos);
  auto d_up0 = grad.tensor(HrnnParams::kUp0);

  Vector carry_lower = Vector::Zero(h);
  Vector carry_upper = Vector::Zero(h);
  for (std::size_t tt = n; tt-- > 0;) {
    const auto c = static_cast<Eigen::Index>(tt);
    const double m = tr.gate[tt];
    const Vector lower_prev = tt ? Vector(tr.lower.col(c - 1)) : sos;
    const Vector upper_prev = tt ? Vector(tr.upper.col(c - 1)) : up0;
    const Vector xt = x.row(c).transpose();

    const Vector g_upper = seed.upper.col(c) + carry_upper;
    const Vector g_lower = seed.lower.col(c) + carry_lower;

    // Blends.
    double g_m = seed.gate[tt];
    g_m += g_upper.dot(tr.upper_cut.col(c) - upper_prev);
    g_m += g_lower.dot(tr.lower_cut.col(c) - tr.lower_nocut.col(c));
    Vector g_upper_prev = (1.0 - m) * g_upper;
    Vector g_lower_prev = Vector::Zero(h);

    // Upper cut branch.
    const Vector a_up = (m * g_upper).array() * (1.0 - tr.upper_cut.col(c).array().square());
    d_ux.noalias() += a_up * lower_prev.transpose();
    d_uh.noalias() += a_up * upper_prev.transpose();
    d_ub += a_up;
    g_lower_prev.noalias() += ux.transpose() * a_up;
    g_upper_prev.noalias() += uh.transpose() * a_up;

    // Lower cut branch (restarts from h_sos).
    const Vector a_cut = (m * g_lower).array() * (1.0 - tr.lower_cut.col(c).array().square());
    d_wx.noalias() += a_cut * xt.transpose();
    d_wh.noalias() += a_cut * sos.transpose();
    d_lb += a_cut;
    d_sos.noalias() += wh.transpose() * a_cut;

    // Lower no-cut branch.
    const Vector a_nocut = ((1.0 - m) * g_lower).array() * (1.0 - tr.lower_nocut.col(c).array().square());
    d_wx.noalias() += a_nocut * xt.transpose();
    d_wh.noalias() += a_nocut * lower_prev.transpose();
    d_lb += a_nocut;
    g_lower_prev.noalias() += wh.transpose() * a_nocut;

    Vector g_x = wx.transpose() * (a_cut + a_nocut);

    // Gate. A forced gate is a constant; its logit can still carry a direct gradient.
    double g_logit = seed.logit[tt] + (tr.forced(tt) ? 0.0 : g_m * m * (1.0 - m));
    d_gw.leftCols(h) += g_logit * lower_prev.transpose();
    d_gw.middleCols(h, h) += g_logit * upper_prev.transpose();
    d_gw.rightCols(d) += g_logit * xt.transpose();
    d_gb(0, 0) += g_logit;
    g_lower_prev += g_logit * gw.leftCols(h).transpose();
    g_upper_prev += g_logit * gw.middleCols(h, h).transpose();
    g_x += g_logit * gw.rightCols(d).transpose();

    if (input_grad) input_grad->row(c) += g_x.transpose();
    if (tt == 0) {
      d_sos += g_lower_prev;
      d_up0 += g_upper_prev;
    } else {
      carry_lower = g_lower_prev;
      carry_upper = g_upper_prev;
    }
  }
}

TagSeq decode_tags(const HrnnTrace& trace, double threshold, const OMask& mask) {
  TagSeq tags(trace.size());
  for (std::size_t t = 0; t < trace.size(); ++t)
    tags[t] = (t == 0 || trace.gate[t] >= threshold) ? Tag::B : Tag::I;
  return apply_mask(std::move(tags), mask);
}

GateLoss pretrain_loss(const HrnnTrace& trace, const TagSeq& target) {
  if (target.size() != trace.size())
    throw Error("pretrain_loss: " + std::to_string(target.size()) + " targets for " +
                std::to_string(trace.size()) + " steps");
  constexpr double kEps = 1e-15;
  GateLoss out;
  out.d_gate.assign(trace.size(), 0.0);
  for (std::size_t t = 1; t < trace.size(); ++t) {
    if (target[t] == Tag::O) continue;
    ++out.supervised;
  }
  if (out.supervised == 0) return out;
  const double scale = 1.0 / static_cast<double>(out.supervised);
  for (std::size_t t = 1; t < trace.size(); ++t) {
    if (target[t] == Tag::O) continue;
    const double m = std::clamp(trace.gate[t], kEps, 1.0 - kEps);
    if (target[t] == Tag::B) {
      out.loss -= std::log(m);
      out.d_gate[t] = -scale / m;
    } else {
      out.loss -= std::log1p(-m);
      out.d_gate[t] = scale / (1.0 - m);
    }
  }
  out.loss *= scale;
  return out;
}

HrnnChunker::HrnnChunker(ProviderSpec spec, int hidden_dim, std::uint64_t seed, ChunkerOptions options)
    : provider_(std::move(spec)),
      params_(HrnnParams::random(provider_.dim(), hidden_dim, seed)),
      options_(options) {}

HrnnTrace HrnnChunker::forward(const Sentence& s, GateMode mode) const {
  return hrnn_forward(params_, provider_.embed(s), mode, options_.force_first_cut);
}

TagSeq HrnnChunker::chunk(const Sentence& s, const OMask& mask) const {
  return decode_tags(forward(s), options_.threshold, mask);
}

EvalReport HrnnChunker::evaluate_on(std::span<const LabeledSentence> gold, unsigned threads) const {
  std::vector<TagSeq> g(gold.size()), p(gold.size());
  parallel_for(gold.size(), threads, [&](std::size_t i) {
    g[i] = gold[i].tags;
    p[i] = chunk(gold[i].sentence, o_mask(gold[i].tags));
  });
  return evaluate(g, p);
}

Checkpoint HrnnChunker::to_checkpoint() const {
  Checkpoint ck;
  ck.meta["kind"] = "hrnn";
  ck.meta["embeddings"] = provider_.spec().to_string();
  ck.meta["hidden"] = std::to_string(params_.hidden_dim());
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", options_.threshold);
  ck.meta["threshold"] = buf;
  ck.meta["force_first_cut"] = options_.force_first_cut ? "1" : "0";
  ck.params.emplace("hrnn", params_.set());
  if (const auto* table = provider_.lookup()) {
    ck.params.emplace("lookup", table->params());
    ck.vocabs["lookup"] = table->types();
  }
  return ck;
}

HrnnChunker HrnnChunker::from_checkpoint(const Checkpoint& ck) {
  if (ck.get("kind") != "hrnn") throw Error("checkpoint is not an HRNN chunker (kind=" + ck.get("kind") + ")");
  ChunkerOptions opts;
  auto threshold = parse_double(ck.get("threshold"));
  if (!threshold) throw ParseError("bad threshold in checkpoint", 0);
  opts.threshold = *threshold;
  opts.force_first_cut = ck.get("force_first_cut") == "1";
  HrnnChunker model(ProviderSpec::parse(ck.get("embeddings")), std::stoi(ck.get("hidden")), 0, opts);
  auto it = ck.params.find("hrnn");
  if (it == ck.params.end()) throw LookupError("checkpoint lacks HRNN parameters");
  model.params_.set().assign_from(it->second);
  if (auto* table = model.provider_.lookup()) {
    auto t = ck.params.find("lookup");
    auto v = ck.vocabs.find("lookup");
    if (t == ck.params.end() || v == ck.vocabs.end()) throw LookupError("checkpoint lacks the lookup table");
    table->restore(v->second, t->second);
  }
  return model;
}

ModelGrad zero_grad(const HrnnChunker& model) {
  ModelGrad g{model.params().set().zeros_like(), std::nullopt};
  if (const auto* table = model.provider().lookup()) g.table = table->params().zeros_like();
  return g;
}

void add_input_grad(const HrnnChunker& model, const Sentence& s, const Matrix& input_grad, ModelGrad& g) {
  if (!g.table) return;
  auto rows = model.provider().rows(s);
  auto t = g.table->tensor(0);
  for (std::size_t i = 0; i < rows.size(); ++i)
    t.row(static_cast<Eigen::Index>(rows[i])) += input_grad.row(static_cast<Eigen::Index>(i));
}

std::vector<EpochLog> train_pretrain(HrnnChunker& model, std::span<const LabeledSentence> train,
                                     std::span<const LabeledSentence> valid, const PretrainConfig& cfg,
                                     const std::function<void(const EpochLog&)>& on_epoch) {
  if (train.empty()) throw Error("train_pretrain: empty training corpus");
  if (cfg.epochs < 0 || cfg.batch_size == 0) throw Error("train_pretrain: bad epoch or batch settings");
  {
    std::vector<Sentence> sents;
    sents.reserve(train.size());
    for (const auto& ls : train) sents.push_back(ls.sentence);
    model.provider().build_vocabulary(sents);
  }

  const std::size_t batches_per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = batches_per_epoch * static_cast<std::size_t>(cfg.epochs);
  Adam adam(model.params().set().size(), cfg.adam, total_steps);
  std::optional<Adam> table_adam;
  if (auto* table = model.provider().lookup()) table_adam.emplace(table->params().size(), cfg.adam, total_steps);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);
  std::vector<EpochLog> logs;
  std::size_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      std::vector<ModelGrad> grads(count);
      std::vector<double> losses(count, 0.0);
      parallel_for(count, cfg.threads, [&](std::size_t b) {
        const auto& ex = train[order[start + b]];
        Matrix x = model.provider().embed(ex.sentence);
        HrnnTrace tr = hrnn_forward(model.params(), x, GateMode::Soft, model.options().force_first_cut);
        GateLoss gl = pretrain_loss(tr, ex.tags);
        TraceGrad seed(tr.size(), model.params().hidden_dim());
        seed.gate = gl.d_gate;
        grads[b] = zero_grad(model);
        Matrix gx = Matrix::Zero(x.rows(), x.cols());
        hrnn_backward(model.params(), x, tr, seed, grads[b].hrnn, grads[b].table ? &gx : nullptr);
        add_input_grad(model, ex.sentence, gx, grads[b]);
        losses[b] = gl.loss;
      });
      ModelGrad total = zero_grad(model);
      double batch_loss = 0.0;
      for (std::size_t b = 0; b < count; ++b) {
        total.hrnn.values() += grads[b].hrnn.values();
        if (total.table) total.table->values() += grads[b].table->values();
        batch_loss += losses[b];
      }
      ++step;
      if (!std::isfinite(batch_loss) || !total.hrnn.values().allFinite())
        throw NumericError("pretraining diverged at step " + std::to_string(step));
      const double inv = 1.0 / static_cast<double>(count);
      adam.step(model.params().set().values(), total.hrnn.values() * inv);
      if (table_adam) table_adam->step(model.provider().lookup()->params().values(), total.table->values() * inv);
      epoch_loss += batch_loss;
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / static_cast<double>(train.size());
    if (!valid.empty()) log.valid = model.evaluate_on(valid, cfg.threads);
    if (on_epoch) on_epoch(log);
    logs.push_back(log);
  }
  return logs;
}

}  // namespace hrchunk
