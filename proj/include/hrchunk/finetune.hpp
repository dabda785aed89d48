#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hrchunk/corpus.hpp"
#include "hrchunk/hrnn.hpp"
#include "hrchunk/params.hpp"

namespace hrchunk {

// ---------------------------------------------------------------------------
// Attention and losses

// softmax(scores + gamma * m_logit), computed after subtracting the max.
// Throws NumericError on NaN input or a length mismatch.
Vector reweighted_attention(const Vector& scores, const Vector& m_logit, double gamma);

// Same with scores = K^T q / sqrt(dim q); keys are the columns of K.
Vector reweighted_attention(const Vector& q, const Matrix& keys, const Vector& m_logit, double gamma);

struct AuxLoss {
  double loss = 0.0;
  std::vector<double> d_gate;  // zero at excluded steps
  std::vector<bool> top;       // true for steps pushed toward 1
};

// Top-k gates (k = round-half-up of kappa * #included steps, ties to the
// earlier step) incur (m - 1)^2, the other included steps m^2; summed.
AuxLoss aux_loss(const std::vector<double>& gates, double kappa, const std::vector<bool>& excluded = {});

inline double total_loss(double task_loss, double aux, double eta) { return task_loss + eta * aux; }

// Steps left out of the auxiliary loss: the forced first cut and O positions.
std::vector<bool> aux_exclusions(const HrnnTrace& trace, const OMask& mask);

// ---------------------------------------------------------------------------
// Decoder

struct DecoderConfig {
  int embed_dim = 16;
  int hidden_dim = 32;
  int heads = 1;
  int head_dim = 16;
};

// One-layer RNN decoder with multi-head attention over the encoder trace.
// Keys are projections of the upper states, values of [upper; lower].
class DecoderParams {
 public:
  enum Tensor : std::size_t {
    kTgtEmb,  // V x e
    kWx,      // hd x e
    kWh,      // hd x hd
    kB,       // hd x 1
    kS0,      // hd x 1
    kWq,      // (heads * dk) x hd
    kWk,      // (heads * dk) x h
    kWv,      // (heads * dk) x 2h
    kWo,      // V x (hd + heads * dk)
    kBo,      // V x 1
  };

  DecoderParams(std::size_t vocab_size, int encoder_hidden, DecoderConfig cfg);  // zeros
  static DecoderParams random(std::size_t vocab_size, int encoder_hidden, DecoderConfig cfg, std::uint64_t seed);
  static DecoderParams from_set(const ParamSet& stored, int heads);

  const DecoderConfig& config() const { return cfg_; }
  std::size_t vocab_size() const { return vocab_; }
  int encoder_hidden() const { return enc_h_; }

  Eigen::Map<Matrix> operator[](Tensor t) { return set_.tensor(t); }
  Eigen::Map<const Matrix> operator[](Tensor t) const { return set_.tensor(t); }
  ParamSet& set() { return set_; }
  const ParamSet& set() const { return set_; }

 private:
  std::size_t vocab_;
  int enc_h_;
  DecoderConfig cfg_;
  ParamSet set_;
};

struct XentResult {
  double loss = 0.0;  // mean over target positions
  std::vector<std::size_t> argmax;
};

// Teacher-forced cross-entropy of `target` (ids, ending with the end symbol)
// given the encoder trace. Input to the first step is `bos`. With `dec_grad`
// set, scales every gradient by `scale`, adds decoder gradients into it and
// encoder gradients into `enc_grad`.
XentResult seq_xent(const DecoderParams& dec, const HrnnTrace& trace, const std::vector<std::size_t>& target,
                    std::size_t bos, double gamma, ParamSet* dec_grad = nullptr, TraceGrad* enc_grad = nullptr,
                    double scale = 1.0);

// ---------------------------------------------------------------------------
// Toy transduction tasks

enum class TaskKind { Copy, Reverse, ChunkHeads };
TaskKind parse_task_kind(const std::string& s);
std::string task_kind_name(TaskKind k);

struct TaskExample {
  Sentence source;
  std::vector<std::size_t> target;  // ids, ending with the end symbol
  OMask mask;                       // from the gold tags when present
};

struct ToyTask {
  TaskKind kind = TaskKind::Copy;
  std::vector<std::string> vocab;  // 0 = <s>, 1 = </s>, then sorted forms
  std::vector<TaskExample> train;
  std::vector<TaskExample> heldout;

  static constexpr std::size_t kBos = 0;
  static constexpr std::size_t kEos = 1;
  std::size_t id(const std::string& form) const;  // throws VocabularyError
};

// copy: the source forms; reverse: the forms reversed; chunk-heads: the first
// token of every gold chunk. The vocabulary covers both splits.
ToyTask make_toy_task(TaskKind kind, std::span<const LabeledSentence> train,
                      std::span<const LabeledSentence> heldout);

// ---------------------------------------------------------------------------
// Finetuning loop

struct FinetuneConfig {
  double gamma = 0.1;
  double eta = 0.1;
  double kappa = 0.5;
  AdamConfig adam{};
  std::size_t steps = 1000;
  std::size_t batch_size = 16;
  std::size_t eval_every = 50;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const;  // throws Error
};

struct CurvePoint {
  std::size_t step = 0;
  double task_loss = 0.0;
  double phrase_f1 = 0.0;
  double tag_acc = 0.0;
  double mean_gate = 0.0;
  double polarized_frac = 0.0;
};

struct FinetuneResult {
  std::vector<CurvePoint> curves;
  Checkpoint best;  // highest phrase F1, earliest on ties
  Checkpoint last;
  std::size_t best_step = 0;
  double best_f1 = -1.0;
};

// Model and decoder are trained in place. Task loss in the curves is measured
// on the held-out task split (the last batch when that split is empty). A
// record is written every eval_every steps and at the final step.
FinetuneResult finetune_loop(HrnnChunker& model, DecoderParams& decoder, const ToyTask& task,
                             std::span<const LabeledSentence> chunk_eval, const FinetuneConfig& cfg,
                             const std::function<void(const CurvePoint&)>& on_record = {});

Checkpoint finetune_checkpoint(const HrnnChunker& model, const DecoderParams& decoder, const ToyTask& task,
                               std::size_t step);

// Gate statistics over the steps counted by the auxiliary loss.
struct GateStats {
  double mean_gate = 0.0;
  double polarized_frac = 0.0;
};
GateStats gate_stats(const HrnnChunker& model, std::span<const LabeledSentence> data);

std::string write_curves(const std::vector<CurvePoint>& curves);

}  // namespace hrchunk
