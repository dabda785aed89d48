#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "hrchunk/corpus.hpp"
#include "hrchunk/embeddings.hpp"
#include "hrchunk/eval.hpp"
#include "hrchunk/params.hpp"

namespace hrchunk {

enum class GateMode { Soft, Hard };

// Learnable tensors of the two-level RNN.
//
//   gate:  m_logit = w . [lower(t-1); upper(t-1); x(t)] + b
//   lower: f_lo(x, s) = tanh(Wx x + Wh s + b)
//   upper: f_up(l, u) = tanh(Ux l + Uh u + b)
//
// plus the learnable chunk start state h_sos and the initial upper state.
class HrnnParams {
 public:
  enum Tensor : std::size_t {
    kGateW,    // 1 x (2h + d)
    kGateB,    // 1 x 1
    kLowerWx,  // h x d
    kLowerWh,  // h x h
    kLowerB,   // h x 1
    kUpperWx,  // h x h, consumes the lower state
    kUpperWh,  // h x h
    kUpperB,   // h x 1
    kSos,      // h x 1
    kUp0,      // h x 1
  };

  HrnnParams(int input_dim, int hidden_dim);  // all zeros
  static HrnnParams random(int input_dim, int hidden_dim, std::uint64_t seed);
  // Infers dimensions from the stored shapes; throws ShapeError if inconsistent.
  static HrnnParams from_set(const ParamSet& stored);

  int input_dim() const { return d_; }
  int hidden_dim() const { return h_; }

  Eigen::Map<Matrix> operator[](Tensor t) { return set_.tensor(t); }
  Eigen::Map<const Matrix> operator[](Tensor t) const { return set_.tensor(t); }
  ParamSet& set() { return set_; }
  const ParamSet& set() const { return set_; }

 private:
  int d_, h_;
  ParamSet set_;
};

// Per-step record of a forward pass. Column t of each state matrix is the
// state after step t. The branch values are kept for the backward pass.
struct HrnnTrace {
  GateMode mode = GateMode::Soft;
  bool force_first_cut = false;
  std::vector<double> logit;
  std::vector<double> gate;
  Matrix lower, upper;
  Matrix lower_cut, lower_nocut, upper_cut;

  std::size_t size() const { return gate.size(); }
  bool forced(std::size_t t) const { return force_first_cut && t == 0; }
};

double sigmoid(double z);

// x is n x d. With force_first_cut the first gate is 1 (its logit is still
// recorded). Hard mode rounds each gate to {0, 1} (>= 0.5 cuts) before
// blending. Throws NumericError naming the first non-finite step.
HrnnTrace hrnn_forward(const HrnnParams& p, const Matrix& x, GateMode mode, bool force_first_cut);

// Gradient of a scalar loss with respect to the outputs of a trace.
struct TraceGrad {
  TraceGrad(std::size_t n, int hidden_dim);
  std::vector<double> gate;   // dL/dm(t)
  std::vector<double> logit;  // direct dL/dm_logit(t), e.g. from reweighted attention
  Matrix upper;               // h x n
  Matrix lower;               // h x n
};

// Reverse-mode pass. Adds parameter gradients into `grad` (same layout as
// p.set()) and, when given, input gradients into `input_grad` (n x d).
// Throws Error for hard-mode traces.
void hrnn_backward(const HrnnParams& p, const Matrix& x, const HrnnTrace& trace, const TraceGrad& seed,
                   ParamSet& grad, Matrix* input_grad);

// B where m(t) >= threshold, I elsewhere; the first position is always B;
// masked positions become O and the result is normalized.
TagSeq decode_tags(const HrnnTrace& trace, double threshold, const OMask& mask);

struct GateLoss {
  double loss = 0.0;
  std::vector<double> d_gate;
  std::size_t supervised = 0;
};

// Mean binary cross-entropy between m(t) and the target bit (B -> 1, I -> 0)
// over positions that are neither O nor the first token.
GateLoss pretrain_loss(const HrnnTrace& trace, const TagSeq& target);

struct ChunkerOptions {
  double threshold = 0.5;
  bool force_first_cut = true;
};

// Embedding provider + HRNN, the unit that is trained, saved and used to chunk.
class HrnnChunker {
 public:
  HrnnChunker(ProviderSpec spec, int hidden_dim, std::uint64_t seed, ChunkerOptions options = {});

  EmbeddingProvider& provider() { return provider_; }
  const EmbeddingProvider& provider() const { return provider_; }
  HrnnParams& params() { return params_; }
  const HrnnParams& params() const { return params_; }
  ChunkerOptions& options() { return options_; }
  const ChunkerOptions& options() const { return options_; }

  HrnnTrace forward(const Sentence& s, GateMode mode = GateMode::Soft) const;
  TagSeq chunk(const Sentence& s, const OMask& mask) const;
  EvalReport evaluate_on(std::span<const LabeledSentence> gold, unsigned threads = 1) const;

  Checkpoint to_checkpoint() const;
  static HrnnChunker from_checkpoint(const Checkpoint& ckpt);

 private:
  EmbeddingProvider provider_;
  HrnnParams params_;
  ChunkerOptions options_;
};

// Gradients of one model (HRNN tensors plus lookup table rows, if any).
struct ModelGrad {
  ParamSet hrnn;
  std::optional<ParamSet> table;
};

ModelGrad zero_grad(const HrnnChunker& model);
void add_input_grad(const HrnnChunker& model, const Sentence& s, const Matrix& input_grad, ModelGrad& g);

struct PretrainConfig {
  int epochs = 20;
  std::size_t batch_size = 32;
  AdamConfig adam{};
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<EvalReport> valid;
};

// Adam with warm-up then linear decay, over shuffled mini-batches. Per-sentence
// gradients are reduced in sentence order. `on_epoch` is called after every
// epoch. Throws NumericError with the step number if the loss diverges.
std::vector<EpochLog> train_pretrain(HrnnChunker& model, std::span<const LabeledSentence> train,
                                     std::span<const LabeledSentence> valid, const PretrainConfig& cfg,
                                     const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace hrchunk
