#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace hrchunk {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Named tensors over one flat vector of doubles. Optimizers, gradient
// accumulation and checkpoints all work on the flat view.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::Index offset = 0;
  };

  // Returns the tensor id. Invalidates previously obtained maps.
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols);

  Eigen::Map<Matrix> tensor(std::size_t id) {
    const auto& e = entries_[id];
    return {values_.data() + e.offset, e.rows, e.cols};
  }
  Eigen::Map<const Matrix> tensor(std::size_t id) const {
    const auto& e = entries_[id];
    return {values_.data() + e.offset, e.rows, e.cols};
  }
  std::size_t find(std::string_view name) const;  // throws LookupError

  const std::vector<Entry>& entries() const { return entries_; }
  Vector& values() { return values_; }
  const Vector& values() const { return values_; }
  Eigen::Index size() const { return values_.size(); }

  ParamSet zeros_like() const;
  bool same_layout(const ParamSet& other) const;

  // Copies values from `stored`; throws ShapeError unless names and shapes match.
  void assign_from(const ParamSet& stored);

 private:
  std::vector<Entry> entries_;
  Vector values_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double warmup_fraction = 0.1;
};

// Linear warm-up over the first warmup_fraction of total_steps, then linear
// decay to zero at total_steps.
double scheduled_lr(const AdamConfig& cfg, std::size_t step, std::size_t total_steps);

class Adam {
 public:
  Adam(Eigen::Index size, AdamConfig cfg, std::size_t total_steps);
  // Applies one update and advances the schedule.
  void step(Vector& params, const Vector& grad);
  std::size_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::size_t total_;
  std::size_t t_ = 0;
  Vector m_, v_;
};

// Versioned text container: metadata, named parameter sets (shapes plus
// row-major values at 17 significant digits) and named vocabularies.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::map<std::string, ParamSet> params;
  std::map<std::string, std::vector<std::string>> vocabs;

  const std::string& get(const std::string& key) const;  // throws LookupError
};

std::string write_checkpoint(const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::string_view text);

}  // namespace hrchunk
