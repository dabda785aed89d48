#include "hrchunk/params.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "hrchunk/error.hpp"
#include "hrchunk/numparse.hpp"

namespace hrchunk {

std::size_t ParamSet::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  Entry e{std::move(name), rows, cols, values_.size()};
  Vector grown = Vector::Zero(values_.size() + rows * cols);
  grown.head(values_.size()) = values_;
  values_ = std::move(grown);
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

std::size_t ParamSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  throw LookupError("no tensor named '" + std::string(name) + "'");
}

ParamSet ParamSet::zeros_like() const {
  ParamSet z;
  z.entries_ = entries_;
  z.values_ = Vector::Zero(values_.size());
  return z;
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
  }
  return true;
}

void ParamSet::assign_from(const ParamSet& stored) {
  if (!same_layout(stored)) {
    std::string msg = "parameter shape mismatch:";
    for (std::size_t i = 0; i < std::max(entries_.size(), stored.entries_.size()); ++i) {
      auto show = [](const std::vector<Entry>& es, std::size_t k) {
        if (k >= es.size()) return std::string("-");
        return es[k].name + "[" + std::to_string(es[k].rows) + "x" + std::to_string(es[k].cols) + "]";
      };
      std::string want = show(entries_, i), got = show(stored.entries_, i);
      if (want != got) msg += " expected " + want + " got " + got + ";";
    }
    throw ShapeError(msg);
  }
  values_ = stored.values_;
}

double scheduled_lr(const AdamConfig& cfg, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return cfg.lr;
  auto warm = static_cast<std::size_t>(std::ceil(cfg.warmup_fraction * static_cast<double>(total_steps)));
  if (step < warm) return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(warm);
  if (step >= total_steps) return 0.0;
  return cfg.lr * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warm);
}

Adam::Adam(Eigen::Index size, AdamConfig cfg, std::size_t total_steps)
    : cfg_(cfg), total_(total_steps), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

void Adam::step(Vector& params, const Vector& grad) {
  double lr = scheduled_lr(cfg_, t_, total_);
  ++t_;
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
  if (lr == 0.0) return;
  double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Eigen::Index i = 0; i < params.size(); ++i)
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
}

const std::string& Checkpoint::get(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw LookupError("checkpoint has no '" + key + "' entry");
  return it->second;
}

namespace {
constexpr const char* kMagic = "hrchunk-checkpoint";
constexpr int kVersion = 1;
}  // namespace

std::string write_checkpoint(const Checkpoint& ckpt) {
  std::ostringstream out;
  out << kMagic << ' ' << kVersion << '\n';
  for (const auto& [k, v] : ckpt.meta) out << "meta " << k << ' ' << v << '\n';
  char buf[40];
  for (const auto& [name, ps] : ckpt.params) {
    out << "params " << name << ' ' << ps.entries().size() << '\n';
    for (std::size_t id = 0; id < ps.entries().size(); ++id) {
      const auto& e = ps.entries()[id];
      out << "tensor " << e.name << ' ' << e.rows << ' ' << e.cols << '\n';
      auto t = ps.tensor(id);
      for (Eigen::Index r = 0; r < e.rows; ++r) {
        for (Eigen::Index c = 0; c < e.cols; ++c) {
          std::snprintf(buf, sizeof buf, "%.17g", t(r, c));
          out << (c ? " " : "") << buf;
        }
        out << '\n';
      }
    }
  }
  for (const auto& [name, words] : ckpt.vocabs) {
    out << "vocab " << name << ' ' << words.size() << '\n';
    for (const auto& w : words) out << w << '\n';
  }
  out << "end\n";
  return out.str();
}

Checkpoint read_checkpoint(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t no = 0;
  // '#' lines are comments (provenance headers).
  auto next_line = [&]() -> std::string& {
    do {
      if (!std::getline(in, line)) throw ParseError("unexpected end of checkpoint", no + 1);
      ++no;
    } while (!line.empty() && line[0] == '#');
    return line;
  };
  {
    std::istringstream head(next_line());
    std::string magic;
    int version = 0;
    head >> magic >> version;
    if (magic != kMagic) throw ParseError("not a checkpoint file", no);
    if (version != kVersion)
      throw ParseError("unsupported checkpoint version " + std::to_string(version), no);
  }
  Checkpoint ckpt;
  while (true) {
    std::istringstream ls(next_line());
    std::string kind;
    ls >> kind;
    if (kind == "end") break;
    if (kind == "meta") {
      std::string key, value;
      ls >> key;
      std::getline(ls >> std::ws, value);
      ckpt.meta[key] = value;
    } else if (kind == "params") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      ParamSet ps;
      for (std::size_t k = 0; k < count; ++k) {
        std::istringstream ts(next_line());
        std::string tag, tname;
        Eigen::Index rows = -1, cols = -1;
        ts >> tag >> tname >> rows >> cols;
        if (tag != "tensor" || rows < 0 || cols < 0) throw ParseError("bad tensor header", no);
        auto id = ps.add(tname, rows, cols);
        auto t = ps.tensor(id);
        for (Eigen::Index r = 0; r < rows; ++r) {
          std::istringstream vs(next_line());
          for (Eigen::Index c = 0; c < cols; ++c) {
            std::string tok;
            if (!(vs >> tok)) throw ParseError("tensor row too short", no);
            auto v = parse_double(tok);
            if (!v) throw ParseError("bad value '" + tok + "'", no);
            t(r, c) = *v;
          }
        }
      }
      ckpt.params.emplace(name, std::move(ps));
    } else if (kind == "vocab") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      auto& words = ckpt.vocabs[name];
      for (std::size_t k = 0; k < count; ++k) words.push_back(next_line());
    } else {
      throw ParseError("unknown checkpoint record '" + kind + "'", no);
    }
  }
  return ckpt;
}

}  // namespace hrchunk
