#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecoc/codebook.hpp"
#include "ecoc/network.hpp"
#include "ecoc/ops.hpp"
#include "ecoc/tape.hpp"
#include "ecoc/tensor.hpp"

namespace ecoc {

/// Something that maps a batch of images to per-class scores on a tape. The
/// `unmask` flag removes output operations that can hide gradients; models
/// that have none reject it.
template <typename T>
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::size_t num_classes() const = 0;
  virtual bool supports_unmask() const = 0;
  virtual Var<T> scores(Tape<T>& tape, Var<T> x, bool unmask) const = 0;
};

/// Correlation decoder: h_m = sum_j a_mj tanh(z_j). With `unmask`
/// the tanh is dropped and h_m = sum_j a_mj z_j.
template <typename T>
Var<T> decode(Var<T> z, const CodewordMatrix& codebook, bool unmask) {
  if (z.shape().size() != 2 || z.shape()[1] != codebook.bits()) {
    throw ShapeError("decode: bit logits " + shape_str(z.shape()) + " for a codeword length of " +
                     std::to_string(codebook.bits()));
  }
  Tape<T>& tape = *z.tape;
  Tensor<T> a({codebook.classes(), codebook.bits()});
  for (std::size_t m = 0; m < codebook.classes(); ++m)
    for (std::size_t j = 0; j < codebook.bits(); ++j) a.at(m, j) = static_cast<T>(codebook(m, j));
  Var<T> t = unmask ? z : ag::tanh(z);
  return ag::linear(t, tape.constant(std::move(a), "codebook"),
                    tape.constant(Tensor<T>({codebook.classes()}), "zero"));
}

/// Index of the largest score; ties go to the lowest index.
template <typename T>
std::size_t predict(std::span<const T> h) {
  if (h.empty()) throw std::invalid_argument("predict: empty score vector");
  std::size_t best = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (!std::isfinite(h[i])) throw NumericError("predict: non-finite score");
    if (h[i] > h[best]) best = i;
  }
  return best;
}

/// Row-wise predict over a (B, M) score tensor.
template <typename T>
std::vector<std::size_t> predict(const Tensor<T>& h) {
  if (h.rank() != 2) throw ShapeError("predict: expected (B, M) scores, got " + shape_str(h.shape()));
  std::vector<std::size_t> out(h.dim(0));
  for (std::size_t r = 0; r < h.dim(0); ++r)
    out[r] = predict(std::span<const T>(h.data() + r * h.dim(1), h.dim(1)));
  return out;
}

/// Row-wise softmax of class scores.
template <typename T>
Tensor<T> class_probabilities(const Tensor<T>& h) {
  Tape<T> tape;
  const Tensor<T> rows = h.rank() == 1 ? h.reshaped({1, h.size()}) : h;
  Tensor<T> p = ag::softmax(tape.constant(rows)).value();
  return h.rank() == 1 ? p.reshaped(h.shape()) : p;
}

/// Copies checkpoint tensors named "<prefix><index>.<param>" into the nets.
template <typename T>
void assign_parameters(const std::vector<NamedTensor<T>>& named, const std::string& prefix,
                       std::vector<ConvNet<T>>& nets) {
  std::size_t expected = 0;
  for (const auto& n : nets) expected += n.parameters().size();
  if (named.size() != expected) {
    throw std::invalid_argument("checkpoint holds " + std::to_string(named.size()) +
                                " tensors, model expects " + std::to_string(expected));
  }
  std::size_t k = 0;
  for (std::size_t g = 0; g < nets.size(); ++g) {
    for (auto& p : nets[g].parameters()) {
      const auto& src = named[k++];
      const std::string want = prefix + std::to_string(g) + "." + p.name;
      if (src.name != want || src.value.shape() != p.value.shape()) {
        throw std::invalid_argument("checkpoint tensor '" + src.name + "' " +
                                    shape_str(src.value.shape()) + " does not match '" + want +
                                    "' " + shape_str(p.value.shape()));
      }
      p.value = src.value;
    }
  }
}

/// ECOC ensemble of N binary classifiers organised as N/K networks, each a
/// shared extractor with K single-logit heads. K = 1 shares nothing.
template <typename T>
class EcocEnsemble : public Classifier<T> {
 public:
  EcocEnsemble(CodewordMatrix codebook, std::size_t heads_per_group, ArchitectureSpec arch,
               std::uint64_t seed)
      : codebook_(std::move(codebook)), k_(heads_per_group), arch_(std::move(arch)), seed_(seed) {
    if (k_ == 0 || codebook_.bits() % k_ != 0) {
      throw std::invalid_argument("EcocEnsemble: N = " + std::to_string(codebook_.bits()) +
                                  " is not divisible by K = " + std::to_string(k_));
    }
    std::mt19937_64 rng(seed);
    for (std::size_t g = 0; g < codebook_.bits() / k_; ++g) groups_.emplace_back(arch_, k_, 1, rng);
  }

  std::size_t num_classes() const override { return codebook_.classes(); }
  bool supports_unmask() const override { return true; }

  std::size_t bits() const noexcept { return codebook_.bits(); }
  std::size_t heads_per_group() const noexcept { return k_; }
  std::size_t groups() const noexcept { return groups_.size(); }
  const CodewordMatrix& codebook() const noexcept { return codebook_; }
  const ArchitectureSpec& architecture() const noexcept { return arch_; }
  std::uint64_t seed() const noexcept { return seed_; }

  ConvNet<T>& group(std::size_t g) { return groups_.at(g); }
  const ConvNet<T>& group(std::size_t g) const { return groups_.at(g); }

  /// Group and head index of binary classifier n.
  std::pair<std::size_t, std::size_t> locate(std::size_t n) const {
    if (n >= bits()) throw std::out_of_range("EcocEnsemble: classifier index out of range");
    return {n / k_, n % k_};
  }

  /// Raw pre-tanh logits z, shape (B, N).
  Var<T> bit_logits(Tape<T>& tape, Var<T> x, bool trainable = false) const {
    std::vector<Var<T>> cols;
    for (const auto& g : groups_) cols.push_back(g.forward(x, g.bind(tape, trainable)));
    return cols.size() == 1 ? cols.front() : ag::concat_cols(cols);
  }

  /// Logit of binary classifier n alone, shape (B, 1).
  Var<T> bit_logit(Tape<T>& tape, Var<T> x, std::size_t n, bool trainable = false) const {
    const auto [g, head] = locate(n);
    const ConvNet<T>& net = groups_[g];
    return net.forward(x, net.bind(tape, trainable), head);
  }

  Var<T> scores(Tape<T>& tape, Var<T> x, bool unmask) const override {
    return decode(bit_logits(tape, x), codebook_, unmask);
  }

  std::vector<NamedTensor<T>> named_parameters() const {
    std::vector<NamedTensor<T>> out;
    for (std::size_t g = 0; g < groups_.size(); ++g)
      for (const auto& p : groups_[g].parameters())
        out.push_back({"group" + std::to_string(g) + "." + p.name, p.value});
    return out;
  }

  void load_parameters(const std::vector<NamedTensor<T>>& named) {
    assign_parameters(named, "group", groups_);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& g : groups_) n += g.parameter_count();
    return n;
  }

 private:
  CodewordMatrix codebook_;
  std::size_t k_;
  ArchitectureSpec arch_;
  std::uint64_t seed_;
  std::vector<ConvNet<T>> groups_;
};

enum class BaselineKind { Simple, Ensemble };

/// SIMPLE (one M-output network) or ENSEMBLE_n (n independent SIMPLE
/// networks combined by soft voting).
template <typename T>
class BaselineModel : public Classifier<T> {
 public:
  BaselineModel(BaselineKind kind, std::size_t members, std::size_t classes, ArchitectureSpec arch,
                std::uint64_t seed)
      : kind_(kind), classes_(classes), arch_(std::move(arch)), seed_(seed) {
    if (kind_ == BaselineKind::Simple && members != 1) {
      throw std::invalid_argument("BaselineModel: SIMPLE has exactly one member");
    }
    if (members == 0 || classes_ < 2) throw std::invalid_argument("BaselineModel: empty model");
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < members; ++i) members_.emplace_back(arch_, 1, classes_, rng);
  }

  static BaselineModel simple(std::size_t classes, ArchitectureSpec arch, std::uint64_t seed) {
    return BaselineModel(BaselineKind::Simple, 1, classes, std::move(arch), seed);
  }
  static BaselineModel ensemble(std::size_t members, std::size_t classes, ArchitectureSpec arch,
                                std::uint64_t seed) {
    return BaselineModel(BaselineKind::Ensemble, members, classes, std::move(arch), seed);
  }

  BaselineKind kind() const noexcept { return kind_; }
  std::size_t num_classes() const override { return classes_; }
  bool supports_unmask() const override { return kind_ == BaselineKind::Ensemble; }
  std::size_t members() const noexcept { return members_.size(); }
  const ArchitectureSpec& architecture() const noexcept { return arch_; }
  std::uint64_t seed() const noexcept { return seed_; }

  ConvNet<T>& member(std::size_t i) { return members_.at(i); }
  const ConvNet<T>& member(std::size_t i) const { return members_.at(i); }

  /// Logits of one member, shape (B, M).
  Var<T> member_logits(Tape<T>& tape, Var<T> x, std::size_t i, bool trainable = false) const {
    const ConvNet<T>& net = members_.at(i);
    return net.forward(x, net.bind(tape, trainable));
  }

  /// SIMPLE: raw logits. ENSEMBLE: sum of member softmax outputs, or of raw
  /// member logits when `unmask` is set.
  Var<T> scores(Tape<T>& tape, Var<T> x, bool unmask) const override {
    if (kind_ == BaselineKind::Simple) {
      if (unmask) throw std::invalid_argument("unmasked variant not applicable to SIMPLE");
      return member_logits(tape, x, 0);
    }
    Var<T> total{};
    for (std::size_t i = 0; i < members_.size(); ++i) {
      Var<T> logits = member_logits(tape, x, i);
      Var<T> vote = unmask ? logits : ag::softmax(logits);
      total = i == 0 ? vote : ag::add(total, vote);
    }
    return total;
  }

  std::vector<NamedTensor<T>> named_parameters() const {
    std::vector<NamedTensor<T>> out;
    for (std::size_t g = 0; g < members_.size(); ++g)
      for (const auto& p : members_[g].parameters())
        out.push_back({"member" + std::to_string(g) + "." + p.name, p.value});
    return out;
  }

  void load_parameters(const std::vector<NamedTensor<T>>& named) {
    assign_parameters(named, "member", members_);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& m : members_) n += m.parameter_count();
    return n;
  }

 private:
  BaselineKind kind_;
  std::size_t classes_;
  ArchitectureSpec arch_;
  std::uint64_t seed_;
  std::vector<ConvNet<T>> members_;
};

/// Soft-voting scores of an ENSEMBLE baseline on a batch of images.
template <typename T>
Tensor<T> softvote_forward(const BaselineModel<T>& model, const Tensor<T>& images, bool unmask) {
  if (model.kind() != BaselineKind::Ensemble) {
    throw std::invalid_argument("softvote_forward: model is not an ENSEMBLE");
  }
  Tape<T> tape;
  return model.scores(tape, tape.constant(images), unmask).value();
}

/// Scores of any classifier on a batch, evaluated in chunks of `chunk` rows.
template <typename T>
Tensor<T> evaluate_scores(const Classifier<T>& model, const Tensor<T>& images, bool unmask = false,
                          std::size_t chunk = 256) {
  const std::size_t n = images.dim(0);
  std::vector<T> out;
  out.reserve(n * model.num_classes());
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    Tape<T> tape;
    const Tensor<T> h = model.scores(tape, tape.constant(images.rows(begin, end)), unmask).value();
    out.insert(out.end(), h.values().begin(), h.values().end());
  }
  return Tensor<T>({n, model.num_classes()}, std::move(out));
}

template <typename T>
std::vector<std::size_t> predict_labels(const Classifier<T>& model, const Tensor<T>& images) {
  return predict(evaluate_scores(model, images, false));
}

/// Raw bit logits of an ECOC ensemble, evaluated in chunks.
template <typename T>
Tensor<T> evaluate_bit_logits(const EcocEnsemble<T>& model, const Tensor<T>& images,
                              std::size_t chunk = 256) {
  const std::size_t n = images.dim(0);
  std::vector<T> out;
  out.reserve(n * model.bits());
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    Tape<T> tape;
    const Tensor<T> z = model.bit_logits(tape, tape.constant(images.rows(begin, end))).value();
    out.insert(out.end(), z.values().begin(), z.values().end());
  }
  return Tensor<T>({n, model.bits()}, std::move(out));
}

}  // namespace ecoc
