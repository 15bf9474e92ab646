#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ecoc/models.hpp"
#include "ecoc/ops.hpp"
#include "ecoc/optim.hpp"
#include "ecoc/tape.hpp"
#include "ecoc/tensor.hpp"

namespace ecoc {

enum class AttackFamily { Fgsm, Pgd, CwL2, PerBitPgd };
enum class AttackLoss { CrossEntropy, CwMargin, PerBitHinge };

struct AttackSpec {
  std::string tag = "pgd";
  AttackFamily family = AttackFamily::Pgd;
  AttackLoss loss = AttackLoss::CrossEntropy;
  /// l-infinity radius for FGSM and PGD; for C&W the l2 threshold lives in
  /// `l2_bound` and `epsilon` is unused.
  double epsilon = 0.031;
  std::size_t iterations = 200;
  /// Defaults to epsilon / 3.
  std::optional<double> step_size;
  bool early_stop = false;
  bool unmask = false;
  double learning_rate = 5e-3;
  double confidence = 0;
  std::size_t binary_search_steps = 5;
  double initial_c = 1e-2;
  double l2_bound = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;

  double step() const { return step_size ? *step_size : epsilon / 3; }
  std::string norm() const { return family == AttackFamily::CwL2 ? "l2" : "linf"; }

  void validate() const {
    if (!(epsilon >= 0) || !std::isfinite(epsilon)) throw std::invalid_argument("attack: epsilon must be finite and >= 0");
    if (step_size && epsilon > 0 && !(*step_size > 0)) throw std::invalid_argument("attack: step_size must be > 0");
    if ((family == AttackFamily::Pgd || family == AttackFamily::PerBitPgd || family == AttackFamily::CwL2) &&
        iterations == 0)
      throw std::invalid_argument("attack: iterations must be >= 1");
    if (family == AttackFamily::CwL2) {
      if (!(learning_rate > 0)) throw std::invalid_argument("attack: C&W learning rate must be > 0");
      if (binary_search_steps == 0) throw std::invalid_argument("attack: C&W needs at least one binary step");
      if (!(initial_c > 0)) throw std::invalid_argument("attack: C&W initial c must be > 0");
      if (!(confidence >= 0)) throw std::invalid_argument("attack: C&W confidence must be >= 0");
      if (!(l2_bound >= 0)) throw std::invalid_argument("attack: l2 bound must be >= 0");
    }
  }
};

inline const std::vector<std::string>& attack_tags() {
  static const std::vector<std::string> tags{"pgd",       "pgd_es",         "pgd_es_plus", "pgd_cw",
                                             "pgd_cw_plus", "pgd_cw_es",     "pgd_cw_es_plus",
                                             "fgsm",      "cw_l2",          "cw_l2_plus"};
  return tags;
}

/// Builds a spec from an attack tag. `epsilon` is the l-infinity radius for
/// FGSM/PGD tags and the l2 threshold for C&W tags.
inline AttackSpec attack_from_tag(const std::string& tag, double epsilon) {
  const auto& tags = attack_tags();
  if (std::find(tags.begin(), tags.end(), tag) == tags.end()) {
    std::string valid;
    for (const auto& t : tags) valid += (valid.empty() ? "" : ", ") + t;
    throw std::invalid_argument("unknown attack tag '" + tag + "'; valid tags: " + valid);
  }
  AttackSpec s;
  s.tag = tag;
  s.unmask = tag.ends_with("_plus");
  if (tag.starts_with("cw_l2")) {
    s.family = AttackFamily::CwL2;
    s.loss = AttackLoss::CwMargin;
    s.iterations = 1000;
    s.l2_bound = epsilon;
    s.epsilon = 0;
    return s;
  }
  s.family = tag == "fgsm" ? AttackFamily::Fgsm : AttackFamily::Pgd;
  s.loss = tag.starts_with("pgd_cw") ? AttackLoss::CwMargin : AttackLoss::CrossEntropy;
  s.early_stop = tag.find("_es") != std::string::npos;
  s.epsilon = epsilon;
  if (s.family == AttackFamily::Fgsm) s.iterations = 1;
  return s;
}

template <typename T>
struct AttackResult {
  Tensor<T> adversarial;
  /// Fresh predictions of the unmodified model on `adversarial`.
  std::vector<std::size_t> predictions;
  /// prediction != label.
  std::vector<bool> success;
  std::vector<double> linf;
  std::vector<double> l2;
  std::size_t iterations = 0;
  std::size_t gradient_evaluations = 0;
  /// C&W only: the [lo, hi] interval of c after each binary-search round.
  std::vector<std::vector<std::pair<double, double>>> c_intervals;

  std::size_t size() const noexcept { return success.size(); }
  double accuracy() const {
    std::size_t ok = 0;
    for (bool s : success) ok += !s;
    return success.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(success.size());
  }
};

namespace attack_detail {

template <typename T>
void check_batch(const Classifier<T>& model, const Tensor<T>& x, const std::vector<std::size_t>& labels) {
  if (x.rank() < 2) throw ShapeError("attack: input must be a batch, got " + shape_str(x.shape()));
  if (labels.size() != x.dim(0)) {
    throw ShapeError("attack: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(x.dim(0)) + " examples");
  }
  for (std::size_t y : labels)
    if (y >= model.num_classes()) throw std::invalid_argument("attack: label out of range");
  for (T v : x.values())
    if (!(v >= T(0) && v <= T(1))) throw std::invalid_argument("attack: input outside [0, 1]");
}

template <typename T>
Tensor<T> row_mask(std::size_t rows, std::size_t cols, const std::vector<std::size_t>& labels, T value) {
  Tensor<T> m({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) m.at(r, labels[r]) = value;
  return m;
}

inline double step_sign(double g) { return g > 0 ? 1.0 : (g < 0 ? -1.0 : 0.0); }

/// One signed ascent step from `xk`, projected onto the l-infinity ball of
/// radius eps around `x0` and onto [0, 1].
template <typename T>
Tensor<T> signed_step(const Tensor<T>& x0, const Tensor<T>& xk, const Tensor<T>& g, double step, double eps) {
  Tensor<T> out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double base = x0[i];
    double v = static_cast<double>(xk[i]) + step * step_sign(g[i]);
    v = std::min(std::max(v, base - eps), base + eps);
    T t = static_cast<T>(std::min(std::max(v, 0.0), 1.0));
    // base +- eps can round one ulp past the ball.
    while (std::abs(static_cast<double>(t) - base) > eps) t = std::nextafter(t, x0[i]);
    out[i] = t;
  }
  return out;
}

inline void check_gradient_rows(const std::vector<double>& g, std::size_t rows, const char* who) {
  const std::size_t per = g.size() / rows;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < per; ++i)
      if (!std::isfinite(g[r * per + i]))
        throw NumericError(std::string(who) + ": non-finite gradient for example " + std::to_string(r));
}

template <typename T>
void copy_row(Tensor<T>& dst, const Tensor<T>& src, std::size_t r) {
  const std::size_t per = src.size() / src.dim(0);
  std::copy(src.data() + r * per, src.data() + (r + 1) * per, dst.data() + r * per);
}

}  // namespace attack_detail

/// Per-row C&W margin max_{i != y} h_i - h_y, shape (B).
template <typename T>
Var<T> margin_rows(Var<T> h, const std::vector<std::size_t>& labels) {
  if (h.shape().size() != 2) throw ShapeError("margin: scores must be (B, M)");
  if (h.shape()[1] < 2) throw ShapeError("margin: need at least two classes");
  for (std::size_t y : labels)
    if (y >= h.shape()[1]) throw std::invalid_argument("margin: label out of range");
  Tape<T>& tape = *h.tape;
  const T big = static_cast<T>(1e30);
  Var<T> masked = ag::add(h, tape.constant(attack_detail::row_mask<T>(h.shape()[0], h.shape()[1], labels, -big)));
  return ag::sub(ag::max_rows(masked), ag::gather(h, labels));
}

/// Loss to maximize, summed over the batch: negative log-likelihood of the
/// label under softmax(h), or the C&W margin.
template <typename T>
Var<T> attack_loss(Var<T> h, const std::vector<std::size_t>& labels, AttackLoss kind) {
  if (h.shape().size() != 2 || labels.size() != h.shape()[0])
    throw ShapeError("attack_loss: scores " + shape_str(h.shape()) + " for " + std::to_string(labels.size()) + " labels");
  for (std::size_t y : labels)
    if (y >= h.shape()[1]) throw std::invalid_argument("attack_loss: label out of range");
  switch (kind) {
    case AttackLoss::CrossEntropy:
      return ag::neg(ag::sum(ag::gather(ag::log_softmax(h), labels)));
    case AttackLoss::CwMargin:
      return ag::sum(margin_rows(h, labels));
    case AttackLoss::PerBitHinge:
      break;
  }
  throw std::invalid_argument("attack_loss: the per-bit hinge needs bit logits, not class scores");
}

/// Gradient of the attack loss with respect to the input batch, together
/// with the scores it was computed from.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> input_gradient(const Classifier<T>& model, const Tensor<T>& x,
                                               const std::vector<std::size_t>& labels, AttackLoss loss,
                                               bool unmask) {
  Tape<T> tape;
  Var<T> xv = tape.variable(x, "input");
  Var<T> h = model.scores(tape, xv, unmask);
  Var<T> l = attack_loss(h, labels, loss);
  Tensor<T> g = tape.backward(l, Tensor<T>::scalar(T(1)))[xv];
  std::vector<double> gd(g.values().begin(), g.values().end());
  attack_detail::check_gradient_rows(gd, x.dim(0), "attack");
  return {std::move(g), h.value()};
}

/// Fills predictions, success flags and norms from a fresh forward pass.
template <typename T>
void finalize_attack(const Classifier<T>& model, const Tensor<T>& x, const std::vector<std::size_t>& labels,
                     AttackResult<T>& r) {
  r.predictions = predict_labels(model, r.adversarial);
  const std::size_t b = x.dim(0), per = x.size() / b;
  r.success.assign(b, false);
  r.linf.assign(b, 0.0);
  r.l2.assign(b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    r.success[i] = r.predictions[i] != labels[i];
    double inf = 0, sq = 0;
    for (std::size_t j = 0; j < per; ++j) {
      const double d = static_cast<double>(r.adversarial[i * per + j]) - static_cast<double>(x[i * per + j]);
      inf = std::max(inf, std::abs(d));
      sq += d * d;
    }
    r.linf[i] = inf;
    r.l2[i] = std::sqrt(sq);
  }
}

inline void require_unmask_support(bool unmask, bool supported) {
  if (unmask && !supported) throw std::invalid_argument("variant not applicable: model has no maskable output operation");
}

/// x' = clip(x + eps * sign(grad), 0, 1); one gradient evaluation.
template <typename T>
AttackResult<T> fgsm(const Classifier<T>& model, const Tensor<T>& x, const std::vector<std::size_t>& labels,
                     double eps, AttackLoss loss = AttackLoss::CrossEntropy, bool unmask = false) {
  if (!(eps >= 0)) throw std::invalid_argument("fgsm: epsilon must be >= 0");
  attack_detail::check_batch(model, x, labels);
  require_unmask_support(unmask, model.supports_unmask());
  AttackResult<T> r;
  const auto [g, h] = input_gradient(model, x, labels, loss, unmask);
  r.adversarial = attack_detail::signed_step(x, x, g, eps, eps);
  r.iterations = 1;
  r.gradient_evaluations = 1;
  finalize_attack(model, x, labels, r);
  return r;
}

/// Optional per-iteration hook, called with the iterate after projection.
template <typename T>
using IterateHook = std::function<void(std::size_t, const Tensor<T>&)>;

/// Projected signed-gradient ascent from x (no random start). With
/// early_stop each example returns its last iterate that the unmodified
/// model misclassified, else the final iterate.
template <typename T>
AttackResult<T> pgd(const Classifier<T>& model, const Tensor<T>& x, const std::vector<std::size_t>& labels,
                    const AttackSpec& spec, const IterateHook<T>& hook = {}) {
  spec.validate();
  if (spec.family != AttackFamily::Pgd && spec.family != AttackFamily::Fgsm)
    throw std::invalid_argument("pgd: spec is not an l-infinity gradient attack");
  attack_detail::check_batch(model, x, labels);
  require_unmask_support(spec.unmask, model.supports_unmask());
  const double eps = spec.epsilon, step = spec.step();
  if (eps > 0 && !(step > 0)) throw std::invalid_argument("pgd: step_size must be > 0");
  const std::size_t b = x.dim(0);

  AttackResult<T> r;
  Tensor<T> xk = x;
  Tensor<T> kept = x;
  std::vector<bool> ever_wrong(b, false);
  auto record_wrong = [&](const Tensor<T>& xi, const std::vector<std::size_t>& pred) {
    for (std::size_t i = 0; i < b; ++i) {
      if (pred[i] != labels[i]) {
        attack_detail::copy_row(kept, xi, i);
        ever_wrong[i] = true;
      }
    }
  };
  for (std::size_t k = 0; k < spec.iterations; ++k) {
    auto [g, h] = input_gradient(model, xk, labels, spec.loss, spec.unmask);
    ++r.gradient_evaluations;
    if (spec.early_stop) record_wrong(xk, spec.unmask ? predict_labels(model, xk) : predict(h));
    xk = attack_detail::signed_step(x, xk, g, step, eps);
    if (hook) hook(k, xk);
  }
  if (spec.early_stop) {
    record_wrong(xk, predict_labels(model, xk));
    for (std::size_t i = 0; i < b; ++i)
      if (!ever_wrong[i]) attack_detail::copy_row(kept, xk, i);
    r.adversarial = std::move(kept);
  } else {
    r.adversarial = std::move(xk);
  }
  r.iterations = spec.iterations;
  finalize_attack(model, x, labels, r);
  return r;
}

/// Maps an input batch on a tape to one logit per example, shape (B, 1).
template <typename T>
using BitLogitFn = std::function<Var<T>(Tape<T>&, Var<T>)>;

/// PGD on the hinge loss max(1 - z a, 0) of a single binary classifier,
/// where a is each example's target bit.
template <typename T>
Tensor<T> per_bit_pgd(const BitLogitFn<T>& logit, const Tensor<T>& x, const std::vector<int>& target_bits,
                      double eps, std::size_t iterations, double step,
                      std::size_t* gradient_evaluations = nullptr) {
  if (!(eps >= 0)) throw std::invalid_argument("per_bit_pgd: epsilon must be >= 0");
  if (eps > 0 && !(step > 0)) throw std::invalid_argument("per_bit_pgd: step_size must be > 0");
  if (target_bits.size() != x.dim(0)) throw ShapeError("per_bit_pgd: one target bit per example required");
  Tensor<T> a({x.dim(0), 1});
  for (std::size_t i = 0; i < target_bits.size(); ++i) {
    if (target_bits[i] != 1 && target_bits[i] != -1) throw std::invalid_argument("per_bit_pgd: target bits must be +1 or -1");
    a[i] = static_cast<T>(target_bits[i]);
  }
  Tensor<T> xk = x;
  for (std::size_t k = 0; k < iterations; ++k) {
    Tape<T> tape;
    Var<T> xv = tape.variable(xk, "input");
    Var<T> z = logit(tape, xv);
    if (z.shape() != a.shape()) throw ShapeError("per_bit_pgd: logit must have shape (B, 1), got " + shape_str(z.shape()));
    Var<T> margin = ag::mul(z, tape.constant(a));
    Var<T> loss = ag::sum(ag::relu(ag::sub(tape.constant(Tensor<T>(a.shape(), T(1))), margin)));
    Tensor<T> g = tape.backward(loss, Tensor<T>::scalar(T(1)))[xv];
    std::vector<double> gd(g.values().begin(), g.values().end());
    attack_detail::check_gradient_rows(gd, x.dim(0), "per_bit_pgd");
    if (gradient_evaluations) ++*gradient_evaluations;
    xk = attack_detail::signed_step(x, xk, g, step, eps);
  }
  return xk;
}

/// Per-bit PGD against binary classifier n of an ECOC ensemble.
template <typename T>
Tensor<T> per_bit_pgd(const EcocEnsemble<T>& model, std::size_t n, const Tensor<T>& x,
                      const std::vector<int>& target_bits, double eps, std::size_t iterations, double step,
                      std::size_t* gradient_evaluations = nullptr) {
  model.locate(n);
  return per_bit_pgd<T>([&model, n](Tape<T>& tape, Var<T> xv) { return model.bit_logit(tape, xv, n); }, x,
                        target_bits, eps, iterations, step, gradient_evaluations);
}

/// Target bits a_{y, n} for a batch of labels.
inline std::vector<int> target_bits(const CodewordMatrix& codebook, std::size_t n,
                                    const std::vector<std::size_t>& labels) {
  std::vector<int> a(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) a[i] = codebook(labels[i], n);
  return a;
}

/// Carlini-Wagner l2 in tanh space with a per-example binary search on c.
/// Before the first success c doubles; afterwards c is the midpoint of
/// [lo, hi] and the interval halves every round.
template <typename T>
AttackResult<T> cw_l2(const Classifier<T>& model, const Tensor<T>& x, const std::vector<std::size_t>& labels,
                      const AttackSpec& spec) {
  spec.validate();
  if (spec.family != AttackFamily::CwL2) throw std::invalid_argument("cw_l2: spec is not a C&W attack");
  attack_detail::check_batch(model, x, labels);
  require_unmask_support(spec.unmask, model.supports_unmask());
  const std::size_t b = x.dim(0), per = x.size() / b;
  const double inf = std::numeric_limits<double>::infinity();

  AttackResult<T> r;
  r.adversarial = x;
  r.c_intervals.assign(b, {});
  const auto clean = predict_labels(model, x);
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < b; ++i)
    if (clean[i] == labels[i]) active.push_back(i);
  if (active.empty()) {
    finalize_attack(model, x, labels, r);
    return r;
  }

  const std::size_t na = active.size();
  const Tensor<T> xa = x.select_rows(active);
  std::vector<std::size_t> ya(na);
  for (std::size_t i = 0; i < na; ++i) ya[i] = labels[active[i]];
  Tensor<T> w0(xa.shape());
  for (std::size_t i = 0; i < xa.size(); ++i)
    w0[i] = static_cast<T>(std::atanh((2.0 * xa[i] - 1.0) * (1.0 - 1e-6)));

  std::vector<double> c(na, spec.initial_c), lo(na, 0.0), hi(na, inf), best_l2(na, inf);
  Tensor<T> flat_ones({1, per}, T(1));

  for (std::size_t round = 0; round < spec.binary_search_steps; ++round) {
    Tensor<T> w = w0;
    Adam<T> opt;
    std::vector<bool> found(na, false);
    Tensor<T> cvec({na});
    for (std::size_t i = 0; i < na; ++i) cvec[i] = static_cast<T>(c[i]);
    for (std::size_t it = 0; it < spec.iterations; ++it) {
      Tensor<T> grad, xadv, scores;
      std::vector<double> dist(na);
      try {
        Tape<T> tape;
        Var<T> wv = tape.variable(w, "w");
        Var<T> xv = ag::scale(ag::add_scalar(ag::tanh(wv), T(1)), T(0.5));
        Var<T> diff = ag::sub(xv, tape.constant(xa));
        Var<T> sq = ag::reshape(ag::mul(diff, diff), {na, per});
        Var<T> d = ag::reshape(ag::linear(sq, tape.constant(flat_ones), tape.constant(Tensor<T>({1}))), {na});
        Var<T> h = model.scores(tape, xv, spec.unmask);
        Var<T> f = ag::maximum(ag::neg(margin_rows(h, ya)), static_cast<T>(-spec.confidence));
        Var<T> total = ag::sum(ag::add(d, ag::mul(f, tape.constant(cvec))));
        grad = tape.backward(total, Tensor<T>::scalar(T(1)))[wv];
        ++r.gradient_evaluations;
        xadv = xv.value();
        scores = spec.unmask ? evaluate_scores(model, xadv) : h.value();
        for (std::size_t i = 0; i < na; ++i) dist[i] = d.value()[i];
      } catch (const NumericError&) {
        break;
      }
      const auto pred = predict(scores);
      for (std::size_t i = 0; i < na; ++i) {
        double other = -inf;
        for (std::size_t m = 0; m < scores.dim(1); ++m)
          if (m != ya[i]) other = std::max(other, static_cast<double>(scores.at(i, m)));
        const bool fooled = pred[i] != ya[i] && other - scores.at(i, ya[i]) >= spec.confidence;
        if (fooled && dist[i] < best_l2[i] * best_l2[i]) {
          best_l2[i] = std::sqrt(dist[i]);
          std::copy(xadv.data() + i * per, xadv.data() + (i + 1) * per, r.adversarial.data() + active[i] * per);
        }
        found[i] = found[i] || fooled;
      }
      if (!grad.all_finite()) break;
      opt.step({&w}, {grad}, spec.learning_rate);
    }
    for (std::size_t i = 0; i < na; ++i) {
      if (found[i]) {
        hi[i] = std::min(hi[i], c[i]);
        c[i] = (lo[i] + hi[i]) / 2;
      } else {
        lo[i] = std::max(lo[i], c[i]);
        c[i] = hi[i] < inf ? (lo[i] + hi[i]) / 2 : c[i] * 2;
      }
      r.c_intervals[active[i]].push_back({lo[i], hi[i]});
    }
  }
  r.iterations = spec.iterations * spec.binary_search_steps;
  finalize_attack(model, x, labels, r);
  return r;
}

struct ThresholdAccounting {
  double robust_accuracy = 0;
  std::size_t total = 0;
  /// Successful attacks within the bound.
  std::size_t successes = 0;
  /// Successful attacks discarded for exceeding the bound.
  std::size_t discarded = 0;
};

/// Counts an example as broken iff the attack succeeded with l2 <= bound.
/// Clean misclassifications carry l2 = 0 and always count.
template <typename T>
ThresholdAccounting threshold_l2(const AttackResult<T>& r, double bound) {
  ThresholdAccounting a;
  a.total = r.size();
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!r.success[i]) continue;
    if (r.l2[i] <= bound) ++a.successes;
    else ++a.discarded;
  }
  a.robust_accuracy = a.total ? 1.0 - static_cast<double>(a.successes) / static_cast<double>(a.total) : 0.0;
  return a;
}

/// Dispatches FGSM, PGD or C&W by spec.
template <typename T>
AttackResult<T> run_attack(const Classifier<T>& model, const Tensor<T>& x, const std::vector<std::size_t>& labels,
                           const AttackSpec& spec) {
  switch (spec.family) {
    case AttackFamily::Fgsm:
      spec.validate();
      return fgsm(model, x, labels, spec.epsilon, spec.loss, spec.unmask);
    case AttackFamily::Pgd:
      return pgd(model, x, labels, spec);
    case AttackFamily::CwL2:
      return cw_l2(model, x, labels, spec);
    case AttackFamily::PerBitPgd:
      break;
  }
  throw std::invalid_argument("run_attack: per-bit PGD is a training-time attack on one binary classifier");
}

}  // namespace ecoc
