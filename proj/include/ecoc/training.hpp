#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecoc/attacks.hpp"
#include "ecoc/checkpoint.hpp"
#include "ecoc/data.hpp"
#include "ecoc/models.hpp"
#include "ecoc/optim.hpp"
#include "ecoc/parallel.hpp"

namespace ecoc {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AdversarialMode { None, IndAdvT, RegAdvT };

inline std::string to_string(AdversarialMode m) {
  switch (m) {
    case AdversarialMode::None: return "none";
    case AdversarialMode::IndAdvT: return "indadvt";
    case AdversarialMode::RegAdvT: return "regadvt";
  }
  return "?";
}

inline AdversarialMode adversarial_mode_from_string(const std::string& s) {
  if (s == "none") return AdversarialMode::None;
  if (s == "indadvt") return AdversarialMode::IndAdvT;
  if (s == "regadvt") return AdversarialMode::RegAdvT;
  throw std::invalid_argument("unknown adversarial mode '" + s + "' (expected none, indadvt or regadvt)");
}

struct TrainPhase {
  std::size_t epochs = 1;
  double learning_rate = 1e-4;
};

struct TrainConfig {
  std::size_t batch_size = 100;
  std::vector<TrainPhase> phases{{900, 1e-4}, {100, 1e-5}};
  AdamOptions adam{};
  AdversarialMode mode = AdversarialMode::None;
  std::size_t adv_iterations = 2;
  /// Defaults to epsilon / 3.
  std::optional<double> adv_step;
  double epsilon = 0.031;
  std::uint64_t seed = 0;
  /// Worker threads for per-classifier perturbation generation.
  std::size_t threads = 1;
  /// Append-only progress CSV; empty disables it.
  std::filesystem::path progress_csv;
  /// Directory for per-phase checkpoints; empty disables them.
  std::filesystem::path checkpoint_dir;
  /// Skip the per-epoch accuracy passes.
  bool skip_epoch_eval = false;
  /// Written as a leading "# ..." line of a fresh progress CSV.
  std::string provenance;

  double step() const { return adv_step ? *adv_step : epsilon / 3; }

  void validate() const {
    if (batch_size == 0) throw std::invalid_argument("train: batch size must be >= 1");
    if (phases.empty()) throw std::invalid_argument("train: no epoch phases");
    for (const auto& p : phases)
      if (!(p.learning_rate > 0)) throw std::invalid_argument("train: learning rates must be > 0");
    if (!(epsilon >= 0)) throw std::invalid_argument("train: epsilon must be >= 0");
    if (mode != AdversarialMode::None) {
      if (adv_iterations == 0) throw std::invalid_argument("train: adversarial iterations must be >= 1");
      if (adv_step && !(*adv_step > 0)) throw std::invalid_argument("train: adversarial step must be > 0");
    }
    if (threads == 0) throw std::invalid_argument("train: threads must be >= 1");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t phase = 0;
  double mean_loss = 0;
  double train_accuracy = 0;
  double test_accuracy = 0;
  double seconds = 0;
};

/// Counters for checking the adversarial-training mechanics.
struct TrainInstrumentation {
  std::size_t steps = 0;
  /// Independent attack runs (one per classifier per batch for IndAdvT, one
  /// per batch for RegAdvT).
  std::size_t attack_runs = 0;
  std::size_t attack_gradient_evaluations = 0;
  /// Number of pairwise-distinct input batches fed to the loss at each step.
  std::vector<std::size_t> distinct_batches;
  /// Per step, classifiers whose perturbed batch equals the clean batch
  /// (vanishing gradient on every example).
  std::vector<std::size_t> unperturbed_batches;
  /// Loss of every step, before its update.
  std::vector<double> step_losses;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::uint64_t seed = 0;
  std::string checkpoint;
  double first_batch_loss = 0;
  TrainInstrumentation instrumentation;
};

/// Mean over batch and bits of max(1 - z_n a_{y,n}, 0).
template <typename T>
Var<T> hinge_bit_loss(Var<T> z, const std::vector<std::size_t>& labels, const CodewordMatrix& codebook) {
  if (z.shape().size() != 2 || z.shape()[1] != codebook.bits()) {
    throw ShapeError("hinge_bit_loss: bit logits " + shape_str(z.shape()) + " for a codeword length of " +
                     std::to_string(codebook.bits()));
  }
  if (labels.size() != z.shape()[0]) throw ShapeError("hinge_bit_loss: label count mismatch");
  Tensor<T> a({labels.size(), codebook.bits()});
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] >= codebook.classes()) throw std::invalid_argument("hinge_bit_loss: label out of range");
    for (std::size_t j = 0; j < codebook.bits(); ++j) a.at(r, j) = static_cast<T>(codebook(labels[r], j));
  }
  Tape<T>& tape = *z.tape;
  Var<T> ones = tape.constant(Tensor<T>(a.shape(), T(1)));
  return ag::mean(ag::relu(ag::sub(ones, ag::mul(z, tape.constant(std::move(a))))));
}

namespace train_detail {

template <typename T>
std::vector<Tensor<T>*> ecoc_parameters(EcocEnsemble<T>& model) {
  std::vector<Tensor<T>*> out;
  for (std::size_t g = 0; g < model.groups(); ++g)
    for (auto& p : model.group(g).parameters()) out.push_back(&p.value);
  return out;
}

template <typename T>
std::vector<Tensor<T>*> baseline_parameters(BaselineModel<T>& model) {
  std::vector<Tensor<T>*> out;
  for (std::size_t i = 0; i < model.members(); ++i)
    for (auto& p : model.member(i).parameters()) out.push_back(&p.value);
  return out;
}

template <typename T>
std::vector<Tensor<T>> snapshot(const std::vector<Tensor<T>*>& params) {
  std::vector<Tensor<T>> out;
  for (const Tensor<T>* p : params) out.push_back(*p);
  return out;
}

template <typename T>
void restore(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& saved) {
  for (std::size_t i = 0; i < params.size(); ++i) *params[i] = saved[i];
}

/// Number of pairwise-distinct tensors among `inputs`.
template <typename T>
std::size_t distinct_count(const std::vector<const Tensor<T>*>& inputs) {
  std::vector<const Tensor<T>*> seen;
  for (const Tensor<T>* x : inputs) {
    bool found = false;
    for (const Tensor<T>* s : seen) found = found || s == x || *s == *x;
    if (!found) seen.push_back(x);
  }
  return seen.size();
}

/// One optimizer step of the hinge loss where binary classifier n sees
/// inputs[n]. Heads of a group that share identical inputs share one
/// forward pass, so equal inputs give exactly the standard training graph.
template <typename T>
double ecoc_step(EcocEnsemble<T>& model, const std::vector<const Tensor<T>*>& inputs,
                 const std::vector<std::size_t>& labels, Adam<T>& opt, double lr) {
  Tape<T> tape;
  const std::size_t k = model.heads_per_group();
  std::vector<Var<T>> params, group_out;
  for (std::size_t g = 0; g < model.groups(); ++g) {
    const ConvNet<T>& net = model.group(g);
    const auto bound = net.bind(tape, true);
    params.insert(params.end(), bound.begin(), bound.end());
    bool shared = true;
    for (std::size_t h = 1; h < k; ++h) {
      const Tensor<T>* a = inputs[g * k];
      const Tensor<T>* b = inputs[g * k + h];
      shared = shared && (a == b || *a == *b);
    }
    if (shared) {
      group_out.push_back(net.forward(tape.constant(*inputs[g * k]), bound));
      continue;
    }
    std::vector<Var<T>> cols;
    for (std::size_t h = 0; h < k; ++h) cols.push_back(net.forward(tape.constant(*inputs[g * k + h]), bound, h));
    group_out.push_back(ag::concat_cols(cols));
  }
  Var<T> z = group_out.size() == 1 ? group_out.front() : ag::concat_cols(group_out);
  Var<T> loss = hinge_bit_loss(z, labels, model.codebook());
  const auto grads = tape.backward(loss, Tensor<T>::scalar(T(1)));
  std::vector<Tensor<T>> g;
  g.reserve(params.size());
  for (const auto& p : params) g.push_back(grads[p]);
  auto targets = ecoc_parameters(model);
  opt.step(targets, g, lr);
  return loss.value().item();
}

/// One step of summed member cross-entropy; members share no parameters,
/// so each receives the gradient of its own loss only.
template <typename T>
double baseline_step(BaselineModel<T>& model, const Tensor<T>& x, const std::vector<std::size_t>& labels,
                     Adam<T>& opt, double lr) {
  Tape<T> tape;
  Var<T> xv = tape.constant(x);
  std::vector<Var<T>> params;
  Var<T> total{};
  for (std::size_t i = 0; i < model.members(); ++i) {
    const ConvNet<T>& net = model.member(i);
    const auto bound = net.bind(tape, true);
    params.insert(params.end(), bound.begin(), bound.end());
    Var<T> ce = ag::cross_entropy(net.forward(xv, bound), labels);
    total = i == 0 ? ce : ag::add(total, ce);
  }
  const auto grads = tape.backward(total, Tensor<T>::scalar(T(1)));
  std::vector<Tensor<T>> g;
  for (const auto& p : params) g.push_back(grads[p]);
  auto targets = baseline_parameters(model);
  opt.step(targets, g, lr);
  return total.value().item();
}

template <typename T>
double accuracy(const Classifier<T>& model, const Dataset<T>& d) {
  if (d.size() == 0) return 0;
  const auto pred = predict_labels(model, d.images);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < d.size(); ++i) ok += pred[i] == d.labels[i];
  return static_cast<double>(ok) / static_cast<double>(d.size());
}

inline void append_progress(const std::filesystem::path& path, const EpochRecord& r,
                            const std::string& provenance = {}) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + path.string());
  if (fresh && !provenance.empty()) out << "# " << provenance << '\n';
  if (fresh) out << "epoch,phase,mean_loss,clean_train_acc,clean_test_acc,seconds\n";
  out << r.epoch << ',' << r.phase << ',' << r.mean_loss << ',' << r.train_accuracy << ',' << r.test_accuracy
      << ',' << r.seconds << '\n';
}

/// Shared epoch loop: shuffles once per epoch with the run seed and calls
/// `step(batch_images, batch_labels, lr)` per mini-batch.
template <typename T, typename Model, typename Step, typename Save>
TrainReport run_epochs(Model& model, const DatasetPair<T>& data, const TrainConfig& cfg,
                       std::vector<Tensor<T>*> params, Step&& step, Save&& save) {
  cfg.validate();
  const Dataset<T>& train = data.train;
  if (train.size() == 0) throw std::invalid_argument("train: empty training set");
  TrainReport report;
  report.seed = cfg.seed;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

  std::size_t epoch = 0;
  auto good = snapshot(params);
  for (std::size_t phase = 0; phase < cfg.phases.size(); ++phase) {
    for (std::size_t e = 0; e < cfg.phases[phase].epochs; ++e, ++epoch) {
      const auto start = std::chrono::steady_clock::now();
      std::shuffle(order.begin(), order.end(), rng);
      double loss_sum = 0;
      std::size_t batches = 0;
      for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
        const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + cfg.batch_size)));
        const Dataset<T> batch = train.subset(idx);
        double loss = 0;
        try {
          loss = step(batch.images, batch.labels, cfg.phases[phase].learning_rate, report.instrumentation);
          if (!std::isfinite(loss)) throw NumericError("non-finite loss");
          for (const Tensor<T>* p : params)
            if (!p->all_finite()) throw NumericError("non-finite parameter after update");
        } catch (const NumericError& err) {
          restore(params, good);
          std::string where;
          if (!cfg.checkpoint_dir.empty()) {
            where = (cfg.checkpoint_dir / "last_good.ckpt").string();
            save(where);
          }
          throw TrainingError("training diverged in epoch " + std::to_string(epoch) + ": " + err.what() +
                              (where.empty() ? "" : "; last good parameters saved to " + where));
        }
        if (report.instrumentation.steps == 0) report.first_batch_loss = loss;
        ++report.instrumentation.steps;
        report.instrumentation.step_losses.push_back(loss);
        loss_sum += loss;
        ++batches;
      }
      good = snapshot(params);
      EpochRecord rec;
      rec.epoch = epoch;
      rec.phase = phase;
      rec.mean_loss = loss_sum / static_cast<double>(batches);
      if (!cfg.skip_epoch_eval) {
        rec.train_accuracy = accuracy(model, data.train);
        rec.test_accuracy = accuracy(model, data.test);
      }
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      report.epochs.push_back(rec);
      if (!cfg.progress_csv.empty()) append_progress(cfg.progress_csv, rec, cfg.provenance);
    }
    if (!cfg.checkpoint_dir.empty()) {
      report.checkpoint = (cfg.checkpoint_dir / ("phase" + std::to_string(phase) + ".ckpt")).string();
      save(report.checkpoint);
    }
  }
  return report;
}

}  // namespace train_detail

/// Mini-batch Adam on the hinge loss (ECOC) with clean batches.
template <typename T>
TrainReport train_standard(EcocEnsemble<T>& model, const DatasetPair<T>& data, const TrainConfig& cfg) {
  if (cfg.mode != AdversarialMode::None) throw std::invalid_argument("train_standard: adversarial mode must be none");
  Adam<T> opt(cfg.adam);
  return train_detail::run_epochs<T>(
      model, data, cfg, train_detail::ecoc_parameters(model),
      [&](const Tensor<T>& x, const std::vector<std::size_t>& y, double lr, TrainInstrumentation& inst) {
        const std::vector<const Tensor<T>*> inputs(model.bits(), &x);
        inst.distinct_batches.push_back(1);
        return train_detail::ecoc_step(model, inputs, y, opt, lr);
      },
      [&](const std::string& path) { checkpoint::save(path, model.named_parameters()); });
}

/// Cross-entropy training of every member of a SIMPLE or ENSEMBLE baseline.
/// RegAdvT replaces each batch by one PGD batch against the whole model.
template <typename T>
TrainReport train_standard(BaselineModel<T>& model, const DatasetPair<T>& data, const TrainConfig& cfg) {
  if (cfg.mode == AdversarialMode::IndAdvT) throw std::invalid_argument("IndAdvT applies to ECOC models only");
  Adam<T> opt(cfg.adam);
  return train_detail::run_epochs<T>(
      model, data, cfg, train_detail::baseline_parameters(model),
      [&](const Tensor<T>& x, const std::vector<std::size_t>& y, double lr, TrainInstrumentation& inst) {
        inst.distinct_batches.push_back(1);
        if (cfg.mode == AdversarialMode::None) return train_detail::baseline_step(model, x, y, opt, lr);
        AttackSpec spec;
        spec.epsilon = cfg.epsilon;
        spec.iterations = cfg.adv_iterations;
        spec.step_size = cfg.step();
        const auto adv = pgd(model, x, y, spec);
        ++inst.attack_runs;
        inst.attack_gradient_evaluations += adv.gradient_evaluations;
        return train_detail::baseline_step(model, adv.adversarial, y, opt, lr);
      },
      [&](const std::string& path) { checkpoint::save(path, model.named_parameters()); });
}

/// IndAdvT: every binary classifier n is trained on its own per-bit PGD
/// perturbation of the batch; the per-bit losses are combined in one step.
template <typename T>
TrainReport train_indadvt(EcocEnsemble<T>& model, const DatasetPair<T>& data, const TrainConfig& cfg) {
  if (cfg.mode != AdversarialMode::IndAdvT) throw std::invalid_argument("train_indadvt: mode must be indadvt");
  Adam<T> opt(cfg.adam);
  return train_detail::run_epochs<T>(
      model, data, cfg, train_detail::ecoc_parameters(model),
      [&](const Tensor<T>& x, const std::vector<std::size_t>& y, double lr, TrainInstrumentation& inst) {
        const std::size_t n_bits = model.bits();
        std::vector<Tensor<T>> perturbed(n_bits);
        std::vector<std::size_t> evals(n_bits, 0);
        parallel_for(n_bits, cfg.threads, [&](std::size_t n) {
          perturbed[n] = per_bit_pgd(model, n, x, target_bits(model.codebook(), n, y), cfg.epsilon,
                                     cfg.adv_iterations, cfg.step(), &evals[n]);
        });
        std::vector<const Tensor<T>*> inputs;
        for (const auto& p : perturbed) inputs.push_back(&p);
        inst.attack_runs += n_bits;
        for (std::size_t e : evals) inst.attack_gradient_evaluations += e;
        inst.distinct_batches.push_back(train_detail::distinct_count(inputs));
        std::size_t clean = 0;
        for (const auto& p : perturbed) clean += p == x;
        inst.unperturbed_batches.push_back(clean);
        return train_detail::ecoc_step(model, inputs, y, opt, lr);
      },
      [&](const std::string& path) { checkpoint::save(path, model.named_parameters()); });
}

/// RegAdvT: one cross-entropy PGD batch against the whole ensemble feeds the
/// hinge loss of every classifier.
template <typename T>
TrainReport train_regadvt(EcocEnsemble<T>& model, const DatasetPair<T>& data, const TrainConfig& cfg) {
  if (cfg.mode != AdversarialMode::RegAdvT) throw std::invalid_argument("train_regadvt: mode must be regadvt");
  Adam<T> opt(cfg.adam);
  return train_detail::run_epochs<T>(
      model, data, cfg, train_detail::ecoc_parameters(model),
      [&](const Tensor<T>& x, const std::vector<std::size_t>& y, double lr, TrainInstrumentation& inst) {
        AttackSpec spec;
        spec.epsilon = cfg.epsilon;
        spec.iterations = cfg.adv_iterations;
        spec.step_size = cfg.step();
        const auto adv = pgd(model, x, y, spec);
        ++inst.attack_runs;
        inst.attack_gradient_evaluations += adv.gradient_evaluations;
        const std::vector<const Tensor<T>*> inputs(model.bits(), &adv.adversarial);
        inst.distinct_batches.push_back(1);
        return train_detail::ecoc_step(model, inputs, y, opt, lr);
      },
      [&](const std::string& path) { checkpoint::save(path, model.named_parameters()); });
}

/// Dispatches on cfg.mode.
template <typename T>
TrainReport train(EcocEnsemble<T>& model, const DatasetPair<T>& data, const TrainConfig& cfg) {
  switch (cfg.mode) {
    case AdversarialMode::None: return train_standard(model, data, cfg);
    case AdversarialMode::IndAdvT: return train_indadvt(model, data, cfg);
    case AdversarialMode::RegAdvT: return train_regadvt(model, data, cfg);
  }
  throw std::invalid_argument("train: unknown mode");
}

template <typename T>
TrainReport train(BaselineModel<T>& model, const DatasetPair<T>& data, const TrainConfig& cfg) {
  return train_standard(model, data, cfg);
}

}  // namespace ecoc
