#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ecoc/analysis.hpp"
#include "ecoc/training.hpp"

namespace ecoc {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A failure inside one pipeline stage; `stage` names it.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what), stage(std::move(stage)) {}
  std::string stage;
};

struct DatasetConfig {
  /// "synthetic", "cifar10" or "fashion_mnist".
  std::string kind = "synthetic";
  /// Dataset directory; ECOC_DATA_DIR/<kind> when empty.
  std::filesystem::path root;
  SyntheticSpec synthetic;
  std::optional<std::uint64_t> synthetic_seed;
  /// Records per CIFAR-10 batch file.
  std::size_t records_per_file = 10000;

  std::size_t classes() const { return kind == "synthetic" ? synthetic.classes : 10; }
  Shape image_shape() const {
    if (kind == "cifar10") return {3, 32, 32};
    if (kind == "fashion_mnist") return {1, 28, 28};
    return {synthetic.channels, synthetic.height, synthetic.width};
  }
  std::filesystem::path resolved_root() const {
    if (!root.empty()) return root;
    if (const char* env = std::getenv("ECOC_DATA_DIR")) return std::filesystem::path(env) / kind;
    return {};
  }
};

struct CodebookConfig {
  /// One of the named presets, or empty.
  std::string preset;
  /// Existing codebook file, or empty.
  std::filesystem::path file;
  /// Explicit constraints when neither preset nor file is given.
  CodebookParams params{};
  std::optional<std::uint64_t> seed;
};

struct ModelConfig {
  /// "ecoc", "simple" or "ensemble".
  std::string variant = "ecoc";
  /// Codeword length (ecoc) or member count (ensemble).
  std::size_t bits = 16;
  std::size_t heads = 1;
  std::size_t members = 1;
  std::string architecture = "desk";
  CodebookConfig codebook;

  std::string label() const {
    if (variant == "ecoc") return "ECOC_" + std::to_string(bits) + "_" + std::to_string(heads);
    if (variant == "ensemble") return "ENSEMBLE_" + std::to_string(members);
    return "SIMPLE";
  }
};

struct AttackConfig {
  AttackSpec spec;
  /// Test examples attacked; 0 means the full test set.
  std::size_t subset = 0;
  std::uint64_t subset_seed = 0;
};

struct HistogramConfig {
  AttackConfig attack;
};

struct SweepConfig {
  AttackConfig attack;
  std::vector<double> epsilons;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::filesystem::path output_dir = "runs/experiment";
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig training;
  std::vector<AttackConfig> attacks;
  std::optional<HistogramConfig> histogram;
  std::optional<SweepConfig> sweep;
  /// Parsed document after overrides; the hash is taken over it.
  json document;

  std::string hash() const { return hex64(fnv1a(document.dump())); }
  std::string provenance() const { return "config=" + hash() + " seed=" + std::to_string(seed); }
  /// Checks referenced files and structural invariants.
  void validate() const;
};

// ------------------------------------------------------------ JSON parsing

namespace config_detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename V>
void read(const json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline AttackConfig parse_attack(const json& j, const std::string& where, std::uint64_t seed) {
  check_keys(j, where,
             {"tag", "epsilon", "iterations", "step_size", "learning_rate", "confidence", "binary_search_steps",
              "initial_c", "l2_bound", "subset", "subset_seed"});
  if (!j.contains("tag")) throw ConfigError(where + ": missing 'tag'");
  const std::string tag = j.at("tag").get<std::string>();
  double eps = 0;
  read(j, "epsilon", eps, where);
  AttackConfig a;
  a.spec = attack_from_tag(tag, eps);
  a.spec.seed = seed;
  read(j, "iterations", a.spec.iterations, where);
  if (j.contains("step_size")) a.spec.step_size = j.at("step_size").get<double>();
  read(j, "learning_rate", a.spec.learning_rate, where);
  read(j, "confidence", a.spec.confidence, where);
  read(j, "binary_search_steps", a.spec.binary_search_steps, where);
  read(j, "initial_c", a.spec.initial_c, where);
  if (j.contains("l2_bound")) {
    const auto& b = j.at("l2_bound");
    a.spec.l2_bound = b.is_string() && b.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                                    : b.get<double>();
  }
  read(j, "subset", a.subset, where);
  a.subset_seed = seed;
  read(j, "subset_seed", a.subset_seed, where);
  a.spec.validate();
  return a;
}

}  // namespace config_detail

/// Builds a config from JSON. `seed_override` replaces the global seed and is
/// written back into the hashed document.
inline ExperimentConfig parse_experiment(json j, std::optional<std::uint64_t> seed_override = {}) {
  using namespace config_detail;
  check_keys(j, "config", {"name", "seed", "threads", "output_dir", "dataset", "model", "training", "attacks",
                           "analysis", "description"});
  if (seed_override) j["seed"] = *seed_override;
  ExperimentConfig c;
  read(j, "name", c.name, "config");
  read(j, "seed", c.seed, "config");
  read(j, "threads", c.threads, "config");
  std::string out = c.name.empty() ? "runs/experiment" : "runs/" + c.name;
  read(j, "output_dir", out, "config");
  c.output_dir = out;

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    check_keys(d, "dataset", {"kind", "root", "records_per_file", "synthetic"});
    read(d, "kind", c.dataset.kind, "dataset");
    if (c.dataset.kind != "synthetic" && c.dataset.kind != "cifar10" && c.dataset.kind != "fashion_mnist")
      throw ConfigError("dataset.kind: expected synthetic, cifar10 or fashion_mnist, got '" + c.dataset.kind + "'");
    std::string root;
    read(d, "root", root, "dataset");
    c.dataset.root = root;
    read(d, "records_per_file", c.dataset.records_per_file, "dataset");
    if (d.contains("synthetic")) {
      const json& s = d.at("synthetic");
      check_keys(s, "dataset.synthetic",
                 {"classes", "channels", "height", "width", "train_per_class", "test_per_class", "margin", "noise",
                  "contrast", "seed"});
      auto& sp = c.dataset.synthetic;
      read(s, "classes", sp.classes, "dataset.synthetic");
      read(s, "channels", sp.channels, "dataset.synthetic");
      read(s, "height", sp.height, "dataset.synthetic");
      read(s, "width", sp.width, "dataset.synthetic");
      read(s, "train_per_class", sp.train_per_class, "dataset.synthetic");
      read(s, "test_per_class", sp.test_per_class, "dataset.synthetic");
      read(s, "margin", sp.margin, "dataset.synthetic");
      read(s, "noise", sp.noise, "dataset.synthetic");
      read(s, "contrast", sp.contrast, "dataset.synthetic");
      if (s.contains("seed")) c.dataset.synthetic_seed = s.at("seed").get<std::uint64_t>();
    }
  }
  c.dataset.synthetic.seed = c.dataset.synthetic_seed.value_or(c.seed);

  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "model", {"variant", "N", "K", "members", "architecture", "codebook"});
    read(m, "variant", c.model.variant, "model");
    if (c.model.variant != "ecoc" && c.model.variant != "simple" && c.model.variant != "ensemble")
      throw ConfigError("model.variant: expected ecoc, simple or ensemble, got '" + c.model.variant + "'");
    read(m, "N", c.model.bits, "model");
    read(m, "K", c.model.heads, "model");
    read(m, "members", c.model.members, "model");
    read(m, "architecture", c.model.architecture, "model");
    if (m.contains("codebook")) {
      const json& cb = m.at("codebook");
      check_keys(cb, "model.codebook", {"preset", "file", "params", "seed"});
      read(cb, "preset", c.model.codebook.preset, "model.codebook");
      std::string file;
      read(cb, "file", file, "model.codebook");
      c.model.codebook.file = file;
      if (cb.contains("params")) {
        const auto p = cb.at("params").get<std::vector<std::size_t>>();
        if (p.size() != 3) throw ConfigError("model.codebook.params: expected [theta_minham, theta_div, theta_cdiv]");
        c.model.codebook.params = {p[0], p[1], p[2]};
      }
      if (cb.contains("seed")) c.model.codebook.seed = cb.at("seed").get<std::uint64_t>();
    }
  }

  if (j.contains("training")) {
    const json& t = j.at("training");
    check_keys(t, "training", {"batch_size", "phases", "mode", "iterations", "step_size", "epsilon", "adam"});
    auto& tc = c.training;
    read(t, "batch_size", tc.batch_size, "training");
    if (t.contains("phases")) {
      tc.phases.clear();
      for (const auto& p : t.at("phases")) {
        check_keys(p, "training.phases[]", {"epochs", "learning_rate"});
        TrainPhase ph;
        read(p, "epochs", ph.epochs, "training.phases[]");
        read(p, "learning_rate", ph.learning_rate, "training.phases[]");
        tc.phases.push_back(ph);
      }
    }
    if (t.contains("mode")) tc.mode = adversarial_mode_from_string(t.at("mode").get<std::string>());
    read(t, "iterations", tc.adv_iterations, "training");
    if (t.contains("step_size")) tc.adv_step = t.at("step_size").get<double>();
    read(t, "epsilon", tc.epsilon, "training");
    if (t.contains("adam")) {
      const json& a = t.at("adam");
      check_keys(a, "training.adam", {"beta1", "beta2", "eps"});
      read(a, "beta1", tc.adam.beta1, "training.adam");
      read(a, "beta2", tc.adam.beta2, "training.adam");
      read(a, "eps", tc.adam.eps, "training.adam");
    }
  }
  c.training.seed = c.seed;
  c.training.threads = c.threads;

  if (j.contains("attacks")) {
    std::size_t i = 0;
    for (const auto& a : j.at("attacks"))
      c.attacks.push_back(parse_attack(a, "attacks[" + std::to_string(i++) + "]", c.seed));
  }
  if (j.contains("analysis")) {
    const json& a = j.at("analysis");
    check_keys(a, "analysis", {"histogram", "sweep"});
    if (a.contains("histogram")) c.histogram = HistogramConfig{parse_attack(a.at("histogram"), "analysis.histogram", c.seed)};
    if (a.contains("sweep")) {
      json s = a.at("sweep");
      if (!s.contains("epsilons")) throw ConfigError("analysis.sweep: missing 'epsilons'");
      SweepConfig sw;
      sw.epsilons = s.at("epsilons").get<std::vector<double>>();
      s.erase("epsilons");
      sw.attack = parse_attack(s, "analysis.sweep", c.seed);
      c.sweep = sw;
    }
  }
  c.document = std::move(j);
  c.training.provenance = c.provenance();
  return c;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path,
                                        std::optional<std::uint64_t> seed_override = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_experiment(std::move(j), seed_override);
}

inline void ExperimentConfig::validate() const {
  const auto classes = dataset.classes();
  if (dataset.kind != "synthetic") {
    const auto root = dataset.resolved_root();
    if (root.empty()) throw ConfigError("dataset.root is empty and ECOC_DATA_DIR is not set");
    if (!std::filesystem::is_directory(root)) throw ConfigError("dataset directory " + root.string() + " does not exist");
  }
  const auto shape = dataset.image_shape();
  ArchitectureSpec arch = model.architecture == "desk" ? ArchitectureSpec::desk(shape[0], shape[1], shape[2])
                                                       : ArchitectureSpec::by_name(model.architecture);
  if (arch.image_shape() != shape)
    throw ConfigError("architecture " + model.architecture + " expects images " + shape_str(arch.image_shape()) +
                      ", dataset provides " + shape_str(shape));
  if (model.variant == "ecoc") {
    if (model.heads == 0 || model.bits % model.heads != 0)
      throw ConfigError("model: N = " + std::to_string(model.bits) + " is not divisible by K = " +
                        std::to_string(model.heads));
    const auto& cb = model.codebook;
    if (!cb.file.empty()) {
      if (!std::filesystem::exists(cb.file)) throw ConfigError("codebook file " + cb.file.string() + " does not exist");
      const auto a = load_codebook(cb.file);
      if (a.classes() != classes)
        throw ConfigError("codebook has " + std::to_string(a.classes()) + " rows, dataset has " +
                          std::to_string(classes) + " classes");
      if (a.bits() != model.bits)
        throw ConfigError("codebook has " + std::to_string(a.bits()) + " bits, model.N is " +
                          std::to_string(model.bits));
    } else if (!cb.preset.empty()) {
      const auto& p = codebook_preset(cb.preset);
      if (p.bits != model.bits)
        throw ConfigError("codebook preset " + cb.preset + " has " + std::to_string(p.bits) + " bits, model.N is " +
                          std::to_string(model.bits));
    }
  } else if (model.variant == "ensemble" && model.members == 0) {
    throw ConfigError("model: ensemble needs at least one member");
  }
  if (training.mode == AdversarialMode::IndAdvT && model.variant != "ecoc")
    throw ConfigError("training: IndAdvT applies to ECOC models only");
  training.validate();
  if (threads == 0) throw ConfigError("threads must be >= 1");
  if (sweep && !std::is_sorted(sweep->epsilons.begin(), sweep->epsilons.end()))
    throw ConfigError("analysis.sweep.epsilons must be ascending");
  if (histogram && model.variant != "ecoc") throw ConfigError("analysis.histogram requires an ECOC model");
}

// ------------------------------------------------------- model + manifest

/// A trained or freshly initialized model with its construction record.
struct ModelBundle {
  std::unique_ptr<Classifier<double>> model;
  json manifest;

  EcocEnsemble<double>* ecoc() const { return dynamic_cast<EcocEnsemble<double>*>(model.get()); }
  BaselineModel<double>* baseline() const { return dynamic_cast<BaselineModel<double>*>(model.get()); }
  std::vector<NamedTensor<double>> named_parameters() const {
    if (auto* e = ecoc()) return e->named_parameters();
    return baseline()->named_parameters();
  }
  void load_parameters(const std::vector<NamedTensor<double>>& p) {
    if (auto* e = ecoc()) e->load_parameters(p);
    else baseline()->load_parameters(p);
  }
};

inline json architecture_json(const ArchitectureSpec& a) {
  return {{"preset", a.preset}, {"a", a.a},   {"b", a.b},           {"c", a.c},
          {"d", a.d},           {"channels", a.channels}, {"height", a.height}, {"width", a.width}};
}

inline ArchitectureSpec architecture_from_json(const json& j) {
  ArchitectureSpec a;
  a.preset = j.at("preset").get<std::string>();
  a.a = j.at("a");
  a.b = j.at("b");
  a.c = j.at("c");
  a.d = j.at("d");
  a.channels = j.at("channels");
  a.height = j.at("height");
  a.width = j.at("width");
  return a;
}

/// Instantiates a model from a manifest; the codebook path is resolved
/// relative to `base` when not absolute.
inline ModelBundle build_model(const json& manifest, const std::filesystem::path& base = {}) {
  ModelBundle b;
  b.manifest = manifest;
  const std::string variant = manifest.at("variant");
  const ArchitectureSpec arch = architecture_from_json(manifest.at("architecture"));
  const std::uint64_t seed = manifest.at("seed");
  if (variant == "ecoc") {
    std::filesystem::path cb = manifest.at("codebook_file").get<std::string>();
    if (cb.is_relative() && !base.empty()) cb = base / cb;
    b.model = std::make_unique<EcocEnsemble<double>>(load_codebook(cb), manifest.at("K").get<std::size_t>(), arch,
                                                     seed);
    if (b.ecoc()->bits() != manifest.at("N").get<std::size_t>())
      throw ConfigError("manifest N does not match the codebook length");
  } else if (variant == "ensemble") {
    b.model = std::make_unique<BaselineModel<double>>(
        BaselineModel<double>::ensemble(manifest.at("members"), manifest.at("classes"), arch, seed));
  } else if (variant == "simple") {
    b.model = std::make_unique<BaselineModel<double>>(BaselineModel<double>::simple(manifest.at("classes"), arch, seed));
  } else {
    throw ConfigError("manifest: unknown variant '" + variant + "'");
  }
  return b;
}

/// Reads `<stem>.json` and loads the parameters from the checkpoint it names.
inline ModelBundle load_model(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("cannot open model manifest " + manifest_path.string());
  const json m = json::parse(in);
  const auto base = manifest_path.parent_path();
  ModelBundle b = build_model(m, base);
  std::filesystem::path ckpt = m.at("checkpoint").get<std::string>();
  if (ckpt.is_relative()) ckpt = base / ckpt;
  b.load_parameters(checkpoint::load<double>(ckpt));
  return b;
}

// ------------------------------------------------------------------ stages

inline CodewordMatrix make_codebook(const ExperimentConfig& c) {
  const auto& cb = c.model.codebook;
  if (!cb.file.empty()) return load_codebook(cb.file);
  const std::uint64_t seed = cb.seed.value_or(c.seed);
  if (!cb.preset.empty()) {
    const auto& p = codebook_preset(cb.preset);
    return generate_codebook(c.dataset.classes(), p.bits, p.params, seed);
  }
  return generate_codebook(c.dataset.classes(), c.model.bits, cb.params, seed);
}

inline DatasetPair<double> load_dataset(const DatasetConfig& d) {
  if (d.kind == "synthetic") return synthetic_dataset<double>(d.synthetic).data;
  const auto root = d.resolved_root();
  if (d.kind == "cifar10") return load_cifar10<double>(root, d.records_per_file);
  return load_fashion_mnist<double>(root);
}

inline json model_manifest(const ExperimentConfig& c, const std::string& codebook_file) {
  const auto shape = c.dataset.image_shape();
  const ArchitectureSpec arch = c.model.architecture == "desk" ? ArchitectureSpec::desk(shape[0], shape[1], shape[2])
                                                               : ArchitectureSpec::by_name(c.model.architecture);
  json m{{"variant", c.model.variant},
         {"classes", c.dataset.classes()},
         {"architecture", architecture_json(arch)},
         {"seed", c.seed},
         {"config_hash", c.hash()},
         {"checkpoint", "model.ckpt"}};
  if (c.model.variant == "ecoc") {
    m["N"] = c.model.bits;
    m["K"] = c.model.heads;
    m["codebook_file"] = codebook_file;
  } else {
    m["members"] = c.model.variant == "ensemble" ? c.model.members : 1;
  }
  return m;
}

inline Dataset<double> attack_subset(const Dataset<double>& test, const AttackConfig& a) {
  if (a.subset == 0 || a.subset >= test.size()) return test;
  return test.subset(select_subset(test.size(), a.subset, a.subset_seed));
}

inline RobustnessRow evaluate_attack(const Classifier<double>& model, const std::string& label,
                                     const Dataset<double>& test, const AttackConfig& a, std::size_t threads) {
  const Dataset<double> sub = attack_subset(test, a);
  RobustnessRow r;
  r.model = label;
  r.attack = a.spec.tag;
  r.norm = a.spec.norm();
  r.epsilon = a.spec.family == AttackFamily::CwL2 ? a.spec.l2_bound : a.spec.epsilon;
  r.subset_size = sub.size();
  r.subset_seed = a.subset == 0 || a.subset >= test.size() ? 0 : a.subset_seed;
  r.clean_accuracy = clean_accuracy(model, sub);
  r.robust_accuracy = robust_accuracy(model, a.spec, sub, {100, threads});
  return r;
}

/// SVG with a provenance comment after the opening tag.
inline std::string stamp_svg(const std::string& svg, const std::string& provenance) {
  const auto eol = svg.find('\n');
  return svg.substr(0, eol + 1) + "<!-- " + provenance + " -->\n" + svg.substr(eol + 1);
}

struct RunOptions {
  bool force = false;
  /// Progress messages; may be empty.
  std::function<void(const std::string&)> log;
};

struct RunSummary {
  std::filesystem::path output_dir;
  RobustnessReport report;
  std::vector<std::string> warnings;
};

/// codebook -> data -> train -> attack -> analysis. Artifacts of finished
/// stages stay on disk when a later stage fails.
inline RunSummary run_experiment(const ExperimentConfig& c, const RunOptions& opt = {}) {
  auto log = [&](const std::string& s) {
    if (opt.log) opt.log(s);
  };
  auto stage = [&](const std::string& name, auto&& fn) {
    log("[" + name + "]");
    try {
      return fn();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
  };
  stage("validate", [&] { c.validate(); });
  const auto dir = c.output_dir;
  stage("prepare", [&] {
    if (std::filesystem::exists(dir) && !std::filesystem::is_empty(dir)) {
      if (!opt.force)
        throw std::runtime_error("output directory " + dir.string() + " is not empty; pass --force to overwrite");
      std::filesystem::remove_all(dir);
    }
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "config.json") << c.document.dump(2) << '\n';
  });
  const std::string prov = c.provenance();

  std::string codebook_file;
  if (c.model.variant == "ecoc") {
    codebook_file = "codebook.txt";
    stage("codebook", [&] {
      const auto a = make_codebook(c);
      const auto rep = verify_codebook(a);
      save_codebook(dir / codebook_file, a, prov);
      log("  " + std::to_string(a.classes()) + "x" + std::to_string(a.bits()) + " min row distance " +
          std::to_string(rep.min_row_distance));
    });
  }
  const auto data = stage("data", [&] { return load_dataset(c.dataset); });

  RunSummary out;
  out.output_dir = dir;
  const json manifest = model_manifest(c, codebook_file);
  ModelBundle bundle = stage("train", [&] {
    ModelBundle b = build_model(manifest, dir);
    TrainConfig tc = c.training;
    tc.progress_csv = dir / "progress.csv";
    tc.checkpoint_dir = dir / "checkpoints";
    if (auto* e = b.ecoc()) train(*e, data, tc);
    else train(*b.baseline(), data, tc);
    checkpoint::save(dir / "model.ckpt", b.named_parameters());
    std::ofstream(dir / "model.json") << manifest.dump(2) << '\n';
    return b;
  });
  const Classifier<double>& model = *bundle.model;
  const std::string label = c.model.label();

  stage("attack", [&] {
    out.report.model = label;
    out.report.clean_accuracy = clean_accuracy(model, data.test);
    for (const auto& a : c.attacks) {
      out.report.rows.push_back(evaluate_attack(model, label, data.test, a, c.threads));
      const auto& r = out.report.rows.back();
      log("  " + r.attack + " eps " + csv_number(r.epsilon) + ": " + csv_number(r.robust_accuracy));
    }
    // FGSM should never beat PGD at the same epsilon.
    for (const auto& f : out.report.rows) {
      if (f.attack != "fgsm") continue;
      for (const auto& p : out.report.rows)
        if (p.attack.rfind("pgd", 0) == 0 && p.epsilon == f.epsilon && p.subset_size == f.subset_size) {
          auto w = fgsm_ordering_warning(f.robust_accuracy, p.robust_accuracy, f.epsilon);
          if (!w.empty()) out.warnings.push_back(w + " (" + p.attack + ")");
        }
    }
    write_text(dir / "robustness.csv", robustness_csv(out.report.rows), prov);
  });

  stage("analysis", [&] {
    if (c.histogram) {
      const Dataset<double> sub = attack_subset(data.test, c.histogram->attack);
      const auto h = hamming_error_histogram(model, c.histogram->attack.spec, sub, {100, c.threads});
      write_text(dir / "hamming_histogram.csv", histogram_csv(h), prov);
      write_text(dir / "hamming_histogram.svg",
                 stamp_svg(histogram_svg(h, label + " under " + c.histogram->attack.spec.tag), prov));
    }
    if (c.sweep) {
      const Dataset<double> sub = attack_subset(data.test, c.sweep->attack);
      const auto s = epsilon_sweep(model, c.sweep->attack.spec, c.sweep->epsilons, sub, {100, c.threads});
      for (const auto& w : s.warnings) out.warnings.push_back(w);
      write_text(dir / "sweep.csv", sweep_csv(s), prov);
      write_text(dir / "sweep.svg", stamp_svg(sweep_svg(s, label + " " + c.sweep->attack.spec.tag), prov));
    }
    std::string w;
    for (const auto& s : out.warnings) w += s + '\n';
    if (!w.empty()) write_text(dir / "warnings.txt", w, prov);
  });
  out.report.warnings = out.warnings;
  return out;
}

}  // namespace ecoc
