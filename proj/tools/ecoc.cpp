// Command-line front end: codebook generation, training, attacks and reports.
#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ecoc/experiment.hpp"

namespace {

using ecoc::ExperimentConfig;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string out_dir;
  bool force = false;
};

void add_common(CLI::App* app, CommonFlags& f, bool config_required) {
  auto* c = app->add_option("--config", f.config, "Experiment config (JSON)");
  if (config_required) c->required();
  app->add_option("--seed", f.seed, "Override the global seed");
  app->add_option("--threads", f.threads, "Worker threads (1 gives a fixed reduction order)");
  app->add_option("--out-dir", f.out_dir, "Output directory");
  app->add_flag("--force", f.force, "Overwrite a non-empty output directory");
}

ExperimentConfig load_config(const CommonFlags& f) {
  auto c = ecoc::load_experiment(f.config, f.seed);
  if (f.threads) {
    c.threads = *f.threads;
    c.training.threads = *f.threads;
  }
  if (!f.out_dir.empty()) c.output_dir = f.out_dir;
  return c;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "...") throw CLI::ValidationError("--eps", "write the epsilons out explicitly, e.g. 0,0.01,0.02");
    out.push_back(std::stod(tok));
  }
  if (out.empty()) throw CLI::ValidationError("--eps", "empty epsilon list");
  return out;
}

/// Model manifest plus the experiment config that produced it (dataset source).
struct LoadedRun {
  ecoc::ModelBundle model;
  ExperimentConfig config;
  ecoc::DatasetPair<double> data;
};

LoadedRun load_run(const std::string& model_path, const CommonFlags& f) {
  std::filesystem::path manifest = model_path;
  if (std::filesystem::is_directory(manifest)) manifest /= "model.json";
  CommonFlags flags = f;
  if (flags.config.empty()) flags.config = (manifest.parent_path() / "config.json").string();
  LoadedRun r{ecoc::load_model(manifest), load_config(flags), {}};
  r.data = ecoc::load_dataset(r.config.dataset);
  return r;
}

std::string model_label(const nlohmann::json& m) {
  const std::string v = m.at("variant");
  if (v == "ecoc") return "ECOC_" + std::to_string(m.at("N").get<int>()) + "_" + std::to_string(m.at("K").get<int>());
  if (v == "ensemble") return "ENSEMBLE_" + std::to_string(m.at("members").get<int>());
  return "SIMPLE";
}

ecoc::AttackConfig attack_config(const std::string& tag, double eps, std::optional<std::size_t> iterations,
                                 std::size_t subset, std::uint64_t subset_seed, std::uint64_t seed) {
  ecoc::AttackConfig a;
  a.spec = ecoc::attack_from_tag(tag, eps);
  a.spec.seed = seed;
  if (iterations) a.spec.iterations = *iterations;
  a.subset = subset;
  a.subset_seed = subset_seed;
  a.spec.validate();
  return a;
}

std::filesystem::path output_dir(const CommonFlags& f, const ExperimentConfig& c) {
  return f.out_dir.empty() ? c.output_dir : std::filesystem::path(f.out_dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ECOC ensembles: codebooks, training, adversarial evaluation"};
  app.require_subcommand(1);

  // codebook gen | verify
  auto* cb = app.add_subcommand("codebook", "Generate or verify codeword matrices");
  cb->require_subcommand(1);
  auto* gen = cb->add_subcommand("gen", "Generate a codeword matrix");
  std::string preset, cb_out;
  std::size_t classes = 10, bits = 0;
  std::vector<std::size_t> params;
  std::uint64_t cb_seed = 0;
  std::size_t max_attempts = ecoc::kDefaultMaxAttempts;
  gen->add_option("--preset", preset, "16bit, 32bit or 64bit");
  gen->add_option("--classes", classes, "Number of classes (rows)")->capture_default_str();
  gen->add_option("--bits", bits, "Codeword length when no preset is given");
  gen->add_option("--params", params, "theta_minham theta_div theta_cdiv when no preset is given")->expected(3);
  gen->add_option("--seed", cb_seed, "Generator seed")->capture_default_str();
  gen->add_option("--max-attempts", max_attempts, "Draw budget")->capture_default_str();
  gen->add_option("--out", cb_out, "Output file (stdout when omitted)");
  auto* verify = cb->add_subcommand("verify", "Check a codeword matrix against its stored constraints");
  std::string verify_file;
  verify->add_option("file", verify_file, "Codebook file")->required()->check(CLI::ExistingFile);

  // run / train
  CommonFlags run_flags, train_flags;
  auto* run = app.add_subcommand("run", "codebook -> train -> attacks -> analysis from one config");
  add_common(run, run_flags, true);
  auto* tr = app.add_subcommand("train", "Generate the codebook and train the configured model");
  add_common(tr, train_flags, true);

  // attack
  CommonFlags attack_flags;
  std::string attack_model, attack_tag, attack_out;
  double attack_eps = 0;
  std::optional<std::size_t> attack_iters;
  std::size_t attack_subset = 0;
  std::uint64_t attack_subset_seed = 0;
  auto* at = app.add_subcommand("attack", "Evaluate one attack against a trained model");
  add_common(at, attack_flags, false);
  at->add_option("--model", attack_model, "Model manifest or run directory")->required();
  at->add_option("--attack", attack_tag, "Attack tag")->required();
  at->add_option("--eps", attack_eps, "l_inf budget, or l2 bound for C&W")->required();
  at->add_option("--iterations", attack_iters, "Override the iteration count");
  at->add_option("--subset", attack_subset, "Attack this many test examples (0 = all)");
  at->add_option("--subset-seed", attack_subset_seed, "Subset selection seed");
  at->add_option("--out", attack_out, "Append the row to this CSV");

  // report
  CommonFlags report_flags;
  std::string report_model, report_tag;
  double report_eps = 0;
  std::optional<std::size_t> report_iters;
  std::size_t report_subset = 0;
  auto* rp = app.add_subcommand("report", "Hamming-error histogram and robustness table for a trained model");
  add_common(rp, report_flags, false);
  rp->add_option("--model", report_model, "Model manifest or run directory")->required();
  rp->add_option("--attack", report_tag, "Attack for the histogram")->required();
  rp->add_option("--eps", report_eps, "Attack budget")->required();
  rp->add_option("--iterations", report_iters, "Override the iteration count");
  rp->add_option("--subset", report_subset, "Attack this many test examples (0 = all)");

  // sweep
  CommonFlags sweep_flags;
  std::string sweep_model, sweep_tag, sweep_eps;
  std::optional<std::size_t> sweep_iters;
  std::size_t sweep_subset = 0;
  auto* sw = app.add_subcommand("sweep", "Robust accuracy against epsilon");
  add_common(sw, sweep_flags, false);
  sw->add_option("--model", sweep_model, "Model manifest or run directory")->required();
  sw->add_option("--attack", sweep_tag, "Attack tag")->required();
  sw->add_option("--eps", sweep_eps, "Comma-separated ascending epsilons")->required();
  sw->add_option("--iterations", sweep_iters, "Override the iteration count");
  sw->add_option("--subset", sweep_subset, "Attack this many test examples (0 = all)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      ecoc::CodewordMatrix a;
      if (!preset.empty()) {
        const auto& p = ecoc::codebook_preset(preset);
        a = ecoc::generate_codebook(classes, p.bits, p.params, cb_seed, max_attempts);
      } else {
        if (bits == 0 || params.size() != 3) throw CLI::ValidationError("codebook gen", "give --preset or --bits with --params");
        a = ecoc::generate_codebook(classes, bits, {params[0], params[1], params[2]}, cb_seed, max_attempts);
      }
      if (cb_out.empty()) ecoc::write_codebook(std::cout, a);
      else ecoc::save_codebook(cb_out, a);
      const auto r = ecoc::verify_codebook(a);
      std::cerr << a.classes() << "x" << a.bits() << " min row distance " << r.min_row_distance
                << ", fooling threshold " << r.fooling_threshold << '\n';
      return 0;
    }
    if (*verify) {
      const auto a = ecoc::load_codebook(verify_file);
      const auto r = ecoc::verify_codebook(a);
      const auto& p = a.params();
      std::cout << "classes " << a.classes() << " bits " << a.bits() << '\n'
                << "constraints " << p.min_row_distance << ' ' << p.min_column_distance << ' '
                << p.min_complement_distance << '\n'
                << "min row distance " << r.min_row_distance << '\n'
                << "correction capacity " << r.correction_capacity << '\n'
                << "fooling threshold " << r.fooling_threshold << '\n'
                << "violations " << r.violations() << '\n';
      return r.violations() == 0 ? 0 : 1;
    }
    if (*run || *tr) {
      const CommonFlags& f = *run ? run_flags : train_flags;
      auto c = load_config(f);
      if (*tr) {
        c.attacks.clear();
        c.histogram.reset();
        c.sweep.reset();
      }
      const auto start = std::chrono::steady_clock::now();
      const auto s = ecoc::run_experiment(c, {f.force, log_line});
      for (const auto& w : s.warnings) std::cerr << "warning: " << w << '\n';
      if (!s.report.rows.empty()) std::cout << ecoc::robustness_csv(s.report.rows);
      std::cerr << "done in "
                << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << " s, outputs in "
                << s.output_dir.string() << '\n';
      return 0;
    }
    if (*at) {
      auto r = load_run(attack_model, attack_flags);
      const auto a = attack_config(attack_tag, attack_eps, attack_iters, attack_subset, attack_subset_seed,
                                   r.config.seed);
      const auto row = ecoc::evaluate_attack(*r.model.model, model_label(r.model.manifest), r.data.test, a,
                                             r.config.threads);
      const std::string csv = ecoc::robustness_csv({row});
      std::cout << csv;
      if (!attack_out.empty()) {
        const bool fresh = !std::filesystem::exists(attack_out);
        std::ofstream out(attack_out, std::ios::app);
        if (fresh) out << "# " << r.config.provenance() << '\n' << csv;
        else out << csv.substr(csv.find('\n') + 1);
      }
      return 0;
    }
    if (*rp) {
      auto r = load_run(report_model, report_flags);
      const auto dir = output_dir(report_flags, r.config);
      const auto prov = r.config.provenance();
      const std::string label = model_label(r.model.manifest);
      const auto a = attack_config(report_tag, report_eps, report_iters, report_subset, r.config.seed, r.config.seed);
      const auto sub = ecoc::attack_subset(r.data.test, a);
      const auto h = ecoc::hamming_error_histogram(*r.model.model, a.spec, sub, {100, r.config.threads});
      ecoc::write_text(dir / "hamming_histogram.csv", ecoc::histogram_csv(h), prov);
      ecoc::write_text(dir / "hamming_histogram.svg",
                       ecoc::stamp_svg(ecoc::histogram_svg(h, label + " under " + report_tag), prov));
      std::vector<ecoc::RobustnessRow> rows;
      for (const auto& ac : r.config.attacks)
        rows.push_back(ecoc::evaluate_attack(*r.model.model, label, r.data.test, ac, r.config.threads));
      if (!rows.empty()) ecoc::write_text(dir / "robustness.csv", ecoc::robustness_csv(rows), prov);
      std::cout << ecoc::histogram_csv(h);
      std::cerr << "fooling threshold " << h.fooling_threshold << ", min row distance " << h.min_row_distance
                << "; outputs in " << dir.string() << '\n';
      return 0;
    }
    if (*sw) {
      auto r = load_run(sweep_model, sweep_flags);
      const auto dir = output_dir(sweep_flags, r.config);
      const auto prov = r.config.provenance();
      const auto eps = parse_list(sweep_eps);
      const auto a = attack_config(sweep_tag, eps.front(), sweep_iters, sweep_subset, r.config.seed, r.config.seed);
      const auto sub = ecoc::attack_subset(r.data.test, a);
      const auto s = ecoc::epsilon_sweep(*r.model.model, a.spec, eps, sub, {100, r.config.threads});
      ecoc::write_text(dir / "sweep.csv", ecoc::sweep_csv(s), prov);
      ecoc::write_text(dir / "sweep.svg",
                       ecoc::stamp_svg(ecoc::sweep_svg(s, model_label(r.model.manifest) + " " + sweep_tag), prov));
      std::cout << ecoc::sweep_csv(s);
      for (const auto& w : s.warnings) std::cerr << "warning: " << w << '\n';
      return 0;
    }
  } catch (const ecoc::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
