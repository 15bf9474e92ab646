// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion other than the best-effort trend check fails.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "ecoc/experiment.hpp"
#include "ecoc/grad_check.hpp"
#include "primitive_cases.hpp"

namespace {

using namespace ecoc;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

struct PresetCase {
  std::size_t bits;
  CodebookParams params;
};
const std::vector<PresetCase> kPresets{{16, {8, 3, 3}}, {32, {16, 2, 1}}, {64, {32, 1, 1}}};

std::vector<CodewordMatrix>& preset_matrices() {
  static std::vector<CodewordMatrix> m;
  return m;
}

// ------------------------------------------------------------ criteria 1-4

Outcome codebook_presets() {
  std::ostringstream d;
  bool ok = true;
  for (const auto& p : kPresets) {
    const auto t = Clock::now();
    CodewordMatrix a;
    try {
      a = generate_codebook(10, p.bits, p.params, 7);
    } catch (const std::exception& e) {
      d << p.bits << "bit: " << e.what() << "; ";
      ok = false;
      continue;
    }
    const double s = seconds_since(t);
    const auto r = verify_codebook(a);
    ok = ok && s < 60 && r.violations() == 0;
    d << p.bits << "bit " << fmt(s, 2) << "s violations " << r.violations() << " d_min " << r.min_row_distance << "; ";
    preset_matrices().push_back(a);
  }
  return {ok, d.str()};
}

std::size_t decode_flipped(const CodewordMatrix& a, std::size_t m, const std::vector<std::size_t>& flips) {
  std::vector<int> s(a.bits());
  for (std::size_t j = 0; j < a.bits(); ++j) s[j] = a(m, j);
  for (std::size_t j : flips) s[j] = -s[j];
  return hamming_decode(s, a);
}

Outcome error_correction() {
  if (preset_matrices().size() != 3) return {false, "preset matrices unavailable"};
  std::ostringstream d;
  std::size_t failures = 0;
  // 10x16: every subset of at most `cap` bits, for every codeword.
  const auto& a16 = preset_matrices()[0];
  const std::size_t cap16 = verify_codebook(a16).correction_capacity;
  std::size_t checked = 0;
  std::vector<std::size_t> flips;
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t left) {
    for (std::size_t m = 0; m < a16.classes(); ++m) {
      failures += decode_flipped(a16, m, flips) != m;
      ++checked;
    }
    if (left == 0) return;
    for (std::size_t j = start; j < a16.bits(); ++j) {
      flips.push_back(j);
      rec(j + 1, left - 1);
      flips.pop_back();
    }
  };
  rec(0, cap16);
  d << "16bit cap " << cap16 << ": " << checked << " exhaustive decodes; ";
  std::mt19937_64 rng(11);
  for (std::size_t k = 1; k < 3; ++k) {
    const auto& a = preset_matrices()[k];
    const std::size_t cap = verify_codebook(a).correction_capacity;
    std::vector<std::size_t> idx(a.bits());
    for (std::size_t m = 0; m < a.classes(); ++m)
      for (int t = 0; t < 10000; ++t) {
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t size = std::uniform_int_distribution<std::size_t>(0, cap)(rng);
        failures += decode_flipped(a, m, {idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(size)}) != m;
      }
    d << a.bits() << "bit cap " << cap << ": 100000 random; ";
  }
  d << failures << " failures";
  return {failures == 0, d.str()};
}

Outcome decoder_duality() {
  if (preset_matrices().size() != 3) return {false, "preset matrices unavailable"};
  std::mt19937_64 rng(12);
  std::size_t mismatches = 0, total = 0;
  for (const auto& a : preset_matrices()) {
    const std::size_t n = 10000;
    Tensor<double> z({n, a.bits()});
    std::vector<std::vector<int>> s(n, std::vector<int>(a.bits()));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < a.bits(); ++j) {
        s[i][j] = (rng() & 1) ? 1 : -1;
        z.at(i, j) = 30.0 * s[i][j];
      }
    Tape<double> tape;
    const auto pred = predict(decode(tape.constant(z), a, false).value());
    for (std::size_t i = 0; i < n; ++i) mismatches += pred[i] != hamming_decode(s[i], a);
    total += n;
  }
  return {mismatches == 0, std::to_string(total) + " vectors, " + std::to_string(mismatches) + " mismatches"};
}

Outcome gradient_suite() {
  std::mt19937_64 rng(13);
  std::size_t failures = 0, runs = 0;
  double worst = 0;
  std::string first_failure;
  auto check = [&](const std::string& name, const ScalarFunction<double>& fn, const Tensor<double>& x,
                   const GradCheckOptions& o = {}) {
    const auto r = grad_check(fn, x, 1e-4, o);
    ++runs;
    worst = std::max(worst, static_cast<double>(r.max_relative_error));
    if (!r.passed) {
      ++failures;
      if (first_failure.empty()) first_failure = name + ": " + r.diagnostic;
    }
  };
  std::size_t primitives = 0;
  for (int t = 0; t < 100; ++t) {
    const auto cases = ecoc_test::primitive_cases(rng);
    primitives = cases.size();
    for (const auto& c : cases) check(c.name, c.fn, c.point);
  }
  const auto cb = generate_codebook(4, 8, {4, 1, 1}, 5);
  const std::vector<std::size_t> y{0, 1, 2, 3, 1};
  std::uniform_real_distribution<double> u(-3, 3);
  std::normal_distribution<double> g(0, 1.5);
  for (int t = 0; t < 100; ++t) {
    Tensor<double> z({y.size(), cb.bits()});
    for (std::size_t i = 0; i < y.size(); ++i)
      for (std::size_t j = 0; j < cb.bits(); ++j) {
        double v;
        do v = u(rng); while (std::abs(1.0 - cb(y[i], j) * v) < 1e-2);
        z.at(i, j) = v;
      }
    check("hinge", [&](Tape<double>&, Var<double> v) { return hinge_bit_loss(v, y, cb); }, z);
    Tensor<double> zd({y.size(), cb.bits()});
    for (double& v : zd.values()) v = g(rng);
    // Entries near 1e-6 make relative error meaningless; floor at 1e-4.
    check("decode_ce",
          [&](Tape<double>&, Var<double> v) { return attack_loss(decode(v, cb, false), y, AttackLoss::CrossEntropy); },
          zd, {1e-5, 1e-4, 1e-3});
    Tensor<double> h({y.size(), 4});
    for (double& v : h.values()) v = g(rng);
    check("cw_margin", [&](Tape<double>&, Var<double> v) { return attack_loss(v, y, AttackLoss::CwMargin); }, h);
  }
  std::ostringstream d;
  d << primitives << " primitives + hinge + decode/CE + cw margin, 100 points each (" << runs
    << " checks), max rel err " << std::scientific << std::setprecision(2) << worst << ", " << failures << " failures";
  if (!first_failure.empty()) d << "; first: " << first_failure;
  return {failures == 0, d.str()};
}

// -------------------------------------------------------- desk-scale model

SyntheticSpec desk_data_spec(std::uint64_t seed) {
  SyntheticSpec s;
  s.classes = 5;
  s.margin = 1.0;
  s.contrast = 0.35;
  s.noise = 0.6;
  s.train_per_class = 40;
  s.test_per_class = 20;
  s.seed = seed;
  return s;
}

TrainConfig desk_train_config(std::uint64_t seed) {
  TrainConfig c;
  c.batch_size = 20;
  c.phases = {{30, 3e-3}};
  c.seed = seed;
  c.skip_epoch_eval = true;
  return c;
}

CodewordMatrix desk_codebook(std::uint64_t seed) { return generate_codebook(5, 8, {4, 1, 1}, seed); }

struct DeskModel {
  DatasetPair<double> data;
  std::unique_ptr<EcocEnsemble<double>> model;
  double train_seconds = 0;
};

DeskModel& desk_model() {
  static DeskModel d = [] {
    DeskModel m;
    m.data = synthetic_dataset<double>(desk_data_spec(1)).data;
    m.model = std::make_unique<EcocEnsemble<double>>(desk_codebook(1), 1, ArchitectureSpec::desk(), 1);
    const auto t = Clock::now();
    train_standard(*m.model, m.data, desk_train_config(1));
    m.train_seconds = seconds_since(t);
    return m;
  }();
  return d;
}

bool within_box(const Tensor<double>& x, const Tensor<double>& adv, double eps) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(adv[i] >= 0.0 && adv[i] <= 1.0)) return false;
    if (std::abs(adv[i] - x[i]) > eps) return false;
  }
  return true;
}

Outcome attack_contracts() {
  auto& dm = desk_model();
  const auto& m = *dm.model;
  const auto& x = dm.data.test.images;
  const auto& y = dm.data.test.labels;
  const double eps = 0.06;
  bool box = true;
  std::ostringstream d;
  d << "ECOC_8_1 trained in " << fmt(dm.train_seconds, 1) << "s, clean " << fmt(clean_accuracy<double>(m, dm.data.test))
    << "; ";
  double acc_fgsm = 0, acc_pgd = 0, acc_es = 0;
  for (const auto& tag : attack_tags()) {
    auto s = attack_from_tag(tag, eps);
    if (s.family == AttackFamily::CwL2) continue;
    s.iterations = 50;
    const auto r = run_attack<double>(m, x, y, s);
    box = box && within_box(x, r.adversarial, eps);
    if (tag == "fgsm") acc_fgsm = r.accuracy();
    if (tag == "pgd") acc_pgd = r.accuracy();
    if (tag == "pgd_es") acc_es = r.accuracy();
  }
  const bool order = acc_es <= acc_pgd && acc_pgd <= acc_fgsm;
  d << "(a) box " << (box ? "ok" : "VIOLATED") << "; (b) PGD^es " << fmt(acc_es) << " <= PGD " << fmt(acc_pgd)
    << " <= FGSM " << fmt(acc_fgsm) << (order ? "" : " VIOLATED");

  AttackSpec one = attack_from_tag("pgd", eps);
  one.iterations = 1;
  one.step_size = eps;
  const bool same = pgd<double>(m, x, y, one).adversarial.values() == fgsm<double>(m, x, y, eps).adversarial.values();
  d << "; (c) PGD(1, step eps) == FGSM " << (same ? "bitwise" : "DIFFERS");

  bool identity = true;
  for (const auto& tag : attack_tags()) {
    auto s = attack_from_tag(tag, 0.0);
    if (s.family == AttackFamily::CwL2) continue;
    s.iterations = 5;
    identity = identity && run_attack<double>(m, x, y, s).adversarial.values() == x.values();
  }
  d << "; (d) eps=0 identity " << (identity ? "ok" : "VIOLATED");
  return {box && order && same && identity, d.str()};
}

Outcome masking_probe() {
  auto& dm = desk_model();
  const auto& m = *dm.model;
  const auto& test = dm.data.test;
  // Grow epsilon until FGSM accuracy drops below 5%.
  std::vector<double> eps;
  double fgsm_last = 1;
  for (double e = 0.03; e <= 0.5 + 1e-9; e += 0.03) {
    eps.push_back(e);
    fgsm_last = fgsm<double>(m, test.images, test.labels, e).accuracy();
    if (fgsm_last < 0.05) break;
  }
  eps.insert(eps.begin(), 0.0);
  auto spec = attack_from_tag("pgd_es", 0);
  spec.iterations = 50;
  const auto s = epsilon_sweep<double>(m, spec, eps, test);
  std::ostringstream d;
  d << "sweep PGD^es over";
  for (const auto& p : s.points) d << ' ' << fmt(p.epsilon, 2) << ':' << fmt(p.accuracy, 2);
  d << "; FGSM at largest eps " << fmt(fgsm_last) << "; PGD^es at largest eps " << fmt(s.points.back().accuracy);
  for (const auto& w : s.warnings) d << "; warning: " << w;
  return {fgsm_last < 0.05 && s.points.back().accuracy < 0.05, d.str()};
}

Outcome cw_accounting() {
  auto& dm = desk_model();
  const auto& m = *dm.model;
  const auto sub = dm.data.test.subset(select_subset(dm.data.test.size(), 40, 5));
  auto spec = attack_from_tag("cw_l2", std::numeric_limits<double>::infinity());
  spec.iterations = 100;
  spec.binary_search_steps = 3;
  const auto r = cw_l2<double>(m, sub.images, sub.labels, spec);
  const auto inf = threshold_l2(r, std::numeric_limits<double>::infinity());
  const auto zero = threshold_l2(r, 0.0);
  const double clean = clean_accuracy<double>(m, sub);
  const auto fresh = predict_labels<double>(m, r.adversarial);
  std::size_t bad = 0, successes = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!r.success[i]) continue;
    ++successes;
    bad += fresh[i] == sub.labels[i];
  }
  const bool ok = inf.robust_accuracy == r.accuracy() && zero.robust_accuracy == clean && bad == 0;
  std::ostringstream d;
  d << "bound inf " << fmt(inf.robust_accuracy) << " vs raw " << fmt(r.accuracy()) << "; bound 0 "
    << fmt(zero.robust_accuracy) << " vs clean " << fmt(clean) << "; " << successes << " successes, " << bad
    << " fail re-verification";
  return {ok, d.str()};
}

Outcome training_mechanics() {
  const auto data = synthetic_dataset<double>(desk_data_spec(2)).data;
  const auto cb = desk_codebook(2);
  auto cfg = desk_train_config(2);
  cfg.phases = {{2, 3e-3}};
  auto run = [&](AdversarialMode mode, double eps) {
    EcocEnsemble<double> model(cb, 1, ArchitectureSpec::desk(), 2);
    TrainConfig c = cfg;
    c.mode = mode;
    c.epsilon = eps;
    auto rep = train(model, data, c);
    std::vector<std::vector<double>> params;
    for (const auto& p : model.named_parameters()) params.push_back(p.value.values());
    return std::make_pair(rep, params);
  };
  const auto ind = run(AdversarialMode::IndAdvT, 0.06);
  const auto reg = run(AdversarialMode::RegAdvT, 0.06);
  const auto& ii = ind.first.instrumentation;
  bool ind_ok = ii.attack_runs == cb.bits() * ii.steps && ii.distinct_batches.size() == ii.steps;
  // Classifiers with a vanishing gradient all return the clean batch.
  std::size_t full = 0, vanished = 0;
  for (std::size_t s = 0; s < ii.distinct_batches.size(); ++s) {
    const std::size_t clean = ii.unperturbed_batches[s];
    ind_ok = ind_ok && ii.distinct_batches[s] == cb.bits() - clean + (clean > 0 ? 1 : 0);
    full += ii.distinct_batches[s] == cb.bits();
    vanished += clean;
  }
  bool reg_ok = reg.first.instrumentation.attack_runs == reg.first.instrumentation.steps;
  for (auto n : reg.first.instrumentation.distinct_batches) reg_ok = reg_ok && n == 1;
  const auto std0 = run(AdversarialMode::None, 0);
  const auto ind0 = run(AdversarialMode::IndAdvT, 0);
  const auto reg0 = run(AdversarialMode::RegAdvT, 0);
  const bool same_ind = ind0.second == std0.second &&
                        ind0.first.instrumentation.step_losses == std0.first.instrumentation.step_losses;
  const bool same_reg = reg0.second == std0.second &&
                        reg0.first.instrumentation.step_losses == std0.first.instrumentation.step_losses;
  std::ostringstream d;
  d << "IndAdvT " << ii.steps << " steps, " << full << " with " << cb.bits() << " distinct batches, " << vanished
    << " vanishing-gradient copies, pairwise distinct otherwise " << (ind_ok ? "ok" : "VIOLATED") << "; RegAdvT 1 batch/step " << (reg_ok ? "ok" : "VIOLATED")
    << "; eps=0 bit-identical to standard: IndAdvT " << (same_ind ? "yes" : "NO") << ", RegAdvT "
    << (same_reg ? "yes" : "NO");
  return {ind_ok && reg_ok && same_ind && same_reg, d.str()};
}

// ------------------------------------------------------------ trend smoke

double pgd_es_accuracy(const Classifier<double>& m, const Dataset<double>& d) {
  auto s = attack_from_tag("pgd_es", 0.06);
  s.iterations = 50;
  return pgd<double>(m, d.images, d.labels, s).accuracy();
}

Outcome trend_smoke() {
  struct Row {
    double ecoc_clean, ens_clean, ecoc, ens, ind_clean, reg_clean, ind, reg;
  };
  std::vector<Row> rows;
  std::ostringstream d;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto data = synthetic_dataset<double>(desk_data_spec(seed)).data;
    const auto cb = desk_codebook(seed);
    const auto cfg = desk_train_config(seed);
    EcocEnsemble<double> ecoc(cb, 1, ArchitectureSpec::desk(), seed);
    train_standard(ecoc, data, cfg);
    auto ens = BaselineModel<double>::ensemble(8, 5, ArchitectureSpec::desk(), seed);
    train_standard(ens, data, cfg);
    TrainConfig adv = cfg;
    adv.epsilon = 0.06;
    adv.adv_iterations = 2;
    adv.mode = AdversarialMode::IndAdvT;
    EcocEnsemble<double> ind(cb, 1, ArchitectureSpec::desk(), seed);
    train_indadvt(ind, data, adv);
    adv.mode = AdversarialMode::RegAdvT;
    EcocEnsemble<double> reg(cb, 1, ArchitectureSpec::desk(), seed);
    train_regadvt(reg, data, adv);
    Row r{clean_accuracy<double>(ecoc, data.test), clean_accuracy<double>(ens, data.test),
          pgd_es_accuracy(ecoc, data.test),       pgd_es_accuracy(ens, data.test),
          clean_accuracy<double>(ind, data.test),  clean_accuracy<double>(reg, data.test),
          pgd_es_accuracy(ind, data.test),        pgd_es_accuracy(reg, data.test)};
    rows.push_back(r);
    d << "seed " << seed << ": ECOC " << fmt(r.ecoc, 2) << " (clean " << fmt(r.ecoc_clean, 2) << ", "
      << ecoc.parameter_count() << " params) vs ENSEMBLE_8 " << fmt(r.ens, 2) << " (clean " << fmt(r.ens_clean, 2)
      << ", " << ens.parameter_count() << " params); IndAdvT " << fmt(r.ind, 2) << " (clean " << fmt(r.ind_clean, 2)
      << ") vs RegAdvT " << fmt(r.reg, 2) << " (clean " << fmt(r.reg_clean, 2) << "). ";
  }
  auto mean = [&](double Row::*f) {
    double s = 0;
    for (const auto& r : rows) s += r.*f;
    return s / static_cast<double>(rows.size());
  };
  bool matched = true;
  for (const auto& r : rows)
    matched = matched && r.ecoc_clean >= 0.95 && r.ens_clean >= 0.95 && r.ind_clean >= 0.95 && r.reg_clean >= 0.95;
  const double k_gap = mean(&Row::ecoc) - mean(&Row::ens);
  const double adv_gap = mean(&Row::ind) - mean(&Row::reg);
  const bool k_ok = k_gap > -0.05, adv_ok = adv_gap > -0.05;
  d << "Mean gaps (tolerance 0.05): ECOC-ENSEMBLE " << fmt(k_gap) << (k_ok ? " ok" : " FAIL") << ", IndAdvT-RegAdvT "
    << fmt(adv_gap) << (adv_ok ? " ok" : " FAIL") << "; clean >= 0.95 for all " << (matched ? "yes" : "NO")
    << ". Best-effort criterion: failure flags investigation.";
  return {matched && k_ok && adv_ok, d.str()};
}

// ------------------------------------------------- non-reproducibility note

Outcome non_reproducibility() {
  const std::filesystem::path root = ECOC_SOURCE_DIR;
  std::ifstream readme(root / "README.md");
  std::stringstream ss;
  ss << readme.rdbuf();
  const std::string text = ss.str();
  const bool statement = text.find("NOT reproducible at desk scale") != std::string::npos &&
                         text.find("26.4") != std::string::npos;
  std::size_t presets = 0, capability = 0;
  for (const auto& e : std::filesystem::directory_iterator(root / "configs")) {
    const auto name = e.path().filename().string();
    if (name.rfind("table", 0) != 0) continue;
    ++presets;
    const auto c = load_experiment(e.path());
    std::string desc = c.document.value("description", "");
    capability += desc.find("capability") != std::string::npos;
  }
  const bool runtime = text.find("Expected runtime") != std::string::npos;
  std::ostringstream d;
  d << "README statement " << (statement ? "present" : "MISSING") << ", runtime table "
    << (runtime ? "present" : "MISSING") << "; " << presets << " table presets (" << capability
    << " marked capability, 26 expected)";
  return {statement && runtime && presets == 26 && capability == 26, d.str()};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Outcome (*fn)();
    bool blocking;
  };
  const std::vector<Criterion> criteria{
      {"C1 codebook presets", codebook_presets, true},
      {"C2 error-correction oracle", error_correction, true},
      {"C3 decoder duality", decoder_duality, true},
      {"C4 gradient suite", gradient_suite, true},
      {"C5 attack contracts", attack_contracts, true},
      {"C6 epsilon-sweep masking probe", masking_probe, true},
      {"C7 C&W accounting", cw_accounting, true},
      {"C8 adversarial-training mechanics", training_mechanics, true},
      {"C9 trend smoke test", trend_smoke, false},
      {"C10 non-reproducibility statement", non_reproducibility, true},
  };
  int blocking_failures = 0;
  for (const auto& c : criteria) {
    const auto t = Clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << c.name << " (" << fmt(seconds_since(t), 1) << "s): " << o.detail
              << std::endl;
    if (!o.pass && c.blocking) ++blocking_failures;
  }
  return blocking_failures == 0 ? 0 : 1;
}
