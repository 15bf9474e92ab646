#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecoc/attacks.hpp"
#include "ecoc/codebook.hpp"
#include "ecoc/data.hpp"
#include "ecoc/models.hpp"
#include "ecoc/parallel.hpp"

namespace ecoc {

/// One row of a robustness table.
struct RobustnessRow {
  std::string model;
  std::string attack;
  std::string norm;
  double epsilon = 0;
  std::size_t subset_size = 0;
  std::uint64_t subset_seed = 0;
  double clean_accuracy = 0;
  double robust_accuracy = 0;
};

struct RobustnessReport {
  std::string model;
  /// Over the full test set.
  double clean_accuracy = 0;
  std::vector<RobustnessRow> rows;
  std::vector<std::string> warnings;
};

struct EvaluationOptions {
  /// Examples per attack call.
  std::size_t chunk = 100;
  std::size_t threads = 1;
};

/// Runs an attack over a dataset in chunks and concatenates the results.
template <typename T>
AttackResult<T> attack_dataset(const Classifier<T>& model, const AttackSpec& spec, const Dataset<T>& d,
                               const EvaluationOptions& opt = {}) {
  if (d.size() == 0) throw std::invalid_argument("attack: empty dataset");
  const std::size_t chunk = std::max<std::size_t>(1, opt.chunk);
  const std::size_t parts = (d.size() + chunk - 1) / chunk;
  std::vector<AttackResult<T>> results(parts);
  parallel_for(parts, opt.threads, [&](std::size_t p) {
    const std::size_t begin = p * chunk, end = std::min(d.size(), begin + chunk);
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
    const Dataset<T> part = d.subset(idx);
    results[p] = run_attack(model, part.images, part.labels, spec);
  });
  AttackResult<T> out;
  std::vector<T> pixels;
  pixels.reserve(d.images.size());
  for (auto& r : results) {
    pixels.insert(pixels.end(), r.adversarial.values().begin(), r.adversarial.values().end());
    out.predictions.insert(out.predictions.end(), r.predictions.begin(), r.predictions.end());
    out.success.insert(out.success.end(), r.success.begin(), r.success.end());
    out.linf.insert(out.linf.end(), r.linf.begin(), r.linf.end());
    out.l2.insert(out.l2.end(), r.l2.begin(), r.l2.end());
    out.c_intervals.insert(out.c_intervals.end(), r.c_intervals.begin(), r.c_intervals.end());
    out.iterations = r.iterations;
    out.gradient_evaluations += r.gradient_evaluations;
  }
  out.adversarial = Tensor<T>(d.images.shape(), std::move(pixels));
  return out;
}

/// Fraction of examples still classified correctly after the attack. C&W
/// results go through threshold_l2 with the spec's l2 bound.
template <typename T>
double robust_accuracy(const Classifier<T>& model, const AttackSpec& spec, const Dataset<T>& d,
                       const EvaluationOptions& opt = {}) {
  require_unmask_support(spec.unmask, model.supports_unmask());
  const auto r = attack_dataset(model, spec, d, opt);
  if (spec.family == AttackFamily::CwL2) return threshold_l2(r, spec.l2_bound).robust_accuracy;
  return r.accuracy();
}

template <typename T>
double clean_accuracy(const Classifier<T>& model, const Dataset<T>& d) {
  if (d.size() == 0) return 0;
  const auto pred = predict_labels(model, d.images);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < d.size(); ++i) ok += pred[i] == d.labels[i];
  return static_cast<double>(ok) / static_cast<double>(d.size());
}

/// Per-example Hamming distance between the binarized bit logits and the
/// true codeword, with the histogram over 0..N.
struct HammingErrorDistribution {
  std::vector<std::size_t> distances;
  std::vector<std::size_t> histogram;
  /// floor((d_min - 1) / 2) + 1 for the measured minimum row distance.
  std::size_t fooling_threshold = 0;
  /// Measured minimum row distance of the codebook.
  std::size_t min_row_distance = 0;
  /// Ensemble prediction per example.
  std::vector<std::size_t> predictions;
};

/// Binarized bits use sign(z) with sign(0) = +1.
template <typename T>
HammingErrorDistribution hamming_errors(const EcocEnsemble<T>& model, const Tensor<T>& images,
                                        const std::vector<std::size_t>& labels) {
  const CodewordMatrix& a = model.codebook();
  const auto z = evaluate_bit_logits(model, images);
  const auto rep = verify_codebook(a);
  HammingErrorDistribution h;
  h.histogram.assign(a.bits() + 1, 0);
  h.fooling_threshold = rep.fooling_threshold;
  h.min_row_distance = rep.min_row_distance;
  h.predictions = predict_labels<T>(model, images);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::size_t d = 0;
    for (std::size_t j = 0; j < a.bits(); ++j) d += (z.at(i, j) >= T(0) ? 1 : -1) != a(labels[i], j);
    h.distances.push_back(d);
    ++h.histogram[d];
  }
  return h;
}

template <typename T>
HammingErrorDistribution hamming_error_histogram(const Classifier<T>& model, const AttackSpec& spec,
                                                 const Dataset<T>& d, const EvaluationOptions& opt = {}) {
  const auto* ecoc = dynamic_cast<const EcocEnsemble<T>*>(&model);
  if (!ecoc) throw std::invalid_argument("hamming_error_histogram: model is not an ECOC ensemble");
  const auto r = attack_dataset(model, spec, d, opt);
  return hamming_errors(*ecoc, r.adversarial, d.labels);
}

struct SweepPoint {
  double epsilon = 0;
  double accuracy = 0;
};

struct EpsilonSweep {
  std::vector<SweepPoint> points;
  std::vector<std::string> warnings;
};

/// Flags every rise of more than 2 accuracy points between neighbouring
/// epsilons as possible gradient masking.
inline std::vector<std::string> monotonicity_warnings(const std::vector<SweepPoint>& points) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].accuracy > points[i - 1].accuracy + 0.02) {
      std::ostringstream os;
      os << "possible gradient masking: accuracy rises from " << points[i - 1].accuracy << " at eps "
         << points[i - 1].epsilon << " to " << points[i].accuracy << " at eps " << points[i].epsilon;
      out.push_back(os.str());
    }
  }
  return out;
}

/// Robust accuracy at each epsilon with the step rescaled to epsilon / 3.
/// For C&W the epsilons are l2 bounds applied to a single run.
template <typename T>
EpsilonSweep epsilon_sweep(const Classifier<T>& model, AttackSpec spec, const std::vector<double>& eps,
                           const Dataset<T>& d, const EvaluationOptions& opt = {}) {
  if (!std::is_sorted(eps.begin(), eps.end())) throw std::invalid_argument("epsilon_sweep: epsilons must be ascending");
  EpsilonSweep s;
  if (spec.family == AttackFamily::CwL2) {
    // One unbounded C&W run, thresholded at each l2 bound.
    require_unmask_support(spec.unmask, model.supports_unmask());
    const auto r = attack_dataset(model, spec, d, opt);
    for (double e : eps) s.points.push_back({e, threshold_l2(r, e).robust_accuracy});
    s.warnings = monotonicity_warnings(s.points);
    return s;
  }
  for (double e : eps) {
    AttackSpec at = spec;
    at.epsilon = e;
    at.step_size.reset();
    s.points.push_back({e, robust_accuracy(model, at, d, opt)});
  }
  s.warnings = monotonicity_warnings(s.points);
  return s;
}

/// FGSM accuracy should not fall below PGD accuracy; returns a warning when
/// it does.
inline std::string fgsm_ordering_warning(double fgsm_acc, double pgd_acc, double eps) {
  if (fgsm_acc + 1e-12 >= pgd_acc) return {};
  std::ostringstream os;
  os << "possible gradient masking: FGSM accuracy " << fgsm_acc << " below PGD accuracy " << pgd_acc
     << " at eps " << eps;
  return os.str();
}

// ---------------------------------------------------------------- output

inline std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

/// Writes `content` after an optional "# ..." provenance line.
inline void write_text(const std::filesystem::path& path, const std::string& content, const std::string& provenance = {}) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (!provenance.empty()) out << "# " << provenance << '\n';
  out << content;
}

inline std::string robustness_csv(const std::vector<RobustnessRow>& rows) {
  std::ostringstream os;
  os << "model,attack,norm,epsilon,subset_size,subset_seed,clean_acc,robust_acc\n";
  for (const auto& r : rows)
    os << r.model << ',' << r.attack << ',' << r.norm << ',' << csv_number(r.epsilon) << ',' << r.subset_size << ','
       << r.subset_seed << ',' << csv_number(r.clean_accuracy) << ',' << csv_number(r.robust_accuracy) << '\n';
  return os.str();
}

inline std::string histogram_csv(const HammingErrorDistribution& h) {
  std::ostringstream os;
  os << "d,count\n";
  for (std::size_t d = 0; d < h.histogram.size(); ++d) os << d << ',' << h.histogram[d] << '\n';
  return os.str();
}

inline std::string sweep_csv(const EpsilonSweep& s) {
  std::ostringstream os;
  os << "epsilon,robust_acc\n";
  for (const auto& p : s.points) os << csv_number(p.epsilon) << ',' << csv_number(p.accuracy) << '\n';
  return os.str();
}

namespace svg_detail {

struct Frame {
  double width = 480, height = 320, left = 56, right = 16, top = 24, bottom = 44;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
  double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

inline std::string open(const Frame& f, const std::string& title, const std::string& xlabel, const std::string& ylabel) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << f.width / 2 << "\" y=\"14\" text-anchor=\"middle\">" << escape(title) << "</text>\n";
  os << "<line x1=\"" << f.left << "\" y1=\"" << f.py(f.y0) << "\" x2=\"" << f.width - f.right << "\" y2=\""
     << f.py(f.y0) << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << f.left << "\" y1=\"" << f.py(f.y0) << "\" x2=\"" << f.left << "\" y2=\"" << f.top
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4, yv = f.y0 + (f.y1 - f.y0) * i / 4;
    os << "<text x=\"" << f.px(xv) << "\" y=\"" << f.py(f.y0) + 14 << "\" text-anchor=\"middle\">"
       << csv_number(std::round(xv * 1000) / 1000) << "</text>\n";
    os << "<text x=\"" << f.left - 4 << "\" y=\"" << f.py(yv) + 4 << "\" text-anchor=\"end\">"
       << csv_number(std::round(yv * 1000) / 1000) << "</text>\n";
  }
  os << "<text x=\"" << f.width / 2 << "\" y=\"" << f.height - 8 << "\" text-anchor=\"middle\">" << escape(xlabel)
     << "</text>\n";
  os << "<text x=\"12\" y=\"" << f.height / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 12 "
     << f.height / 2 << ")\">" << escape(ylabel) << "</text>\n";
  return os.str();
}

}  // namespace svg_detail

/// Gaussian-kernel density (bandwidth 1 bit) of the Hamming distances with
/// vertical markers at the fooling threshold and the minimum row distance.
inline std::string histogram_svg(const HammingErrorDistribution& h, const std::string& title) {
  svg_detail::Frame f;
  const double n_bits = static_cast<double>(h.histogram.size() - 1);
  const double total = static_cast<double>(h.distances.size());
  f.x0 = 0;
  f.x1 = std::max(1.0, n_bits);
  std::vector<std::pair<double, double>> curve;
  double peak = 0;
  for (int k = 0; k <= 200; ++k) {
    const double x = f.x1 * k / 200;
    double y = 0;
    for (std::size_t d = 0; d < h.histogram.size(); ++d) {
      const double u = x - static_cast<double>(d);
      y += static_cast<double>(h.histogram[d]) * std::exp(-0.5 * u * u) / std::sqrt(2 * M_PI);
    }
    y = total > 0 ? y / total : 0;
    peak = std::max(peak, y);
    curve.push_back({x, y});
  }
  f.y1 = peak > 0 ? peak * 1.1 : 1;
  std::ostringstream os;
  os << svg_detail::open(f, title, "Hamming distance to true codeword", "density");
  os << std::fixed << std::setprecision(2) << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (const auto& [x, y] : curve) os << f.px(x) << ',' << f.py(y) << ' ';
  os << "\"/>\n";
  for (double m : {static_cast<double>(h.fooling_threshold), static_cast<double>(h.min_row_distance)})
    os << "<line x1=\"" << f.px(m) << "\" y1=\"" << f.py(0) << "\" x2=\"" << f.px(m) << "\" y2=\"" << f.top
       << "\" stroke=\"firebrick\" stroke-dasharray=\"4 3\"/>\n";
  os << "</svg>\n";
  return os.str();
}

inline std::string sweep_svg(const EpsilonSweep& s, const std::string& title) {
  svg_detail::Frame f;
  f.x0 = s.points.empty() ? 0 : s.points.front().epsilon;
  f.x1 = s.points.empty() ? 1 : std::max(s.points.back().epsilon, f.x0 + 1e-9);
  f.y0 = 0;
  f.y1 = 1;
  std::ostringstream os;
  os << svg_detail::open(f, title, "epsilon", "robust accuracy");
  os << std::fixed << std::setprecision(2) << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (const auto& p : s.points) os << f.px(p.epsilon) << ',' << f.py(p.accuracy) << ' ';
  os << "\"/>\n";
  for (const auto& p : s.points)
    os << "<circle cx=\"" << f.px(p.epsilon) << "\" cy=\"" << f.py(p.accuracy) << "\" r=\"3\" fill=\"steelblue\"/>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace ecoc
