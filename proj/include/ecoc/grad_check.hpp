#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>

#include "ecoc/tape.hpp"
#include "ecoc/tensor.hpp"

namespace ecoc {

template <typename T>
using ScalarFunction = std::function<Var<T>(Tape<T>&, Var<T>)>;

struct GradCheckOptions {
  double step = 1e-5;
  /// Relative errors use max(|analytic|, |numeric|, floor) as denominator.
  double floor = 1e-6;
  /// A coordinate is a kink when its one-sided slopes differ by more than
  /// this fraction of max(1, |slope|); such coordinates are excluded.
  double kink_threshold = 1e-3;
};

template <typename T>
struct GradCheckResult {
  bool passed = false;
  T max_relative_error = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  std::string diagnostic;
};

/// Compares the tape gradient of a scalar function against central finite
/// differences at `point`.
template <typename T>
GradCheckResult<T> grad_check(const ScalarFunction<T>& fn, const Tensor<T>& point, T tolerance,
                              const GradCheckOptions& opts = {}) {
  if (!(tolerance > 0)) throw std::invalid_argument("grad_check: tolerance must be positive");
  GradCheckResult<T> result;

  auto evaluate = [&fn](const Tensor<T>& at) -> T {
    Tape<T> tape;
    Var<T> out = fn(tape, tape.variable(at, "x"));
    if (out.value().size() != 1) {
      throw ShapeError("grad_check: function must be scalar-valued, got " +
                       shape_str(out.shape()));
    }
    return out.value()[0];
  };

  Tensor<T> analytic;
  T f0;
  try {
    Tape<T> tape;
    Var<T> x = tape.variable(point, "x");
    Var<T> out = fn(tape, x);
    if (out.value().size() != 1) {
      throw ShapeError("grad_check: function must be scalar-valued, got " +
                       shape_str(out.shape()));
    }
    f0 = out.value()[0];
    analytic = tape.backward(out, Tensor<T>(out.shape(), T(1)))[x];
  } catch (const NumericError& e) {
    result.diagnostic = std::string("non-finite evaluation: ") + e.what();
    return result;
  }

  const T h = static_cast<T>(opts.step);
  Tensor<T> probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    T fp, fm;
    try {
      probe[i] = point[i] + h;
      fp = evaluate(probe);
      probe[i] = point[i] - h;
      fm = evaluate(probe);
      probe[i] = point[i];
    } catch (const NumericError& e) {
      result.diagnostic = "non-finite evaluation near coordinate " + std::to_string(i) + ": " +
                          e.what();
      result.passed = false;
      return result;
    }
    const T forward = (fp - f0) / h;
    const T backward = (f0 - fm) / h;
    const T slope_scale = std::max({T(1), std::abs(forward), std::abs(backward)});
    if (std::abs(forward - backward) > static_cast<T>(opts.kink_threshold) * slope_scale) {
      ++result.excluded;
      continue;
    }
    const T numeric = (fp - fm) / (2 * h);
    const T denom =
        std::max({std::abs(analytic[i]), std::abs(numeric), static_cast<T>(opts.floor)});
    const T rel = std::abs(analytic[i] - numeric) / denom;
    ++result.checked;
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_index = i;
    }
  }
  result.passed = result.max_relative_error < tolerance;
  std::ostringstream os;
  os << "checked " << result.checked << ", excluded " << result.excluded
     << ", max relative error " << result.max_relative_error << " at " << result.worst_index;
  result.diagnostic = os.str();
  return result;
}

}  // namespace ecoc
