#pragma once

#include <random>
#include <string>
#include <vector>

#include "ecoc/grad_check.hpp"
#include "ecoc/ops.hpp"

namespace ecoc_test {

using ecoc::Tape;
using ecoc::Tensor;
using ecoc::Var;
namespace ag = ecoc::ag;

inline Tensor<double> random_tensor(ecoc::Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

struct PrimitiveCase {
  std::string name;
  ecoc::ScalarFunction<double> fn;
  Tensor<double> point;
};

/// One scalar function per differentiable primitive, with a random point.
inline std::vector<PrimitiveCase> primitive_cases(std::mt19937_64& rng) {
  const auto c = random_tensor({2, 3}, rng);
  auto pt = [&] { return random_tensor({2, 3}, rng, -2, 2); };
  std::vector<PrimitiveCase> cases{
      {"add", [c](Tape<double>& t, Var<double> x) { return ag::sum(ag::mul(ag::add(x, t.constant(c)), t.constant(c))); }, pt()},
      {"sub", [c](Tape<double>& t, Var<double> x) { return ag::sum(ag::mul(ag::sub(t.constant(c), x), x)); }, pt()},
      {"mul", [](Tape<double>&, Var<double> x) { return ag::sum(ag::mul(x, x)); }, pt()},
      {"scale", [](Tape<double>&, Var<double> x) { return ag::sum(ag::mul(ag::scale(x, -2.5), x)); }, pt()},
      {"add_scalar", [](Tape<double>&, Var<double> x) { return ag::sum(ag::mul(ag::add_scalar(x, 0.7), x)); }, pt()},
      {"neg", [c](Tape<double>& t, Var<double> x) { return ag::sum(ag::mul(ag::neg(x), t.constant(c))); }, pt()},
      {"relu", [c](Tape<double>& t, Var<double> x) { return ag::sum(ag::mul(ag::relu(x), t.constant(c))); }, pt()},
      {"maximum", [c](Tape<double>& t, Var<double> x) { return ag::sum(ag::mul(ag::maximum(x, 0.3), t.constant(c))); }, pt()},
      {"tanh", [c](Tape<double>& t, Var<double> x) { return ag::sum(ag::mul(ag::tanh(x), t.constant(c))); }, pt()},
      {"softmax", [c](Tape<double>& t, Var<double> x) { return ag::sum(ag::mul(ag::softmax(x), t.constant(c))); }, pt()},
      {"log_softmax", [c](Tape<double>& t, Var<double> x) { return ag::sum(ag::mul(ag::log_softmax(x), t.constant(c))); }, pt()},
      {"cross_entropy", [](Tape<double>&, Var<double> x) { return ag::cross_entropy(x, {2, 0}); }, pt()},
      {"mean", [](Tape<double>&, Var<double> x) { return ag::mean(ag::mul(x, x)); }, pt()},
      {"max_rows", [](Tape<double>&, Var<double> x) { return ag::sum(ag::max_rows(ag::mul(x, x))); }, pt()},
      {"clip", [c](Tape<double>& t, Var<double> x) { return ag::sum(ag::mul(ag::clip(x, -0.5, 0.5), t.constant(c))); }, pt()},
      {"sign", [](Tape<double>&, Var<double> x) { return ag::sum(ag::mul(ag::sign(x), x)); }, pt()},
      {"gather", [](Tape<double>&, Var<double> x) { return ag::sum(ag::gather(ag::tanh(x), {2, 0})); }, pt()},
      {"reshape", [c](Tape<double>& t, Var<double> x) {
         return ag::sum(ag::mul(ag::reshape(ag::tanh(ag::reshape(x, {3, 2})), {2, 3}), t.constant(c)));
       }, pt()},
      {"slice_concat", [](Tape<double>&, Var<double> x) {
         return ag::sum(ag::tanh(ag::concat_cols<double>({ag::slice_cols(x, 1, 3), x})));
       }, pt()},
  };

  const auto w = random_tensor({3, 2, 3, 3}, rng);
  const auto b = random_tensor({3}, rng);
  const auto image = random_tensor({2, 2, 5, 5}, rng);
  cases.push_back({"conv2d_input", [w, b](Tape<double>& t, Var<double> x) {
                     return ag::sum(ag::tanh(ag::conv2d(x, t.constant(w), t.constant(b), 2, 1)));
                   }, image});
  cases.push_back({"conv2d_weight", [image, b](Tape<double>& t, Var<double> k) {
                     return ag::sum(ag::tanh(ag::conv2d(t.constant(image), k, t.constant(b), 1, 1)));
                   }, w});
  cases.push_back({"conv2d_bias", [image, w](Tape<double>& t, Var<double> bias) {
                     return ag::sum(ag::tanh(ag::conv2d(t.constant(image), t.constant(w), bias, 1, 0)));
                   }, b});
  const auto lw = random_tensor({4, 3}, rng);
  cases.push_back({"linear", [lw](Tape<double>& t, Var<double> x) {
                     return ag::sum(ag::tanh(ag::linear(ag::flatten(x), t.constant(lw), t.constant(Tensor<double>({4}, 0.1)))));
                   }, pt()});
  return cases;
}

}  // namespace ecoc_test
