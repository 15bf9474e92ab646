#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ecoc/models.hpp"

namespace {

using ecoc::Tape;
using ecoc::Tensor;
namespace ag = ecoc::ag;

Tensor<double> random_images(std::size_t n, const ecoc::ArchitectureSpec& arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Tensor<double> x({n, arch.channels, arch.height, arch.width});
  for (double& v : x.values()) v = u(rng);
  return x;
}

ecoc::CodewordMatrix small_codebook() {
  return ecoc::generate_codebook(4, 8, {4, 1, 1}, 5);
}

Tensor<double> tanh_saturated(const ecoc::CodewordMatrix& a, std::size_t m, double c) {
  Tensor<double> z({1, a.bits()});
  for (std::size_t j = 0; j < a.bits(); ++j) z.at(0, j) = c * a(m, j);
  return z;
}

TEST(Architecture, PresetShapes) {
  const auto cifar = ecoc::ArchitectureSpec::cifar10();
  const auto s = cifar.activation_shapes();
  ASSERT_EQ(s.size(), 11u);
  EXPECT_EQ(s[8], (ecoc::Shape{128, 4, 4}));
  EXPECT_EQ(s[10], (ecoc::Shape{16, 4, 4}));
  EXPECT_EQ(cifar.fc_inputs(), 256u);
  const auto layers = cifar.layers();
  for (std::size_t i : {2u, 5u, 8u}) EXPECT_EQ(layers[i].stride, 2u);
  EXPECT_EQ(ecoc::ArchitectureSpec::fashion_mnist().activation_shapes()[8], (ecoc::Shape{32, 4, 4}));
  EXPECT_THROW(ecoc::ArchitectureSpec::by_name("vgg"), std::invalid_argument);
}

TEST(EcocForward, ZeroFinalLayersGiveZeroLogits) {
  const auto arch = ecoc::ArchitectureSpec::desk();
  ecoc::EcocEnsemble<double> model(small_codebook(), 2, arch, 1);
  for (std::size_t g = 0; g < model.groups(); ++g)
    for (auto& p : model.group(g).parameters())
      if (p.name.find("fc.") != std::string::npos) std::fill(p.value.values().begin(), p.value.values().end(), 0.0);
  const auto z = ecoc::evaluate_bit_logits(model, random_images(3, arch, 2));
  EXPECT_EQ(z.shape(), (ecoc::Shape{3, 8}));
  for (double v : z.values()) EXPECT_EQ(v, 0.0);
}

TEST(EcocForward, ShapeContractAndErrors) {
  const auto arch = ecoc::ArchitectureSpec::desk();
  ecoc::EcocEnsemble<double> model(small_codebook(), 1, arch, 1);
  EXPECT_EQ(ecoc::evaluate_bit_logits(model, random_images(5, arch, 3)).shape(), (ecoc::Shape{5, 8}));
  Tape<double> tape;
  EXPECT_THROW(model.bit_logits(tape, tape.constant(Tensor<double>({2, 1, 9, 9}))), ecoc::ShapeError);
  EXPECT_THROW(ecoc::EcocEnsemble<double>(small_codebook(), 3, arch, 1), std::invalid_argument);
}

TEST(EcocForward, ParameterIsolationWithoutSharing) {
  const auto arch = ecoc::ArchitectureSpec::desk();
  ecoc::EcocEnsemble<double> model(small_codebook(), 1, arch, 4);
  const auto x = random_images(2, arch, 5);
  const auto before = ecoc::evaluate_bit_logits(model, x);
  for (auto& p : model.group(3).parameters())
    for (double& v : p.value.values()) v *= 1.5;
  const auto after = ecoc::evaluate_bit_logits(model, x);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t n = 0; n < 8; ++n) {
      if (n == 3) EXPECT_NE(after.at(r, n), before.at(r, n));
      else EXPECT_EQ(after.at(r, n), before.at(r, n));
    }
}

TEST(EcocForward, GradientIsolationAndSharing) {
  const auto arch = ecoc::ArchitectureSpec::desk();
  const auto x = random_images(2, arch, 6);
  for (std::size_t k : {1u, 4u}) {
    ecoc::EcocEnsemble<double> model(small_codebook(), k, arch, 7);
    Tape<double> tape;
    auto xin = tape.variable(x);
    std::vector<std::vector<ecoc::Var<double>>> bound;
    std::vector<ecoc::Var<double>> cols;
    for (std::size_t g = 0; g < model.groups(); ++g) {
      bound.push_back(model.group(g).bind(tape, true));
      cols.push_back(model.group(g).forward(xin, bound.back()));
    }
    auto z = ag::concat_cols(cols);
    const std::size_t n = 1;
    auto out = ag::sum(ag::slice_cols(z, n, n + 1));
    const auto grads = tape.backward(out, Tensor<double>::scalar(1));
    const auto [gn, head] = model.locate(n);
    EXPECT_GT(ecoc::max_abs_diff(grads[xin], Tensor<double>(x.shape())), 0.0);
    for (std::size_t g = 0; g < model.groups(); ++g) {
      const auto& net = model.group(g);
      for (std::size_t p = 0; p < bound[g].size(); ++p) {
        const double mag = ecoc::max_abs_diff(grads[bound[g][p]], Tensor<double>(net.parameters()[p].value.shape()));
        const auto [first, last] = net.head_parameter_range(head);
        const bool own_head = g == gn && p >= first && p < last;
        const bool shared = g == gn && p < net.extractor_parameter_count();
        if (!own_head && !shared) {
          EXPECT_EQ(mag, 0.0) << "k=" << k << " group " << g << " param " << net.parameters()[p].name;
        }
      }
      if (g == gn) {
        // conv1 weights of the shared extractor receive gradient.
        EXPECT_GT(ecoc::max_abs_diff(grads[bound[g][0]], Tensor<double>(net.parameters()[0].value.shape())), 0.0);
      }
    }
  }
}

TEST(Decode, SaturatedCodewordGivesCorrelations) {
  const auto a = small_codebook();
  for (std::size_t m = 0; m < a.classes(); ++m) {
    Tape<double> tape;
    const auto h = ecoc::decode(tape.constant(tanh_saturated(a, m, 30)), a, false).value();
    for (std::size_t i = 0; i < a.classes(); ++i) {
      const double expect = 8.0 - 2.0 * static_cast<double>(ecoc::hamming_distance(a.row(m), a.row(i)));
      EXPECT_NEAR(h.at(0, i), expect, 1e-12);
    }
    EXPECT_EQ(ecoc::predict(h)[0], m);
  }
}

TEST(Decode, ZeroLogitsAndUnmask) {
  const auto a = small_codebook();
  Tape<double> tape;
  const auto h0 = ecoc::decode(tape.constant(Tensor<double>({2, 8})), a, false).value();
  for (double v : h0.values()) EXPECT_EQ(v, 0.0);
  const auto h = ecoc::decode(tape.constant(tanh_saturated(a, 0, 1)), a, true).value();
  for (std::size_t i = 0; i < a.classes(); ++i)
    EXPECT_EQ(h.at(0, i), 8.0 - 2.0 * static_cast<double>(ecoc::hamming_distance(a.row(0), a.row(i))));
  EXPECT_THROW(ecoc::decode(tape.constant(Tensor<double>({1, 7})), a, false), ecoc::ShapeError);
}

TEST(Decode, DualityWithHammingDecoding) {
  const auto a = ecoc::generate_codebook(10, 16, ecoc::codebook_preset("16bit").params, 1);
  std::mt19937_64 rng(9);
  std::bernoulli_distribution coin;
  std::size_t mismatches = 0, unmask_mismatches = 0;
  for (int t = 0; t < 10000; ++t) {
    Tensor<double> z({1, 16});
    std::vector<int> s(16);
    for (std::size_t j = 0; j < 16; ++j) {
      s[j] = coin(rng) ? 1 : -1;
      z.at(0, j) = 20.0 * s[j];
    }
    Tape<double> tape;
    const auto zv = tape.constant(z);
    const std::size_t expect = ecoc::hamming_decode(s, a);
    mismatches += ecoc::predict(ecoc::decode(zv, a, false).value())[0] != expect;
    unmask_mismatches += ecoc::predict(ecoc::decode(zv, a, true).value())[0] != expect;
  }
  EXPECT_EQ(mismatches, 0u);
  EXPECT_EQ(unmask_mismatches, 0u);
}

TEST(Predict, Examples) {
  EXPECT_EQ(ecoc::predict(std::span<const double>(std::vector<double>{0.1, 0.9, 0.3})), 1u);
  EXPECT_EQ(ecoc::predict(std::span<const double>(std::vector<double>{2, 2, 2})), 0u);
  EXPECT_THROW(ecoc::predict(std::span<const double>()), std::invalid_argument);
  EXPECT_THROW(ecoc::predict(std::span<const double>(std::vector<double>{1, NAN})), ecoc::NumericError);
  const auto a = small_codebook();
  Tape<double> tape;
  EXPECT_EQ(ecoc::predict(ecoc::decode(tape.constant(tanh_saturated(a, 3, 25)), a, false).value())[0], 3u);
}

TEST(ClassProbabilities, Examples) {
  const auto p = ecoc::class_probabilities(Tensor<double>::vector({0, 0}));
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  const auto q = ecoc::class_probabilities(Tensor<double>::vector({std::log(3.0), 0}));
  EXPECT_NEAR(q[0], 0.75, 1e-15);
  EXPECT_NEAR(q[1], 0.25, 1e-15);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0, 3);
  Tensor<double> h({1000, 6});
  for (double& v : h.values()) v = g(rng);
  const auto probs = ecoc::class_probabilities(h);
  EXPECT_EQ(ecoc::predict(probs), ecoc::predict(h));
  for (std::size_t r = 0; r < 1000; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 6; ++c) s += probs.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(SoftVote, DuplicatedMembersDoubleScores) {
  const auto arch = ecoc::ArchitectureSpec::desk();
  auto model = ecoc::BaselineModel<double>::ensemble(2, 4, arch, 3);
  model.member(1).parameters() = model.member(0).parameters();
  const auto x = random_images(3, arch, 8);
  const auto scores = ecoc::softvote_forward(model, x, false);
  Tape<double> tape;
  const auto single = ag::softmax(model.member_logits(tape, tape.constant(x), 0)).value();
  for (std::size_t i = 0; i < scores.size(); ++i) EXPECT_NEAR(scores[i], 2 * single[i], 1e-15);
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 4; ++c) s += scores.at(r, c);
    EXPECT_NEAR(s, 2.0, 1e-9);
  }
  const auto raw = ecoc::softvote_forward(model, x, true);
  const auto logits = model.member_logits(tape, tape.constant(x), 0).value();
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR(raw[i], 2 * logits[i], 1e-12);
}

TEST(SoftVote, SingleMemberAndSimpleErrors) {
  const auto arch = ecoc::ArchitectureSpec::desk();
  const auto x = random_images(6, arch, 10);
  auto one = ecoc::BaselineModel<double>::ensemble(1, 4, arch, 11);
  Tape<double> tape;
  const auto own = ecoc::predict(one.member_logits(tape, tape.constant(x), 0).value());
  EXPECT_EQ(ecoc::predict(ecoc::softvote_forward(one, x, false)), own);
  auto simple = ecoc::BaselineModel<double>::simple(4, arch, 11);
  EXPECT_THROW(ecoc::softvote_forward(simple, x, false), std::invalid_argument);
  EXPECT_THROW(simple.scores(tape, tape.constant(x), true), std::invalid_argument);
}

TEST(Checkpointing, NamedParametersRoundTrip) {
  const auto arch = ecoc::ArchitectureSpec::desk();
  ecoc::EcocEnsemble<double> a(small_codebook(), 2, arch, 1), b(small_codebook(), 2, arch, 2);
  b.load_parameters(a.named_parameters());
  const auto x = random_images(2, arch, 3);
  EXPECT_EQ(ecoc::evaluate_bit_logits(a, x), ecoc::evaluate_bit_logits(b, x));
  auto named = a.named_parameters();
  named.pop_back();
  EXPECT_THROW(b.load_parameters(named), std::invalid_argument);
}

}  // namespace
