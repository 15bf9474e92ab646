#include <bit>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "ecoc/codebook.hpp"

namespace {

using ecoc::CodewordMatrix;

// Table of 5 classes x 10 binary classifiers used as a worked example of a
// codeword matrix.
CodewordMatrix example_matrix() {
  return CodewordMatrix::from_rows({
      {-1, -1, -1, +1, +1, -1, -1, -1, -1, +1},
      {+1, -1, -1, -1, -1, -1, +1, -1, +1, -1},
      {+1, -1, +1, +1, +1, -1, +1, +1, +1, -1},
      {-1, -1, +1, -1, +1, +1, -1, +1, -1, -1},
      {-1, +1, -1, +1, -1, -1, +1, +1, +1, -1},
  });
}

std::size_t brute_distance(std::span<const std::int8_t> a, std::span<const std::int8_t> b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) ++d;
  return d;
}

TEST(HammingDistance, Examples) {
  EXPECT_EQ(ecoc::hamming_distance(std::vector<int>{1, 1}, std::vector<int>{1, 1}), 0u);
  EXPECT_EQ(ecoc::hamming_distance(std::vector<int>{1, -1, 1}, std::vector<int>{-1, 1, -1}), 3u);
  const auto a = example_matrix();
  EXPECT_EQ(ecoc::hamming_distance(a.row(0), a.row(1)), brute_distance(a.row(0), a.row(1)));
  EXPECT_EQ(ecoc::hamming_distance(a.row(0), a.row(1)), 6u);
}

TEST(HammingDistance, Errors) {
  EXPECT_THROW(ecoc::hamming_distance(std::vector<int>{1}, std::vector<int>{1, 1}),
               ecoc::CodebookError);
  EXPECT_THROW(ecoc::hamming_distance(std::vector<int>{0, 1}, std::vector<int>{1, 1}),
               ecoc::CodebookError);
}

TEST(HammingDistance, SymmetricAndZeroIffEqual) {
  std::mt19937_64 rng(1);
  std::bernoulli_distribution coin;
  for (int t = 0; t < 200; ++t) {
    std::vector<int> a(12), b(12);
    for (auto& v : a) v = coin(rng) ? 1 : -1;
    for (auto& v : b) v = coin(rng) ? 1 : -1;
    EXPECT_EQ(ecoc::hamming_distance(a, b), ecoc::hamming_distance(b, a));
    EXPECT_EQ(ecoc::hamming_distance(a, b) == 0, a == b);
  }
}

TEST(VerifyCodebook, ExampleMatrixMinimumRowDistance) {
  const auto a = example_matrix();
  std::size_t brute = a.bits();
  for (std::size_t i = 0; i < a.classes(); ++i)
    for (std::size_t j = i + 1; j < a.classes(); ++j)
      brute = std::min(brute, brute_distance(a.row(i), a.row(j)));
  const auto r = ecoc::verify_codebook(a);
  EXPECT_EQ(r.min_row_distance, brute);
  EXPECT_EQ(r.min_row_distance, 4u);
  EXPECT_EQ(r.correction_capacity, 1u);
  EXPECT_EQ(r.fooling_threshold, 2u);
}

TEST(VerifyCodebook, DuplicatedColumnFlagged) {
  const auto a = CodewordMatrix::from_rows({{1, 1, -1}, {-1, -1, 1}, {1, 1, 1}}, {0, 1, 0});
  const auto r = ecoc::verify_codebook(a);
  EXPECT_EQ(r.min_column_distance, 0u);
  EXPECT_TRUE(r.column_violation);
  EXPECT_FALSE(r.row_violation);
}

TEST(VerifyCodebook, ComplementColumnFlagged) {
  const auto a = CodewordMatrix::from_rows({{1, -1, 1}, {-1, 1, 1}, {1, -1, -1}}, {0, 0, 1});
  const auto r = ecoc::verify_codebook(a);
  EXPECT_EQ(r.min_complement_distance, 0u);
  EXPECT_TRUE(r.complement_violation);
  EXPECT_FALSE(r.column_violation);
}

TEST(VerifyCodebook, ThresholdsFromEntriesNotParams) {
  // Params claim a row distance of 8, entries only reach 4.
  auto rows = std::vector<std::vector<int>>{{1, 1, 1, 1, 1, 1, 1, 1}, {1, 1, 1, 1, -1, -1, -1, -1}};
  const auto r = ecoc::verify_codebook(CodewordMatrix::from_rows(rows, {8, 0, 0}));
  EXPECT_EQ(r.min_row_distance, 4u);
  EXPECT_EQ(r.correction_capacity, 1u);
  EXPECT_TRUE(r.row_violation);
}

TEST(GenerateCodebook, PresetsSatisfyConstraints) {
  for (const auto& preset : ecoc::codebook_presets()) {
    const auto a = ecoc::generate_codebook(10, preset.bits, preset.params, 7);
    const auto r = ecoc::verify_codebook(a);
    EXPECT_TRUE(r.ok()) << preset.name;
    EXPECT_GE(r.min_row_distance, preset.params.min_row_distance);
    EXPECT_GE(r.min_column_distance, preset.params.min_column_distance);
    EXPECT_GE(r.min_complement_distance, preset.params.min_complement_distance);
    EXPECT_EQ(a.seed(), 7u);
  }
}

TEST(GenerateCodebook, Deterministic) {
  const auto& p = ecoc::codebook_preset("16bit");
  EXPECT_EQ(ecoc::generate_codebook(10, 16, p.params, 42),
            ecoc::generate_codebook(10, 16, p.params, 42));
  EXPECT_NE(ecoc::generate_codebook(10, 16, p.params, 42).entries(),
            ecoc::generate_codebook(10, 16, p.params, 43).entries());
}

TEST(GenerateCodebook, TwoClassesFourBitsAreComplements) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = ecoc::generate_codebook(2, 4, {4, 0, 0}, seed);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(a(0, j), -a(1, j));
  }
}

TEST(GenerateCodebook, PreconditionErrors) {
  EXPECT_THROW(ecoc::generate_codebook(1, 8, {1, 0, 0}, 0), ecoc::CodebookError);
  EXPECT_THROW(ecoc::generate_codebook(4, 4, {5, 0, 0}, 0), ecoc::CodebookError);
}

TEST(GenerateCodebook, UnsatisfiableRowsReportFailure) {
  // Three 2-bit rows cannot be pairwise at distance 2.
  EXPECT_THROW(ecoc::generate_codebook(3, 2, {2, 0, 0}, 0, 500),
               ecoc::CodebookGenerationError);
}

TEST(GenerateCodebook, UnsatisfiableColumnsCarryBestMatrix) {
  // Three length-2 columns cannot be pairwise complementary.
  try {
    ecoc::generate_codebook(2, 3, {0, 2, 0}, 0, 200);
    FAIL() << "expected CodebookGenerationError";
  } catch (const ecoc::CodebookGenerationError& e) {
    ASSERT_TRUE(e.best().has_value());
    EXPECT_TRUE(e.report().column_violation);
    EXPECT_GT(e.report().violating_column_pairs, 0u);
  }
}

TEST(HammingDecode, ExactRowAndErrors) {
  const auto a = ecoc::generate_codebook(10, 16, ecoc::codebook_preset("16bit").params, 3);
  for (std::size_t m = 0; m < a.classes(); ++m) EXPECT_EQ(ecoc::hamming_decode(a.row(m), a), m);
  EXPECT_THROW(ecoc::hamming_decode(std::vector<int>{1, -1}, a), ecoc::CodebookError);
}

TEST(HammingDecode, ExampleRowWithTwoFlipsTiesToLowerIndex) {
  // Flipping bits 1 and 2 of C3 leaves it at distance 2 from both C3 and C5;
  // the lower index wins.
  const auto a = example_matrix();
  std::vector<int> s(a.row(2).begin(), a.row(2).end());
  s[0] = -s[0];
  s[1] = -s[1];
  EXPECT_EQ(brute_distance(a.row(2), a.row(2)), 0u);
  EXPECT_EQ(ecoc::hamming_decode(s, a), 2u);
}

TEST(HammingDecode, ExhaustiveFlipsWithinCapacity) {
  const auto a = ecoc::generate_codebook(10, 16, ecoc::codebook_preset("16bit").params, 11);
  const auto t = ecoc::verify_codebook(a).correction_capacity;
  ASSERT_GE(t, 3u);
  std::size_t failures = 0;
  for (std::size_t m = 0; m < a.classes(); ++m) {
    for (std::uint32_t mask = 0; mask < (1u << 16); ++mask) {
      if (static_cast<std::size_t>(std::popcount(mask)) > t) continue;
      std::vector<int> s(a.row(m).begin(), a.row(m).end());
      for (std::size_t j = 0; j < 16; ++j)
        if (mask & (1u << j)) s[j] = -s[j];
      failures += ecoc::hamming_decode(s, a) != m;
    }
  }
  EXPECT_EQ(failures, 0u);
}

TEST(SoftDecodeEquivalence, Examples) {
  const auto a = example_matrix();
  EXPECT_TRUE(ecoc::soft_decode_equivalence_check(a, a.row(0)));
  std::mt19937_64 rng(5);
  std::bernoulli_distribution coin;
  for (int t = 0; t < 200; ++t) {
    std::vector<int> s(a.bits());
    for (auto& v : s) v = coin(rng) ? 1 : -1;
    EXPECT_TRUE(ecoc::soft_decode_equivalence_check(a, s));
  }
  // Equidistant from two rows.
  const auto b = CodewordMatrix::from_rows({{1, 1, 1, 1}, {-1, -1, 1, 1}});
  const std::vector<int> tie{1, -1, 1, 1};
  EXPECT_TRUE(ecoc::soft_decode_equivalence_check(b, tie));
  EXPECT_EQ(ecoc::hamming_decode(tie, b), 0u);
}

TEST(CodebookFile, RoundTripAndHeader) {
  const auto a = ecoc::generate_codebook(10, 32, ecoc::codebook_preset("32bit").params, 99);
  std::stringstream ss;
  ecoc::write_codebook(ss, a);
  std::string header;
  std::getline(std::stringstream(ss.str()), header);
  EXPECT_EQ(header, "10 32 16 2 1 99");
  EXPECT_EQ(ecoc::read_codebook(ss), a);
}

TEST(CodebookFile, MalformedInputs) {
  std::stringstream bad_header("10 16 8\n");
  EXPECT_THROW(ecoc::read_codebook(bad_header), ecoc::CodebookError);
  std::stringstream short_rows("2 2 0 0 0 1\n+1 -1\n");
  EXPECT_THROW(ecoc::read_codebook(short_rows), ecoc::CodebookError);
  std::stringstream bad_entry("2 2 0 0 0 1\n+1 0\n-1 +1\n");
  EXPECT_THROW(ecoc::read_codebook(bad_entry), ecoc::CodebookError);
}

TEST(CorrelationDuality, HoldsExactly) {
  const auto a = ecoc::generate_codebook(10, 64, ecoc::codebook_preset("64bit").params, 2);
  std::mt19937_64 rng(8);
  std::bernoulli_distribution coin;
  for (int t = 0; t < 500; ++t) {
    std::vector<int> s(a.bits());
    for (auto& v : s) v = coin(rng) ? 1 : -1;
    for (std::size_t m = 0; m < a.classes(); ++m) {
      long corr = 0;
      for (std::size_t j = 0; j < a.bits(); ++j) corr += a(m, j) * s[j];
      EXPECT_EQ(corr, 64 - 2 * static_cast<long>(ecoc::hamming_distance(std::span<const int>(s), a.row(m))));
    }
  }
}

}  // namespace
