#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecoc {

class CodebookError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Row separation and column diversity thresholds.
struct CodebookParams {
  std::size_t min_row_distance = 0;         // theta_minham
  std::size_t min_column_distance = 0;      // theta_div
  std::size_t min_complement_distance = 0;  // theta_cdiv

  friend bool operator==(const CodebookParams&, const CodebookParams&) = default;
};

/// Number of positions where two +1/-1 vectors differ.
template <typename A, typename B>
std::size_t hamming_distance(std::span<const A> a, std::span<const B> b) {
  if (a.size() != b.size()) {
    throw CodebookError("hamming_distance: length mismatch " + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()));
  }
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool a_ok = a[i] == A(1) || a[i] == A(-1);
    const bool b_ok = b[i] == B(1) || b[i] == B(-1);
    if (!a_ok || !b_ok) throw CodebookError("hamming_distance: entries must be +1 or -1");
    d += (a[i] > A(0)) != (b[i] > B(0));
  }
  return d;
}

template <typename A, typename B>
std::size_t hamming_distance(const std::vector<A>& a, const std::vector<B>& b) {
  return hamming_distance(std::span<const A>(a), std::span<const B>(b));
}

/// M x N matrix of +1/-1 codewords; row m is the codeword of class m and
/// column j the class split learned by binary classifier j.
class CodewordMatrix {
 public:
  using Entry = std::int8_t;

  CodewordMatrix() = default;

  CodewordMatrix(std::size_t classes, std::size_t bits, std::vector<Entry> entries,
                 CodebookParams params = {}, std::uint64_t seed = 0)
      : classes_(classes), bits_(bits), entries_(std::move(entries)), params_(params),
        seed_(seed) {
    if (classes_ < 2) throw CodebookError("codeword matrix needs at least 2 classes");
    if (bits_ < 1) throw CodebookError("codeword matrix needs at least 1 bit");
    if (entries_.size() != classes_ * bits_) {
      throw CodebookError("codeword matrix: " + std::to_string(entries_.size()) +
                          " entries for " + std::to_string(classes_) + "x" +
                          std::to_string(bits_));
    }
    for (Entry e : entries_) {
      if (e != 1 && e != -1) throw CodebookError("codeword matrix entries must be +1 or -1");
    }
  }

  static CodewordMatrix from_rows(const std::vector<std::vector<int>>& rows,
                                  CodebookParams params = {}, std::uint64_t seed = 0) {
    if (rows.empty()) throw CodebookError("codeword matrix: no rows");
    std::vector<Entry> entries;
    for (const auto& r : rows) {
      if (r.size() != rows.front().size()) throw CodebookError("codeword matrix: ragged rows");
      for (int v : r) entries.push_back(static_cast<Entry>(v));
    }
    return CodewordMatrix(rows.size(), rows.front().size(), std::move(entries), params, seed);
  }

  std::size_t classes() const noexcept { return classes_; }
  std::size_t bits() const noexcept { return bits_; }
  const CodebookParams& params() const noexcept { return params_; }
  std::uint64_t seed() const noexcept { return seed_; }

  int operator()(std::size_t m, std::size_t j) const { return entries_[m * bits_ + j]; }

  std::span<const Entry> row(std::size_t m) const {
    return {entries_.data() + m * bits_, bits_};
  }

  std::vector<Entry> column(std::size_t j) const {
    std::vector<Entry> c(classes_);
    for (std::size_t m = 0; m < classes_; ++m) c[m] = entries_[m * bits_ + j];
    return c;
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }

  friend bool operator==(const CodewordMatrix&, const CodewordMatrix&) = default;

 private:
  std::size_t classes_ = 0;
  std::size_t bits_ = 0;
  std::vector<Entry> entries_;
  CodebookParams params_;
  std::uint64_t seed_ = 0;
};

/// Measured properties of a matrix. Minima over empty pair sets (a single
/// column) are reported as the column length.
struct CodebookReport {
  std::size_t min_row_distance = 0;
  std::size_t min_column_distance = 0;
  std::size_t min_complement_distance = 0;
  /// floor((min_row_distance - 1) / 2) wrong bits are always corrected.
  std::size_t correction_capacity = 0;
  /// floor((min_row_distance - 1) / 2) + 1 wrong bits may change the class.
  std::size_t fooling_threshold = 0;
  bool row_violation = false;
  bool column_violation = false;
  bool complement_violation = false;
  std::size_t violating_row_pairs = 0;
  std::size_t violating_column_pairs = 0;
  std::size_t violating_complement_pairs = 0;

  bool ok() const { return !row_violation && !column_violation && !complement_violation; }
  std::size_t violations() const {
    return violating_row_pairs + violating_column_pairs + violating_complement_pairs;
  }
};

namespace codebook_detail {

inline std::size_t differing(std::span<const CodewordMatrix::Entry> a,
                             std::span<const CodewordMatrix::Entry> b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

struct ColumnStats {
  std::size_t min_column, min_complement, column_violations, complement_violations;
};

inline ColumnStats column_stats(std::size_t classes, std::size_t bits,
                                const std::vector<CodewordMatrix::Entry>& entries,
                                const CodebookParams& params) {
  ColumnStats s{classes, classes, 0, 0};
  for (std::size_t i = 0; i < bits; ++i) {
    for (std::size_t j = i + 1; j < bits; ++j) {
      std::size_t d = 0;
      for (std::size_t m = 0; m < classes; ++m)
        d += entries[m * bits + i] != entries[m * bits + j];
      // d(complement(a_i), a_j) = classes - d(a_i, a_j), symmetric in i, j.
      const std::size_t dc = classes - d;
      s.min_column = std::min(s.min_column, d);
      s.min_complement = std::min(s.min_complement, dc);
      s.column_violations += d < params.min_column_distance;
      s.complement_violations += dc < params.min_complement_distance;
    }
  }
  return s;
}

}  // namespace codebook_detail

/// Exhaustive check of the row, column and complement-column constraints
/// against the matrix's recorded thresholds.
inline CodebookReport verify_codebook(const CodewordMatrix& a) {
  CodebookReport r;
  const CodebookParams& p = a.params();
  r.min_row_distance = a.bits();
  for (std::size_t i = 0; i < a.classes(); ++i) {
    for (std::size_t j = i + 1; j < a.classes(); ++j) {
      const std::size_t d = codebook_detail::differing(a.row(i), a.row(j));
      r.min_row_distance = std::min(r.min_row_distance, d);
      r.violating_row_pairs += d < p.min_row_distance;
    }
  }
  const auto cs = codebook_detail::column_stats(a.classes(), a.bits(), a.entries(), p);
  r.min_column_distance = cs.min_column;
  r.min_complement_distance = cs.min_complement;
  r.violating_column_pairs = cs.column_violations;
  r.violating_complement_pairs = cs.complement_violations;
  r.row_violation = r.violating_row_pairs > 0;
  r.column_violation = r.violating_column_pairs > 0;
  r.complement_violation = r.violating_complement_pairs > 0;
  r.correction_capacity = r.min_row_distance == 0 ? 0 : (r.min_row_distance - 1) / 2;
  r.fooling_threshold = r.correction_capacity + 1;
  return r;
}

/// Thrown when generation runs out of attempts; carries the matrix with the
/// fewest violations seen.
class CodebookGenerationError : public std::runtime_error {
 public:
  CodebookGenerationError(const std::string& what, std::optional<CodewordMatrix> best,
                          CodebookReport report)
      : std::runtime_error(what), best_(std::move(best)), report_(report) {}

  const std::optional<CodewordMatrix>& best() const noexcept { return best_; }
  const CodebookReport& report() const noexcept { return report_; }

 private:
  std::optional<CodewordMatrix> best_;
  CodebookReport report_;
};

inline constexpr std::size_t kDefaultMaxAttempts = 100'000;

/// Guided random generation: rows are drawn one at a time until each keeps
/// the minimum row distance to all earlier rows. While the column constraints
/// fail, a uniformly chosen row is replaced by a fresh row that keeps the row
/// constraint. `max_attempts` bounds both the total row draws and the number
/// of replacements.
inline CodewordMatrix generate_codebook(std::size_t classes, std::size_t bits,
                                        CodebookParams params, std::uint64_t seed,
                                        std::size_t max_attempts = kDefaultMaxAttempts) {
  using Entry = CodewordMatrix::Entry;
  if (classes < 2) throw CodebookError("generate_codebook: need at least 2 classes");
  if (bits < 1 || bits < params.min_row_distance) {
    throw CodebookError("generate_codebook: codeword length " + std::to_string(bits) +
                        " is below the minimum row distance " +
                        std::to_string(params.min_row_distance));
  }
  std::mt19937_64 rng(seed);
  std::vector<Entry> entries(classes * bits);

  auto draw_row = [&](std::size_t m) {
    for (std::size_t j = 0; j < bits; j += 64) {
      const std::uint64_t word = rng();
      for (std::size_t k = 0; k < 64 && j + k < bits; ++k)
        entries[m * bits + j + k] = ((word >> k) & 1U) ? Entry(1) : Entry(-1);
    }
  };
  auto row_ok = [&](std::size_t m, std::size_t count, std::size_t skip) {
    std::span<const Entry> r(entries.data() + m * bits, bits);
    for (std::size_t i = 0; i < count; ++i) {
      if (i == skip) continue;
      if (codebook_detail::differing(r, {entries.data() + i * bits, bits}) <
          params.min_row_distance)
        return false;
    }
    return true;
  };
  auto fail = [&](const std::string& why, std::optional<CodewordMatrix> best) -> CodewordMatrix {
    CodebookReport report = best ? verify_codebook(*best) : CodebookReport{};
    throw CodebookGenerationError(why, std::move(best), report);
  };

  // A partial sequence can leave no admissible row; after kRowStallLimit
  // rejected draws for one row the sequence restarts from the first row.
  constexpr std::size_t kRowStallLimit = 1000;
  std::size_t draws = 0;
  for (std::size_t m = 0, stalled = 0; m < classes;) {
    if (++draws > max_attempts) {
      return fail("generate_codebook: could not place row " + std::to_string(m) + " within " +
                      std::to_string(max_attempts) + " attempts",
                  std::nullopt);
    }
    draw_row(m);
    if (row_ok(m, m, classes)) {
      ++m;
      stalled = 0;
    } else if (++stalled == kRowStallLimit) {
      m = 0;
      stalled = 0;
    }
  }

  std::uniform_int_distribution<std::size_t> pick(0, classes - 1);
  std::vector<Entry> best_entries = entries;
  std::size_t best_violations = std::numeric_limits<std::size_t>::max();
  std::vector<Entry> saved(bits);
  for (std::size_t replacements = 0;; ++replacements) {
    const auto cs = codebook_detail::column_stats(classes, bits, entries, params);
    const std::size_t violations = cs.column_violations + cs.complement_violations;
    if (violations == 0) return CodewordMatrix(classes, bits, entries, params, seed);
    if (violations < best_violations) {
      best_violations = violations;
      best_entries = entries;
    }
    if (replacements >= max_attempts) break;
    const std::size_t m = pick(rng);
    std::copy_n(entries.begin() + m * bits, bits, saved.begin());
    std::size_t tries = 0;
    do {
      draw_row(m);
    } while (!row_ok(m, classes, m) && ++tries < kRowStallLimit);
    if (tries >= kRowStallLimit) std::copy(saved.begin(), saved.end(), entries.begin() + m * bits);
  }
  return fail("generate_codebook: column constraints still violated after " +
                  std::to_string(max_attempts) + " row replacements",
              CodewordMatrix(classes, bits, best_entries, params, seed));
}

/// Named parameter presets; the key is the codeword length.
struct CodebookPreset {
  std::string name;
  std::size_t bits;
  CodebookParams params;
};

inline const std::vector<CodebookPreset>& codebook_presets() {
  static const std::vector<CodebookPreset> presets{
      {"16bit", 16, {8, 3, 3}},
      {"32bit", 32, {16, 2, 1}},
      {"64bit", 64, {32, 1, 1}},
  };
  return presets;
}

inline const CodebookPreset& codebook_preset(const std::string& name) {
  for (const auto& p : codebook_presets())
    if (p.name == name) return p;
  throw CodebookError("unknown codebook preset '" + name + "' (expected 16bit, 32bit or 64bit)");
}

/// Nearest codeword by Hamming distance; ties go to the lowest class index.
template <typename B>
std::size_t hamming_decode(std::span<const B> predicted, const CodewordMatrix& a) {
  if (predicted.size() != a.bits()) {
    throw CodebookError("hamming_decode: " + std::to_string(predicted.size()) +
                        " bits for a codeword length of " + std::to_string(a.bits()));
  }
  std::size_t best = 0, best_d = std::numeric_limits<std::size_t>::max();
  for (std::size_t m = 0; m < a.classes(); ++m) {
    const std::size_t d = hamming_distance(predicted, a.row(m));
    if (d < best_d) {
      best_d = d;
      best = m;
    }
  }
  return best;
}

template <typename B>
std::size_t hamming_decode(const std::vector<B>& predicted, const CodewordMatrix& a) {
  return hamming_decode(std::span<const B>(predicted), a);
}

/// Checks that the correlation decoder argmax_m sum_j a_mj s_j agrees with
/// Hamming decoding on a +1/-1 vector, via sum_j a_mj s_j = N - 2 d(a_m, s).
template <typename B>
bool soft_decode_equivalence_check(const CodewordMatrix& a, std::span<const B> s) {
  if (s.size() != a.bits()) return false;
  std::size_t best = 0;
  long best_score = std::numeric_limits<long>::min();
  for (std::size_t m = 0; m < a.classes(); ++m) {
    long score = 0;
    for (std::size_t j = 0; j < a.bits(); ++j) score += a(m, j) * static_cast<long>(s[j]);
    const long dual =
        static_cast<long>(a.bits()) - 2 * static_cast<long>(hamming_distance(s, a.row(m)));
    if (score != dual) return false;
    if (score > best_score) {
      best_score = score;
      best = m;
    }
  }
  return best == hamming_decode(s, a);
}

template <typename B>
bool soft_decode_equivalence_check(const CodewordMatrix& a, const std::vector<B>& s) {
  return soft_decode_equivalence_check(a, std::span<const B>(s));
}

/// Text format: "M N theta_minham theta_div theta_cdiv seed" followed by M
/// lines of N space-separated +1/-1 values. Leading '#' lines are skipped.
inline void write_codebook(std::ostream& os, const CodewordMatrix& a) {
  const auto& p = a.params();
  os << a.classes() << ' ' << a.bits() << ' ' << p.min_row_distance << ' '
     << p.min_column_distance << ' ' << p.min_complement_distance << ' ' << a.seed() << '\n';
  for (std::size_t m = 0; m < a.classes(); ++m) {
    for (std::size_t j = 0; j < a.bits(); ++j) {
      if (j) os << ' ';
      os << (a(m, j) > 0 ? "+1" : "-1");
    }
    os << '\n';
  }
}

inline CodewordMatrix read_codebook(std::istream& is) {
  std::string header;
  do {
    if (!std::getline(is, header)) throw CodebookError("codebook file: missing header line");
  } while (!header.empty() && header.front() == '#');
  std::istringstream hs(header);
  std::size_t classes = 0, bits = 0;
  CodebookParams p;
  std::uint64_t seed = 0;
  if (!(hs >> classes >> bits >> p.min_row_distance >> p.min_column_distance >>
        p.min_complement_distance >> seed)) {
    throw CodebookError("codebook file: header must be 'M N theta_minham theta_div theta_cdiv seed'");
  }
  std::vector<CodewordMatrix::Entry> entries;
  entries.reserve(classes * bits);
  for (std::size_t m = 0; m < classes; ++m) {
    std::string line;
    if (!std::getline(is, line)) {
      throw CodebookError("codebook file: expected " + std::to_string(classes) + " rows, got " +
                          std::to_string(m));
    }
    std::istringstream ls(line);
    std::string tok;
    std::size_t count = 0;
    while (ls >> tok) {
      if (tok == "+1" || tok == "1") {
        entries.push_back(1);
      } else if (tok == "-1") {
        entries.push_back(-1);
      } else {
        throw CodebookError("codebook file: row " + std::to_string(m) + " has entry '" + tok +
                            "'");
      }
      ++count;
    }
    if (count != bits) {
      throw CodebookError("codebook file: row " + std::to_string(m) + " has " +
                          std::to_string(count) + " entries, expected " + std::to_string(bits));
    }
  }
  return CodewordMatrix(classes, bits, std::move(entries), p, seed);
}

inline void save_codebook(const std::filesystem::path& path, const CodewordMatrix& a,
                          const std::string& provenance = {}) {
  std::ofstream os(path);
  if (!os) throw CodebookError("cannot write codebook " + path.string());
  if (!provenance.empty()) os << "# " << provenance << '\n';
  write_codebook(os, a);
}

inline CodewordMatrix load_codebook(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw CodebookError("cannot open codebook " + path.string());
  return read_codebook(is);
}

}  // namespace ecoc
