#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pedal {

class Corpus;

using TokenSequence = std::vector<std::string>;

struct EditBreakdown {
  std::size_t insertions = 0;     // reference words missing from the hypothesis
  std::size_t deletions = 0;      // hypothesis words absent from the reference
  std::size_t substitutions = 0;
  std::size_t shifts = 0;

  std::size_t total() const { return insertions + deletions + substitutions + shifts; }
  bool operator==(const EditBreakdown&) const = default;
};

struct TerResult {
  std::size_t edits = 0;
  std::size_t ref_length = 0;
  double score = 0.0;
  EditBreakdown breakdown;
};

/// Regression and ranking statistics. Correlations are absent when n < 2 or
/// either side is constant.
struct EvalStats {
  std::size_t n = 0;
  double mae = 0.0;
  double mse = 0.0;
  std::optional<double> spearman_rho;
  std::optional<double> pearson_r;
  std::optional<double> kendall_tau;
};

namespace metrics {

inline constexpr std::size_t kMaxShiftLength = 10;

/// Lowercases, splits on whitespace and makes every punctuation character a
/// token of its own.
TokenSequence tokenize(std::string_view text);

/// Unit-cost Levenshtein distance over tokens.
std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b);
std::size_t edit_distance(std::span<const int> a, std::span<const int> b);

/// Translation Error Rate with greedy block shifts.
///
/// Each round tries every block of up to kMaxShiftLength hypothesis words that
/// also occurs contiguously in the reference, at every destination, and keeps
/// the move giving the lowest edit distance (ties: leftmost block start, then
/// shortest block, then leftmost destination). The move is applied if it
/// lowers the edit distance; each applied move costs one edit. Throws on an
/// empty reference.
TerResult ter(std::span<const std::string> hypothesis, std::span<const std::string> reference);
TerResult ter(std::span<const int> hypothesis, std::span<const int> reference);

/// TER of two raw strings using tokenize(). An empty reference scores 0 when
/// the hypothesis is empty too and 1 otherwise; this is the convention for
/// post-edits that delete everything.
double post_edit_ter(std::string_view hypothesis, std::string_view edited);

/// 100 * (1 - TER), clamped below at 0.
double segment_quality(std::string_view current_text, std::string_view reference);

/// Mean segment_quality over the corpus, using each segment's post-edit when
/// present and its designated hypothesis otherwise. Requires references.
double corpus_quality(const Corpus& corpus);

/// Summation helper shared with the engine's cached quality so both paths
/// agree bitwise.
double mean_quality(std::span<const double> per_segment);

EvalStats eval_stats(std::span<const double> predictions, std::span<const double> targets);

/// Fractional ranks (1-based, ties get the average rank).
std::vector<double> average_ranks(std::span<const double> xs);
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);
/// Tau-b in O(n log n).
std::optional<double> kendall_tau_b(std::span<const double> x, std::span<const double> y);

}  // namespace metrics
}  // namespace pedal
