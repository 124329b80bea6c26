#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pedal/corpus.h"

namespace pedal {

using FeatureVector = std::vector<double>;

struct SurfaceFeatures {
  double token_count = 0;
  double char_count = 0;      // code points, spaces included
  double avg_word_len = 0;    // over non-punctuation tokens
  double punct_count = 0;     // punctuation tokens
  double digit_count = 0;     // digit characters
  double upper_ratio = 0;     // uppercase characters / char_count

  static constexpr std::size_t kCount = 6;
  static const std::array<std::string_view, kCount>& names();
  std::array<double, kCount> values() const;
};

enum class EmbeddingSide { Source, Target };

/// Externally computed per-segment vectors (for instance sentence embeddings
/// from a neural quality-estimation model).
///
/// File format, one record per line:
///   <segment_id> <side> <v1> ... <vd>
/// where side is `source`, `target` (every hypothesis) or `target:<k>`
/// (hypothesis k only, overriding `target`).
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}
  static EmbeddingTable load(const std::filesystem::path& path);

  std::size_t dim() const { return dim_; }
  void set_source(SegmentId id, std::vector<double> v);
  /// hypothesis == nullopt sets the default for every hypothesis.
  void set_target(SegmentId id, std::optional<std::size_t> hypothesis, std::vector<double> v);

  const std::vector<double>* source(SegmentId id) const;
  const std::vector<double>* target(SegmentId id, std::size_t hypothesis) const;

  /// First (segment, side) of the corpus without a vector, if any.
  std::optional<std::string> first_missing(const Corpus& corpus) const;

 private:
  void check(const std::vector<double>& v) const;

  std::size_t dim_;
  std::map<SegmentId, std::vector<double>> source_;
  std::map<std::pair<SegmentId, std::optional<std::size_t>>, std::vector<double>> target_;
};

/// Named feature slots in a fixed order, frozen for a whole run.
class FeatureLayout {
 public:
  FeatureLayout(std::vector<std::string> target_langs, std::optional<std::size_t> embedding_dim = std::nullopt);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<std::string>& target_langs() const { return target_langs_; }
  std::optional<std::size_t> embedding_dim() const { return embedding_dim_; }
  bool has_embeddings() const { return embedding_dim_.has_value(); }

  std::size_t lang_offset() const { return lang_offset_; }
  std::size_t lang_slot(std::string_view lang) const;

  bool operator==(const FeatureLayout& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> target_langs_;
  std::optional<std::size_t> embedding_dim_;
  std::vector<std::string> names_;
  std::size_t lang_offset_ = 0;
};

struct Combination {
  std::vector<double> diff;
  std::vector<double> product;
  double cosine_distance = 1.0;
};

namespace features {

SurfaceFeatures surface_features(std::string_view text);

/// Jaccard similarity of the sets of lowercased character n-grams; 0 when
/// either side is shorter than the order.
double ngram_overlap(std::string_view source, std::string_view target, std::size_t order);
std::array<double, 3> ngram_overlap(std::string_view source, std::string_view target);

/// Elementwise difference, pointwise product and cosine distance
/// (1 - cos, defined as 1 when either vector is all zero).
Combination combine(std::span<const double> src, std::span<const double> tgt);

/// Throws LayoutError when the layout needs embeddings the table lacks.
FeatureVector featurize(const Segment& segment, std::size_t hypothesis, const FeatureLayout& layout,
                        const EmbeddingTable* embeddings = nullptr);

}  // namespace features
}  // namespace pedal
