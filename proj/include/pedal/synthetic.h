#pragma once

#include <cstddef>
#include <cstdint>

#include <json.hpp>

#include "pedal/corpus.h"

namespace pedal {

/// Seeded corpus with a planted relation between visible surface features and
/// the true TER of each hypothesis.
///
/// Source sentences are random pseudo-words; the reference maps every word
/// through a fixed pseudo-dictionary. Each hypothesis is the reference with
/// word errors applied at rate
///   base_error + length_weight * L + noise_weight * u,
/// where L in [0, 1] is the normalized source length and u is uniform noise
/// the estimator cannot see. Errors are substitutions, deletions, insertions
/// and occasional block moves, so long sources and short hypotheses signal
/// high TER. The gold post-edit equals the reference.
struct SyntheticParams {
  std::size_t segments = 2000;
  std::uint64_t seed = 1;
  std::size_t vocabulary = 400;
  std::size_t min_words = 4;
  std::size_t max_words = 30;
  double base_error = 0.05;
  double length_weight = 0.5;
  double noise_weight = 0.2;
  std::size_t hypotheses_per_segment = 1;
  std::string lang_pair = "xx-yy";

  nlohmann::ordered_json to_json() const;
  static SyntheticParams from_json(const nlohmann::json& j);
};

Corpus make_synthetic_corpus(const SyntheticParams& params);

}  // namespace pedal
