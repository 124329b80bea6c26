#include "pedal/synthetic.h"

#include <algorithm>
#include <random>

#include "pedal/error.h"

namespace pedal {

namespace {

// std distributions differ between standard libraries; these do not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>((static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }
  std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }

 private:
  std::mt19937_64 engine_;
};

std::string pseudo_word(Rng& rng) {
  static const std::string consonants = "bcdfghjklmnprstvz";
  static const std::string vowels = "aeiou";
  const std::size_t syllables = rng.between(1, 4);
  std::string w;
  for (std::size_t i = 0; i < syllables; ++i) {
    w.push_back(consonants[rng.below(consonants.size())]);
    w.push_back(vowels[rng.below(vowels.size())]);
  }
  if (rng.uniform() < 0.3) w.push_back(consonants[rng.below(consonants.size())]);
  return w;
}

std::vector<std::string> make_vocabulary(Rng& rng, std::size_t n) {
  std::vector<std::string> words;
  while (words.size() < n) {
    auto w = pseudo_word(rng);
    if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(std::move(w));
  }
  return words;
}

std::string sentence(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    std::string w = words[i];
    if (i == 0 && !w.empty()) w[0] = static_cast<char>(w[0] - 'a' + 'A');
    out += w;
  }
  out.push_back('.');
  return out;
}

std::vector<std::string> corrupt(Rng& rng, const std::vector<std::string>& ref, double rate,
                                 const std::vector<std::string>& target_vocab) {
  std::vector<std::string> hyp;
  for (const auto& w : ref) {
    const double r = rng.uniform();
    if (r < rate * 0.45) {
      hyp.push_back(target_vocab[rng.below(target_vocab.size())]);
    } else if (r < rate * 0.75) {
      continue;
    } else if (r < rate * 0.9) {
      hyp.push_back(w);
      hyp.push_back(target_vocab[rng.below(target_vocab.size())]);
    } else {
      hyp.push_back(w);
    }
  }
  if (hyp.size() >= 4 && rng.uniform() < rate * 0.5) {
    const std::size_t len = rng.between(1, 3);
    const std::size_t start = rng.below(hyp.size() - len + 1);
    std::vector<std::string> block(hyp.begin() + start, hyp.begin() + start + len);
    hyp.erase(hyp.begin() + start, hyp.begin() + start + len);
    const std::size_t dest = rng.below(hyp.size() + 1);
    hyp.insert(hyp.begin() + dest, block.begin(), block.end());
  }
  if (hyp.empty()) hyp.push_back(target_vocab[rng.below(target_vocab.size())]);
  return hyp;
}

}  // namespace

nlohmann::ordered_json SyntheticParams::to_json() const {
  return {{"segments", segments},
          {"seed", seed},
          {"vocabulary", vocabulary},
          {"min_words", min_words},
          {"max_words", max_words},
          {"base_error", base_error},
          {"length_weight", length_weight},
          {"noise_weight", noise_weight},
          {"hypotheses_per_segment", hypotheses_per_segment},
          {"lang_pair", lang_pair}};
}

SyntheticParams SyntheticParams::from_json(const nlohmann::json& j) {
  SyntheticParams p;
  p.segments = j.value("segments", p.segments);
  p.seed = j.value("seed", p.seed);
  p.vocabulary = j.value("vocabulary", p.vocabulary);
  p.min_words = j.value("min_words", p.min_words);
  p.max_words = j.value("max_words", p.max_words);
  p.base_error = j.value("base_error", p.base_error);
  p.length_weight = j.value("length_weight", p.length_weight);
  p.noise_weight = j.value("noise_weight", p.noise_weight);
  p.hypotheses_per_segment = j.value("hypotheses_per_segment", p.hypotheses_per_segment);
  p.lang_pair = j.value("lang_pair", p.lang_pair);
  return p;
}

Corpus make_synthetic_corpus(const SyntheticParams& p) {
  if (p.segments == 0 || p.vocabulary < 2 || p.min_words == 0 || p.max_words < p.min_words ||
      p.hypotheses_per_segment == 0)
    throw Error("invalid synthetic corpus parameters");
  const LangPair langs = LangPair::parse(p.lang_pair);
  Rng rng(p.seed);
  const auto source_vocab = make_vocabulary(rng, p.vocabulary);
  const auto target_vocab = make_vocabulary(rng, p.vocabulary);

  std::vector<Segment> segments;
  segments.reserve(p.segments);
  for (std::size_t i = 0; i < p.segments; ++i) {
    const std::size_t n = rng.between(p.min_words, p.max_words);
    std::vector<std::string> src, ref;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t w = rng.below(source_vocab.size());
      src.push_back(source_vocab[w]);
      ref.push_back(target_vocab[w]);
    }
    const double length = p.max_words == p.min_words
                              ? 0.0
                              : static_cast<double>(n - p.min_words) / static_cast<double>(p.max_words - p.min_words);

    Segment seg;
    seg.id = i;
    seg.source_text = sentence(src);
    seg.source_lang = langs.source;
    seg.target_lang = langs.target;
    seg.reference = sentence(ref);
    for (std::size_t h = 0; h < p.hypotheses_per_segment; ++h) {
      const double rate =
          std::clamp(p.base_error + p.length_weight * length + p.noise_weight * rng.uniform(), 0.0, 1.0);
      seg.hypotheses.push_back({"synthetic-" + std::to_string(h), sentence(corrupt(rng, ref, rate, target_vocab))});
      seg.gold_post_edits.push_back(seg.reference);
    }
    segments.push_back(std::move(seg));
  }
  return Corpus(std::move(segments));
}

}  // namespace pedal
