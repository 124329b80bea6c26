#include "pedal/features.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "pedal/error.h"
#include "pedal/metrics.h"
#include "pedal/text.h"

namespace pedal {

const std::array<std::string_view, SurfaceFeatures::kCount>& SurfaceFeatures::names() {
  static const std::array<std::string_view, kCount> kNames = {"token_count", "char_count",  "avg_word_len",
                                                              "punct_count", "digit_count", "upper_ratio"};
  return kNames;
}

std::array<double, SurfaceFeatures::kCount> SurfaceFeatures::values() const {
  return {token_count, char_count, avg_word_len, punct_count, digit_count, upper_ratio};
}

void EmbeddingTable::check(const std::vector<double>& v) const {
  if (v.size() != dim_)
    throw LayoutError("embedding has dimension " + std::to_string(v.size()) + ", expected " + std::to_string(dim_));
  for (double x : v)
    if (!std::isfinite(x)) throw Error("embedding contains a non-finite value");
}

void EmbeddingTable::set_source(SegmentId id, std::vector<double> v) {
  check(v);
  source_[id] = std::move(v);
}

void EmbeddingTable::set_target(SegmentId id, std::optional<std::size_t> hypothesis, std::vector<double> v) {
  check(v);
  target_[{id, hypothesis}] = std::move(v);
}

const std::vector<double>* EmbeddingTable::source(SegmentId id) const {
  const auto it = source_.find(id);
  return it == source_.end() ? nullptr : &it->second;
}

const std::vector<double>* EmbeddingTable::target(SegmentId id, std::size_t hypothesis) const {
  if (auto it = target_.find({id, hypothesis}); it != target_.end()) return &it->second;
  if (auto it = target_.find({id, std::nullopt}); it != target_.end()) return &it->second;
  return nullptr;
}

std::optional<std::string> EmbeddingTable::first_missing(const Corpus& corpus) const {
  for (const auto& seg : corpus.segments()) {
    if (!source(seg.id)) return "segment " + std::to_string(seg.id) + " source";
    for (std::size_t h = 0; h < seg.hypotheses.size(); ++h)
      if (!target(seg.id, h)) return "segment " + std::to_string(seg.id) + " target:" + std::to_string(h);
  }
  return std::nullopt;
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embedding file " + path.string());
  std::optional<EmbeddingTable> table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string id_str, side;
    if (!(ss >> id_str)) continue;
    if (!(ss >> side)) throw ParseError("missing side", line_no);
    std::vector<double> v;
    std::string tok;
    while (ss >> tok) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError("bad number '" + tok + "'", line_no);
      }
    }
    if (v.empty()) throw ParseError("embedding has no values", line_no);
    if (!table) table.emplace(v.size());
    SegmentId id = 0;
    try {
      id = std::stoull(id_str);
    } catch (const std::exception&) {
      throw ParseError("bad segment id '" + id_str + "'", line_no);
    }
    try {
      if (side == "source") {
        table->set_source(id, std::move(v));
      } else if (side == "target") {
        table->set_target(id, std::nullopt, std::move(v));
      } else if (side.rfind("target:", 0) == 0) {
        table->set_target(id, std::stoull(side.substr(7)), std::move(v));
      } else {
        throw ParseError("side must be source, target or target:<k>, got '" + side + "'", line_no);
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  if (!table) throw ParseError("embedding file is empty");
  return std::move(*table);
}

FeatureLayout::FeatureLayout(std::vector<std::string> target_langs, std::optional<std::size_t> embedding_dim)
    : target_langs_(std::move(target_langs)), embedding_dim_(embedding_dim) {
  std::sort(target_langs_.begin(), target_langs_.end());
  target_langs_.erase(std::unique(target_langs_.begin(), target_langs_.end()), target_langs_.end());
  if (target_langs_.empty()) throw Error("feature layout needs at least one target language");
  if (embedding_dim_ && *embedding_dim_ == 0) throw Error("embedding dimension must be positive");

  for (auto side : {"src.", "tgt.", "diff."})
    for (auto n : SurfaceFeatures::names()) names_.push_back(side + std::string(n));
  names_.push_back("ratio.tokens");
  names_.push_back("ratio.chars");
  for (int order = 1; order <= 3; ++order) names_.push_back("overlap.char" + std::to_string(order));
  lang_offset_ = names_.size();
  for (const auto& lang : target_langs_) names_.push_back("lang." + lang);
  if (embedding_dim_) {
    for (auto block : {"emb.src.", "emb.tgt.", "emb.diff.", "emb.prod."})
      for (std::size_t i = 0; i < *embedding_dim_; ++i) names_.push_back(block + std::to_string(i));
    names_.push_back("emb.cosine");
  }
}

std::size_t FeatureLayout::lang_slot(std::string_view lang) const {
  const auto it = std::lower_bound(target_langs_.begin(), target_langs_.end(), lang);
  if (it == target_langs_.end() || *it != lang)
    throw LayoutError("target language '" + std::string(lang) + "' is not part of the feature layout");
  return lang_offset_ + static_cast<std::size_t>(it - target_langs_.begin());
}

namespace features {

SurfaceFeatures surface_features(std::string_view text) {
  SurfaceFeatures f;
  const auto chars = text::decode_utf8(text);
  f.char_count = static_cast<double>(chars.size());
  double upper = 0;
  for (char32_t c : chars) {
    if (text::is_digit(c)) f.digit_count += 1;
    if (text::is_upper(c)) upper += 1;
  }
  if (!chars.empty()) f.upper_ratio = upper / f.char_count;

  const auto tokens = metrics::tokenize(text);
  f.token_count = static_cast<double>(tokens.size());
  double word_chars = 0, words = 0;
  for (const auto& t : tokens) {
    const auto cps = text::decode_utf8(t);
    if (cps.size() == 1 && text::is_punct(cps[0])) {
      f.punct_count += 1;
    } else {
      word_chars += static_cast<double>(cps.size());
      words += 1;
    }
  }
  if (words > 0) f.avg_word_len = word_chars / words;
  return f;
}

double ngram_overlap(std::string_view source, std::string_view target, std::size_t order) {
  auto grams = [order](std::string_view s) {
    std::u32string cps = text::decode_utf8(s);
    for (auto& c : cps) c = text::to_lower(c);
    std::set<std::u32string> out;
    for (std::size_t i = 0; i + order <= cps.size(); ++i) out.insert(cps.substr(i, order));
    return out;
  };
  const auto a = grams(source);
  const auto b = grams(target);
  if (a.empty() || b.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& g : a) common += b.count(g);
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

std::array<double, 3> ngram_overlap(std::string_view source, std::string_view target) {
  return {ngram_overlap(source, target, 1), ngram_overlap(source, target, 2), ngram_overlap(source, target, 3)};
}

Combination combine(std::span<const double> src, std::span<const double> tgt) {
  if (src.size() != tgt.size())
    throw LayoutError("cannot combine vectors of dimension " + std::to_string(src.size()) + " and " +
                      std::to_string(tgt.size()));
  Combination c;
  c.diff.resize(src.size());
  c.product.resize(src.size());
  double dot = 0, ns = 0, nt = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    c.diff[i] = src[i] - tgt[i];
    c.product[i] = src[i] * tgt[i];
    dot += c.product[i];
    ns += src[i] * src[i];
    nt += tgt[i] * tgt[i];
  }
  if (ns == 0.0 || nt == 0.0) {
    c.cosine_distance = 1.0;
  } else {
    c.cosine_distance = std::clamp(1.0 - dot / std::sqrt(ns * nt), 0.0, 2.0);
  }
  return c;
}

FeatureVector featurize(const Segment& segment, std::size_t hypothesis, const FeatureLayout& layout,
                        const EmbeddingTable* embeddings) {
  if (hypothesis >= segment.hypotheses.size())
    throw Error("segment " + std::to_string(segment.id) + " has no hypothesis " + std::to_string(hypothesis));
  const std::string& source = segment.source_text;
  const std::string& target = segment.hypotheses[hypothesis].text;

  FeatureVector v;
  v.reserve(layout.size());
  const auto src = surface_features(source).values();
  const auto tgt = surface_features(target).values();
  v.insert(v.end(), src.begin(), src.end());
  v.insert(v.end(), tgt.begin(), tgt.end());
  for (std::size_t i = 0; i < src.size(); ++i) v.push_back(src[i] - tgt[i]);
  v.push_back((tgt[0] + 1.0) / (src[0] + 1.0));
  v.push_back((tgt[1] + 1.0) / (src[1] + 1.0));
  const auto overlap = ngram_overlap(source, target);
  v.insert(v.end(), overlap.begin(), overlap.end());

  const std::size_t one_hot = layout.lang_slot(segment.target_lang);
  for (std::size_t i = 0; i < layout.target_langs().size(); ++i)
    v.push_back(layout.lang_offset() + i == one_hot ? 1.0 : 0.0);

  if (layout.has_embeddings()) {
    if (!embeddings) throw LayoutError("layout has embedding slots but no embedding table was given");
    if (embeddings->dim() != *layout.embedding_dim()) throw LayoutError("embedding dimension differs from layout");
    const auto* es = embeddings->source(segment.id);
    const auto* et = embeddings->target(segment.id, hypothesis);
    if (!es || !et)
      throw LayoutError("missing embedding for segment " + std::to_string(segment.id) +
                        (es ? " target" : " source"));
    const auto c = combine(*es, *et);
    v.insert(v.end(), es->begin(), es->end());
    v.insert(v.end(), et->begin(), et->end());
    v.insert(v.end(), c.diff.begin(), c.diff.end());
    v.insert(v.end(), c.product.begin(), c.product.end());
    v.push_back(c.cosine_distance);
  }
  return v;
}

}  // namespace features
}  // namespace pedal
