#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "pedal/corpus.h"
#include "pedal/features.h"
#include "pedal/learner.h"

namespace fixture {

struct Row {
  std::string source;
  std::vector<std::string> hypotheses;
  std::string reference;
};

inline pedal::Corpus corpus(const std::vector<Row>& rows) {
  std::vector<pedal::Segment> segs;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    pedal::Segment s;
    s.id = i;
    s.source_text = rows[i].source;
    s.source_lang = "de";
    s.target_lang = "en";
    for (const auto& h : rows[i].hypotheses) {
      s.hypotheses.push_back({"mt", h});
      s.gold_post_edits.push_back(rows[i].reference);
    }
    s.reference = rows[i].reference;
    segs.push_back(std::move(s));
  }
  return pedal::Corpus(std::move(segs));
}

/// "w w w ..." with n tokens.
inline std::string words(std::size_t n, const std::string& w = "w") {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out += (i ? " " : "") + w;
  return out;
}

/// A model with the given weights by feature name and bias whose standardizer
/// has zero variance, so features pass through unscaled. `step` sets how many
/// updates it claims to have seen.
inline pedal::OnlineRegressor linear_model(const std::vector<std::string>& names,
                                           const std::vector<std::pair<std::string, double>>& weights, double bias,
                                           std::size_t step = 0) {
  auto j = nlohmann::json::parse(pedal::OnlineRegressor(names).snapshot());
  j["step"] = step;
  j["standardizer"]["count"] = step;
  auto& w = j["weights"];
  for (const auto& [name, value] : weights) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw std::runtime_error("no feature " + name);
    w[static_cast<std::size_t>(it - names.begin())] = value;
  }
  w[names.size()] = bias;
  return pedal::OnlineRegressor::restore(j.dump(), names);
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("pedal-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixture
