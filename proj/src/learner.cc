#include "pedal/learner.h"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "pedal/error.h"

namespace pedal {

void Standardizer::update(std::span<const double> x) {
  ++count_;
  const double n = static_cast<double>(count_);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double delta = x[i] - mean_[i];
    mean_[i] += delta / n;
    m2_[i] += delta * (x[i] - mean_[i]);
  }
}

double Standardizer::variance(std::size_t i) const {
  return count_ == 0 ? 0.0 : m2_[i] / static_cast<double>(count_);
}

void Standardizer::standardize(std::span<const double> x, double variance_floor, std::span<double> out) const {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double var = variance(i);
    out[i] = var < variance_floor ? x[i] : (x[i] - mean_[i]) / std::sqrt(var);
  }
}

OnlineRegressor::OnlineRegressor(std::vector<std::string> feature_names, LearnerParams params)
    : names_(std::move(feature_names)),
      params_(params),
      weights_(names_.size() + 1, 0.0),
      grad_accum_(names_.size() + 1, 0.0),
      standardizer_(names_.size()) {
  if (!(params_.learning_rate > 0) || !(params_.epsilon > 0) || !(params_.clamp_min < params_.clamp_max))
    throw Error("invalid learner hyperparameters");
}

void OnlineRegressor::check_features(std::span<const double> features) const {
  if (features.size() != names_.size())
    throw LayoutError("feature vector has " + std::to_string(features.size()) + " values, model expects " +
                      std::to_string(names_.size()));
}

double OnlineRegressor::raw_score(std::span<const double> z) const {
  double s = weights_.back();
  for (std::size_t i = 0; i < z.size(); ++i) s += weights_[i] * z[i];
  return s;
}

double OnlineRegressor::predict(std::span<const double> features) const {
  check_features(features);
  double s = weights_.back();
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double var = standardizer_.variance(i);
    const double z = var < params_.variance_floor ? features[i]
                                                  : (features[i] - standardizer_.mean_[i]) / std::sqrt(var);
    s += weights_[i] * z;
  }
  return std::clamp(s, params_.clamp_min, params_.clamp_max);
}

double OnlineRegressor::train_step(std::span<const double> features, double target) {
  check_features(features);
  if (!std::isfinite(target) || target < 0) throw Error("training target must be finite and non-negative");
  for (double x : features)
    if (!std::isfinite(x)) throw Error("training features must be finite");

  const double blind = predict(features);

  standardizer_.update(features);
  std::vector<double> z(features.size());
  standardizer_.standardize(features, params_.variance_floor, z);
  const double err = raw_score(z) - target;

  const double lr = params_.learning_rate;
  for (std::size_t i = 0; i <= z.size(); ++i) {
    const double g = i < z.size() ? err * z[i] : err;
    grad_accum_[i] += g * g;
    weights_[i] -= lr * g / std::sqrt(grad_accum_[i] + params_.epsilon);
  }
  ++step_;
  log_.push_back({blind, target});
  return blind;
}

namespace {
constexpr const char* kSnapshotFormat = "pedal-snapshot";
constexpr int kSnapshotVersion = 1;
}  // namespace

std::string OnlineRegressor::snapshot() const {
  nlohmann::ordered_json j;
  j["format"] = kSnapshotFormat;
  j["version"] = kSnapshotVersion;
  j["layout"] = names_;
  j["hyperparams"] = {{"learning_rate", params_.learning_rate},
                      {"epsilon", params_.epsilon},
                      {"clamp_min", params_.clamp_min},
                      {"clamp_max", params_.clamp_max},
                      {"variance_floor", params_.variance_floor}};
  j["step"] = step_;
  j["weights"] = weights_;
  j["grad_accum"] = grad_accum_;
  j["standardizer"] = {{"count", standardizer_.count_}, {"mean", standardizer_.mean_}, {"m2", standardizer_.m2_}};
  return j.dump();
}

OnlineRegressor OnlineRegressor::restore(std::string_view blob, const std::vector<std::string>& expected_names) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(blob);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("snapshot is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != kSnapshotFormat) throw ParseError("not a pedal snapshot");
    if (j.at("version") != kSnapshotVersion)
      throw ParseError("unsupported snapshot version " + j.at("version").dump());
    auto names = j.at("layout").get<std::vector<std::string>>();
    if (names != expected_names)
      throw LayoutError("snapshot layout has " + std::to_string(names.size()) + " features, engine expects " +
                        std::to_string(expected_names.size()) + " (or names differ)");
    const auto& hp = j.at("hyperparams");
    LearnerParams p;
    p.learning_rate = hp.at("learning_rate").get<double>();
    p.epsilon = hp.at("epsilon").get<double>();
    p.clamp_min = hp.at("clamp_min").get<double>();
    p.clamp_max = hp.at("clamp_max").get<double>();
    p.variance_floor = hp.at("variance_floor").get<double>();

    OnlineRegressor m(std::move(names), p);
    m.step_ = j.at("step").get<std::size_t>();
    m.weights_ = j.at("weights").get<std::vector<double>>();
    m.grad_accum_ = j.at("grad_accum").get<std::vector<double>>();
    const auto& st = j.at("standardizer");
    m.standardizer_.count_ = st.at("count").get<std::size_t>();
    m.standardizer_.mean_ = st.at("mean").get<std::vector<double>>();
    m.standardizer_.m2_ = st.at("m2").get<std::vector<double>>();
    const std::size_t d = m.names_.size();
    if (m.weights_.size() != d + 1 || m.grad_accum_.size() != d + 1 || m.standardizer_.mean_.size() != d ||
        m.standardizer_.m2_.size() != d)
      throw LayoutError("snapshot state vectors do not match its layout");
    if (m.standardizer_.count_ != m.step_) throw ParseError("snapshot standardizer count differs from step");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed snapshot: ") + e.what());
  }
}

PreparedModel::PreparedModel(const OnlineRegressor& model) : model_(&model), scale_(model.dim(), 0.0) {
  const auto& st = model.standardizer();
  for (std::size_t i = 0; i < scale_.size(); ++i) {
    const double var = st.variance(i);
    if (!(var < model.params().variance_floor)) scale_[i] = std::sqrt(var);
  }
}

double PreparedModel::operator()(std::span<const double> features) const {
  if (features.size() != scale_.size()) throw LayoutError("feature vector length differs from model");
  const auto& w = model_->weights();
  const auto& mean = model_->standardizer().mean();
  double s = w.back();
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double z = scale_[i] == 0.0 ? features[i] : (features[i] - mean[i]) / scale_[i];
    s += w[i] * z;
  }
  return std::clamp(s, model_->params().clamp_min, model_->params().clamp_max);
}

EvalStats prequential_stats(std::span<const PrequentialEntry> log) {
  if (log.empty()) throw Error("prequential log is empty");
  std::vector<double> pred, target;
  pred.reserve(log.size());
  target.reserve(log.size());
  for (const auto& e : log) {
    pred.push_back(e.blind_prediction);
    target.push_back(e.realized_target);
  }
  return metrics::eval_stats(pred, target);
}

}  // namespace pedal
