#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pedal/metrics.h"

namespace pedal {

struct LearnerParams {
  double learning_rate = 0.1;
  double epsilon = 1e-8;
  double clamp_min = 0.0;
  double clamp_max = 2.0;
  // Features whose running variance is below this are used unscaled.
  double variance_floor = 1e-12;
};

/// Welford running mean and population variance per feature.
class Standardizer {
 public:
  explicit Standardizer(std::size_t dim = 0) : mean_(dim, 0.0), m2_(dim, 0.0) {}

  void update(std::span<const double> x);
  double variance(std::size_t i) const;
  void standardize(std::span<const double> x, double variance_floor, std::span<double> out) const;

  std::size_t count() const { return count_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& m2() const { return m2_; }

 private:
  friend class OnlineRegressor;
  std::size_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

struct PrequentialEntry {
  double blind_prediction = 0.0;
  double realized_target = 0.0;
};

/// Referenceless TER estimator: linear model over standardized features,
/// trained on squared loss with per-coordinate AdaGrad steps. The weight
/// vector holds one weight per feature followed by the bias.
class OnlineRegressor {
 public:
  OnlineRegressor(std::vector<std::string> feature_names, LearnerParams params = {});

  /// Clamped estimate of TER for one feature vector.
  double predict(std::span<const double> features) const;

  /// Prequential update: returns the prediction made before the model sees
  /// this sample, then learns from it. Rejects non-finite input or a negative
  /// target without changing state.
  double train_step(std::span<const double> features, double target);

  std::size_t step() const { return step_; }
  std::size_t dim() const { return names_.size(); }
  const std::vector<std::string>& feature_names() const { return names_; }
  const LearnerParams& params() const { return params_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& grad_accum() const { return grad_accum_; }
  const Standardizer& standardizer() const { return standardizer_; }
  const std::vector<PrequentialEntry>& prequential_log() const { return log_; }

  /// Versioned JSON with layout, hyperparameters and full state. Doubles are
  /// written in shortest round-trip form so restore is exact. The
  /// prequential log is not part of the snapshot.
  std::string snapshot() const;
  /// Throws LayoutError when the blob's feature names differ from expected.
  static OnlineRegressor restore(std::string_view blob, const std::vector<std::string>& expected_names);

 private:
  double raw_score(std::span<const double> z) const;
  void check_features(std::span<const double> features) const;

  std::vector<std::string> names_;
  LearnerParams params_;
  std::vector<double> weights_;
  std::vector<double> grad_accum_;
  Standardizer standardizer_;
  std::size_t step_ = 0;
  std::vector<PrequentialEntry> log_;
};

/// Frozen view of a model's weights and scaling for scoring many vectors;
/// gives results bitwise equal to OnlineRegressor::predict.
class PreparedModel {
 public:
  explicit PreparedModel(const OnlineRegressor& model);
  double operator()(std::span<const double> features) const;

 private:
  const OnlineRegressor* model_;
  std::vector<double> scale_;  // 0 marks an unscaled feature
};

/// Regression and ranking statistics of blind predictions against targets.
EvalStats prequential_stats(std::span<const PrequentialEntry> log);

}  // namespace pedal
