#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seguq/defaults.hpp"
#include "seguq/ring_features.hpp"

namespace seguq {

// Softmax regression over named features. weights is features x classes,
// row-major; column j belongs to classes[j].
struct ClassifierModel {
  std::vector<std::string> feature_names;
  std::vector<int> classes;
  std::vector<double> weights;
  std::vector<double> bias;

  std::size_t num_features() const noexcept { return feature_names.size(); }
  std::size_t num_classes() const noexcept { return classes.size(); }
  double weight(std::size_t feature, std::size_t cls) const noexcept {
    return weights[feature * classes.size() + cls];
  }
};

struct FitOptions {
  double reg = defaults::kRegularization;  // reg * ||W||^2, bias excluded
  bool class_balance = true;               // weight class c by n_max / n_c
  double tolerance = 1e-6;                 // gradient-norm stopping point
  std::size_t max_iterations = 10000;
};

struct FitReport {
  double objective = 0.0;
  double gradient_norm = 0.0;
  std::size_t iterations = 0;
};

// Training data as a dense design matrix.
struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
};

Dataset dataset(const FeatureTable& table, const std::string& target);

// Class-weighted cross entropy plus the L2 penalty at the given parameters.
double objective(const ClassifierModel& model, const Dataset& data, const FitOptions& options);

// Minimises the objective from a zero start (or `start` when given). Throws
// DegenerateLabels when fewer than two classes are present.
ClassifierModel fit(const Dataset& data, const FitOptions& options = {}, FitReport* report = nullptr,
                    const ClassifierModel* start = nullptr);
ClassifierModel fit(const FeatureTable& table, const std::string& target, const FitOptions& options = {});

struct RfeResult {
  std::vector<std::string> selected;    // in table column order
  std::vector<std::string> eliminated;  // in removal order
  ClassifierModel model;                // refit on the selected features
};

// Drops the feature with the smallest L2 weight-row norm (ties: the
// lexicographically last name) one at a time until k remain.
RfeResult rfe(const Dataset& data, std::size_t k, const FitOptions& options = {});
RfeResult rfe(const FeatureTable& table, const std::string& target, std::size_t k,
              const FitOptions& options = {});

// Row in the model's feature order.
std::vector<double> predict_proba(const ClassifierModel& model, std::span<const double> row);
// Looks features up by name; throws MissingFeature.
std::vector<double> predict_proba(const ClassifierModel& model, const FeatureVector& row);
int predict(const ClassifierModel& model, std::span<const double> row);

struct EvalMetrics {
  std::optional<double> kappa;
  std::optional<double> balanced_accuracy;
  std::optional<double> auroc;
  std::optional<double> root_brier;
};

// probs[n][j] is the probability of classes[j]; every label must be in classes.
EvalMetrics eval_metrics(const std::vector<std::vector<double>>& probs, const std::vector<int>& labels,
                         const std::vector<int>& classes);

// Mann-Whitney AUC with ties counted as one half; nullopt without both groups.
std::optional<double> binary_auc(std::span<const double> scores, std::span<const int> positive);

struct Interval {
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// Mean of the draws with the central `level` percentile interval.
Interval percentile_interval(const std::vector<double>& draws, double level = defaults::kConfidenceLevel);

struct PipelineConfig {
  std::size_t k = defaults::kFazekasFeatures;
  FitOptions fit;
  double train_fraction = defaults::kTrainFraction;
  std::size_t n_boot = defaults::kBootstrapSplits;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Per class: shuffle, send round(fraction * n_c) to train, keeping at least one
// in each side when n_c >= 2.
Split stratified_split(const std::vector<int>& labels, double train_fraction, std::uint64_t seed);

struct SplitOutcome {
  EvalMetrics metrics;
  std::vector<std::string> selected;
  std::vector<int> classes;
  std::vector<int> test_labels;
  std::vector<int> test_predictions;
};

// Normalization fit on train, RFE to k features, final fit, test evaluation.
SplitOutcome run_split(const FeatureTable& table, const std::string& target, const Split& split,
                       const PipelineConfig& config);

struct EvalSummary {
  std::optional<Interval> kappa;
  std::optional<Interval> balanced_accuracy;
  std::optional<Interval> auroc;
  std::optional<Interval> root_brier;
  std::size_t resamples = 0;
  SplitOutcome first_split;  // designated split for the confusion matrix
};

// Repeats run_split over n_boot seeded stratified splits. Resample i uses
// derive_seed(seed, {i, attempt}); degenerate splits are redrawn up to 10 times.
EvalSummary bootstrap_eval(const FeatureTable& table, const std::string& target,
                           const PipelineConfig& config);

// rows = true class, cols = predicted class, both in `classes` order.
std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<int>& labels,
                                                       const std::vector<int>& predictions,
                                                       const std::vector<int>& classes);

// 1 (poor quality) when dice <= cutoff.
std::vector<int> qc_labels(std::span<const double> dice_scores, double cutoff = defaults::kQcDiceCutoff);

}  // namespace seguq
