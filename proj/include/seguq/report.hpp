#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seguq/classify.hpp"
#include "seguq/defaults.hpp"
#include "seguq/stochastic.hpp"
#include "seguq/uq_metrics.hpp"

namespace seguq::report {

using Json = nlohmann::ordered_json;

std::string_view tool_version();

// Serialises a report document. Identical documents give identical bytes.
std::string dump(const Json& doc);

// Logit model on disk: a JSON manifest
//   {"classes":C,"rank":R,"mu":"mu.vgf","diag":"diag.vgf","factors":[...]}
// whose f32 volumes stack the class channels along z as [nx, ny, nz*C],
// one block of nz slices per class. Paths are relative to the manifest.
std::filesystem::path write_logit_model(const std::filesystem::path& dir, const LogitModel& model);
LogitModel read_logit_model(const std::filesystem::path& manifest);

enum class Stage { Sample, Entropy, Eval, UqEval, Features, Classify };
std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

struct SubjectConfig {
  std::string id;
  std::filesystem::path logits;                // logit model manifest, or
  std::vector<std::filesystem::path> samples;  // precomputed probability maps
  std::filesystem::path gt;
  std::filesystem::path brain;
  std::filesystem::path ventricles;
  std::optional<int> fazekas_deep;
  std::optional<int> fazekas_pv;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t samples = defaults::kSamples;
  double threshold = defaults::kBinarizeThreshold;
  int connectivity = defaults::kConnectivity;

  double tau = 0.5 * 0.69314718055994530942;  // mid-range of [0, ln 2]
  std::size_t tau_steps = 50;
  std::size_t patch_size = defaults::kPatchSize;
  double patch_accuracy = defaults::kPatchAccuracy;
  PatchMode patch_mode = PatchMode::Tiling;

  std::array<double, 3> ring_edges_mm = defaults::kRingEdgesMm;
  double feature_threshold = defaults::kFeatureThreshold;

  std::string target = "deep";  // deep | pv | qc
  std::size_t k = defaults::kFazekasFeatures;
  std::size_t qc_k = defaults::kQcFeatures;
  double qc_dice_cutoff = defaults::kQcDiceCutoff;
  double reg = defaults::kRegularization;
  std::size_t n_boot = defaults::kBootstrapSplits;
  double train_fraction = defaults::kTrainFraction;

  std::vector<Stage> stages{Stage::Sample, Stage::Entropy, Stage::Eval,
                            Stage::UqEval, Stage::Features, Stage::Classify};
  std::filesystem::path output_dir = "seguq_out";
  std::vector<SubjectConfig> subjects;
  std::size_t threads = 0;  // 0: SEG_UQ_THREADS or hardware

  bool has_stage(Stage s) const;
  std::size_t effective_k() const { return target == "qc" ? qc_k : k; }
};

// Relative paths resolve against base_dir. Throws ConfigError.
RunConfig config_from_json(const std::string& text, const std::filesystem::path& base_dir = {});

// Every setting that influences results; feeding it back to config_from_json
// reproduces the run.
Json config_echo(const RunConfig& config);

// Names of the per-subject metrics, in report order.
const std::vector<std::string>& metric_names();

struct RunResult {
  int exit_code = 0;
  Json report;
  std::vector<std::filesystem::path> files;
};

// Stages run per subject in order sample, entropy, eval, uq-eval, features,
// then classify over the cohort. Failures are recorded against the subject
// and stage; the exit code is 1 when any stage failed.
RunResult run_pipeline(const RunConfig& config);

// Feature table for the cohort at threshold t (subjects that fail are skipped).
FeatureTable cohort_features(const RunConfig& config, double t);

struct SweepCell {
  double t = 0.0;
  std::size_t k = 0;
  EvalSummary summary;
};

std::vector<SweepCell> classifier_sweep(const RunConfig& config, const std::vector<double>& thresholds,
                                        const std::vector<std::size_t>& ks);

Json to_json(const EvalSummary& s);

struct LossCheckRow {
  std::string loss;
  std::size_t points = 0;
  double max_relative_error = 0.0;
  bool pass = false;
};

// Central finite differences against the analytic gradients at random points.
std::vector<LossCheckRow> loss_check(std::uint64_t seed, std::size_t points = 10, double tolerance = 1e-5);

}  // namespace seguq::report
