// seguq command line: synthetic data, sampling, metrics, features, classifiers.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "seguq/classify.hpp"
#include "seguq/error.hpp"
#include "seguq/parallel.hpp"
#include "seguq/report.hpp"
#include "seguq/ring_features.hpp"
#include "seguq/seg_metrics.hpp"
#include "seguq/stochastic.hpp"
#include "seguq/synth.hpp"
#include "seguq/uq_metrics.hpp"
#include "seguq/vgf.hpp"

namespace fs = std::filesystem;
using namespace seguq;
using report::Json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IOError, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::IOError, "cannot write " + path);
  out << text;
}

std::string num(std::optional<double> v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

Json opt(std::optional<double> v) { return v ? Json(*v) : Json(nullptr); }

SampleSet load_sample_set(const std::vector<std::string>& paths) {
  if (paths.empty()) throw Error(ErrorCode::ConfigError, "no samples given");
  std::vector<ProbMap> members;
  for (const auto& p : paths) {
    auto m = vgf::read_scalar(p);
    check_probability(m);
    members.push_back(std::move(m));
  }
  return SampleSet(std::move(members), Provenance::External);
}

// Writes one synthetic case and returns its manifest.
Json write_case(const fs::path& dir, const synth::SynthSpec& spec, const synth::SynthCase& c) {
  fs::create_directories(dir);
  vgf::write_mask(dir / "brain.vgf", c.brain);
  vgf::write_mask(dir / "ventricles.vgf", c.ventricles);
  vgf::write_mask(dir / "lesions.vgf", c.lesions);
  report::write_logit_model(dir / "logits", c.logits);
  Json m;
  m["spec"] = Json::parse(synth::to_json(spec));
  m["fazekas"] = {{"deep", c.fazekas.deep}, {"pv", c.fazekas.pv}};
  m["files"] = {{"brain", "brain.vgf"},
                {"ventricles", "ventricles.vgf"},
                {"lesions", "lesions.vgf"},
                {"logits", "logits/logits.json"}};
  emit(report::dump(m), (dir / "manifest.json").string());
  return m;
}

int cmd_synth(const std::string& spec_path, const std::string& out, std::uint64_t seed, bool seed_set,
              std::size_t cohort, double noise, bool noise_set) {
  synth::SynthSpec spec = spec_path.empty() ? synth::SynthSpec{} : synth::spec_from_json(slurp(spec_path));
  if (seed_set) spec.seed = seed;
  if (noise_set) spec.noise = noise;
  spec.validate();
  const fs::path dir(out);
  if (cohort == 0) {
    write_case(dir, spec, synth::generate(spec));
    return 0;
  }
  synth::CohortSpec cs{spec, cohort, spec.seed};
  const auto subjects = synth::generate_cohort(cs);
  Json config;
  config["seed"] = spec.seed;
  config["output_dir"] = "results";
  config["subjects"] = Json::array();
  for (const auto& s : subjects) {
    write_case(dir / s.id, s.spec, s.data);
    config["subjects"].push_back({{"id", s.id},
                                  {"logits", s.id + "/logits/logits.json"},
                                  {"gt", s.id + "/lesions.vgf"},
                                  {"brain", s.id + "/brain.vgf"},
                                  {"ventricles", s.id + "/ventricles.vgf"},
                                  {"fazekas_deep", s.data.fazekas.deep},
                                  {"fazekas_pv", s.data.fazekas.pv}});
  }
  emit(report::dump(config), (dir / "config.json").string());
  return 0;
}

int cmd_sample(const std::string& logits, std::size_t n, std::uint64_t seed, const std::string& out) {
  const LogitModel model = report::read_logit_model(logits);
  const SampleSet set = sample_logits(model, n, seed);
  const fs::path dir(out);
  fs::create_directories(dir);
  Json list = Json::array();
  for (std::size_t i = 0; i < set.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%03zu.vgf", i);
    vgf::write_scalar(dir / name, set[i]);
    list.push_back(name);
  }
  vgf::write_scalar(dir / "mean.vgf", set.mean());
  emit(report::dump({{"seed", seed}, {"samples", list}, {"mean", "mean.vgf"}}), (dir / "samples.json").string());
  return 0;
}

int cmd_entropy(const std::vector<std::string>& samples, const std::string& out, const std::string& mean_out) {
  const SampleSet set = load_sample_set(samples);
  vgf::write_scalar(out, predictive_entropy(set));
  if (!mean_out.empty()) vgf::write_scalar(mean_out, set.mean());
  return 0;
}

int cmd_eval(const std::vector<std::string>& samples, const std::string& gt_path, double threshold, int conn_n,
             const std::string& out) {
  const SampleSet set = load_sample_set(samples);
  const Mask gt = vgf::read_mask(gt_path);
  const Mask pred = binarize(set.mean(), threshold);
  require_same_dims(pred, gt, "gt and prediction differ in shape");
  const Connectivity conn = connectivity_from_int(conn_n);
  Json j;
  auto guarded = [&](const char* key, auto&& fn) {
    try {
      j[key] = {{"value", fn()}, {"reason", nullptr}};
    } catch (const Error& e) {
      j[key] = {{"value", nullptr}, {"reason", std::string(to_string(e.code()))}};
    }
  };
  guarded("dice", [&] { return dice(pred, gt); });
  guarded("iou", [&] { return iou(pred, gt); });
  guarded("avd_percent", [&] { return avd_percent(pred, gt); });
  const auto f1 = component_f1(pred, gt, conn);
  guarded("f1", [&] { return f1.f1; });
  guarded("precision", [&] { return f1.precision; });
  guarded("recall", [&] { return f1.recall; });
  guarded("top_dice", [&] { return top_dice(set, gt, threshold); });
  guarded("ged", [&] {
    std::vector<Mask> preds;
    for (const auto& m : set.members()) preds.push_back(binarize(m, threshold));
    return ged(preds, std::vector<Mask>{gt});
  });
  emit(report::dump(j), out);
  return 0;
}

int cmd_uq_eval(const std::string& pred_path, const std::string& gt_path, const std::string& u_path,
                double threshold, std::size_t steps, std::size_t patch, double acc, bool sliding, int conn_n,
                const std::string& json_out, const std::string& csv_out) {
  const Mask pred = binarize(vgf::read_scalar(pred_path), threshold);
  const Mask gt = vgf::read_mask(gt_path);
  const UncertaintyMap u = vgf::read_scalar(u_path);
  check_uncertainty(u);
  const auto rows = uq_sweep(pred, gt, u, tau_grid(steps), connectivity_from_int(conn_n), patch, acc,
                             sliding ? PatchMode::Sliding : PatchMode::Tiling);
  Json sueo_j;
  try {
    sueo_j = sueo(u, error_map(pred, gt));
  } catch (const Error&) {
    sueo_j = nullptr;
  }
  Json j;
  j["sueo"] = sueo_j;
  j["rows"] = Json::array();
  std::ostringstream csv;
  csv << "tau,ueo,p_acc_given_cert,p_uncert_given_inacc,pavpu,lesion_coverage,undetected_strict,"
         "undetected_relaxed,undetected_strict_mean_size,undetected_relaxed_mean_size\n";
  for (const auto& r : rows) {
    j["rows"].push_back({{"tau", r.tau},
                         {"ueo", r.ueo},
                         {"p_acc_given_cert", opt(r.patches.p_acc_given_cert)},
                         {"p_uncert_given_inacc", opt(r.patches.p_uncert_given_inacc)},
                         {"pavpu", opt(r.patches.pavpu)},
                         {"lesion_coverage", opt(r.lesions.coverage)},
                         {"undetected_strict", opt(r.lesions.undetected_strict)},
                         {"undetected_relaxed", opt(r.lesions.undetected_relaxed)},
                         {"undetected_strict_mean_size", opt(r.lesions.undetected_strict_mean_size)},
                         {"undetected_relaxed_mean_size", opt(r.lesions.undetected_relaxed_mean_size)}});
    csv << num(r.tau) << ',' << num(r.ueo) << ',' << num(r.patches.p_acc_given_cert) << ','
        << num(r.patches.p_uncert_given_inacc) << ',' << num(r.patches.pavpu) << ',' << num(r.lesions.coverage)
        << ',' << num(r.lesions.undetected_strict) << ',' << num(r.lesions.undetected_relaxed) << ','
        << num(r.lesions.undetected_strict_mean_size) << ',' << num(r.lesions.undetected_relaxed_mean_size)
        << '\n';
  }
  if (!csv_out.empty()) emit(csv.str(), csv_out);
  if (!json_out.empty() || csv_out.empty()) emit(report::dump(j), json_out);
  return 0;
}

int cmd_features(const std::string& seg, const std::string& uq, const std::string& brain,
                 const std::string& ventricles, const std::vector<std::string>& samples, double t, int conn_n,
                 const std::string& subject, bool header, const std::string& out) {
  const ProbMap p = vgf::read_scalar(seg);
  const UncertaintyMap u = vgf::read_scalar(uq);
  const RingPartition rings = ring_partition(vgf::read_mask(ventricles), vgf::read_mask(brain));
  std::optional<SampleSet> set;
  if (!samples.empty()) set = load_sample_set(samples);
  const FeatureVector fv = extract_features(p, u, set ? &*set : nullptr, rings, t, connectivity_from_int(conn_n));
  FeatureTable table;
  table.add_row(subject, fv);
  std::ostringstream os;
  write_csv(os, table, header);
  emit(os.str(), out);
  return 0;
}

int cmd_classify(const std::string& features, const std::string& config_path, const std::string& target, double t,
                 std::size_t k, double reg, std::size_t boot, std::uint64_t seed, const std::string& out,
                 const std::string& confusion_out) {
  FeatureTable table;
  if (!config_path.empty()) {
    auto cfg = report::config_from_json(slurp(config_path), fs::path(config_path).parent_path());
    cfg.target = target;
    table = report::cohort_features(cfg, t);
  } else {
    std::ifstream in(features);
    if (!in) throw Error(ErrorCode::IOError, "cannot open " + features);
    table = read_csv(in);
  }
  PipelineConfig pc;
  pc.k = k;
  pc.fit.reg = reg;
  pc.n_boot = boot;
  pc.seed = seed;
  pc.threads = threads_from_env();
  const EvalSummary s = bootstrap_eval(table, target, pc);
  Json j = report::to_json(s);
  j["target"] = target;
  j["k"] = k;
  j["reg"] = reg;
  j["seed"] = seed;
  emit(report::dump(j), out);
  if (!confusion_out.empty()) {
    const auto& f = s.first_split;
    const auto cm = confusion_matrix(f.test_labels, f.test_predictions, f.classes);
    std::ostringstream os;
    os << "true\\predicted";
    for (int c : f.classes) os << ',' << c;
    os << '\n';
    for (std::size_t r = 0; r < cm.size(); ++r) {
      os << f.classes[r];
      for (auto v : cm[r]) os << ',' << v;
      os << '\n';
    }
    emit(os.str(), confusion_out);
  }
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& target, std::vector<double> ts, std::size_t k_min,
              std::size_t k_max, std::size_t boot, const std::string& out) {
  auto cfg = report::config_from_json(slurp(config_path), fs::path(config_path).parent_path());
  cfg.target = target;
  cfg.n_boot = boot;
  std::vector<std::size_t> ks;
  for (std::size_t k = k_min; k <= k_max; ++k) ks.push_back(k);
  const auto cells = report::classifier_sweep(cfg, ts, ks);
  std::ostringstream os;
  os << "t,k,kappa,kappa_lo,kappa_hi,balanced_accuracy,balanced_accuracy_lo,balanced_accuracy_hi,"
        "auroc,auroc_lo,auroc_hi,root_brier,root_brier_lo,root_brier_hi\n";
  for (const auto& c : cells) {
    os << num(c.t) << ',' << c.k;
    for (const auto* iv : {&c.summary.kappa, &c.summary.balanced_accuracy, &c.summary.auroc, &c.summary.root_brier}) {
      if (*iv) os << ',' << num((*iv)->mean) << ',' << num((*iv)->ci_low) << ',' << num((*iv)->ci_high);
      else os << ",,,";
    }
    os << '\n';
  }
  emit(os.str(), out);
  return 0;
}

int cmd_loss_check(std::uint64_t seed, std::size_t points) {
  const auto rows = report::loss_check(seed, points);
  bool ok = true;
  std::printf("%-12s %7s %14s %s\n", "loss", "points", "max_rel_err", "result");
  for (const auto& r : rows) {
    std::printf("%-12s %7zu %14.3e %s\n", r.loss.c_str(), r.points, r.max_relative_error, r.pass ? "PASS" : "FAIL");
    ok = ok && r.pass;
  }
  return ok ? 0 : 1;
}

int cmd_report(const std::string& config_path, const std::string& out_dir) {
  auto cfg = report::config_from_json(slurp(config_path), fs::path(config_path).parent_path());
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  const auto result = report::run_pipeline(cfg);
  for (const auto& f : result.files) std::cout << f.generic_string() << '\n';
  return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-aware segmentation evaluation toolkit", "seguq"};
  app.set_version_flag("--version", std::string(report::tool_version()));
  app.require_subcommand(1);

  std::string spec_path, out = "-", logits, gt, pred, unc, brain, ventricles, subject = "subject", features,
                          config, target = "deep", mean_out, json_out, csv_out, confusion_out;
  std::vector<std::string> samples;
  std::uint64_t seed = 0;
  std::size_t n = defaults::kSamples, cohort = 0, steps = 50, patch = defaults::kPatchSize, points = 10;
  std::size_t k = defaults::kFazekasFeatures, boot = defaults::kBootstrapSplits;
  std::size_t k_min = defaults::kFazekasKMin, k_max = defaults::kFazekasKMax;
  double noise = 0.0, threshold = defaults::kBinarizeThreshold, acc = defaults::kPatchAccuracy;
  double t = defaults::kFeatureThreshold, reg = defaults::kRegularization;
  std::vector<double> ts(defaults::kFeatureThresholdSweep.begin(), defaults::kFeatureThresholdSweep.end());
  int conn = defaults::kConnectivity;
  bool sliding = false, header = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic case or cohort as VGF files");
  synth->add_option("--spec", spec_path, "synth spec JSON");
  synth->add_option("--out", out, "output directory")->required();
  auto* seed_opt = synth->add_option("--seed", seed);
  auto* noise_opt = synth->add_option("--noise", noise, "logit noise scale");
  synth->add_option("--cohort", cohort, "number of subjects (0 writes a single case)");

  auto* sample = app.add_subcommand("sample", "draw probability samples from a logit model");
  sample->add_option("--logits", logits, "logit manifest")->required();
  sample->add_option("-n,--samples", n);
  sample->add_option("--seed", seed);
  sample->add_option("--out", out, "output directory")->required();

  auto* entropy = app.add_subcommand("entropy", "predictive entropy of a sample set");
  entropy->add_option("--samples", samples)->required();
  entropy->add_option("--out", out)->required();
  entropy->add_option("--mean-out", mean_out);

  auto* eval = app.add_subcommand("eval", "segmentation metrics against ground truth");
  eval->add_option("--samples", samples)->required();
  eval->add_option("--gt", gt)->required();
  eval->add_option("--threshold", threshold);
  eval->add_option("--connectivity", conn);
  eval->add_option("--out", out);

  auto* uq = app.add_subcommand("uq-eval", "uncertainty metrics over a tau sweep");
  uq->add_option("--pred", pred, "mean probability map")->required();
  uq->add_option("--gt", gt)->required();
  uq->add_option("--uncertainty", unc)->required();
  uq->add_option("--threshold", threshold);
  uq->add_option("--steps", steps);
  uq->add_option("--patch", patch);
  uq->add_option("--accuracy", acc);
  uq->add_flag("--sliding", sliding, "sliding-window patches instead of tiles");
  uq->add_option("--connectivity", conn);
  uq->add_option("--json", json_out);
  uq->add_option("--csv", csv_out);

  auto* feat = app.add_subcommand("features", "ring features of one subject as a CSV row");
  feat->add_option("--seg", pred)->required();
  feat->add_option("--uq", unc)->required();
  feat->add_option("--brain", brain)->required();
  feat->add_option("--ventricles", ventricles)->required();
  feat->add_option("--samples", samples);
  feat->add_option("--t", t);
  feat->add_option("--connectivity", conn);
  feat->add_option("--subject", subject);
  feat->add_flag("--header", header);
  feat->add_option("--out", out);

  auto* cls = app.add_subcommand("classify", "bootstrap evaluation of the feature classifier");
  auto* feat_opt = cls->add_option("--features", features, "feature CSV");
  cls->add_option("--config", config, "run config (features recomputed at --t)")->excludes(feat_opt);
  cls->add_option("--target", target)->check(CLI::IsMember({"deep", "pv", "qc"}));
  cls->add_option("--t", t);
  cls->add_option("--k", k);
  cls->add_option("--reg", reg);
  cls->add_option("--boot", boot);
  cls->add_option("--seed", seed);
  cls->add_option("--out", out);
  cls->add_option("--confusion", confusion_out);

  auto* sweep = app.add_subcommand("sweep", "classifier grid over thresholds and k");
  sweep->add_option("--config", config)->required();
  sweep->add_option("--target", target)->check(CLI::IsMember({"deep", "pv", "qc"}));
  sweep->add_option("--t", ts);
  sweep->add_option("--k-min", k_min);
  sweep->add_option("--k-max", k_max);
  sweep->add_option("--boot", boot);
  sweep->add_option("--out", out);

  auto* loss = app.add_subcommand("loss-check", "finite-difference check of loss gradients");
  loss->add_option("--seed", seed);
  loss->add_option("--points", points);

  auto* rep = app.add_subcommand("report", "run the configured pipeline over a cohort");
  rep->add_option("--config", config)->required();
  std::string out_dir;
  rep->add_option("--out", out_dir, "override output_dir");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(spec_path, out, seed, seed_opt->count() > 0, cohort, noise, noise_opt->count() > 0);
    if (*sample) return cmd_sample(logits, n, seed, out);
    if (*entropy) return cmd_entropy(samples, out, mean_out);
    if (*eval) return cmd_eval(samples, gt, threshold, conn, out);
    if (*uq) return cmd_uq_eval(pred, gt, unc, threshold, steps, patch, acc, sliding, conn, json_out, csv_out);
    if (*feat) return cmd_features(pred, unc, brain, ventricles, samples, t, conn, subject, header, out);
    if (*cls) {
      if (features.empty() && config.empty()) throw Error(ErrorCode::ConfigError, "need --features or --config");
      return cmd_classify(features, config, target, t, k, reg, boot, seed, out, confusion_out);
    }
    if (*sweep) return cmd_sweep(config, target, ts, k_min, k_max, boot, out);
    if (*loss) return cmd_loss_check(seed, points);
    if (*rep) return cmd_report(config, out_dir);
  } catch (const Error& e) {
    std::cerr << "seguq: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "seguq: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
