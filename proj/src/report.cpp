#include "seguq/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "seguq/error.hpp"
#include "seguq/losses.hpp"
#include "seguq/parallel.hpp"
#include "seguq/ring_features.hpp"
#include "seguq/seed.hpp"
#include "seguq/seg_metrics.hpp"
#include "seguq/vgf.hpp"

namespace seguq::report {

namespace fs = std::filesystem;

std::string_view tool_version() { return SEGUQ_VERSION; }

std::string dump(const Json& doc) { return doc.dump(2) + "\n"; }

// ---------------------------------------------------------------- logit IO

namespace {

ScalarGrid stack_channels(const LogitModel& m, const std::vector<double>& values, std::size_t stride,
                          std::size_t offset) {
  const Dims stacked{m.dims.nx, m.dims.ny, m.dims.nz * m.classes};
  ScalarGrid g(stacked, m.spacing, 0.0);
  const std::size_t v_count = m.voxels();
  for (std::size_t c = 0; c < m.classes; ++c) {
    for (std::size_t v = 0; v < v_count; ++v) g[c * v_count + v] = values[(v * m.classes + c) * stride + offset];
  }
  return g;
}

void unstack_channels(const ScalarGrid& g, const LogitModel& m, std::vector<double>& values, std::size_t stride,
                      std::size_t offset) {
  if (g.dims().nx != m.dims.nx || g.dims().ny != m.dims.ny || g.dims().nz != m.dims.nz * m.classes) {
    throw Error(ErrorCode::DimensionMismatch, "logit volume does not match the manifest");
  }
  const std::size_t v_count = m.voxels();
  for (std::size_t c = 0; c < m.classes; ++c) {
    for (std::size_t v = 0; v < v_count; ++v) values[(v * m.classes + c) * stride + offset] = g[c * v_count + v];
  }
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IOError, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::IOError, "cannot write " + p.string());
  out << text;
  if (!out) throw Error(ErrorCode::IOError, "write failed for " + p.string());
}

}  // namespace

fs::path write_logit_model(const fs::path& dir, const LogitModel& model) {
  model.validate();
  fs::create_directories(dir);
  Json manifest;
  manifest["classes"] = model.classes;
  manifest["rank"] = model.rank;
  vgf::write_scalar(dir / "mu.vgf", stack_channels(model, model.mean, 1, 0));
  vgf::write_scalar(dir / "diag.vgf", stack_channels(model, model.diag, 1, 0));
  manifest["mu"] = "mu.vgf";
  manifest["diag"] = "diag.vgf";
  manifest["factors"] = Json::array();
  for (std::size_t r = 0; r < model.rank; ++r) {
    const std::string name = "factor_" + std::to_string(r) + ".vgf";
    vgf::write_scalar(dir / name, stack_channels(model, model.factor, model.rank, r));
    manifest["factors"].push_back(name);
  }
  const fs::path path = dir / "logits.json";
  write_text(path, dump(manifest));
  return path;
}

LogitModel read_logit_model(const fs::path& manifest_path) {
  Json j;
  try {
    j = Json::parse(read_text(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IOError, manifest_path.string() + ": " + e.what());
  }
  const fs::path base = manifest_path.parent_path();
  try {
    LogitModel m;
    m.classes = j.at("classes").get<std::size_t>();
    if (m.classes == 0) throw Error(ErrorCode::IOError, "manifest needs classes >= 1");
    const auto factors = j.value("factors", std::vector<std::string>{});
    m.rank = factors.size();
    const ScalarGrid mu = vgf::read_scalar(base / j.at("mu").get<std::string>());
    if (mu.dims().nz % m.classes != 0) throw Error(ErrorCode::DimensionMismatch, "mu depth not divisible by classes");
    m.dims = {mu.dims().nx, mu.dims().ny, mu.dims().nz / m.classes};
    m.spacing = mu.spacing();
    const std::size_t n = m.voxels() * m.classes;
    m.mean.assign(n, 0.0);
    m.diag.assign(n, 0.0);
    m.factor.assign(n * m.rank, 0.0);
    unstack_channels(mu, m, m.mean, 1, 0);
    if (j.contains("diag")) unstack_channels(vgf::read_scalar(base / j["diag"].get<std::string>()), m, m.diag, 1, 0);
    for (std::size_t r = 0; r < m.rank; ++r) {
      unstack_channels(vgf::read_scalar(base / factors[r]), m, m.factor, m.rank, r);
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IOError, manifest_path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- config

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Sample: return "sample";
    case Stage::Entropy: return "entropy";
    case Stage::Eval: return "eval";
    case Stage::UqEval: return "uq-eval";
    case Stage::Features: return "features";
    case Stage::Classify: return "classify";
  }
  return "?";
}

Stage stage_from_string(std::string_view s) {
  for (Stage st : {Stage::Sample, Stage::Entropy, Stage::Eval, Stage::UqEval, Stage::Features, Stage::Classify}) {
    if (to_string(st) == s) return st;
  }
  throw Error(ErrorCode::ConfigError, "unknown stage '" + std::string(s) + "'");
}

bool RunConfig::has_stage(Stage s) const { return std::find(stages.begin(), stages.end(), s) != stages.end(); }

namespace {

const std::set<std::string> kTopKeys{"seed",     "sampling", "segmentation", "uq",       "features",
                                     "classify", "losses",   "stages",       "output_dir", "subjects"};

template <typename T>
void take(const Json& obj, const char* key, T& out) {
  if (obj.contains(key) && !obj[key].is_null()) out = obj[key].get<T>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

RunConfig config_from_json(const std::string& text, const fs::path& base_dir) {
  RunConfig c;
  try {
    const Json j = Json::parse(text);
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
    for (const auto& [key, _] : j.items()) {
      if (!kTopKeys.count(key)) throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
    }
    take(j, "seed", c.seed);
    if (j.contains("sampling")) take(j["sampling"], "samples", c.samples);
    if (j.contains("segmentation")) {
      take(j["segmentation"], "threshold", c.threshold);
      take(j["segmentation"], "connectivity", c.connectivity);
    }
    if (j.contains("uq")) {
      const auto& u = j["uq"];
      take(u, "tau", c.tau);
      take(u, "tau_steps", c.tau_steps);
      take(u, "patch_size", c.patch_size);
      take(u, "patch_accuracy", c.patch_accuracy);
      if (u.contains("patch_mode")) {
        const auto mode = u["patch_mode"].get<std::string>();
        if (mode == "tiling") c.patch_mode = PatchMode::Tiling;
        else if (mode == "sliding") c.patch_mode = PatchMode::Sliding;
        else throw Error(ErrorCode::ConfigError, "patch_mode must be tiling or sliding");
      }
    }
    if (j.contains("features")) {
      take(j["features"], "ring_edges_mm", c.ring_edges_mm);
      take(j["features"], "threshold", c.feature_threshold);
    }
    if (j.contains("classify")) {
      const auto& k = j["classify"];
      take(k, "target", c.target);
      take(k, "k", c.k);
      take(k, "qc_k", c.qc_k);
      take(k, "qc_dice_cutoff", c.qc_dice_cutoff);
      take(k, "reg", c.reg);
      take(k, "n_boot", c.n_boot);
      take(k, "train_fraction", c.train_fraction);
    }
    if (j.contains("stages")) {
      c.stages.clear();
      for (const auto& s : j["stages"]) c.stages.push_back(stage_from_string(s.get<std::string>()));
    }
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j["output_dir"].get<std::string>());
    else if (!base_dir.empty()) c.output_dir = base_dir / c.output_dir;
    if (j.contains("subjects")) {
      for (const auto& s : j["subjects"]) {
        SubjectConfig sc;
        sc.id = s.at("id").get<std::string>();
        sc.logits = resolve(base_dir, s.value("logits", std::string{}));
        for (const auto& p : s.value("samples", std::vector<std::string>{})) sc.samples.push_back(resolve(base_dir, p));
        sc.gt = resolve(base_dir, s.value("gt", std::string{}));
        sc.brain = resolve(base_dir, s.value("brain", std::string{}));
        sc.ventricles = resolve(base_dir, s.value("ventricles", std::string{}));
        if (s.contains("fazekas_deep") && !s["fazekas_deep"].is_null()) sc.fazekas_deep = s["fazekas_deep"].get<int>();
        if (s.contains("fazekas_pv") && !s["fazekas_pv"].is_null()) sc.fazekas_pv = s["fazekas_pv"].get<int>();
        c.subjects.push_back(std::move(sc));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }

  if (c.samples == 0) throw Error(ErrorCode::ConfigError, "samples must be >= 1");
  if (!(c.threshold > 0.0 && c.threshold < 1.0)) throw Error(ErrorCode::ConfigError, "threshold must lie in (0, 1)");
  try {
    connectivity_from_int(c.connectivity);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  if (!(c.tau >= 0.0 && c.tau <= std::log(2.0))) throw Error(ErrorCode::ConfigError, "tau must lie in [0, ln 2]");
  if (c.tau_steps < 2) throw Error(ErrorCode::ConfigError, "tau_steps must be >= 2");
  if (c.patch_size == 0) throw Error(ErrorCode::ConfigError, "patch_size must be >= 1");
  if (c.target != "deep" && c.target != "pv" && c.target != "qc") {
    throw Error(ErrorCode::ConfigError, "target must be deep, pv or qc");
  }
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) {
    throw Error(ErrorCode::ConfigError, "train_fraction must lie in (0, 1)");
  }
  std::set<std::string> ids;
  for (const auto& s : c.subjects) {
    if (s.id.empty()) throw Error(ErrorCode::ConfigError, "subject id must be non-empty");
    if (!ids.insert(s.id).second) throw Error(ErrorCode::ConfigError, "duplicate subject id " + s.id);
  }
  return c;
}

Json config_echo(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["sampling"] = {{"samples", c.samples}, {"ensemble_draws_per_member", defaults::kEnsembleDrawsPerMember}};
  j["segmentation"] = {{"threshold", c.threshold}, {"connectivity", c.connectivity}};
  j["uq"] = {{"tau", c.tau},
             {"tau_steps", c.tau_steps},
             {"patch_size", c.patch_size},
             {"patch_accuracy", c.patch_accuracy},
             {"patch_mode", c.patch_mode == PatchMode::Tiling ? "tiling" : "sliding"},
             {"reference_ueo", defaults::kReferenceUeo},
             {"undetected_fraction", defaults::kUndetectedFraction},
             {"undetected_voxels", defaults::kUndetectedVoxels}};
  j["features"] = {{"ring_edges_mm", c.ring_edges_mm},
                   {"threshold", c.feature_threshold},
                   {"threshold_sweep", defaults::kFeatureThresholdSweep},
                   {"clip_percentile", defaults::kClipPercentile}};
  j["classify"] = {{"target", c.target},
                   {"k", c.k},
                   {"k_range", {defaults::kFazekasKMin, defaults::kFazekasKMax}},
                   {"qc_k", c.qc_k},
                   {"qc_k_range", {defaults::kQcKMin, defaults::kQcKMax}},
                   {"qc_dice_cutoff", c.qc_dice_cutoff},
                   {"reg", c.reg},
                   {"n_boot", c.n_boot},
                   {"train_fraction", c.train_fraction},
                   {"confidence_level", defaults::kConfidenceLevel}};
  j["losses"] = {{"evidential_kl_weight", defaults::kEvidentialKlWeight},
                 {"elbo_beta", defaults::kElboBeta},
                 {"combo_xent_weight", defaults::kComboXentWeight},
                 {"combo_dice_weight", defaults::kComboDiceWeight},
                 {"soft_dice_epsilon", defaults::kSoftDiceEpsilon}};
  j["stages"] = Json::array();
  for (Stage s : c.stages) j["stages"].push_back(to_string(s));
  j["output_dir"] = c.output_dir.generic_string();
  j["subjects"] = Json::array();
  for (const auto& s : c.subjects) {
    Json sj;
    sj["id"] = s.id;
    sj["logits"] = s.logits.generic_string();
    sj["samples"] = Json::array();
    for (const auto& p : s.samples) sj["samples"].push_back(p.generic_string());
    sj["gt"] = s.gt.generic_string();
    sj["brain"] = s.brain.generic_string();
    sj["ventricles"] = s.ventricles.generic_string();
    sj["fazekas_deep"] = s.fazekas_deep ? Json(*s.fazekas_deep) : Json(nullptr);
    sj["fazekas_pv"] = s.fazekas_pv ? Json(*s.fazekas_pv) : Json(nullptr);
    j["subjects"].push_back(std::move(sj));
  }
  return j;
}

// ---------------------------------------------------------------- pipeline

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{
      "dice",          "iou",         "avd_percent",  "f1",
      "precision",     "recall",      "top_dice",     "ged",
      "sueo",          "ueo",         "p_acc_given_cert", "p_uncert_given_inacc",
      "pavpu",         "lesion_coverage", "undetected_strict", "undetected_relaxed",
      "undetected_strict_mean_size", "undetected_relaxed_mean_size"};
  return names;
}

namespace {

const std::vector<std::string> kEvalMetrics{"dice", "iou", "avd_percent", "f1", "precision", "recall", "top_dice", "ged"};
const std::vector<std::string> kUqMetrics{"sueo",
                                          "ueo",
                                          "p_acc_given_cert",
                                          "p_uncert_given_inacc",
                                          "pavpu",
                                          "lesion_coverage",
                                          "undetected_strict",
                                          "undetected_relaxed",
                                          "undetected_strict_mean_size",
                                          "undetected_relaxed_mean_size"};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

struct MetricSlot {
  std::optional<double> value;
  std::string reason = "stage_disabled";
};

struct SubjectState {
  std::map<std::string, MetricSlot> metrics;
  Json errors = Json::array();
  Json files = Json::object();
  std::optional<FeatureVector> features;
  std::optional<double> dice;
};

// Per-subject stage data.
struct Work {
  std::optional<SampleSet> samples;
  std::optional<ProbMap> mean;
  std::optional<UncertaintyMap> uncertainty;
  std::optional<Mask> gt;
};

std::string code_name(ErrorCode c) { return std::string(to_string(c)); }

void mark(SubjectState& st, const std::vector<std::string>& names, const std::string& reason) {
  for (const auto& n : names) st.metrics[n] = {std::nullopt, reason};
}

template <typename Fn>
void metric(SubjectState& st, const std::string& name, Fn&& fn) {
  try {
    std::optional<double> v = fn();
    if (v && std::isfinite(*v)) st.metrics[name] = {v, ""};
    else st.metrics[name] = {std::nullopt, v ? "non_finite" : "undefined"};
  } catch (const Error& e) {
    st.metrics[name] = {std::nullopt, code_name(e.code())};
  }
}

SampleSet load_samples(const SubjectConfig& s, const RunConfig& c) {
  if (!s.logits.empty()) {
    return sample_logits(read_logit_model(s.logits), c.samples, derive_seed(c.seed, {fnv1a(s.id), 0}));
  }
  if (s.samples.empty()) throw Error(ErrorCode::ConfigError, "subject has neither logits nor samples");
  std::vector<ProbMap> members;
  for (const auto& p : s.samples) {
    auto m = vgf::read_scalar(p);
    check_probability(m);
    members.push_back(std::move(m));
  }
  return SampleSet(std::move(members), Provenance::External);
}

std::string csv_number(std::optional<double> v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

void write_sweep_csv(const fs::path& path, const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "tau,ueo,p_acc_given_cert,p_uncert_given_inacc,pavpu,lesion_coverage,undetected_strict,"
        "undetected_relaxed,undetected_strict_mean_size,undetected_relaxed_mean_size\n";
  for (const auto& r : rows) {
    os << csv_number(r.tau) << ',' << csv_number(r.ueo) << ',' << csv_number(r.patches.p_acc_given_cert) << ','
       << csv_number(r.patches.p_uncert_given_inacc) << ',' << csv_number(r.patches.pavpu) << ','
       << csv_number(r.lesions.coverage) << ',' << csv_number(r.lesions.undetected_strict) << ','
       << csv_number(r.lesions.undetected_relaxed) << ',' << csv_number(r.lesions.undetected_strict_mean_size) << ','
       << csv_number(r.lesions.undetected_relaxed_mean_size) << '\n';
  }
  write_text(path, os.str());
}

SubjectState process_subject(const RunConfig& c, const SubjectConfig& s, double feature_t, bool write_outputs) {
  SubjectState st;
  for (const auto& n : metric_names()) st.metrics[n] = {};
  const Connectivity conn = connectivity_from_int(c.connectivity);
  const fs::path dir = c.output_dir / "subjects" / s.id;
  Work w;

  auto stage = [&](Stage which, const std::vector<std::string>& owned, auto&& body) {
    if (!c.has_stage(which)) return;
    try {
      body();
    } catch (const Error& e) {
      st.errors.push_back({{"stage", to_string(which)}, {"code", code_name(e.code())}, {"message", e.what()}});
      mark(st, owned, "stage_failed");
    } catch (const std::exception& e) {
      st.errors.push_back({{"stage", to_string(which)}, {"code", "IOError"}, {"message", e.what()}});
      mark(st, owned, "stage_failed");
    }
  };
  auto need = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::ConfigError, std::string("missing upstream input: ") + what);
  };

  stage(Stage::Sample, {}, [&] { w.samples = load_samples(s, c); });

  stage(Stage::Entropy, {}, [&] {
    need(w.samples.has_value(), "samples");
    w.mean = w.samples->mean();
    w.uncertainty = predictive_entropy(*w.samples);
    if (write_outputs) {
      fs::create_directories(dir);
      vgf::write_scalar(dir / "mean.vgf", *w.mean);
      vgf::write_scalar(dir / "uncertainty.vgf", *w.uncertainty);
      st.files["mean"] = (dir / "mean.vgf").generic_string();
      st.files["uncertainty"] = (dir / "uncertainty.vgf").generic_string();
    }
  });

  auto load_gt = [&] {
    if (!w.gt) {
      if (s.gt.empty()) throw Error(ErrorCode::ConfigError, "subject has no gt");
      w.gt = vgf::read_mask(s.gt);
    }
    return *w.gt;
  };

  stage(Stage::Eval, kEvalMetrics, [&] {
    need(w.samples.has_value(), "samples");
    const Mask gt = load_gt();
    const ProbMap mean = w.mean ? *w.mean : w.samples->mean();
    require_same_dims(mean, gt, "gt and prediction differ in shape");
    const Mask pred = binarize(mean, c.threshold);
    metric(st, "dice", [&]() -> std::optional<double> { return dice(pred, gt); });
    st.dice = st.metrics["dice"].value;
    metric(st, "iou", [&]() -> std::optional<double> { return iou(pred, gt); });
    metric(st, "avd_percent", [&]() -> std::optional<double> { return avd_percent(pred, gt); });
    const auto f1 = component_f1(pred, gt, conn);
    metric(st, "f1", [&]() -> std::optional<double> { return f1.f1; });
    metric(st, "precision", [&]() -> std::optional<double> { return f1.precision; });
    metric(st, "recall", [&]() -> std::optional<double> { return f1.recall; });
    metric(st, "top_dice", [&]() -> std::optional<double> { return top_dice(*w.samples, gt, c.threshold); });
    metric(st, "ged", [&]() -> std::optional<double> {
      std::vector<Mask> preds;
      for (const auto& m : w.samples->members()) preds.push_back(binarize(m, c.threshold));
      return ged(preds, std::vector<Mask>{gt});
    });
  });

  stage(Stage::UqEval, kUqMetrics, [&] {
    need(w.mean.has_value() && w.uncertainty.has_value(), "mean and uncertainty maps");
    const Mask gt = load_gt();
    require_same_dims(*w.mean, gt, "gt and prediction differ in shape");
    const Mask pred = binarize(*w.mean, c.threshold);
    const Mask errors = error_map(pred, gt);
    const auto& u = *w.uncertainty;
    metric(st, "sueo", [&]() -> std::optional<double> { return sueo(u, errors); });
    metric(st, "ueo", [&]() -> std::optional<double> { return ueo(u, errors, c.tau); });
    const auto patches = patch_metrics(pred, gt, u, c.tau, c.patch_size, c.patch_accuracy, c.patch_mode);
    metric(st, "p_acc_given_cert", [&] { return patches.p_acc_given_cert; });
    metric(st, "p_uncert_given_inacc", [&] { return patches.p_uncert_given_inacc; });
    metric(st, "pavpu", [&] { return patches.pavpu; });
    const auto cov = lesion_coverage(pred, gt, u, c.tau, conn);
    metric(st, "lesion_coverage", [&] { return cov.coverage; });
    metric(st, "undetected_strict", [&] { return cov.undetected_strict; });
    metric(st, "undetected_relaxed", [&] { return cov.undetected_relaxed; });
    metric(st, "undetected_strict_mean_size", [&] { return cov.undetected_strict_mean_size; });
    metric(st, "undetected_relaxed_mean_size", [&] { return cov.undetected_relaxed_mean_size; });
    if (write_outputs) {
      const auto rows = uq_sweep(pred, gt, u, tau_grid(c.tau_steps), conn, c.patch_size, c.patch_accuracy,
                                 c.patch_mode);
      write_sweep_csv(dir / "uq_sweep.csv", rows);
      st.files["uq_sweep"] = (dir / "uq_sweep.csv").generic_string();
    }
  });

  stage(Stage::Features, {}, [&] {
    need(w.mean.has_value() && w.uncertainty.has_value(), "mean and uncertainty maps");
    if (s.brain.empty() || s.ventricles.empty()) throw Error(ErrorCode::ConfigError, "subject lacks brain/ventricles");
    const Mask brain = vgf::read_mask(s.brain);
    const Mask ventricles = vgf::read_mask(s.ventricles);
    const RingPartition rings = ring_partition(ventricles, brain, c.ring_edges_mm);
    st.features = extract_features(*w.mean, *w.uncertainty, &*w.samples, rings, feature_t, conn);
  });

  return st;
}

Json interval_json(const std::optional<Interval>& i) {
  if (!i) return nullptr;
  return {{"mean", i->mean}, {"ci_low", i->ci_low}, {"ci_high", i->ci_high}};
}

Json optional_json(std::optional<double> v) { return v ? Json(*v) : Json(nullptr); }

std::vector<std::size_t> sorted_order(const RunConfig& c) {
  std::vector<std::size_t> order(c.subjects.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return c.subjects[a].id < c.subjects[b].id; });
  return order;
}

std::size_t worker_count(const RunConfig& c) { return c.threads ? c.threads : threads_from_env(); }

// Builds the classification table from finished subjects that carry the label.
FeatureTable label_table(const RunConfig& c, const std::vector<std::size_t>& order,
                         const std::vector<SubjectState>& states, const std::string& target) {
  FeatureTable table;
  for (std::size_t i : order) {
    const auto& st = states[i];
    const auto& s = c.subjects[i];
    if (!st.features) continue;
    std::optional<int> label;
    if (target == "deep") label = s.fazekas_deep;
    else if (target == "pv") label = s.fazekas_pv;
    else if (st.dice) label = *st.dice <= c.qc_dice_cutoff ? 1 : 0;
    if (!label) continue;
    table.add_row(s.id, *st.features, {{target, *label}});
  }
  return table;
}

PipelineConfig classifier_config(const RunConfig& c, std::size_t k) {
  PipelineConfig p;
  p.k = k;
  p.fit.reg = c.reg;
  p.train_fraction = c.train_fraction;
  p.n_boot = c.n_boot;
  p.seed = derive_seed(c.seed, {0xC1A55u});
  p.threads = worker_count(c);
  return p;
}

}  // namespace

Json to_json(const EvalSummary& s) {
  Json j;
  j["kappa"] = interval_json(s.kappa);
  j["balanced_accuracy"] = interval_json(s.balanced_accuracy);
  j["auroc"] = interval_json(s.auroc);
  j["root_brier"] = interval_json(s.root_brier);
  j["resamples"] = s.resamples;
  j["first_split_selected"] = s.first_split.selected;
  return j;
}

RunResult run_pipeline(const RunConfig& c) {
  RunResult result;
  const auto order = sorted_order(c);
  std::vector<SubjectState> states(c.subjects.size());
  parallel_for(c.subjects.size(), worker_count(c), [&](std::size_t i) {
    states[i] = process_subject(c, c.subjects[i], c.feature_threshold, true);
  });

  bool failed = false;
  Json report;
  report["tool"] = "seguq";
  report["version"] = tool_version();
  report["config"] = config_echo(c);
  report["subjects"] = Json::array();
  std::map<std::string, std::vector<double>> values;
  for (std::size_t i : order) {
    const auto& st = states[i];
    Json sj;
    sj["id"] = c.subjects[i].id;
    sj["status"] = st.errors.empty() ? "ok" : "failed";
    sj["errors"] = st.errors;
    sj["files"] = st.files;
    Json metrics;
    for (const auto& name : metric_names()) {
      const auto& slot = st.metrics.at(name);
      metrics[name] = {{"value", optional_json(slot.value)},
                       {"reason", slot.value ? Json(nullptr) : Json(slot.reason)}};
      if (slot.value) values[name].push_back(*slot.value);
    }
    sj["metrics"] = std::move(metrics);
    failed = failed || !st.errors.empty();
    report["subjects"].push_back(std::move(sj));
  }

  Json agg;
  for (const auto& name : metric_names()) {
    const auto it = values.find(name);
    if (it == values.end() || it->second.empty()) {
      agg[name] = {{"mean", nullptr}, {"std_runs", nullptr}, {"std_subjects", nullptr}, {"n", 0}};
      continue;
    }
    const Aggregate a = aggregate({it->second});
    agg[name] = {{"mean", a.mean},
                 {"std_runs", optional_json(a.std_over_runs)},
                 {"std_subjects", optional_json(a.std_over_subjects)},
                 {"n", it->second.size()}};
  }
  report["aggregate"] = std::move(agg);

  const fs::path out = c.output_dir;
  fs::create_directories(out);

  // Feature table over every subject with features. A target column is
  // written only when every one of those subjects has the label.
  if (c.has_stage(Stage::Features)) {
    auto label_of = [&](std::size_t i, const std::string& target) -> std::optional<int> {
      const auto& s = c.subjects[i];
      if (target == "deep") return s.fazekas_deep;
      if (target == "pv") return s.fazekas_pv;
      if (states[i].dice) return *states[i].dice <= c.qc_dice_cutoff ? 1 : 0;
      return std::nullopt;
    };
    std::vector<std::string> complete;
    for (const char* target : {"deep", "pv", "qc"}) {
      bool all_known = true;
      for (std::size_t i : order) {
        if (states[i].features && !label_of(i, target)) all_known = false;
      }
      if (all_known) complete.emplace_back(target);
    }
    FeatureTable all;
    for (std::size_t i : order) {
      if (!states[i].features) continue;
      std::map<std::string, int> labels;
      for (const auto& target : complete) labels[target] = *label_of(i, target);
      all.add_row(c.subjects[i].id, *states[i].features, labels);
    }
    std::ostringstream os;
    write_csv(os, all);
    write_text(out / "features.csv", os.str());
    result.files.push_back(out / "features.csv");
  }

  Json cls;
  cls["target"] = c.target;
  cls["k"] = c.effective_k();
  cls["status"] = "skipped";
  cls["reason"] = "stage_disabled";
  cls["summary"] = nullptr;
  if (c.has_stage(Stage::Classify)) {
    try {
      const FeatureTable table = label_table(c, order, states, c.target);
      if (table.size() == 0) {
        cls["reason"] = "no_labelled_subjects";
      } else {
        const EvalSummary summary = bootstrap_eval(table, c.target, classifier_config(c, c.effective_k()));
        cls["status"] = "ok";
        cls["reason"] = nullptr;
        cls["summary"] = to_json(summary);
        const auto& fs0 = summary.first_split;
        const auto cm = confusion_matrix(fs0.test_labels, fs0.test_predictions, fs0.classes);
        std::ostringstream os;
        os << "true\\predicted";
        for (int k : fs0.classes) os << ',' << k;
        os << '\n';
        for (std::size_t r = 0; r < cm.size(); ++r) {
          os << fs0.classes[r];
          for (auto v : cm[r]) os << ',' << v;
          os << '\n';
        }
        write_text(out / "confusion.csv", os.str());
        result.files.push_back(out / "confusion.csv");
      }
    } catch (const Error& e) {
      cls["status"] = "failed";
      cls["reason"] = code_name(e.code());
      cls["message"] = e.what();
      failed = true;
    }
  }
  report["classification"] = std::move(cls);

  write_text(out / "report.json", dump(report));
  result.files.insert(result.files.begin(), out / "report.json");
  for (std::size_t i : order) {
    for (const auto& [_, p] : states[i].files.items()) result.files.emplace_back(p.get<std::string>());
  }
  result.exit_code = failed ? 1 : 0;
  result.report = std::move(report);
  return result;
}

FeatureTable cohort_features(const RunConfig& config, double t) {
  RunConfig c = config;
  c.stages = {Stage::Sample, Stage::Entropy, Stage::Eval, Stage::Features};
  const auto order = sorted_order(c);
  std::vector<SubjectState> states(c.subjects.size());
  parallel_for(c.subjects.size(), worker_count(c), [&](std::size_t i) {
    states[i] = process_subject(c, c.subjects[i], t, false);
  });
  return label_table(c, order, states, c.target);
}

std::vector<SweepCell> classifier_sweep(const RunConfig& c, const std::vector<double>& thresholds,
                                        const std::vector<std::size_t>& ks) {
  std::vector<SweepCell> cells;
  for (double t : thresholds) {
    const FeatureTable table = cohort_features(c, t);
    for (std::size_t k : ks) {
      SweepCell cell{t, k, {}};
      if (k > table.feature_names.size()) {
        throw Error(ErrorCode::ConfigError, "k exceeds the number of features");
      }
      cell.summary = bootstrap_eval(table, c.target, classifier_config(c, k));
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

// ---------------------------------------------------------------- loss check

namespace {

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max(std::sqrt(std::max(na, nb)), 1e-12);
  return std::sqrt(diff) / scale;
}

template <typename Fn>
std::vector<double> numeric_gradient(std::vector<double> x, Fn&& f) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = f(x);
    x[i] = x0 - h;
    const double down = f(x);
    x[i] = x0;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

Array2 one_hot(std::size_t v, std::size_t c, std::mt19937_64& rng) {
  Array2 y(v, c, 0.0);
  std::uniform_int_distribution<std::size_t> pick(0, c - 1);
  for (std::size_t i = 0; i < v; ++i) y(i, pick(rng)) = 1.0;
  return y;
}

}  // namespace

std::vector<LossCheckRow> loss_check(std::uint64_t seed, std::size_t points, double tolerance) {
  constexpr std::size_t V = 6, C = 3, S = 3;
  std::vector<LossCheckRow> rows;
  auto run = [&](const std::string& name, std::uint64_t stream, auto&& one_point) {
    LossCheckRow row{name, points, 0.0, true};
    for (std::size_t p = 0; p < points; ++p) {
      std::mt19937_64 rng(derive_seed(seed, {stream, p}));
      row.max_relative_error = std::max(row.max_relative_error, one_point(rng));
    }
    row.pass = row.max_relative_error < tolerance;
    rows.push_back(row);
  };
  auto dirichlet_point = [&](auto loss) {
    return [loss](std::mt19937_64& rng) {
      std::uniform_real_distribution<double> evidence(0.2, 6.0);
      Array2 alpha(V, C);
      for (double& a : alpha.data) a = 1.0 + evidence(rng);
      const Array2 y = one_hot(V, C, rng);
      const auto analytic = loss(alpha, y, true).gradient;
      const auto numeric = numeric_gradient(alpha.data, [&](const std::vector<double>& x) {
        return loss(Array2(V, C, x), y, false).value;
      });
      return relative_error(analytic, numeric);
    };
  };
  run("evid_xent", 1, dirichlet_point([](const Array2& a, const Array2& y, bool g) { return evid_xent(a, y, g); }));
  run("evid_sdice", 2, dirichlet_point([](const Array2& a, const Array2& y, bool g) { return evid_sdice(a, y, g); }));
  run("evid_kl", 3, dirichlet_point([](const Array2& a, const Array2& y, bool g) {
        return evid_kl(a, y, defaults::kEvidentialKlWeight, g);
      }));
  run("hs_mc_loss", 4, [&](std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.5);
    std::vector<double> flat(S * V * C);
    for (double& x : flat) x = normal(rng);
    const Array2 y = one_hot(V, C, rng);
    auto unpack = [&](const std::vector<double>& x) {
      std::vector<Array2> s;
      for (std::size_t i = 0; i < S; ++i) {
        s.emplace_back(V, C, std::vector<double>(x.begin() + i * V * C, x.begin() + (i + 1) * V * C));
      }
      return s;
    };
    const auto analytic = hs_mc_loss(unpack(flat), y, true).gradient;
    const auto numeric = numeric_gradient(flat, [&](const std::vector<double>& x) {
      return hs_mc_loss(unpack(x), y, false).value;
    });
    return relative_error(analytic, numeric);
  });
  run("combo_loss", 5, [&](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> prob(0.05, 0.95);
    std::bernoulli_distribution coin(0.4);
    std::vector<double> p(2 * V), y(2 * V);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = prob(rng);
      y[i] = coin(rng) ? 1.0 : 0.0;
    }
    const auto analytic = combo_loss(p, y, defaults::kComboXentWeight, defaults::kComboDiceWeight, true).gradient;
    const auto numeric = numeric_gradient(p, [&](const std::vector<double>& x) {
      return combo_loss(x, y, defaults::kComboXentWeight, defaults::kComboDiceWeight, false).value;
    });
    return relative_error(analytic, numeric);
  });
  run("elbo", 6, [&](std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> var(0.3, 2.0);
    DiagGaussian prior, post;
    for (std::size_t i = 0; i < V; ++i) {
      prior.mean.push_back(normal(rng));
      prior.variance.push_back(var(rng));
      post.mean.push_back(normal(rng));
      post.variance.push_back(var(rng));
    }
    std::vector<double> flat = post.mean;
    flat.insert(flat.end(), post.variance.begin(), post.variance.end());
    const auto analytic = elbo(1.25, prior, post, defaults::kElboBeta, true).gradient;
    const auto numeric = numeric_gradient(flat, [&](const std::vector<double>& x) {
      DiagGaussian q{{x.begin(), x.begin() + V}, {x.begin() + V, x.end()}};
      return elbo(1.25, prior, q, defaults::kElboBeta, false).value;
    });
    return relative_error(analytic, numeric);
  });
  return rows;
}

}  // namespace seguq::report
