// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "seguq/classify.hpp"
#include "seguq/losses.hpp"
#include "seguq/report.hpp"
#include "seguq/ring_features.hpp"
#include "seguq/seed.hpp"
#include "seguq/seg_metrics.hpp"
#include "seguq/stochastic.hpp"
#include "seguq/synth.hpp"
#include "seguq/uq_metrics.hpp"
#include "seguq/vgf.hpp"

using namespace seguq;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects the first few failure messages.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (failures_ < 5) msg_ += (msg_.empty() ? "" : "; ") + what;
    ++failures_;
  }
  Outcome done(const std::string& ok_detail) const {
    if (failures_ == 0) return {true, ok_detail};
    return {false, std::to_string(failures_) + " failures: " + msg_};
  }

 private:
  std::size_t failures_ = 0;
  std::string msg_;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

bool close(double a, double b, double tol = 1e-12) { return std::abs(a - b) <= tol; }

// -------------------------------------------------------------------------

Outcome loss_gradients() {
  const auto t0 = Clock::now();
  const auto rows = report::loss_check(20240601, 10, 1e-5);
  const double elapsed = seconds_since(t0);
  Checker c;
  double worst = 0.0;
  std::size_t covered = 0;
  for (const auto& r : rows) {
    c.expect(r.pass, r.loss + " rel err " + fmt(r.max_relative_error));
    c.expect(r.points == 10, r.loss + " ran " + std::to_string(r.points) + " points");
    worst = std::max(worst, r.max_relative_error);
    for (const char* name : {"evid_xent", "evid_sdice", "evid_kl", "hs_mc_loss", "combo_loss"})
      if (r.loss == name) ++covered;
  }
  c.expect(covered == 5, "missing loss rows");
  c.expect(elapsed < 10.0, "took " + fmt(elapsed) + " s");
  return c.done("max rel err " + fmt(worst) + ", " + fmt(elapsed) + " s");
}

Outcome dirichlet_identity() {
  Checker c;
  for (std::size_t classes : {2, 3, 4}) {
    DirichletField f{{3, 2, 2}, {}, classes, std::vector<double>(12 * classes, 0.0)};
    const auto p = dirichlet_class_probs(f);
    for (double v : p) c.expect(v == 1.0 / static_cast<double>(classes), "non-uniform p " + fmt(v, 17));
    const Array2 alpha(12, classes, 1.0);
    Array2 y(12, classes, 0.0);
    for (std::size_t v = 0; v < 12; ++v) y(v, v % classes) = 1.0;
    const double kl = evid_kl(alpha, y).value;
    c.expect(std::abs(kl) < 1e-12, "evid_kl " + fmt(kl));
  }
  const DirichletField two{{2, 2, 2}, {}, 2, std::vector<double>(16, 0.0)};
  const auto fg = dirichlet_probs(two);
  for (double v : fg.storage()) c.expect(v == 0.5, "foreground prob " + fmt(v, 17));
  return c.done("uniform probabilities exact, |KL| < 1e-12");
}

Outcome ssn_sampling() {
  LogitModel m;
  m.dims = {4, 1, 1};
  m.classes = 2;
  m.rank = 2;
  std::mt19937_64 rng(314159);
  std::uniform_real_distribution<double> p(0.8, 1.2), d(0.3, 0.7), mu(-1.0, 1.0);
  const std::size_t n = 8;
  for (std::size_t i = 0; i < n; ++i) {
    m.mean.push_back(mu(rng));
    m.diag.push_back(d(rng));
  }
  for (std::size_t i = 0; i < n * 2; ++i) m.factor.push_back(p(rng));

  const std::size_t draws = 200000;
  std::vector<long double> sum(n, 0.0L), cross(n * n, 0.0L);
  std::mt19937_64 gen(2718);
  for (std::size_t s = 0; s < draws; ++s) {
    const auto x = draw_logits(m, gen);
    for (std::size_t i = 0; i < n; ++i) {
      sum[i] += x[i];
      for (std::size_t j = 0; j < n; ++j) cross[i * n + j] += static_cast<long double>(x[i]) * x[j];
    }
  }
  Checker c;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double mean = static_cast<double>(sum[i] / draws);
    c.expect(std::abs(mean - m.mean[i]) < 0.02, "mean " + std::to_string(i));
    for (std::size_t j = 0; j < n; ++j) {
      double expect = m.factor[i * 2] * m.factor[j * 2] + m.factor[i * 2 + 1] * m.factor[j * 2 + 1];
      if (i == j) expect += m.diag[i];
      const long double mi = sum[i] / draws, mj = sum[j] / draws;
      const double cov = static_cast<double>((cross[i * n + j] - draws * mi * mj) / (draws - 1));
      if (std::abs(expect) <= 0.01) continue;
      const double rel = std::abs(cov - expect) / std::abs(expect);
      worst = std::max(worst, rel);
      c.expect(rel < 0.05, "cov(" + std::to_string(i) + "," + std::to_string(j) + ") rel " + fmt(rel));
    }
  }
  const auto a = sample_logits(m, 25, 99);
  const auto b = sample_logits(m, 25, 99);
  bool same = true;
  for (std::size_t s = 0; s < a.size(); ++s)
    same = same && std::memcmp(a[s].storage().data(), b[s].storage().data(), a[s].size() * sizeof(double)) == 0;
  c.expect(same, "seeded sampling differs between runs");
  return c.done("max rel cov err " + fmt(worst) + " over 200000 draws, seeded runs bit-identical");
}

Outcome entropy_bounds() {
  Checker c;
  std::mt19937_64 rng(4242);
  std::uniform_int_distribution<int> n_samples(1, 12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double ln2 = std::log(2.0);
  double worst = 0.0;
  for (int set = 0; set < 1000; ++set) {
    const int s = n_samples(rng);
    std::vector<ProbMap> members;
    for (int k = 0; k < s; ++k) {
      ProbMap p({3, 3, 2}, {}, 0.0);
      for (auto& v : p.storage()) {
        const double r = u(rng);
        v = r < 0.05 ? 0.0 : r > 0.95 ? 1.0 : u(rng);
      }
      members.push_back(p);
    }
    const SampleSet ss(members);
    const auto h = predictive_entropy(ss);
    const auto mean = ss.mean();
    for (std::size_t i = 0; i < h.size(); ++i) {
      c.expect(h[i] >= 0.0 && h[i] <= ln2 + 1e-9, "entropy out of range " + fmt(h[i], 17));
      const double ref = oracle::binary_entropy(mean[i]);
      worst = std::max(worst, std::abs(h[i] - ref));
      c.expect(close(h[i], ref), "entropy-of-mean mismatch");
    }
  }
  ProbMap lo({2, 1, 1}, {}, 0.25), hi({2, 1, 1}, {}, 0.75);
  const auto half = predictive_entropy(SampleSet({lo, hi}));
  for (double v : half.storage()) c.expect(v == ln2, "entropy at p=0.5 is " + fmt(v, 17));
  c.expect(predictive_entropy(ProbMap({1, 1, 1}, {}, 0.5))[0] == ln2, "entropy of 0.5 map");
  return c.done("1000 sets in [0, ln 2], max deviation from H(mean) " + fmt(worst));
}

Outcome metric_oracles() {
  Checker c;
  std::mt19937_64 rng(5150);
  std::uniform_real_distribution<double> tau_pick(0.0, std::log(2.0));
  std::uniform_int_distribution<int> s_pick(1, 4), conn_pick(0, 2);
  const Dims d{6, 6, 6};
  for (int trial = 0; trial < 200; ++trial) {
    const double density = 0.1 + 0.4 * (trial % 5) / 4.0;
    const Mask gt = oracle::random_mask(d, density, rng);
    const Mask pred = oracle::random_mask(d, density, rng);
    const auto u = oracle::random_field(d, 0.0, std::log(2.0), rng);
    const double tau = tau_pick(rng);
    const int conn = std::array<int, 3>{6, 18, 26}[static_cast<std::size_t>(conn_pick(rng))];
    const auto cn = connectivity_from_int(conn);
    const std::string tag = " (trial " + std::to_string(trial) + ")";

    c.expect(dice(pred, gt) == oracle::dice(pred, gt), "dice" + tag);
    if (oracle::count(gt)) c.expect(close(avd_percent(pred, gt), oracle::avd(pred, gt)), "avd" + tag);
    const auto f = component_f1(pred, gt, cn);
    const auto fc = oracle::component_counts(pred, gt, conn);
    c.expect(f.tp == fc.tp && f.fn == fc.fn && f.fp == fc.fp, "component counts" + tag);
    const double f1 = fc.tp + fc.fp + fc.fn == 0 ? 1.0 : 2.0 * fc.tp / (2.0 * fc.tp + fc.fp + fc.fn);
    c.expect(close(f.f1, f1), "f1" + tag);

    std::vector<Mask> samples;
    for (int k = s_pick(rng); k > 0; --k) samples.push_back(oracle::random_mask(d, density, rng));
    std::vector<Mask> refs{gt};
    if (trial % 2) refs.push_back(pred);
    c.expect(close(ged(samples, refs), oracle::ged(samples, refs)), "ged" + tag);

    const Mask e = error_map(pred, gt);
    if (oracle::count(e)) c.expect(close(sueo(u, e), oracle::sueo(u, e)), "sueo" + tag);
    c.expect(ueo(u, e, tau) == oracle::ueo(u, e, tau), "ueo" + tag);

    const auto ps = patch_metrics(pred, gt, u, tau);
    const auto pr = oracle::patches(pred, gt, u, tau);
    c.expect(ps.n_ac == pr.ac && ps.n_au == pr.au && ps.n_ci == pr.ci && ps.n_ui == pr.ui, "patch counts" + tag);
    const double total = static_cast<double>(pr.ac + pr.au + pr.ci + pr.ui);
    c.expect(close(*ps.pavpu, (pr.ac + pr.ui) / total), "pavpu" + tag);
    if (pr.ac + pr.ci) c.expect(close(*ps.p_acc_given_cert, pr.ac / static_cast<double>(pr.ac + pr.ci)), "p(acc|cert)" + tag);
    if (pr.ci + pr.ui) c.expect(close(*ps.p_uncert_given_inacc, pr.ui / static_cast<double>(pr.ci + pr.ui)), "p(unc|inacc)" + tag);

    const auto lc = lesion_coverage(pred, gt, u, tau, cn);
    const auto lr = oracle::lesion_coverage(pred, gt, u, tau, conn);
    c.expect(lc.lesions.size() == lr.components && lc.unsegmented == lr.unsegmented, "lesion counts" + tag);
    c.expect(lc.coverage.has_value() == lr.coverage.has_value() && (!lr.coverage || close(*lc.coverage, *lr.coverage)),
             "coverage" + tag);
    c.expect(lc.undetected_strict == lr.undetected_strict, "strict rule" + tag);
    c.expect(lc.undetected_relaxed == lr.undetected_relaxed, "relaxed rule" + tag);
    c.expect(lc.undetected_strict_mean_size == lr.strict_mean_size, "strict size" + tag);
    c.expect(lc.undetected_relaxed_mean_size == lr.relaxed_mean_size, "relaxed size" + tag);
  }
  return c.done("200 random 6^3 triples agree with brute force");
}

Outcome monotone_sweeps() {
  Checker c;
  std::mt19937_64 rng(8080);
  const auto taus = tau_grid(50);
  c.expect(taus.size() == 50, "tau grid size");
  std::size_t rises = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Dims d{12, 12, 12};
    const Mask gt = oracle::random_mask(d, 0.12, rng);
    Mask pred = gt;
    std::bernoulli_distribution flip(0.1), drop(0.4);
    for (auto& v : pred.storage()) v = v ? (drop(rng) ? 0 : 1) : (flip(rng) ? 1 : 0);
    const auto u = oracle::random_field(d, 0.0, std::log(2.0), rng);
    const auto rows = uq_sweep(pred, gt, u, taus);
    double unc = 2.0, cov = 2.0, und = -1.0, und_r = -1.0;
    std::size_t total = rows.front().patches.total();
    for (const auto& r : rows) {
      c.expect(r.patches.total() == total, "patch total changes with tau");
      if (r.patches.p_uncert_given_inacc) {
        c.expect(*r.patches.p_uncert_given_inacc <= unc, "p(uncert|inacc) rises at tau " + fmt(r.tau));
        unc = *r.patches.p_uncert_given_inacc;
      }
      if (r.lesions.coverage) {
        c.expect(*r.lesions.coverage <= cov, "coverage rises at tau " + fmt(r.tau));
        cov = *r.lesions.coverage;
      }
      if (r.lesions.undetected_strict) {
        c.expect(*r.lesions.undetected_strict >= und, "strict undetected falls");
        c.expect(*r.lesions.undetected_relaxed >= und_r, "relaxed undetected falls");
        if (*r.lesions.undetected_relaxed > und_r && und_r >= 0) ++rises;
        und = *r.lesions.undetected_strict;
        und_r = *r.lesions.undetected_relaxed;
      }
    }
  }
  c.expect(rises > 0, "undetected fraction never changes");
  return c.done("40 instances x 50 thresholds monotone");
}

Outcome feature_oracle() {
  Checker c;
  // ventricles fill the x = 0 face, so the distance to them is x mm
  const Dims d{20, 20, 20};
  Mask brain(d, {}, std::uint8_t{1});
  Mask vent(d, {}, std::uint8_t{0});
  for (std::size_t z = 0; z < 20; ++z)
    for (std::size_t y = 0; y < 20; ++y) vent.at(0, y, z) = 1;
  const auto rings = ring_partition(vent, brain);
  const auto dist = oracle::distance(vent);
  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < brain.size(); ++i) {
    const double v = dist[i];
    const int expect = v < 5 ? 0 : v < 10 ? 1 : v < 15 ? 2 : 3;
    mismatched += rings.labels[i] != expect ? 1 : 0;
  }
  c.expect(mismatched == 0, std::to_string(mismatched) + " slab voxels in the wrong ring");

  ProbMap seg(d, {}, 0.0);
  UncertaintyMap uq(d, {}, 0.0);
  for (std::size_t z = 2; z < 4; ++z)
    for (std::size_t y = 2; y < 4; ++y)
      for (std::size_t x = 2; x < 4; ++x) {
        seg.at(x, y, z) = 0.5;    // ring 0 cube
        uq.at(x, y, z) = 0.375;
      }
  for (std::size_t x = 8; x < 12; ++x) seg.at(x, 10, 10) = 1.0;   // spans rings 1 and 2
  for (std::size_t x = 11; x < 14; ++x) seg.at(x, 3, 3) = 0.75;   // ring 2 line
  seg.at(16, 5, 5) = 0.25;                                         // ring 3 singles
  seg.at(18, 15, 15) = 0.25;
  seg.at(17, 0, 0) = 0.125;                                        // below t
  const auto fv = extract_features(seg, uq, nullptr, rings, 0.2, Connectivity::Corner);

  const double ring_vol = 2000.0;
  const std::vector<std::pair<std::string, double>> expected{
      {"seg_r0_volume", 4.0},          {"seg_r0_cc_density", 1 / ring_vol}, {"seg_r0_cc_std_density", 0.0},
      {"seg_r1_volume", 2.0},          {"seg_r1_cc_density", 1 / ring_vol}, {"seg_r1_cc_std_density", 0.0},
      {"seg_r2_volume", 4.25},         {"seg_r2_cc_density", 2 / ring_vol}, {"seg_r2_cc_std_density", 0.5 / ring_vol},
      {"seg_r3_volume", 0.5},          {"seg_r3_cc_density", 2 / ring_vol}, {"seg_r3_cc_std_density", 0.0},
      {"seg_bridge12_lcc", 0.0},       {"seg_bridge23_lcc", 4.0},           {"seg_global_volume", 10.75},
      {"uq_r0_volume", 3.0},           {"uq_r0_cc_density", 1 / ring_vol},  {"uq_r0_cc_std_density", 0.0},
      {"uq_r1_volume", 0.0},           {"uq_r1_cc_density", 0.0},           {"uq_r1_cc_std_density", 0.0},
      {"uq_r2_volume", 0.0},           {"uq_r2_cc_density", 0.0},           {"uq_r2_cc_std_density", 0.0},
      {"uq_r3_volume", 0.0},           {"uq_r3_cc_density", 0.0},           {"uq_r3_cc_std_density", 0.0},
      {"uq_bridge12_lcc", 0.0},        {"uq_bridge23_lcc", 0.0},            {"uq_global_volume", 3.0}};
  c.expect(fv.features.size() == expected.size(), "feature count " + std::to_string(fv.features.size()));
  for (const auto& [name, value] : expected) {
    const auto got = fv.find(name);
    c.expect(got.has_value(), "missing " + name);
    if (got) c.expect(*got == value, name + " = " + fmt(*got, 17) + ", expected " + fmt(value, 17));
  }

  // ellipsoidal anatomy against exhaustive distances
  synth::SynthSpec spec;
  spec.dims = {20, 20, 20};
  spec.spacing = {1.0, 1.0, 1.0};
  spec.brain_radii_mm = {9.5, 9.0, 9.5};
  spec.ventricle_radii_mm = {2.5, 3.5, 2.0};
  const Mask b = synth::brain_mask(spec), v = synth::ventricle_mask(spec);
  const auto er = ring_partition(v, b);
  const auto ed = oracle::distance(v);
  mismatched = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    int expect = kOutsideBrain;
    if (b[i]) expect = ed[i] < 5 ? 0 : ed[i] < 10 ? 1 : ed[i] < 15 ? 2 : 3;
    mismatched += er.labels[i] != expect ? 1 : 0;
  }
  c.expect(mismatched == 0, std::to_string(mismatched) + " ellipsoid voxels in the wrong ring");
  return c.done("30 fixture features exact, partitions match brute force");
}

double mean_bal_acc(const EvalSummary& s) { return s.balanced_accuracy ? s.balanced_accuracy->mean : 0.0; }

Outcome classifier_sanity() {
  const auto t0 = Clock::now();
  const fs::path root = fs::temp_directory_path() / "seguq_acceptance_cohort";
  fs::remove_all(root);
  fs::create_directories(root);

  synth::CohortSpec cs;
  cs.subjects = 120;
  cs.seed = 3;
  cs.base.noise = 0.5;
  report::RunConfig cfg;
  cfg.seed = 17;
  cfg.target = "deep";
  for (const auto& s : synth::generate_cohort(cs)) {
    const fs::path dir = root / s.id;
    fs::create_directories(dir);
    vgf::write_mask(dir / "brain.vgf", s.data.brain);
    vgf::write_mask(dir / "ventricles.vgf", s.data.ventricles);
    vgf::write_mask(dir / "gt.vgf", s.data.lesions);
    report::SubjectConfig sc;
    sc.id = s.id;
    sc.logits = report::write_logit_model(dir / "logits", s.data.logits);
    sc.gt = dir / "gt.vgf";
    sc.brain = dir / "brain.vgf";
    sc.ventricles = dir / "ventricles.vgf";
    sc.fazekas_deep = s.data.fazekas.deep;
    sc.fazekas_pv = s.data.fazekas.pv;
    cfg.subjects.push_back(sc);
  }

  Checker c;
  c.expect(cfg.feature_threshold == 0.2 && cfg.k == 18 && cfg.reg == 10.0, "non-default pipeline settings");
  const FeatureTable table = report::cohort_features(cfg, cfg.feature_threshold);
  c.expect(table.size() == 120, "feature rows " + std::to_string(table.size()));

  PipelineConfig pc;
  pc.k = cfg.k;
  pc.fit.reg = cfg.reg;
  pc.seed = derive_seed(cfg.seed, {0xC1A55});
  pc.threads = 0;
  Split all;
  for (std::size_t i = 0; i < table.size(); ++i) all.train.push_back(i), all.test.push_back(i);
  const auto in_sample = run_split(table, "deep", all, pc);
  const double in_bal = in_sample.metrics.balanced_accuracy.value_or(0.0);
  c.expect(in_bal >= 0.95, "in-sample balanced accuracy " + fmt(in_bal));

  pc.n_boot = 30;
  const auto full = bootstrap_eval(table, "deep", pc);
  PipelineConfig base = pc;
  base.k = 1;
  const auto volume_only = bootstrap_eval(table.select_features({"seg_global_volume"}), "deep", base);
  const double f = mean_bal_acc(full), v = mean_bal_acc(volume_only);
  c.expect(v < f, "volume-only " + fmt(v) + " not below full " + fmt(f));
  const double elapsed = seconds_since(t0);
  c.expect(elapsed < 120.0, "took " + fmt(elapsed) + " s");
  fs::remove_all(root);
  return c.done("in-sample bal acc " + fmt(in_bal) + "; 30 splits: full " + fmt(f) + " vs volume-only " + fmt(v) +
                "; " + fmt(elapsed) + " s");
}

Outcome configuration_fidelity() {
  Checker c;
  const report::RunConfig d;
  c.expect(d.samples == 10, "samples");
  c.expect(d.threshold == 0.5, "binarization threshold");
  c.expect(d.patch_size == 4 && d.patch_accuracy == 0.8, "patch settings");
  c.expect(d.ring_edges_mm == std::array<double, 3>{5.0, 10.0, 15.0}, "ring edges");
  c.expect(d.feature_threshold == 0.2 && d.k == 18, "feature threshold / k");
  c.expect(d.qc_dice_cutoff == 0.57 && d.qc_k == 9, "qc settings");
  c.expect(d.n_boot == 1000 && d.train_fraction == 0.75, "bootstrap settings");
  c.expect(d.reg == 10.0, "regularisation");
  c.expect(defaults::kEvidentialKlWeight == 0.05, "evidential KL weight");

  std::ifstream is(SEGUQ_GOLDEN_CONFIG);
  std::stringstream golden;
  golden << is.rdbuf();
  c.expect(is.good() || is.eof(), "golden file unreadable");
  const std::string echo = report::dump(report::config_echo(d));
  c.expect(echo == golden.str(), "config echo differs from golden file");
  // the echo must also carry the values themselves
  const auto j = report::Json::parse(echo);
  c.expect(j["sampling"]["samples"] == 10, "echo samples");
  c.expect(j["uq"]["patch_size"] == 4, "echo patch");
  c.expect(j["classify"]["n_boot"] == 1000, "echo n_boot");
  c.expect(j["losses"]["evidential_kl_weight"] == 0.05, "echo KL weight");
  return c.done("defaults and config echo match the golden file");
}

Outcome vgf_round_trip() {
  Checker c;
  const std::vector<float> special{0.0f,
                                   -0.0f,
                                   1.0f,
                                   -1.0f,
                                   std::numeric_limits<float>::max(),
                                   std::numeric_limits<float>::lowest(),
                                   std::numeric_limits<float>::min(),
                                   -std::numeric_limits<float>::min(),
                                   3.14159265f,
                                   1e-30f,
                                   -2.5e37f,
                                   0.1f};
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::uint32_t> bits(0, 0xffffffffu);
  std::vector<float> values = special;
  while (values.size() < 4 * 5 * 6) {
    const std::uint32_t b = bits(rng);
    float f;
    std::memcpy(&f, &b, sizeof f);
    if (std::isfinite(f) && (f == 0.0f || std::fpclassify(f) == FP_NORMAL)) values.push_back(f);
  }
  vgf::Volume v{{4, 5, 6}, {0.9, 1.1, 2.5}, values};
  std::stringstream ss;
  vgf::write(ss, v);
  const auto back = vgf::read(ss);
  const auto& got = std::get<std::vector<float>>(back.data);
  c.expect(got.size() == values.size() &&
               std::memcmp(got.data(), values.data(), values.size() * sizeof(float)) == 0,
           "f32 payload differs");
  c.expect(back.dims.nx == 4 && back.dims.ny == 5 && back.dims.nz == 6, "dims differ");
  c.expect(back.spacing.sx == 0.9 && back.spacing.sy == 1.1 && back.spacing.sz == 2.5, "spacing differs");

  std::vector<std::uint8_t> bytes(256);
  for (std::size_t i = 0; i < 256; ++i) bytes[i] = static_cast<std::uint8_t>(i);
  const vgf::Volume u{{16, 4, 4}, {}, bytes};
  const fs::path p = fs::temp_directory_path() / "seguq_acceptance_u8.vgf";
  vgf::write(p, u);
  const auto ub = vgf::read(p);
  c.expect(std::get<std::vector<std::uint8_t>>(ub.data) == bytes, "u8 payload differs");
  fs::remove(p);
  return c.done("f32 and u8 payloads bit-identical");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"loss gradients vs finite differences", loss_gradients},
      {"Dirichlet identity", dirichlet_identity},
      {"SSN sampling fidelity", ssn_sampling},
      {"entropy bounds", entropy_bounds},
      {"metric oracle equivalence", metric_oracles},
      {"monotonicity sweeps", monotone_sweeps},
      {"feature oracle", feature_oracle},
      {"classifier sanity", classifier_sanity},
      {"configuration fidelity", configuration_fidelity},
      {"VGF round trip", vgf_round_trip},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
