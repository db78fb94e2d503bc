#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "seguq/report.hpp"
#include "seguq/synth.hpp"
#include "seguq/vgf.hpp"

using namespace seguq;
using namespace seguq::report;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("seguq_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Five synthetic subjects on disk plus a config pointing at them.
RunConfig cohort_config(const fs::path& root) {
  synth::CohortSpec cs;
  cs.base.noise = 0.8;
  cs.base.rank = 2;
  cs.subjects = 5;
  cs.seed = 77;
  RunConfig cfg;
  cfg.seed = 3;
  cfg.samples = 4;
  cfg.n_boot = 2;
  cfg.k = 4;
  cfg.tau_steps = 6;
  cfg.threads = 2;
  cfg.output_dir = root / "out";
  for (const auto& s : synth::generate_cohort(cs)) {
    const fs::path dir = root / s.id;
    fs::create_directories(dir);
    vgf::write_mask(dir / "brain.vgf", s.data.brain);
    vgf::write_mask(dir / "ventricles.vgf", s.data.ventricles);
    vgf::write_mask(dir / "gt.vgf", s.data.lesions);
    SubjectConfig sc;
    sc.id = s.id;
    sc.logits = write_logit_model(dir / "logits", s.data.logits);
    sc.gt = dir / "gt.vgf";
    sc.brain = dir / "brain.vgf";
    sc.ventricles = dir / "ventricles.vgf";
    sc.fazekas_deep = s.data.fazekas.deep;
    sc.fazekas_pv = s.data.fazekas.pv;
    cfg.subjects.push_back(sc);
  }
  return cfg;
}

}  // namespace

TEST_CASE("empty cohort") {
  const auto root = scratch("empty");
  RunConfig cfg;
  cfg.output_dir = root / "out";
  const auto r = run_pipeline(cfg);
  CHECK(r.exit_code == 0);
  CHECK(r.report["subjects"].empty());
  CHECK(fs::exists(root / "out" / "report.json"));
}

TEST_CASE("five-subject cohort end to end") {
  const auto root = scratch("cohort");
  const RunConfig cfg = cohort_config(root);
  const auto r = run_pipeline(cfg);
  CHECK(r.exit_code == 0);
  const fs::path out = cfg.output_dir;
  for (const char* f : {"report.json", "features.csv", "confusion.csv"}) CHECK(fs::exists(out / f));
  for (const auto& s : cfg.subjects)
    for (const char* f : {"mean.vgf", "uncertainty.vgf", "uq_sweep.csv"}) CHECK(fs::exists(out / "subjects" / s.id / f));

  const auto doc = Json::parse(slurp(out / "report.json"));
  CHECK(doc["tool"] == "seguq");
  REQUIRE(doc["subjects"].size() == 5);
  for (const auto& s : doc["subjects"]) {
    CHECK(s["status"] == "ok");
    std::vector<std::string> keys;
    for (const auto& [k, v] : s["metrics"].items()) {
      keys.push_back(k);
      CHECK(v.contains("value"));
      CHECK(v.contains("reason"));
      CHECK(v["value"].is_null() != v["reason"].is_null());
    }
    CHECK(keys == metric_names());
  }
  for (const auto& name : metric_names()) CHECK(doc["aggregate"].contains(name));
  CHECK(doc.contains("classification"));

  // rerun into the same directory, then with another worker count
  const std::string first = slurp(out / "report.json");
  const std::string features = slurp(out / "features.csv");
  run_pipeline(cfg);
  CHECK(slurp(out / "report.json") == first);
  RunConfig serial = cfg;
  serial.threads = 1;
  run_pipeline(serial);
  CHECK(slurp(out / "report.json").size() == first.size());
  CHECK(slurp(out / "features.csv") == features);
}

TEST_CASE("subject failures are isolated") {
  const auto root = scratch("failure");
  RunConfig cfg = cohort_config(root);
  cfg.stages = {Stage::Sample, Stage::Entropy, Stage::Eval};
  cfg.subjects[1].gt = root / "missing.vgf";
  const auto r = run_pipeline(cfg);
  CHECK(r.exit_code == 1);
  const auto& subjects = r.report["subjects"];
  CHECK(subjects[1]["status"] != "ok");
  CHECK(!subjects[1]["errors"].empty());
  CHECK(subjects[0]["status"] == "ok");
  CHECK(subjects[0]["metrics"]["dice"]["value"].is_number());
  CHECK(subjects[0]["metrics"]["sueo"]["reason"] == "stage_disabled");
  // schema stays the same
  std::vector<std::string> keys;
  for (const auto& [k, v] : subjects[1]["metrics"].items()) keys.push_back(k);
  CHECK(keys == metric_names());
}

TEST_CASE("config echo round trip") {
  RunConfig c;
  c.seed = 12345678901234ULL;
  c.tau = 0.123456789012345;
  c.target = "pv";
  c.stages = {Stage::Sample, Stage::UqEval};
  c.patch_mode = PatchMode::Sliding;
  const Json e = config_echo(c);
  const auto back = config_from_json(dump(e));
  CHECK(dump(config_echo(back)) == dump(e));
  CHECK(back.seed == c.seed);
  CHECK(back.tau == c.tau);
  CHECK_THROWS_AS(config_from_json("{\"bogus\": 1}"), Error);
  CHECK_THROWS_AS(config_from_json("{\"segmentation\": {\"connectivity\": 8}}"), Error);
  CHECK(stage_from_string("uq-eval") == Stage::UqEval);
  CHECK(to_string(Stage::UqEval) == "uq-eval");
  CHECK_THROWS_AS(stage_from_string("nope"), Error);
}

TEST_CASE("logit model manifest round trip") {
  const auto root = scratch("logits");
  LogitModel m;
  m.dims = {3, 2, 2};
  m.spacing = {1.0, 0.5, 2.0};
  m.classes = 2;
  m.rank = 2;
  const std::size_t v = 12;
  for (std::size_t i = 0; i < v * 2; ++i) {
    m.mean.push_back(0.25 * static_cast<double>(i) - 3.0);
    m.diag.push_back(0.125 * static_cast<double>(i % 5));
  }
  for (std::size_t i = 0; i < v * 2 * 2; ++i) m.factor.push_back(0.5 * static_cast<double>(i % 7) - 1.0);
  const auto manifest = write_logit_model(root, m);
  const auto back = read_logit_model(manifest);
  CHECK(back.dims.nz == 2);
  CHECK(back.spacing.sy == 0.5);
  CHECK(back.rank == 2);
  CHECK(back.mean == m.mean);
  CHECK(back.diag == m.diag);
  CHECK(back.factor == m.factor);
}

TEST_CASE("loss check passes") {
  const auto rows = loss_check(11);
  CHECK(rows.size() == 6);
  for (const auto& r : rows) {
    CHECK(r.pass);
    CHECK(r.points == 10);
  }
}
