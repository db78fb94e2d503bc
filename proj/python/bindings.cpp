// Python bindings. Volumes cross the boundary as numpy arrays of shape
// (nz, ny, nx), which matches the x-fastest storage order.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "seguq/classify.hpp"
#include "seguq/grid.hpp"
#include "seguq/losses.hpp"
#include "seguq/report.hpp"
#include "seguq/ring_features.hpp"
#include "seguq/seg_metrics.hpp"
#include "seguq/special.hpp"
#include "seguq/stochastic.hpp"
#include "seguq/synth.hpp"
#include "seguq/uq_metrics.hpp"
#include "seguq/vgf.hpp"

namespace py = pybind11;
using namespace seguq;

namespace {

using Spacing3 = std::array<double, 3>;  // (sx, sy, sz)

template <typename T>
using In = py::array_t<T, py::array::c_style | py::array::forcecast>;

Dims dims_of(const py::buffer_info& b) {
  if (b.ndim != 3) throw Error(ErrorCode::DimensionMismatch, "expected a 3D array of shape (nz, ny, nx)");
  return {static_cast<std::size_t>(b.shape[2]), static_cast<std::size_t>(b.shape[1]),
          static_cast<std::size_t>(b.shape[0])};
}

Spacing spacing_of(const Spacing3& s) { return {s[0], s[1], s[2]}; }

template <typename T>
Grid<T> to_grid(const In<T>& a, const Spacing3& s) {
  const auto b = a.request();
  const auto* p = static_cast<const T*>(b.ptr);
  return Grid<T>(dims_of(b), spacing_of(s), std::vector<T>(p, p + b.size));
}

Mask to_mask(const py::array& a, const Spacing3& s) {
  const In<double> d(a);
  const auto b = d.request();
  const auto* p = static_cast<const double*>(b.ptr);
  std::vector<std::uint8_t> v(static_cast<std::size_t>(b.size));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = p[i] != 0.0 ? 1 : 0;
  return Mask(dims_of(b), spacing_of(s), std::move(v));
}

template <typename T>
py::array_t<T> to_array(const Grid<T>& g) {
  const auto& d = g.dims();
  py::array_t<T> out({d.nz, d.ny, d.nx});
  std::copy(g.storage().begin(), g.storage().end(), out.mutable_data());
  return out;
}

SampleSet to_samples(const In<double>& stack, const Spacing3& s) {
  const auto b = stack.request();
  if (b.ndim != 4) throw Error(ErrorCode::DimensionMismatch, "samples must have shape (S, nz, ny, nx)");
  const Dims d{static_cast<std::size_t>(b.shape[3]), static_cast<std::size_t>(b.shape[2]),
               static_cast<std::size_t>(b.shape[1])};
  const auto* p = static_cast<const double*>(b.ptr);
  std::vector<ProbMap> members;
  for (py::ssize_t k = 0; k < b.shape[0]; ++k) {
    members.emplace_back(d, spacing_of(s), std::vector<double>(p + k * d.size(), p + (k + 1) * d.size()));
  }
  return SampleSet(std::move(members));
}

py::array_t<double> from_samples(const SampleSet& set) {
  const auto& d = set.dims();
  py::array_t<double> out({set.size(), d.nz, d.ny, d.nx});
  double* w = out.mutable_data();
  for (const auto& m : set.members()) w = std::copy(m.storage().begin(), m.storage().end(), w);
  return out;
}

Array2 to_array2(const In<double>& a) {
  const auto b = a.request();
  if (b.ndim != 2) throw Error(ErrorCode::DimensionMismatch, "expected a 2D array (voxels, classes)");
  const auto* p = static_cast<const double*>(b.ptr);
  return Array2(static_cast<std::size_t>(b.shape[0]), static_cast<std::size_t>(b.shape[1]),
                std::vector<double>(p, p + b.size));
}

py::tuple loss_result(const LossValue& l, const std::vector<py::ssize_t>& shape) {
  if (!l.has_gradient()) return py::make_tuple(l.value, py::none());
  py::array_t<double> g(shape);
  std::copy(l.gradient.begin(), l.gradient.end(), g.mutable_data());
  return py::make_tuple(l.value, g);
}

py::object opt(const std::optional<double>& v) { return v ? py::object(py::float_(*v)) : py::object(py::none()); }

py::dict patch_dict(const PatchStats& s) {
  py::dict d;
  d["n_ac"] = s.n_ac;
  d["n_au"] = s.n_au;
  d["n_ci"] = s.n_ci;
  d["n_ui"] = s.n_ui;
  d["p_acc_given_cert"] = opt(s.p_acc_given_cert);
  d["p_uncert_given_inacc"] = opt(s.p_uncert_given_inacc);
  d["pavpu"] = opt(s.pavpu);
  return d;
}

py::dict coverage_dict(const LesionCoverage& c) {
  py::dict d;
  d["lesions"] = c.lesions.size();
  d["unsegmented"] = c.unsegmented;
  d["coverage"] = opt(c.coverage);
  d["undetected_strict"] = opt(c.undetected_strict);
  d["undetected_relaxed"] = opt(c.undetected_relaxed);
  d["undetected_strict_mean_size"] = opt(c.undetected_strict_mean_size);
  d["undetected_relaxed_mean_size"] = opt(c.undetected_relaxed_mean_size);
  return d;
}

Dataset to_dataset(const In<double>& x, const std::vector<int>& y, std::vector<std::string> names) {
  const auto b = x.request();
  if (b.ndim != 2) throw Error(ErrorCode::DimensionMismatch, "features must be a 2D array (rows, features)");
  const auto rows = static_cast<std::size_t>(b.shape[0]), cols = static_cast<std::size_t>(b.shape[1]);
  if (y.size() != rows) throw Error(ErrorCode::DimensionMismatch, "one label per row required");
  if (names.empty())
    for (std::size_t j = 0; j < cols; ++j) names.push_back("f" + std::to_string(j));
  if (names.size() != cols) throw Error(ErrorCode::DimensionMismatch, "one name per feature column required");
  Dataset d{names, {}, y};
  const auto* p = static_cast<const double*>(b.ptr);
  for (std::size_t r = 0; r < rows; ++r) d.rows.emplace_back(p + r * cols, p + (r + 1) * cols);
  return d;
}

}  // namespace

PYBIND11_MODULE(_seguq, m) {
  m.doc() = "Evaluation toolkit for uncertainty-aware lesion segmentation";
  m.attr("__version__") = std::string(report::tool_version());
  py::register_exception<Error>(m, "SeguqError", PyExc_ValueError);

  const Spacing3 unit{1.0, 1.0, 1.0};

  // grids
  m.def("connected_components", [=](const py::array& mask, int connectivity) {
    const auto cc = connected_components(to_mask(mask, unit), connectivity_from_int(connectivity));
    return py::make_tuple(to_array(cc.labels), cc.count());
  }, py::arg("mask"), py::arg("connectivity") = defaults::kConnectivity);
  m.def("distance_field", [](const py::array& mask, const Spacing3& spacing) {
    return to_array(distance_field(to_mask(mask, spacing)));
  }, py::arg("mask"), py::arg("spacing") = unit);

  // stochastic inference
  m.def("sample_logits", [=](const In<double>& mean, const In<double>& factor, const In<double>& diag,
                             std::size_t n, std::uint64_t seed, const Spacing3& spacing) {
    const auto mb = mean.request();
    if (mb.ndim != 4) throw Error(ErrorCode::DimensionMismatch, "mean must have shape (nz, ny, nx, C)");
    LogitModel model;
    model.dims = {static_cast<std::size_t>(mb.shape[2]), static_cast<std::size_t>(mb.shape[1]),
                  static_cast<std::size_t>(mb.shape[0])};
    model.spacing = spacing_of(spacing);
    model.classes = static_cast<std::size_t>(mb.shape[3]);
    const auto fb = factor.request();
    model.rank = fb.ndim == 5 ? static_cast<std::size_t>(fb.shape[4]) : 0;
    model.mean.assign(mean.data(), mean.data() + mean.size());
    model.factor.assign(factor.data(), factor.data() + factor.size());
    model.diag.assign(diag.data(), diag.data() + diag.size());
    return from_samples(sample_logits(model, n, seed));
  }, py::arg("mean"), py::arg("factor"), py::arg("diag"), py::arg("n") = defaults::kSamples, py::arg("seed") = 0,
     py::arg("spacing") = unit);
  m.def("dirichlet_probs", [](const In<double>& evidence) {
    const auto b = evidence.request();
    if (b.ndim != 4) throw Error(ErrorCode::DimensionMismatch, "evidence must have shape (nz, ny, nx, C)");
    DirichletField f{{static_cast<std::size_t>(b.shape[2]), static_cast<std::size_t>(b.shape[1]),
                      static_cast<std::size_t>(b.shape[0])},
                     {},
                     static_cast<std::size_t>(b.shape[3]),
                     std::vector<double>(evidence.data(), evidence.data() + evidence.size())};
    return to_array(dirichlet_probs(f));
  }, py::arg("evidence"));
  m.def("predictive_entropy", [=](const In<double>& p) {
    if (p.ndim() == 4) return to_array(predictive_entropy(to_samples(p, unit)));
    return to_array(predictive_entropy(to_grid<double>(p, unit)));
  }, py::arg("probabilities"), "Entropy of the mean of (S, nz, ny, nx) samples, or of one (nz, ny, nx) map.");
  m.def("binary_entropy", &binary_entropy);

  // segmentation metrics
  m.def("dice", [=](const py::array& a, const py::array& b) { return dice(to_mask(a, unit), to_mask(b, unit)); });
  m.def("iou", [=](const py::array& a, const py::array& b) { return iou(to_mask(a, unit), to_mask(b, unit)); });
  m.def("avd_percent", [](const py::array& pred, const py::array& gt, const Spacing3& spacing) {
    return avd_percent(to_mask(pred, spacing), to_mask(gt, spacing));
  }, py::arg("pred"), py::arg("gt"), py::arg("spacing") = unit);
  m.def("component_f1", [=](const py::array& pred, const py::array& gt, int connectivity) {
    const auto s = component_f1(to_mask(pred, unit), to_mask(gt, unit), connectivity_from_int(connectivity));
    py::dict d;
    d["tp"] = s.tp;
    d["fn"] = s.fn;
    d["fp"] = s.fp;
    d["precision"] = s.precision;
    d["recall"] = s.recall;
    d["f1"] = s.f1;
    return d;
  }, py::arg("pred"), py::arg("gt"), py::arg("connectivity") = defaults::kConnectivity);
  m.def("ged", [=](const std::vector<py::array>& predicted, const std::vector<py::array>& reference) {
    std::vector<Mask> p, r;
    for (const auto& a : predicted) p.push_back(to_mask(a, unit));
    for (const auto& a : reference) r.push_back(to_mask(a, unit));
    return ged(p, r);
  }, py::arg("predicted"), py::arg("reference"));
  m.def("aggregate", [](const std::vector<std::vector<double>>& values) {
    const auto a = aggregate(values);
    return py::make_tuple(a.mean, opt(a.std_over_runs), opt(a.std_over_subjects));
  }, py::arg("values"), "Returns (mean, std over runs, std over subjects) of a runs x subjects matrix.");

  // uncertainty metrics
  m.def("sueo", [=](const In<double>& u, const py::array& errors) {
    return sueo(to_grid<double>(u, unit), to_mask(errors, unit));
  }, py::arg("uncertainty"), py::arg("errors"));
  m.def("ueo", [=](const In<double>& u, const py::array& errors, double tau) {
    return ueo(to_grid<double>(u, unit), to_mask(errors, unit), tau);
  }, py::arg("uncertainty"), py::arg("errors"), py::arg("tau"));
  m.def("error_map", [=](const py::array& pred, const py::array& gt) {
    return to_array(error_map(to_mask(pred, unit), to_mask(gt, unit)));
  });
  m.def("patch_metrics", [=](const py::array& pred, const py::array& gt, const In<double>& u, double tau,
                             std::size_t patch, double accuracy, bool sliding) {
    return patch_dict(patch_metrics(to_mask(pred, unit), to_mask(gt, unit), to_grid<double>(u, unit), tau, patch,
                                    accuracy, sliding ? PatchMode::Sliding : PatchMode::Tiling));
  }, py::arg("pred"), py::arg("gt"), py::arg("uncertainty"), py::arg("tau"),
     py::arg("patch") = defaults::kPatchSize, py::arg("accuracy") = defaults::kPatchAccuracy,
     py::arg("sliding") = false);
  m.def("lesion_coverage", [=](const py::array& pred, const py::array& gt, const In<double>& u, double tau,
                               int connectivity) {
    return coverage_dict(lesion_coverage(to_mask(pred, unit), to_mask(gt, unit), to_grid<double>(u, unit), tau,
                                         connectivity_from_int(connectivity)));
  }, py::arg("pred"), py::arg("gt"), py::arg("uncertainty"), py::arg("tau"),
     py::arg("connectivity") = defaults::kConnectivity);
  m.def("tau_grid", &tau_grid, py::arg("n"));

  // ring features
  m.def("ring_partition", [](const py::array& ventricles, const py::array& brain, const Spacing3& spacing,
                             const std::array<double, 3>& edges) {
    return to_array(ring_partition(to_mask(ventricles, spacing), to_mask(brain, spacing), edges).labels);
  }, py::arg("ventricles"), py::arg("brain"), py::arg("spacing") = unit,
     py::arg("edges_mm") = defaults::kRingEdgesMm);
  m.def("extract_features", [](const In<double>& seg, const In<double>& uq, const py::array& ventricles,
                               const py::array& brain, const Spacing3& spacing, double t,
                               std::optional<In<double>> samples, int connectivity) {
    const auto rings = ring_partition(to_mask(ventricles, spacing), to_mask(brain, spacing));
    std::optional<SampleSet> set;
    if (samples) set = to_samples(*samples, spacing);
    const auto fv = extract_features(to_grid<double>(seg, spacing), to_grid<double>(uq, spacing),
                                     set ? &*set : nullptr, rings, t, connectivity_from_int(connectivity));
    py::dict d;
    for (const auto& f : fv.features) d[py::str(f.name)] = f.value;
    return d;
  }, py::arg("seg"), py::arg("uq"), py::arg("ventricles"), py::arg("brain"), py::arg("spacing") = unit,
     py::arg("t") = defaults::kFeatureThreshold, py::arg("samples") = py::none(),
     py::arg("connectivity") = defaults::kConnectivity);
  m.def("percentile", &percentile, py::arg("values"), py::arg("q"));

  // losses; each returns (value, gradient or None)
  m.def("evid_xent", [](const In<double>& alpha, const In<double>& y, bool grad) {
    return loss_result(evid_xent(to_array2(alpha), to_array2(y), grad), {alpha.shape(0), alpha.shape(1)});
  }, py::arg("alpha"), py::arg("y"), py::arg("gradient") = false);
  m.def("evid_sdice", [](const In<double>& alpha, const In<double>& y, bool grad) {
    return loss_result(evid_sdice(to_array2(alpha), to_array2(y), grad), {alpha.shape(0), alpha.shape(1)});
  }, py::arg("alpha"), py::arg("y"), py::arg("gradient") = false);
  m.def("evid_kl", [](const In<double>& alpha, const In<double>& y, double weight, bool grad) {
    return loss_result(evid_kl(to_array2(alpha), to_array2(y), weight, grad), {alpha.shape(0), alpha.shape(1)});
  }, py::arg("alpha"), py::arg("y"), py::arg("weight") = defaults::kEvidentialKlWeight, py::arg("gradient") = false);
  m.def("hs_mc_loss", [](const In<double>& logits, const In<double>& y, bool grad) {
    const auto b = logits.request();
    if (b.ndim != 3) throw Error(ErrorCode::DimensionMismatch, "logits must have shape (S, voxels, classes)");
    std::vector<Array2> samples;
    const auto* p = static_cast<const double*>(b.ptr);
    const auto v = static_cast<std::size_t>(b.shape[1]), c = static_cast<std::size_t>(b.shape[2]);
    for (py::ssize_t s = 0; s < b.shape[0]; ++s)
      samples.emplace_back(v, c, std::vector<double>(p + s * v * c, p + (s + 1) * v * c));
    return loss_result(hs_mc_loss(samples, to_array2(y), grad), {b.shape[0], b.shape[1], b.shape[2]});
  }, py::arg("logits"), py::arg("y"), py::arg("gradient") = false);
  m.def("combo_loss", [](const In<double>& p, const In<double>& y, double w_xent, double w_dice, bool grad) {
    const std::span<const double> ps(p.data(), static_cast<std::size_t>(p.size()));
    const std::span<const double> ys(y.data(), static_cast<std::size_t>(y.size()));
    return loss_result(combo_loss(ps, ys, w_xent, w_dice, grad), {p.size()});
  }, py::arg("p"), py::arg("y"), py::arg("w_xent") = defaults::kComboXentWeight,
     py::arg("w_dice") = defaults::kComboDiceWeight, py::arg("gradient") = false);
  m.def("gaussian_kl", [](const std::vector<double>& qm, const std::vector<double>& qv,
                          const std::vector<double>& pm, const std::vector<double>& pv) {
    return gaussian_kl({qm, qv}, {pm, pv});
  }, py::arg("q_mean"), py::arg("q_var"), py::arg("p_mean"), py::arg("p_var"));
  m.def("digamma", &digamma);
  m.def("trigamma", &trigamma);

  // classification
  py::class_<ClassifierModel>(m, "ClassifierModel")
      .def_readonly("feature_names", &ClassifierModel::feature_names)
      .def_readonly("classes", &ClassifierModel::classes)
      .def_readonly("bias", &ClassifierModel::bias)
      .def_property_readonly("weights", [](const ClassifierModel& c) {
        py::array_t<double> w({c.num_features(), c.num_classes()});
        std::copy(c.weights.begin(), c.weights.end(), w.mutable_data());
        return w;
      })
      .def("predict_proba", [](const ClassifierModel& c, const std::vector<double>& row) {
        return predict_proba(c, row);
      })
      .def("predict", [](const ClassifierModel& c, const std::vector<double>& row) { return predict(c, row); });
  m.def("fit", [](const In<double>& x, const std::vector<int>& y, double reg, bool class_balance,
                  std::vector<std::string> names) {
    FitOptions o;
    o.reg = reg;
    o.class_balance = class_balance;
    return fit(to_dataset(x, y, std::move(names)), o);
  }, py::arg("x"), py::arg("y"), py::arg("reg") = defaults::kRegularization, py::arg("class_balance") = true,
     py::arg("names") = std::vector<std::string>{});
  m.def("rfe", [](const In<double>& x, const std::vector<int>& y, std::size_t k, std::vector<std::string> names,
                  double reg) {
    FitOptions o;
    o.reg = reg;
    auto r = rfe(to_dataset(x, y, std::move(names)), k, o);
    return py::make_tuple(r.selected, r.eliminated, r.model);
  }, py::arg("x"), py::arg("y"), py::arg("k"), py::arg("names") = std::vector<std::string>{},
     py::arg("reg") = defaults::kRegularization, "Returns (selected, eliminated, model).");
  m.def("eval_metrics", [](const std::vector<std::vector<double>>& probs, const std::vector<int>& labels,
                           const std::vector<int>& classes) {
    const auto e = eval_metrics(probs, labels, classes);
    py::dict d;
    d["kappa"] = opt(e.kappa);
    d["balanced_accuracy"] = opt(e.balanced_accuracy);
    d["auroc"] = opt(e.auroc);
    d["root_brier"] = opt(e.root_brier);
    return d;
  }, py::arg("probs"), py::arg("labels"), py::arg("classes"));
  m.def("qc_labels", [](const std::vector<double>& dice, double cutoff) { return qc_labels(dice, cutoff); },
        py::arg("dice"), py::arg("cutoff") = defaults::kQcDiceCutoff);

  // synthetic data
  m.def("synth", [](const std::string& spec_json) {
    const auto spec = synth::spec_from_json(spec_json);
    const auto c = synth::generate(spec);
    py::dict d;
    d["brain"] = to_array(c.brain);
    d["ventricles"] = to_array(c.ventricles);
    d["lesions"] = to_array(c.lesions);
    const auto& dims = c.logits.dims;
    py::array_t<double> mean({dims.nz, dims.ny, dims.nx, c.logits.classes});
    std::copy(c.logits.mean.begin(), c.logits.mean.end(), mean.mutable_data());
    py::array_t<double> diag({dims.nz, dims.ny, dims.nx, c.logits.classes});
    std::copy(c.logits.diag.begin(), c.logits.diag.end(), diag.mutable_data());
    py::array_t<double> factor({dims.nz, dims.ny, dims.nx, c.logits.classes, c.logits.rank});
    std::copy(c.logits.factor.begin(), c.logits.factor.end(), factor.mutable_data());
    d["logit_mean"] = mean;
    d["logit_diag"] = diag;
    d["logit_factor"] = factor;
    d["spacing"] = py::make_tuple(spec.spacing.sx, spec.spacing.sy, spec.spacing.sz);
    d["fazekas"] = py::make_tuple(c.fazekas.deep, c.fazekas.pv);
    return d;
  }, py::arg("spec_json") = std::string("{}"),
     "Generate one synthetic case from a JSON spec; missing keys take their defaults.");

  // pipeline and IO
  m.def("run_pipeline", [](const std::string& config_json, const std::string& base_dir) {
    const auto cfg = report::config_from_json(config_json, base_dir);
    report::RunResult r;
    {
      py::gil_scoped_release release;
      r = report::run_pipeline(cfg);
    }
    return py::make_tuple(r.exit_code, report::dump(r.report));
  }, py::arg("config_json"), py::arg("base_dir") = std::string(),
     "Runs the configured pipeline; returns (exit code, report JSON text).");
  m.def("default_config", [] { return report::dump(report::config_echo(report::RunConfig{})); });
  m.def("read_vgf", [](const std::string& path) {
    const auto v = vgf::read(path);
    if (v.dtype() == vgf::DType::U8) return py::object(to_array(vgf::as_mask(v)));
    const auto& f = std::get<std::vector<float>>(v.data);
    py::array_t<float> out({v.dims.nz, v.dims.ny, v.dims.nx});
    std::copy(f.begin(), f.end(), out.mutable_data());
    return py::object(out);
  }, py::arg("path"));
  m.def("write_vgf", [](const std::string& path, const py::array& a, const Spacing3& spacing) {
    if (a.dtype().is(py::dtype::of<std::uint8_t>()) || a.dtype().is(py::dtype::of<bool>())) {
      vgf::write_mask(path, to_mask(a, spacing));
      return;
    }
    const In<float> f(a);
    const auto b = f.request();
    const auto* p = static_cast<const float*>(b.ptr);
    vgf::write(path, vgf::Volume{dims_of(b), spacing_of(spacing), std::vector<float>(p, p + b.size)});
  }, py::arg("path"), py::arg("array"), py::arg("spacing") = unit,
     "uint8/bool arrays are stored as u8 masks, everything else as f32.");
}
