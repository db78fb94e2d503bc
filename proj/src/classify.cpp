#include "seguq/classify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <Eigen/Dense>

#include "seguq/parallel.hpp"
#include "seguq/seed.hpp"

namespace seguq {

Dataset dataset(const FeatureTable& table, const std::string& target) {
  const auto it = table.targets.find(target);
  if (it == table.targets.end()) throw Error(ErrorCode::MissingFeature, "table has no target " + target);
  return Dataset{table.feature_names, table.rows, it->second};
}

namespace {

struct Problem {
  const Dataset& data;
  std::vector<int> classes;
  std::vector<std::size_t> class_index;  // per row
  std::vector<double> row_weight;
  double reg;
  std::size_t k;
  std::size_t c;

  std::size_t size() const { return k * c + c; }

  // Objective at theta = [W (k x c), b (c)]; fills grad when non-null.
  double evaluate(const std::vector<double>& theta, std::vector<double>* grad) const {
    if (grad) grad->assign(size(), 0.0);
    double total = 0.0;
    std::vector<double> scores(c);
    for (std::size_t n = 0; n < data.rows.size(); ++n) {
      const auto& x = data.rows[n];
      for (std::size_t j = 0; j < c; ++j) scores[j] = theta[k * c + j];
      for (std::size_t f = 0; f < k; ++f) {
        const double xf = x[f];
        if (xf == 0.0) continue;
        const double* w = theta.data() + f * c;
        for (std::size_t j = 0; j < c; ++j) scores[j] += xf * w[j];
      }
      const double top = *std::max_element(scores.begin(), scores.end());
      double z = 0.0;
      for (std::size_t j = 0; j < c; ++j) z += std::exp(scores[j] - top);
      const double log_z = top + std::log(z);
      const std::size_t y = class_index[n];
      total += row_weight[n] * (log_z - scores[y]);
      if (grad) {
        for (std::size_t j = 0; j < c; ++j) {
          const double g = row_weight[n] * (std::exp(scores[j] - log_z) - (j == y ? 1.0 : 0.0));
          (*grad)[k * c + j] += g;
          for (std::size_t f = 0; f < k; ++f) (*grad)[f * c + j] += g * x[f];
        }
      }
    }
    for (std::size_t i = 0; i < k * c; ++i) {
      total += reg * theta[i] * theta[i];
      if (grad) (*grad)[i] += 2.0 * reg * theta[i];
    }
    return total;
  }

  // Hessian of the objective; the bias acts as feature k with value 1.
  void hessian(const std::vector<double>& theta, Eigen::MatrixXd& h) const {
    const auto dim = static_cast<Eigen::Index>(size());
    h.setZero(dim, dim);
    std::vector<double> scores(c), prob(c), xt(k + 1, 1.0);
    Eigen::MatrixXd a(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c));
    Eigen::MatrixXd outer(static_cast<Eigen::Index>(k + 1), static_cast<Eigen::Index>(k + 1));
    for (std::size_t n = 0; n < data.rows.size(); ++n) {
      const auto& x = data.rows[n];
      std::copy(x.begin(), x.end(), xt.begin());
      for (std::size_t j = 0; j < c; ++j) {
        scores[j] = theta[k * c + j];
        for (std::size_t f = 0; f < k; ++f) scores[j] += x[f] * theta[f * c + j];
      }
      const double top = *std::max_element(scores.begin(), scores.end());
      double z = 0.0;
      for (std::size_t j = 0; j < c; ++j) z += (prob[j] = std::exp(scores[j] - top));
      for (double& q : prob) q /= z;
      for (std::size_t j = 0; j < c; ++j) {
        for (std::size_t l = 0; l < c; ++l) {
          a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) =
              row_weight[n] * ((j == l ? prob[j] : 0.0) - prob[j] * prob[l]);
        }
      }
      const Eigen::Map<const Eigen::VectorXd> xv(xt.data(), static_cast<Eigen::Index>(k + 1));
      outer.noalias() = xv * xv.transpose();
      // Kronecker product outer (x) a in the [feature][class] layout.
      for (Eigen::Index f = 0; f <= static_cast<Eigen::Index>(k); ++f) {
        for (Eigen::Index g = 0; g <= static_cast<Eigen::Index>(k); ++g) {
          h.block(f * static_cast<Eigen::Index>(c), g * static_cast<Eigen::Index>(c), a.rows(), a.cols()) +=
              outer(f, g) * a;
        }
      }
    }
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(k * c); ++i) h(i, i) += 2.0 * reg;
  }
};

Problem make_problem(const Dataset& data, const FitOptions& options, const std::vector<int>* classes_hint) {
  if (data.rows.size() != data.labels.size()) {
    throw Error(ErrorCode::DimensionMismatch, "labels and rows differ in length");
  }
  const std::size_t k = data.feature_names.size();
  for (const auto& row : data.rows) {
    if (row.size() != k) throw Error(ErrorCode::DimensionMismatch, "row width differs from feature count");
    for (double v : row) {
      if (!std::isfinite(v)) throw Error(ErrorCode::DomainError, "features must be finite");
    }
  }
  std::set<int> present(data.labels.begin(), data.labels.end());
  if (present.size() < 2) throw Error(ErrorCode::DegenerateLabels, "fit needs at least two classes");
  std::vector<int> classes = classes_hint ? *classes_hint : std::vector<int>(present.begin(), present.end());

  std::map<int, std::size_t> counts;
  for (int y : data.labels) ++counts[y];
  std::size_t largest = 0;
  for (const auto& [_, n] : counts) largest = std::max(largest, n);

  Problem p{data, classes, {}, {}, options.reg, k, classes.size()};
  for (int y : data.labels) {
    const auto it = std::find(classes.begin(), classes.end(), y);
    p.class_index.push_back(static_cast<std::size_t>(it - classes.begin()));
    p.row_weight.push_back(options.class_balance ? static_cast<double>(largest) / static_cast<double>(counts[y])
                                                 : 1.0);
  }
  return p;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

ClassifierModel to_model(const Problem& p, const std::vector<double>& theta) {
  ClassifierModel m;
  m.feature_names = p.data.feature_names;
  m.classes = p.classes;
  m.weights.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(p.k * p.c));
  m.bias.assign(theta.begin() + static_cast<std::ptrdiff_t>(p.k * p.c), theta.end());
  return m;
}

std::vector<double> to_theta(const ClassifierModel& m) {
  std::vector<double> theta = m.weights;
  theta.insert(theta.end(), m.bias.begin(), m.bias.end());
  return theta;
}

}  // namespace

double objective(const ClassifierModel& model, const Dataset& data, const FitOptions& options) {
  const Problem p = make_problem(data, options, &model.classes);
  return p.evaluate(to_theta(model), nullptr);
}

ClassifierModel fit(const Dataset& data, const FitOptions& options, FitReport* report,
                    const ClassifierModel* start) {
  const Problem p = make_problem(data, options, nullptr);
  std::vector<double> x(p.size(), 0.0);
  if (start != nullptr) {
    if (start->classes != p.classes || start->num_features() != p.k) {
      throw Error(ErrorCode::DimensionMismatch, "start model does not match the data");
    }
    x = to_theta(*start);
  }

  // Newton iterations with Armijo backtracking. The softmax is invariant to a
  // common shift of the biases, so the system gets a tiny ridge.
  const std::size_t dim = p.size();
  std::vector<double> grad_x, grad_trial, trial(dim);
  double fx = p.evaluate(x, &grad_x);
  double gnorm = norm(grad_x);
  std::size_t iter = 0;
  Eigen::MatrixXd hessian(dim, dim);
  Eigen::VectorXd g(dim);
  while (gnorm > options.tolerance && iter < options.max_iterations) {
    ++iter;
    p.hessian(x, hessian);
    for (std::size_t i = 0; i < dim; ++i) {
      hessian(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += 1e-10;
      g[static_cast<Eigen::Index>(i)] = grad_x[i];
    }
    const Eigen::VectorXd step = hessian.ldlt().solve(g);
    double slope = -g.dot(step);
    bool newton = std::isfinite(slope) && slope < 0.0;
    double t = 1.0;
    double f_trial = fx;
    for (int tries = 0; tries < 60; ++tries) {
      for (std::size_t i = 0; i < dim; ++i) {
        trial[i] = x[i] - t * (newton ? step[static_cast<Eigen::Index>(i)] : grad_x[i]);
      }
      f_trial = p.evaluate(trial, &grad_trial);
      const double decrease = newton ? -slope : gnorm * gnorm;
      if (f_trial <= fx - 1e-4 * t * decrease) break;
      // Near the optimum the decrease drowns in rounding; judge by the gradient.
      if (f_trial <= fx + 1e-13 * std::abs(fx) && norm(grad_trial) < gnorm) break;
      t *= 0.5;
    }
    const double g_trial = norm(grad_trial);
    if (!(f_trial < fx) && !(f_trial <= fx + 1e-13 * std::abs(fx) && g_trial < gnorm)) break;
    x = trial;
    fx = f_trial;
    grad_x.swap(grad_trial);
    gnorm = g_trial;
  }
  if (report != nullptr) *report = FitReport{fx, gnorm, iter};
  return to_model(p, x);
}

ClassifierModel fit(const FeatureTable& table, const std::string& target, const FitOptions& options) {
  return fit(dataset(table, target), options);
}

namespace {

Dataset keep_features(const Dataset& data, const std::vector<std::size_t>& cols) {
  Dataset out;
  out.labels = data.labels;
  for (std::size_t c : cols) out.feature_names.push_back(data.feature_names[c]);
  out.rows.reserve(data.rows.size());
  for (const auto& row : data.rows) {
    std::vector<double> r;
    r.reserve(cols.size());
    for (std::size_t c : cols) r.push_back(row[c]);
    out.rows.push_back(std::move(r));
  }
  return out;
}

}  // namespace

RfeResult rfe(const Dataset& data, std::size_t k, const FitOptions& options) {
  if (k == 0 || k > data.feature_names.size()) {
    throw Error(ErrorCode::DomainError, "rfe target k must be in [1, feature count]");
  }
  std::vector<std::size_t> keep(data.feature_names.size());
  std::iota(keep.begin(), keep.end(), 0);
  RfeResult out;
  while (keep.size() > k) {
    const Dataset sub = keep_features(data, keep);
    const ClassifierModel model = fit(sub, options);
    std::size_t worst = 0;
    double worst_score = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < keep.size(); ++f) {
      double s = 0.0;
      for (std::size_t j = 0; j < model.num_classes(); ++j) s += model.weight(f, j) * model.weight(f, j);
      s = std::sqrt(s);
      // scores equal up to solver roundoff count as ties
      const double tol = 1e-9 * std::max(1.0, s);
      const bool lower = s < worst_score - tol;
      const bool tie_later_name =
          std::abs(s - worst_score) <= tol && sub.feature_names[f] > sub.feature_names[worst];
      if (lower || tie_later_name) {
        worst = f;
        worst_score = s;
      }
    }
    out.eliminated.push_back(sub.feature_names[worst]);
    keep.erase(keep.begin() + static_cast<std::ptrdiff_t>(worst));
  }
  const Dataset final_data = keep_features(data, keep);
  out.selected = final_data.feature_names;
  out.model = fit(final_data, options);
  return out;
}

RfeResult rfe(const FeatureTable& table, const std::string& target, std::size_t k, const FitOptions& options) {
  return rfe(dataset(table, target), k, options);
}

std::vector<double> predict_proba(const ClassifierModel& model, std::span<const double> row) {
  if (row.size() != model.num_features()) {
    throw Error(ErrorCode::MissingFeature, "row width does not match the model");
  }
  const std::size_t c = model.num_classes();
  std::vector<double> scores(model.bias);
  for (std::size_t f = 0; f < row.size(); ++f) {
    for (std::size_t j = 0; j < c; ++j) scores[j] += row[f] * model.weight(f, j);
  }
  const double top = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double& s : scores) {
    s = std::exp(s - top);
    z += s;
  }
  for (double& s : scores) s /= z;
  return scores;
}

std::vector<double> predict_proba(const ClassifierModel& model, const FeatureVector& row) {
  std::vector<double> x;
  for (const auto& name : model.feature_names) {
    const auto v = row.find(name);
    if (!v) throw Error(ErrorCode::MissingFeature, "row lacks feature " + name);
    x.push_back(*v);
  }
  return predict_proba(model, x);
}

int predict(const ClassifierModel& model, std::span<const double> row) {
  const auto p = predict_proba(model, row);
  return model.classes[static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())];
}

std::optional<double> binary_auc(std::span<const double> scores, std::span<const int> positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks over tied scores.
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
    i = j + 1;
  }
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (positive[i]) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

EvalMetrics eval_metrics(const std::vector<std::vector<double>>& probs, const std::vector<int>& labels,
                         const std::vector<int>& classes) {
  const std::size_t n = labels.size();
  if (n == 0 || probs.size() != n) throw Error(ErrorCode::DimensionMismatch, "probs and labels differ");
  const std::size_t c = classes.size();
  std::vector<std::size_t> truth(n), hard(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (probs[i].size() != c) throw Error(ErrorCode::DimensionMismatch, "probability row width");
    const auto it = std::find(classes.begin(), classes.end(), labels[i]);
    if (it == classes.end()) throw Error(ErrorCode::DomainError, "label outside the class set");
    truth[i] = static_cast<std::size_t>(it - classes.begin());
    hard[i] = static_cast<std::size_t>(std::max_element(probs[i].begin(), probs[i].end()) - probs[i].begin());
  }
  EvalMetrics m;
  const double nn = static_cast<double>(n);

  std::vector<double> row_tot(c, 0.0), col_tot(c, 0.0);
  double agree = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    row_tot[truth[i]] += 1.0;
    col_tot[hard[i]] += 1.0;
    agree += truth[i] == hard[i];
  }
  const double po = agree / nn;
  double pe = 0.0;
  for (std::size_t j = 0; j < c; ++j) pe += (row_tot[j] / nn) * (col_tot[j] / nn);
  if (pe < 1.0) m.kappa = (po - pe) / (1.0 - pe);

  double recall_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t j = 0; j < c; ++j) {
    if (row_tot[j] == 0.0) continue;
    double hit = 0.0;
    for (std::size_t i = 0; i < n; ++i) hit += truth[i] == j && hard[i] == j;
    recall_sum += hit / row_tot[j];
    ++present;
  }
  if (present > 0) m.balanced_accuracy = recall_sum / static_cast<double>(present);

  double auc_sum = 0.0;
  std::size_t auc_n = 0;
  for (std::size_t j = 0; j < c; ++j) {
    std::vector<double> score(n);
    std::vector<int> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      score[i] = probs[i][j];
      pos[i] = truth[i] == j;
    }
    if (const auto auc = binary_auc(score, pos)) {
      auc_sum += *auc;
      ++auc_n;
    }
  }
  if (auc_n > 0) m.auroc = auc_sum / static_cast<double>(auc_n);

  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double d = probs[i][j] - (truth[i] == j ? 1.0 : 0.0);
      sq += d * d;
    }
  }
  m.root_brier = std::sqrt(sq / nn);
  return m;
}

Interval percentile_interval(const std::vector<double>& draws, double level) {
  if (draws.empty()) throw Error(ErrorCode::DegenerateMetric, "no draws for an interval");
  const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / static_cast<double>(draws.size());
  const double tail = 50.0 * (1.0 - level);
  return {mean, percentile(draws, tail), percentile(draws, 100.0 - tail)};
}

Split stratified_split(const std::vector<int>& labels, double train_fraction, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  Split s;
  for (auto& [_, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    if (idx.size() >= 2) n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    else n_train = idx.size();
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

SplitOutcome run_split(const FeatureTable& table, const std::string& target, const Split& split,
                       const PipelineConfig& config) {
  const auto params = fit_normalization(table, split.train);
  const FeatureTable normalized = apply_normalization(table, params);
  const FeatureTable train = normalized.select_rows(split.train);
  const FeatureTable test = normalized.select_rows(split.test);

  const std::size_t k = std::min(config.k, table.feature_names.size());
  const RfeResult selection = rfe(train, target, k, config.fit);
  const FeatureTable test_sel = test.select_features(selection.selected);

  SplitOutcome out;
  out.selected = selection.selected;
  const std::vector<int> test_labels = dataset(test, target).labels;
  std::set<int> all(selection.model.classes.begin(), selection.model.classes.end());
  all.insert(test_labels.begin(), test_labels.end());
  out.classes.assign(all.begin(), all.end());

  std::vector<std::vector<double>> probs;
  for (const auto& row : test_sel.rows) {
    const auto p = predict_proba(selection.model, row);
    std::vector<double> full(out.classes.size(), 0.0);
    for (std::size_t j = 0; j < p.size(); ++j) {
      const auto pos = std::find(out.classes.begin(), out.classes.end(), selection.model.classes[j]);
      full[static_cast<std::size_t>(pos - out.classes.begin())] = p[j];
    }
    out.test_predictions.push_back(predict(selection.model, row));
    probs.push_back(std::move(full));
  }
  out.test_labels = test_labels;
  out.metrics = eval_metrics(probs, test_labels, out.classes);
  return out;
}

EvalSummary bootstrap_eval(const FeatureTable& table, const std::string& target, const PipelineConfig& config) {
  if (config.n_boot == 0) throw Error(ErrorCode::DomainError, "n_boot must be >= 1");
  const auto labels = dataset(table, target).labels;
  constexpr std::size_t kMaxRetries = 10;

  std::vector<SplitOutcome> outcomes(config.n_boot);
  parallel_for(config.n_boot, config.threads, [&](std::size_t i) {
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt > kMaxRetries) {
        throw Error(ErrorCode::DegenerateLabels, "resample " + std::to_string(i) + " kept drawing degenerate splits");
      }
      const Split split = stratified_split(labels, config.train_fraction, derive_seed(config.seed, {i, attempt}));
      std::set<int> train_classes;
      for (std::size_t r : split.train) train_classes.insert(labels[r]);
      if (train_classes.size() < 2 || split.test.empty()) continue;
      outcomes[i] = run_split(table, target, split, config);
      return;
    }
  });

  EvalSummary summary;
  summary.resamples = config.n_boot;
  auto collect = [&](auto member) -> std::optional<Interval> {
    std::vector<double> draws;
    for (const auto& o : outcomes) {
      if (const auto v = o.metrics.*member) draws.push_back(*v);
    }
    if (draws.empty()) return std::nullopt;
    return percentile_interval(draws);
  };
  summary.kappa = collect(&EvalMetrics::kappa);
  summary.balanced_accuracy = collect(&EvalMetrics::balanced_accuracy);
  summary.auroc = collect(&EvalMetrics::auroc);
  summary.root_brier = collect(&EvalMetrics::root_brier);
  summary.first_split = outcomes.front();
  return summary;
}

std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<int>& labels,
                                                       const std::vector<int>& predictions,
                                                       const std::vector<int>& classes) {
  std::vector<std::vector<std::size_t>> m(classes.size(), std::vector<std::size_t>(classes.size(), 0));
  auto index = [&](int v) {
    const auto it = std::find(classes.begin(), classes.end(), v);
    if (it == classes.end()) throw Error(ErrorCode::DomainError, "value outside the class set");
    return static_cast<std::size_t>(it - classes.begin());
  };
  for (std::size_t i = 0; i < labels.size(); ++i) ++m[index(labels[i])][index(predictions[i])];
  return m;
}

std::vector<int> qc_labels(std::span<const double> dice_scores, double cutoff) {
  std::vector<int> out;
  out.reserve(dice_scores.size());
  for (double d : dice_scores) out.push_back(d <= cutoff ? 1 : 0);
  return out;
}

}  // namespace seguq
