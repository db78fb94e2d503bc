#include "seguq/ring_features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace seguq {

std::size_t RingPartition::voxel_count(std::size_t ring) const {
  const auto target = static_cast<std::int8_t>(ring);
  return static_cast<std::size_t>(
      std::count(labels.values().begin(), labels.values().end(), target));
}

double RingPartition::volume_mm3(std::size_t ring) const {
  return static_cast<double>(voxel_count(ring)) * labels.spacing().voxel_volume();
}

std::size_t ring_of_distance(double distance_mm, const std::array<double, 3>& edges) {
  std::size_t ring = 0;
  while (ring < edges.size() && distance_mm >= edges[ring]) ++ring;
  return ring;
}

RingPartition ring_partition(const Mask& ventricles, const Mask& brain, std::array<double, 3> edges_mm) {
  require_same_dims(ventricles, brain, "ring_partition: ventricle and brain dims differ");
  if (count(ventricles) == 0) throw Error(ErrorCode::EmptyVentricles, "ventricle mask is empty");
  for (std::size_t i = 0; i < brain.size(); ++i) {
    if (ventricles[i] && !brain[i]) {
      throw Error(ErrorCode::DomainError, "ventricle voxels must lie inside the brain mask");
    }
  }
  const ScalarGrid dist = distance_field(ventricles);
  RingPartition out{Grid<std::int8_t>(brain.dims(), brain.spacing(), kOutsideBrain), edges_mm};
  for (std::size_t i = 0; i < brain.size(); ++i) {
    if (brain[i]) out.labels[i] = static_cast<std::int8_t>(ring_of_distance(dist[i], edges_mm));
  }
  return out;
}

ScalarGrid threshold_map(const ScalarGrid& m, double t) {
  if (!(t >= 0.0)) throw Error(ErrorCode::DomainError, "threshold must be nonnegative");
  ScalarGrid out = m;
  for (double& v : out.storage()) {
    if (v < t) v = 0.0;
  }
  return out;
}

std::vector<std::string> FeatureVector::names() const {
  std::vector<std::string> out;
  for (const auto& f : features) out.push_back(f.name);
  return out;
}

std::vector<double> FeatureVector::values() const {
  std::vector<double> out;
  for (const auto& f : features) out.push_back(f.value);
  return out;
}

std::optional<double> FeatureVector::find(const std::string& name) const {
  for (const auto& f : features) {
    if (f.name == name) return f.value;
  }
  return std::nullopt;
}

namespace {

double population_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace

std::vector<Feature> map_features(const ScalarGrid& thresholded, const RingPartition& rings,
                                  const std::string& prefix, FeatureSource source,
                                  Connectivity connectivity) {
  require_same_dims(thresholded, rings.labels, "feature extraction: map and ring dims differ");
  const double voxel = thresholded.spacing().voxel_volume();
  const auto& labels = rings.labels;
  std::vector<Feature> out;

  for (std::size_t r = 0; r < kRingCount; ++r) {
    const auto ring = static_cast<std::int8_t>(r);
    const std::string region = "R" + std::to_string(r);
    const std::string stem = prefix + "_r" + std::to_string(r);

    double intensity = 0.0;
    Mask in_ring(thresholded.dims(), thresholded.spacing(), std::uint8_t{0});
    for (std::size_t i = 0; i < thresholded.size(); ++i) {
      if (labels[i] != ring) continue;
      intensity += thresholded[i];
      in_ring[i] = thresholded[i] > 0.0 ? 1 : 0;
    }
    const double ring_volume = rings.volume_mm3(r);
    const auto cc = connected_components(in_ring, connectivity);
    std::vector<double> volumes;
    for (const auto& c : cc.components) volumes.push_back(static_cast<double>(c.size()) * voxel);

    const double density = ring_volume > 0.0 ? static_cast<double>(cc.count()) / ring_volume : 0.0;
    const double spread = ring_volume > 0.0 ? population_std(volumes) / ring_volume : 0.0;
    out.push_back({stem + "_volume", source, region, intensity * voxel});
    out.push_back({stem + "_cc_density", source, region, density});
    out.push_back({stem + "_cc_std_density", source, region, spread});
  }

  // Confluence across neighbouring rings.
  Mask in_brain(thresholded.dims(), thresholded.spacing(), std::uint8_t{0});
  double total = 0.0;
  for (std::size_t i = 0; i < thresholded.size(); ++i) {
    if (labels[i] == kOutsideBrain) continue;
    total += thresholded[i];
    in_brain[i] = thresholded[i] > 0.0 ? 1 : 0;
  }
  const auto cc = connected_components(in_brain, connectivity);
  double bridge12 = 0.0, bridge23 = 0.0;
  for (const auto& c : cc.components) {
    std::array<bool, kRingCount> touches{};
    for (std::size_t i : c.voxels) touches[static_cast<std::size_t>(labels[i])] = true;
    const double volume = static_cast<double>(c.size()) * voxel;
    if (touches[0] && touches[1]) bridge12 = std::max(bridge12, volume);
    if (touches[1] && touches[2]) bridge23 = std::max(bridge23, volume);
  }
  out.push_back({prefix + "_bridge12_lcc", source, "bridge12", bridge12});
  out.push_back({prefix + "_bridge23_lcc", source, "bridge23", bridge23});
  out.push_back({prefix + "_global_volume", source, "global", total * voxel});
  return out;
}

FeatureVector extract_features(const ProbMap& seg, const UncertaintyMap& uq, const SampleSet* samples,
                               const RingPartition& rings, double t, Connectivity connectivity) {
  require_same_dims(seg, uq, "extract_features: seg and uq dims differ");
  FeatureVector fv;
  fv.features = map_features(threshold_map(seg, t), rings, "seg", FeatureSource::Seg, connectivity);
  auto uq_features = map_features(threshold_map(uq, t), rings, "uq", FeatureSource::Uq, connectivity);
  fv.features.insert(fv.features.end(), uq_features.begin(), uq_features.end());

  if (samples != nullptr) {
    if (!(samples->dims() == seg.dims())) {
      throw Error(ErrorCode::DimensionMismatch, "extract_features: sample dims differ");
    }
    std::vector<std::vector<Feature>> per_sample;
    for (const auto& m : samples->members()) {
      per_sample.push_back(map_features(threshold_map(m, t), rings, "seg", FeatureSource::Seg, connectivity));
    }
    const std::size_t n_features = per_sample.front().size();
    for (std::size_t k = 0; k < n_features; ++k) {
      std::vector<double> column;
      for (const auto& s : per_sample) column.push_back(s[k].value);
      const Feature& ref = per_sample.front()[k];
      fv.features.push_back({"sstd_" + ref.name, FeatureSource::SampleStd, ref.region, population_std(column)});
    }
  }
  return fv;
}

std::size_t FeatureTable::column(const std::string& name) const {
  const auto it = std::find(feature_names.begin(), feature_names.end(), name);
  if (it == feature_names.end()) throw Error(ErrorCode::MissingFeature, "no feature named " + name);
  return static_cast<std::size_t>(it - feature_names.begin());
}

void FeatureTable::add_row(const std::string& subject, const FeatureVector& fv,
                           const std::map<std::string, int>& row_targets) {
  if (rows.empty() && feature_names.empty()) {
    feature_names = fv.names();
  } else if (fv.names() != feature_names) {
    throw Error(ErrorCode::DimensionMismatch, "feature rows must share the same names");
  }
  if (!rows.empty()) {
    for (const auto& [name, _] : targets) {
      if (!row_targets.count(name)) throw Error(ErrorCode::MissingFeature, "row lacks target " + name);
    }
    for (const auto& [name, _] : row_targets) {
      if (!targets.count(name)) throw Error(ErrorCode::MissingFeature, "unexpected target " + name);
    }
  }
  subjects.push_back(subject);
  rows.push_back(fv.values());
  for (const auto& [name, value] : row_targets) targets[name].push_back(value);
}

FeatureTable FeatureTable::select_rows(std::span<const std::size_t> indices) const {
  FeatureTable out;
  out.feature_names = feature_names;
  for (const auto& [name, _] : targets) out.targets[name];
  for (std::size_t i : indices) {
    out.subjects.push_back(subjects[i]);
    out.rows.push_back(rows[i]);
    for (const auto& [name, values] : targets) out.targets[name].push_back(values[i]);
  }
  return out;
}

FeatureTable FeatureTable::select_features(const std::vector<std::string>& names) const {
  std::vector<std::size_t> cols;
  for (const auto& n : names) cols.push_back(column(n));
  FeatureTable out;
  out.feature_names = names;
  out.subjects = subjects;
  out.targets = targets;
  for (const auto& row : rows) {
    std::vector<double> r;
    for (std::size_t c : cols) r.push_back(row[c]);
    out.rows.push_back(std::move(r));
  }
  return out;
}

namespace {

constexpr std::string_view kTargetPrefix = "target_";

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

void write_csv(std::ostream& os, const FeatureTable& table, bool header) {
  if (header) {
    os << "subject";
    for (const auto& n : table.feature_names) os << ',' << n;
    for (const auto& [name, _] : table.targets) os << ',' << kTargetPrefix << name;
    os << '\n';
  }
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    os << table.subjects[r];
    for (double v : table.rows[r]) os << ',' << format_number(v);
    for (const auto& [_, values] : table.targets) os << ',' << values[r];
    os << '\n';
  }
}

FeatureTable read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorCode::IOError, "feature CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.empty() || header.front() != "subject") {
    throw Error(ErrorCode::IOError, "feature CSV must start with a 'subject' column");
  }
  FeatureTable table;
  std::vector<std::string> target_names;
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i].rfind(kTargetPrefix, 0) == 0) {
      target_names.push_back(header[i].substr(kTargetPrefix.size()));
      table.targets[target_names.back()];
    } else {
      if (!target_names.empty()) throw Error(ErrorCode::IOError, "target columns must come last");
      table.feature_names.push_back(header[i]);
    }
  }
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::IOError, "feature CSV line " + std::to_string(line_no) + " has " +
                                          std::to_string(cells.size()) + " cells, expected " +
                                          std::to_string(header.size()));
    }
    table.subjects.push_back(cells[0]);
    std::vector<double> row;
    try {
      for (std::size_t i = 0; i < table.feature_names.size(); ++i) row.push_back(std::stod(cells[1 + i]));
      for (std::size_t t = 0; t < target_names.size(); ++t) {
        table.targets[target_names[t]].push_back(std::stoi(cells[1 + table.feature_names.size() + t]));
      }
    } catch (const std::exception&) {
      throw Error(ErrorCode::IOError, "unparsable number on feature CSV line " + std::to_string(line_no));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::DomainError, "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

NormalizationParams fit_normalization(const FeatureTable& table, std::span<const std::size_t> fit_rows,
                                      double clip_percentile) {
  if (fit_rows.empty()) throw Error(ErrorCode::DomainError, "normalization needs at least one fit row");
  NormalizationParams p;
  p.feature_names = table.feature_names;
  for (std::size_t c = 0; c < table.feature_names.size(); ++c) {
    std::vector<double> column;
    for (std::size_t r : fit_rows) column.push_back(table.rows[r][c]);
    const double clip = percentile(column, clip_percentile);
    std::vector<double> kept;
    for (double v : column) {
      if (v <= clip) kept.push_back(v);
    }
    double mean = 0.0;
    for (double v : kept) mean += v;
    mean /= static_cast<double>(kept.size());
    double ss = 0.0, scale = 1.0;
    for (double v : kept) {
      ss += (v - mean) * (v - mean);
      scale = std::max(scale, std::abs(v));
    }
    double sd = std::sqrt(ss / static_cast<double>(kept.size()));
    if (sd <= 1e-12 * scale) sd = 0.0;  // constant up to rounding
    p.clip.push_back(clip);
    p.mean.push_back(mean);
    p.stddev.push_back(sd);
  }
  return p;
}

FeatureTable apply_normalization(const FeatureTable& table, const NormalizationParams& params) {
  FeatureTable source = table.feature_names == params.feature_names
                            ? table
                            : table.select_features(params.feature_names);
  for (auto& row : source.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const double clipped = std::min(row[c], params.clip[c]);
      row[c] = params.stddev[c] > 0.0 ? (clipped - params.mean[c]) / params.stddev[c] : 0.0;
    }
  }
  return source;
}

NormalizedTable normalize_table(const FeatureTable& table, std::span<const std::size_t> fit_rows) {
  NormalizationParams params = fit_normalization(table, fit_rows);
  FeatureTable normalized = apply_normalization(table, params);
  return {std::move(normalized), std::move(params)};
}

std::string to_json(const NormalizationParams& params) {
  nlohmann::ordered_json j;
  j["features"] = nlohmann::json::array();
  for (std::size_t c = 0; c < params.feature_names.size(); ++c) {
    j["features"].push_back({{"name", params.feature_names[c]},
                             {"clip", params.clip[c]},
                             {"mean", params.mean[c]},
                             {"std", params.stddev[c]}});
  }
  return j.dump(2);
}

NormalizationParams normalization_from_json(const std::string& text) {
  NormalizationParams p;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& f : j.at("features")) {
      p.feature_names.push_back(f.at("name").get<std::string>());
      p.clip.push_back(f.at("clip").get<double>());
      p.mean.push_back(f.at("mean").get<double>());
      p.stddev.push_back(f.at("std").get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IOError, std::string("bad normalization JSON: ") + e.what());
  }
  return p;
}

}  // namespace seguq
