#include "seguq/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

namespace seguq {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::EmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorCode::EmptyVentricles: return "EmptyVentricles";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::Degenerate: return "Degenerate";
    case ErrorCode::DegenerateAxis: return "DegenerateAxis";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::DegenerateMetric: return "DegenerateMetric";
    case ErrorCode::RaggedSamples: return "RaggedSamples";
    case ErrorCode::MissingFeature: return "MissingFeature";
    case ErrorCode::SpecError: return "SpecError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IOError: return "IOError";
  }
  return "Unknown";
}

Mask binarize(const ScalarGrid& p, double threshold) {
  Mask out(p.dims(), p.spacing(), std::uint8_t{0});
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i] = p[i] >= threshold ? 1 : 0;
  }
  return out;
}

Mask to_mask(const ScalarGrid& g) {
  Mask out(g.dims(), g.spacing(), std::uint8_t{0});
  for (std::size_t i = 0; i < g.size(); ++i) {
    out[i] = g[i] != 0.0 ? 1 : 0;
  }
  return out;
}

ScalarGrid to_scalar(const Mask& m) {
  ScalarGrid out(m.dims(), m.spacing(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    out[i] = m[i] ? 1.0 : 0.0;
  }
  return out;
}

std::size_t count(const Mask& m) {
  return static_cast<std::size_t>(std::count_if(m.values().begin(), m.values().end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

void check_probability(const ScalarGrid& p) {
  for (double v : p.values()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorCode::DomainError, "probability outside [0,1]: " + std::to_string(v));
    }
  }
}

void check_uncertainty(const ScalarGrid& u) {
  const double upper = std::numbers::ln2 + 1e-9;
  for (double v : u.values()) {
    if (!(v >= 0.0 && v <= upper)) {
      throw Error(ErrorCode::DomainError, "uncertainty outside [0, ln 2]: " + std::to_string(v));
    }
  }
}

Connectivity connectivity_from_int(int n) {
  switch (n) {
    case 6: return Connectivity::Face;
    case 18: return Connectivity::Edge;
    case 26: return Connectivity::Corner;
    default:
      throw Error(ErrorCode::ConfigError, "connectivity must be 6, 18 or 26, got " + std::to_string(n));
  }
}

namespace {

struct Offset {
  int dx, dy, dz;
};

// Neighbours that precede a voxel in scan order.
std::vector<Offset> backward_offsets(Connectivity c) {
  const int max_nonzero = c == Connectivity::Face ? 1 : c == Connectivity::Edge ? 2 : 3;
  std::vector<Offset> out;
  for (int dz = -1; dz <= 0; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const bool before = dz < 0 || (dz == 0 && dy < 0) || (dz == 0 && dy == 0 && dx < 0);
        if (!before) continue;
        const int nonzero = (dx != 0) + (dy != 0) + (dz != 0);
        if (nonzero <= max_nonzero) out.push_back({dx, dy, dz});
      }
    }
  }
  return out;
}

class DisjointSet {
 public:
  std::size_t add() {
    parent_.push_back(parent_.size());
    return parent_.size() - 1;
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent_[a] = b;
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

ComponentLabeling connected_components(const Mask& m, Connectivity connectivity) {
  const Dims d = m.dims();
  const auto offsets = backward_offsets(connectivity);
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  // First pass: provisional labels with equivalences.
  std::vector<std::size_t> provisional(m.size(), kNone);
  DisjointSet sets;
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        const std::size_t i = m.index(x, y, z);
        if (!m[i]) continue;
        std::size_t label = kNone;
        for (const Offset& o : offsets) {
          const auto nx = static_cast<long>(x) + o.dx;
          const auto ny = static_cast<long>(y) + o.dy;
          const auto nz = static_cast<long>(z) + o.dz;
          if (nx < 0 || ny < 0 || nz < 0 || nx >= static_cast<long>(d.nx) ||
              ny >= static_cast<long>(d.ny)) {
            continue;
          }
          const std::size_t j = m.index(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny),
                                        static_cast<std::size_t>(nz));
          if (provisional[j] == kNone) continue;
          if (label == kNone) {
            label = provisional[j];
          } else {
            sets.unite(label, provisional[j]);
          }
        }
        provisional[i] = label == kNone ? sets.add() : label;
      }
    }
  }

  // Second pass: roots numbered by first appearance in scan order.
  ComponentLabeling out{LabelGrid(d, m.spacing(), 0), {}};
  std::vector<std::int32_t> final_id;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (provisional[i] == kNone) continue;
    const std::size_t root = sets.find(provisional[i]);
    if (root >= final_id.size()) final_id.resize(root + 1, 0);
    if (final_id[root] == 0) {
      final_id[root] = static_cast<std::int32_t>(out.components.size() + 1);
      out.components.push_back(Component{final_id[root], {}});
    }
    const std::int32_t id = final_id[root];
    out.labels[i] = id;
    out.components[static_cast<std::size_t>(id - 1)].voxels.push_back(i);
  }
  return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) along one line,
// with voxel pitch `step`. Infinite samples contribute no parabola.
void squared_edt_line(std::vector<double>& f, double step, std::vector<double>& out,
                      std::vector<std::size_t>& hull, std::vector<double>& bounds) {
  const std::size_t n = f.size();
  hull.clear();
  bounds.clear();
  auto pos = [step](std::size_t i) { return static_cast<double>(i) * step; };
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double pq = pos(q);
    while (!hull.empty()) {
      const std::size_t p = hull.back();
      const double pp = pos(p);
      const double s = ((f[q] + pq * pq) - (f[p] + pp * pp)) / (2.0 * (pq - pp));
      if (s <= bounds.back()) {
        hull.pop_back();
        bounds.pop_back();
      } else {
        break;
      }
    }
    if (hull.empty()) {
      hull.push_back(q);
      bounds.push_back(-kInf);
    } else {
      const std::size_t p = hull.back();
      const double pp = pos(p);
      bounds.push_back(((f[q] + pq * pq) - (f[p] + pp * pp)) / (2.0 * (pq - pp)));
      hull.push_back(q);
    }
  }
  out.assign(n, kInf);
  if (hull.empty()) return;
  std::size_t k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double pq = pos(q);
    while (k + 1 < hull.size() && bounds[k + 1] < pq) ++k;
    const double delta = pq - pos(hull[k]);
    out[q] = delta * delta + f[hull[k]];
  }
}

}  // namespace

ScalarGrid distance_field(const Mask& m) {
  if (count(m) == 0) {
    throw Error(ErrorCode::EmptyMask, "distance_field needs at least one foreground voxel");
  }
  const Dims d = m.dims();
  const Spacing s = m.spacing();
  ScalarGrid dist(d, s, 0.0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    dist[i] = m[i] ? 0.0 : kInf;
  }

  std::vector<double> line, result, bounds;
  std::vector<std::size_t> hull;
  auto pass = [&](std::size_t len, double step, auto&& index_of, std::size_t outer_a,
                  std::size_t outer_b) {
    line.resize(len);
    for (std::size_t b = 0; b < outer_b; ++b) {
      for (std::size_t a = 0; a < outer_a; ++a) {
        for (std::size_t t = 0; t < len; ++t) line[t] = dist[index_of(a, b, t)];
        squared_edt_line(line, step, result, hull, bounds);
        for (std::size_t t = 0; t < len; ++t) dist[index_of(a, b, t)] = result[t];
      }
    }
  };
  pass(d.nx, s.sx, [&](std::size_t y, std::size_t z, std::size_t x) { return dist.index(x, y, z); },
       d.ny, d.nz);
  pass(d.ny, s.sy, [&](std::size_t x, std::size_t z, std::size_t y) { return dist.index(x, y, z); },
       d.nx, d.nz);
  pass(d.nz, s.sz, [&](std::size_t x, std::size_t y, std::size_t z) { return dist.index(x, y, z); },
       d.nx, d.ny);

  for (double& v : dist.storage()) v = std::sqrt(v);
  return dist;
}

}  // namespace seguq
