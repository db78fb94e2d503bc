#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "seguq/error.hpp"

namespace seguq {

struct Dims {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  std::size_t size() const noexcept { return nx * ny * nz; }
  bool operator==(const Dims&) const = default;
};

// Millimetres per voxel along each axis.
struct Spacing {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;

  double voxel_volume() const noexcept { return sx * sy * sz; }
  bool operator==(const Spacing&) const = default;
};

// Dense 3D field stored row-major with x fastest: index = x + nx * (y + ny * z).
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(Dims dims, Spacing spacing, T fill = T{})
      : dims_(dims), spacing_(spacing), data_(dims.size(), fill) {
    validate();
  }
  Grid(Dims dims, Spacing spacing, std::vector<T> data)
      : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    validate();
    if (data_.size() != dims_.size()) {
      throw Error(ErrorCode::DimensionMismatch, "data length does not match dims");
    }
  }

  const Dims& dims() const noexcept { return dims_; }
  const Spacing& spacing() const noexcept { return spacing_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return x + dims_.nx * (y + dims_.ny * z);
  }
  std::array<std::size_t, 3> coords(std::size_t i) const noexcept {
    return {i % dims_.nx, (i / dims_.nx) % dims_.ny, i / (dims_.nx * dims_.ny)};
  }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }
  T& at(std::size_t x, std::size_t y, std::size_t z) noexcept { return data_[index(x, y, z)]; }
  const T& at(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return data_[index(x, y, z)];
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return dims_ == other.dims();
  }

 private:
  void validate() const {
    if (dims_.nx == 0 || dims_.ny == 0 || dims_.nz == 0) {
      throw Error(ErrorCode::DimensionMismatch, "grid dims must be positive");
    }
    if (!(spacing_.sx > 0.0 && spacing_.sy > 0.0 && spacing_.sz > 0.0)) {
      throw Error(ErrorCode::DomainError, "grid spacing must be strictly positive");
    }
  }

  Dims dims_;
  Spacing spacing_;
  std::vector<T> data_;
};

// Probabilities and uncertainty values share the scalar grid; masks hold {0,1}.
using ScalarGrid = Grid<double>;
using ProbMap = ScalarGrid;
using UncertaintyMap = ScalarGrid;
using Mask = Grid<std::uint8_t>;
using LabelGrid = Grid<std::int32_t>;

template <typename A, typename B>
void require_same_dims(const Grid<A>& a, const Grid<B>& b, const char* what) {
  if (!(a.dims() == b.dims())) {
    throw Error(ErrorCode::DimensionMismatch, what);
  }
}

// Voxels with p >= threshold become foreground.
Mask binarize(const ScalarGrid& p, double threshold = 0.5);

Mask to_mask(const ScalarGrid& g);  // nonzero -> 1
ScalarGrid to_scalar(const Mask& m);

std::size_t count(const Mask& m);

// Throws DomainError when a value leaves [0,1].
void check_probability(const ScalarGrid& p);
// Throws DomainError when a value leaves [0, ln 2 + 1e-9].
void check_uncertainty(const ScalarGrid& u);

enum class Connectivity : int { Face = 6, Edge = 18, Corner = 26 };

Connectivity connectivity_from_int(int n);

struct Component {
  std::int32_t id = 0;
  std::vector<std::size_t> voxels;  // linear indices, ascending

  std::size_t size() const noexcept { return voxels.size(); }
};

struct ComponentLabeling {
  LabelGrid labels;  // 0 = background, 1..K
  std::vector<Component> components;  // components[k - 1].id == k

  std::size_t count() const noexcept { return components.size(); }
};

// Labels are assigned in order of each component's first voxel in scan order.
ComponentLabeling connected_components(const Mask& m,
                                       Connectivity connectivity = Connectivity::Corner);

// Exact Euclidean distance in mm from every voxel centre to the nearest
// foreground voxel centre. Throws EmptyMask if there is no foreground.
ScalarGrid distance_field(const Mask& m);

}  // namespace seguq
