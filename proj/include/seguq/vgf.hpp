#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <variant>
#include <vector>

#include "seguq/grid.hpp"

namespace seguq::vgf {

// On-disk layout: one JSON header line
//   {"dims":[nx,ny,nz],"spacing":[sx,sy,sz],"dtype":"f32"|"u8"}\n
// followed by nx*ny*nz little-endian samples, x fastest.
enum class DType { F32, U8 };

struct Volume {
  Dims dims;
  Spacing spacing;
  std::variant<std::vector<float>, std::vector<std::uint8_t>> data;

  DType dtype() const noexcept {
    return std::holds_alternative<std::vector<float>>(data) ? DType::F32 : DType::U8;
  }
};

void write(std::ostream& os, const Volume& v);
Volume read(std::istream& is);

void write(const std::filesystem::path& path, const Volume& v);
Volume read(const std::filesystem::path& path);

Volume from_grid(const ScalarGrid& g);  // stored as f32
Volume from_grid(const Mask& m);        // stored as u8

ScalarGrid as_scalar(const Volume& v);
Mask as_mask(const Volume& v);  // nonzero -> 1

inline ScalarGrid read_scalar(const std::filesystem::path& p) { return as_scalar(read(p)); }
inline Mask read_mask(const std::filesystem::path& p) { return as_mask(read(p)); }
inline void write_scalar(const std::filesystem::path& p, const ScalarGrid& g) { write(p, from_grid(g)); }
inline void write_mask(const std::filesystem::path& p, const Mask& m) { write(p, from_grid(m)); }

}  // namespace seguq::vgf
