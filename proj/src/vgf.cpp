#include "seguq/vgf.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

namespace seguq::vgf {

namespace {

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

Error io_error(const std::string& what) { return Error(ErrorCode::IOError, what); }

}  // namespace

void write(std::ostream& os, const Volume& v) {
  nlohmann::ordered_json header;
  header["dims"] = {v.dims.nx, v.dims.ny, v.dims.nz};
  header["spacing"] = {v.spacing.sx, v.spacing.sy, v.spacing.sz};
  header["dtype"] = v.dtype() == DType::F32 ? "f32" : "u8";
  os << header.dump() << '\n';

  if (const auto* f = std::get_if<std::vector<float>>(&v.data)) {
    if (f->size() != v.dims.size()) throw Error(ErrorCode::DimensionMismatch, "vgf payload size");
    std::vector<std::uint32_t> words(f->size());
    for (std::size_t i = 0; i < f->size(); ++i) {
      words[i] = to_little(std::bit_cast<std::uint32_t>((*f)[i]));
    }
    os.write(reinterpret_cast<const char*>(words.data()),
             static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  } else {
    const auto& b = std::get<std::vector<std::uint8_t>>(v.data);
    if (b.size() != v.dims.size()) throw Error(ErrorCode::DimensionMismatch, "vgf payload size");
    os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  }
  if (!os) throw io_error("failed writing vgf stream");
}

Volume read(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw io_error("missing vgf header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("malformed vgf header: ") + e.what());
  }
  Volume v;
  try {
    const auto dims = header.at("dims").get<std::vector<std::size_t>>();
    const auto spacing = header.at("spacing").get<std::vector<double>>();
    const auto dtype = header.at("dtype").get<std::string>();
    if (dims.size() != 3 || spacing.size() != 3) throw io_error("dims/spacing must have 3 entries");
    v.dims = {dims[0], dims[1], dims[2]};
    v.spacing = {spacing[0], spacing[1], spacing[2]};
    if (v.dims.size() == 0) throw io_error("vgf dims must be positive");
    if (!(v.spacing.sx > 0 && v.spacing.sy > 0 && v.spacing.sz > 0)) {
      throw io_error("vgf spacing must be positive");
    }
    const std::size_t n = v.dims.size();
    if (dtype == "f32") {
      std::vector<std::uint32_t> words(n);
      is.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(n * 4));
      if (static_cast<std::size_t>(is.gcount()) != n * 4) throw io_error("truncated f32 payload");
      std::vector<float> f(n);
      for (std::size_t i = 0; i < n; ++i) f[i] = std::bit_cast<float>(to_little(words[i]));
      v.data = std::move(f);
    } else if (dtype == "u8") {
      std::vector<std::uint8_t> b(n);
      is.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(n));
      if (static_cast<std::size_t>(is.gcount()) != n) throw io_error("truncated u8 payload");
      v.data = std::move(b);
    } else {
      throw io_error("unknown vgf dtype '" + dtype + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("bad vgf header field: ") + e.what());
  }
  return v;
}

void write(const std::filesystem::path& path, const Volume& v) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path.string() + " for writing");
  write(os, v);
}

Volume read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open " + path.string());
  try {
    return read(is);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

Volume from_grid(const ScalarGrid& g) {
  std::vector<float> f(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) f[i] = static_cast<float>(g[i]);
  return Volume{g.dims(), g.spacing(), std::move(f)};
}

Volume from_grid(const Mask& m) { return Volume{m.dims(), m.spacing(), m.storage()}; }

ScalarGrid as_scalar(const Volume& v) {
  std::vector<double> out(v.dims.size());
  std::visit([&](const auto& src) {
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<double>(src[i]);
  }, v.data);
  return ScalarGrid(v.dims, v.spacing, std::move(out));
}

Mask as_mask(const Volume& v) {
  std::vector<std::uint8_t> out(v.dims.size());
  std::visit([&](const auto& src) {
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = src[i] != 0 ? 1 : 0;
  }, v.data);
  return Mask(v.dims, v.spacing, std::move(out));
}

}  // namespace seguq::vgf
