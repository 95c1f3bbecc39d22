#include "stfuse/grid_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace stfuse {
namespace {

static_assert(std::endian::native == std::endian::little, "grid_io assumes a little-endian host");

constexpr char kMagic[4] = {'B', 'E', 'V', 'G'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw std::runtime_error("read_grid: truncated stream");
  return v;
}

}  // namespace

void write_grid(std::ostream& os, const FeatureGrid& g) {
  os.write(kMagic, sizeof(kMagic));
  put<std::int32_t>(os, g.rows());
  put<std::int32_t>(os, g.cols());
  put<std::int32_t>(os, g.channels());
  put<double>(os, g.dx());
  put<double>(os, g.dy());
  put<std::int32_t>(os, g.frame().vehicle);
  put<double>(os, g.frame().timestamp);
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c)
      for (int ch = 0; ch < g.channels(); ++ch) put<double>(os, g(r, c, ch));
  if (!os) throw std::runtime_error("write_grid: stream error");
}

FeatureGrid read_grid(std::istream& is) {
  char magic[4];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("read_grid: bad magic");
  const auto H = get<std::int32_t>(is);
  const auto W = get<std::int32_t>(is);
  const auto C = get<std::int32_t>(is);
  const auto dx = get<double>(is);
  const auto dy = get<double>(is);
  FrameTag tag;
  tag.vehicle = get<std::int32_t>(is);
  tag.timestamp = get<double>(is);
  FeatureGrid g(H, W, C, dx, dy, tag);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c)
      for (int ch = 0; ch < C; ++ch) g(r, c, ch) = get<double>(is);
  return g;
}

void save_grid(const std::string& path, const FeatureGrid& g) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_grid: cannot open " + path);
  write_grid(os, g);
}

FeatureGrid load_grid(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_grid: cannot open " + path);
  return read_grid(is);
}

std::string ascii_dump(const FeatureGrid& g, int channel, int precision) {
  std::ostringstream os;
  os << "# grid " << g.rows() << "x" << g.cols() << "x" << g.channels() << " dx=" << g.dx()
     << " dy=" << g.dy() << " vehicle=" << g.frame().vehicle << " t=" << g.frame().timestamp
     << " channel=" << channel << "\n";
  os << std::fixed << std::setprecision(precision);
  // Top row is +y so the dump reads like a map.
  for (int r = g.rows() - 1; r >= 0; --r) {
    for (int c = 0; c < g.cols(); ++c) {
      if (c) os << ' ';
      os << g(r, c, channel);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace stfuse
