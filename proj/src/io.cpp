#include "serialtrack/io.hpp"

#include <json.hpp>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace serialtrack {

namespace fs = std::filesystem;

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";  // folds -0
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

void write_text(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  os << content;
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

namespace {

static_assert(std::endian::native == std::endian::little, "raw images are little-endian");

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const fs::path& where) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (e[-1] == ' ' || e[-1] == '\t' || e[-1] == '\r')) --e;
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e)
    throw Error(ErrorCode::IoError, "bad number '" + s + "' in " + where.string());
  return v;
}

const char* axis_name(int a) { return a == 0 ? "x" : a == 1 ? "y" : "z"; }

}  // namespace

template <int Dim>
fs::path write_image(const fs::path& stem, const Image<Dim>& image) {
  fs::path raw = stem;
  raw += ".raw";
  fs::path header = stem;
  header += ".json";
  std::error_code ec;
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path(), ec);

  std::vector<float> data(image.data.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(image.data[i]);
  std::ofstream os(raw, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + raw.string());
  os.write(reinterpret_cast<const char*>(data.data()),
           static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + raw.string());

  nlohmann::ordered_json j;
  j["dims"] = std::vector<int>(image.dims.begin(), image.dims.end());
  j["dtype"] = "f32";
  j["order"] = "row-major";
  j["data"] = raw.filename().string();
  write_text(header, j.dump(2) + "\n");
  return header;
}

template <int Dim>
Image<Dim> read_image(const fs::path& header) {
  std::ifstream is(header);
  if (!is) throw Error(ErrorCode::InputMissing, "missing image header " + header.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, "bad image header " + header.string() + ": " + e.what());
  }
  if (!j.contains("dims") || !j["dims"].is_array())
    throw Error(ErrorCode::IoError, "image header lacks dims: " + header.string());
  if (j.value("dtype", "f32") != "f32")
    throw Error(ErrorCode::IoError, "unsupported dtype in " + header.string());
  if (j.value("order", "row-major") != "row-major")
    throw Error(ErrorCode::IoError, "unsupported order in " + header.string());
  const auto dims = j["dims"].get<std::vector<int>>();
  if (static_cast<int>(dims.size()) != Dim)
    throw Error(ErrorCode::DimMismatch, "image " + header.string() + " has " +
                                            std::to_string(dims.size()) + " dims");
  Extents<Dim> ext{};
  for (int a = 0; a < Dim; ++a) {
    if (dims[a] < 1) throw Error(ErrorCode::IoError, "bad dims in " + header.string());
    ext[a] = dims[a];
  }
  fs::path raw = header;
  raw.replace_extension(".raw");
  if (j.contains("data")) raw = header.parent_path() / j["data"].get<std::string>();

  Image<Dim> img(ext);
  std::ifstream rs(raw, std::ios::binary);
  if (!rs) throw Error(ErrorCode::InputMissing, "missing image data " + raw.string());
  std::vector<float> data(img.data.size());
  rs.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (rs.gcount() != static_cast<std::streamsize>(data.size() * sizeof(float)))
    throw Error(ErrorCode::IoError, "short image data " + raw.string());
  for (std::size_t i = 0; i < data.size(); ++i) img.data[i] = data[i];
  return img;
}

template <int Dim>
void write_particles_csv(std::ostream& os, const ParticleSet<Dim>& particles) {
  os << "id";
  for (int a = 0; a < Dim; ++a) os << ',' << axis_name(a);
  os << '\n';
  for (std::size_t i = 0; i < particles.positions.size(); ++i) {
    os << i;
    for (int a = 0; a < Dim; ++a) os << ',' << format_number(particles.positions[i][a]);
    os << '\n';
  }
}

template <int Dim>
ParticleSet<Dim> read_particles_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::InputMissing, "missing particle file " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorCode::IoError, "empty file " + path.string());
  const auto head = split(line, ',');
  // accept id,x,y[,z] or x,y[,z]
  const int offset = !head.empty() && head[0].rfind("id", 0) == 0 ? 1 : 0;
  if (static_cast<int>(head.size()) - offset != Dim)
    throw Error(ErrorCode::DimMismatch, "particle file " + path.string() + " is not " +
                                            std::to_string(Dim) + "D");
  ParticleSet<Dim> out;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line, ',');
    if (static_cast<int>(cells.size()) != Dim + offset)
      throw Error(ErrorCode::IoError, "bad row in " + path.string() + ": " + line);
    Vec<Dim> p;
    for (int a = 0; a < Dim; ++a) p[a] = parse_double(cells[a + offset], path);
    out.positions.push_back(p);
  }
  return out;
}

template <int Dim>
void write_matches_csv(std::ostream& os, const MatchSet<Dim>& matches,
                       const std::vector<Vec<Dim>>& a_positions) {
  os << "idA";
  for (int a = 0; a < Dim; ++a) os << ',' << axis_name(a) << 'A';
  for (int a = 0; a < Dim; ++a) os << ",u" << axis_name(a);
  os << '\n';
  for (const auto& m : matches.matches) {
    if (!m.valid) continue;
    os << m.a;
    for (int a = 0; a < Dim; ++a) os << ',' << format_number(a_positions[m.a][a]);
    for (int a = 0; a < Dim; ++a) os << ',' << format_number(m.u[a]);
    os << '\n';
  }
}

template <int Dim>
void write_grid_csv(std::ostream& os, const GridField<Dim>& field) {
  for (int a = 0; a < Dim; ++a) os << (a ? "," : "") << axis_name(a);
  for (int a = 0; a < Dim; ++a) os << ",u" << axis_name(a);
  os << '\n';
  for (std::size_t i = 0; i < field.grid.node_count(); ++i) {
    const Vec<Dim> x = field.grid.node_position(i);
    for (int a = 0; a < Dim; ++a) os << (a ? "," : "") << format_number(x[a]);
    for (int a = 0; a < Dim; ++a) os << ',' << format_number(field.values(a, i));
    os << '\n';
  }
}

#define ST_IO_INSTANTIATE(D)                                                               \
  template fs::path write_image<D>(const fs::path&, const Image<D>&);                      \
  template Image<D> read_image<D>(const fs::path&);                                        \
  template void write_particles_csv<D>(std::ostream&, const ParticleSet<D>&);              \
  template ParticleSet<D> read_particles_csv<D>(const fs::path&);                          \
  template void write_matches_csv<D>(std::ostream&, const MatchSet<D>&,                    \
                                     const std::vector<Vec<D>>&);                          \
  template void write_grid_csv<D>(std::ostream&, const GridField<D>&);

ST_IO_INSTANTIATE(2)
ST_IO_INSTANTIATE(3)

}  // namespace serialtrack
