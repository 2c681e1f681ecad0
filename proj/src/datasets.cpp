#include "jepagrasp/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "jepagrasp/error.hpp"
#include "jepagrasp/random.hpp"

namespace jepagrasp {

namespace fs = std::filesystem;
using Vec3 = std::array<double, 3>;

const char* shape_family_name(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::kBox: return "box";
    case ShapeFamily::kEllipsoid: return "ellipsoid";
    case ShapeFamily::kCylinder: return "cylinder";
    case ShapeFamily::kTorus: return "torus";
    case ShapeFamily::kCone: return "cone";
  }
  return "unknown";
}

void DatasetConfig::validate() const {
  if (num_categories < 2 || num_categories > kNumShapeFamilies) {
    throw ConfigError("dataset: num_categories must be in [2, 5]");
  }
  if (objects_per_category < 2) throw ConfigError("dataset: objects_per_category must be >= 2");
  if (samples_per_object < 1) throw ConfigError("dataset: samples_per_object must be >= 1");
  if (cloud_size < 1) throw ConfigError("dataset: cloud_size must be >= 1");
  if (num_modes < 1) throw ConfigError("dataset: num_modes must be >= 1");
  if (!(mode_gap >= 0.0) || !std::isfinite(mode_gap)) throw ConfigError("dataset: mode_gap must be >= 0");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("dataset: noise must be >= 0");
  if (!(low_quality_fraction >= 0.0 && low_quality_fraction <= 1.0)) {
    throw ConfigError("dataset: low_quality_fraction must be in [0, 1]");
  }
  if (!(mode_minority_rate >= 0.0 && mode_minority_rate <= 1.0)) {
    throw ConfigError("dataset: mode_minority_rate must be in [0, 1]");
  }
}

// ---- meshes ---------------------------------------------------------------

namespace {

struct MeshBuilder {
  Mesh mesh;

  std::uint32_t vertex(double x, double y, double z) {
    mesh.vertices.push_back({x, y, z});
    return std::uint32_t(mesh.vertices.size() - 1);
  }
  void tri(std::uint32_t a, std::uint32_t b, std::uint32_t c) { mesh.triangles.push_back({a, b, c}); }
  void quad(std::uint32_t a, std::uint32_t b, std::uint32_t c, std::uint32_t d) {
    tri(a, b, c);
    tri(a, c, d);
  }
};

Mesh box_mesh(const Vec3& h) {
  MeshBuilder b;
  for (int i = 0; i < 8; ++i) {
    b.vertex((i & 1) ? h[0] : -h[0], (i & 2) ? h[1] : -h[1], (i & 4) ? h[2] : -h[2]);
  }
  b.quad(0, 2, 3, 1);
  b.quad(4, 5, 7, 6);
  b.quad(0, 1, 5, 4);
  b.quad(2, 6, 7, 3);
  b.quad(0, 4, 6, 2);
  b.quad(1, 3, 7, 5);
  return b.mesh;
}

Mesh ellipsoid_mesh(const Vec3& r, std::size_t seg) {
  MeshBuilder b;
  const std::size_t rings = std::max<std::size_t>(2, seg / 2);
  const auto top = b.vertex(0, 0, r[2]);
  std::vector<std::uint32_t> grid;
  for (std::size_t i = 1; i < rings; ++i) {
    const double th = std::numbers::pi * double(i) / double(rings);
    for (std::size_t j = 0; j < seg; ++j) {
      const double ph = 2.0 * std::numbers::pi * double(j) / double(seg);
      grid.push_back(b.vertex(r[0] * std::sin(th) * std::cos(ph), r[1] * std::sin(th) * std::sin(ph), r[2] * std::cos(th)));
    }
  }
  const auto bottom = b.vertex(0, 0, -r[2]);
  auto at = [&](std::size_t i, std::size_t j) { return grid[i * seg + j % seg]; };
  for (std::size_t j = 0; j < seg; ++j) {
    b.tri(top, at(0, j), at(0, j + 1));
    b.tri(bottom, at(rings - 2, j + 1), at(rings - 2, j));
  }
  for (std::size_t i = 0; i + 1 < rings - 1; ++i) {
    for (std::size_t j = 0; j < seg; ++j) b.quad(at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
  }
  return b.mesh;
}

// Closed surface of revolution around z from a profile of (radius, z) pairs;
// zero-radius ends collapse to a single vertex.
Mesh revolve(const std::vector<std::array<double, 2>>& profile, std::size_t seg) {
  MeshBuilder b;
  std::vector<std::vector<std::uint32_t>> rings;
  for (const auto& [rad, z] : profile) {
    std::vector<std::uint32_t> ring;
    if (rad == 0.0) {
      ring.assign(seg, b.vertex(0, 0, z));
    } else {
      for (std::size_t j = 0; j < seg; ++j) {
        const double ph = 2.0 * std::numbers::pi * double(j) / double(seg);
        ring.push_back(b.vertex(rad * std::cos(ph), rad * std::sin(ph), z));
      }
    }
    rings.push_back(std::move(ring));
  }
  for (std::size_t i = 0; i + 1 < rings.size(); ++i) {
    for (std::size_t j = 0; j < seg; ++j) {
      const auto a = rings[i][j], c = rings[i + 1][(j + 1) % seg];
      const auto bb = rings[i + 1][j], d = rings[i][(j + 1) % seg];
      if (a != d) b.tri(a, bb, d);
      if (bb != c) b.tri(d, bb, c);
    }
  }
  return b.mesh;
}

Mesh torus_mesh(double big, double small, std::size_t seg) {
  MeshBuilder b;
  const std::size_t minor = std::max<std::size_t>(3, seg / 2);
  for (std::size_t i = 0; i < seg; ++i) {
    const double u = 2.0 * std::numbers::pi * double(i) / double(seg);
    for (std::size_t j = 0; j < minor; ++j) {
      const double v = 2.0 * std::numbers::pi * double(j) / double(minor);
      const double rr = big + small * std::cos(v);
      b.vertex(rr * std::cos(u), rr * std::sin(u), small * std::sin(v));
    }
  }
  auto at = [&](std::size_t i, std::size_t j) { return std::uint32_t((i % seg) * minor + j % minor); };
  for (std::size_t i = 0; i < seg; ++i) {
    for (std::size_t j = 0; j < minor; ++j) b.quad(at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
  }
  return b.mesh;
}

}  // namespace

Mesh make_shape_mesh(ShapeFamily family, const std::array<double, 3>& dims, std::size_t segments) {
  if (segments < 3) throw ConfigError("shape mesh: needs at least 3 segments");
  for (double d : dims) {
    if (!std::isfinite(d) || d < 0.0) throw ConfigError("shape mesh: dimensions must be finite and >= 0");
  }
  switch (family) {
    case ShapeFamily::kBox: return box_mesh(dims);
    case ShapeFamily::kEllipsoid: return ellipsoid_mesh(dims, segments);
    case ShapeFamily::kCylinder:
      return revolve({{0.0, dims[1]}, {dims[0], dims[1]}, {dims[0], -dims[1]}, {0.0, -dims[1]}}, segments);
    case ShapeFamily::kTorus: return torus_mesh(dims[0], dims[1], segments);
    case ShapeFamily::kCone: return revolve({{0.0, dims[1]}, {dims[0], -dims[1]}, {0.0, -dims[1]}}, segments);
  }
  throw ConfigError("shape mesh: unknown family");
}

std::array<double, 3> random_shape_dims(ShapeFamily family, Rng& rng) {
  switch (family) {
    case ShapeFamily::kBox:
    case ShapeFamily::kEllipsoid:
      return {rng.uniform(0.4, 1.0), rng.uniform(0.4, 1.0), rng.uniform(0.4, 1.0)};
    case ShapeFamily::kCylinder: return {rng.uniform(0.3, 0.8), rng.uniform(0.3, 1.0), 0.0};
    case ShapeFamily::kTorus: return {rng.uniform(0.6, 1.0), rng.uniform(0.15, 0.35), 0.0};
    case ShapeFamily::kCone: return {rng.uniform(0.4, 0.9), rng.uniform(0.4, 0.9), 0.0};
  }
  throw ConfigError("shape dims: unknown family");
}

std::array<double, 3> aspect_of(const Mesh& mesh) {
  if (mesh.vertices.empty()) throw ConfigError("aspect: empty mesh");
  Vec3 lo = mesh.vertices[0], hi = mesh.vertices[0];
  for (const auto& v : mesh.vertices) {
    for (std::size_t a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], v[a]);
      hi[a] = std::max(hi[a], v[a]);
    }
  }
  Vec3 ext{hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]};
  const double m = std::max({ext[0], ext[1], ext[2]});
  if (!(m > 0.0)) throw ConfigError("aspect: degenerate mesh");
  for (auto& e : ext) e /= m;
  return ext;
}

// ---- labels ---------------------------------------------------------------

namespace {

struct JointTables {
  std::array<Vec3, kNumJoints> freq{};
  std::array<std::array<double, kNumJoints>, kNumShapeFamilies> phase{};

  JointTables() {
    Rng rng(0x6a6f696e74ULL);
    for (auto& w : freq) {
      for (auto& c : w) c = rng.uniform(-2.0, 2.0);
    }
    for (auto& row : phase) {
      for (auto& p : row) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
  }
};

const JointTables& joint_tables() {
  static const JointTables tables;
  return tables;
}

}  // namespace

JointVector grasp_function(int category_id, const std::array<double, 3>& aspect,
                           const std::array<double, 3>& direction) {
  if (category_id < 0 || std::size_t(category_id) >= kNumShapeFamilies) {
    throw ConfigError("grasp_function: unknown category " + std::to_string(category_id));
  }
  const auto& t = joint_tables();
  JointVector j{};
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    const double arg = t.freq[i][0] * direction[0] + t.freq[i][1] * direction[1] + t.freq[i][2] * direction[2] +
                       t.phase[std::size_t(category_id)][i];
    j[i] = 0.5 * std::sin(arg) + 0.3 * (aspect[i % 3] - 0.6);
  }
  return j;
}

double mode_offset(std::size_t m, std::size_t num_modes, double gap) {
  return (double(m) - 0.5 * double(num_modes - 1)) * gap;
}

std::size_t preferred_mode(const std::array<double, 3>& direction, std::size_t num_modes) {
  const double u = 0.5 * (std::clamp(direction[2], -1.0, 1.0) + 1.0);
  return std::min(num_modes - 1, std::size_t(u * double(num_modes)));
}

namespace {

using Quat = std::array<double, 4>;

Quat qmul(const Quat& a, const Quat& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

}  // namespace

HandPose approach_pose(const std::array<double, 3>& direction, double roll) {
  const double n = std::sqrt(direction[0] * direction[0] + direction[1] * direction[1] + direction[2] * direction[2]);
  if (!(n > 0.0)) throw ConfigError("approach_pose: zero direction");
  const Vec3 d{direction[0] / n, direction[1] / n, direction[2] / n};
  const Vec3 v{-d[0], -d[1], -d[2]};  // hand z-axis looks at the object
  Quat align;
  if (v[2] < -1.0 + 1e-12) {
    align = {0.0, 1.0, 0.0, 0.0};
  } else {
    align = {1.0 + v[2], -v[1], v[0], 0.0};
  }
  const Quat spin{std::cos(0.5 * roll), v[0] * std::sin(0.5 * roll), v[1] * std::sin(0.5 * roll),
                  v[2] * std::sin(0.5 * roll)};
  return HandPose::canonical({1.5 * d[0], 1.5 * d[1], 1.5 * d[2]}, qmul(spin, align));
}

// ---- generation -----------------------------------------------------------

namespace {

std::string object_name(std::size_t category, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%03zu", shape_family_name(ShapeFamily(category)), index);
  return buf;
}

Vec3 random_direction(Rng& rng) {
  for (;;) {
    Vec3 d{rng.normal(), rng.normal(), rng.normal()};
    const double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    if (n > 1e-9) return {d[0] / n, d[1] / n, d[2] / n};
  }
}

}  // namespace

Dataset synthesize_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  const JointLimits limits;
  Dataset ds;
  ds.manifest.generator = cfg;

  struct Generated {
    ObjectEntry entry;
    PointCloud cloud;
    std::vector<GraspSample> samples;
  };
  std::vector<Generated> objects;
  for (std::size_t c = 0; c < cfg.num_categories; ++c) {
    ds.manifest.categories.push_back({int(c), shape_family_name(ShapeFamily(c)), cfg.objects_per_category});
    for (std::size_t i = 0; i < cfg.objects_per_category; ++i) {
      Rng rng = Rng::derive(cfg.seed, c * cfg.objects_per_category + i);
      const auto family = ShapeFamily(c);
      const Mesh mesh = make_shape_mesh(family, random_shape_dims(family, rng));
      const auto aspect = aspect_of(mesh);
      Generated g;
      g.entry.object_id = object_name(c, i);
      g.entry.category_id = int(c);
      g.entry.cloud_file = "clouds/" + g.entry.object_id + ".bin";
      g.cloud = sample_mesh(mesh, cfg.cloud_size, rng.next(), g.entry.object_id);
      for (std::size_t s = 0; s < cfg.samples_per_object; ++s) {
        const Vec3 d = random_direction(rng);
        const double roll = rng.uniform(0.0, 2.0 * std::numbers::pi);
        GraspSample gs;
        gs.object_id = g.entry.object_id;
        gs.category_id = int(c);
        gs.pose = approach_pose(d, roll);
        std::size_t mode = 0;
        if (cfg.num_modes > 1) {
          mode = preferred_mode(d, cfg.num_modes);
          if (rng.uniform() < cfg.mode_minority_rate) {
            const std::size_t r = rng.below(cfg.num_modes - 1);
            mode = r < mode ? r : r + 1;
          }
        }
        gs.mode_id = int(mode);
        gs.joints = grasp_function(int(c), aspect, d);
        gs.joints[0] += mode_offset(mode, cfg.num_modes, cfg.mode_gap);
        for (std::size_t k = 0; k < kNumJoints; ++k) {
          gs.joints[k] = std::clamp(gs.joints[k] + cfg.noise * rng.normal(), limits.lo[k], limits.hi[k]);
        }
        gs.quality = rng.uniform() < cfg.low_quality_fraction ? rng.uniform(0.0, kDefaultMinQuality)
                                                               : rng.uniform(kDefaultMinQuality, 3.0);
        g.samples.push_back(std::move(gs));
      }
      objects.push_back(std::move(g));
    }
  }
  std::sort(objects.begin(), objects.end(),
            [](const Generated& a, const Generated& b) { return a.entry.object_id < b.entry.object_id; });
  for (auto& g : objects) {
    ds.manifest.objects.push_back(g.entry);
    ds.clouds.push_back(std::move(g.cloud));
    for (auto& s : g.samples) ds.samples.push_back(std::move(s));
  }
  return ds;
}

// ---- persistence ----------------------------------------------------------

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError(path.string() + ": read failed");
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << text;
  out.flush();
  if (!out) throw IoError(path.string() + ": write failed");
}

const char* const kCsvHeader =
    "object_id,category_id,tx,ty,tz,qw,qx,qy,qz,j0,j1,j2,j3,j4,j5,j6,j7,j8,j9,j10,j11,quality,mode_id";

}  // namespace

std::string DatasetManifest::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "jepagrasp-dataset";
  j["version"] = version;
  const auto& g = generator;
  j["generator"] = {{"seed", g.seed},
                    {"num_categories", g.num_categories},
                    {"objects_per_category", g.objects_per_category},
                    {"samples_per_object", g.samples_per_object},
                    {"cloud_size", g.cloud_size},
                    {"num_modes", g.num_modes},
                    {"mode_gap", g.mode_gap},
                    {"noise", g.noise},
                    {"low_quality_fraction", g.low_quality_fraction},
                    {"mode_minority_rate", g.mode_minority_rate}};
  j["categories"] = nlohmann::ordered_json::array();
  for (const auto& c : categories) {
    j["categories"].push_back({{"category_id", c.category_id}, {"name", c.name}, {"objects", c.objects}});
  }
  j["objects"] = nlohmann::ordered_json::array();
  for (const auto& o : objects) {
    j["objects"].push_back({{"object_id", o.object_id}, {"category_id", o.category_id}, {"cloud", o.cloud_file}});
  }
  return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(origin + ": invalid JSON: " + e.what());
  }
  DatasetManifest m;
  try {
    if (j.value("format", std::string()) != "jepagrasp-dataset") throw FormatError(origin + ": not a dataset manifest");
    m.version = j.at("version").get<int>();
    if (m.version != kDatasetFormatVersion) {
      throw FormatError(origin + ": unsupported manifest version " + std::to_string(m.version) + " (expected " +
                        std::to_string(kDatasetFormatVersion) + ")");
    }
    const auto& g = j.at("generator");
    auto& cfg = m.generator;
    cfg.seed = g.at("seed").get<std::uint64_t>();
    cfg.num_categories = g.at("num_categories").get<std::size_t>();
    cfg.objects_per_category = g.at("objects_per_category").get<std::size_t>();
    cfg.samples_per_object = g.at("samples_per_object").get<std::size_t>();
    cfg.cloud_size = g.at("cloud_size").get<std::size_t>();
    cfg.num_modes = g.at("num_modes").get<std::size_t>();
    cfg.mode_gap = g.at("mode_gap").get<double>();
    cfg.noise = g.at("noise").get<double>();
    cfg.low_quality_fraction = g.at("low_quality_fraction").get<double>();
    cfg.mode_minority_rate = g.at("mode_minority_rate").get<double>();
    for (const auto& c : j.at("categories")) {
      m.categories.push_back({c.at("category_id").get<int>(), c.at("name").get<std::string>(),
                              c.at("objects").get<std::size_t>()});
    }
    for (const auto& o : j.at("objects")) {
      m.objects.push_back(
          {o.at("object_id").get<std::string>(), o.at("category_id").get<int>(), o.at("cloud").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(origin + ": malformed manifest: " + e.what());
  }
  std::map<int, std::size_t> counts;
  for (const auto& o : m.objects) ++counts[o.category_id];
  for (const auto& c : m.categories) {
    if (counts[c.category_id] != c.objects) {
      throw IoError(origin + ": category '" + c.name + "' lists " + std::to_string(c.objects) + " objects, found " +
                    std::to_string(counts[c.category_id]));
    }
  }
  if (!std::is_sorted(m.objects.begin(), m.objects.end(),
                      [](const ObjectEntry& a, const ObjectEntry& b) { return a.object_id < b.object_id; })) {
    throw IoError(origin + ": objects are not sorted by id");
  }
  return m;
}

std::size_t DatasetManifest::index_of(const std::string& object_id) const {
  auto it = std::lower_bound(objects.begin(), objects.end(), object_id,
                             [](const ObjectEntry& o, const std::string& id) { return o.object_id < id; });
  if (it == objects.end() || it->object_id != object_id) throw ConfigError("unknown object '" + object_id + "'");
  return std::size_t(it - objects.begin());
}

std::string grasps_csv(std::span<const GraspSample> samples) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& s : samples) {
    out += s.object_id;
    out += ',' + std::to_string(s.category_id);
    for (double t : s.pose.translation) out += ',' + format_double(t);
    for (double q : s.pose.quaternion) out += ',' + format_double(q);
    for (double j : s.joints) out += ',' + format_double(j);
    out += ',' + format_double(s.quality);
    out += ',' + std::to_string(s.mode_id);
    out += '\n';
  }
  return out;
}

namespace {

template <typename N>
N parse_number(std::string_view field, const std::string& where) {
  N v{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw IoError(where + ": bad number '" + std::string(field) + "'");
  }
  return v;
}

}  // namespace

std::vector<GraspSample> parse_grasps_csv(const std::string& text, const std::string& origin) {
  std::vector<GraspSample> out;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw IoError(origin + ": missing or unexpected header");
  std::size_t lineno = 1;
  const std::size_t expected = 2 + 3 + 4 + kNumJoints + 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      f.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (f.size() != expected) {
      throw IoError(where + ": expected " + std::to_string(expected) + " fields, got " + std::to_string(f.size()));
    }
    GraspSample s;
    s.object_id = std::string(f[0]);
    s.category_id = parse_number<int>(f[1], where);
    std::size_t k = 2;
    for (auto& t : s.pose.translation) t = parse_number<double>(f[k++], where);
    for (auto& q : s.pose.quaternion) q = parse_number<double>(f[k++], where);
    for (auto& j : s.joints) j = parse_number<double>(f[k++], where);
    s.quality = parse_number<double>(f[k++], where);
    s.mode_id = parse_number<int>(f[k++], where);
    if (!s.pose.valid(1e-6)) throw IoError(where + ": pose quaternion is not a canonical unit quaternion");
    if (!(s.quality >= 0.0) || !std::isfinite(s.quality)) throw IoError(where + ": quality must be finite and >= 0");
    out.push_back(std::move(s));
  }
  return out;
}

DatasetManifest generate_dataset(const DatasetConfig& cfg, const std::string& root, bool overwrite) {
  const fs::path base(root);
  if (fs::exists(base / "manifest.json") && !overwrite) {
    throw IoError((base / "manifest.json").string() + ": already exists (pass --overwrite)");
  }
  Dataset ds = synthesize_dataset(cfg);
  std::error_code ec;
  fs::create_directories(base / "clouds", ec);
  if (ec) throw IoError((base / "clouds").string() + ": " + ec.message());
  for (std::size_t i = 0; i < ds.clouds.size(); ++i) {
    write_cloud((base / ds.manifest.objects[i].cloud_file).string(), ds.clouds[i]);
  }
  write_text(base / "grasps.csv", grasps_csv(ds.samples));
  write_text(base / "manifest.json", ds.manifest.to_json());
  return ds.manifest;
}

std::vector<GraspSample> filter_quality(std::span<const GraspSample> samples, double min_score) {
  std::vector<GraspSample> out;
  for (const auto& s : samples) {
    if (!(s.quality < min_score)) out.push_back(s);
  }
  return out;
}

Dataset load_dataset(const std::string& root) {
  const fs::path base(root);
  const fs::path manifest_path = base / "manifest.json";
  Dataset ds;
  ds.manifest = DatasetManifest::from_json(read_text(manifest_path), manifest_path.string());
  const auto& cfg = ds.manifest.generator;
  for (const auto& o : ds.manifest.objects) {
    const fs::path p = base / o.cloud_file;
    PointCloud c = read_cloud(p.string(), o.object_id);
    if (c.size() != cfg.cloud_size) {
      throw IoError(p.string() + ": expected " + std::to_string(cfg.cloud_size) + " points, found " +
                    std::to_string(c.size()));
    }
    ds.clouds.push_back(std::move(c));
  }
  const fs::path csv_path = base / "grasps.csv";
  auto samples = parse_grasps_csv(read_text(csv_path), csv_path.string());
  const JointLimits limits;
  std::vector<std::vector<GraspSample>> per_object(ds.manifest.objects.size());
  for (auto& s : samples) {
    std::size_t idx;
    try {
      idx = ds.manifest.index_of(s.object_id);
    } catch (const ConfigError&) {
      throw IoError(csv_path.string() + ": sample references unknown object '" + s.object_id + "'");
    }
    if (ds.manifest.objects[idx].category_id != s.category_id) {
      throw IoError(csv_path.string() + ": category mismatch for '" + s.object_id + "'");
    }
    if (!limits.contains(s.joints)) throw IoError(csv_path.string() + ": joints outside limits for '" + s.object_id + "'");
    if (s.mode_id < 0 || std::size_t(s.mode_id) >= cfg.num_modes) {
      throw IoError(csv_path.string() + ": mode_id out of range for '" + s.object_id + "'");
    }
    per_object[idx].push_back(std::move(s));
  }
  for (std::size_t i = 0; i < per_object.size(); ++i) {
    if (per_object[i].size() != cfg.samples_per_object) {
      throw IoError(csv_path.string() + ": object '" + ds.manifest.objects[i].object_id + "' has " +
                    std::to_string(per_object[i].size()) + " samples, manifest says " +
                    std::to_string(cfg.samples_per_object));
    }
    for (auto& s : per_object[i]) ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace jepagrasp
