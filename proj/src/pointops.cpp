#include "jepagrasp/pointops.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "jepagrasp/error.hpp"
#include "jepagrasp/random.hpp"

namespace jepagrasp {

void TokenizerConfig::validate() const {
  if (cloud_size == 0) throw ConfigError("tokenizer: cloud_size must be >= 1");
  if (num_groups == 0 || num_groups > cloud_size) {
    throw ConfigError("tokenizer: num_groups must be in [1, cloud_size]");
  }
  if (group_size == 0) throw ConfigError("tokenizer: group_size must be >= 1");
  if (!(radius > 0.0)) throw ConfigError("tokenizer: radius must be > 0");
  if (embed_dim == 0 || hidden_dim == 0) throw ConfigError("tokenizer: embedding widths must be >= 1");
}

// ---- meshes ---------------------------------------------------------------

namespace {

long parse_index(const std::string& token, std::size_t vertex_count, const std::string& origin, int line) {
  const std::string head = token.substr(0, token.find('/'));
  long idx = 0;
  try {
    std::size_t used = 0;
    idx = std::stol(head, &used);
    if (used != head.size()) throw std::invalid_argument(head);
  } catch (const std::exception&) {
    throw IoError(origin + ":" + std::to_string(line) + ": bad face index '" + token + "'");
  }
  const long resolved = idx < 0 ? long(vertex_count) + idx : idx - 1;
  if (idx == 0 || resolved < 0 || resolved >= long(vertex_count)) {
    throw IoError(origin + ":" + std::to_string(line) + ": face index " + token + " out of range");
  }
  return resolved;
}

}  // namespace

Mesh parse_obj(std::istream& in, const std::string& origin) {
  Mesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      std::array<double, 3> v{};
      if (!(ls >> v[0] >> v[1] >> v[2])) {
        throw IoError(origin + ":" + std::to_string(line_no) + ": malformed vertex");
      }
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<long> idx;
      std::string tok;
      while (ls >> tok) idx.push_back(parse_index(tok, mesh.vertices.size(), origin, line_no));
      if (idx.size() < 3) throw IoError(origin + ":" + std::to_string(line_no) + ": face with < 3 vertices");
      for (std::size_t i = 1; i + 1 < idx.size(); ++i) {
        mesh.triangles.push_back({std::uint32_t(idx[0]), std::uint32_t(idx[i]), std::uint32_t(idx[i + 1])});
      }
    }
  }
  if (mesh.triangles.empty()) throw IoError(origin + ": mesh has no faces");
  return mesh;
}

Mesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mesh " + path);
  return parse_obj(in, path);
}

void write_obj(std::ostream& out, const Mesh& mesh) {
  out.precision(17);
  for (const auto& v : mesh.vertices) out << "v " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

namespace {

double triangle_area(const Mesh& mesh, const std::array<std::uint32_t, 3>& t) {
  const auto& a = mesh.vertices.at(t[0]);
  const auto& b = mesh.vertices.at(t[1]);
  const auto& c = mesh.vertices.at(t[2]);
  const double ux = b[0] - a[0], uy = b[1] - a[1], uz = b[2] - a[2];
  const double vx = c[0] - a[0], vy = c[1] - a[1], vz = c[2] - a[2];
  const double cx = uy * vz - uz * vy, cy = uz * vx - ux * vz, cz = ux * vy - uy * vx;
  return 0.5 * std::sqrt(cx * cx + cy * cy + cz * cz);
}

}  // namespace

std::vector<std::array<double, 3>> sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("sample_mesh: n must be >= 1");
  std::vector<double> cumulative;
  cumulative.reserve(mesh.triangles.size());
  double total = 0.0;
  for (const auto& t : mesh.triangles) {
    total += triangle_area(mesh, t);
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) throw IoError("sample_mesh: every triangle is degenerate");

  Rng rng(seed);
  std::vector<std::array<double, 3>> out(n);
  for (auto& p : out) {
    const double u = rng.uniform() * total;
    // upper_bound never lands on a zero-area triangle
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    const auto& tri = mesh.triangles[std::size_t(it - cumulative.begin())];
    const auto& a = mesh.vertices[tri[0]];
    const auto& b = mesh.vertices[tri[1]];
    const auto& c = mesh.vertices[tri[2]];
    const double s = std::sqrt(rng.uniform());
    const double r = rng.uniform();
    const double wa = 1.0 - s, wb = s * (1.0 - r), wc = s * r;
    for (int d = 0; d < 3; ++d) p[d] = wa * a[d] + wb * b[d] + wc * c[d];
  }
  return out;
}

CloudNormalization normalization_for(std::span<const std::array<double, 3>> points) {
  CloudNormalization norm;
  if (points.empty()) return norm;
  for (const auto& p : points)
    for (int d = 0; d < 3; ++d) norm.center[d] += p[d];
  for (auto& c : norm.center) c /= double(points.size());
  double max_norm = 0.0;
  for (const auto& p : points) {
    double s = 0.0;
    for (int d = 0; d < 3; ++d) s += (p[d] - norm.center[d]) * (p[d] - norm.center[d]);
    max_norm = std::max(max_norm, std::sqrt(s));
  }
  norm.scale = max_norm > 0.0 ? 1.0 / max_norm : 1.0;
  return norm;
}

PointCloud sample_mesh(const Mesh& mesh, std::size_t n, std::uint64_t seed, std::string object_id) {
  const auto raw = sample_surface(mesh, n, seed);
  const auto norm = normalization_for(raw);
  PointCloud cloud{std::move(object_id), {}};
  cloud.points.reserve(n);
  for (const auto& p : raw) {
    cloud.points.push_back({float((p[0] - norm.center[0]) * norm.scale), float((p[1] - norm.center[1]) * norm.scale),
                            float((p[2] - norm.center[2]) * norm.scale)});
  }
  return cloud;
}

// ---- FPS / kNN ------------------------------------------------------------

namespace {

double squared_distance(const Point3& a, const Point3& b) {
  const double dx = double(a[0]) - b[0], dy = double(a[1]) - b[1], dz = double(a[2]) - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

std::size_t extreme_point(std::span<const Point3> points) {
  std::size_t best = 0;
  double best_norm = -1.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double n = squared_distance(points[i], Point3{0.f, 0.f, 0.f});
    if (n > best_norm) {
      best_norm = n;
      best = i;
    }
  }
  return best;
}

std::vector<std::size_t> fps(const PointCloud& cloud, std::size_t k) {
  if (cloud.points.empty()) throw ConfigError("fps: empty cloud");
  return fps(cloud, k, extreme_point(cloud.points));
}

std::vector<std::size_t> fps(const PointCloud& cloud, std::size_t k, std::size_t start) {
  const std::size_t n = cloud.size();
  if (k == 0 || k > n) {
    throw ConfigError("fps: k=" + std::to_string(k) + " must be in [1, " + std::to_string(n) + "]");
  }
  if (start >= n) throw ConfigError("fps: start index out of range");
  std::vector<std::size_t> picked{start};
  picked.reserve(k);
  std::vector<double> min_dist(n);
  for (std::size_t i = 0; i < n; ++i) min_dist[i] = squared_distance(cloud.points[i], cloud.points[start]);
  std::vector<bool> taken(n, false);
  taken[start] = true;
  while (picked.size() < k) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (best == n || min_dist[i] > min_dist[best]) best = i;
    }
    picked.push_back(best);
    taken[best] = true;
    for (std::size_t i = 0; i < n; ++i) {
      min_dist[i] = std::min(min_dist[i], squared_distance(cloud.points[i], cloud.points[best]));
    }
  }
  return picked;
}

std::vector<std::size_t> group_knn(const PointCloud& cloud, std::span<const std::size_t> centers,
                                   std::size_t group_size, double radius) {
  const std::size_t n = cloud.size();
  if (group_size == 0) throw ConfigError("group_knn: group size must be >= 1");
  if (centers.empty()) throw ConfigError("group_knn: no centers");
  const std::size_t take = std::min(group_size, n);
  const double r2 = radius * radius;
  std::vector<std::size_t> members;
  members.reserve(centers.size() * group_size);
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t c : centers) {
    if (c >= n) throw ConfigError("group_knn: center index out of range");
    for (std::size_t i = 0; i < n; ++i) dist[i] = {squared_distance(cloud.points[i], cloud.points[c]), i};
    std::partial_sort(dist.begin(), dist.begin() + std::ptrdiff_t(take), dist.end());
    for (std::size_t j = 0; j < group_size; ++j) {
      if (j >= take || dist[j].first > r2) {
        members.push_back(c);
      } else {
        members.push_back(dist[j].second);
      }
    }
  }
  return members;
}

PatchSet PatchSet::permuted(std::span<const std::size_t> order) const {
  if (order.size() != num_groups()) throw ConfigError("patch permutation has wrong length");
  PatchSet out;
  out.group_size = group_size;
  for (std::size_t src : order) {
    out.center_indices.push_back(center_indices.at(src));
    out.centers.push_back(centers.at(src));
    out.members.insert(out.members.end(), members.begin() + std::ptrdiff_t(src * group_size),
                       members.begin() + std::ptrdiff_t((src + 1) * group_size));
  }
  return out;
}

PatchSet make_patches(const PointCloud& cloud, const TokenizerConfig& cfg) {
  cfg.validate();
  PatchSet patches;
  patches.group_size = cfg.group_size;
  patches.center_indices = fps(cloud, cfg.num_groups);
  for (std::size_t c : patches.center_indices) patches.centers.push_back(cloud.points[c]);
  patches.members = group_knn(cloud, patches.center_indices, cfg.group_size, cfg.radius);
  return patches;
}

template <typename T>
tc::Tensor<T> relative_members(const PointCloud& cloud, const PatchSet& patches) {
  const std::size_t g = patches.num_groups(), s = patches.group_size;
  tc::Tensor<T> out({g * s, 3});
  for (std::size_t p = 0; p < g; ++p) {
    const Point3& c = patches.centers[p];
    for (std::size_t j = 0; j < s; ++j) {
      const Point3& q = cloud.points.at(patches.members[p * s + j]);
      for (std::size_t d = 0; d < 3; ++d) out.at(p * s + j, d) = T(q[d]) - T(c[d]);
    }
  }
  return out;
}

template <typename T>
void PatchEmbedder<T>::init(tc::ParameterSet<T>& params, const std::string& prefix, const TokenizerConfig& cfg,
                            Rng& rng) {
  fc1_.init(params, prefix + ".fc1", 3, cfg.hidden_dim, rng);
  fc2_.init(params, prefix + ".fc2", cfg.hidden_dim, cfg.embed_dim, rng);
  group_size_ = cfg.group_size;
}

template <typename T>
tc::Var<T> PatchEmbedder<T>::forward(tc::Graph<T>& g, const tc::ParameterSet<T>& params, tc::Var<T> relative) const {
  auto h = tc::relu(fc1_(g, params, relative));
  return tc::segment_max(fc2_(g, params, h), group_size_);
}

template tc::Tensor<float> relative_members(const PointCloud&, const PatchSet&);
template tc::Tensor<double> relative_members(const PointCloud&, const PatchSet&);
template class PatchEmbedder<float>;
template class PatchEmbedder<double>;

// ---- cloud cache ----------------------------------------------------------

namespace {

template <typename U>
void put_le(std::vector<char>& out, U value) {
  char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
  out.insert(out.end(), std::begin(bytes), std::end(bytes));
}

template <typename U>
U get_le(const char* p) {
  char bytes[sizeof(U)];
  std::memcpy(bytes, p, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
  U value;
  std::memcpy(&value, bytes, sizeof(U));
  return value;
}

}  // namespace

std::vector<char> cloud_bytes(const PointCloud& cloud) {
  std::vector<char> out;
  out.reserve(4 + cloud.size() * 12);
  put_le<std::uint32_t>(out, std::uint32_t(cloud.size()));
  for (const auto& p : cloud.points)
    for (float v : p) put_le<float>(out, v);
  return out;
}

PointCloud cloud_from_bytes(std::span<const char> bytes, std::string object_id, const std::string& origin) {
  if (bytes.size() < 4) throw IoError("cloud file " + origin + " is truncated");
  const auto n = get_le<std::uint32_t>(bytes.data());
  if (bytes.size() != 4 + std::size_t(n) * 12) {
    throw IoError("cloud file " + origin + " has " + std::to_string(bytes.size()) + " bytes, expected " +
                  std::to_string(4 + std::size_t(n) * 12));
  }
  PointCloud cloud{std::move(object_id), std::vector<Point3>(n)};
  const char* p = bytes.data() + 4;
  for (auto& pt : cloud.points) {
    for (auto& v : pt) {
      v = get_le<float>(p);
      p += 4;
      if (!std::isfinite(v)) throw IoError("cloud file " + origin + " contains non-finite coordinates");
    }
  }
  return cloud;
}

void write_cloud(const std::string& path, const PointCloud& cloud) {
  const auto bytes = cloud_bytes(cloud);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

PointCloud read_cloud(const std::string& path, std::string object_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open cloud file " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return cloud_from_bytes(bytes, std::move(object_id), path);
}

}  // namespace jepagrasp
