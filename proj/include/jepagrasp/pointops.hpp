#pragma once

// Point-cloud sampling and patch tokenization.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "jepagrasp/layers.hpp"
#include "jepagrasp/tensor.hpp"

namespace jepagrasp {

using Point3 = std::array<float, 3>;

struct PointCloud {
  std::string object_id;
  std::vector<Point3> points;

  std::size_t size() const { return points.size(); }
};

struct Mesh {
  std::vector<std::array<double, 3>> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
};

struct TokenizerConfig {
  std::size_t cloud_size = 1024;
  std::size_t num_groups = 64;
  std::size_t group_size = 32;
  double radius = 0.05;
  std::size_t embed_dim = 128;
  std::size_t hidden_dim = 64;  // width of the shared pointwise MLP

  void validate() const;
};

// Wavefront OBJ subset: `v x y z` and `f i j k ...` (1-based, negative
// indices relative, `i/t/n` accepted). Polygons are fan-triangulated.
Mesh parse_obj(std::istream& in, const std::string& origin = "<stream>");
Mesh load_obj(const std::string& path);
void write_obj(std::ostream& out, const Mesh& mesh);

// Area-weighted surface samples in mesh coordinates (no normalization).
std::vector<std::array<double, 3>> sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed);

struct CloudNormalization {
  std::array<double, 3> center{};
  double scale = 1.0;  // applied after centering
};

// Centers to zero mean and scales to unit max-norm.
CloudNormalization normalization_for(std::span<const std::array<double, 3>> points);

// sample_surface followed by normalization; throws IoError when every
// triangle is degenerate.
PointCloud sample_mesh(const Mesh& mesh, std::size_t n, std::uint64_t seed, std::string object_id = {});

// Largest-norm point, lowest index on ties.
std::size_t extreme_point(std::span<const Point3> points);

// Farthest-point sampling. Ties on the max-min distance go to the lowest index.
std::vector<std::size_t> fps(const PointCloud& cloud, std::size_t k);
std::vector<std::size_t> fps(const PointCloud& cloud, std::size_t k, std::size_t start);

// Row-major [centers.size() x group_size] point indices: the group_size
// nearest points of each center (ties by lowest index), with any member
// farther than `radius` replaced by the center's own index.
std::vector<std::size_t> group_knn(const PointCloud& cloud, std::span<const std::size_t> centers,
                                   std::size_t group_size, double radius);

struct PatchSet {
  std::vector<std::size_t> center_indices;  // into the cloud
  std::vector<Point3> centers;
  std::size_t group_size = 0;
  std::vector<std::size_t> members;  // [G x group_size]

  std::size_t num_groups() const { return centers.size(); }
  // Reorders patches so that patch i of the result is patch order[i].
  PatchSet permuted(std::span<const std::size_t> order) const;
};

PatchSet make_patches(const PointCloud& cloud, const TokenizerConfig& cfg);

// Member coordinates relative to their patch center, [G*S, 3].
template <typename T>
tc::Tensor<T> relative_members(const PointCloud& cloud, const PatchSet& patches);

// Mini PointNet: shared pointwise MLP (3 -> hidden -> D) on center-relative
// member coordinates, max-pooled over each patch.
template <typename T>
class PatchEmbedder {
 public:
  void init(tc::ParameterSet<T>& params, const std::string& prefix, const TokenizerConfig& cfg, Rng& rng);

  // relative: [G*S, 3] -> [G, D]
  tc::Var<T> forward(tc::Graph<T>& g, const tc::ParameterSet<T>& params, tc::Var<T> relative) const;

 private:
  Linear<T> fc1_;
  Linear<T> fc2_;
  std::size_t group_size_ = 0;
};

// Cloud cache: u32 N, then N*3 float32, little-endian.
std::vector<char> cloud_bytes(const PointCloud& cloud);
PointCloud cloud_from_bytes(std::span<const char> bytes, std::string object_id, const std::string& origin);
void write_cloud(const std::string& path, const PointCloud& cloud);
PointCloud read_cloud(const std::string& path, std::string object_id);

}  // namespace jepagrasp
