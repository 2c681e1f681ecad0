#pragma once

// Synthetic grasp dataset: procedural shape families, a multimodal
// pose -> joint label generator, quality scores and on-disk persistence.
//
// Layout under a dataset root:
//   manifest.json            versioned description of categories and objects
//   clouds/<object_id>.bin   point-cloud cache (see pointops.hpp)
//   grasps.csv               one row per grasp sample

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "jepagrasp/grasphead.hpp"
#include "jepagrasp/pointops.hpp"

namespace jepagrasp {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr double kDefaultMinQuality = 1.5;

enum class ShapeFamily { kBox = 0, kEllipsoid = 1, kCylinder = 2, kTorus = 3, kCone = 4 };
inline constexpr std::size_t kNumShapeFamilies = 5;

const char* shape_family_name(ShapeFamily family);

struct DatasetConfig {
  std::size_t num_categories = 5;  // first n shape families
  std::size_t objects_per_category = 20;
  std::size_t samples_per_object = 60;
  std::size_t cloud_size = 1024;
  std::size_t num_modes = 2;     // M discrete offsets on joint 0
  double mode_gap = 0.8;         // spacing between neighbouring offsets, rad
  double noise = 0.02;           // per-joint gaussian sigma, rad
  double low_quality_fraction = 0.2;
  // Probability that a sample uses a mode other than the one its approach
  // direction prefers. 0 makes the mode a function of the pose, 1 - 1/M makes
  // it independent of the pose.
  double mode_minority_rate = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GraspSample {
  std::string object_id;
  int category_id = 0;
  HandPose pose;
  JointVector joints{};
  double quality = 0.0;
  int mode_id = 0;  // generator ground truth; never shown to models
};

struct CategoryEntry {
  int category_id = 0;
  std::string name;
  std::size_t objects = 0;
};

struct ObjectEntry {
  std::string object_id;
  int category_id = 0;
  std::string cloud_file;  // relative to the dataset root
};

struct DatasetManifest {
  int version = kDatasetFormatVersion;
  DatasetConfig generator;
  std::vector<CategoryEntry> categories;
  std::vector<ObjectEntry> objects;  // sorted by object_id

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text, const std::string& origin);
  std::size_t index_of(const std::string& object_id) const;  // ConfigError if absent
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<PointCloud> clouds;    // aligned with manifest.objects
  std::vector<GraspSample> samples;  // ordered by (object_id, sample index)
};

// Mesh of one object of the family; dims are family-specific sizes.
Mesh make_shape_mesh(ShapeFamily family, const std::array<double, 3>& dims, std::size_t segments = 24);

// Random per-object sizes for a family.
std::array<double, 3> random_shape_dims(ShapeFamily family, Rng& rng);

// Bounding-box extents divided by the largest extent.
std::array<double, 3> aspect_of(const Mesh& mesh);

// Smooth noise-free joint map f(category, aspect, approach direction).
JointVector grasp_function(int category_id, const std::array<double, 3>& aspect, const std::array<double, 3>& direction);

// Offset added to joint 0 for mode m of M.
double mode_offset(std::size_t m, std::size_t num_modes, double gap);

// Mode a pose direction prefers: d_z bucketed into M equal intervals.
std::size_t preferred_mode(const std::array<double, 3>& direction, std::size_t num_modes);

// Pose on the sphere of radius 1.5 around the (normalized) object, hand
// z-axis pointing at the origin with a random roll.
HandPose approach_pose(const std::array<double, 3>& direction, double roll);

// In-memory generation; identical to what generate_dataset writes.
Dataset synthesize_dataset(const DatasetConfig& cfg);

// Writes the dataset under root (created if needed). Refuses to touch an
// existing manifest unless overwrite is set.
DatasetManifest generate_dataset(const DatasetConfig& cfg, const std::string& root, bool overwrite = false);

// Keeps samples with quality >= min_score, preserving order.
std::vector<GraspSample> filter_quality(std::span<const GraspSample> samples, double min_score = kDefaultMinQuality);

// Throws IoError naming the file for missing/corrupt content and FormatError
// for an unknown manifest version.
Dataset load_dataset(const std::string& root);

std::string grasps_csv(std::span<const GraspSample> samples);
std::vector<GraspSample> parse_grasps_csv(const std::string& text, const std::string& origin);

}  // namespace jepagrasp
