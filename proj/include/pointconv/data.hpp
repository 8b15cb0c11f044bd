// Copyright 2026 The pointconv-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pointconv/network.hpp"
#include "pointconv/point_ops.hpp"

namespace pointconv {

template <typename Scalar>
struct Dataset {
  Task task = Task::kClassify;
  Index classes = 0;
  std::vector<PointCloud<Scalar>> clouds;

  std::size_t size() const { return clouds.size(); }
  bool empty() const { return clouds.empty(); }
};

template <typename Scalar>
struct DatasetSplit {
  Dataset<Scalar> train;
  Dataset<Scalar> test;
};

// ---------------------------------------------------------------------------
// Synthetic shapes

enum class ShapeKind { kSphere, kCube, kTorus, kCylinder };

std::string_view to_string(ShapeKind kind);
ShapeKind parse_shape_kind(std::string_view name);

/// Per-point features attached to generated clouds.
enum class FeatureSet {
  kNormals,           // 3 channels, surface normal
  kPositionsNormals,  // 6 channels, xyz then normal
};

struct SyntheticShapeSpec {
  ShapeKind shape = ShapeKind::kSphere;
  Index n_points = 512;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  // Torus: x < 0 half -> 0, x >= 0 half -> 1. Cylinder: caps -> 0, side -> 1.
  // Sphere and cube have a single part 0.
  bool part_labels = false;
};

/// Uniform surface sample of a shape that touches the unit sphere (sphere of
/// radius 1, cube of half-edge 1/sqrt(3), torus R=0.7 r=0.3, cylinder radius
/// 0.6 half-height 0.8). Noise is added along each coordinate, then the cloud
/// is rescaled into the unit ball if it left it.
template <typename Scalar>
PointCloud<Scalar> sample_shape(const SyntheticShapeSpec& spec, FeatureSet features = FeatureSet::kNormals);

struct ShapeDatasetOptions {
  std::vector<ShapeKind> classes{ShapeKind::kSphere, ShapeKind::kCube, ShapeKind::kTorus,
                                 ShapeKind::kCylinder};
  Index train_per_class = 100;
  Index test_per_class = 25;
  Index n_points = 512;
  double noise_sigma = 0.0;
  FeatureSet features = FeatureSet::kNormals;
  Task task = Task::kClassify;
  std::uint64_t seed = 1;
};

/// Classification: cloud label = index into `classes`. Segmentation: point
/// labels are part ids made unique across classes (class c, part p ->
/// 2c + p), so a torus/cylinder set has four part classes.
/// Deterministic seed derivation; generators give each cloud or split
/// mix_seed(seed, index).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

template <typename Scalar>
DatasetSplit<Scalar> generate_shapes(const ShapeDatasetOptions& options);

/// The 4-class shape classification set (400 train / 100 test at defaults).
ShapeDatasetOptions classification_shapes(Index n_points, std::uint64_t seed);
/// The torus/cylinder part segmentation set (200 train / 50 test at defaults).
ShapeDatasetOptions segmentation_shapes(Index n_points, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Images

/// 8-bit image, row-major height x width x channels.
struct Image {
  Index width = 0;
  Index height = 0;
  Index channels = 1;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(Index row, Index col, Index ch = 0) const {
    return pixels[static_cast<std::size_t>((row * width + col) * channels + ch)];
  }
};

struct ImageCloudSpec {
  bool normalize = true;  // scale grid coordinates so the farthest pixel has norm 1
};

/// One 2D point per pixel at centered grid coordinates (x to the right, y up)
/// with channel values scaled to [0,1] as features. Throws on non-square input.
template <typename Scalar>
PointCloud<Scalar> image_to_pointcloud(const Image& image, const ImageCloudSpec& spec = {});

/// Binary PGM (P5, grayscale) or PPM (P6, RGB), 8-bit.
Image read_pnm(const std::filesystem::path& path);
void write_pnm(const Image& image, const std::filesystem::path& path);

struct BarImageOptions {
  Index side = 16;
  Index train = 512;
  Index test = 128;
  double noise_sigma = 20.0;  // in 8-bit intensity units
  std::uint64_t seed = 1;
};

/// Two-class grayscale images: class 0 holds an axis-aligned bar (horizontal
/// or vertical), class 1 a diagonal bar. Labels alternate so classes balance.
std::vector<std::pair<Image, int>> generate_bar_images(Index count, Index side, double noise_sigma,
                                                       std::uint64_t seed);

template <typename Scalar>
DatasetSplit<Scalar> generate_bar_dataset(const BarImageOptions& options);

// ---------------------------------------------------------------------------
// Cloud files

/// `.xyz`: whitespace separated "x y z [f...]" per line, no labels.
/// `.pcb`: "PCB1", u32 N, u32 d, u32 C, float32 positions then features
/// (row-major, little-endian), then optionally a u8 label flag (0 none,
/// 1 per-point int32 labels, 2 one int32 cloud label) and the labels.
template <typename Scalar>
PointCloud<Scalar> load_cloud(const std::filesystem::path& path);
template <typename Scalar>
void save_cloud(const PointCloud<Scalar>& cloud, const std::filesystem::path& path);

/// Writes every cloud as `<dir>/<prefix>_<i>.pcb` and a JSON manifest
/// {"task", "classes", "clouds": [{"path", "label"}]} at `manifest`.
template <typename Scalar>
void write_dataset(const Dataset<Scalar>& dataset, const std::filesystem::path& manifest,
                   const std::string& prefix);
template <typename Scalar>
Dataset<Scalar> read_dataset(const std::filesystem::path& manifest);

}  // namespace pointconv
