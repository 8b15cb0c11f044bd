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

#include "pointconv/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <cstring>
#include <sstream>

#include <json.hpp>

namespace pointconv {
namespace {

constexpr double kTorusMajor = 0.7;
constexpr double kTorusMinor = 0.3;
constexpr double kCylinderRadius = 0.6;
constexpr double kCylinderHalfHeight = 0.8;

struct SurfacePoint {
  Eigen::Vector3d position;
  Eigen::Vector3d normal;
  int part = 0;
};

SurfacePoint sample_surface(ShapeKind kind, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  SurfacePoint s;
  switch (kind) {
    case ShapeKind::kSphere: {
      Eigen::Vector3d v;
      do {
        v = {gauss(rng), gauss(rng), gauss(rng)};
      } while (v.norm() < 1e-12);
      s.position = v.normalized();
      s.normal = s.position;
      break;
    }
    case ShapeKind::kCube: {
      const double a = 1.0 / std::sqrt(3.0);
      const int face = std::uniform_int_distribution<int>(0, 5)(rng);
      const int axis = face / 2;
      const double sign = face % 2 ? 1.0 : -1.0;
      s.position = {(2 * unit(rng) - 1) * a, (2 * unit(rng) - 1) * a, (2 * unit(rng) - 1) * a};
      s.position[axis] = sign * a;
      s.normal = Eigen::Vector3d::Zero();
      s.normal[axis] = sign;
      break;
    }
    case ShapeKind::kTorus: {
      // Area element is proportional to (R + r cos theta); accept accordingly.
      double theta;
      do {
        theta = two_pi * unit(rng);
      } while (unit(rng) * (kTorusMajor + kTorusMinor) > kTorusMajor + kTorusMinor * std::cos(theta));
      const double phi = two_pi * unit(rng);
      const double ring = kTorusMajor + kTorusMinor * std::cos(theta);
      s.position = {ring * std::cos(phi), ring * std::sin(phi), kTorusMinor * std::sin(theta)};
      s.normal = {std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi), std::sin(theta)};
      s.part = s.position.x() < 0 ? 0 : 1;
      break;
    }
    case ShapeKind::kCylinder: {
      const double side = 2.0 * std::numbers::pi * kCylinderRadius * 2.0 * kCylinderHalfHeight;
      const double caps = 2.0 * std::numbers::pi * kCylinderRadius * kCylinderRadius;
      const double phi = two_pi * unit(rng);
      if (unit(rng) * (side + caps) < side) {
        s.position = {kCylinderRadius * std::cos(phi), kCylinderRadius * std::sin(phi),
                      (2 * unit(rng) - 1) * kCylinderHalfHeight};
        s.normal = {std::cos(phi), std::sin(phi), 0.0};
        s.part = 1;
      } else {
        const double rad = kCylinderRadius * std::sqrt(unit(rng));
        const double z = unit(rng) < 0.5 ? -kCylinderHalfHeight : kCylinderHalfHeight;
        s.position = {rad * std::cos(phi), rad * std::sin(phi), z};
        s.normal = {0.0, 0.0, z > 0 ? 1.0 : -1.0};
        s.part = 0;
      }
      break;
    }
  }
  return s;
}

template <typename S>
PointCloud<S> make_shape_cloud(const ShapeDatasetOptions& o, std::size_t cls, std::uint64_t seed) {
  SyntheticShapeSpec spec;
  spec.shape = o.classes[cls];
  spec.n_points = o.n_points;
  spec.noise_sigma = o.noise_sigma;
  spec.seed = seed;
  spec.part_labels = o.task == Task::kSegment;
  PointCloud<S> cloud = sample_shape<S>(spec, o.features);
  if (o.task == Task::kSegment) {
    for (int& l : cloud.point_labels) l += 2 * static_cast<int>(cls);
  } else {
    cloud.label = static_cast<int>(cls);
  }
  return cloud;
}

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::kSphere:
      return "sphere";
    case ShapeKind::kCube:
      return "cube";
    case ShapeKind::kTorus:
      return "torus";
    case ShapeKind::kCylinder:
      return "cylinder";
  }
  return "sphere";
}

ShapeKind parse_shape_kind(std::string_view name) {
  for (ShapeKind k : {ShapeKind::kSphere, ShapeKind::kCube, ShapeKind::kTorus, ShapeKind::kCylinder}) {
    if (to_string(k) == name) return k;
  }
  throw ValueError("unknown shape '" + std::string(name) + "'");
}

template <typename S>
PointCloud<S> sample_shape(const SyntheticShapeSpec& spec, FeatureSet features) {
  if (spec.n_points < 8) throw ValueError("synthetic shapes need at least 8 points");
  if (spec.noise_sigma < 0) throw ValueError("noise sigma must be non-negative");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0 ? spec.noise_sigma : 1.0);
  const Index n = spec.n_points;
  MatrixX<double> pos(n, 3), nrm(n, 3);
  std::vector<int> parts(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const SurfacePoint s = sample_surface(spec.shape, rng);
    pos.row(i) = s.position.transpose();
    nrm.row(i) = s.normal.transpose();
    parts[static_cast<std::size_t>(i)] = s.part;
  }
  if (spec.noise_sigma > 0) {
    for (Index i = 0; i < pos.size(); ++i) pos.data()[i] += noise(rng);
    const double radius = pos.rowwise().norm().maxCoeff();
    if (radius > 1.0) pos /= radius;
  }
  PointCloud<S> cloud;
  cloud.positions = pos.cast<S>();
  if (features == FeatureSet::kNormals) {
    cloud.features = nrm.cast<S>();
  } else {
    cloud.features.resize(n, 6);
    cloud.features.leftCols(3) = pos.cast<S>();
    cloud.features.rightCols(3) = nrm.cast<S>();
  }
  if (spec.part_labels) cloud.point_labels = std::move(parts);
  return cloud;
}

ShapeDatasetOptions classification_shapes(Index n_points, std::uint64_t seed) {
  ShapeDatasetOptions o;
  o.n_points = n_points;
  o.seed = seed;
  o.noise_sigma = 0.01;
  return o;
}

ShapeDatasetOptions segmentation_shapes(Index n_points, std::uint64_t seed) {
  ShapeDatasetOptions o;
  o.classes = {ShapeKind::kTorus, ShapeKind::kCylinder};
  o.n_points = n_points;
  o.seed = seed;
  o.noise_sigma = 0.01;
  o.features = FeatureSet::kPositionsNormals;
  o.task = Task::kSegment;
  return o;
}

template <typename S>
DatasetSplit<S> generate_shapes(const ShapeDatasetOptions& o) {
  if (o.classes.empty() || o.train_per_class < 1 || o.test_per_class < 0) {
    throw ValueError("generate_shapes: need at least one class and one training cloud per class");
  }
  DatasetSplit<S> split;
  const Index classes = static_cast<Index>(o.classes.size());
  const Index label_count = o.task == Task::kSegment ? 2 * classes : classes;
  for (auto* d : {&split.train, &split.test}) {
    d->task = o.task;
    d->classes = label_count;
  }
  std::uint64_t counter = 0;
  for (Index i = 0; i < o.train_per_class; ++i) {
    for (std::size_t c = 0; c < o.classes.size(); ++c) {
      split.train.clouds.push_back(make_shape_cloud<S>(o, c, mix_seed(o.seed, counter++)));
    }
  }
  for (Index i = 0; i < o.test_per_class; ++i) {
    for (std::size_t c = 0; c < o.classes.size(); ++c) {
      split.test.clouds.push_back(make_shape_cloud<S>(o, c, mix_seed(o.seed, counter++)));
    }
  }
  return split;
}

// ---------------------------------------------------------------------------

template <typename S>
PointCloud<S> image_to_pointcloud(const Image& image, const ImageCloudSpec& spec) {
  if (image.width != image.height) {
    throw ValueError("image_to_pointcloud: image is " + std::to_string(image.width) + "x" +
                     std::to_string(image.height) + ", expected a square");
  }
  const Index side = image.width, c = image.channels;
  if (side < 1 || static_cast<Index>(image.pixels.size()) != side * side * c) {
    throw ValueError("image_to_pointcloud: pixel buffer does not match the image extents");
  }
  const double half = 0.5 * static_cast<double>(side - 1);
  const double scale = spec.normalize && side > 1 ? 1.0 / (half * std::sqrt(2.0)) : 1.0;
  PointCloud<S> cloud;
  cloud.positions.resize(side * side, 2);
  cloud.features.resize(side * side, c);
  for (Index row = 0; row < side; ++row) {
    for (Index col = 0; col < side; ++col) {
      const Index i = row * side + col;
      cloud.positions(i, 0) = static_cast<S>((static_cast<double>(col) - half) * scale);
      cloud.positions(i, 1) = static_cast<S>((half - static_cast<double>(row)) * scale);
      for (Index ch = 0; ch < c; ++ch) {
        cloud.features(i, ch) = static_cast<S>(image.at(row, col, ch) / 255.0);
      }
    }
  }
  return cloud;
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  Index width = 0, height = 0, maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (!in || (magic != "P5" && magic != "P6") || maxval != 255 || width < 1 || height < 1) {
    throw FormatError(path.string() + ": expected an 8-bit binary PGM (P5) or PPM (P6)");
  }
  in.get();  // single whitespace after the header
  Image img;
  img.width = width;
  img.height = height;
  img.channels = magic == "P5" ? 1 : 3;
  img.pixels.resize(static_cast<std::size_t>(width * height * img.channels));
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) {
    throw FormatError(path.string() + ": expected " + std::to_string(img.pixels.size()) +
                      " pixel bytes, got " + std::to_string(in.gcount()));
  }
  return img;
}

void write_pnm(const Image& image, const std::filesystem::path& path) {
  if (image.channels != 1 && image.channels != 3) throw ValueError("PNM images need 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::pair<Image, int>> generate_bar_images(Index count, Index side, double noise_sigma,
                                                       std::uint64_t seed) {
  if (side < 4) throw ValueError("bar images need side >= 4");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sigma > 0 ? noise_sigma : 1.0);
  std::vector<std::pair<Image, int>> out;
  for (Index n = 0; n < count; ++n) {
    const int label = static_cast<int>(n % 2);
    const bool flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    const Index offset = std::uniform_int_distribution<Index>(-side / 4, side / 4)(rng);
    Image img;
    img.width = img.height = side;
    img.channels = 1;
    img.pixels.resize(static_cast<std::size_t>(side * side));
    for (Index r = 0; r < side; ++r) {
      for (Index c = 0; c < side; ++c) {
        bool on;
        if (label == 0) {
          const Index t = (flip ? c : r) - (side / 2 + offset);
          on = t == 0 || t == 1;
        } else {
          const Index t = flip ? (r + c) - (side - 1) - offset : (r - c) - offset;
          on = t >= -1 && t <= 1;
        }
        double v = on ? 220.0 : 30.0;
        if (noise_sigma > 0) v += noise(rng);
        img.pixels[static_cast<std::size_t>(r * side + c)] =
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
    out.emplace_back(std::move(img), label);
  }
  return out;
}

template <typename S>
DatasetSplit<S> generate_bar_dataset(const BarImageOptions& o) {
  DatasetSplit<S> split;
  auto fill = [&](Dataset<S>& d, Index count, std::uint64_t seed) {
    d.task = Task::kClassify;
    d.classes = 2;
    for (auto& [img, label] : generate_bar_images(count, o.side, o.noise_sigma, seed)) {
      PointCloud<S> cloud = image_to_pointcloud<S>(img);
      cloud.label = label;
      d.clouds.push_back(std::move(cloud));
    }
  };
  fill(split.train, o.train, mix_seed(o.seed, 1));
  fill(split.test, o.test, mix_seed(o.seed, 2));
  return split;
}

// ---------------------------------------------------------------------------

template <typename S>
PointCloud<S> load_cloud(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  PointCloud<S> cloud;
  if (ext == ".xyz") {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::istringstream ls(line);
      std::vector<double> row;
      std::string tok;
      while (ls >> tok) {
        try {
          std::size_t used = 0;
          row.push_back(std::stod(tok, &used));
          if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
          throw FormatError(path.string() + ":" + std::to_string(line_no) + ": '" + tok +
                            "' is not a number");
        }
      }
      if (row.size() < 3 || (!rows.empty() && row.size() != rows.front().size())) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                          std::to_string(rows.empty() ? 3 : rows.front().size()) + " columns, got " +
                          std::to_string(row.size()));
      }
      rows.push_back(std::move(row));
    }
    if (rows.empty()) throw FormatError(path.string() + ": no points");
    const Index n = static_cast<Index>(rows.size()), c = static_cast<Index>(rows.front().size()) - 3;
    cloud.positions.resize(n, 3);
    cloud.features.resize(n, c);
    for (Index i = 0; i < n; ++i) {
      const auto& r = rows[static_cast<std::size_t>(i)];
      for (Index j = 0; j < 3; ++j) cloud.positions(i, j) = static_cast<S>(r[static_cast<std::size_t>(j)]);
      for (Index j = 0; j < c; ++j) cloud.features(i, j) = static_cast<S>(r[static_cast<std::size_t>(3 + j)]);
    }
  } else if (ext == ".pcb") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto need = [&](std::size_t expected) {
      if (bytes.size() < expected) {
        throw FormatError(path.string() + ": truncated, expected at least " +
                          std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()));
      }
    };
    need(16);
    if (bytes.compare(0, 4, "PCB1") != 0) throw FormatError(path.string() + ": bad magic, expected PCB1");
    std::uint32_t hdr[3];
    std::memcpy(hdr, bytes.data() + 4, sizeof(hdr));
    const Index n = hdr[0], d = hdr[1], c = hdr[2];
    if (n < 1 || (d != 2 && d != 3)) {
      throw FormatError(path.string() + ": invalid header (N=" + std::to_string(n) +
                        ", d=" + std::to_string(d) + ")");
    }
    const std::size_t body = static_cast<std::size_t>(n * (d + c)) * sizeof(float);
    need(16 + body);
    std::vector<float> values(static_cast<std::size_t>(n * (d + c)));
    std::memcpy(values.data(), bytes.data() + 16, body);
    cloud.positions = Eigen::Map<const MatrixX<float>>(values.data(), n, d).cast<S>();
    cloud.features = Eigen::Map<const MatrixX<float>>(values.data() + n * d, n, c).cast<S>();
    std::size_t pos = 16 + body;
    if (pos < bytes.size()) {
      const auto flag = static_cast<std::uint8_t>(bytes[pos++]);
      const std::size_t count = flag == 1 ? static_cast<std::size_t>(n) : flag == 2 ? 1 : 0;
      if (flag > 2) throw FormatError(path.string() + ": unknown label flag " + std::to_string(flag));
      need(pos + count * sizeof(std::int32_t));
      std::vector<std::int32_t> labels(count);
      std::memcpy(labels.data(), bytes.data() + pos, count * sizeof(std::int32_t));
      pos += count * sizeof(std::int32_t);
      if (flag == 1) cloud.point_labels.assign(labels.begin(), labels.end());
      if (flag == 2) cloud.label = labels.front();
    }
    if (pos != bytes.size()) {
      throw FormatError(path.string() + ": expected " + std::to_string(pos) + " bytes, got " +
                        std::to_string(bytes.size()));
    }
  } else {
    throw IoError("unsupported cloud extension '" + ext + "' (use .xyz or .pcb)");
  }
  if (!cloud.positions.allFinite()) throw FormatError(path.string() + ": non-finite coordinates");
  return cloud;
}

template <typename S>
void save_cloud(const PointCloud<S>& cloud, const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".xyz") {
    if (cloud.dim() != 3) throw ValueError(".xyz files hold 3D clouds only");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(9);
    for (Index i = 0; i < cloud.size(); ++i) {
      out << cloud.positions(i, 0) << ' ' << cloud.positions(i, 1) << ' ' << cloud.positions(i, 2);
      for (Index j = 0; j < cloud.channels(); ++j) out << ' ' << cloud.features(i, j);
      out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
  } else if (ext == ".pcb") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write("PCB1", 4);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cloud.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cloud.dim()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cloud.channels()));
    const MatrixX<float> pos = cloud.positions.template cast<float>();
    const MatrixX<float> feat = cloud.features.template cast<float>();
    out.write(reinterpret_cast<const char*>(pos.data()), static_cast<std::streamsize>(pos.size() * 4));
    out.write(reinterpret_cast<const char*>(feat.data()), static_cast<std::streamsize>(feat.size() * 4));
    if (!cloud.point_labels.empty()) {
      write_pod<std::uint8_t>(out, 1);
      for (int l : cloud.point_labels) write_pod<std::int32_t>(out, l);
    } else if (cloud.label) {
      write_pod<std::uint8_t>(out, 2);
      write_pod<std::int32_t>(out, *cloud.label);
    }
    if (!out) throw IoError("failed writing " + path.string());
  } else {
    throw IoError("unsupported cloud extension '" + ext + "' (use .xyz or .pcb)");
  }
}

template <typename S>
void write_dataset(const Dataset<S>& dataset, const std::filesystem::path& manifest,
                   const std::string& prefix) {
  const auto dir = manifest.parent_path().empty() ? std::filesystem::path(".") : manifest.parent_path();
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["task"] = dataset.task == Task::kClassify ? "classify" : "segment";
  j["classes"] = dataset.classes;
  j["clouds"] = nlohmann::json::array();
  for (std::size_t i = 0; i < dataset.clouds.size(); ++i) {
    const std::string name = prefix + "_" + std::to_string(i) + ".pcb";
    save_cloud(dataset.clouds[i], dir / name);
    nlohmann::json entry{{"path", name}};
    if (dataset.clouds[i].label) entry["label"] = *dataset.clouds[i].label;
    j["clouds"].push_back(entry);
  }
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write " + manifest.string());
  out << j.dump(2) << '\n';
}

template <typename S>
Dataset<S> read_dataset(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open " + manifest.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  Dataset<S> d;
  try {
    const std::string task = j.at("task").get<std::string>();
    if (task != "classify" && task != "segment") throw FormatError("unknown task '" + task + "'");
    d.task = task == "classify" ? Task::kClassify : Task::kSegment;
    d.classes = j.at("classes").get<Index>();
    const auto dir = manifest.parent_path();
    for (const auto& e : j.at("clouds")) {
      auto cloud = load_cloud<S>(dir / e.at("path").get<std::string>());
      if (e.contains("label")) cloud.label = e.at("label").get<int>();
      d.clouds.push_back(std::move(cloud));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  return d;
}

#define POINTCONV_INSTANTIATE_DATA(S)                                                       \
  template PointCloud<S> sample_shape(const SyntheticShapeSpec&, FeatureSet);               \
  template DatasetSplit<S> generate_shapes(const ShapeDatasetOptions&);                     \
  template PointCloud<S> image_to_pointcloud(const Image&, const ImageCloudSpec&);          \
  template DatasetSplit<S> generate_bar_dataset(const BarImageOptions&);                    \
  template PointCloud<S> load_cloud(const std::filesystem::path&);                          \
  template void save_cloud(const PointCloud<S>&, const std::filesystem::path&);             \
  template void write_dataset(const Dataset<S>&, const std::filesystem::path&, const std::string&); \
  template Dataset<S> read_dataset(const std::filesystem::path&);

POINTCONV_INSTANTIATE_DATA(float)
POINTCONV_INSTANTIATE_DATA(double)

}  // namespace pointconv
