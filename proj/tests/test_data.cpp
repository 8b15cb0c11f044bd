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


#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "pointconv/data.hpp"
#include "pointconv/errors.hpp"
#include "test_util.hpp"

namespace pointconv {
namespace {

using testing::temp_dir;

PointCloud<double> shape(ShapeKind kind, Index n = 256, double noise = 0.0, bool parts = false) {
  SyntheticShapeSpec s;
  s.shape = kind;
  s.n_points = n;
  s.noise_sigma = noise;
  s.seed = 17;
  s.part_labels = parts;
  return sample_shape<double>(s);
}

TEST(Shapes, SphereLiesOnUnitSphereWithRadialNormals) {
  const auto c = shape(ShapeKind::kSphere);
  ASSERT_EQ(c.size(), 256);
  for (Index i = 0; i < c.size(); ++i) {
    EXPECT_NEAR(c.positions.row(i).norm(), 1.0, 1e-12);
    EXPECT_NEAR((c.features.row(i) - c.positions.row(i)).norm(), 0.0, 1e-12);
  }
}

TEST(Shapes, CubeSurfaceHasConstantMaxNorm) {
  const auto c = shape(ShapeKind::kCube);
  const double a = 1.0 / std::sqrt(3.0);
  for (Index i = 0; i < c.size(); ++i) {
    EXPECT_NEAR(c.positions.row(i).cwiseAbs().maxCoeff(), a, 1e-12);
    EXPECT_NEAR(c.features.row(i).norm(), 1.0, 1e-12);
  }
}

TEST(Shapes, AllShapesFitTheUnitBall) {
  for (auto kind : {ShapeKind::kSphere, ShapeKind::kCube, ShapeKind::kTorus, ShapeKind::kCylinder}) {
    for (double noise : {0.0, 0.05}) {
      const auto c = shape(kind, 128, noise);
      EXPECT_NO_THROW(c.validate(true)) << to_string(kind);
      EXPECT_LE(c.positions.rowwise().norm().maxCoeff(), 1.0 + 1e-12);
    }
  }
}

TEST(Shapes, NoiseIsDeterministicPerSeed) {
  const auto a = shape(ShapeKind::kTorus, 64, 0.02), b = shape(ShapeKind::kTorus, 64, 0.02);
  EXPECT_EQ(a.positions, b.positions);
  SyntheticShapeSpec s;
  s.shape = ShapeKind::kTorus;
  s.n_points = 64;
  s.seed = 18;
  EXPECT_NE(sample_shape<double>(s).positions, a.positions);
}

TEST(Shapes, PartLabelsFollowTheGeometry) {
  const auto torus = shape(ShapeKind::kTorus, 300, 0.0, true);
  ASSERT_EQ(torus.point_labels.size(), 300u);
  for (Index i = 0; i < torus.size(); ++i) {
    EXPECT_EQ(torus.point_labels[static_cast<std::size_t>(i)], torus.positions(i, 0) < 0 ? 0 : 1);
  }
  const auto cyl = shape(ShapeKind::kCylinder, 300, 0.0, true);
  std::set<int> seen;
  for (Index i = 0; i < cyl.size(); ++i) {
    const int l = cyl.point_labels[static_cast<std::size_t>(i)];
    seen.insert(l);
    // Cap normals are axial, side normals are horizontal.
    EXPECT_NEAR(std::abs(cyl.features(i, 2)), l == 0 ? 1.0 : 0.0, 1e-12);
  }
  EXPECT_EQ(seen, (std::set<int>{0, 1}));
}

TEST(Shapes, TooFewPointsRejected) {
  SyntheticShapeSpec s;
  s.n_points = 4;
  EXPECT_THROW(sample_shape<double>(s), ValueError);
  EXPECT_EQ(parse_shape_kind("torus"), ShapeKind::kTorus);
  EXPECT_THROW(parse_shape_kind("cone"), ValueError);
}

TEST(ShapeDataset, ClassCountsAndReproducibility) {
  ShapeDatasetOptions o = classification_shapes(64, 5);
  o.train_per_class = 3;
  o.test_per_class = 2;
  const auto a = generate_shapes<float>(o), b = generate_shapes<float>(o);
  ASSERT_EQ(a.train.size(), 12u);
  ASSERT_EQ(a.test.size(), 8u);
  EXPECT_EQ(a.train.classes, 4);
  std::vector<int> counts(4, 0);
  for (const auto& c : a.train.clouds) ++counts[static_cast<std::size_t>(*c.label)];
  EXPECT_EQ(counts, (std::vector<int>{3, 3, 3, 3}));
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train.clouds[i].positions, b.train.clouds[i].positions);
  }
  // Train and test clouds are distinct draws.
  EXPECT_NE(a.train.clouds[0].positions, a.test.clouds[0].positions);
}

TEST(ShapeDataset, SegmentationLabelsAreOffsetPerShape) {
  ShapeDatasetOptions o = segmentation_shapes(128, 2);
  o.train_per_class = 1;
  o.test_per_class = 0;
  const auto d = generate_shapes<double>(o);
  EXPECT_EQ(d.train.classes, 4);
  EXPECT_EQ(d.train.clouds[0].channels(), 6);
  std::set<int> torus(d.train.clouds[0].point_labels.begin(), d.train.clouds[0].point_labels.end());
  std::set<int> cyl(d.train.clouds[1].point_labels.begin(), d.train.clouds[1].point_labels.end());
  EXPECT_EQ(torus, (std::set<int>{0, 1}));
  EXPECT_EQ(cyl, (std::set<int>{2, 3}));
  EXPECT_EQ(d.train.clouds[0].features.leftCols(3), d.train.clouds[0].positions);
}

Image gray(Index side, std::vector<std::uint8_t> px) {
  Image img;
  img.width = img.height = side;
  img.pixels = std::move(px);
  return img;
}

TEST(ImageCloud, TwoByTwoMapsToDiagonalCorners) {
  const auto c = image_to_pointcloud<double>(gray(2, {0, 255, 51, 102}));
  ASSERT_EQ(c.size(), 4);
  const double h = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(c.positions(0, 0), -h, 1e-15);
  EXPECT_NEAR(c.positions(0, 1), h, 1e-15);
  EXPECT_NEAR(c.positions(3, 0), h, 1e-15);
  EXPECT_NEAR(c.positions(3, 1), -h, 1e-15);
  EXPECT_DOUBLE_EQ(c.features(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(c.features(2, 0), 0.2);
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(c.positions.row(i).norm(), 1.0, 1e-15);
}

TEST(ImageCloud, ConstantImageGivesConstantFeatures) {
  const auto c = image_to_pointcloud<double>(gray(5, std::vector<std::uint8_t>(25, 128)));
  EXPECT_TRUE((c.features.array() == 128.0 / 255.0).all());
  EXPECT_NEAR(c.positions.rowwise().norm().maxCoeff(), 1.0, 1e-15);
}

TEST(ImageCloud, NeighbouringPixelsAreOneStepApart) {
  const Index side = 6;
  const auto c = image_to_pointcloud<double>(gray(side, std::vector<std::uint8_t>(36, 0)));
  const double step = 1.0 / (0.5 * (side - 1) * std::sqrt(2.0));
  for (Index r = 0; r < side; ++r) {
    for (Index col = 0; col + 1 < side; ++col) {
      const Index i = r * side + col;
      EXPECT_NEAR((c.positions.row(i + 1) - c.positions.row(i)).norm(), step, 1e-14);
      if (r + 1 < side) EXPECT_NEAR((c.positions.row(i + side) - c.positions.row(i)).norm(), step, 1e-14);
    }
  }
  ImageCloudSpec raw;
  raw.normalize = false;
  const auto g = image_to_pointcloud<double>(gray(side, std::vector<std::uint8_t>(36, 0)), raw);
  EXPECT_NEAR((g.positions.row(1) - g.positions.row(0)).norm(), 1.0, 1e-15);
}

TEST(ImageCloud, NonSquareRejected) {
  Image img;
  img.width = 3;
  img.height = 2;
  img.pixels.assign(6, 0);
  EXPECT_THROW(image_to_pointcloud<double>(img), ValueError);
}

TEST(Pnm, RoundTrip) {
  const auto dir = temp_dir("pnm");
  Image img;
  img.width = 3;
  img.height = 2;
  img.channels = 3;
  for (int i = 0; i < 18; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 13));
  write_pnm(img, dir / "a.ppm");
  const Image back = read_pnm(dir / "a.ppm");
  EXPECT_EQ(back.width, 3);
  EXPECT_EQ(back.height, 2);
  EXPECT_EQ(back.channels, 3);
  EXPECT_EQ(back.pixels, img.pixels);
  EXPECT_THROW(read_pnm(dir / "missing.pgm"), IoError);
}

TEST(BarImages, LabelsAlternateAndPixelsAreBimodal) {
  const auto imgs = generate_bar_images(6, 16, 0.0, 4);
  ASSERT_EQ(imgs.size(), 6u);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    EXPECT_EQ(imgs[i].second, static_cast<int>(i % 2));
    int on = 0;
    for (auto p : imgs[i].first.pixels) {
      EXPECT_TRUE(p == 30 || p == 220);
      on += p == 220;
    }
    EXPECT_GT(on, 16);
  }
  const auto d = generate_bar_dataset<float>({16, 10, 4, 20.0, 3});
  EXPECT_EQ(d.train.size(), 10u);
  EXPECT_EQ(d.test.size(), 4u);
  EXPECT_EQ(d.train.clouds[0].size(), 256);
  EXPECT_EQ(d.train.clouds[0].dim(), 2);
  EXPECT_THROW(generate_bar_images(1, 3, 0.0, 1), ValueError);
}

TEST(CloudFiles, BinaryRoundTripIsBitwise) {
  const auto dir = temp_dir("pcb");
  SyntheticShapeSpec spec;
  spec.shape = ShapeKind::kTorus;
  spec.n_points = 50;
  spec.noise_sigma = 0.01;
  spec.part_labels = true;
  PointCloud<float> c = sample_shape<float>(spec);
  save_cloud(c, dir / "t.pcb");
  const auto back = load_cloud<float>(dir / "t.pcb");
  EXPECT_EQ(back.positions, c.positions);
  EXPECT_EQ(back.features, c.features);
  EXPECT_EQ(back.point_labels, c.point_labels);
  c.point_labels.clear();
  c.label = 3;
  save_cloud(c, dir / "l.pcb");
  EXPECT_EQ(load_cloud<float>(dir / "l.pcb").label, 3);
  // The format stores 32-bit floats; doubles come back rounded.
  const PointCloud<double> d = shape(ShapeKind::kSphere, 20);
  save_cloud(d, dir / "d.pcb");
  EXPECT_EQ(load_cloud<double>(dir / "d.pcb").positions, d.positions.cast<float>().cast<double>());
}

TEST(CloudFiles, TextWithThreeColumns) {
  const auto dir = temp_dir("xyz");
  {
    std::ofstream out(dir / "a.xyz");
    out << "0 0 1\n\n1 2 3\n";
  }
  const auto c = load_cloud<double>(dir / "a.xyz");
  EXPECT_EQ(c.size(), 2);
  EXPECT_EQ(c.channels(), 0);
  EXPECT_EQ(c.positions(1, 2), 3.0);
  PointCloud<double> s = shape(ShapeKind::kSphere, 10);
  save_cloud(s, dir / "s.xyz");
  const auto back = load_cloud<double>(dir / "s.xyz");
  EXPECT_EQ(back.channels(), 3);
  EXPECT_LT((back.positions - s.positions).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(CloudFiles, MalformedInputsReportFormatErrors) {
  const auto dir = temp_dir("bad");
  {
    std::ofstream(dir / "short.pcb", std::ios::binary) << "PCB";
    std::ofstream(dir / "word.xyz") << "0 0 x\n";
    std::ofstream(dir / "ragged.xyz") << "0 0 0\n1 1\n";
    std::ofstream(dir / "nan.xyz") << "0 nan 0\n";
  }
  try {
    load_cloud<double>(dir / "short.pcb");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("expected at least"), std::string::npos);
  }
  EXPECT_THROW(load_cloud<double>(dir / "word.xyz"), FormatError);
  EXPECT_THROW(load_cloud<double>(dir / "ragged.xyz"), FormatError);
  EXPECT_THROW(load_cloud<double>(dir / "nan.xyz"), FormatError);
  EXPECT_THROW(load_cloud<double>(dir / "missing.xyz"), IoError);
  EXPECT_THROW(load_cloud<double>(dir / "a.ply"), IoError);
}

TEST(Manifest, RoundTrip) {
  const auto dir = temp_dir("manifest");
  ShapeDatasetOptions o = classification_shapes(32, 9);
  o.train_per_class = 2;
  o.test_per_class = 0;
  const auto d = generate_shapes<float>(o).train;
  write_dataset(d, dir / "train.json", "train");
  const auto back = read_dataset<float>(dir / "train.json");
  EXPECT_EQ(back.task, Task::kClassify);
  EXPECT_EQ(back.classes, 4);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back.clouds[i].positions, d.clouds[i].positions);
    EXPECT_EQ(back.clouds[i].label, d.clouds[i].label);
  }
  std::ofstream(dir / "bad.json") << "{\"task\": \"classify\"}";
  EXPECT_THROW(read_dataset<float>(dir / "bad.json"), FormatError);
}

}  // namespace
}  // namespace pointconv
