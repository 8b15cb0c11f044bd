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
#include <vector>

#include <gtest/gtest.h>

#include "pointconv/errors.hpp"
#include "pointconv/verify.hpp"

namespace pointconv {
namespace {

TEST(RelativeError, NormalizesByReferenceMaximum) {
  const std::vector<double> a{1.0, 2.5, -3.0}, b{1.0, 2.0, -4.0};
  EXPECT_DOUBLE_EQ(relative_error<double>(a, b), 0.25);
  const std::vector<double> z{0.0, 0.0, 0.0};
  EXPECT_DOUBLE_EQ(relative_error<double>(a, z), 3.0);
}

TEST(ConvDimsParsing, AcceptsSixPositiveIntegers) {
  const ConvDims d = parse_conv_dims("32,512,32,64,32,64");
  EXPECT_EQ(d.batch, 32);
  EXPECT_EQ(d.points, 512);
  EXPECT_EQ(d.k, 32);
  EXPECT_EQ(d.c_in, 64);
  EXPECT_EQ(d.c_mid, 32);
  EXPECT_EQ(d.c_out, 64);
  EXPECT_EQ(to_string(d), "32,512,32,64,32,64");
  for (const char* bad : {"1,2,3", "1,2,3,4,5,6,7", "2,8,4,a,4,4", "2,8,4,0,4,4", "2,8,16,4,4,4", ""}) {
    EXPECT_THROW(parse_conv_dims(bad), ValueError) << bad;
  }
}

TEST(Memory, AnalyticFigures) {
  const AnalyticMemory m = analytic_memory(parse_conv_dims("32,512,32,64,32,64"));
  EXPECT_DOUBLE_EQ(m.naive_filter_bytes, 8.0 * kGiB);
  EXPECT_DOUBLE_EQ(m.efficient_gram_bytes, 0.125 * kGiB);
  EXPECT_NEAR(m.efficient_bytes() / kGiB, 0.1255, 0.1255 * 0.05);
  EXPECT_DOUBLE_EQ(m.ratio(), 1.0 / 64.0);
  EXPECT_DOUBLE_EQ(analytic_memory(parse_conv_dims("32,512,32,64,32,64"), 8).naive_filter_bytes,
                   16.0 * kGiB);
}

TEST(Memory, MeasuredDominantBuffersMatchTheAnalyticRatio) {
  const ConvDims d = parse_conv_dims("2,64,32,64,32,64");
  const MeasuredMemory m = measure_memory<float>(d, 1);
  EXPECT_EQ(m.naive_largest_bytes, static_cast<std::size_t>(2 * 64 * 32 * 64 * 64 * 4));
  EXPECT_EQ(m.efficient_largest_bytes, static_cast<std::size_t>(2 * 64 * 64 * 32 * 4));
  EXPECT_DOUBLE_EQ(m.dominant_ratio(), analytic_memory(d).ratio());
  EXPECT_LT(m.efficient_peak_bytes, m.naive_peak_bytes);
}

TEST(Equivalence, SmallTrialsPassAtBothPrecisions) {
  const ConvDims d = parse_conv_dims("2,32,8,4,4,6");
  const EquivalenceReport f = equivalence_trials<float>(d, 5, 1);
  EXPECT_EQ(f.trials, 5);
  EXPECT_TRUE(f.passed()) << f.max_forward_error << " " << f.max_gradient_error;
  const EquivalenceReport g = equivalence_trials<double>(d, 5, 1);
  EXPECT_LT(g.max_forward_error, 1e-10);
  EXPECT_LT(g.max_gradient_error, 1e-10);
  EXPECT_LT(g.max_tensor_gradient_error, 1e-10);
}

TEST(GridEquivalence, MatchesSlidingWindowConvolution) {
  for (Index side : {8, 16}) {
    const GridReport r = grid_equivalence<double>(side, 3, 4);
    EXPECT_EQ(r.interior_points, (side - 2) * (side - 2));
    EXPECT_TRUE(r.passed()) << "side " << side << " error " << r.max_error;
  }
  const GridReport five = grid_equivalence<double>(9, 5, 2);
  EXPECT_EQ(five.interior_points, 25);
  EXPECT_TRUE(five.passed());
}

TEST(GridEquivalence, ConstantFeaturesAndShiftedOrigin) {
  EXPECT_TRUE(grid_equivalence<double>(8, 3, 6, 0.0, 0.0, 2, 3, true).passed());
  const GridReport a = grid_equivalence<double>(8, 3, 6);
  const GridReport b = grid_equivalence<double>(8, 3, 6, 5.0, -3.0);
  EXPECT_TRUE(b.passed());
  EXPECT_EQ(a.interior_points, b.interior_points);
}

TEST(GridEquivalence, RejectsUnsupportedShapes) {
  EXPECT_THROW(grid_equivalence<double>(8, 2, 1), ValueError);
  EXPECT_THROW(grid_equivalence<double>(4, 3, 1), ValueError);
}

TEST(Gradcheck, SuiteBelowTolerance) {
  const auto entries = gradcheck_suite(1);
  EXPECT_GE(entries.size(), 6u);
  for (const auto& e : entries) EXPECT_LT(e.error, 1e-4) << e.name;
}

}  // namespace
}  // namespace pointconv
