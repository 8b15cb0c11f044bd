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

#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pointconv/ops.hpp"
#include "pointconv/point_ops.hpp"
#include "pointconv/tensor.hpp"

namespace pointconv {

template <typename Scalar>
using NamedTensors = std::vector<std::pair<std::string, Tensor<Scalar>>>;

/// How the inverse density scale S enters a PointConv layer.
enum class DensityMode {
  kMlp,       // S = DensityNet(normalized inverse density)
  kDisabled,  // S = 1
  kRaw,       // S = normalized inverse density, no transform
};

std::string_view to_string(DensityMode mode);
/// Accepts "mlp", "disabled" / "none", "raw". Throws ValueError otherwise.
DensityMode parse_density_mode(std::string_view name);

/// Fully connected layer with Glorot-uniform weights and zero bias.
template <typename Scalar>
struct LinearLayer {
  LinearLayer() = default;
  LinearLayer(Index in, Index out, std::mt19937_64& rng);

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, NamedTensors<Scalar>& params) const;

  Tensor<Scalar> weight;  // [in, out]
  Tensor<Scalar> bias;    // [out]
};

struct PointConvConfig {
  Index dim = 3;
  Index c_in = 1;
  Index c_mid = 32;
  Index c_out = 1;
  Index k = 16;  // neighborhood size, only used to scale the initial H
  DensityMode density = DensityMode::kMlp;
  int weight_net_layers = 2;  // hidden layers producing M
  bool weight_net_batch_norm = false;
};

// ---------------------------------------------------------------------------
// Differentiable kernels shared by the two evaluation orders.

/// f[R,K,C1], s[R,K], m[R,K,C2] -> g[R,C1,C2] with g[r] = (s[r] * f[r])^T m[r].
template <typename Scalar>
Tensor<Scalar> weighted_gram(const Tensor<Scalar>& f, const Tensor<Scalar>& s,
                             const Tensor<Scalar>& m);

/// Per-neighbor filters W[r,k,ci,:] = m[r,k,:] h_weight[ci] + h_bias[ci] with
/// m[R,K,Cm], h_weight[Cin,Cm,Cout], h_bias[Cin,Cout] -> W[R,K,Cin,Cout].
template <typename Scalar>
Tensor<Scalar> materialize_filters(const Tensor<Scalar>& m, const Tensor<Scalar>& h_weight,
                                   const Tensor<Scalar>& h_bias);

/// out[r,:] = sum_k s[r,k] sum_ci f[r,k,ci] w[r,k,ci,:].
template <typename Scalar>
Tensor<Scalar> contract_filters(const Tensor<Scalar>& f, const Tensor<Scalar>& s,
                                const Tensor<Scalar>& w);

// ---------------------------------------------------------------------------

/// MLP from a local coordinate to the C_in x C_out filter at that offset. The
/// hidden stack produces M; the final linear map H (weight and bias) turns M
/// into filters.
template <typename Scalar>
class WeightNet {
 public:
  WeightNet() = default;
  WeightNet(const PointConvConfig& config, std::mt19937_64& rng);

  /// local[R,K,d] -> M[R,K,C_mid].
  Tensor<Scalar> hidden(const Tensor<Scalar>& local, Mode mode = Mode::kEval);
  /// M[R,K,C_mid] -> W[R,K,C_in,C_out].
  Tensor<Scalar> filters(const Tensor<Scalar>& hidden) const;

  void collect(const std::string& prefix, NamedTensors<Scalar>& params,
               NamedTensors<Scalar>& buffers) const;

  std::vector<LinearLayer<Scalar>> layers;
  std::vector<BatchNormState<Scalar>> norms;  // empty unless batch norm is on
  Tensor<Scalar> h_weight;                    // [C_in, C_mid, C_out]
  Tensor<Scalar> h_bias;                      // [C_in, C_out]
};

/// Scalar MLP 1 -> 16 -> 8 -> 1 with ReLU hidden units and a sigmoid output.
template <typename Scalar>
class DensityNet {
 public:
  DensityNet() = default;
  explicit DensityNet(std::mt19937_64& rng);

  /// inverse_density[R,K] -> S[R,K] in (0,1).
  Tensor<Scalar> operator()(const Tensor<Scalar>& inverse_density) const;
  void collect(const std::string& prefix, NamedTensors<Scalar>& params) const;

  LinearLayer<Scalar> l1, l2, l3;
};

/// One PointConv layer.
///
/// Inputs are per-region tensors: local coordinates [R,K,d], grouped features
/// [R,K,C_in] and grouped normalized inverse density [R,K]. Both evaluation
/// orders produce [R,C_out]:
///
///  - naive: materialize every filter W = H(M) and contract with S*F;
///  - efficient: reduce S*F against M first (one C_in x C_mid matrix per
///    region), then apply H as a single (C_in C_mid) -> C_out linear map.
///
/// They agree exactly in exact arithmetic. The efficient order never holds
/// the R x K x C_in x C_out filter tensor.
template <typename Scalar>
class PointConv {
 public:
  PointConv() = default;
  PointConv(const PointConvConfig& config, std::mt19937_64& rng);

  const PointConvConfig& config() const { return config_; }

  Tensor<Scalar> density_scale(const Tensor<Scalar>& inverse_density) const;

  Tensor<Scalar> forward_naive(const Tensor<Scalar>& local, const Tensor<Scalar>& features,
                               const Tensor<Scalar>& inverse_density, Mode mode = Mode::kEval);
  Tensor<Scalar> forward_efficient(const Tensor<Scalar>& local, const Tensor<Scalar>& features,
                                   const Tensor<Scalar>& inverse_density, Mode mode = Mode::kEval);

  /// The contraction stages alone, given M and S. Used for memory accounting.
  Tensor<Scalar> contract_naive(const Tensor<Scalar>& features, const Tensor<Scalar>& scale,
                                const Tensor<Scalar>& hidden) const;
  Tensor<Scalar> contract_efficient(const Tensor<Scalar>& features, const Tensor<Scalar>& scale,
                                    const Tensor<Scalar>& hidden) const;

  void collect(const std::string& prefix, NamedTensors<Scalar>& params,
               NamedTensors<Scalar>& buffers) const;

  WeightNet<Scalar> weight_net;
  DensityNet<Scalar> density_net;

 private:
  void check_inputs(const Tensor<Scalar>& local, const Tensor<Scalar>& features,
                    const Tensor<Scalar>& inverse_density) const;

  PointConvConfig config_;
};

/// Neighborhood -> constant tensors (local coords, grouped features, grouped
/// inverse density; ones when the neighborhood carries no density).
template <typename Scalar>
struct RegionTensors {
  Tensor<Scalar> local;
  Tensor<Scalar> features;
  Tensor<Scalar> inverse_density;
};

template <typename Scalar>
RegionTensors<Scalar> to_region_tensors(const Neighborhood<Scalar>& neighborhood);

template <typename Scalar>
Tensor<Scalar> pointconv_naive(const Neighborhood<Scalar>& neighborhood, PointConv<Scalar>& layer);
template <typename Scalar>
Tensor<Scalar> pointconv_efficient(const Neighborhood<Scalar>& neighborhood,
                                   PointConv<Scalar>& layer);

// ---------------------------------------------------------------------------
// Weight function sampling

struct SamplingPlane {
  int axis = 2;  // the coordinate held fixed (ignored for 2D layers)
  double offset = 0.0;
};

/// Evaluates the learned filter on a side x side grid spanning
/// [-extent, extent]^2 within the plane. Returns C_in * C_out images, image
/// (ci * C_out + co) holding W(., ci, co); rows run along the second free axis.
template <typename Scalar>
std::vector<MatrixX<Scalar>> sample_weight_function(WeightNet<Scalar>& net, Index dim,
                                                    SamplingPlane plane, Index side,
                                                    double extent);

enum class ImageFormat { kPgm, kCsv };

/// Writes images as `wfn_{layer}_{cin}_{cout}.pgm` (binary 16-bit, min-max
/// scaled per image) or `.csv`. Returns the written paths.
template <typename Scalar>
std::vector<std::filesystem::path> write_weight_images(const std::vector<MatrixX<Scalar>>& images,
                                                       Index c_out, const std::string& layer,
                                                       const std::filesystem::path& dir,
                                                       ImageFormat format);

}  // namespace pointconv
