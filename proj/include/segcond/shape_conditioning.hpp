// Copyright 2026 The segcond Authors
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

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "segcond/error.hpp"
#include "segcond/layout.hpp"
#include "segcond/tensor.hpp"
#include "segcond/token_grid.hpp"

namespace segcond {

inline constexpr double kStrictGamma = 1.0;
inline constexpr double kScribbleGamma = 0.2;

/// Encoded contour-map tokens. kept_indices index the unfiltered patch grid.
struct ConditionTokens {
  TokenMatrix tokens;
  std::vector<GridPos> source_positions;
  std::vector<std::size_t> kept_indices;

  std::size_t size() const { return source_positions.size(); }
};

/// Deterministic patch encoder: one token per f x f patch in raster order,
/// holding the patch's channel-0 values / 255 in its first f*f coordinates.
/// A blank patch encodes to the zero vector.
inline ConditionTokens encode_contour(const ContourImage& img, int f, int d) {
  if (f < 1) throw InvalidArgument("downsampling factor must be >= 1");
  if (d < f * f) {
    throw DimensionError("embedding dim " + std::to_string(d) + " cannot hold a " + std::to_string(f) + "x" +
                         std::to_string(f) + " patch");
  }
  const int rows = (img.height + f - 1) / f;
  const int cols = (img.width + f - 1) / f;
  ConditionTokens out;
  out.tokens = TokenMatrix::Zero(static_cast<Eigen::Index>(rows) * cols, d);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Eigen::Index t = static_cast<Eigen::Index>(r) * cols + c;
      for (int py = 0; py < f; ++py) {
        const int y = r * f + py;
        if (y >= img.height) break;
        for (int px = 0; px < f; ++px) {
          const int x = c * f + px;
          if (x >= img.width) break;
          out.tokens(t, py * f + px) = img.at(x, y, 0) / 255.0;
        }
      }
      out.source_positions.push_back({r, c});
      out.kept_indices.push_back(static_cast<std::size_t>(t));
    }
  }
  return out;
}

/// Condition image token filtering: keeps tokens with some coordinate whose
/// magnitude exceeds `threshold`. The default threshold keeps exactly the
/// tokens that are not identically zero.
inline ConditionTokens filter_tokens(const ConditionTokens& cond, double threshold = 0.0) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index t = 0; t < cond.tokens.rows(); ++t) {
    if ((cond.tokens.row(t).array().abs() > threshold).any()) keep.push_back(t);
  }
  ConditionTokens out;
  out.tokens.resize(static_cast<Eigen::Index>(keep.size()), cond.tokens.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const auto t = static_cast<std::size_t>(keep[i]);
    out.tokens.row(static_cast<Eigen::Index>(i)) = cond.tokens.row(keep[i]);
    out.source_positions.push_back(cond.source_positions[t]);
    out.kept_indices.push_back(cond.kept_indices[t]);
  }
  return out;
}

/// Indices (into `cond`) of the tokens filter_tokens would drop.
inline std::vector<std::size_t> dropped_token_indices(const ConditionTokens& cond, double threshold = 0.0) {
  std::vector<std::size_t> dropped;
  for (Eigen::Index t = 0; t < cond.tokens.rows(); ++t) {
    if (!(cond.tokens.row(t).array().abs() > threshold).any()) dropped.push_back(static_cast<std::size_t>(t));
  }
  return dropped;
}

/// Additive attention bias over [text | image | condition]: log(gamma) on the
/// image<->condition blocks, zero elsewhere.
struct BiasMatrix {
  std::size_t l_text = 0;
  std::size_t l_img = 0;
  std::size_t l_cond = 0;
  double gamma = 1.0;
  Matrix values;

  std::size_t size() const { return l_text + l_img + l_cond; }

  static BiasMatrix zero(std::size_t l_text, std::size_t l_img, std::size_t l_cond) {
    const auto s = static_cast<Eigen::Index>(l_text + l_img + l_cond);
    return {l_text, l_img, l_cond, 1.0, Matrix::Zero(s, s)};
  }
};

inline BiasMatrix build_bias(std::size_t l_text, std::size_t l_img, std::size_t l_cond, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw GammaOutOfRange("gamma must lie in (0, 1], got " + std::to_string(gamma));
  }
  BiasMatrix bias = BiasMatrix::zero(l_text, l_img, l_cond);
  bias.gamma = gamma;
  const double v = std::log(gamma);
  const auto img0 = static_cast<Eigen::Index>(l_text);
  const auto cond0 = static_cast<Eigen::Index>(l_text + l_img);
  const auto ni = static_cast<Eigen::Index>(l_img);
  const auto nc = static_cast<Eigen::Index>(l_cond);
  bias.values.block(img0, cond0, ni, nc).setConstant(v);
  bias.values.block(cond0, img0, nc, ni).setConstant(v);
  return bias;
}

}  // namespace segcond
