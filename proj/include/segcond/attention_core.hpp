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

// Forward-only multimodal attention block over [text | image | condition]:
// per-branch projections with merged low-rank adapters, axial 2D rotary
// embedding shared between image and condition tokens, and softmax attention
// with a boolean mask and an additive bias.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "segcond/attention_masks.hpp"
#include "segcond/error.hpp"
#include "segcond/rng.hpp"
#include "segcond/shape_conditioning.hpp"
#include "segcond/tensor.hpp"
#include "segcond/token_grid.hpp"

namespace segcond {

/// Added to the logits of disallowed pairs; exp() of it underflows to exactly 0.
inline constexpr double kMaskSentinel = -1e9;
inline constexpr double kRopeBase = 10000.0;

// ---------------------------------------------------------------------------
// Rotary embedding

/// Axial 2D rotary embedding. The first half of each row is rotated by the
/// grid row, the second half by the grid column; pair j of a half of width h
/// turns by pos / base^(2j/h).
inline TokenMatrix rope_2d(const TokenMatrix& tokens, std::span<const GridPos> positions,
                           double base = kRopeBase) {
  const Eigen::Index d = tokens.cols();
  if (d % 4 != 0) throw DimensionError("rotary dim " + std::to_string(d) + " is not divisible by 4");
  if (positions.size() != static_cast<std::size_t>(tokens.rows())) {
    throw ShapeMismatch("rope_2d got " + std::to_string(positions.size()) + " positions for " +
                        std::to_string(tokens.rows()) + " tokens");
  }
  const Eigen::Index half = d / 2;
  std::vector<double> inv_freq(static_cast<std::size_t>(half / 2));
  for (std::size_t j = 0; j < inv_freq.size(); ++j) {
    inv_freq[j] = 1.0 / std::pow(base, 2.0 * static_cast<double>(j) / static_cast<double>(half));
  }
  TokenMatrix out = tokens;
  for (Eigen::Index t = 0; t < tokens.rows(); ++t) {
    const GridPos p = positions[static_cast<std::size_t>(t)];
    for (int axis = 0; axis < 2; ++axis) {
      const double pos = axis == 0 ? p.row : p.col;
      if (pos == 0.0) continue;
      const Eigen::Index offset = axis * half;
      for (std::size_t j = 0; j < inv_freq.size(); ++j) {
        const double theta = pos * inv_freq[j];
        const double c = std::cos(theta);
        const double s = std::sin(theta);
        const Eigen::Index i0 = offset + 2 * static_cast<Eigen::Index>(j);
        const double x0 = tokens(t, i0);
        const double x1 = tokens(t, i0 + 1);
        out(t, i0) = x0 * c - x1 * s;
        out(t, i0 + 1) = x0 * s + x1 * c;
      }
    }
  }
  return out;
}

/// rope_2d applied independently to each head's slice of the model dim.
inline TokenMatrix rope_2d_heads(const TokenMatrix& tokens, std::span<const GridPos> positions, int heads) {
  if (heads < 1 || tokens.cols() % heads != 0) {
    throw DimensionError("model dim " + std::to_string(tokens.cols()) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  const Eigen::Index dh = tokens.cols() / heads;
  TokenMatrix out(tokens.rows(), tokens.cols());
  for (int h = 0; h < heads; ++h) {
    out.middleCols(h * dh, dh) = rope_2d(tokens.middleCols(h * dh, dh), positions);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Masked, biased attention

struct AttentionResult {
  TokenMatrix output;
  std::vector<Matrix> weights;  // one S x S row-stochastic matrix per head
};

/// Per head: softmax(Q K^T / sqrt(d_h) + bias + maskterm) V, heads concatenated.
inline AttentionResult attend(const TokenMatrix& q, const TokenMatrix& k, const TokenMatrix& v,
                              const AttentionMask& mask, const Matrix& bias, int heads) {
  const Eigen::Index s = q.rows();
  const Eigen::Index d = q.cols();
  if (k.rows() != s || v.rows() != s || k.cols() != d || v.cols() != d) {
    throw ShapeMismatch("Q, K, V must share shape");
  }
  if (mask.size() != static_cast<std::size_t>(s) || bias.rows() != s || bias.cols() != s) {
    throw ShapeMismatch("mask/bias size does not match sequence length " + std::to_string(s));
  }
  if (heads < 1 || d % heads != 0) {
    throw DimensionError("model dim " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                         " heads");
  }
  if (const auto report = check_reachability(mask); !report.ok()) {
    throw UnreachableQuery("query row " + std::to_string(report.unreachable_rows.front()) +
                           " has no allowed key");
  }

  Matrix additive = bias;
  for (Eigen::Index r = 0; r < s; ++r) {
    const auto row = mask.row(static_cast<std::size_t>(r));
    for (Eigen::Index c = 0; c < s; ++c) {
      if (!row[static_cast<std::size_t>(c)]) additive(r, c) += kMaskSentinel;
    }
  }

  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  AttentionResult result;
  result.output.resize(s, d);
  result.weights.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Matrix w = (q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * scale + additive;
    for (Eigen::Index r = 0; r < s; ++r) {
      auto row = w.row(r);
      const double mx = row.maxCoeff();
      // Scalar exp: Eigen's packet exp clamps its argument and leaves denormals.
      row = row.unaryExpr([mx](double x) { return std::exp(x - mx); });
      row /= row.sum();
    }
    result.output.middleCols(h * dh, dh) = w * v.middleCols(h * dh, dh);
    result.weights.push_back(std::move(w));
  }
  return result;
}

inline AttentionResult attend(const TokenMatrix& q, const TokenMatrix& k, const TokenMatrix& v,
                              const AttentionMask& mask, const BiasMatrix& bias, int heads) {
  return attend(q, k, v, mask, bias.values, heads);
}

inline TokenMatrix masked_attention(const TokenMatrix& q, const TokenMatrix& k, const TokenMatrix& v,
                                    const AttentionMask& mask, const BiasMatrix& bias, int heads) {
  return attend(q, k, v, mask, bias.values, heads).output;
}

// ---------------------------------------------------------------------------
// Low-rank adapters

struct LoraAdapter {
  Matrix a;  // r x d
  Matrix b;  // d x r
  double scale = 1.0;

  Eigen::Index rank() const { return a.rows(); }

  static LoraAdapter zero(Eigen::Index d, Eigen::Index r) {
    return {Matrix::Zero(r, d), Matrix::Zero(d, r), 1.0};
  }
};

/// W + scale * B A.
inline Matrix merge_lora(const Matrix& w, const LoraAdapter& adapter) {
  const Eigen::Index d = w.rows();
  const Eigen::Index r = adapter.rank();
  if (w.cols() != d) throw ShapeMismatch("base weight must be square");
  if (r < 1 || r > d) throw ShapeMismatch("adapter rank " + std::to_string(r) + " outside [1, " + std::to_string(d) + "]");
  if (adapter.a.cols() != d || adapter.b.rows() != d || adapter.b.cols() != r) {
    throw ShapeMismatch("adapter A must be r x d and B d x r for d = " + std::to_string(d));
  }
  return w + adapter.scale * (adapter.b * adapter.a);
}

enum class Branch { kText, kImage, kCondition };

struct Projections {
  Matrix q, k, v, o;  // each d x d, applied as x W^T
};

struct LoraSet {
  LoraAdapter q, k, v, o;
};

/// Base weights for the text and image branches plus one adapter set per
/// branch. The condition branch has no base weights of its own: it reuses the
/// image branch's.
struct BranchParams {
  Projections text_base;
  Projections image_base;
  LoraSet text_lora;
  LoraSet image_lora;
  LoraSet cond_lora;

  Eigen::Index dim() const { return image_base.q.rows(); }

  const Projections& base(Branch b) const { return b == Branch::kText ? text_base : image_base; }

  const LoraSet& lora(Branch b) const {
    switch (b) {
      case Branch::kText: return text_lora;
      case Branch::kImage: return image_lora;
      case Branch::kCondition: return cond_lora;
    }
    return image_lora;
  }

  Projections merged(Branch b) const {
    const Projections& w = base(b);
    const LoraSet& l = lora(b);
    return {merge_lora(w.q, l.q), merge_lora(w.k, l.k), merge_lora(w.v, l.v), merge_lora(w.o, l.o)};
  }
};

/// Seeded parameters. Base weights ~ N(0, 1/d); adapter A ~ N(0, 1/d);
/// adapter B ~ N(0, lora_b_std^2), i.e. zero (untrained) by default.
inline BranchParams init_branch_params(Eigen::Index d, Eigen::Index rank, std::uint64_t seed,
                                       double lora_b_std = 0.0) {
  if (d < 1 || rank < 1 || rank > d) throw ShapeMismatch("need 1 <= rank <= d");
  SplitMix64 rng(seed);
  const double w_std = 1.0 / std::sqrt(static_cast<double>(d));
  const auto projections = [&] {
    Projections p;
    p.q = random_normal(rng, d, d, w_std);
    p.k = random_normal(rng, d, d, w_std);
    p.v = random_normal(rng, d, d, w_std);
    p.o = random_normal(rng, d, d, w_std);
    return p;
  };
  const auto adapter = [&] {
    LoraAdapter a;
    a.a = random_normal(rng, rank, d, w_std);
    a.b = lora_b_std == 0.0 ? Matrix::Zero(d, rank) : random_normal(rng, d, rank, lora_b_std);
    return a;
  };
  const auto lora_set = [&] {
    LoraSet s;
    s.q = adapter();
    s.k = adapter();
    s.v = adapter();
    s.o = adapter();
    return s;
  };
  BranchParams params;
  params.text_base = projections();
  params.image_base = projections();
  params.text_lora = lora_set();
  params.image_lora = lora_set();
  params.cond_lora = lora_set();
  return params;
}

// ---------------------------------------------------------------------------
// Attention block

struct BlockOutput {
  TokenMatrix text;
  TokenMatrix image;
  TokenMatrix cond;
  std::vector<Matrix> weights;  // per head, over the joint sequence
};

/// One single-stream attention block over the concatenated sequence. Text
/// tokens sit at position (0,0); image tokens take their grid positions from
/// the layout; condition tokens use `cond_positions`, which share the image
/// grid.
inline BlockOutput block_forward(const TokenMatrix& text, const TokenMatrix& image, const TokenMatrix& cond,
                                 const TokenLayout& layout, std::span<const GridPos> cond_positions,
                                 const BranchParams& params, const AttentionMask& mask, const BiasMatrix& bias,
                                 int heads) {
  const Eigen::Index d = params.dim();
  const auto nt = static_cast<Eigen::Index>(layout.l_text);
  const auto ni = static_cast<Eigen::Index>(layout.l_img);
  const auto nc = cond.rows();
  if (text.rows() != nt || image.rows() != ni) {
    throw ShapeMismatch("segment lengths do not match the token layout");
  }
  if (text.cols() != d || image.cols() != d || (nc > 0 && cond.cols() != d)) {
    throw ShapeMismatch("token dim does not match parameter dim " + std::to_string(d));
  }
  if (cond_positions.size() != static_cast<std::size_t>(nc)) {
    throw ShapeMismatch("condition positions do not match condition tokens");
  }
  if (bias.l_text != layout.l_text || bias.l_img != layout.l_img || bias.l_cond != static_cast<std::size_t>(nc)) {
    throw ShapeMismatch("bias blocks do not match segment lengths");
  }
  const Eigen::Index s = nt + ni + nc;

  const Projections pt = params.merged(Branch::kText);
  const Projections pi = params.merged(Branch::kImage);
  const Projections pc = params.merged(Branch::kCondition);

  TokenMatrix q(s, d), k(s, d), v(s, d);
  const auto project = [&](const TokenMatrix& x, const Projections& p, Eigen::Index at) {
    if (x.rows() == 0) return;
    q.middleRows(at, x.rows()) = x * p.q.transpose();
    k.middleRows(at, x.rows()) = x * p.k.transpose();
    v.middleRows(at, x.rows()) = x * p.v.transpose();
  };
  project(text, pt, 0);
  project(image, pi, nt);
  project(cond, pc, nt + ni);

  const auto img_pos = layout.image_positions();
  q.middleRows(nt, ni) = rope_2d_heads(q.middleRows(nt, ni), img_pos, heads);
  k.middleRows(nt, ni) = rope_2d_heads(k.middleRows(nt, ni), img_pos, heads);
  if (nc > 0) {
    q.middleRows(nt + ni, nc) = rope_2d_heads(q.middleRows(nt + ni, nc), cond_positions, heads);
    k.middleRows(nt + ni, nc) = rope_2d_heads(k.middleRows(nt + ni, nc), cond_positions, heads);
  }

  AttentionResult attn = attend(q, k, v, mask, bias.values, heads);

  BlockOutput out;
  out.text = attn.output.topRows(nt) * pt.o.transpose();
  out.image = attn.output.middleRows(nt, ni) * pi.o.transpose();
  out.cond = nc > 0 ? TokenMatrix(attn.output.bottomRows(nc) * pc.o.transpose()) : TokenMatrix(0, d);
  out.weights = std::move(attn.weights);
  return out;
}

/// Total attention weight each image query puts on condition keys, averaged
/// over heads. Entry i belongs to image token i.
inline std::vector<double> condition_mass(const BlockOutput& out, std::size_t l_text, std::size_t l_img) {
  std::vector<double> mass(l_img, 0.0);
  if (out.weights.empty()) return mass;
  const auto s = out.weights.front().cols();
  const auto c0 = static_cast<Eigen::Index>(l_text + l_img);
  for (const auto& w : out.weights) {
    for (std::size_t i = 0; i < l_img; ++i) {
      mass[i] += w.row(static_cast<Eigen::Index>(l_text + i)).tail(s - c0).sum();
    }
  }
  for (auto& m : mass) m /= static_cast<double>(out.weights.size());
  return mass;
}

}  // namespace segcond
