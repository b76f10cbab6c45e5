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

// Pixel masks -> latent token grid -> joint-sequence index sets.
//
// The joint sequence is laid out as [T_0 | T_1 | ... | T_N | image tokens],
// image tokens in raster order. Group 0 is the global caption for text and
// the background for image tokens; group i >= 1 is the i-th entity in
// instruction order (not its id).

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "segcond/error.hpp"
#include "segcond/layout.hpp"

namespace segcond {

inline constexpr int kDefaultDownsample = 16;
inline constexpr std::size_t kDefaultCaptionCap = 77;

struct GridPos {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

/// Pixel-level entity ids, 0 = background.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<int> labels;

  int at(int x, int y) const {
    return labels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
  }
  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

/// Entity id per latent token, row-major.
struct TokenEntityMap {
  int rows = 0;
  int cols = 0;
  std::vector<int> labels;

  int at(int r, int c) const {
    return labels[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)];
  }
  std::size_t size() const { return labels.size(); }
  friend bool operator==(const TokenEntityMap&, const TokenEntityMap&) = default;
};

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  std::size_t size() const { return end - begin; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

struct TokenLayout {
  std::size_t l_text = 0;
  std::size_t l_img = 0;
  int grid_rows = 0;
  int grid_cols = 0;
  std::vector<IndexRange> text_sets;                 // T_0..T_N
  std::vector<std::vector<std::size_t>> image_sets;  // I_0..I_N, joint-sequence indices
  std::vector<GridPos> positions;                    // per joint token; text tokens at (0,0)
  std::vector<int> group;                            // per joint token, its i in [0, N]

  std::size_t size() const { return l_text + l_img; }
  std::size_t num_groups() const { return text_sets.size(); }
  bool is_text(std::size_t q) const { return q < l_text; }
  bool is_image(std::size_t q) const { return q >= l_text && q < l_text + l_img; }

  std::span<const GridPos> image_positions() const {
    return std::span<const GridPos>(positions).subspan(l_text, l_img);
  }

  friend bool operator==(const TokenLayout&, const TokenLayout&) = default;
};

/// Stable content hash, used as a cache key for attention masks.
inline std::uint64_t layout_hash(const TokenLayout& layout) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  };
  mix(layout.l_text);
  mix(layout.l_img);
  mix(static_cast<std::uint64_t>(layout.grid_rows));
  mix(static_cast<std::uint64_t>(layout.grid_cols));
  for (auto g : layout.group) mix(static_cast<std::uint64_t>(g));
  return h;
}

/// Pixels claimed by several masks go to the entity with the smallest mask
/// area, ties to the lower id.
inline LabelMap assign_labels(const LayoutInstruction& instr) {
  validate(instr);
  LabelMap out{instr.image_width, instr.image_height,
               std::vector<int>(static_cast<std::size_t>(instr.image_width) *
                                    static_cast<std::size_t>(instr.image_height),
                                0)};
  std::vector<std::size_t> order(instr.entities.size());
  std::vector<std::size_t> areas(instr.entities.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
    areas[i] = instr.entities[i].mask.popcount();
  }
  // Paint from the weakest claim to the strongest so the winner lands last.
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (areas[a] != areas[b]) return areas[a] > areas[b];
    return instr.entities[a].id > instr.entities[b].id;
  });
  for (auto idx : order) {
    const auto& e = instr.entities[idx];
    for (std::size_t p = 0; p < e.mask.size(); ++p) {
      if (e.mask[p]) out.labels[p] = e.id;
    }
  }
  return out;
}

namespace detail {

// Plurality label over the pixel box [y0,y1) x [x0,x1); ties to the lower label.
inline int plurality_label(const LabelMap& labels, int x0, int x1, int y0, int y1) {
  std::map<int, std::size_t> counts;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) ++counts[labels.at(x, y)];
  }
  int best = 0;
  std::size_t best_count = 0;
  for (const auto& [label, count] : counts) {  // ascending label order
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  }
  return best;
}

}  // namespace detail

/// One token per f x f pixel patch (truncated at the right/bottom edge).
inline TokenEntityMap patchify_labels(const LabelMap& labels, int f) {
  if (f < 1) throw InvalidArgument("downsampling factor must be >= 1");
  TokenEntityMap out;
  out.rows = (labels.height + f - 1) / f;
  out.cols = (labels.width + f - 1) / f;
  out.labels.resize(static_cast<std::size_t>(out.rows) * static_cast<std::size_t>(out.cols));
  for (int r = 0; r < out.rows; ++r) {
    for (int c = 0; c < out.cols; ++c) {
      out.labels[static_cast<std::size_t>(r) * static_cast<std::size_t>(out.cols) + static_cast<std::size_t>(c)] =
          detail::plurality_label(labels, c * f, std::min(labels.width, (c + 1) * f), r * f,
                                  std::min(labels.height, (r + 1) * f));
    }
  }
  return out;
}

/// Resamples to an explicit rows x cols grid. Token (r, c) covers pixel rows
/// [floor(r*H/rows), floor((r+1)*H/rows)) and the analogous columns; when f
/// divides both sides this coincides with patchify_labels.
inline TokenEntityMap patchify_to_grid(const LabelMap& labels, int rows, int cols) {
  if (rows < 1 || cols < 1 || rows > labels.height || cols > labels.width) {
    throw InvalidArgument("token grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " does not fit a " + std::to_string(labels.width) + "x" +
                          std::to_string(labels.height) + " image");
  }
  TokenEntityMap out{rows, cols, std::vector<int>(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))};
  const auto lo = [](int i, int n, int extent) {
    return static_cast<int>(static_cast<std::int64_t>(i) * extent / n);
  };
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      out.labels[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)] =
          detail::plurality_label(labels, lo(c, cols, labels.width), lo(c + 1, cols, labels.width),
                                  lo(r, rows, labels.height), lo(r + 1, rows, labels.height));
    }
  }
  return out;
}

/// Stand-in tokenizer length: whitespace-separated words, clamped to [1, cap].
inline std::size_t caption_token_count(const std::string& caption, std::size_t cap = kDefaultCaptionCap) {
  std::istringstream in(caption);
  std::size_t words = 0;
  for (std::string w; in >> w;) ++words;
  return std::clamp<std::size_t>(words, 1, std::max<std::size_t>(cap, 1));
}

inline std::vector<std::size_t> caption_lengths(const LayoutInstruction& instr,
                                                std::size_t cap = kDefaultCaptionCap) {
  std::vector<std::size_t> lens;
  lens.reserve(instr.entities.size() + 1);
  lens.push_back(caption_token_count(instr.global_caption, cap));
  for (const auto& e : instr.entities) lens.push_back(caption_token_count(e.caption, cap));
  return lens;
}

/// Builds T_0..T_N and I_0..I_N. `entity_ids[i-1]` is the id that labels group
/// i in `tokens`; when empty, ids are taken to be 1..N.
inline TokenLayout build_token_layout(const TokenEntityMap& tokens, std::span<const std::size_t> caption_lengths,
                                      std::span<const int> entity_ids = {}) {
  if (caption_lengths.empty()) throw InvalidArgument("at least the global caption length is required");
  if (tokens.rows < 1 || tokens.cols < 1 || tokens.labels.size() != tokens.size() ||
      tokens.size() != static_cast<std::size_t>(tokens.rows) * static_cast<std::size_t>(tokens.cols)) {
    throw InvalidArgument("token grid must be non-empty and consistent");
  }
  const std::size_t groups = caption_lengths.size();
  if (!entity_ids.empty() && entity_ids.size() + 1 != groups) {
    throw InvalidArgument("entity id list does not match caption count");
  }

  std::map<int, int> id_to_group{{0, 0}};
  for (std::size_t i = 1; i < groups; ++i) {
    const int id = entity_ids.empty() ? static_cast<int>(i) : entity_ids[i - 1];
    id_to_group[id] = static_cast<int>(i);
  }

  TokenLayout layout;
  layout.grid_rows = tokens.rows;
  layout.grid_cols = tokens.cols;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < groups; ++i) {
    if (caption_lengths[i] < 1) {
      throw InvalidArgument("caption " + std::to_string(i) + " has zero tokens");
    }
    layout.text_sets.push_back({cursor, cursor + caption_lengths[i]});
    cursor += caption_lengths[i];
    for (std::size_t k = 0; k < caption_lengths[i]; ++k) layout.group.push_back(static_cast<int>(i));
  }
  layout.l_text = cursor;
  layout.l_img = tokens.size();
  layout.positions.assign(layout.l_text, GridPos{0, 0});
  layout.image_sets.assign(groups, {});

  for (int r = 0; r < tokens.rows; ++r) {
    for (int c = 0; c < tokens.cols; ++c) {
      const int label = tokens.at(r, c);
      const auto it = id_to_group.find(label);
      if (it == id_to_group.end()) {
        throw UnknownEntityId("token (" + std::to_string(r) + "," + std::to_string(c) + ") has entity id " +
                              std::to_string(label) + " with no caption");
      }
      const std::size_t q = layout.positions.size();
      layout.image_sets[static_cast<std::size_t>(it->second)].push_back(q);
      layout.positions.push_back({r, c});
      layout.group.push_back(it->second);
    }
  }
  return layout;
}

/// assign_labels -> patchify_labels -> build_token_layout with whitespace caption lengths.
inline TokenLayout layout_from_instruction(const LayoutInstruction& instr, int f = kDefaultDownsample,
                                           std::size_t caption_cap = kDefaultCaptionCap) {
  const TokenEntityMap tokens = patchify_labels(assign_labels(instr), f);
  std::vector<int> ids;
  for (const auto& e : instr.entities) ids.push_back(e.id);
  const auto lens = caption_lengths(instr, caption_cap);
  return build_token_layout(tokens, lens, ids);
}

}  // namespace segcond
