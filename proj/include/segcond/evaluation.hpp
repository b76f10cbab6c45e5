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

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "segcond/error.hpp"
#include "segcond/layout.hpp"
#include "segcond/token_grid.hpp"

namespace segcond {

// ---------------------------------------------------------------------------
// Class-agnostic MIoU

/// |pred & ref| / |pred | ref|; 1.0 when both are empty.
inline double entity_iou(const BinaryMask& pred, const BinaryMask& ref) {
  if (!pred.same_shape(ref)) throw DimensionMismatch("IoU of masks with different size");
  const auto p = pred.bits();
  const auto r = ref.bits();
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += static_cast<std::size_t>(p[i] & r[i]);
    uni += static_cast<std::size_t>(p[i] | r[i]);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

struct MaskPair {
  int id = 0;
  BinaryMask pred;
  BinaryMask ref;
};

/// Unweighted mean of per-entity IoU. Ids must be unique.
inline double class_agnostic_miou(std::span<const MaskPair> pairs) {
  if (pairs.empty()) throw EmptySet("MIoU over an empty mask-pair set");
  std::set<int> seen;
  double sum = 0.0;
  for (const auto& p : pairs) {
    if (!seen.insert(p.id).second) throw InvalidArgument("duplicate entity id " + std::to_string(p.id));
    sum += entity_iou(p.pred, p.ref);
  }
  return sum / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// Attention cost model

struct CostProfile {
  std::uint64_t l_text = 0;
  std::uint64_t l_img = 0;
  std::uint64_t l_cond = 0;
  std::uint64_t heads = 1;
  std::uint64_t head_dim = 1;
  std::uint64_t layers = 1;

  std::uint64_t sequence() const { return l_text + l_img + l_cond; }
  std::uint64_t model_dim() const { return heads * head_dim; }
};

/// Multiply-accumulates of the attention sublayer only: 4 S d^2 for the
/// Q/K/V/O projections plus 2 S^2 d for scores and value aggregation, per layer.
inline std::uint64_t attention_macs(const CostProfile& p) {
  const std::uint64_t s = p.sequence();
  const std::uint64_t d = p.model_dim();
  return p.layers * (4 * s * d * d + 2 * s * s * d);
}

struct CitfSetting {
  std::string name;
  std::uint64_t l_cond = 0;
  std::uint64_t macs = 0;
  std::uint64_t saved_macs = 0;  // relative to running without filtering
  double savings_pct = 0.0;
};

/// The five cost settings: no condition tokens, filtering with the minimum,
/// maximum and average retained counts, and no filtering at all.
struct CitfReport {
  CostProfile profile;  // l_cond unused
  std::uint64_t pre_filter = 0;
  std::vector<CitfSetting> settings;

  const CitfSetting& setting(const std::string& name) const {
    for (const auto& s : settings) {
      if (s.name == name) return s;
    }
    throw InvalidArgument("no CITF setting named " + name);
  }
};

inline CitfReport citf_report(const CostProfile& profile, std::uint64_t pre_filter,
                              std::span<const std::uint64_t> post_filter) {
  if (post_filter.empty()) throw EmptySet("citf_report needs at least one retained-token count");
  for (auto n : post_filter) {
    if (n > pre_filter) {
      throw InvalidArgument("retained count " + std::to_string(n) + " exceeds pre-filter count " +
                            std::to_string(pre_filter));
    }
  }
  const auto [mn, mx] = std::minmax_element(post_filter.begin(), post_filter.end());
  const std::uint64_t total = std::accumulate(post_filter.begin(), post_filter.end(), std::uint64_t{0});
  const std::uint64_t n = post_filter.size();
  const std::uint64_t avg = (2 * total + n) / (2 * n);  // round half up

  CitfReport report{profile, pre_filter, {}};
  CostProfile p = profile;
  p.l_cond = pre_filter;
  const std::uint64_t full = attention_macs(p);
  const auto add = [&](const char* name, std::uint64_t l_cond) {
    p.l_cond = l_cond;
    const std::uint64_t macs = attention_macs(p);
    const std::uint64_t saved = full - macs;
    const double pct = full == 0 ? 0.0 : 100.0 * static_cast<double>(saved) / static_cast<double>(full);
    report.settings.push_back({name, l_cond, macs, saved, pct});
  };
  add("no_condition", 0);
  add("citf_min", *mn);
  add("citf_max", *mx);
  add("citf_avg", avg);
  add("no_citf", pre_filter);
  return report;
}

/// Single-sample report; text and image lengths come from the layout.
inline CitfReport citf_report(const TokenLayout& layout, std::uint64_t pre_filter, std::uint64_t post_filter,
                              CostProfile profile) {
  if (post_filter > pre_filter) throw InvalidArgument("post-filter count exceeds pre-filter count");
  profile.l_text = layout.l_text;
  profile.l_img = layout.l_img;
  const std::uint64_t counts[] = {post_filter};
  return citf_report(profile, pre_filter, counts);
}

}  // namespace segcond
