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

// Boolean attention masks over a TokenLayout.
//
// Semantic alignment (SAA): each entity's text binds to its own image
// tokens, the global caption sees every image token, image tokens see each
// other freely.
//
// Attribute isolation (AIA): stricter; entity image tokens only see their own
// text and their own image tokens, the global caption only sees background
// image tokens, background image tokens still see every image token.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "segcond/error.hpp"
#include "segcond/token_grid.hpp"

namespace segcond {

enum class MaskKind { kSemanticAlignment, kAttributeIsolation };

inline const char* to_string(MaskKind kind) {
  return kind == MaskKind::kSemanticAlignment ? "saa" : "aia";
}

/// Dense S x S boolean matrix; row = query, column = key.
class AttentionMask {
 public:
  AttentionMask() = default;
  explicit AttentionMask(std::size_t size, bool fill = false)
      : size_(size), allowed_(size * size, fill ? 1 : 0) {}

  std::size_t size() const { return size_; }
  bool allowed(std::size_t q, std::size_t k) const { return allowed_[q * size_ + k] != 0; }
  void set(std::size_t q, std::size_t k, bool v = true) { allowed_[q * size_ + k] = v ? 1 : 0; }

  std::span<const std::uint8_t> row(std::size_t q) const {
    return std::span<const std::uint8_t>(allowed_).subspan(q * size_, size_);
  }

  friend bool operator==(const AttentionMask&, const AttentionMask&) = default;

 private:
  std::size_t size_ = 0;
  std::vector<std::uint8_t> allowed_;
};

inline AttentionMask build_saa(const TokenLayout& layout) {
  const std::size_t s = layout.size();
  AttentionMask mask(s);
  for (std::size_t q = 0; q < s; ++q) {
    const int gq = layout.group[q];
    const bool q_text = layout.is_text(q);
    for (std::size_t k = 0; k < s; ++k) {
      const int gk = layout.group[k];
      const bool k_text = layout.is_text(k);
      bool ok = false;
      if (q_text && k_text) {
        ok = gq == gk;
      } else if (q_text) {
        ok = gq == 0 || gq == gk;
      } else if (k_text) {
        ok = gk == 0 || gk == gq;
      } else {
        ok = true;
      }
      if (ok) mask.set(q, k);
    }
  }
  return mask;
}

inline AttentionMask build_aia(const TokenLayout& layout) {
  const std::size_t s = layout.size();
  AttentionMask mask(s);
  for (std::size_t q = 0; q < s; ++q) {
    const int gq = layout.group[q];
    const bool q_text = layout.is_text(q);
    for (std::size_t k = 0; k < s; ++k) {
      const int gk = layout.group[k];
      const bool k_text = layout.is_text(k);
      bool ok = false;
      if (q_text || k_text) {
        ok = gq == gk;
      } else {
        ok = gq == gk || gq == 0;
      }
      if (ok) mask.set(q, k);
    }
  }
  return mask;
}

inline AttentionMask build_mask(const TokenLayout& layout, MaskKind kind) {
  return kind == MaskKind::kSemanticAlignment ? build_saa(layout) : build_aia(layout);
}

/// Appends n_cond condition tokens whose rows and columns are fully allowed.
/// Condition strength is governed by the additive bias, not by this mask.
inline AttentionMask extend_with_condition(const AttentionMask& mask, std::size_t n_cond) {
  const std::size_t s = mask.size();
  AttentionMask out(s + n_cond, true);
  for (std::size_t q = 0; q < s; ++q) {
    for (std::size_t k = 0; k < s; ++k) out.set(q, k, mask.allowed(q, k));
  }
  return out;
}

/// Disallows every query from attending the given key columns.
inline void disallow_keys(AttentionMask& mask, std::span<const std::size_t> keys) {
  for (std::size_t q = 0; q < mask.size(); ++q) {
    for (auto k : keys) mask.set(q, k, false);
  }
}

struct ValidationReport {
  std::vector<std::size_t> unreachable_rows;
  bool ok() const { return unreachable_rows.empty(); }
};

inline ValidationReport check_reachability(const AttentionMask& mask) {
  ValidationReport report;
  for (std::size_t q = 0; q < mask.size(); ++q) {
    bool any = false;
    for (auto v : mask.row(q)) {
      if (v) {
        any = true;
        break;
      }
    }
    if (!any) report.unreachable_rows.push_back(q);
  }
  return report;
}

/// Which mask each transformer layer uses. AIA layers form the half-open
/// range [aia_start, aia_end).
struct LayerSchedule {
  int total_layers = 0;
  int aia_start = 0;
  int aia_end = 0;
  std::vector<MaskKind> kinds;

  MaskKind at(int layer) const { return kinds.at(static_cast<std::size_t>(layer)); }
};

inline constexpr int kReferenceLayers = 57;
inline constexpr int kReferenceAiaStart = 20;
inline constexpr int kReferenceAiaEnd = 38;

inline LayerSchedule make_schedule(int total_layers = kReferenceLayers, int aia_start = kReferenceAiaStart,
                                   int aia_end = kReferenceAiaEnd) {
  if (!(0 <= aia_start && aia_start <= aia_end && aia_end <= total_layers)) {
    throw RangeError("need 0 <= aia_start <= aia_end <= total_layers, got (" + std::to_string(total_layers) +
                     ", " + std::to_string(aia_start) + ", " + std::to_string(aia_end) + ")");
  }
  LayerSchedule s{total_layers, aia_start, aia_end, {}};
  s.kinds.reserve(static_cast<std::size_t>(total_layers));
  for (int l = 0; l < total_layers; ++l) {
    s.kinds.push_back(l >= aia_start && l < aia_end ? MaskKind::kAttributeIsolation
                                                    : MaskKind::kSemanticAlignment);
  }
  return s;
}

/// Rescales the reference middle-layer range to a model of `total_layers`.
/// For 4 layers this gives AIA on layers [1, 3).
inline LayerSchedule scaled_schedule(int total_layers) {
  if (total_layers < 0) throw RangeError("negative layer count");
  const auto scale = [total_layers](int l) {
    return static_cast<int>(std::lround(static_cast<double>(l) * total_layers / kReferenceLayers));
  };
  return make_schedule(total_layers, scale(kReferenceAiaStart), scale(kReferenceAiaEnd));
}

/// Per-sample cache keyed by (layout hash, kind). Readers share a lock;
/// inserting an already present key keeps the first entry.
class MaskCache {
 public:
  std::shared_ptr<const AttentionMask> get(const TokenLayout& layout, MaskKind kind) {
    const Key key{layout_hash(layout), kind};
    {
      std::shared_lock lock(mutex_);
      const auto it = entries_.find(key);
      if (it != entries_.end() && it->second.layout == layout) return it->second.mask;
    }
    auto mask = std::make_shared<const AttentionMask>(build_mask(layout, kind));
    std::unique_lock lock(mutex_);
    const auto [it, inserted] = entries_.try_emplace(key, Entry{layout, mask});
    if (!inserted && it->second.layout == layout) return it->second.mask;
    return mask;  // hash collision with a different layout: serve uncached
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
  }

 private:
  using Key = std::pair<std::uint64_t, MaskKind>;
  struct Entry {
    TokenLayout layout;
    std::shared_ptr<const AttentionMask> mask;
  };

  mutable std::shared_mutex mutex_;
  std::map<Key, Entry> entries_;
};

}  // namespace segcond
