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

// Dataset curation filters: image size / aspect / aesthetic gating, then
// top-level mask retention, minimum-area and entity-count gating.
//
// All thresholds are inclusive on the accept side. Ratios are compared with
// integer cross-multiplication so boundary cases are exact.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "segcond/error.hpp"
#include "segcond/layout.hpp"

namespace segcond {

struct DatasetRecord {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::optional<double> aesthetic_score;
  std::string global_caption;
  std::vector<EntitySpec> entities;
};

inline LayoutInstruction to_instruction(const DatasetRecord& rec) {
  return {rec.width, rec.height, rec.global_caption, rec.entities};
}

enum class FilterStage { kNone, kSize, kAspect, kAesthetic, kMaskCount };

inline const char* to_string(FilterStage s) {
  switch (s) {
    case FilterStage::kNone: return "none";
    case FilterStage::kSize: return "size";
    case FilterStage::kAspect: return "aspect";
    case FilterStage::kAesthetic: return "aesthetic";
    case FilterStage::kMaskCount: return "mask_count";
  }
  return "unknown";
}

struct FilterReport {
  bool accepted = true;
  FilterStage stage = FilterStage::kNone;
  std::string reason;
  std::vector<int> retained_entity_ids;
};

struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 1;
};

struct FilterConfig {
  int min_side = 1000;
  int max_side = 3000;
  Ratio min_aspect{3, 5};  // 0.6, width / height
  Ratio max_aspect{9, 5};  // 1.8
  double min_aesthetic = 5.0;
  bool reject_missing_score = false;
  Ratio min_area{1, 100};  // fraction of the image
  std::size_t min_entities = 1;
  std::size_t max_entities = 20;
};

inline FilterReport filter_image(const DatasetRecord& rec, const FilterConfig& cfg = {}) {
  const auto reject = [](FilterStage stage, std::string reason) {
    return FilterReport{false, stage, std::move(reason), {}};
  };
  const auto dims = std::to_string(rec.width) + "x" + std::to_string(rec.height);
  if (rec.width < cfg.min_side || rec.width > cfg.max_side || rec.height < cfg.min_side ||
      rec.height > cfg.max_side) {
    return reject(FilterStage::kSize, dims + " outside [" + std::to_string(cfg.min_side) + ", " +
                                          std::to_string(cfg.max_side) + "] per side");
  }
  // min_aspect <= w/h <= max_aspect
  const std::int64_t w = rec.width;
  const std::int64_t h = rec.height;
  if (w * cfg.min_aspect.den < cfg.min_aspect.num * h || w * cfg.max_aspect.den > cfg.max_aspect.num * h) {
    return reject(FilterStage::kAspect, "aspect ratio of " + dims + " outside bounds");
  }
  if (rec.aesthetic_score) {
    if (*rec.aesthetic_score < cfg.min_aesthetic) {
      return reject(FilterStage::kAesthetic,
                    "aesthetic score " + std::to_string(*rec.aesthetic_score) + " below threshold");
    }
  } else if (cfg.reject_missing_score) {
    return reject(FilterStage::kAesthetic, "missing aesthetic score");
  }
  FilterReport ok;
  for (const auto& e : rec.entities) ok.retained_entity_ids.push_back(e.id);
  return ok;
}

namespace detail {

struct MaskStats {
  std::size_t area = 0;
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive bounding box, empty when x1 < x0
};

inline MaskStats mask_stats(const BinaryMask& m) {
  MaskStats s;
  s.x0 = m.width();
  s.y0 = m.height();
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!m.at(x, y)) continue;
      ++s.area;
      s.x0 = std::min(s.x0, x);
      s.x1 = std::max(s.x1, x);
      s.y0 = std::min(s.y0, y);
      s.y1 = std::max(s.y1, y);
    }
  }
  return s;
}

}  // namespace detail

/// Top-level retention (against the original entity set), then the area floor,
/// then the entity-count gate.
inline FilterReport filter_masks(const DatasetRecord& rec, const FilterConfig& cfg = {}) {
  const std::size_t n = rec.entities.size();
  std::vector<detail::MaskStats> stats;
  stats.reserve(n);
  for (const auto& e : rec.entities) {
    if (e.mask.width() != rec.width || e.mask.height() != rec.height) {
      throw DimensionMismatch("record " + rec.image_id + ": entity " + std::to_string(e.id) +
                              " mask does not match image size");
    }
    stats.push_back(detail::mask_stats(e.mask));
  }

  std::vector<bool> keep(n, true);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n && keep[i]; ++j) {
      if (i == j || stats[i].area >= stats[j].area) continue;
      const auto& a = stats[i];
      const auto& b = stats[j];
      if (a.area > 0 && (a.x0 < b.x0 || a.y0 < b.y0 || a.x1 > b.x1 || a.y1 > b.y1)) continue;
      if (contains(rec.entities[j].mask, rec.entities[i].mask, /*strict=*/true)) keep[i] = false;
    }
  }

  const auto total = static_cast<std::int64_t>(rec.width) * rec.height;
  FilterReport report;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    // area / total >= min_area
    if (static_cast<std::int64_t>(stats[i].area) * cfg.min_area.den < cfg.min_area.num * total) continue;
    report.retained_entity_ids.push_back(rec.entities[i].id);
  }

  const std::size_t count = report.retained_entity_ids.size();
  if (count < cfg.min_entities || count > cfg.max_entities) {
    report.accepted = false;
    report.stage = FilterStage::kMaskCount;
    report.reason = std::to_string(count) + " valid masks, need [" + std::to_string(cfg.min_entities) + ", " +
                    std::to_string(cfg.max_entities) + "]";
  }
  return report;
}

struct PipelineSummary {
  std::size_t total = 0;
  std::size_t accepted = 0;
  std::size_t size = 0;
  std::size_t aspect = 0;
  std::size_t aesthetic = 0;
  std::size_t mask_count = 0;

  friend bool operator==(const PipelineSummary&, const PipelineSummary&) = default;
};

struct PipelineResult {
  std::vector<DatasetRecord> accepted;  // input order, retained entities only
  std::vector<FilterReport> reports;    // one per input record
  PipelineSummary summary;
};

/// Runs filter_image then filter_masks on every record. Records may be
/// processed on `threads` workers; results are always in input order.
/// `on_accept` is called for each accepted record, in input order.
inline PipelineResult run_pipeline(const std::vector<DatasetRecord>& manifest, const FilterConfig& cfg = {},
                                   unsigned threads = 1,
                                   const std::function<void(const DatasetRecord&)>& on_accept = {}) {
  std::vector<FilterReport> reports(manifest.size());
  const auto process = [&](std::size_t i) {
    FilterReport r = filter_image(manifest[i], cfg);
    if (r.accepted) r = filter_masks(manifest[i], cfg);
    reports[i] = std::move(r);
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(manifest.size())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < manifest.size(); ++i) process(i);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> workers;
      for (unsigned w = 0; w < threads; ++w) {
        workers.emplace_back([&, w] {
          try {
            for (std::size_t i = w; i < manifest.size(); i += threads) process(i);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  PipelineResult result;
  result.summary.total = manifest.size();
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const FilterReport& r = reports[i];
    switch (r.stage) {
      case FilterStage::kNone: break;
      case FilterStage::kSize: ++result.summary.size; break;
      case FilterStage::kAspect: ++result.summary.aspect; break;
      case FilterStage::kAesthetic: ++result.summary.aesthetic; break;
      case FilterStage::kMaskCount: ++result.summary.mask_count; break;
    }
    if (!r.accepted) continue;
    ++result.summary.accepted;
    DatasetRecord kept = manifest[i];
    std::erase_if(kept.entities, [&](const EntitySpec& e) {
      return std::find(r.retained_entity_ids.begin(), r.retained_entity_ids.end(), e.id) ==
             r.retained_entity_ids.end();
    });
    if (on_accept) on_accept(kept);
    result.accepted.push_back(std::move(kept));
  }
  result.reports = std::move(reports);
  return result;
}

}  // namespace segcond
