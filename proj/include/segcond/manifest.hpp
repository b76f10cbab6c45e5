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

// Manifest files.
//
// A manifest is a JSON array of records (a single record object, or an
// object with a "records" array, is also accepted):
//
//   {
//     "image_id": "sa_1",
//     "width": 1500, "height": 1000,
//     "aesthetic_score": 5.6,            // optional
//     "global_caption": "a street at dusk",
//     "entities": [
//       {"id": 1, "caption": "a red car", "mask": {"rle": [0, 3, 12, ...]}},
//       {"id": 2, "caption": "a tree",    "mask": {"label_png": "labels/sa_1.png"}}
//     ]
//   }
//
// "rle" is an uncompressed row-major run list starting with a 0-run.
// "label_png" names a 16-bit (or 8-bit) grayscale PNG whose pixel value is
// the entity id, 0 = background; relative paths resolve against the manifest
// directory. Entities are sorted by id on load; ids must be unique and > 0.

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "segcond/dataset_pipeline.hpp"
#include "segcond/error.hpp"
#include "segcond/layout.hpp"
#include "segcond/png_io.hpp"

namespace segcond {

using Json = nlohmann::ordered_json;

namespace detail {

inline std::string record_label(std::size_t index, const Json& j) {
  std::string label = "record " + std::to_string(index);
  if (j.is_object() && j.contains("image_id") && j["image_id"].is_string()) {
    label += " (" + j["image_id"].get<std::string>() + ")";
  }
  return label;
}

inline int require_positive_int(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number_integer() || j[key].get<long long>() < 1 ||
      j[key].get<long long>() > std::numeric_limits<int>::max()) {
    throw ManifestParseError(where + ": '" + key + "' must be a positive integer");
  }
  return j[key].get<int>();
}

class LabelPngCache {
 public:
  explicit LabelPngCache(std::filesystem::path base) : base_(std::move(base)) {}

  const png::Gray16Image& get(const std::string& rel) {
    std::filesystem::path p(rel);
    if (p.is_relative()) p = base_ / p;
    const std::string key = p.lexically_normal().string();
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, png::read_gray(key)).first;
    return it->second;
  }

 private:
  std::filesystem::path base_;
  std::map<std::string, png::Gray16Image> cache_;
};

inline BinaryMask parse_mask(const Json& m, int id, int width, int height, LabelPngCache& pngs,
                             const std::string& where) {
  if (!m.is_object()) throw ManifestParseError(where + ": mask must be an object");
  if (m.contains("rle")) {
    const Json& runs = m["rle"];
    if (!runs.is_array()) throw ManifestParseError(where + ": 'rle' must be an array");
    std::vector<std::uint64_t> v;
    v.reserve(runs.size());
    for (const auto& r : runs) {
      if (!r.is_number_integer() || r.get<long long>() < 0) {
        throw ManifestParseError(where + ": 'rle' entries must be nonnegative integers");
      }
      v.push_back(r.get<std::uint64_t>());
    }
    try {
      return decode_rle(v, width, height);
    } catch (const LengthMismatch& e) {
      throw ManifestParseError(where + ": " + e.what());
    }
  }
  if (m.contains("label_png")) {
    if (!m["label_png"].is_string()) throw ManifestParseError(where + ": 'label_png' must be a string");
    const png::Gray16Image* img = nullptr;
    try {
      img = &pngs.get(m["label_png"].get<std::string>());
    } catch (const ImageIoError& e) {
      throw ManifestParseError(where + ": " + e.what());
    }
    if (img->width != width || img->height != height) {
      throw ManifestParseError(where + ": label map is " + std::to_string(img->width) + "x" +
                               std::to_string(img->height) + ", record is " + std::to_string(width) + "x" +
                               std::to_string(height));
    }
    BinaryMask mask(width, height);
    for (std::size_t i = 0; i < img->pixels.size(); ++i) {
      if (img->pixels[i] == id) mask.set_linear(i);
    }
    return mask;
  }
  throw ManifestParseError(where + ": mask needs 'rle' or 'label_png'");
}

}  // namespace detail

inline DatasetRecord parse_record(const Json& j, std::size_t index, const std::filesystem::path& base_dir) {
  const std::string where = detail::record_label(index, j);
  if (!j.is_object()) throw ManifestParseError(where + ": expected an object");
  DatasetRecord rec;
  if (!j.contains("image_id") || !j["image_id"].is_string()) {
    throw ManifestParseError(where + ": 'image_id' must be a string");
  }
  rec.image_id = j["image_id"].get<std::string>();
  rec.width = detail::require_positive_int(j, "width", where);
  rec.height = detail::require_positive_int(j, "height", where);
  if (j.contains("aesthetic_score") && !j["aesthetic_score"].is_null()) {
    if (!j["aesthetic_score"].is_number()) throw ManifestParseError(where + ": 'aesthetic_score' must be a number");
    rec.aesthetic_score = j["aesthetic_score"].get<double>();
  }
  if (j.contains("global_caption")) {
    if (!j["global_caption"].is_string()) throw ManifestParseError(where + ": 'global_caption' must be a string");
    rec.global_caption = j["global_caption"].get<std::string>();
  }
  if (j.contains("entities")) {
    const Json& ents = j["entities"];
    if (!ents.is_array()) throw ManifestParseError(where + ": 'entities' must be an array");
    detail::LabelPngCache pngs(base_dir);
    for (std::size_t k = 0; k < ents.size(); ++k) {
      const Json& e = ents[k];
      const std::string ewhere = where + " entity " + std::to_string(k);
      if (!e.is_object()) throw ManifestParseError(ewhere + ": expected an object");
      EntitySpec spec;
      spec.id = detail::require_positive_int(e, "id", ewhere);
      if (!e.contains("caption") || !e["caption"].is_string() || e["caption"].get<std::string>().empty()) {
        throw ManifestParseError(ewhere + ": 'caption' must be a nonempty string");
      }
      spec.caption = e["caption"].get<std::string>();
      if (!e.contains("mask")) throw ManifestParseError(ewhere + ": missing 'mask'");
      spec.mask = detail::parse_mask(e["mask"], spec.id, rec.width, rec.height, pngs, ewhere);
      rec.entities.push_back(std::move(spec));
    }
  }
  std::sort(rec.entities.begin(), rec.entities.end(),
            [](const EntitySpec& a, const EntitySpec& b) { return a.id < b.id; });
  for (std::size_t k = 1; k < rec.entities.size(); ++k) {
    if (rec.entities[k].id == rec.entities[k - 1].id) {
      throw ManifestParseError(where + ": duplicate entity id " + std::to_string(rec.entities[k].id));
    }
  }
  return rec;
}

inline std::vector<DatasetRecord> parse_manifest(const Json& doc, const std::filesystem::path& base_dir = ".") {
  const Json* list = &doc;
  Json wrapped;
  if (doc.is_object() && doc.contains("records")) {
    list = &doc["records"];
  } else if (doc.is_object()) {
    wrapped = Json::array({doc});
    list = &wrapped;
  }
  if (!list->is_array()) throw ManifestParseError("manifest must be an array of records");
  std::vector<DatasetRecord> records;
  records.reserve(list->size());
  for (std::size_t i = 0; i < list->size(); ++i) records.push_back(parse_record((*list)[i], i, base_dir));
  return records;
}

inline std::vector<DatasetRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestParseError("cannot open manifest " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ManifestParseError(path.string() + ": " + e.what());
  }
  return parse_manifest(doc, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

/// Serializes a record with every mask as RLE.
inline Json record_to_json(const DatasetRecord& rec) {
  Json j;
  j["image_id"] = rec.image_id;
  j["width"] = rec.width;
  j["height"] = rec.height;
  if (rec.aesthetic_score) j["aesthetic_score"] = *rec.aesthetic_score;
  j["global_caption"] = rec.global_caption;
  Json ents = Json::array();
  for (const auto& e : rec.entities) {
    Json je;
    je["id"] = e.id;
    je["caption"] = e.caption;
    je["mask"] = Json{{"rle", encode_rle(e.mask)}};
    ents.push_back(std::move(je));
  }
  j["entities"] = std::move(ents);
  return j;
}

inline Json manifest_to_json(const std::vector<DatasetRecord>& records) {
  Json arr = Json::array();
  for (const auto& r : records) arr.push_back(record_to_json(r));
  return arr;
}

}  // namespace segcond
