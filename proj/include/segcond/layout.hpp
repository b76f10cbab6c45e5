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

// Layout instructions and binary-mask geometry: run-length decoding, inner
// contours, and the merged entity contour map fed to the shape condition.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "segcond/error.hpp"

namespace segcond {

/// Row-major binary mask, one byte per pixel holding 0 or 1.
class BinaryMask {
 public:
  BinaryMask() = default;

  BinaryMask(int width, int height) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw InvalidArgument("mask dimensions must be positive, got " +
                            std::to_string(width) + "x" + std::to_string(height));
    }
    bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
  }

  BinaryMask(int width, int height, std::vector<std::uint8_t> bits) : BinaryMask(width, height) {
    if (bits.size() != bits_.size()) {
      throw LengthMismatch("mask has " + std::to_string(bits.size()) + " bits, expected " +
                           std::to_string(bits_.size()));
    }
    for (auto& b : bits) b = b ? 1 : 0;
    bits_ = std::move(bits);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return bits_.size(); }
  bool empty() const { return bits_.empty(); }

  bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool v = true) { bits_[index(x, y)] = v ? 1 : 0; }

  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set_linear(std::size_t i, bool v = true) { bits_[i] = v ? 1 : 0; }

  std::span<const std::uint8_t> bits() const { return bits_; }

  std::size_t popcount() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }

  bool same_shape(const BinaryMask& o) const { return width_ == o.width_ && height_ == o.height_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct EntitySpec {
  int id = 0;
  std::string caption;
  BinaryMask mask;
};

/// One global caption plus N (caption, mask) pairs; N = 0 is legal.
struct LayoutInstruction {
  int image_width = 0;
  int image_height = 0;
  std::string global_caption;
  std::vector<EntitySpec> entities;
};

/// Throws InvalidArgument / DimensionMismatch when the instruction breaks its invariants.
inline void validate(const LayoutInstruction& instr) {
  if (instr.image_width < 1 || instr.image_height < 1) {
    throw InvalidArgument("image dimensions must be positive");
  }
  int prev_id = 0;
  for (const auto& e : instr.entities) {
    if (e.id <= prev_id) {
      throw InvalidArgument("entity ids must be positive and strictly increasing (id " +
                            std::to_string(e.id) + ")");
    }
    prev_id = e.id;
    if (e.caption.empty()) {
      throw InvalidArgument("entity " + std::to_string(e.id) + " has an empty caption");
    }
    if (e.mask.width() != instr.image_width || e.mask.height() != instr.image_height) {
      throw DimensionMismatch("entity " + std::to_string(e.id) + " mask is " +
                              std::to_string(e.mask.width()) + "x" + std::to_string(e.mask.height()) +
                              ", image is " + std::to_string(instr.image_width) + "x" +
                              std::to_string(instr.image_height));
    }
  }
}

/// Merged per-pixel contour indicator, values in {0,1}.
struct GrayContourMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;

  std::uint8_t at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
  }
  friend bool operator==(const GrayContourMap&, const GrayContourMap&) = default;
};

/// Interleaved RGB8 image whose three channels are identical.
struct ContourImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // size 3 * width * height

  std::uint8_t at(int x, int y, int channel) const {
    return rgb[3 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) +
               static_cast<std::size_t>(channel)];
  }
  friend bool operator==(const ContourImage&, const ContourImage&) = default;
};

/// Decodes an uncompressed row-major run list. Runs alternate 0-runs and
/// 1-runs, starting with a 0-run that may have length zero.
inline BinaryMask decode_rle(std::span<const std::uint64_t> runs, int width, int height) {
  BinaryMask mask(width, height);
  std::uint64_t total = 0;
  for (auto r : runs) total += r;
  if (total != mask.size()) {
    throw LengthMismatch("run lengths sum to " + std::to_string(total) + ", mask has " +
                         std::to_string(mask.size()) + " pixels");
  }
  std::size_t pos = 0;
  bool value = false;
  for (auto r : runs) {
    if (value) {
      for (std::uint64_t k = 0; k < r; ++k) mask.set_linear(pos + k);
    }
    pos += r;
    value = !value;
  }
  return mask;
}

/// Inverse of decode_rle. The first run is always a 0-run (possibly empty)
/// and no other run is empty.
inline std::vector<std::uint64_t> encode_rle(const BinaryMask& mask) {
  std::vector<std::uint64_t> runs;
  bool value = false;
  std::uint64_t run = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != value) {
      runs.push_back(run);
      run = 0;
      value = !value;
    }
    ++run;
  }
  runs.push_back(run);
  return runs;
}

/// Inner boundary under 4-connectivity: a set pixel belongs to the contour
/// when any 4-neighbour is unset or lies outside the image.
inline BinaryMask contour(const BinaryMask& mask) {
  const int w = mask.width();
  const int h = mask.height();
  BinaryMask out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(x, y)) continue;
      const bool interior = x > 0 && x + 1 < w && y > 0 && y + 1 < h && mask.at(x - 1, y) &&
                            mask.at(x + 1, y) && mask.at(x, y - 1) && mask.at(x, y + 1);
      if (!interior) out.set(x, y);
    }
  }
  return out;
}

/// Pointwise maximum of every entity contour; all zero when there are no entities.
inline GrayContourMap merge_contours(const LayoutInstruction& instr) {
  GrayContourMap gray{instr.image_width, instr.image_height,
                      std::vector<std::uint8_t>(static_cast<std::size_t>(instr.image_width) *
                                                    static_cast<std::size_t>(instr.image_height),
                                                0)};
  for (const auto& e : instr.entities) {
    if (e.mask.width() != gray.width || e.mask.height() != gray.height) {
      throw DimensionMismatch("entity " + std::to_string(e.id) + " mask does not match image size");
    }
    const BinaryMask c = contour(e.mask);
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c[i]) gray.values[i] = 1;
    }
  }
  return gray;
}

inline ContourImage to_rgb(const GrayContourMap& gray) {
  ContourImage img{gray.width, gray.height, std::vector<std::uint8_t>(gray.values.size() * 3)};
  for (std::size_t i = 0; i < gray.values.size(); ++i) {
    const std::uint8_t v = gray.values[i] ? 255 : 0;
    img.rgb[3 * i] = v;
    img.rgb[3 * i + 1] = v;
    img.rgb[3 * i + 2] = v;
  }
  return img;
}

/// True iff every set bit of `inner` is set in `outer`. With `strict`, the
/// inner area must also be smaller than the outer area.
inline bool contains(const BinaryMask& outer, const BinaryMask& inner, bool strict = false) {
  if (!outer.same_shape(inner)) {
    throw DimensionMismatch("containment check on masks of different size");
  }
  const auto o = outer.bits();
  const auto in = inner.bits();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] && !o[i]) return false;
  }
  return !strict || inner.popcount() < outer.popcount();
}

inline double area_fraction(const BinaryMask& mask) {
  if (mask.empty()) return 0.0;
  return static_cast<double>(mask.popcount()) / static_cast<double>(mask.size());
}

}  // namespace segcond
