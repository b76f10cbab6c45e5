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

// Minimal lossless PNG reading/writing for masks, label maps and contour
// images. Grayscale 8/16-bit and RGB8 only.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace segcond::png {

struct Gray16Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> pixels;  // row-major
};

/// Writes an 8-bit grayscale PNG from row-major pixels.
void write_gray8(const std::string& path, int width, int height, std::span<const std::uint8_t> pixels);

void write_rgb8(const std::string& path, int width, int height, std::span<const std::uint8_t> rgb);

void write_gray16(const std::string& path, int width, int height, std::span<const std::uint16_t> pixels);

/// Reads a grayscale PNG of any bit depth; samples are returned unscaled.
Gray16Image read_gray(const std::string& path);

}  // namespace segcond::png
