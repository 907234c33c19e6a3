/* Copyright 2026 The Auditor Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef AUDITOR_IMAGE_HPP_
#define AUDITOR_IMAGE_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace auditor {

inline constexpr std::uint8_t kIgnoreLabel = 255;

// Interleaved 8-bit RGB, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  const std::uint8_t* Pixel(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// Per-pixel class indices; kIgnoreLabel marks unlabeled cells.
struct ClassMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  std::uint8_t At(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  friend bool operator==(const ClassMap&, const ClassMap&) = default;
};

// Copies [x0,x1) x [y0,y1). Bounds must already be validated.
RgbImage Crop(const RgbImage& image, int x0, int y0, int x1, int y1);

// Content address of raw pixels: sha256 over "rgb8:<w>x<h>:" + pixel bytes.
// Independent of the PNG encoder, so it is stable across libpng versions.
std::string ContentHash(const RgbImage& image);

// PNG or JPEG, detected by signature. Any PNG colour type is converted to
// RGB. Throws kImageLoad.
RgbImage LoadRgbImage(const std::filesystem::path& path);
RgbImage DecodeImage(std::span<const std::uint8_t> bytes);

// Single-channel 8-bit (gray or palette indices, never expanded).
ClassMap LoadClassMap(const std::filesystem::path& path);

std::vector<std::uint8_t> EncodePng(const RgbImage& image);
std::vector<std::uint8_t> EncodeGrayPng(const ClassMap& map);

}  // namespace auditor

#endif  // AUDITOR_IMAGE_HPP_
