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

#include "auditor/image.hpp"

#include <gtest/gtest.h>
#include <stdio.h>  // jpeglib.h needs FILE
#include <jpeglib.h>

#include <cstdlib>
#include <vector>

#include "auditor/fs_util.hpp"
#include "auditor/hashing.hpp"
#include "test_util.hpp"

namespace auditor {
namespace {

using testing::CodeOf;
using testing::MakeImage;
using testing::MakeMap;

TEST(ImageTest, PngRoundTrip) {
  const RgbImage img = MakeImage(13, 7, 9);
  EXPECT_EQ(DecodeImage(EncodePng(img)), img);
}

std::vector<std::uint8_t> SolidJpeg(int w, int h, std::uint8_t r, std::uint8_t g,
                                    std::uint8_t b) {
  jpeg_compress_struct cinfo;
  jpeg_error_mgr err;
  cinfo.err = jpeg_std_error(&err);
  jpeg_create_compress(&cinfo);
  unsigned char* out = nullptr;
  unsigned long size = 0;
  jpeg_mem_dest(&cinfo, &out, &size);
  cinfo.image_width = w;
  cinfo.image_height = h;
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, 100, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 3);
  for (int x = 0; x < w; ++x) {
    row[3 * x] = r;
    row[3 * x + 1] = g;
    row[3 * x + 2] = b;
  }
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW p = row.data();
    jpeg_write_scanlines(&cinfo, &p, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<std::uint8_t> bytes(out, out + size);
  jpeg_destroy_compress(&cinfo);
  std::free(out);
  return bytes;
}

TEST(ImageTest, DecodesJpeg) {
  const auto bytes = SolidJpeg(24, 16, 200, 40, 90);
  const RgbImage img = DecodeImage(bytes);
  ASSERT_EQ(img.width, 24);
  ASSERT_EQ(img.height, 16);
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    EXPECT_NEAR(img.pixels[i], 200, 2);
    EXPECT_NEAR(img.pixels[i + 1], 40, 2);
    EXPECT_NEAR(img.pixels[i + 2], 90, 2);
  }
}

TEST(ImageTest, TruncatedJpegIsImageLoad) {
  auto bytes = SolidJpeg(16, 16, 1, 2, 3);
  bytes.resize(bytes.size() / 3);
  EXPECT_EQ(CodeOf([&] { DecodeImage(bytes); }), ErrorCode::kImageLoad);
}

TEST(ImageTest, GrayMapRoundTrip) {
  testing::TempDir dir;
  ClassMap m = MakeMap(9, 5, 3);
  m.data[7] = kIgnoreLabel;
  WriteFileAtomic(dir.path() / "m.png", EncodeGrayPng(m));
  EXPECT_EQ(LoadClassMap(dir.path() / "m.png"), m);
}

TEST(ImageTest, CropCopiesWindow) {
  const RgbImage img = MakeImage(10, 8, 1);
  const RgbImage c = Crop(img, 2, 3, 6, 8);
  ASSERT_EQ(c.width, 4);
  ASSERT_EQ(c.height, 5);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 4; ++x) {
      for (int k = 0; k < 3; ++k) {
        EXPECT_EQ(c.Pixel(x, y)[k], img.Pixel(x + 2, y + 3)[k]);
      }
    }
  }
}

TEST(ImageTest, ContentHashCoversShape) {
  RgbImage a = MakeImage(2, 3, 0);
  RgbImage b = a;
  b.width = 3;
  b.height = 2;
  EXPECT_NE(ContentHash(a), ContentHash(b));
  std::string expected = "rgb8:2x3:";
  expected.append(a.pixels.begin(), a.pixels.end());
  EXPECT_EQ(ContentHash(a), Sha256Hex(expected));
}

TEST(ImageTest, GarbageIsImageLoad) {
  const std::vector<std::uint8_t> junk = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  EXPECT_EQ(CodeOf([&] { DecodeImage(junk); }), ErrorCode::kImageLoad);
  EXPECT_EQ(CodeOf([] { LoadRgbImage("/nonexistent/x.png"); }), ErrorCode::kImageLoad);
}

TEST(ImageTest, TruncatedPngIsImageLoad) {
  auto bytes = EncodePng(MakeImage(32, 32, 4));
  bytes.resize(bytes.size() / 2);
  EXPECT_EQ(CodeOf([&] { DecodeImage(bytes); }), ErrorCode::kImageLoad);
}

}  // namespace
}  // namespace auditor
