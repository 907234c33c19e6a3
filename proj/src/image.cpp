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

#include <png.h>
#include <stdio.h>  // jpeglib.h needs FILE
#include <jpeglib.h>

#include <csetjmp>
#include <cstring>
#include <string_view>

#include "auditor/error.hpp"
#include "auditor/fs_util.hpp"
#include "auditor/hashing.hpp"

namespace auditor {
namespace {

bool IsPng(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

bool IsJpeg(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 &&
         bytes[2] == 0xFF;
}

RgbImage DecodePngRgb(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    Fail(ErrorCode::kImageLoad, std::string("png: ") + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    Fail(ErrorCode::kImageLoad, std::string("png: ") + img.message);
  }
  return out;
}

struct JpegErrorMgr {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void JpegErrorExit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

RgbImage DecodeJpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = JpegErrorExit;
  RgbImage out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    Fail(ErrorCode::kImageLoad, std::string("jpeg: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = static_cast<int>(cinfo.output_width);
  out.height = static_cast<int>(cinfo.output_height);
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() +
                   static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

struct MemReader {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void ReadFromMemory(png_structp png, png_bytep out, png_size_t len) {
  auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
  if (r->offset + len > r->bytes.size()) png_error(png, "truncated PNG");
  std::memcpy(out, r->bytes.data() + r->offset, len);
  r->offset += len;
}

ClassMap DecodeIndexPng(std::span<const std::uint8_t> bytes) {
  if (!IsPng(bytes)) Fail(ErrorCode::kImageLoad, "class map is not a PNG");
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    Fail(ErrorCode::kInternal, "libpng allocation failed");
  }
  MemReader reader{bytes, 0};
  ClassMap out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    Fail(ErrorCode::kImageLoad, "corrupt class map PNG");
  }
  png_set_read_fn(png, &reader, ReadFromMemory);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if ((color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_PALETTE) ||
      depth > 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    Fail(ErrorCode::kImageLoad,
         "class map must be single-channel 8-bit (gray or palette)");
  }
  if (depth < 8) png_set_packing(png);
  png_read_update_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.data.resize(static_cast<std::size_t>(out.width) * out.height);
  rows.resize(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        out.data.data() + static_cast<std::size_t>(y) * out.width;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

std::vector<std::uint8_t> WritePng(const std::uint8_t* pixels, int width,
                                   int height, png_uint_32 format) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels, 0,
                                 nullptr)) {
    Fail(ErrorCode::kInternal, std::string("png encode: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, pixels, 0,
                                 nullptr)) {
    Fail(ErrorCode::kInternal, std::string("png encode: ") + img.message);
  }
  out.resize(size);
  return out;
}

}  // namespace

RgbImage Crop(const RgbImage& image, int x0, int y0, int x1, int y1) {
  RgbImage out;
  out.width = x1 - x0;
  out.height = y1 - y0;
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  const std::size_t row_bytes = static_cast<std::size_t>(out.width) * 3;
  for (int y = y0; y < y1; ++y) {
    std::memcpy(out.pixels.data() + static_cast<std::size_t>(y - y0) * row_bytes,
                image.Pixel(x0, y), row_bytes);
  }
  return out;
}

std::string ContentHash(const RgbImage& image) {
  Sha256Stream hash;
  hash.Update("rgb8:" + std::to_string(image.width) + "x" +
              std::to_string(image.height) + ":");
  hash.Update(image.pixels);
  return hash.FinishHex();
}

RgbImage DecodeImage(std::span<const std::uint8_t> bytes) {
  if (IsPng(bytes)) return DecodePngRgb(bytes);
  if (IsJpeg(bytes)) return DecodeJpeg(bytes);
  Fail(ErrorCode::kImageLoad, "unrecognized image format");
}

RgbImage LoadRgbImage(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = ReadBinaryFile(path);
  } catch (const Error&) {
    Fail(ErrorCode::kImageLoad, "cannot read " + path.string());
  }
  try {
    return DecodeImage(bytes);
  } catch (const Error& e) {
    Rethrow(e, path.string());
  }
}

ClassMap LoadClassMap(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = ReadBinaryFile(path);
  } catch (const Error&) {
    Fail(ErrorCode::kImageLoad, "cannot read " + path.string());
  }
  try {
    return DecodeIndexPng(bytes);
  } catch (const Error& e) {
    Rethrow(e, path.string());
  }
}

std::vector<std::uint8_t> EncodePng(const RgbImage& image) {
  return WritePng(image.pixels.data(), image.width, image.height,
                  PNG_FORMAT_RGB);
}

std::vector<std::uint8_t> EncodeGrayPng(const ClassMap& map) {
  return WritePng(map.data.data(), map.width, map.height, PNG_FORMAT_GRAY);
}

}  // namespace auditor
