// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#include "densecl/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include "densecl/common.hpp"

namespace densecl::io {

namespace {

bool ends_with(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

uint8_t to_byte(float v) {
  float x = v * 255.0f + 0.5f;
  if (x < 0.0f) x = 0.0f;
  if (x > 255.0f) x = 255.0f;
  return static_cast<uint8_t>(x);
}

int next_token(std::istream& in) {
  // skips whitespace and '#' comments, returns next int
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      continue;
    }
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    break;
  }
  int v = -1;
  in >> v;
  return in.good() ? v : -1;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  DCL_CHECK(in.good(), IoError, "cannot open '" + path + "'");
  char p, six;
  in.get(p);
  in.get(six);
  DCL_CHECK(p == 'P' && six == '6', DataError, "'" + path + "': not a binary P6 PPM");
  int w = next_token(in), h = next_token(in), maxval = next_token(in);
  DCL_CHECK(w > 0 && h > 0, DataError, "'" + path + "': bad PPM dimensions");
  DCL_CHECK(maxval == 255, DataError, "'" + path + "': only maxval 255 PPM supported");
  in.get();  // single whitespace after header
  std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  DCL_CHECK(in.gcount() == static_cast<std::streamsize>(raw.size()), DataError,
            "'" + path + "': truncated PPM pixel data");
  Image img(h, w);
  for (size_t i = 0; i < raw.size(); ++i) img.data()[i] = static_cast<float>(raw[i]) / 255.0f;
  return img;
}

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  DCL_CHECK(out.good(), IoError, "cannot open '" + path + "' for writing");
  out << "P6\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<uint8_t> raw(img.size());
  for (size_t i = 0; i < raw.size(); ++i) raw[i] = to_byte(img.data()[i]);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  DCL_CHECK(out.good(), IoError, "write to '" + path + "' failed");
}

Image read_png(const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  DCL_CHECK(fp != nullptr, IoError, "cannot open '" + path + "'");

  png_byte header[8];
  DCL_CHECK(std::fread(header, 1, 8, fp.get()) == 8 && !png_sig_cmp(header, 0, 8), DataError,
            "'" + path + "': not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  DCL_CHECK(png, IoError, "libpng allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng allocation failed");
  }
  std::vector<png_bytep> row_ptrs;
  std::vector<uint8_t> raw;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("'" + path + "': corrupt PNG data");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  png_byte color = png_get_color_type(png, info);
  png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  raw.resize(static_cast<size_t>(w) * h * 3);
  row_ptrs.resize(h);
  for (png_uint_32 y = 0; y < h; ++y)
    row_ptrs[y] = raw.data() + static_cast<size_t>(y) * w * 3;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(static_cast<int>(h), static_cast<int>(w));
  for (size_t i = 0; i < raw.size(); ++i) img.data()[i] = static_cast<float>(raw[i]) / 255.0f;
  return img;
}

void write_png(const std::string& path, const Image& img) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  DCL_CHECK(fp != nullptr, IoError, "cannot open '" + path + "' for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  DCL_CHECK(png, IoError, "libpng allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng allocation failed");
  }
  std::vector<uint8_t> raw(img.size());
  std::vector<png_bytep> row_ptrs(static_cast<size_t>(img.height()));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("write to '" + path + "' failed");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()),
               static_cast<png_uint_32>(img.height()), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  for (size_t i = 0; i < raw.size(); ++i) raw[i] = to_byte(img.data()[i]);
  for (int y = 0; y < img.height(); ++y)
    row_ptrs[static_cast<size_t>(y)] = raw.data() + static_cast<size_t>(y) * img.width() * 3;
  png_set_rows(png, info, row_ptrs.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_image(const std::string& path) {
  if (ends_with(path, ".ppm")) return read_ppm(path);
  if (ends_with(path, ".png")) return read_png(path);
  throw DataError("'" + path + "': unsupported image extension (expected .ppm or .png)");
}

void write_image(const std::string& path, const Image& img) {
  if (ends_with(path, ".ppm")) {
    write_ppm(path, img);
  } else if (ends_with(path, ".png")) {
    write_png(path, img);
  } else {
    throw DataError("'" + path + "': unsupported image extension (expected .ppm or .png)");
  }
}

}  // namespace densecl::io
