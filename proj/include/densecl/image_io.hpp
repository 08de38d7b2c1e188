// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <string>

#include "densecl/image.hpp"

namespace densecl::io {

/// Reads a raster image by extension: .ppm (binary P6) or .png.
Image read_image(const std::string& path);

/// Writes by extension: .ppm or .png; 8-bit RGB.
void write_image(const std::string& path, const Image& img);

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

}  // namespace densecl::io
