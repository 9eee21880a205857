#include "dagan/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include <json.hpp>

#include "dagan/error.hpp"

namespace dagan::io {
namespace {

using FilePtr = std::unique_ptr<FILE, int (*)(FILE*)>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FILE* f = std::fopen(path.c_str(), mode);
  if (!f) throw LoadError("cannot open '" + path.string() + "'");
  return FilePtr(f, &std::fclose);
}

struct PngImage {
  int height = 0;
  int width = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> pixels;
};

PngImage read_png(const fs::path& path, bool header_only) {
  auto file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError("libpng init failed for '" + path.string() + "'");
  }
  PngImage out;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError("cannot decode PNG '" + path.string() + "'");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  if (!header_only) {
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
      png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    if (png_get_bit_depth(png, info) == 16) png_set_swap(png);
    png_read_update_info(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * out.height);
    rows.resize(out.height);
    for (int r = 0; r < out.height; ++r) rows[r] = buffer.data() + r * rowbytes;
    png_read_image(png, rows.data());
    out.pixels.resize(static_cast<std::size_t>(out.height) * out.width);
    for (int r = 0; r < out.height; ++r) {
      for (int c = 0; c < out.width; ++c) {
        std::uint16_t v = 0;
        if (out.bit_depth == 16) {
          v = reinterpret_cast<const std::uint16_t*>(rows[r])[c];
        } else {
          v = rows[r][c];
        }
        out.pixels[static_cast<std::size_t>(r) * out.width + c] = v;
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png(const fs::path& path, int height, int width, int bit_depth, const void* data) {
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw LoadError("libpng init failed for '" + path.string() + "'");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw LoadError("cannot encode PNG '" + path.string() + "'");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  const std::size_t stride = static_cast<std::size_t>(width) * (bit_depth / 8);
  const auto* base = static_cast<const png_byte*>(data);
  for (int r = 0; r < height; ++r) png_write_row(png, const_cast<png_bytep>(base + r * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

nlohmann::json read_sidecar(const fs::path& raw_path) {
  const fs::path side = sidecar_path(raw_path);
  std::ifstream in(side);
  if (!in) throw LoadError("missing sidecar '" + side.string() + "' for '" + raw_path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("bad sidecar '" + side.string() + "': " + e.what());
  }
}

}  // namespace

Format format_for(const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".png" || ext == ".PNG") return Format::png16;
  if (ext == ".raw" || ext == ".f32" || ext == ".bin") return Format::raw_f32;
  throw ArgumentError("unsupported image extension '" + ext + "' in '" + path.string() + "'");
}

fs::path sidecar_path(const fs::path& raw_path) {
  fs::path p = raw_path;
  p.replace_extension(".json");
  return p;
}

std::pair<int, int> peek_shape(const fs::path& path) {
  if (!fs::exists(path)) throw LoadError("missing file '" + path.string() + "'");
  if (format_for(path) == Format::png16) {
    const PngImage img = read_png(path, true);
    return {img.height, img.width};
  }
  const auto j = read_sidecar(path);
  return {j.at("height").get<int>(), j.at("width").get<int>()};
}

Grid read_grid(const fs::path& path) {
  if (!fs::exists(path)) throw LoadError("missing file '" + path.string() + "'");
  Grid g;
  if (format_for(path) == Format::png16) {
    const PngImage img = read_png(path, false);
    g.height = img.height;
    g.width = img.width;
    g.values.assign(img.pixels.begin(), img.pixels.end());
    return g;
  }
  const auto j = read_sidecar(path);
  g.height = j.at("height").get<int>();
  g.width = j.at("width").get<int>();
  g.planes = j.value("planes", 1);
  if (g.height < 1 || g.width < 1 || g.planes < 1) throw LoadError("bad shape in sidecar of '" + path.string() + "'");
  const std::size_t count = static_cast<std::size_t>(g.height) * g.width * g.planes;
  g.values.resize(count);
  std::ifstream in(path, std::ios::binary);
  in.read(reinterpret_cast<char*>(g.values.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(float))) {
    throw LoadError("short read from '" + path.string() + "'");
  }
  return g;
}

void write_grid(const fs::path& path, const Grid& grid) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const std::size_t count = static_cast<std::size_t>(grid.height) * grid.width * grid.planes;
  if (grid.values.size() != count) throw ArgumentError("write_grid: value count does not match shape");
  if (format_for(path) == Format::png16) {
    if (grid.planes != 1) throw ArgumentError("write_grid: PNG holds a single plane");
    std::vector<std::uint16_t> px(count);
    for (std::size_t i = 0; i < count; ++i) {
      px[i] = static_cast<std::uint16_t>(std::lround(std::clamp(grid.values[i], 0.0f, 65535.0f)));
    }
    write_png(path, grid.height, grid.width, 16, px.data());
    return;
  }
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(grid.values.data()), static_cast<std::streamsize>(count * sizeof(float)));
  }
  nlohmann::json side{{"height", grid.height}, {"width", grid.width}};
  if (grid.planes != 1) side["planes"] = grid.planes;
  std::ofstream(sidecar_path(path)) << side.dump(2) << "\n";
}

void write_png8(const fs::path& path, int height, int width, const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != static_cast<std::size_t>(height) * width) throw ArgumentError("write_png8: size mismatch");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_png(path, height, width, 8, pixels.data());
}

std::vector<std::uint8_t> read_png8(const fs::path& path, int& height, int& width) {
  const PngImage img = read_png(path, false);
  height = img.height;
  width = img.width;
  std::vector<std::uint8_t> out(img.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(img.bit_depth == 16 ? img.pixels[i] >> 8 : img.pixels[i]);
  }
  return out;
}

}  // namespace dagan::io
