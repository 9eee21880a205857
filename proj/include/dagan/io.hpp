#pragma once

// On-disk scalar grids: 16-bit grayscale PNG, or row-major float32 ".raw"
// with a JSON sidecar ("x.raw" -> "x.json") holding {height, width[, planes]}.

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace dagan::io {

namespace fs = std::filesystem;

// One or more planes of height*width values, in file units.
struct Grid {
  int height = 0;
  int width = 0;
  int planes = 1;
  std::vector<float> values;
};

enum class Format { png16, raw_f32 };

Format format_for(const fs::path& path);
fs::path sidecar_path(const fs::path& raw_path);

Grid read_grid(const fs::path& path);
void write_grid(const fs::path& path, const Grid& grid);
// (height, width) without decoding the pixel payload.
std::pair<int, int> peek_shape(const fs::path& path);

// 8-bit grayscale PNG for previews and figure panels.
void write_png8(const fs::path& path, int height, int width, const std::vector<std::uint8_t>& pixels);
std::vector<std::uint8_t> read_png8(const fs::path& path, int& height, int& width);

}  // namespace dagan::io
