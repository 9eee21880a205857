#pragma once

// Procedural two-modality phantoms: smooth ellipse scenes in modality A and a
// monotone intensity remap of the same scene as modality B.

#include <cstdint>
#include <filesystem>

#include "dagan/imaging.hpp"
#include "dagan/io.hpp"
#include "dagan/rng.hpp"

namespace dagan {

enum class ModalityMap { tanh, identity };

struct PhantomSpec {
  int image_size = 64;
  int n_samples = 0;
  int n_shapes = 6;
  ModalityMap modality_map = ModalityMap::tanh;
  std::uint64_t seed = 0;
  io::Format format = io::Format::raw_f32;
};

// B = tanh(2a) / tanh(2): smooth, odd, maps [-1,1] onto itself.
float modality_forward(float a, ModalityMap map);
float modality_inverse(float b, ModalityMap map);

// Background -1, a body ellipse and n_shapes anti-aliased inner ellipses.
Image2D render_phantom(int size, int n_shapes, Rng& rng);

PairedSample generate_phantom_pair(const PhantomSpec& spec, int index);

// Writes source/ and target/ images plus manifest.json under out_dir.
DatasetManifest generate_phantom_dataset(const PhantomSpec& spec, const std::filesystem::path& out_dir);

}  // namespace dagan
