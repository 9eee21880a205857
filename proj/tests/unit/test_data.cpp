#include <doctest.h>

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "dagan/error.hpp"
#include "dagan/imaging.hpp"
#include "dagan/io.hpp"
#include "dagan/phantom.hpp"
#include "helpers.hpp"

using namespace dagan;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_pair_manifest(const fs::path& dir, const nlohmann::json& pairs) {
  nlohmann::json j{{"modalities", {"t1", "t2"}},
                   {"normalization", {{"t1", {0.0, 1000.0}}, {"t2", {0.0, 1000.0}}}},
                   {"pairs", pairs}};
  std::ofstream(dir / "manifest.json") << j.dump();
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("normalisation maps the physical range onto [-1, 1]") {
  const Image2D im = normalize(1, 4, {0.0f, 500.0f, 1000.0f, 2000.0f}, 0.0, 1000.0);
  CHECK(im.values == std::vector<float>{-1.0f, 0.0f, 1.0f, 1.0f});
  const std::vector<float> back = denormalize(im);
  CHECK(back[1] == doctest::Approx(500.0));
  CHECK_THROWS_AS(normalize(1, 1, {0.0f}, 5.0, 5.0), ArgumentError);
}

TEST_CASE("foreground mask is taken from the reference") {
  Image2D ref(2, 2, std::vector<float>{-1.0f, -0.9995f, 0.0f, 1.0f});
  const Mask m = foreground_mask(ref);
  CHECK(m.on == std::vector<std::uint8_t>{0, 0, 1, 1});
  CHECK(m.count() == 2);
}

TEST_CASE("epoch order is a reproducible permutation") {
  const auto a = epoch_order(50, 9, 3), b = epoch_order(50, 9, 3), c = epoch_order(50, 9, 4);
  CHECK(a == b);
  CHECK(a != c);
  auto s = a;
  std::sort(s.begin(), s.end());
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i] == i);
}

TEST_CASE("grid round trips through png16 and raw") {
  const fs::path dir = testing::scratch_dir("grid");
  io::Grid g{3, 5, 1, {}};
  for (int i = 0; i < 15; ++i) g.values.push_back(static_cast<float>(i * 1000));
  io::write_grid(dir / "a.png", g);
  CHECK(io::read_grid(dir / "a.png").values == g.values);
  CHECK(io::peek_shape(dir / "a.png") == std::pair{3, 5});
  g.values[3] = -7.25f;
  io::write_grid(dir / "a.raw", g);
  CHECK(io::read_grid(dir / "a.raw").values == g.values);
  CHECK(io::peek_shape(dir / "a.raw") == std::pair{3, 5});
  CHECK(fs::exists(dir / "a.json"));
  CHECK_THROWS(io::read_grid(dir / "missing.png"));
}

TEST_CASE("dataset manifest loading and validation") {
  const fs::path dir = testing::scratch_dir("manifest");
  io::write_grid(dir / "s.raw", io::Grid{8, 8, 1, std::vector<float>(64, 250.0f)});
  io::write_grid(dir / "t.raw", io::Grid{8, 8, 1, std::vector<float>(64, 750.0f)});
  io::write_grid(dir / "small.raw", io::Grid{8, 4, 1, std::vector<float>(32, 0.0f)});

  SUBCASE("a valid pair loads normalised") {
    write_pair_manifest(dir, {{{"id", "p0"}, {"source", "s.raw"}, {"target", "t.raw"}}});
    const DatasetManifest m = load_dataset(dir / "manifest.json");
    REQUIRE(m.size() == 1);
    const PairedSample p = m.load_pair(0);
    CHECK(p.source.values[0] == doctest::Approx(-0.5));
    CHECK(p.target.values[0] == doctest::Approx(0.5));
    CHECK_FALSE(p.aligned_target.has_value());
  }
  SUBCASE("shape mismatch names the sample") {
    write_pair_manifest(dir, {{{"id", "bad_one"}, {"source", "s.raw"}, {"target", "small.raw"}}});
    try {
      load_dataset(dir / "manifest.json");
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("bad_one") != std::string::npos);
    }
  }
  SUBCASE("missing file names the path") {
    write_pair_manifest(dir, {{{"id", "p0"}, {"source", "s.raw"}, {"target", "nope.raw"}}});
    try {
      load_dataset(dir / "manifest.json");
      FAIL("expected a load error");
    } catch (const std::exception& e) {
      CHECK(std::string(e.what()).find("nope.raw") != std::string::npos);
    }
  }
  SUBCASE("duplicate ids are rejected") {
    write_pair_manifest(dir, {{{"id", "p0"}, {"source", "s.raw"}, {"target", "t.raw"}},
                              {{"id", "p0"}, {"source", "s.raw"}, {"target", "t.raw"}}});
    CHECK_THROWS_AS(load_dataset(dir / "manifest.json"), ValidationError);
  }
}

TEST_CASE("phantom modality map is invertible and odd") {
  for (double v = -1.0; v <= 1.0; v += 0.01) {
    const float b = modality_forward(static_cast<float>(v), ModalityMap::tanh);
    CHECK(std::abs(modality_inverse(b, ModalityMap::tanh) - v) < 1e-4);
  }
  CHECK(modality_forward(-1.0f, ModalityMap::tanh) == -1.0f);
  CHECK(modality_forward(1.0f, ModalityMap::tanh) == 1.0f);
  CHECK(modality_forward(0.3f, ModalityMap::identity) == 0.3f);
}

TEST_CASE("phantoms have contrast and identity maps copy exactly") {
  PhantomSpec spec;
  spec.seed = 4;
  for (int i = 0; i < 10; ++i) {
    const PairedSample p = generate_phantom_pair(spec, i);
    const auto [lo, hi] = std::minmax_element(p.source.values.begin(), p.source.values.end());
    CHECK(*hi - *lo >= 1.0f);
    CHECK(*lo >= -1.0f);
    CHECK(*hi <= 1.0f);
  }
  spec.modality_map = ModalityMap::identity;
  const PairedSample p = generate_phantom_pair(spec, 0);
  CHECK(p.source.values == p.target.values);
}

TEST_CASE("phantom datasets are byte-reproducible") {
  PhantomSpec spec;
  spec.n_samples = 3;
  spec.seed = 12;
  const fs::path a = testing::scratch_dir("phantom_a"), b = testing::scratch_dir("phantom_b");
  const DatasetManifest ma = generate_phantom_dataset(spec, a);
  generate_phantom_dataset(spec, b);
  CHECK(ma.size() == 3);
  for (const auto& r : ma.pairs) {
    CHECK(slurp(a / r.source) == slurp(b / r.source));
    CHECK(slurp(a / r.target) == slurp(b / r.target));
  }
  const DatasetManifest back = load_dataset(a / "manifest.json");
  CHECK(back.size() == 3);
  spec.n_samples = 0;
  CHECK(generate_phantom_dataset(spec, testing::scratch_dir("phantom_empty")).empty());
}

}
