#include "dagan/networks.hpp"

#include <algorithm>

#include "dagan/error.hpp"

namespace dagan {

using ag::Var;

const char* domain_name(Domain d) { return d == Domain::x ? "x" : "y"; }

std::string GeneratorSpec::plan() const {
  std::string s = "C" + std::to_string(base_width);
  int w = base_width;
  for (int i = 0; i < n_downsampling; ++i) s += "-D" + std::to_string(w *= 2);
  s += "-R" + std::to_string(w) + "x" + std::to_string(n_residual_blocks);
  for (int i = 0; i < n_downsampling; ++i) s += "-U" + std::to_string(w /= 2);
  return s + "-C1";
}

std::string RegressorSpec::plan() const {
  return "D" + std::to_string(base_width) + "-D" + std::to_string(width) + "x" + std::to_string(levels) + "-R" +
         std::to_string(width) + "x" + std::to_string(bottleneck_blocks) + "-U" + std::to_string(width) + "x" +
         std::to_string(levels - 1) + "-U" + std::to_string(base_width);
}

std::string DiscriminatorSpec::plan() const {
  std::string s;
  int w = base_width;
  for (int i = 0; i < n_blocks; ++i) {
    if (i) s += "-";
    s += "C" + std::to_string(std::min(w, max_width));
    w *= 2;
  }
  return s;
}

namespace {

Var input_var(const Image2D& image) { return ag::constant(image.to_tensor()); }

void require_divisible(const Shape& s, int factor, const char* who) {
  if (s.h % factor != 0 || s.w % factor != 0)
    throw ArgumentError(std::string(who) + ": spatial size " + s.str() + " not divisible by " +
                        std::to_string(factor));
}

}  // namespace

// ---------------------------------------------------------------- generator

Generator::Generator(const GeneratorSpec& spec, Rng& rng) : spec_(spec) {
  if (spec.base_width < 1 || spec.n_downsampling < 0 || spec.n_residual_blocks < 0)
    throw ArgumentError("invalid generator spec");
  const nn::ConvOptions same7{1, 0, true, 0.02};
  stem_ = nn::make_conv(params_, "stem", spec.in_channels, spec.base_width, 7, same7, rng);
  int w = spec.base_width;
  for (int i = 0; i < spec.n_downsampling; ++i) {
    down_.push_back(nn::make_conv(params_, "down" + std::to_string(i), w, w * 2, 3, {2, 1, true, 0.02}, rng));
    w *= 2;
  }
  for (int i = 0; i < spec.n_residual_blocks; ++i) {
    const std::string n = "res" + std::to_string(i);
    ResBlock b;
    b.a = nn::make_conv(params_, n + ".a", w, w, 3, {1, 0, true, 0.02}, rng);
    b.b = nn::make_conv(params_, n + ".b", w, w, 3, {1, 0, true, 0.02}, rng);
    blocks_.push_back(b);
  }
  for (int i = 0; i < spec.n_downsampling; ++i) {
    up_.push_back(nn::make_conv_transpose(params_, "up" + std::to_string(i), w, w / 2, 3, {2, 1, true, 0.02}, 1, rng));
    w /= 2;
  }
  head_ = nn::make_conv(params_, "head", w, spec.in_channels, 7, same7, rng);
}

Var Generator::operator()(const Var& x) const {
  if (x.shape().c != spec_.in_channels) throw ArgumentError("generator: channel mismatch " + x.shape().str());
  require_divisible(x.shape(), 1 << spec_.n_downsampling, "generator");
  Var h = ag::relu(ag::instance_norm(stem_(ag::reflect_pad(x, 3))));
  for (const auto& d : down_) h = ag::relu(ag::instance_norm(d(h)));
  for (const auto& b : blocks_) {
    Var r = ag::relu(ag::instance_norm(b.a(ag::reflect_pad(h, 1))));
    r = ag::instance_norm(b.b(ag::reflect_pad(r, 1)));
    h = ag::add(h, r);
  }
  for (const auto& u : up_) h = ag::relu(ag::instance_norm(u(h)));
  return ag::tanh(head_(ag::reflect_pad(h, 3)));
}

Image2D Generator::operator()(const Image2D& image) const {
  ag::NoGradGuard guard;
  Image2D out = Image2D::from_tensor((*this)(input_var(image)).value());
  out.scale = image.scale;
  return out;
}

// ---------------------------------------------------------------- regressor

Regressor::Regressor(const RegressorSpec& spec, Rng& rng) : spec_(spec) {
  if (spec.levels < 1 || spec.base_width < 1 || spec.width < 1) throw ArgumentError("invalid regressor spec");
  const nn::ConvOptions c3{1, 1, true, 0.02};
  auto res = [&](const std::string& n, int ch) {
    ResBlock r;
    r.a = nn::make_conv(params_, n + ".a", ch, ch, 3, c3, rng);
    r.b = nn::make_conv(params_, n + ".b", ch, ch, 3, c3, rng);
    return r;
  };
  std::vector<int> skip_channels;
  for (int i = 0; i <= spec.levels; ++i) {
    const int in = i == 0 ? spec.in_channels : (i == 1 ? spec.base_width : spec.width);
    const int out = i == 0 ? spec.base_width : spec.width;
    const std::string n = "enc" + std::to_string(i);
    encoder_.push_back({nn::make_conv(params_, n + ".conv", in, out, 3, c3, rng), res(n + ".res", out)});
    skip_channels.push_back(out);
  }
  for (int i = 0; i < spec.bottleneck_blocks; ++i) bottleneck_.push_back(res("mid" + std::to_string(i), spec.width));
  for (int j = 0; j < spec.levels; ++j) {
    const int skip = skip_channels[spec.levels - 1 - j];
    const int out = j == spec.levels - 1 ? spec.base_width : spec.width;
    const std::string n = "dec" + std::to_string(j);
    decoder_.push_back({nn::make_conv(params_, n + ".conv", spec.width + skip, out, 3, c3, rng), res(n + ".res", out)});
  }
  refine_ = res("refine", spec.base_width);
  refine_proj_ = nn::make_conv(params_, "refine.proj", spec.base_width, spec.base_width, 1, {1, 0, true, 0.02}, rng);
  out_ = nn::make_conv(params_, "out", spec.base_width, 2, 3, {1, 1, true, 0.0}, rng);
}

Var Regressor::res_forward(const ResBlock& r, const Var& x) const {
  Var h = r.b(ag::leaky_relu(r.a(x), 0.2f));
  return ag::leaky_relu(ag::add(x, h), 0.2f);
}

Var Regressor::stage_forward(const Stage& s, const Var& x) const {
  return res_forward(s.res, ag::leaky_relu(s.conv(x), 0.2f));
}

Var Regressor::operator()(const Var& moving, const Var& fixed) const {
  if (!(moving.shape() == fixed.shape()) || moving.shape().c != 1)
    throw ArgumentError("regressor: moving " + moving.shape().str() + " vs fixed " + fixed.shape().str());
  const int h = moving.shape().h, w = moving.shape().w;
  const int m = 1 << spec_.levels;
  const int ph = (m - h % m) % m, pw = (m - w % m) % m;
  Var x = ag::concat_channels(moving, fixed);
  if (ph || pw) {
    if (ph >= h || pw >= w) throw ArgumentError("regressor: input too small to pad to a multiple of " + std::to_string(m));
    x = ag::reflect_pad(x, ph / 2, ph - ph / 2, pw / 2, pw - pw / 2);
  }
  std::vector<Var> skips;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    if (i > 0) x = ag::max_pool2(x);
    x = stage_forward(encoder_[i], x);
    skips.push_back(x);
  }
  for (const auto& r : bottleneck_) x = res_forward(r, x);
  for (std::size_t j = 0; j < decoder_.size(); ++j) {
    x = ag::upsample_nearest2(x);
    x = stage_forward(decoder_[j], ag::concat_channels(x, skips[skips.size() - 2 - j]));
  }
  x = refine_proj_(res_forward(refine_, x));
  x = out_(x);
  if (ph || pw) x = ag::crop(x, ph / 2, pw / 2, h, w);
  return x;
}

DeformationField2D Regressor::operator()(const Image2D& moving, const Image2D& fixed) const {
  if (!moving.same_shape(fixed)) throw ArgumentError("regressor: moving/fixed shape mismatch");
  ag::NoGradGuard guard;
  return DeformationField2D::from_tensor((*this)(input_var(moving), input_var(fixed)).value());
}

// ------------------------------------------------------------ discriminator

Discriminator::Discriminator(const DiscriminatorSpec& spec, Domain domain, Rng& rng) : spec_(spec), domain_(domain) {
  if (spec.n_blocks < 1 || spec.base_width < 1) throw ArgumentError("invalid discriminator spec");
  int in = spec.in_channels, w = spec.base_width;
  for (int i = 0; i < spec.n_blocks; ++i) {
    const int out = std::min(w, spec.max_width);
    blocks_.push_back(nn::make_conv(params_, "block" + std::to_string(i), in, out, 4, {2, 1, true, 0.02}, rng));
    in = out;
    w *= 2;
  }
  head_ = nn::make_conv(params_, "head", in, 1, 3, {1, 1, true, 0.02}, rng);
}

Var Discriminator::operator()(const Var& x) const {
  const int f = 1 << spec_.n_blocks;
  if (x.shape().c != spec_.in_channels) throw ArgumentError("discriminator: channel mismatch " + x.shape().str());
  if (x.shape().h < f || x.shape().w < f)
    throw ArgumentError("discriminator: input " + x.shape().str() + " smaller than " + std::to_string(f));
  Var h = x;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    h = blocks_[i](h);
    if (i > 0) h = ag::instance_norm(h);
    h = ag::leaky_relu(h, spec_.slope);
  }
  return head_(h);
}

// -------------------------------------------------------------------- model

ModelSpec ModelSpec::full() { return ModelSpec{}; }

ModelSpec ModelSpec::toy() {
  ModelSpec s;
  s.generator.base_width = 16;
  s.generator.n_residual_blocks = 3;
  s.regressor.base_width = 16;
  s.regressor.width = 32;
  s.regressor.levels = 4;
  s.regressor.bottleneck_blocks = 1;
  s.discriminator.base_width = 16;
  s.discriminator.max_width = 128;
  s.discriminator.n_blocks = 3;
  return s;
}

namespace {

Generator make_generator(const ModelSpec& s, std::uint64_t seed, const char* name) {
  Rng rng = make_rng(seed, std::string("init/") + name);
  return Generator(s.generator, rng);
}

std::optional<SymmetricAligner> make_aligner(const ModelSpec& s, std::uint64_t seed, const char* name) {
  if (!s.aligners) return std::nullopt;
  Rng fr = make_rng(seed, std::string("init/") + name + "_fwd");
  Rng br = make_rng(seed, std::string("init/") + name + "_bwd");
  return SymmetricAligner{Regressor(s.regressor, fr), Regressor(s.regressor, br)};
}

Discriminator make_discriminator(const ModelSpec& s, std::uint64_t seed, Domain d) {
  Rng rng = make_rng(seed, std::string("init/D_") + domain_name(d));
  return Discriminator(s.discriminator, d, rng);
}

void append(nn::ParameterSet& dst, const nn::ParameterSet& src, const std::string& prefix) {
  for (const auto& p : src.items()) dst.add(prefix + "." + p.name, p.var);
}

}  // namespace

DaganModel::DaganModel(const ModelSpec& spec, std::uint64_t seed)
    : g(make_generator(spec, seed, "G")),
      f(make_generator(spec, seed, "F")),
      a_y(make_aligner(spec, seed, "R_y")),
      a_x(make_aligner(spec, seed, "R_x")),
      d_y(make_discriminator(spec, seed, Domain::y)),
      d_x(make_discriminator(spec, seed, Domain::x)),
      spec_(spec) {}

std::vector<NamedNetwork> DaganModel::networks() {
  std::vector<NamedNetwork> out{{"G", &g.parameters()}, {"F", &f.parameters()}};
  if (a_y) {
    out.push_back({"R_y_fwd", &a_y->forward.parameters()});
    out.push_back({"R_y_bwd", &a_y->backward.parameters()});
    out.push_back({"R_x_fwd", &a_x->forward.parameters()});
    out.push_back({"R_x_bwd", &a_x->backward.parameters()});
  }
  out.push_back({"D_y", &d_y.parameters()});
  out.push_back({"D_x", &d_x.parameters()});
  return out;
}

nn::ParameterSet DaganModel::generator_side() {
  nn::ParameterSet s;
  for (const auto& n : networks())
    if (n.name[0] != 'D') append(s, *n.params, n.name);
  return s;
}

nn::ParameterSet DaganModel::discriminator_side() {
  nn::ParameterSet s;
  append(s, d_y.parameters(), "D_y");
  append(s, d_x.parameters(), "D_x");
  return s;
}

std::int64_t count_parameters(const nn::ParameterSet& params) { return params.count(); }

std::int64_t model_size_bytes(const nn::ParameterSet& params) {
  return params.count() * static_cast<std::int64_t>(sizeof(float));
}

}  // namespace dagan
