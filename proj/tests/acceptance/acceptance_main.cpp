// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dagan/deform_sim.hpp"
#include "dagan/kernels/reference.hpp"
#include "dagan/losses.hpp"
#include "dagan/metrics.hpp"
#include "dagan/ops.hpp"
#include "dagan/phantom.hpp"
#include "dagan/training.hpp"
#include "dagan/warp.hpp"

using namespace dagan;
using ag::Var;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kWarpIdentityTol = 1e-7;
constexpr double kWarpIdentitySeconds = 1.0;
constexpr double kGradStep = 1e-3;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradSeconds = 30.0;
constexpr double kZeroTol = 1e-7;
constexpr double kOracleTol = 1e-6;
constexpr double kCalibrationSeconds = 120.0;
constexpr double kPsnrTol = 1e-9;
constexpr double kSsimOracleTol = 1e-6;
constexpr double kConvergenceRatio = 0.5;
constexpr double kConvergenceSeconds = 40.0 * 60.0;
constexpr double kParamTarget = 36.5e6;
constexpr double kParamRelTol = 0.15;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::vector<float> uniform_values(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(lo + (hi - lo) * uniform01(rng));
  return v;
}

// ------------------------------------------------------------ oracles
// Written directly from the definitions, independent of the library kernels.

double sample_clamped(const std::vector<double>& im, int h, int w, double y, double x) {
  y = std::clamp(y, 0.0, h - 1.0);
  x = std::clamp(x, 0.0, w - 1.0);
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - y0, fx = x - x0;
  auto at = [&](int r, int c) { return im[static_cast<std::size_t>(r) * w + c]; };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

// field: dy plane then dx plane.
std::vector<double> warp_oracle(const std::vector<double>& im, const std::vector<double>& field, int h, int w) {
  std::vector<double> out(im.size());
  const std::size_t hw = im.size();
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const std::size_t p = static_cast<std::size_t>(r) * w + c;
      out[p] = sample_clamped(im, h, w, r + field[p], c + field[hw + p]);
    }
  return out;
}

double l1_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double softplus(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

std::vector<double> to_double(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// -------------------------------------------------------------- criteria

Outcome warp_identity() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(1, "acceptance/warp_identity");
  double worst = 0;
  for (int k = 0; k < 100; ++k) {
    const int h = 8 + static_cast<int>(uniform01(rng) * 57), w = 8 + static_cast<int>(uniform01(rng) * 57);
    const Image2D im(h, w, uniform_values(static_cast<std::size_t>(h) * w, rng));
    const Image2D out = warp_image(im, DeformationField2D(h, w));
    for (std::size_t i = 0; i < im.size(); ++i)
      worst = std::max(worst, std::abs(static_cast<double>(out.values[i]) - im.values[i]));
  }
  const double secs = seconds_since(t0);
  return {worst <= kWarpIdentityTol && secs < kWarpIdentitySeconds,
          fmt("max abs error %.3g over 100 images, %.3f s", worst, secs)};
}

Outcome warp_gradient() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(2, "acceptance/warp_gradient");
  const int h = 8, w = 8, hw = h * w;
  double worst = 0;
  for (int k = 0; k < 20; ++k) {
    std::vector<double> im(hw), field(2 * hw), g(hw);
    for (double& v : im) v = 2 * uniform01(rng) - 1;
    for (double& v : g) v = 2 * uniform01(rng) - 1;
    // Sample points land at least 0.1 px from any integer row/column.
    for (int p = 0; p < hw; ++p) {
      for (int axis = 0; axis < 2; ++axis) {
        const double whole = std::floor(uniform01(rng) * 7.0) - 3.0;
        field[axis * hw + p] = whole + 0.1 + 0.8 * uniform01(rng);
      }
    }
    std::vector<double> gim(hw, 0.0), gfield(2 * hw, 0.0);
    kernels::reference::warp_backward<double>(im.data(), 1, h, w, field.data(), g.data(), gim.data(), gfield.data());
    auto objective = [&](const std::vector<double>& i2, const std::vector<double>& f2) {
      std::vector<double> out(hw);
      kernels::reference::warp_forward<double>(i2.data(), 1, h, w, f2.data(), out.data());
      double s = 0;
      for (int i = 0; i < hw; ++i) s += out[i] * g[i];
      return s;
    };
    double diff2 = 0, norm2 = 0;
    auto accumulate = [&](double analytic, double numeric) {
      diff2 += (analytic - numeric) * (analytic - numeric);
      norm2 += std::max(analytic * analytic, numeric * numeric);
    };
    for (int i = 0; i < 2 * hw; ++i) {
      auto fp = field, fm = field;
      fp[i] += kGradStep;
      fm[i] -= kGradStep;
      accumulate(gfield[i], (objective(im, fp) - objective(im, fm)) / (2 * kGradStep));
    }
    for (int i = 0; i < hw; ++i) {
      auto ip = im, imn = im;
      ip[i] += kGradStep;
      imn[i] -= kGradStep;
      accumulate(gim[i], (objective(ip, field) - objective(imn, field)) / (2 * kGradStep));
    }
    worst = std::max(worst, std::sqrt(diff2 / std::max(norm2, 1e-300)));
  }
  const double secs = seconds_since(t0);
  return {worst < kGradRelTol && secs < kGradSeconds,
          fmt("worst relative error %.3g over 20 cases (image and field), %.3f s", worst, secs)};
}

Var var_of(const std::vector<float>& v, int c, int h, int w) {
  return ag::constant(Tensor(Shape{1, c, h, w}, v));
}

Var constant_field(int h, int w, float dy, float dx) { return ag::constant(DeformationField2D::constant(h, w, dy, dx).to_tensor()); }

Outcome loss_zero_cases() {
  Rng rng = make_rng(3, "acceptance/zero");
  const int h = 16, w = 16;
  // Smoothness of constant fields.
  double smt = 0;
  for (int k = 0; k < 10; ++k) {
    const float a = static_cast<float>(6 * uniform01(rng) - 3), b = static_cast<float>(6 * uniform01(rng) - 3);
    const Var f = constant_field(h, w, a, b);
    smt = std::max(smt, std::abs(static_cast<double>(smoothness_loss({f, f, f, f}).item())));
  }
  // Inverse-consistency of exact-inverse integer translations on interior support.
  auto interior = [&] {
    std::vector<float> v(h * w, 0.0f);
    for (int r = 4; r < h - 4; ++r)
      for (int c = 4; c < w - 4; ++c) v[r * w + c] = static_cast<float>(2 * uniform01(rng) - 1);
    return var_of(v, 1, h, w);
  };
  const Var x = interior(), y = interior();
  const FieldSet shifts{constant_field(h, w, 2, -3), constant_field(h, w, -2, 3), constant_field(h, w, -1, 2),
                        constant_field(h, w, 1, -2)};
  const double icr = std::abs(ic_reg_loss(x, y, shifts).item());
  // Similarity for a perfectly aligned identity configuration.
  const Var zero = constant_field(h, w, 0, 0);
  const double sim = std::abs(sim_loss(x, y, y, x, {zero, zero, zero, zero}).item());
  const bool ok = smt <= kZeroTol && icr <= kZeroTol && sim <= kZeroTol;
  return {ok, fmt("smt %.3g, ic_reg %.3g, sim %.3g", smt, icr, sim)};
}

Outcome loss_oracles() {
  Rng rng = make_rng(4, "acceptance/oracles");
  const int h = 2, w = 2;
  double worst = 0;
  // Affine stand-ins for the generators so the oracle can evaluate them exactly.
  const ImageMap G = [](const Var& v) { return ag::add_scalar(ag::scale(v, 0.5f), 0.125f); };
  const ImageMap F = [](const Var& v) { return ag::add_scalar(ag::scale(v, -1.5f), 0.25f); };
  auto g_map = [](std::vector<double> v) { for (double& a : v) a = 0.5 * a + 0.125; return v; };
  auto f_map = [](std::vector<double> v) { for (double& a : v) a = -1.5 * a + 0.25; return v; };
  for (int k = 0; k < 50; ++k) {
    auto img = [&] { return uniform_values(4, rng); };
    auto fld = [&] { return uniform_values(8, rng, -1.5, 1.5); };
    const auto xv = img(), yv = img(), gv = img(), fv = img();
    const auto yf = fld(), yb = fld(), xf = fld(), xb = fld();
    const FieldSet fs{var_of(yf, 2, h, w), var_of(yb, 2, h, w), var_of(xf, 2, h, w), var_of(xb, 2, h, w)};
    const Var X = var_of(xv, 1, h, w), Y = var_of(yv, 1, h, w), Gx = var_of(gv, 1, h, w), Fy = var_of(fv, 1, h, w);
    auto d = [](const std::vector<float>& v) { return std::vector<double>(v.begin(), v.end()); };

    const double sim = sim_loss(X, Y, Gx, Fy, fs).item();
    const double sim_ref = l1_oracle(d(yv), warp_oracle(d(gv), d(yf), h, w)) +
                           l1_oracle(d(gv), warp_oracle(d(yv), d(yb), h, w)) +
                           l1_oracle(d(xv), warp_oracle(d(fv), d(xf), h, w)) +
                           l1_oracle(d(fv), warp_oracle(d(xv), d(xb), h, w));
    worst = std::max(worst, std::abs(sim - sim_ref));

    const double joint = ic_joint_loss(X, Y, Gx, Fy, G, F, fs).item();
    const auto a = warp_oracle(f_map(warp_oracle(d(gv), d(yf), h, w)), d(xf), h, w);
    const auto b = warp_oracle(g_map(warp_oracle(d(fv), d(xf), h, w)), d(yf), h, w);
    worst = std::max(worst, std::abs(joint - (l1_oracle(a, d(xv)) + l1_oracle(b, d(yv)))));

    // Critic whose logits are the pixels themselves.
    const Critic c{Domain::y, [](const Var& v) { return v; }};
    auto mean_sp = [](const std::vector<double>& v, double sign) {
      double s = 0;
      for (double z : v) s += softplus(sign * z);
      return s / static_cast<double>(v.size());
    };
    const auto real_w = warp_oracle(d(yv), d(yb), h, w), fake_w = warp_oracle(d(gv), d(yf), h, w);
    const double dloss = adv_da_discriminator_loss(c, Domain::y, Y, Gx, fs.y_bwd, fs.y_fwd).item();
    const double dref = mean_sp(d(yv), -1) + mean_sp(real_w, -1) + mean_sp(d(gv), 1) + mean_sp(fake_w, 1);
    worst = std::max(worst, std::abs(dloss - dref));
    const double gloss = adv_da_generator_loss(c, Domain::y, Gx, fs.y_fwd).item();
    worst = std::max(worst, std::abs(gloss - (mean_sp(d(gv), -1) + mean_sp(fake_w, -1))));
    const double gsat = adv_da_generator_loss(c, Domain::y, Gx, fs.y_fwd, true).item();
    worst = std::max(worst, std::abs(gsat + mean_sp(d(gv), 1) + mean_sp(fake_w, 1)));
    const double cd = conventional_discriminator_loss(c, Domain::y, Y, Gx).item();
    worst = std::max(worst, std::abs(cd - (mean_sp(d(yv), -1) + mean_sp(d(gv), 1))));
    const double cg = conventional_generator_loss(c, Domain::y, Gx).item();
    worst = std::max(worst, std::abs(cg - mean_sp(d(gv), -1)));
  }
  return {worst <= kOracleTol, fmt("worst |loss - oracle| %.3g over 50 random 2x2 fixtures", worst)};
}

Outcome simulator_calibration() {
  const auto t0 = Clock::now();
  bool in_band = true;
  std::ostringstream band;
  for (int level = 1; level <= kMisalignmentLevels; ++level) {
    const ElasticSpec s = level_spec(level);
    Rng rng = make_rng(5, "acceptance/nodes/" + std::to_string(level));
    std::size_t n = 0;
    double lo = 1e9, hi = 0;
    while (n < 10000) {
      const ControlGrid g = sample_control_grid(s, 256, 256, rng);
      for (std::size_t i = 0; i < g.dy.size() && n < 10000; ++i) {
        for (float v : {g.dy[i], g.dx[i]}) {
          if (n == 10000) break;
          lo = std::min(lo, std::abs(static_cast<double>(v)));
          hi = std::max(hi, std::abs(static_cast<double>(v)));
          ++n;
        }
      }
    }
    in_band = in_band && lo >= s.magnitude_lo && hi <= s.magnitude_hi;
  }
  std::vector<double> mae(kMisalignmentLevels, 0.0);
  PhantomSpec ps;
  ps.image_size = 64;
  for (int seed = 0; seed < 20; ++seed) {
    ps.seed = static_cast<std::uint64_t>(seed);
    const PairedSample p = generate_phantom_pair(ps, 0);
    for (int level = 1; level <= kMisalignmentLevels; ++level) {
      // Same per-pair stream as the simulate command, so levels differ only in magnitude.
      Rng rng = make_rng(static_cast<std::uint64_t>(seed), "simulate/" + p.sample_id);
      const MisalignedPair m = apply_misalignment(p, level_spec(level), rng);
      double s = 0;
      for (std::size_t i = 0; i < p.target.size(); ++i) s += std::abs(m.pair.target.values[i] - p.target.values[i]);
      mae[level - 1] += s / static_cast<double>(p.target.size()) / 20.0;
    }
  }
  bool monotone = true;
  for (int i = 1; i < kMisalignmentLevels; ++i) monotone = monotone && mae[i] >= mae[i - 1];
  for (double m : mae) band << fmt(" %.4f", m);
  const double secs = seconds_since(t0);
  return {in_band && monotone && secs < kCalibrationSeconds,
          std::string("nodes in band: ") + (in_band ? "yes" : "no") + "; mean MAE by level:" + band.str() +
              fmt("; %.1f s", secs)};
}

double ssim_direct(const Image2D& a, const Image2D& b, double range) {
  const int k = 11, half = 5;
  std::vector<double> g(k * k);
  double gs = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      gs += g[i * k + j] = std::exp(-((i - half) * (i - half) + (j - half) * (j - half)) / (2 * 1.5 * 1.5));
  for (double& v : g) v /= gs;
  const double c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);
  double sum = 0;
  int n = 0;
  for (int r = 0; r + k <= a.height; ++r)
    for (int c = 0; c + k <= a.width; ++c) {
      double mx = 0, my = 0, vx = 0, vy = 0, cxy = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          mx += g[i * k + j] * a.at(r + i, c + j);
          my += g[i * k + j] * b.at(r + i, c + j);
        }
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const double dx = a.at(r + i, c + j) - mx, dy = b.at(r + i, c + j) - my;
          vx += g[i * k + j] * dx * dx;
          vy += g[i * k + j] * dy * dy;
          cxy += g[i * k + j] * dx * dy;
        }
      sum += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++n;
    }
  return sum / n;
}

Outcome metric_oracles() {
  const Mask full{16, 16, std::vector<std::uint8_t>(256, 1)};
  // Constant error e against range 2: PSNR = 10 log10(4 / e^2).
  double psnr_err = 0;
  for (float e : {0.5f, 0.25f, 0.125f, 0.0625f}) {
    const double got = psnr(Image2D(16, 16, e), Image2D(16, 16, 0.0f), full);
    psnr_err = std::max(psnr_err, std::abs(got - 10.0 * std::log10(4.0 / (double(e) * e))));
  }
  Rng rng = make_rng(6, "acceptance/metrics");
  double ssim_err = 0, self_err = 0;
  for (int k = 0; k < 10; ++k) {
    const Image2D a(16, 16, uniform_values(256, rng));
    Image2D b = a;
    for (float& v : b.values) v = std::clamp(0.8f * v + static_cast<float>(0.3 * uniform01(rng) - 0.15), -1.0f, 1.0f);
    ssim_err = std::max(ssim_err, std::abs(ssim(a, b, full) - ssim_direct(a, b, 2.0)));
    self_err = std::max(self_err, std::abs(ssim(a, a, full) - 1.0));
  }
  // Dyadic values keep ref + offset exact in float.
  Image2D ref(16, 16);
  for (int i = 0; i < 256; ++i) ref.values[i] = static_cast<float>(i % 64) / 64.0f - 0.5f;
  Image2D pred = ref;
  for (float& v : pred.values) v += 0.25f;
  const double range = 63.0 / 64.0;
  const double nmae_err = std::abs(nmae(pred, ref, full) - 0.25 / range);
  const bool ok = psnr_err <= kPsnrTol && self_err <= 1e-12 && ssim_err <= kSsimOracleTol && nmae_err == 0.0;
  std::ostringstream o;
  o << "psnr err " << psnr_err << " dB, |ssim(I,I)-1| " << self_err << ", ssim vs direct " << ssim_err
    << ", nmae err " << nmae_err;
  return {ok, o.str()};
}

std::vector<PairedSample> phantom_pairs(int n, int size, std::uint64_t seed) {
  PhantomSpec ps;
  ps.image_size = size;
  ps.seed = seed;
  std::vector<PairedSample> out;
  for (int i = 0; i < n; ++i) out.push_back(generate_phantom_pair(ps, i));
  return out;
}

TrainConfig toy_config(const std::string& preset) {
  TrainConfig c;
  c.model = ModelSpec::toy();
  c.preset = preset;
  c.ablation = preset_flags(preset);
  c.model.aligners = c.ablation.registration;
  c.seed = 7;
  c.validation_interval = 0;
  c.checkpoint_every_epochs = 0;
  return c;
}

Outcome optimization_hygiene() {
  const auto batch = phantom_pairs(1, 32, 8);
  Trainer t(toy_config("G2"));
  const auto g0 = t.model().generator_side().hash(), d0 = t.model().discriminator_side().hash();
  std::uint64_t g1 = 0, d1 = 0;
  t.train_step(batch, [&] {
    g1 = t.model().generator_side().hash();
    d1 = t.model().discriminator_side().hash();
  });
  const auto g2 = t.model().generator_side().hash(), d2 = t.model().discriminator_side().hash();
  const bool phase1 = g1 == g0 && d1 != d0;
  const bool phase2 = d2 == d1 && g2 != g1;

  // With every field-dependent weight at zero only ic_gen remains, so no
  // gradient may reach the regressors; the full objective must reach them.
  auto regressor_grad = [&](const LossWeights& w) {
    TrainConfig c = toy_config("G2");
    c.loss_weights = w;
    Trainer tr(c);
    const ForwardState s = tr.forward(stack_images(batch, false), stack_images(batch, true));
    tr.model().discriminator_side().set_requires_grad(false);
    const Objective o = generator_objective(
        s, [&](const Var& v) { return tr.model().g(v); }, [&](const Var& v) { return tr.model().f(v); },
        critic(tr.model().d_y), critic(tr.model().d_x), c.objective());
    ag::backward(o.total);
    double n = 0;
    for (auto* a : {&*tr.model().a_y, &*tr.model().a_x})
      n += a->forward.parameters().grad_norm() + a->backward.parameters().grad_norm();
    return n;
  };
  LossWeights only_gen{0, 0, 0, 10, 0, 0};
  const double zeroed = regressor_grad(only_gen);
  const double control = regressor_grad(LossWeights{});
  const bool lambda_ok = zeroed == 0.0 && control > 0.0;
  std::ostringstream o;
  o << "phase 1 G/F/R frozen " << (g1 == g0) << ", D updated " << (d1 != d0) << "; phase 2 D frozen " << (d2 == d1)
    << ", G/F/R updated " << (g2 != g1) << "; regressor grad norm with field terms zeroed " << zeroed
    << " (full objective " << control << ")";
  return {phase1 && phase2 && lambda_ok, o.str()};
}

std::vector<std::string> csv_header(const fs::path& p) {
  std::ifstream in(p);
  std::string line, cell;
  std::getline(in, line);
  std::vector<std::string> out;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

std::size_t csv_rows(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n == 0 ? 0 : n - 1;
}

Outcome ablation_harness(const fs::path& work) {
  const auto pairs = phantom_pairs(4, 32, 9);
  std::ostringstream o;
  bool ok = true;
  for (const std::string& preset : ablation_presets()) {
    TrainConfig c = toy_config(preset);
    c.max_steps = 10;
    const fs::path run = work / ("ablation_" + preset);
    fs::remove_all(run);
    std::string why;
    try {
      train(c, PairSource::from_vector(pairs), PairSource::from_vector({pairs[0]}), run);
      std::vector<std::string> expect{"step", "epoch"};
      for (const auto& n : active_terms(c.objective())) expect.push_back(n);
      expect.push_back("total");
      expect.push_back("d_loss");
      if (csv_header(run / "losses.csv") != expect) why = "unexpected columns";
      else if (csv_rows(run / "losses.csv") != 10) why = "row count";
    } catch (const std::exception& e) {
      why = e.what();
    }
    ok = ok && why.empty();
    o << preset << (why.empty() ? ":ok " : ":" + why + " ");
  }
  return {ok, o.str()};
}

Outcome parameter_accounting() {
  DaganModel m(ModelSpec::full(), 0);
  std::int64_t total = 0;
  std::ostringstream o;
  for (const auto& n : m.networks()) {
    const auto c = count_parameters(*n.params);
    total += c;
    o << n.name << "=" << c << " ";
  }
  const double rel = std::abs(static_cast<double>(total) - kParamTarget) / kParamTarget;
  o << "total=" << total << fmt(" (%.2f%% from 36.5M)", 100 * rel);
  return {rel <= kParamRelTol, o.str()};
}

Outcome toy_convergence(const fs::path& work, int steps) {
  const auto t0 = Clock::now();
  const int n_pairs = 200, n_val = 20;
  PhantomSpec ps;
  ps.image_size = 64;
  ps.seed = 10;
  std::vector<PairedSample> train_pairs, val_pairs;
  for (int i = 0; i < n_pairs; ++i) {
    const PairedSample p = generate_phantom_pair(ps, i);
    Rng rng = make_rng(ps.seed, "simulate/" + p.sample_id);
    MisalignedPair m = apply_misalignment(p, level_spec(3), rng);
    (i < n_pairs - n_val ? train_pairs : val_pairs).push_back(std::move(m.pair));
  }
  auto run = [&](const std::string& preset) {
    TrainConfig c = toy_config(preset);
    c.max_steps = steps;
    c.epochs = 1 + steps / (n_pairs - n_val);
    c.validation_interval = 250;
    const fs::path dir = work / ("convergence_" + preset);
    fs::remove_all(dir);
    return train(c, PairSource::from_vector(train_pairs), PairSource::from_vector(val_pairs), dir);
  };
  const TrainResult g2 = run("G2");
  const TrainResult p2p = run("pix2pix");
  const double secs = seconds_since(t0);
  const bool a = g2.final_validation_nmae < kConvergenceRatio * g2.initial_validation_nmae;
  const bool b = g2.final_validation_nmae < p2p.final_validation_nmae;
  std::ostringstream o;
  o << steps << " steps: G2 NMAE " << g2.initial_validation_nmae << " -> " << g2.final_validation_nmae
    << " (ratio " << g2.final_validation_nmae / g2.initial_validation_nmae << ", need < " << kConvergenceRatio
    << "); pix2pix-like " << p2p.final_validation_nmae << " (G2 lower: " << (b ? "yes" : "no") << ")"
    << fmt("; %.0f s", secs);
  return {a && b && secs < kConvergenceSeconds, o.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  int steps = 2000;
  std::string work = (fs::temp_directory_path() / "dagan_acceptance").string();
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--steps", steps, "Training steps for criterion 8 (gated value is 2000)");
  app.add_option("--work", work, "Scratch directory for training runs");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"warp identity", warp_identity},
      {"warp gradient check", warp_gradient},
      {"loss zero cases", loss_zero_cases},
      {"loss oracles", loss_oracles},
      {"simulator calibration", simulator_calibration},
      {"metric oracles", metric_oracles},
      {"optimization hygiene", optimization_hygiene},
      {"toy end-to-end convergence", [&] { return toy_convergence(work, steps); }},
      {"ablation harness", [&] { return ablation_harness(work); }},
      {"parameter accounting", parameter_accounting},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    if (id == 8 && steps != 2000) r = {false, r.detail + " [non-gated step count]"};
    failed += !r.pass;
    std::cout << (r.pass ? "PASS" : "FAIL") << "  " << id << "  " << criteria[i].first << "  " << r.detail
              << std::endl;
  }
  std::cout << "SKIP  11  full-scale NA-3 run  hours-scale experiment, not gated (see README)" << std::endl;
  return failed == 0 ? 0 : 1;
}
