#include "dagan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "dagan/error.hpp"

namespace dagan {

namespace {

void check_shapes(const Image2D& pred, const Image2D& ref, const Mask& mask) {
  if (!pred.same_shape(ref)) throw ArgumentError("metric: prediction and reference shapes differ");
  if (mask.height != ref.height || mask.width != ref.width) throw ArgumentError("metric: mask shape differs");
}

double masked_mse(const float* a, const float* b, const std::uint8_t* on, std::size_t n, std::size_t& count) {
  double s = 0.0;
  count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!on[i]) continue;
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
    ++count;
  }
  if (count == 0) throw ValidationError("metric: empty mask");
  return s / static_cast<double>(count);
}

double psnr_from_mse(double mse, double range) {
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(range * range / mse);
}

std::vector<double> gaussian(int size, double sigma) {
  std::vector<double> g(size);
  double s = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - (size - 1) / 2.0;
    s += g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  for (double& v : g) v /= s;
  return g;
}

// Valid-mode separable filtering of a D x H x W array.
std::vector<double> filter3(const std::vector<double>& in, int d, int h, int w, const std::vector<double>& gz,
                            const std::vector<double>& gyx, int& od, int& oh, int& ow) {
  const int kz = static_cast<int>(gz.size()), k = static_cast<int>(gyx.size());
  ow = w - k + 1;
  oh = h - k + 1;
  od = d - kz + 1;
  std::vector<double> a(static_cast<std::size_t>(d) * h * ow);
  for (int z = 0; z < d; ++z)
    for (int r = 0; r < h; ++r) {
      const double* src = &in[(static_cast<std::size_t>(z) * h + r) * w];
      double* dst = &a[(static_cast<std::size_t>(z) * h + r) * ow];
      for (int c = 0; c < ow; ++c) {
        double s = 0.0;
        for (int t = 0; t < k; ++t) s += gyx[t] * src[c + t];
        dst[c] = s;
      }
    }
  std::vector<double> b(static_cast<std::size_t>(d) * oh * ow);
  for (int z = 0; z < d; ++z)
    for (int r = 0; r < oh; ++r)
      for (int c = 0; c < ow; ++c) {
        double s = 0.0;
        for (int t = 0; t < k; ++t) s += gyx[t] * a[(static_cast<std::size_t>(z) * h + r + t) * ow + c];
        b[(static_cast<std::size_t>(z) * oh + r) * ow + c] = s;
      }
  std::vector<double> out(static_cast<std::size_t>(od) * oh * ow);
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  for (int z = 0; z < od; ++z)
    for (std::size_t i = 0; i < plane; ++i) {
      double s = 0.0;
      for (int t = 0; t < kz; ++t) s += gz[t] * b[(z + t) * plane + i];
      out[z * plane + i] = s;
    }
  return out;
}

double ssim_core(const float* x, const float* y, const std::uint8_t* on, int d, int h, int w, double range,
                 const SsimParams& p) {
  if (h < p.window || w < p.window)
    throw ArgumentError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) + " smaller than window");
  int kz = std::min(p.window, d);
  if (kz % 2 == 0) --kz;
  const std::vector<double> g = gaussian(p.window, p.sigma);
  const std::vector<double> gz = kz == 1 ? std::vector<double>{1.0} : gaussian(kz, p.sigma);
  const std::size_t n = static_cast<std::size_t>(d) * h * w;
  std::vector<double> maps[5];
  for (auto& m : maps) m.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = x[i], b = y[i];
    maps[0][i] = a;
    maps[1][i] = b;
    maps[2][i] = a * a;
    maps[3][i] = b * b;
    maps[4][i] = a * b;
  }
  int od = 0, oh = 0, ow = 0;
  std::vector<double> f[5];
  for (int i = 0; i < 5; ++i) f[i] = filter3(maps[i], d, h, w, gz, g, od, oh, ow);
  const double c1 = (p.k1 * range) * (p.k1 * range), c2 = (p.k2 * range) * (p.k2 * range);
  const int hz = kz / 2, hw = p.window / 2;
  double sum = 0.0;
  std::size_t count = 0;
  for (int z = 0; z < od; ++z)
    for (int r = 0; r < oh; ++r)
      for (int c = 0; c < ow; ++c) {
        if (!on[(static_cast<std::size_t>(z + hz) * h + r + hw) * w + c + hw]) continue;
        const std::size_t i = (static_cast<std::size_t>(z) * oh + r) * ow + c;
        const double mx = f[0][i], my = f[1][i];
        const double vx = f[2][i] - mx * mx, vy = f[3][i] - my * my, cxy = f[4][i] - mx * my;
        sum += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
  if (count == 0) throw ValidationError("ssim: no window centre inside the mask");
  return sum / static_cast<double>(count);
}

void check_volumes(const Volume& a, const Volume& b, const VolumeMask& m) {
  if (a.depth != b.depth || a.height != b.height || a.width != b.width || m.depth != a.depth ||
      m.height != a.height || m.width != a.width)
    throw ArgumentError("volume metric: shape mismatch");
}

}  // namespace

double nmae(const Image2D& pred, const Image2D& ref, const Mask& mask) {
  check_shapes(pred, ref, mask);
  double s = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t n = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!mask.on[i]) continue;
    s += std::abs(static_cast<double>(pred.values[i]) - ref.values[i]);
    lo = std::min(lo, static_cast<double>(ref.values[i]));
    hi = std::max(hi, static_cast<double>(ref.values[i]));
    ++n;
  }
  if (n == 0) throw ValidationError("nmae: empty mask");
  if (hi <= lo) throw ValidationError("nmae: reference is constant on the mask");
  return s / static_cast<double>(n) / (hi - lo);
}

double psnr(const Image2D& pred, const Image2D& ref, const Mask& mask, double data_range) {
  check_shapes(pred, ref, mask);
  std::size_t n = 0;
  return psnr_from_mse(masked_mse(pred.values.data(), ref.values.data(), mask.on.data(), ref.size(), n), data_range);
}

double ssim(const Image2D& pred, const Image2D& ref, const Mask& mask, double data_range, const SsimParams& params) {
  check_shapes(pred, ref, mask);
  return ssim_core(pred.values.data(), ref.values.data(), mask.on.data(), 1, ref.height, ref.width, data_range, params);
}

Volume Volume::stack(const std::vector<Image2D>& slices) {
  Volume v;
  if (slices.empty()) throw ArgumentError("volume: no slices");
  v.depth = static_cast<int>(slices.size());
  v.height = slices[0].height;
  v.width = slices[0].width;
  for (const Image2D& s : slices) {
    if (!s.same_shape(slices[0])) throw ValidationError("volume: slice shapes differ");
    for (float x : s.values) v.values.push_back(static_cast<float>(s.scale.to_physical(x)));
  }
  return v;
}

VolumeMask VolumeMask::stack(const std::vector<Mask>& slices) {
  VolumeMask v;
  if (slices.empty()) throw ArgumentError("volume mask: no slices");
  v.depth = static_cast<int>(slices.size());
  v.height = slices[0].height;
  v.width = slices[0].width;
  for (const Mask& s : slices) {
    if (s.height != v.height || s.width != v.width) throw ValidationError("volume mask: slice shapes differ");
    v.on.insert(v.on.end(), s.on.begin(), s.on.end());
  }
  return v;
}

std::size_t VolumeMask::count() const { return static_cast<std::size_t>(std::count(on.begin(), on.end(), 1)); }

double mae3d(const Volume& pred, const Volume& ref, const VolumeMask& mask) {
  check_volumes(pred, ref, mask);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < ref.values.size(); ++i) {
    if (!mask.on[i]) continue;
    s += std::abs(static_cast<double>(pred.values[i]) - ref.values[i]);
    ++n;
  }
  if (n == 0) throw ValidationError("mae3d: empty mask");
  return s / static_cast<double>(n);
}

double psnr3d(const Volume& pred, const Volume& ref, const VolumeMask& mask, double data_range) {
  check_volumes(pred, ref, mask);
  std::size_t n = 0;
  return psnr_from_mse(masked_mse(pred.values.data(), ref.values.data(), mask.on.data(), ref.values.size(), n),
                       data_range);
}

double ssim3d(const Volume& pred, const Volume& ref, const VolumeMask& mask, double data_range,
              const SsimParams& params) {
  check_volumes(pred, ref, mask);
  return ssim_core(pred.values.data(), ref.values.data(), mask.on.data(), ref.depth, ref.height, ref.width,
                   data_range, params);
}

double dice(const Mask& a, const Mask& b) {
  if (a.height != b.height || a.width != b.width) throw ArgumentError("dice: mask shapes differ");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.on.size(); ++i) {
    na += a.on[i] != 0;
    nb += b.on[i] != 0;
    both += a.on[i] && b.on[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

// ------------------------------------------------------------------ reports

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  s.n = values.size();
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

MetricsReport evaluate(const std::vector<EvalItem>& items, const MetricsConfig& cfg) {
  MetricsReport rep;
  rep.config = cfg;
  std::vector<double> nm, ps, ss;
  std::map<std::string, std::vector<const EvalItem*>> groups;
  for (const EvalItem& it : items) {
    const Mask m = foreground_mask(it.ref, cfg.background_level, cfg.background_tolerance);
    SampleMetrics s;
    s.id = it.id;
    s.foreground = m.count();
    s.nmae = nmae(it.pred, it.ref, m);
    s.psnr = psnr(it.pred, it.ref, m, cfg.data_range);
    s.ssim = ssim(it.pred, it.ref, m, cfg.data_range);
    nm.push_back(s.nmae);
    ps.push_back(std::min(s.psnr, kPsnrCap));
    ss.push_back(s.ssim);
    rep.samples.push_back(s);
    if (it.subject) groups[*it.subject].push_back(&it);
  }
  rep.aggregate["nmae"] = summarize(nm);
  rep.aggregate["psnr"] = summarize(ps);
  rep.aggregate["ssim"] = summarize(ss);
  if (groups.empty()) return rep;

  std::vector<double> m3, p3, s3;
  for (auto& [subject, slices] : groups) {
    std::stable_sort(slices.begin(), slices.end(),
                     [](const EvalItem* a, const EvalItem* b) { return a->slice.value_or(0) < b->slice.value_or(0); });
    std::vector<Image2D> pred, ref;
    std::vector<Mask> masks;
    for (const EvalItem* it : slices) {
      Image2D p = it->pred;
      p.scale = it->ref.scale;
      pred.push_back(std::move(p));
      ref.push_back(it->ref);
      masks.push_back(foreground_mask(it->ref, cfg.background_level, cfg.background_tolerance));
    }
    const Volume pv = Volume::stack(pred), rv = Volume::stack(ref);
    const VolumeMask mv = VolumeMask::stack(masks);
    const IntensityScale& sc = slices.front()->ref.scale;
    const double range = cfg.data_range * 0.5 * (sc.hi_phys - sc.lo_phys);
    VolumeMetrics v{subject, static_cast<int>(slices.size()), mae3d(pv, rv, mv), psnr3d(pv, rv, mv, range),
                    ssim3d(pv, rv, mv, range)};
    m3.push_back(v.mae3d);
    p3.push_back(std::min(v.psnr3d, kPsnrCap));
    s3.push_back(v.ssim3d);
    rep.volumes.push_back(v);
  }
  rep.aggregate["mae3d"] = summarize(m3);
  rep.aggregate["psnr3d"] = summarize(p3);
  rep.aggregate["ssim3d"] = summarize(s3);
  return rep;
}

void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path.string());
  out.precision(10);
  out << "sample_id,nmae,psnr,ssim,foreground_pixels\n";
  for (const auto& s : report.samples)
    out << s.id << ',' << s.nmae << ',' << std::min(s.psnr, kPsnrCap) << ',' << s.ssim << ',' << s.foreground << '\n';
}

void write_summary_json(const MetricsReport& report, const std::filesystem::path& path) {
  nlohmann::json j;
  for (const auto& [name, s] : report.aggregate) j["metrics"][name] = {{"mean", s.mean}, {"std", s.std}, {"n", s.n}};
  j["config"] = {{"data_range", report.config.data_range},
                 {"background_level", report.config.background_level},
                 {"background_tolerance", report.config.background_tolerance},
                 {"psnr_cap_db", kPsnrCap},
                 {"std_ddof", 1}};
  for (const auto& v : report.volumes)
    j["volumes"].push_back({{"subject", v.subject}, {"slices", v.slices}, {"mae3d", v.mae3d},
                            {"psnr3d", std::min(v.psnr3d, kPsnrCap)}, {"ssim3d", v.ssim3d}});
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

PairedTTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw ArgumentError("paired t-test needs two equal-length samples, n >= 2");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const MetricSummary s = summarize(d);
  PairedTTest r;
  r.mean_diff = s.mean;
  r.df = static_cast<int>(d.size()) - 1;
  if (s.std == 0.0) {
    r.t = s.mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), s.mean);
    r.p_value = s.mean == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = s.mean / (s.std / std::sqrt(static_cast<double>(d.size())));
  boost::math::students_t dist(r.df);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

}  // namespace dagan
