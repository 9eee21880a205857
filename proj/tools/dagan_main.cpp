// dagan: command-line front end.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dagan/checkpoint.hpp"
#include "dagan/config.hpp"
#include "dagan/deform_sim.hpp"
#include "dagan/error.hpp"
#include "dagan/io.hpp"
#include "dagan/kernels/dispatch.hpp"
#include "dagan/metrics.hpp"
#include "dagan/phantom.hpp"
#include "dagan/training.hpp"

namespace fs = std::filesystem;
using namespace dagan;
using nlohmann::json;

namespace {

// Relative data paths that do not exist are retried under $DAGAN_DATA_ROOT.
fs::path data_path(const std::string& p) {
  fs::path path(p);
  if (path.empty() || path.is_absolute() || fs::exists(path)) return path;
  if (const char* root = std::getenv("DAGAN_DATA_ROOT")) {
    const fs::path alt = fs::path(root) / path;
    if (fs::exists(alt)) return alt;
  }
  return path;
}

std::vector<Override> parse_overrides(const std::vector<std::string>& sets) {
  std::vector<Override> out;
  for (const auto& s : sets) out.push_back(parse_override(s));
  return out;
}

std::string ext_of(const fs::path& p) { return io::format_for(p) == io::Format::png16 ? ".png" : ".raw"; }

void write_image(const fs::path& path, const Image2D& im) {
  fs::create_directories(path.parent_path());
  io::write_grid(path, io::Grid{im.height, im.width, 1, denormalize(im)});
}

struct Split2 {
  PairSource train;
  PairSource validation;
};

Split2 load_training_data(const ExperimentConfig& cfg) {
  if (cfg.data.manifest.empty()) throw ConfigError("no training data: set data.manifest or --data");
  DatasetManifest m = load_dataset(data_path(cfg.data.manifest));
  if (m.empty()) throw ConfigError("training manifest has no pairs");
  Split2 s;
  if (!cfg.data.validation_manifest.empty()) {
    s.train = PairSource::from_manifest(std::move(m));
    s.validation = PairSource::from_manifest(load_dataset(data_path(cfg.data.validation_manifest)));
    return s;
  }
  const std::size_t hold = std::min<std::size_t>(static_cast<std::size_t>(cfg.data.validation_count), m.size() - 1);
  auto shared = std::make_shared<DatasetManifest>(std::move(m));
  const std::size_t n_train = shared->size() - hold;
  s.train = {n_train, [shared](std::size_t i) { return shared->load_pair(i); }};
  s.validation = {hold, [shared, n_train](std::size_t i) { return shared->load_pair(n_train + i); }};
  return s;
}

std::vector<PairedSample> load_all(const DatasetManifest& m) {
  std::vector<PairedSample> out;
  for (std::size_t i = 0; i < m.size(); ++i) out.push_back(m.load_pair(i));
  return out;
}

// ----------------------------------------------------------------- commands

int cmd_phantom(const fs::path& out, int n, int size, int shapes, std::uint64_t seed, const std::string& map,
                const std::string& format) {
  PhantomSpec spec;
  spec.n_samples = n;
  spec.image_size = size;
  spec.n_shapes = shapes;
  spec.seed = seed;
  if (map == "tanh") spec.modality_map = ModalityMap::tanh;
  else if (map == "identity") spec.modality_map = ModalityMap::identity;
  else throw ConfigError("--map must be tanh or identity");
  if (format == "raw") spec.format = io::Format::raw_f32;
  else if (format == "png") spec.format = io::Format::png16;
  else throw ConfigError("--format must be raw or png");
  const DatasetManifest m = generate_phantom_dataset(spec, out);
  std::cout << "wrote " << m.size() << " phantom pairs to " << (out / "manifest.json").string() << '\n';
  return 0;
}

int cmd_simulate(const std::string& data, int level, std::uint64_t seed, const fs::path& out) {
  if (level < 1 || level > kMisalignmentLevels) throw ConfigError("--level must be in 1..6");
  const DatasetManifest in = load_dataset(data_path(data));
  ElasticSpec spec = level_spec(level);
  spec.seed = seed;
  DatasetManifest m;
  m.modality_names = in.modality_names;
  m.normalization = in.normalization;
  m.split = in.split;
  m.root = out;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const PairedSample p = in.load_pair(i);
    const PairRecord& src = in.pairs[i];
    Rng rng = make_rng(seed, "simulate/" + p.sample_id);
    const MisalignedPair mp = apply_misalignment(p, spec, rng);
    PairRecord r;
    r.id = p.sample_id;
    r.subject = src.subject;
    r.slice = src.slice;
    r.source = fs::path("source") / (r.id + ext_of(src.source));
    r.target = fs::path("target") / (r.id + ext_of(src.target));
    r.aligned_target = fs::path("aligned") / (r.id + ext_of(src.target));
    write_image(out / r.source, mp.pair.source);
    write_image(out / r.target, mp.pair.target);
    write_image(out / *r.aligned_target, *mp.pair.aligned_target);
    fs::create_directories(out / "fields");
    save_field(out / "fields" / (r.id + ".raw"), mp.field);
    m.pairs.push_back(std::move(r));
  }
  save_manifest(m, out / "manifest.json");
  json meta{{"level", level},
            {"level_name", spec.level_name},
            {"magnitude", {spec.magnitude_lo, spec.magnitude_hi}},
            {"control_spacing", {spec.control_spacing[0], spec.control_spacing[1]}},
            {"seed", seed},
            {"source_manifest", data}};
  std::ofstream(out / "simulation.json") << meta.dump(2) << '\n';
  std::cout << "wrote " << m.size() << " misaligned pairs (" << spec.level_name << ") to " << out.string() << '\n';
  return 0;
}

int cmd_train(const std::string& config, const std::string& preset, const std::string& data, bool resume,
              const fs::path& out, const std::vector<std::string>& sets, bool verbose) {
  std::vector<Override> ov = parse_overrides(sets);
  if (!preset.empty()) ov.push_back({"train.preset", preset});
  if (!data.empty()) ov.push_back({"data.manifest", data});
  if (!preset.empty()) {
    // A preset on the command line replaces any ablation switches from the file.
    const AblationFlags f = preset_flags(preset);
    ov.push_back({"train.ic_reg", f.ic_reg ? "true" : "false"});
    ov.push_back({"train.ic_gen", f.ic_gen ? "true" : "false"});
    ov.push_back({"train.ic_joint", f.ic_joint ? "true" : "false"});
    ov.push_back({"train.adv_mode", adv_mode_name(f.adv_mode)});
    ov.push_back({"train.registration", f.registration ? "true" : "false"});
  }
  const ExperimentConfig cfg = load_config(config.empty() ? fs::path() : fs::path(config), ov);
  const Split2 d = load_training_data(cfg);
  TrainOptions opt;
  opt.resolved_config = cfg.resolved();
  opt.resume = resume;
  opt.quiet = !verbose;
  const TrainResult r = train(cfg.train, d.train, d.validation, out, opt);
  std::cout << "trained " << r.steps << " steps; run directory " << out.string() << '\n';
  if (d.validation.size > 0)
    std::cout << "validation NMAE " << r.initial_validation_nmae << " -> " << r.final_validation_nmae << '\n';
  return 0;
}

int cmd_synth(const fs::path& checkpoint, const std::string& data, const std::string& direction, const fs::path& out,
              bool fields) {
  auto model = load_model(checkpoint);
  const DatasetManifest m = load_dataset(data_path(data));
  const std::vector<PairedSample> pairs = load_all(m);
  const Direction dir = parse_direction(direction);
  const Synthesis s = synthesize(*model, pairs, dir, fields);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const fs::path& like = dir == Direction::x_to_y ? m.pairs[i].target : m.pairs[i].source;
    write_image(out / (pairs[i].sample_id + ext_of(like)), s.images[i]);
    if (i < s.fields.size()) {
      fs::create_directories(out / "fields");
      save_field(out / "fields" / (pairs[i].sample_id + ".raw"), s.fields[i]);
    }
  }
  std::cout << "wrote " << s.images.size() << " predictions to " << out.string() << '\n';
  return 0;
}

Image2D read_prediction(const fs::path& dir, const std::string& id, const IntensityScale& scale) {
  for (const char* ext : {".raw", ".png"}) {
    const fs::path p = dir / (id + ext);
    if (!fs::exists(p)) continue;
    const io::Grid g = io::read_grid(p);
    return normalize(g.height, g.width, g.values, scale.lo_phys, scale.hi_phys);
  }
  throw LoadError("no prediction for sample '" + id + "' in " + dir.string());
}

MetricsReport evaluate_dataset(const DatasetManifest& m, const std::function<Image2D(const PairedSample&, std::size_t)>& predict,
                               const MetricsConfig& mc) {
  std::vector<EvalItem> items;
  for (std::size_t i = 0; i < m.size(); ++i) {
    PairedSample p = m.load_pair(i);
    EvalItem it;
    it.id = p.sample_id;
    it.pred = predict(p, i);
    it.ref = p.aligned_target ? *p.aligned_target : p.target;
    it.pred.scale = it.ref.scale;
    it.subject = m.pairs[i].subject;
    it.slice = m.pairs[i].slice;
    items.push_back(std::move(it));
  }
  return evaluate(items, mc);
}

int cmd_eval(const std::string& checkpoint, const std::string& pred, const std::string& data, const fs::path& out,
             const std::string& config, const std::vector<std::string>& sets) {
  if (checkpoint.empty() == pred.empty()) throw ConfigError("eval needs exactly one of --checkpoint or --pred");
  const ExperimentConfig cfg = load_config(config.empty() ? fs::path() : fs::path(config), parse_overrides(sets));
  const DatasetManifest m = load_dataset(data_path(data));
  std::unique_ptr<DaganModel> model;
  if (!checkpoint.empty()) model = load_model(checkpoint);
  const MetricsReport rep = evaluate_dataset(
      m,
      [&](const PairedSample& p, std::size_t) {
        return model ? model->g(p.source) : read_prediction(pred, p.sample_id, p.target.scale);
      },
      cfg.eval);
  fs::create_directories(out);
  write_metrics_csv(rep, out / "metrics.csv");
  write_summary_json(rep, out / "summary.json");
  for (const auto& [name, s] : rep.aggregate) std::cout << name << " " << s.mean << " +- " << s.std << '\n';
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

int cmd_ablate(const std::string& config, const std::string& only, const fs::path& out,
               const std::vector<std::string>& sets) {
  std::vector<std::string> presets = only.empty() ? ablation_presets() : split_list(only);
  for (const auto& p : presets) preset_flags(p);
  const ExperimentConfig base = load_config(config.empty() ? fs::path() : fs::path(config), parse_overrides(sets));
  const Split2 d = load_training_data(base);
  if (d.validation.size == 0) throw ConfigError("ablation needs validation pairs");
  fs::create_directories(out);
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (const auto& name : presets) {
    ExperimentConfig cfg = base;
    cfg.train.preset = name;
    cfg.train.ablation = preset_flags(name);
    cfg.train.model.aligners = cfg.train.ablation.registration;
    TrainOptions opt;
    opt.resolved_config = cfg.resolved();
    const TrainResult r = train(cfg.train, d.train, d.validation, out / name, opt);
    auto model = load_model(*latest_checkpoint(r.run_dir));
    std::vector<EvalItem> items;
    for (std::size_t i = 0; i < d.validation.size; ++i) {
      PairedSample p = d.validation.get(i);
      EvalItem it;
      it.id = p.sample_id;
      it.ref = p.aligned_target ? *p.aligned_target : p.target;
      it.pred = model->g(p.source);
      it.pred.scale = it.ref.scale;
      items.push_back(std::move(it));
    }
    rows.emplace_back(name, evaluate(items, cfg.eval));
    std::cout << name << " done\n";
  }
  const bool volumes = !rows.empty() && rows[0].second.aggregate.count("mae3d");
  const std::vector<std::string> cols = volumes ? std::vector<std::string>{"mae3d", "psnr3d", "ssim3d"}
                                                : std::vector<std::string>{"nmae", "psnr", "ssim"};
  std::ofstream csv(out / "ablation.csv");
  csv.precision(9);
  csv << "preset,ic_reg,ic_gen,ic_joint,adv_mode";
  for (const auto& c : cols) csv << ',' << c << "_mean," << c << "_std";
  csv << '\n';
  for (const auto& [name, rep] : rows) {
    const AblationFlags f = preset_flags(name);
    csv << name << ',' << f.ic_reg << ',' << f.ic_gen << ',' << f.ic_joint << ',' << adv_mode_name(f.adv_mode);
    for (const auto& c : cols) csv << ',' << rep.aggregate.at(c).mean << ',' << rep.aggregate.at(c).std;
    csv << '\n';
  }
  std::cout << "wrote " << (out / "ablation.csv").string() << '\n';
  return 0;
}

Image2D read_image_file(const fs::path& p, double lo, double hi) {
  const io::Grid g = io::read_grid(p);
  return normalize(g.height, g.width, g.values, lo, hi);
}

int cmd_plot(const std::vector<std::string>& preds, const std::string& ref, const fs::path& out, double lo, double hi,
             double error_max) {
  const Image2D r = read_image_file(ref, lo, hi);
  std::vector<Image2D> ps;
  double emax = error_max;
  for (const auto& p : preds) {
    ps.push_back(read_image_file(p, lo, hi));
    if (!ps.back().same_shape(r)) throw ValidationError("plot: " + p + " shape differs from reference");
    if (error_max <= 0)
      for (std::size_t i = 0; i < r.size(); ++i) emax = std::max(emax, static_cast<double>(std::abs(ps.back().values[i] - r.values[i])));
  }
  if (emax <= 0) emax = 1.0;
  const int h = r.height, w = r.width, panels = static_cast<int>(ps.size()) * 2;
  std::vector<std::uint8_t> px(static_cast<std::size_t>(h) * w * panels);
  auto put = [&](int panel, int row, int col, double v01) {
    px[static_cast<std::size_t>(row) * w * panels + static_cast<std::size_t>(panel) * w + col] =
        static_cast<std::uint8_t>(std::lround(std::clamp(v01, 0.0, 1.0) * 255.0));
  };
  for (std::size_t k = 0; k < ps.size(); ++k)
    for (int row = 0; row < h; ++row)
      for (int col = 0; col < w; ++col) {
        const float v = ps[k].at(row, col);
        put(static_cast<int>(2 * k), row, col, (v + 1.0) * 0.5);
        put(static_cast<int>(2 * k + 1), row, col, std::abs(v - r.at(row, col)) / emax);
      }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::write_png8(out, h, w * panels, px);
  std::cout << "wrote " << out.string() << " (" << h << "x" << w * panels << ", error scale " << emax << ")\n";
  return 0;
}

int cmd_sweep(const std::string& config, const std::string& param, const std::string& values, const fs::path& out,
              const std::vector<std::string>& sets) {
  const ExperimentConfig cfg = load_config(config.empty() ? fs::path() : fs::path(config), parse_overrides(sets));
  std::vector<double> vs;
  for (const auto& s : split_list(values)) {
    try {
      vs.push_back(std::stod(s));
    } catch (const std::exception&) {
      throw ConfigError("bad sweep value '" + s + "'");
    }
  }
  LossWeights probe;
  set_loss_weight(probe, param, 1.0f);
  const Split2 d = load_training_data(cfg);
  fs::create_directories(out);
  const auto rows = sensitivity_sweep(cfg.train, param, vs, d.train, d.validation, out);
  for (const auto& r : rows) std::cout << param << "=" << r.value << " nmae " << r.final_validation_nmae << '\n';
  return 0;
}

int cmd_params(const std::string& size) {
  ModelSpec spec;
  if (size == "full") spec = ModelSpec::full();
  else if (size == "toy") spec = ModelSpec::toy();
  else throw ConfigError("--size must be full or toy");
  DaganModel model(spec, 0);
  std::int64_t total = 0;
  for (const auto& n : model.networks()) {
    std::cout << n.name << " " << n.params->count() << '\n';
    total += n.params->count();
  }
  std::cout << "total " << total << " (" << static_cast<double>(total * 4) / (1024.0 * 1024.0) << " MB float32)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deformation-aware image translation with registration"};
  app.require_subcommand(1);
  std::string isa = "auto";
  app.add_option("--isa", isa, "Kernel tier: auto, scalar or avx2")->check(CLI::IsMember({"auto", "scalar", "avx2"}));

  std::vector<std::string> sets;
  std::string config, data, preset, only, param, values, direction = "x2y", checkpoint, pred, ref, map = "tanh",
                                                             format = "raw", size = "full";
  fs::path out;
  int level = 0, n = 0, img = 64, shapes = 6;
  std::uint64_t seed = 0;
  bool resume = false, fields = false, verbose = false;
  double lo = -1.0, hi = 1.0, error_max = 0.0;
  std::vector<std::string> preds;

  auto* ph = app.add_subcommand("phantom", "Generate a two-modality phantom dataset");
  ph->add_option("--out", out, "Output directory")->required();
  ph->add_option("--n", n, "Number of pairs")->required()->check(CLI::NonNegativeNumber);
  ph->add_option("--size", img, "Image side in pixels")->check(CLI::Range(8, 4096));
  ph->add_option("--shapes", shapes, "Inner ellipses per image")->check(CLI::NonNegativeNumber);
  ph->add_option("--seed", seed, "Root seed");
  ph->add_option("--map", map, "Modality map: tanh or identity");
  ph->add_option("--format", format, "raw or png");

  auto* sim = app.add_subcommand("simulate", "Apply graded elastic misalignment to a dataset");
  sim->add_option("--data", data, "Input manifest")->required();
  sim->add_option("--level", level, "Misalignment level 1..6")->required();
  sim->add_option("--seed", seed, "Root seed");
  sim->add_option("--out", out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", config, "INI configuration file");
  tr->add_option("--preset", preset, "full, A..F, G1, G2, pix2pix or reggan");
  tr->add_option("--data", data, "Training manifest (overrides data.manifest)");
  tr->add_flag("--resume", resume, "Continue from the latest checkpoint in --out");
  tr->add_option("--out", out, "Run directory")->required();
  tr->add_option("--set", sets, "section.key=value override");
  tr->add_flag("--verbose", verbose, "Progress on stderr");

  auto* sy = app.add_subcommand("synth", "Translate images with a trained generator");
  sy->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  sy->add_option("--data", data, "Manifest")->required();
  sy->add_option("--direction", direction, "x2y or y2x");
  sy->add_option("--out", out, "Output directory")->required();
  sy->add_flag("--fields", fields, "Also write regressor fields against the paired image");

  auto* ev = app.add_subcommand("eval", "Compute metrics against aligned references");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint directory");
  ev->add_option("--pred", pred, "Directory of predictions named <id>.raw|.png");
  ev->add_option("--data", data, "Manifest")->required();
  ev->add_option("--out", out, "Output directory")->required();
  ev->add_option("--config", config, "INI configuration file ([eval] section)");
  ev->add_option("--set", sets, "section.key=value override");

  auto* ab = app.add_subcommand("ablate", "Train and compare ablation presets");
  ab->add_option("--config", config, "INI configuration file");
  ab->add_option("--only", only, "Comma-separated subset of presets");
  ab->add_option("--out", out, "Output directory")->required();
  ab->add_option("--set", sets, "section.key=value override");

  auto* pl = app.add_subcommand("plot", "Prediction and absolute-error panels");
  pl->add_option("--pred", preds, "Prediction image(s)")->required();
  pl->add_option("--ref", ref, "Reference image")->required();
  pl->add_option("--out", out, "Output PNG")->required();
  pl->add_option("--lo", lo, "Physical value mapped to -1");
  pl->add_option("--hi", hi, "Physical value mapped to +1");
  pl->add_option("--error-max", error_max, "Error colour-scale maximum (default: max over panels)");

  auto* sw = app.add_subcommand("sweep", "Loss-weight sensitivity sweep");
  sw->add_option("--config", config, "INI configuration file");
  sw->add_option("--param", param, "Loss weight name, e.g. lambda_reg")->required();
  sw->add_option("--values", values, "Comma-separated values")->required();
  sw->add_option("--out", out, "Output directory")->required();
  sw->add_option("--set", sets, "section.key=value override");

  auto* pc = app.add_subcommand("params", "Report parameter counts");
  pc->add_option("--size", size, "full or toy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (isa != "auto") kernels::select(isa == "scalar" ? kernels::Isa::scalar : kernels::Isa::avx2);
    if (*ph) return cmd_phantom(out, n, img, shapes, seed, map, format);
    if (*sim) return cmd_simulate(data, level, seed, out);
    if (*tr) return cmd_train(config, preset, data, resume, out, sets, verbose);
    if (*sy) return cmd_synth(checkpoint, data, direction, out, fields);
    if (*ev) return cmd_eval(checkpoint, pred, data, out, config, sets);
    if (*ab) return cmd_ablate(config, only, out, sets);
    if (*pl) return cmd_plot(preds, ref, out, lo, hi, error_max);
    if (*sw) return cmd_sweep(config, param, values, out, sets);
    if (*pc) return cmd_params(size);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
