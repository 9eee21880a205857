#include "dagan/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>

#include <json.hpp>

#include "dagan/checkpoint.hpp"
#include "dagan/error.hpp"
#include "dagan/io.hpp"
#include "dagan/metrics.hpp"
#include "dagan/ops.hpp"

namespace dagan {

namespace fs = std::filesystem;
using ag::Var;
using nlohmann::json;

AblationFlags preset_flags(const std::string& name) {
  AblationFlags f;
  auto ic = [&f](bool r, bool g, bool j) {
    f.ic_reg = r;
    f.ic_gen = g;
    f.ic_joint = j;
  };
  if (name == "A") ic(true, false, false);
  else if (name == "B") ic(false, true, false);
  else if (name == "C") ic(false, false, true);
  else if (name == "D") ic(true, true, false);
  else if (name == "E") ic(true, false, true);
  else if (name == "F") ic(false, true, true);
  else if (name == "G1") f.adv_mode = AdvMode::conventional;
  else if (name == "G2" || name == "full") {
  } else if (name == "pix2pix") {
    ic(false, false, false);
    f.adv_mode = AdvMode::conventional;
    f.registration = false;
  } else if (name == "reggan") {
    ic(false, false, false);
    f.adv_mode = AdvMode::conventional;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return f;
}

const std::vector<std::string>& ablation_presets() {
  static const std::vector<std::string> names{"A", "B", "C", "D", "E", "F", "G1", "G2"};
  return names;
}

ObjectiveConfig TrainConfig::objective() const {
  ObjectiveConfig o;
  o.weights = loss_weights;
  o.ic = {ablation.ic_reg, ablation.ic_gen, ablation.ic_joint};
  o.adv_mode = ablation.adv_mode;
  o.registration = ablation.registration;
  o.saturating = saturating_generator_loss;
  o.adv_to_regressors = adv_to_regressors;
  return o;
}

AdamConfig TrainConfig::generator_optimizer() const {
  return {learning_rate, beta1, beta2, 1e-8f, weight_decay};
}

AdamConfig TrainConfig::discriminator_optimizer() const { return generator_optimizer(); }

void TrainConfig::validate() const {
  loss_weights.validate();
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("Adam betas must lie in [0, 1)");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (validation_interval < 0 || checkpoint_every_epochs < 0 || sample_interval < 0 || validation_samples < 0)
    throw ConfigError("intervals must be >= 0");
  if (ablation.registration != model.aligners)
    throw ConfigError("registration flag and model aligners disagree");
}

PairSource PairSource::from_vector(std::vector<PairedSample> pairs) {
  auto shared = std::make_shared<std::vector<PairedSample>>(std::move(pairs));
  return {shared->size(), [shared](std::size_t i) { return shared->at(i); }};
}

PairSource PairSource::from_manifest(DatasetManifest manifest) {
  auto shared = std::make_shared<DatasetManifest>(std::move(manifest));
  return {shared->size(), [shared](std::size_t i) { return shared->load_pair(i); }};
}

// ------------------------------------------------------------------ trainer

Trainer::Trainer(const TrainConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  model_ = std::make_unique<DaganModel>(cfg_.model, cfg_.seed);
  gen_opt_ = std::make_unique<Adam>(model_->generator_side(), cfg_.generator_optimizer());
  disc_opt_ = std::make_unique<Adam>(model_->discriminator_side(), cfg_.discriminator_optimizer());
}

std::vector<NamedOptimizer> Trainer::optimizers() {
  return {{"generator", gen_opt_.get()}, {"discriminator", disc_opt_.get()}};
}

Var stack_images(const std::vector<PairedSample>& batch, bool target) {
  if (batch.empty()) throw ArgumentError("empty batch");
  const Image2D& first = target ? batch[0].target : batch[0].source;
  Tensor t({static_cast<int>(batch.size()), 1, first.height, first.width});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Image2D& im = target ? batch[i].target : batch[i].source;
    if (!im.same_shape(first)) throw ValidationError("batch images differ in shape: " + batch[i].sample_id);
    std::copy(im.values.begin(), im.values.end(), t.sample(static_cast<int>(i)));
  }
  return ag::constant(std::move(t));
}

ForwardState Trainer::forward(const Var& x, const Var& y) {
  ForwardState s;
  s.x = x;
  s.y = y;
  s.g_out = model_->g(x);
  s.f_out = model_->f(y);
  if (model_->has_aligners()) {
    s.fields.y_fwd = model_->a_y->forward(s.g_out, y);
    s.fields.y_bwd = model_->a_y->backward(y, s.g_out);
    s.fields.x_fwd = model_->a_x->forward(s.f_out, x);
    s.fields.x_bwd = model_->a_x->backward(x, s.f_out);
  }
  return s;
}

namespace {

ForwardState detached(const ForwardState& s) {
  ForwardState d;
  d.x = s.x;
  d.y = s.y;
  d.g_out = ag::detach(s.g_out);
  d.f_out = ag::detach(s.f_out);
  if (s.fields.defined())
    d.fields = {ag::detach(s.fields.y_fwd), ag::detach(s.fields.y_bwd), ag::detach(s.fields.x_fwd),
                ag::detach(s.fields.x_bwd)};
  return d;
}

bool finite_report(const LossReport& r) {
  if (!std::isfinite(r.total)) return false;
  for (const auto& t : r.terms)
    if (!std::isfinite(t.value)) return false;
  return true;
}

json report_json(const LossReport& r) {
  json j;
  for (const auto& t : r.terms) j[t.name] = std::isfinite(t.value) ? json(t.value) : json(std::to_string(t.value));
  j["total"] = std::isfinite(r.total) ? json(r.total) : json(std::to_string(r.total));
  return j;
}

json image_stats(const std::vector<PairedSample>& batch) {
  json j = json::array();
  for (const auto& p : batch) {
    auto stats = [](const Image2D& im) {
      float lo = im.values.empty() ? 0.0f : im.values[0], hi = lo;
      std::size_t bad = 0;
      for (float v : im.values) {
        if (!std::isfinite(v)) { ++bad; continue; }
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      return json{{"min", lo}, {"max", hi}, {"non_finite", bad}, {"height", im.height}, {"width", im.width}};
    };
    j.push_back({{"sample_id", p.sample_id}, {"source", stats(p.source)}, {"target", stats(p.target)}});
  }
  return j;
}

}  // namespace

LossReport Trainer::train_step(const std::vector<PairedSample>& batch, const std::function<void()>& between_phases) {
  const Var x = stack_images(batch, false);
  const Var y = stack_images(batch, true);
  if (!(x.shape() == y.shape())) throw ValidationError("source/target shapes differ in batch");
  const ObjectiveConfig ocfg = cfg_.objective();
  nn::ParameterSet& dparams = disc_opt_->parameters();

  // G, F and R outputs do not depend on D, so one recorded forward serves both
  // phases; the D update sees detached copies.
  gen_opt_->zero_grad();
  disc_opt_->zero_grad();
  const ForwardState s = forward(x, y);

  const ForwardState sd = detached(s);
  Objective dobj = discriminator_objective(sd, critic(model_->d_y), critic(model_->d_x), ocfg);
  d_report_ = dobj.report;
  auto abort = [&](const LossReport& r, const char* phase) {
    std::error_code ec;
    fs::create_directories(dump_dir, ec);
    const fs::path p = dump_dir / ("nonfinite_step_" + std::to_string(step_) + ".json");
    std::ofstream out(p);
    out << json{{"step", step_}, {"phase", phase}, {"terms", report_json(r)}, {"inputs", image_stats(batch)}}.dump(2);
    throw TrainingError(std::string("non-finite ") + phase + " loss at step " + std::to_string(step_) +
                        "; diagnostics in " + p.string());
  };
  if (!finite_report(dobj.report)) abort(dobj.report, "discriminator");
  if (!dobj.report.terms.empty()) {
    ag::backward(dobj.total);
    disc_opt_->step();
  }
  if (between_phases) between_phases();

  dparams.set_requires_grad(false);
  LossReport report;
  try {
    Objective gobj =
        generator_objective(s, [this](const Var& v) { return model_->g(v); },
                            [this](const Var& v) { return model_->f(v); }, critic(model_->d_y), critic(model_->d_x), ocfg);
    report = gobj.report;
    if (!finite_report(report)) abort(report, "generator");
    if (!report.terms.empty()) {
      ag::backward(gobj.total);
      gen_opt_->step();
    }
  } catch (...) {
    dparams.set_requires_grad(true);
    throw;
  }
  dparams.set_requires_grad(true);
  gen_opt_->zero_grad();
  disc_opt_->zero_grad();
  ++step_;
  return report;
}

// --------------------------------------------------------------- validation

namespace {

template <class Metric>
double validation_mean(DaganModel& model, const PairSource& data, int limit, Metric metric) {
  const std::size_t n = limit > 0 ? std::min<std::size_t>(data.size, static_cast<std::size_t>(limit)) : data.size;
  if (n == 0) throw ArgumentError("validation set is empty");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const PairedSample p = data.get(i);
    const Image2D& ref = p.aligned_target ? *p.aligned_target : p.target;
    const Image2D pred = model.g(p.source);
    s += metric(pred, ref, foreground_mask(ref));
  }
  return s / static_cast<double>(n);
}

}  // namespace

double validation_nmae(DaganModel& model, const PairSource& data, int limit) {
  return validation_mean(model, data, limit, [](const Image2D& p, const Image2D& r, const Mask& m) { return nmae(p, r, m); });
}

double validation_mae(DaganModel& model, const PairSource& data, int limit) {
  return validation_mean(model, data, limit, [](const Image2D& p, const Image2D& r, const Mask& m) {
    double s = 0.0;
    const std::size_t n = m.count();
    if (n == 0) throw ValidationError("empty foreground");
    for (std::size_t i = 0; i < r.size(); ++i)
      if (m.on[i]) s += std::abs(static_cast<double>(p.values[i]) - r.values[i]);
    return s / static_cast<double>(n);
  });
}

// --------------------------------------------------------------------- runs

void write_params_json(DaganModel& model, const fs::path& path) {
  json j;
  std::int64_t total = 0;
  for (const auto& n : model.networks()) {
    j["networks"][n.name] = n.params->count();
    total += n.params->count();
  }
  j["total_parameters"] = total;
  j["model_size_bytes"] = total * static_cast<std::int64_t>(sizeof(float));
  j["model_size_mb"] = static_cast<double>(total) * sizeof(float) / (1024.0 * 1024.0);
  j["model"] = model_spec_to_json(model.spec());
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::optional<fs::path> latest_checkpoint(const fs::path& run_dir) {
  const fs::path dir = run_dir / "checkpoints";
  if (!fs::is_directory(dir)) return std::nullopt;
  std::optional<fs::path> best;
  std::int64_t best_step = -1;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_directory() || !fs::exists(e.path() / "index.json")) continue;
    const std::int64_t s = read_checkpoint_info(e.path()).step;
    if (s > best_step) best_step = s, best = e.path();
  }
  return best;
}

namespace {

std::string epoch_dir(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d", epoch);
  return buf;
}

std::uint64_t text_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp((v + 1.0f) * 0.5f, 0.0f, 1.0f) * 255.0f));
}

void write_preview(DaganModel& model, const PairedSample& p, const fs::path& path) {
  const Image2D pred = model.g(p.source);
  const Image2D& ref = p.aligned_target ? *p.aligned_target : p.target;
  const int h = p.source.height, w = p.source.width;
  std::vector<std::uint8_t> px(static_cast<std::size_t>(h) * w * 3);
  const Image2D* panels[3] = {&p.source, &pred, &ref};
  for (int r = 0; r < h; ++r)
    for (int k = 0; k < 3; ++k)
      for (int c = 0; c < w; ++c) px[static_cast<std::size_t>(r) * w * 3 + k * w + c] = to_byte(panels[k]->at(r, c));
  io::write_png8(path, h, w * 3, px);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const PairSource& train_data, const PairSource& validation,
                  const fs::path& run_dir, const TrainOptions& options) {
  if (train_data.size == 0) throw ArgumentError("training dataset is empty");
  cfg.validate();
  fs::create_directories(run_dir / "checkpoints");
  fs::create_directories(run_dir / "samples");
  {
    std::ofstream out(run_dir / "config.resolved");
    out << options.resolved_config;
  }
  char hash[20];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(text_hash(options.resolved_config)));

  Trainer trainer(cfg);
  trainer.dump_dir = run_dir;
  write_params_json(trainer.model(), run_dir / "params.json");

  const std::int64_t steps_per_epoch =
      static_cast<std::int64_t>((train_data.size + cfg.batch_size - 1) / cfg.batch_size);
  const std::int64_t total_steps =
      cfg.max_steps > 0 ? std::min<std::int64_t>(cfg.max_steps, steps_per_epoch * cfg.epochs) : steps_per_epoch * cfg.epochs;

  TrainResult result;
  result.run_dir = run_dir;
  const bool has_val = validation.size > 0;
  bool resumed = false;
  if (options.resume) {
    if (auto ck = latest_checkpoint(run_dir)) {
      const CheckpointInfo info = load_checkpoint(*ck, trainer.model(), trainer.optimizers());
      if (!info.config_hash.empty() && info.config_hash != hash)
        std::cerr << "warning: resuming with a different configuration (" << info.config_hash << " -> " << hash << ")\n";
      trainer.set_step(info.step);
      resumed = true;
    }
  }

  std::ofstream losses(run_dir / "losses.csv", resumed ? std::ios::app : std::ios::trunc);
  std::ofstream val(run_dir / "validation.csv", resumed ? std::ios::app : std::ios::trunc);
  losses.precision(9);
  val.precision(9);
  const std::vector<std::string> names = active_terms(cfg.objective());
  if (!resumed) {
    losses << "step,epoch";
    for (const auto& n : names) losses << ',' << n;
    losses << ",total,d_loss\n";
    val << "step,nmae\n";
  }
  auto validate_now = [&](std::int64_t step) {
    const double v = validation_nmae(trainer.model(), validation, cfg.validation_samples);
    val << step << ',' << v << '\n' << std::flush;
    return v;
  };
  if (has_val) {
    result.initial_validation_nmae = validate_now(trainer.step());
  }

  int last_saved_epoch = -1;
  auto save = [&](int epoch) {
    save_checkpoint(run_dir / "checkpoints" / epoch_dir(epoch), trainer.model(), trainer.optimizers(),
                    {trainer.step(), epoch, hash, cfg.model});
    last_saved_epoch = epoch;
  };

  const std::int64_t bs = cfg.batch_size;
  while (trainer.step() < total_steps) {
    const int epoch = static_cast<int>(trainer.step() / steps_per_epoch);
    const std::vector<std::size_t> order = epoch_order(train_data.size, derive_seed(cfg.seed, "shuffle"), epoch);
    for (std::int64_t b = trainer.step() % steps_per_epoch; b < steps_per_epoch && trainer.step() < total_steps; ++b) {
      std::vector<PairedSample> batch;
      for (std::int64_t i = b * bs; i < std::min<std::int64_t>((b + 1) * bs, static_cast<std::int64_t>(order.size())); ++i)
        batch.push_back(train_data.get(order[static_cast<std::size_t>(i)]));
      const LossReport r = trainer.train_step(batch);
      losses << trainer.step() << ',' << epoch;
      for (const auto& n : names) losses << ',' << (r.has(n) ? r.value(n) : 0.0);
      losses << ',' << r.total << ',' << trainer.last_discriminator_report().total << '\n';
      result.losses.push_back(r);
      if (!options.quiet && trainer.step() % 50 == 0)
        std::cerr << "step " << trainer.step() << "/" << total_steps << " total " << r.total << '\n';
      if (has_val && cfg.validation_interval > 0 && trainer.step() % cfg.validation_interval == 0 &&
          trainer.step() != total_steps)
        validate_now(trainer.step());
      if (has_val && cfg.sample_interval > 0 && trainer.step() % cfg.sample_interval == 0) {
        char name[32];
        std::snprintf(name, sizeof name, "step_%06lld.png", static_cast<long long>(trainer.step()));
        write_preview(trainer.model(), validation.get(0), run_dir / "samples" / name);
      }
    }
    const int done = static_cast<int>(trainer.step() / steps_per_epoch);
    if (trainer.step() % steps_per_epoch == 0 && cfg.checkpoint_every_epochs > 0 && done % cfg.checkpoint_every_epochs == 0)
      save(done);
  }
  losses.flush();
  const int final_epoch = static_cast<int>((trainer.step() + steps_per_epoch - 1) / steps_per_epoch);
  if (last_saved_epoch != final_epoch) save(final_epoch);
  result.steps = trainer.step();
  if (has_val) {
    result.final_validation_nmae = validate_now(trainer.step());
    result.final_validation_mae = validation_mae(trainer.model(), validation, cfg.validation_samples);
  }
  return result;
}

void set_loss_weight(LossWeights& w, const std::string& name, float value) {
  if (name == "lambda_reg") w.lambda_reg = value;
  else if (name == "lambda_smt") w.lambda_smt = value;
  else if (name == "lambda_ic_reg") w.lambda_ic_reg = value;
  else if (name == "lambda_ic_gen") w.lambda_ic_gen = value;
  else if (name == "lambda_ic_joint") w.lambda_ic_joint = value;
  else if (name == "lambda_adv_da") w.lambda_adv_da = value;
  else throw ConfigError("unknown loss weight '" + name + "'");
}

std::vector<SweepRow> sensitivity_sweep(const TrainConfig& cfg, const std::string& parameter,
                                        const std::vector<double>& values, const PairSource& train_data,
                                        const PairSource& validation, const fs::path& out_dir) {
  if (values.empty()) throw ArgumentError("sweep needs at least one value");
  if (validation.size == 0) throw ArgumentError("sweep needs a validation set");
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    TrainConfig c = cfg;
    set_loss_weight(c.loss_weights, parameter, static_cast<float>(values[i]));
    TrainOptions opt;
    opt.resolved_config = "# sweep " + parameter + "=" + std::to_string(values[i]) + "\n";
    const TrainResult r = train(c, train_data, validation, out_dir / (parameter + "_" + std::to_string(i)), opt);
    rows.push_back({values[i], r.final_validation_nmae, r.final_validation_mae});
  }
  std::ofstream out(out_dir / "sweep.csv");
  out.precision(9);
  out << parameter << ",final_validation_nmae,final_validation_mae\n";
  for (const auto& r : rows) out << r.value << ',' << r.final_validation_nmae << ',' << r.final_validation_mae << '\n';
  return rows;
}

Direction parse_direction(const std::string& s) {
  if (s == "x2y" || s == "x->y" || s == "x_to_y") return Direction::x_to_y;
  if (s == "y2x" || s == "y->x" || s == "y_to_x") return Direction::y_to_x;
  throw ConfigError("unknown direction '" + s + "' (expected x2y or y2x)");
}

Synthesis synthesize(DaganModel& model, const std::vector<PairedSample>& pairs, Direction direction, bool with_fields) {
  Synthesis out;
  const Generator& gen = direction == Direction::x_to_y ? model.g : model.f;
  for (const PairedSample& p : pairs) {
    const Image2D& in = direction == Direction::x_to_y ? p.source : p.target;
    if (in.height % 4 != 0 || in.width % 4 != 0)
      throw ValidationError("synthesize: " + p.sample_id + " size not compatible with the generator");
    Image2D pred = gen(in);
    pred.scale = direction == Direction::x_to_y ? p.target.scale : p.source.scale;
    if (with_fields && model.has_aligners()) {
      const Image2D& fixed = direction == Direction::x_to_y ? p.target : p.source;
      const Regressor& r = direction == Direction::x_to_y ? model.a_y->forward : model.a_x->forward;
      if (!fixed.values.empty() && fixed.same_shape(pred)) out.fields.push_back(r(pred, fixed));
    }
    out.images.push_back(std::move(pred));
  }
  return out;
}

std::unique_ptr<DaganModel> load_model(const fs::path& checkpoint_dir) {
  const CheckpointInfo info = read_checkpoint_info(checkpoint_dir);
  auto model = std::make_unique<DaganModel>(info.model, 0);
  load_checkpoint(checkpoint_dir, *model);
  return model;
}

}  // namespace dagan
