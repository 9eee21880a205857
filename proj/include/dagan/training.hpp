#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dagan/checkpoint.hpp"
#include "dagan/losses.hpp"
#include "dagan/networks.hpp"
#include "dagan/optim.hpp"

namespace dagan {

struct AblationFlags {
  bool ic_reg = true;
  bool ic_gen = true;
  bool ic_joint = true;
  AdvMode adv_mode = AdvMode::deformation_aware;
  bool registration = true;
};

// A..F, G1, G2 (= full), plus "pix2pix" (no aligners, unwarped L1,
// conventional adversarial) and "reggan" (registration only, conventional).
AblationFlags preset_flags(const std::string& name);
const std::vector<std::string>& ablation_presets();  // A..F, G1, G2

struct TrainConfig {
  float learning_rate = 1e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float weight_decay = 1e-4f;
  int batch_size = 1;
  int epochs = 50;
  std::int64_t max_steps = 0;  // 0: no limit beyond epochs
  std::uint64_t seed = 0;
  LossWeights loss_weights;
  std::string preset = "G2";
  AblationFlags ablation;
  bool saturating_generator_loss = false;
  bool adv_to_regressors = true;
  int validation_interval = 100;  // steps; 0 disables intermediate validation
  int validation_samples = 0;     // 0: whole validation set
  int checkpoint_every_epochs = 1;  // 0: final checkpoint only
  int sample_interval = 0;          // steps; 0 disables previews
  ModelSpec model = ModelSpec::full();

  ObjectiveConfig objective() const;
  AdamConfig generator_optimizer() const;
  AdamConfig discriminator_optimizer() const;
  void validate() const;
};

// Lazily loaded pairs.
struct PairSource {
  std::size_t size = 0;
  std::function<PairedSample(std::size_t)> get;
  static PairSource from_vector(std::vector<PairedSample> pairs);
  static PairSource from_manifest(DatasetManifest manifest);
};

class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  // One D update followed by one G/F/R update; returns the generator-side
  // report. between_phases runs after the D update, before the G/F/R update.
  LossReport train_step(const std::vector<PairedSample>& batch, const std::function<void()>& between_phases = {});

  DaganModel& model() { return *model_; }
  Adam& generator_optimizer() { return *gen_opt_; }
  Adam& discriminator_optimizer() { return *disc_opt_; }
  const TrainConfig& config() const { return cfg_; }
  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }
  const LossReport& last_discriminator_report() const { return d_report_; }
  // Written when a non-finite loss aborts a step.
  std::filesystem::path dump_dir = ".";

  ForwardState forward(const ag::Var& x, const ag::Var& y);
  std::vector<NamedOptimizer> optimizers();

 private:
  TrainConfig cfg_;
  std::unique_ptr<DaganModel> model_;
  std::unique_ptr<Adam> gen_opt_;
  std::unique_ptr<Adam> disc_opt_;
  std::int64_t step_ = 0;
  LossReport d_report_;
};

// [N,1,H,W] from the batch's source or target images.
ag::Var stack_images(const std::vector<PairedSample>& batch, bool target);

// Mean NMAE of G(source) against aligned_target (target when absent), over
// the foreground of the reference.
double validation_nmae(DaganModel& model, const PairSource& data, int limit = 0);
double validation_mae(DaganModel& model, const PairSource& data, int limit = 0);

struct TrainResult {
  std::filesystem::path run_dir;
  std::int64_t steps = 0;
  double initial_validation_nmae = 0;
  double final_validation_nmae = 0;
  double final_validation_mae = 0;
  std::vector<LossReport> losses;
};

struct TrainOptions {
  std::string resolved_config;  // written verbatim to config.resolved
  bool resume = false;
  bool quiet = true;
};

TrainResult train(const TrainConfig& cfg, const PairSource& train_data, const PairSource& validation,
                  const std::filesystem::path& run_dir, const TrainOptions& options = {});

// Latest checkpoints/epoch_NNN directory of a run, if any.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& run_dir);

void write_params_json(DaganModel& model, const std::filesystem::path& path);

struct SweepRow {
  double value = 0;
  double final_validation_nmae = 0;
  double final_validation_mae = 0;
};

// One training run per value of the named loss weight ("lambda_reg", ...);
// rows follow the input order. Runs go to out_dir/<parameter>_<index>.
std::vector<SweepRow> sensitivity_sweep(const TrainConfig& cfg, const std::string& parameter,
                                        const std::vector<double>& values, const PairSource& train_data,
                                        const PairSource& validation, const std::filesystem::path& out_dir);
void set_loss_weight(LossWeights& w, const std::string& name, float value);

enum class Direction { x_to_y, y_to_x };
Direction parse_direction(const std::string& s);

struct Synthesis {
  std::vector<Image2D> images;
  std::vector<DeformationField2D> fields;  // only when requested and targets and aligners exist
};

// Generator-only inference: G for x->y, F for y->x. No warp is applied.
Synthesis synthesize(DaganModel& model, const std::vector<PairedSample>& pairs, Direction direction,
                     bool with_fields = false);
// Loads model spec and parameters from a checkpoint directory.
std::unique_ptr<DaganModel> load_model(const std::filesystem::path& checkpoint_dir);

}  // namespace dagan
