#include "dagan/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "dagan/error.hpp"

namespace dagan {

namespace pt = boost::property_tree;

Override parse_override(const std::string& text) {
  const auto eq = text.find('=');
  const auto dot = text.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq || dot == 0 || dot + 1 == eq)
    throw ConfigError("override must look like section.key=value: '" + text + "'");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "data.manifest", "data.validation_manifest", "data.validation_count",
      "model.size", "model.generator_width", "model.generator_blocks", "model.regressor_base_width",
      "model.regressor_width", "model.regressor_levels", "model.regressor_blocks", "model.discriminator_width",
      "model.discriminator_blocks", "model.discriminator_max_width",
      "loss_weights.lambda_reg", "loss_weights.lambda_smt", "loss_weights.lambda_ic_reg",
      "loss_weights.lambda_ic_gen", "loss_weights.lambda_ic_joint", "loss_weights.lambda_adv_da",
      "train.preset", "train.ic_reg", "train.ic_gen", "train.ic_joint", "train.adv_mode", "train.registration",
      "train.learning_rate", "train.beta1", "train.beta2", "train.weight_decay", "train.batch_size", "train.epochs",
      "train.max_steps", "train.seed", "train.validation_interval", "train.validation_samples",
      "train.checkpoint_every_epochs", "train.sample_interval", "train.saturating_generator_loss",
      "train.adv_to_regressors",
      "simulate.level", "simulate.seed", "simulate.control_spacing",
      "eval.data_range", "eval.background_level", "eval.background_tolerance"};
  return keys;
}

template <class T>
T read(const pt::ptree& tree, const std::string& key, T fallback) {
  const auto v = tree.get_optional<std::string>(key);
  if (!v) return fallback;
  if constexpr (std::is_same_v<T, bool>) {
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw ConfigError("expected a boolean for " + key + ", got '" + *v + "'");
  } else if constexpr (std::is_same_v<T, std::string>) {
    return *v;
  } else {
    std::istringstream in(*v);
    T out{};
    in >> out;
    if (in.fail() || !in.eof()) throw ConfigError("invalid value for " + key + ": '" + *v + "'");
    return out;
  }
}

ExperimentConfig from_tree(pt::ptree tree, const std::vector<Override>& overrides) {
  for (const Override& o : overrides) tree.put(o.key, o.value);
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("key outside a section: " + section);
    for (const auto& [key, value] : body) {
      (void)value;
      if (!known_keys().count(section + "." + key)) throw ConfigError("unknown config key " + section + "." + key);
    }
  }
  ExperimentConfig c;
  c.data.manifest = read(tree, "data.manifest", c.data.manifest);
  c.data.validation_manifest = read(tree, "data.validation_manifest", c.data.validation_manifest);
  c.data.validation_count = read(tree, "data.validation_count", c.data.validation_count);

  c.model_size = read(tree, "model.size", c.model_size);
  if (c.model_size == "full") c.train.model = ModelSpec::full();
  else if (c.model_size == "toy") c.train.model = ModelSpec::toy();
  else throw ConfigError("model.size must be full or toy");
  ModelSpec& m = c.train.model;
  m.generator.base_width = read(tree, "model.generator_width", m.generator.base_width);
  m.generator.n_residual_blocks = read(tree, "model.generator_blocks", m.generator.n_residual_blocks);
  m.regressor.base_width = read(tree, "model.regressor_base_width", m.regressor.base_width);
  m.regressor.width = read(tree, "model.regressor_width", m.regressor.width);
  m.regressor.levels = read(tree, "model.regressor_levels", m.regressor.levels);
  m.regressor.bottleneck_blocks = read(tree, "model.regressor_blocks", m.regressor.bottleneck_blocks);
  m.discriminator.base_width = read(tree, "model.discriminator_width", m.discriminator.base_width);
  m.discriminator.n_blocks = read(tree, "model.discriminator_blocks", m.discriminator.n_blocks);
  m.discriminator.max_width = read(tree, "model.discriminator_max_width", m.discriminator.max_width);

  LossWeights& w = c.train.loss_weights;
  w.lambda_reg = read(tree, "loss_weights.lambda_reg", w.lambda_reg);
  w.lambda_smt = read(tree, "loss_weights.lambda_smt", w.lambda_smt);
  w.lambda_ic_reg = read(tree, "loss_weights.lambda_ic_reg", w.lambda_ic_reg);
  w.lambda_ic_gen = read(tree, "loss_weights.lambda_ic_gen", w.lambda_ic_gen);
  w.lambda_ic_joint = read(tree, "loss_weights.lambda_ic_joint", w.lambda_ic_joint);
  w.lambda_adv_da = read(tree, "loss_weights.lambda_adv_da", w.lambda_adv_da);

  TrainConfig& t = c.train;
  t.preset = read(tree, "train.preset", t.preset);
  t.ablation = preset_flags(t.preset);
  t.ablation.ic_reg = read(tree, "train.ic_reg", t.ablation.ic_reg);
  t.ablation.ic_gen = read(tree, "train.ic_gen", t.ablation.ic_gen);
  t.ablation.ic_joint = read(tree, "train.ic_joint", t.ablation.ic_joint);
  t.ablation.adv_mode = parse_adv_mode(read(tree, "train.adv_mode", std::string(adv_mode_name(t.ablation.adv_mode))));
  t.ablation.registration = read(tree, "train.registration", t.ablation.registration);
  m.aligners = t.ablation.registration;
  t.learning_rate = read(tree, "train.learning_rate", t.learning_rate);
  t.beta1 = read(tree, "train.beta1", t.beta1);
  t.beta2 = read(tree, "train.beta2", t.beta2);
  t.weight_decay = read(tree, "train.weight_decay", t.weight_decay);
  t.batch_size = read(tree, "train.batch_size", t.batch_size);
  t.epochs = read(tree, "train.epochs", t.epochs);
  t.max_steps = read(tree, "train.max_steps", t.max_steps);
  t.seed = read(tree, "train.seed", t.seed);
  t.validation_interval = read(tree, "train.validation_interval", t.validation_interval);
  t.validation_samples = read(tree, "train.validation_samples", t.validation_samples);
  t.checkpoint_every_epochs = read(tree, "train.checkpoint_every_epochs", t.checkpoint_every_epochs);
  t.sample_interval = read(tree, "train.sample_interval", t.sample_interval);
  t.saturating_generator_loss = read(tree, "train.saturating_generator_loss", t.saturating_generator_loss);
  t.adv_to_regressors = read(tree, "train.adv_to_regressors", t.adv_to_regressors);

  c.simulate.level = read(tree, "simulate.level", c.simulate.level);
  c.simulate.seed = read(tree, "simulate.seed", c.simulate.seed);
  const std::string spacing = read(tree, "simulate.control_spacing", std::string("40,40"));
  if (std::sscanf(spacing.c_str(), "%d,%d", &c.simulate.control_spacing[0], &c.simulate.control_spacing[1]) != 2)
    throw ConfigError("simulate.control_spacing must be rows,cols");

  c.eval.data_range = read(tree, "eval.data_range", c.eval.data_range);
  c.eval.background_level = read(tree, "eval.background_level", c.eval.background_level);
  c.eval.background_tolerance = read(tree, "eval.background_tolerance", c.eval.background_tolerance);

  if (c.simulate.level < 1 || c.simulate.level > kMisalignmentLevels) throw ConfigError("simulate.level must be 1..6");
  if (c.data.validation_count < 0) throw ConfigError("data.validation_count must be >= 0");
  if (!(c.eval.data_range > 0)) throw ConfigError("eval.data_range must be > 0");
  try {
    t.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

}  // namespace

ExperimentConfig config_from_string(const std::string& ini, const std::vector<Override>& overrides) {
  pt::ptree tree;
  std::istringstream in(ini);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return from_tree(std::move(tree), overrides);
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<Override>& overrides) {
  if (path.empty()) return from_tree({}, overrides);
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_string(ss.str(), overrides);
}

std::string ExperimentConfig::resolved() const {
  std::ostringstream o;
  // Shortest text that reads back to the same float.
  const auto f = [](float v) {
    char buf[32];
    return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
  };
  const auto b = [](bool v) { return v ? "true" : "false"; };
  const ModelSpec& m = train.model;
  const LossWeights& w = train.loss_weights;
  o << "[data]\nmanifest = " << data.manifest << "\nvalidation_manifest = " << data.validation_manifest
    << "\nvalidation_count = " << data.validation_count << "\n\n";
  o << "[model]\nsize = " << model_size << "\ngenerator_width = " << m.generator.base_width
    << "\ngenerator_blocks = " << m.generator.n_residual_blocks << "\nregressor_base_width = " << m.regressor.base_width
    << "\nregressor_width = " << m.regressor.width << "\nregressor_levels = " << m.regressor.levels
    << "\nregressor_blocks = " << m.regressor.bottleneck_blocks
    << "\ndiscriminator_width = " << m.discriminator.base_width
    << "\ndiscriminator_blocks = " << m.discriminator.n_blocks
    << "\ndiscriminator_max_width = " << m.discriminator.max_width << "\n\n";
  o << "[loss_weights]\nlambda_reg = " << f(w.lambda_reg) << "\nlambda_smt = " << f(w.lambda_smt)
    << "\nlambda_ic_reg = " << f(w.lambda_ic_reg) << "\nlambda_ic_gen = " << f(w.lambda_ic_gen)
    << "\nlambda_ic_joint = " << f(w.lambda_ic_joint) << "\nlambda_adv_da = " << f(w.lambda_adv_da) << "\n\n";
  const TrainConfig& t = train;
  o << "[train]\npreset = " << t.preset << "\nic_reg = " << b(t.ablation.ic_reg) << "\nic_gen = " << b(t.ablation.ic_gen)
    << "\nic_joint = " << b(t.ablation.ic_joint) << "\nadv_mode = " << adv_mode_name(t.ablation.adv_mode)
    << "\nregistration = " << b(t.ablation.registration) << "\nlearning_rate = " << f(t.learning_rate)
    << "\nbeta1 = " << f(t.beta1) << "\nbeta2 = " << f(t.beta2) << "\nweight_decay = " << f(t.weight_decay)
    << "\nbatch_size = " << t.batch_size << "\nepochs = " << t.epochs << "\nmax_steps = " << t.max_steps
    << "\nseed = " << t.seed << "\nvalidation_interval = " << t.validation_interval
    << "\nvalidation_samples = " << t.validation_samples
    << "\ncheckpoint_every_epochs = " << t.checkpoint_every_epochs << "\nsample_interval = " << t.sample_interval
    << "\nsaturating_generator_loss = " << b(t.saturating_generator_loss)
    << "\nadv_to_regressors = " << b(t.adv_to_regressors) << "\n\n";
  o << "[simulate]\nlevel = " << simulate.level << "\nseed = " << simulate.seed << "\ncontrol_spacing = "
    << simulate.control_spacing[0] << "," << simulate.control_spacing[1] << "\n\n";
  o << "[eval]\ndata_range = " << eval.data_range << "\nbackground_level = " << f(eval.background_level)
    << "\nbackground_tolerance = " << f(eval.background_tolerance) << "\n";
  return o.str();
}

}  // namespace dagan
