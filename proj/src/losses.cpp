#include "dagan/losses.hpp"

#include <cmath>

#include "dagan/error.hpp"
#include "dagan/ops.hpp"

namespace dagan {

using ag::Var;

void LossWeights::validate() const {
  for (float v : {lambda_reg, lambda_smt, lambda_ic_reg, lambda_ic_gen, lambda_ic_joint, lambda_adv_da})
    if (!(v >= 0.0f) || !std::isfinite(v)) throw ArgumentError("loss weights must be finite and >= 0");
}

Critic critic(const Discriminator& d) {
  return {d.domain(), [&d](const Var& v) { return d(v); }};
}

namespace {

void check_image(const Var& v, const Shape& ref, const char* what) {
  if (!v.defined() || !(v.shape() == ref))
    throw ArgumentError(std::string(what) + ": expected " + ref.str() + ", got " + (v.defined() ? v.shape().str() : "undefined"));
}

void check_fields(const FieldSet& f, const Shape& image) {
  const Shape s{image.n, 2, image.h, image.w};
  check_image(f.y_fwd, s, "field y_fwd");
  check_image(f.y_bwd, s, "field y_bwd");
  check_image(f.x_fwd, s, "field x_fwd");
  check_image(f.x_bwd, s, "field x_bwd");
}

void check_pair(const Var& x, const Var& y) {
  if (!x.defined() || !y.defined() || !(x.shape() == y.shape()))
    throw ArgumentError("x and y shapes differ");
}

void check_domain(const Critic& d, Domain domain) {
  if (d.domain != domain)
    throw ArgumentError(std::string("discriminator for domain ") + domain_name(d.domain) + " used on domain " +
                        domain_name(domain));
}

Var sum(std::initializer_list<Var> terms) {
  Var acc;
  for (const Var& t : terms) acc = acc.defined() ? ag::add(acc, t) : t;
  return acc;
}

}  // namespace

Var sim_loss(const Var& x, const Var& y, const Var& g_out, const Var& f_out, const FieldSet& fields) {
  check_pair(x, y);
  check_image(g_out, x.shape(), "G(x)");
  check_image(f_out, x.shape(), "F(y)");
  check_fields(fields, x.shape());
  return sum({ag::l1_mean(y, ag::warp(g_out, fields.y_fwd)), ag::l1_mean(g_out, ag::warp(y, fields.y_bwd)),
              ag::l1_mean(x, ag::warp(f_out, fields.x_fwd)), ag::l1_mean(f_out, ag::warp(x, fields.x_bwd))});
}

Var smoothness_loss(const FieldSet& fields) {
  return sum({ag::gradient_energy(fields.y_fwd), ag::gradient_energy(fields.y_bwd), ag::gradient_energy(fields.x_fwd),
              ag::gradient_energy(fields.x_bwd)});
}

Var symmetric_registration_loss(const Var& sim, const Var& smt, const LossWeights& w) {
  return ag::weighted_sum({sim, smt}, {w.lambda_reg, w.lambda_smt});
}

Var ic_reg_loss(const Var& x, const Var& y, const FieldSet& fields) {
  check_pair(x, y);
  check_fields(fields, x.shape());
  return sum({ag::l1_mean(ag::warp(ag::warp(y, fields.y_bwd), fields.y_fwd), y),
              ag::l1_mean(ag::warp(ag::warp(x, fields.x_bwd), fields.x_fwd), x)});
}

Var ic_gen_loss(const Var& x, const Var& y, const Var& g_out, const Var& f_out, const ImageMap& G, const ImageMap& F) {
  check_pair(x, y);
  return sum({ag::l1_mean(F(g_out), x), ag::l1_mean(G(f_out), y)});
}

Var ic_gen_loss(const Var& x, const Var& y, const ImageMap& G, const ImageMap& F) {
  return ic_gen_loss(x, y, G(x), F(y), G, F);
}

Var ic_joint_loss(const Var& x, const Var& y, const Var& g_out, const Var& f_out, const ImageMap& G, const ImageMap& F,
                  const FieldSet& fields) {
  check_pair(x, y);
  check_fields(fields, x.shape());
  Var a = ag::warp(F(ag::warp(g_out, fields.y_fwd)), fields.x_fwd);
  Var b = ag::warp(G(ag::warp(f_out, fields.x_fwd)), fields.y_fwd);
  return sum({ag::l1_mean(a, x), ag::l1_mean(b, y)});
}

Var mic_loss(const Var& ic_reg, const Var& ic_gen, const Var& ic_joint, const LossWeights& w, IcToggles on) {
  std::vector<Var> terms;
  std::vector<float> weights;
  if (on.reg && ic_reg.defined()) terms.push_back(ic_reg), weights.push_back(w.lambda_ic_reg);
  if (on.gen && ic_gen.defined()) terms.push_back(ic_gen), weights.push_back(w.lambda_ic_gen);
  if (on.joint && ic_joint.defined()) terms.push_back(ic_joint), weights.push_back(w.lambda_ic_joint);
  if (terms.empty()) return ag::constant(Tensor::scalar(0.0f));
  return ag::weighted_sum(terms, weights);
}

Var adv_da_discriminator_loss(const Critic& d, Domain domain, const Var& real, const Var& fake, const Var& real_field,
                              const Var& fake_field) {
  check_domain(d, domain);
  return sum({ag::bce_with_logits(d.logits(real), 1.0f), ag::bce_with_logits(d.logits(ag::warp(real, real_field)), 1.0f),
              ag::bce_with_logits(d.logits(fake), 0.0f), ag::bce_with_logits(d.logits(ag::warp(fake, fake_field)), 0.0f)});
}

Var adv_da_generator_loss(const Critic& d, Domain domain, const Var& fake, const Var& fake_field, bool saturating) {
  check_domain(d, domain);
  Var a = d.logits(fake);
  Var b = d.logits(ag::warp(fake, fake_field));
  if (saturating) return sum({ag::log_one_minus_sigmoid(a), ag::log_one_minus_sigmoid(b)});
  return sum({ag::bce_with_logits(a, 1.0f), ag::bce_with_logits(b, 1.0f)});
}

Var conventional_discriminator_loss(const Critic& d, Domain domain, const Var& real, const Var& fake) {
  check_domain(d, domain);
  return sum({ag::bce_with_logits(d.logits(real), 1.0f), ag::bce_with_logits(d.logits(fake), 0.0f)});
}

Var conventional_generator_loss(const Critic& d, Domain domain, const Var& fake, bool saturating) {
  check_domain(d, domain);
  Var a = d.logits(fake);
  return saturating ? ag::log_one_minus_sigmoid(a) : ag::bce_with_logits(a, 1.0f);
}

// ---------------------------------------------------------------- objective

const char* adv_mode_name(AdvMode m) { return m == AdvMode::conventional ? "conventional" : "deformation_aware"; }

AdvMode parse_adv_mode(const std::string& s) {
  if (s == "deformation_aware" || s == "adv_da") return AdvMode::deformation_aware;
  if (s == "conventional" || s == "adv") return AdvMode::conventional;
  throw ConfigError("unknown adversarial mode '" + s + "'");
}

bool LossReport::has(const std::string& name) const {
  for (const auto& t : terms)
    if (t.name == name) return true;
  return false;
}

double LossReport::value(const std::string& name) const {
  for (const auto& t : terms)
    if (t.name == name) return t.value;
  throw ArgumentError("loss term '" + name + "' not in report");
}

double LossReport::weighted_sum() const {
  double s = 0.0;
  for (const auto& t : terms) s += t.weight * t.value;
  return s;
}

std::vector<std::string> LossReport::names() const {
  std::vector<std::string> out;
  for (const auto& t : terms) out.push_back(t.name);
  return out;
}

std::vector<std::string> active_terms(const ObjectiveConfig& cfg) {
  const LossWeights& w = cfg.weights;
  std::vector<std::string> out;
  if (w.lambda_reg > 0) out.push_back(cfg.registration ? "sim" : "l1");
  if (cfg.registration) {
    if (w.lambda_smt > 0) out.push_back("smt");
    if (cfg.ic.reg && w.lambda_ic_reg > 0) out.push_back("ic_reg");
  }
  if (cfg.ic.gen && w.lambda_ic_gen > 0) out.push_back("ic_gen");
  if (cfg.registration && cfg.ic.joint && w.lambda_ic_joint > 0) out.push_back("ic_joint");
  if (w.lambda_adv_da > 0) out.push_back(cfg.adv_mode == AdvMode::deformation_aware && cfg.registration ? "adv_da" : "adv");
  return out;
}

namespace {

float weight_of(const std::string& name, const LossWeights& w) {
  if (name == "sim" || name == "l1") return w.lambda_reg;
  if (name == "smt") return w.lambda_smt;
  if (name == "ic_reg") return w.lambda_ic_reg;
  if (name == "ic_gen") return w.lambda_ic_gen;
  if (name == "ic_joint") return w.lambda_ic_joint;
  return w.lambda_adv_da;
}

Objective assemble(const std::vector<std::pair<std::string, Var>>& terms, const LossWeights& w) {
  Objective o;
  std::vector<Var> vars;
  std::vector<float> weights;
  for (const auto& [name, v] : terms) {
    const float wt = weight_of(name, w);
    vars.push_back(v);
    weights.push_back(wt);
    o.report.terms.push_back({name, static_cast<double>(v.item()), static_cast<double>(wt)});
  }
  o.total = vars.empty() ? ag::constant(Tensor::scalar(0.0f)) : ag::weighted_sum(vars, weights);
  o.report.total = o.total.item();
  return o;
}

}  // namespace

Objective generator_objective(const ForwardState& s, const ImageMap& G, const ImageMap& F, const Critic& d_y,
                              const Critic& d_x, const ObjectiveConfig& cfg) {
  cfg.weights.validate();
  if (cfg.registration && !s.fields.defined()) throw ArgumentError("registration enabled but fields missing");
  std::vector<std::pair<std::string, Var>> terms;
  for (const std::string& name : active_terms(cfg)) {
    Var v;
    if (name == "sim") v = sim_loss(s.x, s.y, s.g_out, s.f_out, s.fields);
    else if (name == "l1") v = ag::add(ag::l1_mean(s.g_out, s.y), ag::l1_mean(s.f_out, s.x));
    else if (name == "smt") v = smoothness_loss(s.fields);
    else if (name == "ic_reg") v = ic_reg_loss(s.x, s.y, s.fields);
    else if (name == "ic_gen") v = ic_gen_loss(s.x, s.y, s.g_out, s.f_out, G, F);
    else if (name == "ic_joint") v = ic_joint_loss(s.x, s.y, s.g_out, s.f_out, G, F, s.fields);
    else if (name == "adv_da") {
      const Var fy = cfg.adv_to_regressors ? s.fields.y_fwd : ag::detach(s.fields.y_fwd);
      const Var fx = cfg.adv_to_regressors ? s.fields.x_fwd : ag::detach(s.fields.x_fwd);
      v = ag::add(adv_da_generator_loss(d_y, Domain::y, s.g_out, fy, cfg.saturating),
                  adv_da_generator_loss(d_x, Domain::x, s.f_out, fx, cfg.saturating));
    } else {
      v = ag::add(conventional_generator_loss(d_y, Domain::y, s.g_out, cfg.saturating),
                  conventional_generator_loss(d_x, Domain::x, s.f_out, cfg.saturating));
    }
    terms.emplace_back(name, v);
  }
  return assemble(terms, cfg.weights);
}

Objective discriminator_objective(const ForwardState& s, const Critic& d_y, const Critic& d_x,
                                  const ObjectiveConfig& cfg) {
  cfg.weights.validate();
  std::vector<std::pair<std::string, Var>> terms;
  if (cfg.weights.lambda_adv_da > 0) {
    if (cfg.adv_mode == AdvMode::deformation_aware && cfg.registration) {
      if (!s.fields.defined()) throw ArgumentError("deformation-aware loss needs fields");
      terms.emplace_back("d_adv_da",
                         ag::add(adv_da_discriminator_loss(d_y, Domain::y, s.y, s.g_out, s.fields.y_bwd, s.fields.y_fwd),
                                 adv_da_discriminator_loss(d_x, Domain::x, s.x, s.f_out, s.fields.x_bwd, s.fields.x_fwd)));
    } else {
      terms.emplace_back("d_adv", ag::add(conventional_discriminator_loss(d_y, Domain::y, s.y, s.g_out),
                                          conventional_discriminator_loss(d_x, Domain::x, s.x, s.f_out)));
    }
  }
  return assemble(terms, cfg.weights);
}

}  // namespace dagan
