#pragma once

// Registration, inverse-consistency and adversarial objectives. Every L1 term
// is a mean over pixels so the weights carry across resolutions.

#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dagan/autograd.hpp"
#include "dagan/networks.hpp"

namespace dagan {

struct LossWeights {
  float lambda_reg = 20.0f;
  float lambda_smt = 10.0f;
  float lambda_ic_reg = 10.0f;
  float lambda_ic_gen = 10.0f;
  float lambda_ic_joint = 10.0f;
  float lambda_adv_da = 1.0f;
  void validate() const;
};

// Displacements [N,2,H,W]: y_fwd warps G(x) onto y, y_bwd warps y onto G(x),
// x_fwd warps F(y) onto x, x_bwd warps x onto F(y).
struct FieldSet {
  ag::Var y_fwd, y_bwd, x_fwd, x_bwd;
  bool defined() const { return y_fwd.defined() && y_bwd.defined() && x_fwd.defined() && x_bwd.defined(); }
};

using ImageMap = std::function<ag::Var(const ag::Var&)>;

// Discriminator with the domain it judges.
struct Critic {
  Domain domain;
  ImageMap logits;
};
Critic critic(const Discriminator& d);

ag::Var sim_loss(const ag::Var& x, const ag::Var& y, const ag::Var& g_out, const ag::Var& f_out, const FieldSet& fields);
ag::Var smoothness_loss(const FieldSet& fields);
ag::Var symmetric_registration_loss(const ag::Var& sim, const ag::Var& smt, const LossWeights& w);

// y o y_bwd o y_fwd against y, and the same for x; fields applied left to right.
ag::Var ic_reg_loss(const ag::Var& x, const ag::Var& y, const FieldSet& fields);
// |F(g_out) - x| + |G(f_out) - y| with g_out = G(x), f_out = F(y).
ag::Var ic_gen_loss(const ag::Var& x, const ag::Var& y, const ag::Var& g_out, const ag::Var& f_out,
                    const ImageMap& G, const ImageMap& F);
ag::Var ic_gen_loss(const ag::Var& x, const ag::Var& y, const ImageMap& G, const ImageMap& F);
// |F(G(x) o y_fwd) o x_fwd - x| + |G(F(y) o x_fwd) o y_fwd - y|.
ag::Var ic_joint_loss(const ag::Var& x, const ag::Var& y, const ag::Var& g_out, const ag::Var& f_out,
                      const ImageMap& G, const ImageMap& F, const FieldSet& fields);

struct IcToggles {
  bool reg = true;
  bool gen = true;
  bool joint = true;
};

// Weighted sum of the enabled terms; disabled or undefined terms contribute nothing.
ag::Var mic_loss(const ag::Var& ic_reg, const ag::Var& ic_gen, const ag::Var& ic_joint, const LossWeights& w,
                 IcToggles on);

// Discriminator side: BCE(real, 1) + BCE(real o real_field, 1) + BCE(fake, 0) + BCE(fake o fake_field, 0).
// real_field is the backward field of the domain, fake_field the forward one.
ag::Var adv_da_discriminator_loss(const Critic& d, Domain domain, const ag::Var& real, const ag::Var& fake,
                                  const ag::Var& real_field, const ag::Var& fake_field);
// Generator side on {fake, fake o fake_field}: BCE(., 1) by default, or the
// literal sum of log(1 - D(.)) when saturating.
ag::Var adv_da_generator_loss(const Critic& d, Domain domain, const ag::Var& fake, const ag::Var& fake_field,
                              bool saturating = false);
ag::Var conventional_discriminator_loss(const Critic& d, Domain domain, const ag::Var& real, const ag::Var& fake);
ag::Var conventional_generator_loss(const Critic& d, Domain domain, const ag::Var& fake, bool saturating = false);

// ---------------------------------------------------------------- objective

enum class AdvMode { deformation_aware, conventional };
const char* adv_mode_name(AdvMode m);
AdvMode parse_adv_mode(const std::string& s);

struct ObjectiveConfig {
  LossWeights weights;
  IcToggles ic;
  AdvMode adv_mode = AdvMode::deformation_aware;
  // Without registration the similarity term is plain unwarped L1 and every
  // field-dependent term is dropped.
  bool registration = true;
  bool saturating = false;
  bool adv_to_regressors = true;
};

struct LossTerm {
  std::string name;
  double value = 0.0;
  double weight = 0.0;
};

struct LossReport {
  std::vector<LossTerm> terms;
  double total = 0.0;
  bool has(const std::string& name) const;
  double value(const std::string& name) const;
  double weighted_sum() const;
  std::vector<std::string> names() const;
};

// Forward results of one step; fields undefined when registration is off.
struct ForwardState {
  ag::Var x, y, g_out, f_out;
  FieldSet fields;
};

struct Objective {
  ag::Var total;
  LossReport report;
};

// Active names in report order: sim|l1, smt, ic_reg, ic_gen, ic_joint, adv_da|adv.
std::vector<std::string> active_terms(const ObjectiveConfig& cfg);

Objective generator_objective(const ForwardState& s, const ImageMap& G, const ImageMap& F, const Critic& d_y,
                              const Critic& d_x, const ObjectiveConfig& cfg);
// Both domains; fields and images should be detached by the caller.
Objective discriminator_objective(const ForwardState& s, const Critic& d_y, const Critic& d_x,
                                  const ObjectiveConfig& cfg);

}  // namespace dagan
