#include "dagan/optim.hpp"

#include <cmath>
#include <map>

#include "dagan/error.hpp"
#include "dagan/kernels/dispatch.hpp"

namespace dagan {

Adam::Adam(nn::ParameterSet params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg.lr > 0) || cfg.beta1 < 0 || cfg.beta1 >= 1 || cfg.beta2 < 0 || cfg.beta2 >= 1 || cfg.weight_decay < 0)
    throw ArgumentError("invalid Adam configuration");
  for (const auto& p : params_.items()) {
    Slot s;
    s.m.assign(p.var.value().numel(), 0.0f);
    s.v.assign(p.var.value().numel(), 0.0f);
    slots_.push_back(std::move(s));
  }
}

void Adam::step() {
  const auto& k = kernels::active();
  auto& items = params_.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    ag::Var& p = items[i].var;
    if (!p.has_grad()) continue;
    Slot& s = slots_[i];
    ++s.t;
    const kernels::reference::AdamStep st{
        cfg_.lr,
        cfg_.beta1,
        cfg_.beta2,
        cfg_.eps,
        cfg_.weight_decay,
        static_cast<float>(1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(s.t))),
        static_cast<float>(1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(s.t)))};
    k.adam_update(p.mutable_value().data(), p.grad().data(), s.m.data(), s.v.data(), s.m.size(), st);
  }
}

std::vector<std::pair<std::string, Tensor>> Adam::state() const {
  std::vector<std::pair<std::string, Tensor>> out;
  const auto& items = params_.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Shape s = items[i].var.shape();
    out.emplace_back(items[i].name + ".m", Tensor(s, slots_[i].m));
    out.emplace_back(items[i].name + ".v", Tensor(s, slots_[i].v));
    out.emplace_back(items[i].name + ".t", Tensor::scalar(static_cast<float>(slots_[i].t)));
  }
  return out;
}

void Adam::load_state(const std::vector<std::pair<std::string, Tensor>>& state) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [n, t] : state) by_name[n] = &t;
  auto get = [&](const std::string& n) -> const Tensor& {
    auto it = by_name.find(n);
    if (it == by_name.end()) throw ValidationError("optimizer state missing '" + n + "'");
    return *it->second;
  };
  const auto& items = params_.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Tensor& m = get(items[i].name + ".m");
    const Tensor& v = get(items[i].name + ".v");
    if (m.numel() != slots_[i].m.size() || v.numel() != slots_[i].v.size())
      throw ValidationError("optimizer state size mismatch for '" + items[i].name + "'");
    slots_[i].m = m.storage();
    slots_[i].v = v.storage();
    slots_[i].t = static_cast<std::int64_t>(get(items[i].name + ".t").item());
  }
}

}  // namespace dagan
