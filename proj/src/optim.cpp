#include "ntk/optim.hpp"

#include <cmath>

#include "ntk/kernels.hpp"

namespace ntk {

double lr_schedule(double step_epoch, const TaggerConfig& cfg) {
  cfg.validate();
  if (!(step_epoch >= 0.0)) throw ConfigError("step_epoch must be >= 0");
  double e = step_epoch;
  double cycle = static_cast<double>(cfg.t0_epochs);
  while (e >= cycle) {
    e -= cycle;
    cycle *= static_cast<double>(cfg.t_mult);
  }
  const double pi = 3.14159265358979323846;
  return 0.5 * cfg.lr_max * (1.0 + std::cos(pi * e / cycle));
}

AdamW::AdamW(std::vector<std::pair<std::string, Tensor*>> params, double weight_decay)
    : params_(std::move(params)), weight_decay_(weight_decay) {
  if (weight_decay_ < 0.0) throw ConfigError("weight_decay must be >= 0");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& [name, t] : params_) {
    (void)name;
    m_.emplace_back(t->size(), 0.0);
    v_.emplace_back(t->size(), 0.0);
  }
}

void AdamW::step(const std::vector<const Tensor*>& grads, double lr) {
  if (grads.size() != params_.size())
    throw StateError("gradient list does not match the parameter list");
  for (size_t i = 0; i < params_.size(); ++i) {
    const auto& [name, t] = params_[i];
    if (grads[i] == nullptr || grads[i]->rows != t->rows || grads[i]->cols != t->cols)
      throw StateError("gradient shape mismatch for " + name);
    for (double g : grads[i]->v)
      if (!std::isfinite(g)) throw StateError("non-finite gradient in " + name);
  }
  ++t_;
  kern::AdamwArgs args;
  args.step = t_;
  args.lr = lr;
  for (size_t i = 0; i < params_.size(); ++i) {
    const auto& [name, t] = params_[i];
    args.weight_decay = is_bias_param(name) ? 0.0 : weight_decay_;
    kern::ops().adamw(t->v.data(), grads[i]->v.data(), m_[i].data(), v_[i].data(),
                      static_cast<int>(t->size()), args);
  }
}

}  // namespace ntk
