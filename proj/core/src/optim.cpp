#include "motiongen/optim.hpp"

#include <cmath>
#include <numbers>

#include "motiongen/common.hpp"

namespace motiongen {

void ParamBinding::bind(Graph& g, const ParamStore& params) {
  if (!ids_.empty()) throw Error("ParamBinding bound twice");
  for (const auto& [name, tensor] : params) {
    ids_.emplace(name, g.leaf(tensor));
  }
}

NodeId ParamBinding::at(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) throw InvalidArgument("unknown parameter: " + name);
  return it->second;
}

void ParamBinding::collect_grads(const Graph& g, GradStore& out) const {
  for (const auto& [name, id] : ids_) {
    const Tensor& v = g.value(id);
    auto [it, inserted] = out.try_emplace(name, v.rows, v.cols);
    if (!inserted && !it->second.same_shape(v)) {
      throw InvalidArgument("gradient shape mismatch for " + name);
    }
    if (!g.reached(id)) continue;
    const Tensor& grad = g.grad(id);
    for (int i = 0; i < grad.size(); ++i) it->second.data[i] += grad.data[i];
  }
}

void accumulate_grad(GradStore& store, const std::string& name,
                     const Tensor& g) {
  auto [it, inserted] = store.try_emplace(name, g.rows, g.cols);
  if (!inserted && !it->second.same_shape(g)) {
    throw InvalidArgument("gradient shape mismatch for " + name);
  }
  for (int i = 0; i < g.size(); ++i) it->second.data[i] += g.data[i];
}

void scale_grads(GradStore& store, double factor) {
  for (auto& [name, g] : store) {
    (void)name;
    for (double& v : g.data) v *= factor;
  }
}

double grad_norm(const GradStore& store) {
  double s = 0.0;
  for (const auto& [name, g] : store) {
    (void)name;
    for (double v : g.data) s += v * v;
  }
  return std::sqrt(s);
}

void Adam::step(ParamStore& params, const GradStore& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, (double)t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, (double)t_);
  for (const auto& [name, g] : grads) {
    auto pit = params.find(name);
    if (pit == params.end()) {
      throw InvalidArgument("gradient for unknown parameter: " + name);
    }
    Tensor& p = pit->second;
    if (!p.same_shape(g)) {
      throw InvalidArgument("gradient shape mismatch for " + name);
    }
    Tensor& m = m_.try_emplace(name, p.rows, p.cols).first->second;
    Tensor& v = v_.try_emplace(name, p.rows, p.cols).first->second;
    for (int i = 0; i < p.size(); ++i) {
      m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * g.data[i];
      v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * g.data[i] * g.data[i];
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::restore(std::int64_t t, std::map<std::string, Tensor> m,
                   std::map<std::string, Tensor> v) {
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr_max,
                 double lr_min) {
  if (total_steps <= 1) return lr_min;
  const double frac = (double)step / (double)(total_steps - 1);
  const double clamped = frac < 0.0 ? 0.0 : (frac > 1.0 ? 1.0 : frac);
  return lr_min +
         0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * clamped));
}

}  // namespace motiongen
