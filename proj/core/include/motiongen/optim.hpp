#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "motiongen/graph.hpp"
#include "motiongen/tensor.hpp"

namespace motiongen {

// std::map keeps parameter walks in name order, so update order (and the
// float rounding it implies) never depends on insertion history.
using ParamStore = std::map<std::string, Tensor>;
using GradStore = std::map<std::string, Tensor>;

// Binds a ParamStore into a graph as leaves and routes gradients back out.
// One binding per graph; rebuild for every forward pass.
class ParamBinding {
 public:
  void bind(Graph& g, const ParamStore& params);
  NodeId at(const std::string& name) const;
  bool contains(const std::string& name) const { return ids_.count(name) > 0; }
  // Adds each bound parameter's gradient into `out` (allocating zeros on
  // first touch). Parameters the loss never reached contribute nothing.
  void collect_grads(const Graph& g, GradStore& out) const;

 private:
  std::map<std::string, NodeId> ids_;
};

void accumulate_grad(GradStore& store, const std::string& name, const Tensor& g);
void scale_grads(GradStore& store, double factor);
double grad_norm(const GradStore& store);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // One update with the given learning rate; schedules live in the caller.
  void step(ParamStore& params, const GradStore& grads, double lr);

  std::int64_t step_count() const { return t_; }
  const std::map<std::string, Tensor>& m_state() const { return m_; }
  const std::map<std::string, Tensor>& v_state() const { return v_; }
  void restore(std::int64_t t, std::map<std::string, Tensor> m,
               std::map<std::string, Tensor> v);

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

// Cosine decay from lr_max to lr_min over total_steps (step is 0-based).
double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr_max,
                 double lr_min);

}  // namespace motiongen
