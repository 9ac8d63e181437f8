#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tdamp/sparse_prior.hpp"

namespace tdamp {

enum class TaskKind { regression, classification };

std::string to_string(TaskKind k);
TaskKind task_from_string(const std::string& s);

// Feedforward widths N_0..N_L; every hidden interface is ReLU, the output
// layer is linear into the likelihood head.
struct Architecture {
  std::vector<int> widths;

  int depth() const { return static_cast<int>(widths.size()) - 1; }  // L
  int in_dim() const { return widths.front(); }
  int out_dim() const { return widths.back(); }
  // number of weight groups (one per input/hidden neuron) and bias scalars
  int q_w() const;
  int q_b() const;
  int w_offset(int layer) const;  // first group index of layer (1-based layer)
  int b_offset(int layer) const;
  bool operator==(const Architecture&) const = default;
};

// Full hyperparameter set: group priors for weights (group = outgoing weights
// of one neuron, i.e. a column of the layer's weight matrix), scalar priors
// for biases, and the output noise variance.
struct NetHyper {
  Architecture arch;
  std::vector<BGGroup> weights;  // q_w groups; group (l, n) has length N_l
  std::vector<BGGroup> biases;   // q_b length-1 groups
  double noise_var = 1.0;

  BGGroup& weight_group(int layer, int in_neuron);
  const BGGroup& weight_group(int layer, int in_neuron) const;
  BGGroup& bias_scalar(int layer, int out_neuron);
  const BGGroup& bias_scalar(int layer, int out_neuron) const;

  void validate() const;  // throws on shape/parameter violations
};

// deterministic across platforms (splitmix64 + Box-Muller)
struct Rng {
  uint64_t state;
  explicit Rng(uint64_t seed) : state(seed) {}
  uint64_t next_u64();
  double uniform();  // [0, 1)
  double normal();
  // Fisher-Yates with uniform_int; identical sequence everywhere
  uint64_t uniform_int(uint64_t n);
};

struct InitOptions {
  double rho = 1.0;            // initial activity for all groups and biases
  double bias_var = 0.3;
  double bias_mean_std = 0.0;
  double weight_var_scale = 2.0;  // active-component variance = scale / fan_in
  double mean_std_scale = 2.0;    // prior mean std = scale / sqrt(fan_in); 0 = zero means
  double output_mean_scale = -1.0;  // last-layer override; < 0 follows mean_std_scale
  double noise_var = 1.0;
  uint64_t seed = 1;
};

NetHyper init_hyper(const Architecture& arch, const InitOptions& opt);

// Posterior-as-prior: the minibatch posterior replaces the running prior.
// Only exponent 1 has a closed form for Bernoulli-Gaussian groups; anything
// else is rejected at configuration load and asserted here.
void pasp_update(NetHyper& prior, NetHyper&& posterior, double lambda = 1.0);

}  // namespace tdamp
