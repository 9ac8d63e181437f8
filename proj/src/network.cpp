#include "tdamp/network.hpp"

#include <cmath>
#include <stdexcept>

namespace tdamp {

std::string to_string(TaskKind k) {
  return k == TaskKind::regression ? "regression" : "classification";
}

TaskKind task_from_string(const std::string& s) {
  if (s == "regression") return TaskKind::regression;
  if (s == "classification") return TaskKind::classification;
  throw std::runtime_error("unknown task kind: " + s);
}

int Architecture::q_w() const {
  int q = 0;
  for (int l = 1; l <= depth(); ++l) q += widths[l - 1];
  return q;
}

int Architecture::q_b() const {
  int q = 0;
  for (int l = 1; l <= depth(); ++l) q += widths[l];
  return q;
}

int Architecture::w_offset(int layer) const {
  int off = 0;
  for (int l = 1; l < layer; ++l) off += widths[l - 1];
  return off;
}

int Architecture::b_offset(int layer) const {
  int off = 0;
  for (int l = 1; l < layer; ++l) off += widths[l];
  return off;
}

BGGroup& NetHyper::weight_group(int layer, int in_neuron) {
  return weights[arch.w_offset(layer) + in_neuron];
}
const BGGroup& NetHyper::weight_group(int layer, int in_neuron) const {
  return weights[arch.w_offset(layer) + in_neuron];
}
BGGroup& NetHyper::bias_scalar(int layer, int out_neuron) {
  return biases[arch.b_offset(layer) + out_neuron];
}
const BGGroup& NetHyper::bias_scalar(int layer, int out_neuron) const {
  return biases[arch.b_offset(layer) + out_neuron];
}

void NetHyper::validate() const {
  if (arch.widths.size() < 2) throw std::runtime_error("network needs at least one layer");
  for (int w : arch.widths)
    if (w < 1) throw std::runtime_error("layer width must be positive");
  if ((int)weights.size() != arch.q_w()) throw std::runtime_error("weight group count mismatch");
  if ((int)biases.size() != arch.q_b()) throw std::runtime_error("bias count mismatch");
  if (!(noise_var > 0.0)) throw std::runtime_error("noise variance must be positive");
  for (int l = 1; l <= arch.depth(); ++l) {
    for (int n = 0; n < arch.widths[l - 1]; ++n) {
      const auto& g = weight_group(l, n);
      if ((int)g.size() != arch.widths[l]) throw std::runtime_error("weight group length mismatch");
      if (g.rho < 0.0 || g.rho > 1.0) throw std::runtime_error("rho out of [0,1]");
      for (double v : g.v)
        if (!(v >= 0.0)) throw std::runtime_error("weight variance must be nonnegative");
    }
    for (int m = 0; m < arch.widths[l]; ++m) {
      const auto& b = bias_scalar(l, m);
      if (b.size() != 1) throw std::runtime_error("bias group must be scalar");
      if (b.rho < 0.0 || b.rho > 1.0) throw std::runtime_error("rho out of [0,1]");
    }
  }
}

uint64_t Rng::next_u64() {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double Rng::uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

uint64_t Rng::uniform_int(uint64_t n) {
  // rejection sampling to avoid modulo bias
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

NetHyper init_hyper(const Architecture& arch, const InitOptions& opt) {
  NetHyper h;
  h.arch = arch;
  h.noise_var = opt.noise_var;
  Rng rng(opt.seed);
  for (int l = 1; l <= arch.depth(); ++l) {
    const int fan_in = arch.widths[l - 1];
    const int n_out = arch.widths[l];
    const double v = opt.weight_var_scale / fan_in;
    double scale = opt.mean_std_scale;
    if (l == arch.depth() && opt.output_mean_scale >= 0.0) {
      scale = opt.output_mean_scale;
    }
    const double mean_sd = scale / std::sqrt((double)fan_in);
    for (int n = 0; n < fan_in; ++n) {
      BGGroup g = BGGroup::make(opt.rho, n_out, 0.0, v);
      if (mean_sd > 0.0) {
        for (auto& m : g.mu) m = mean_sd * rng.normal();
      }
      h.weights.push_back(std::move(g));
    }
    for (int m = 0; m < n_out; ++m) {
      const double b0 = opt.bias_mean_std > 0.0 ? opt.bias_mean_std * rng.normal() : 0.0;
      h.biases.push_back(BGGroup::make(opt.rho, 1, b0, opt.bias_var));
    }
  }
  h.validate();
  return h;
}

void pasp_update(NetHyper& prior, NetHyper&& posterior, double lambda) {
  if (lambda != 1.0)
    throw std::invalid_argument("posterior-as-prior exponent must be 1");
  prior.weights = std::move(posterior.weights);
  prior.biases = std::move(posterior.biases);
}

}  // namespace tdamp
