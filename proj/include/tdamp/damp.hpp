#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "tdamp/network.hpp"
#include "tdamp/sparse_prior.hpp"

namespace tdamp {

using ArrXX = Eigen::ArrayXXd;
using ArrX = Eigen::ArrayXd;

struct DampConfig {
  double damping = 0.8;          // blend factor: new = a*candidate + (1-a)*old
  int sweeps = 1;                // forward/backward passes per minibatch visit
  double precision_floor = 1e-12;
  int threads = 1;
};

// Independent per-element Bernoulli-Gaussian priors for one layer, as
// produced by the group-prior message pass.
struct LayerPriors {
  ArrXX w_rho, w_mu, w_v;  // N_l x N_{l-1}
  ArrX b_rho, b_mu, b_v;   // N_l
};

// Gaussian pseudo-measurements on every weight/bias (variance +inf = flat).
// They enter a minibatch visit as warm starts and leave it as the fresh
// messages feeding the group posterior update.
struct LayerExtrinsics {
  ArrXX w_mean, w_var;
  ArrX b_mean, b_var;
};

std::vector<LayerExtrinsics> make_flat_extrinsics(const Architecture& arch);

struct Head {
  TaskKind kind = TaskKind::regression;
  double noise_var = 1.0;
  const Eigen::MatrixXd* y = nullptr;        // regression targets, NL x I
  const std::vector<int>* labels = nullptr;  // classification, 1-based
};

// Pooled class-margin statistics (sums over samples and non-label classes).
struct XiStats {
  double sum_mean = 0.0;
  double sum_sq = 0.0;  // sum of mean^2 + var
  int64_t count = 0;

  void add(double mu, double v) {
    sum_mean += mu;
    sum_sq += mu * mu + v;
    ++count;
  }
  void merge(const XiStats& o) {
    sum_mean += o.sum_mean;
    sum_sq += o.sum_sq;
    count += o.count;
  }
};

struct DampDiagnostics {
  bool ok = true;
  std::string error;
  int64_t clamped_precisions = 0;
  int64_t degenerate_tilts = 0;
  int64_t flagged_couplings = 0;
};

// Per-minibatch message state carried between visits to the same batch:
// residuals (the Onsager inputs), damping anchors, and the inter-layer
// backward messages. Starts invalid, meaning the cold init (zero residuals,
// flat backward messages).
struct PerBatchState {
  bool valid = false;
  std::vector<ArrXX> phat, vfull, shat, vs, rhat, rvar;
};

// Exact first two moments of the two ReLU coupling mixtures: the input-side
// mixture (point mass at zero + positively truncated slab) and the
// output-side mixture (negative/positive split of the pre-activation).
struct CouplingMoments {
  double mean = 0.0;
  double var = 0.0;
  double zero_mass = 0.0;  // weight of the zero / negative branch
  bool flagged = false;    // both branch weights underflowed; dominant branch used
};
CouplingMoments relu_u_moments(const GaussianMsg& forward, const GaussianMsg& backward);
CouplingMoments relu_z_moments(const GaussianMsg& forward, const GaussianMsg& backward);

// Per-sample probit-product head: sequential tilts of the label class by
// every other class, then extrinsic tilts back onto the non-label classes.
struct ClassHeadResult {
  std::vector<double> z_mean, z_var;
  int degenerate_tilts = 0;
};
ClassHeadResult head_classification_sample(const double* pseudo_mean,
                                           const double* pseudo_var,
                                           int n_classes, int label_1based,
                                           double noise_var);

class DampEngine {
 public:
  DampEngine(Architecture arch, DampConfig cfg);

  // One minibatch visit of cfg.sweeps passes. Without a state argument the
  // per-sample messages start cold; with one they resume from the previous
  // visit and are written back afterwards.
  DampDiagnostics run(const Eigen::MatrixXd& x, const Head& head,
                      const std::vector<LayerPriors>& priors,
                      std::vector<LayerExtrinsics>& ext,
                      PerBatchState* state = nullptr);

  // output-layer posteriors of the last visit
  const ArrXX& z_mean() const { return z_mean_.back(); }
  const ArrXX& z_var() const { return z_var_.back(); }
  const XiStats& xi() const { return xi_; }

  const Architecture& arch() const { return arch_; }
  const DampConfig& config() const { return cfg_; }

 private:
  void resize_batch(int batch);
  void forward_layer(int l, const std::vector<LayerPriors>& priors,
                     const std::vector<LayerExtrinsics>& ext, bool first_sweep,
                     DampDiagnostics& diag);
  void backward_layer(int l, const Head& head, bool first_sweep, bool last_sweep,
                      std::vector<LayerExtrinsics>& ext, DampDiagnostics& diag);

  Architecture arch_;
  DampConfig cfg_;
  int batch_ = 0;

  // interface j holds the activation moments entering layer j+1
  std::vector<ArrXX> u_mean_, u_var_;
  // per layer l (0-based storage for layer l+1)
  std::vector<ArrXX> w_mean_, w_var_;
  std::vector<ArrX> b_mean_, b_var_;
  std::vector<ArrXX> vbar_, phat_, vfull_;
  std::vector<ArrXX> shat_, vs_;
  std::vector<ArrXX> rhat_, rvar_;  // backward message from layer l+1 to interface l
  std::vector<ArrXX> z_mean_, z_var_;
  XiStats xi_;
};

}  // namespace tdamp
