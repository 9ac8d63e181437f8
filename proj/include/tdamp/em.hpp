#pragma once

#include <functional>
#include <optional>

#include "tdamp/damp.hpp"
#include "tdamp/dataset.hpp"
#include "tdamp/ftable.hpp"
#include "tdamp/metrics.hpp"

namespace tdamp {

struct SparsityPolicy {
  double rho = 1.0;     // target fraction of active weight groups
  double rho_th = 0.99; // activity level that counts as "confidently active"
  double rho_0 = 0.5;   // value confident groups are reset to

  void validate() const;
};

struct TrainConfig {
  int iterations = 10;  // outer EM iterations
  int batch_size = 101;
  double damping = 0.8;
  int sweeps = 1;  // AMP passes per minibatch visit
  double lambda = 1.0;  // posterior-as-prior exponent; only 1 is accepted
  bool adapt_noise = true;
  uint64_t seed = 1;
  bool shuffle = true;
  bool reshuffle_each_iteration = false;
  bool persist_messages = false;  // per-batch message state across visits (unstable with posterior-as-prior updates; off by default)
  int threads = 1;

  void validate() const;
};

// Per-iteration observer; return false to stop before iterations run out.
using IterObserver = std::function<bool(int iteration, const NetHyper& psi)>;

// One training context: running prior, per-parameter pseudo-measurement
// store, batch schedule, and the message-passing engine. Centralized EM owns
// one; every federated client owns one.
class TrainContext {
 public:
  TrainContext(const Dataset& data, NetHyper hyper, const TrainConfig& cfg);

  // One pass over all minibatches: group-prior message pass, layered AMP,
  // then posterior-as-prior. Failed minibatches are skipped and counted.
  void run_estep(MetricsSink* sink = nullptr, int64_t iteration = 0);

  const NetHyper& hyper() const { return hyper_; }
  void set_hyper(const NetHyper& psi);

  int sample_count() const { return data_.size(); }
  // noise statistics over the last E-step pass
  double regression_sigma() const;
  double sq_sum() const { return sq_accum_; }
  int64_t sq_count() const { return sq_terms_; }
  const XiStats& xi_stats() const { return xi_; }
  int64_t skipped_batches() const { return skipped_; }
  const Eigen::MatrixXd& z_post_mean() const { return zm_; }
  const Eigen::MatrixXd& z_post_var() const { return zv_; }

 private:
  void build_priors(std::vector<LayerPriors>& priors) const;

  const Dataset& data_;
  TrainConfig cfg_;
  NetHyper hyper_;
  std::vector<std::vector<int>> batches_;
  DampEngine engine_;
  std::vector<LayerExtrinsics> ext_;
  std::vector<PerBatchState> batch_state_;
  double sq_accum_ = 0.0;
  int64_t sq_terms_ = 0;
  XiStats xi_;
  int64_t skipped_ = 0;
  Eigen::MatrixXd zm_, zv_;
};

struct EmResult {
  NetHyper posterior;
  Eigen::MatrixXd z_mean, z_var;  // training-sample output posteriors, last pass
  int iterations_run = 0;
};

EmResult run_em(const Dataset& train, NetHyper hyper, const TrainConfig& cfg,
                const SparsityPolicy& policy, const FTable* ftable = nullptr,
                MetricsSink* sink = nullptr, const IterObserver& observer = {});

// M-step pieces
void m_step_prior(NetHyper& psi, const NetHyper& posterior);
// returns S, the count of confidently active weight groups
int sparsity_control(NetHyper& psi, const SparsityPolicy& policy);
double noise_update_regression(double sum_sq_plus_var, int64_t n_terms);
// Gumbel moment match, table lookup, damped blend; empty when the pooled
// statistics have non-positive variance (update skipped, current v kept)
std::optional<double> noise_update_classification(double mu, double second_moment,
                                                  double current_v,
                                                  const FTable& table);

// Deterministic point-estimate forward pass. Groups whose activity is
// exactly zero contribute nothing; every other group uses its posterior
// means.
Eigen::MatrixXd predict(const NetHyper& psi, const Eigen::MatrixXd& x);
std::vector<int> predict_labels(const NetHyper& psi, const Eigen::MatrixXd& x);

double eval_nmse(const NetHyper& psi, const Dataset& test);
double eval_error_rate(const NetHyper& psi, const Dataset& test);
int active_weight_groups(const NetHyper& psi);

}  // namespace tdamp
