#pragma once

#include <memory>

#include "tdamp/checkpoint.hpp"
#include "tdamp/em.hpp"

namespace tdamp {

struct FedConfig {
  int clients = 4;          // K
  int rounds = 50;          // communication rounds
  int local_iterations = 10;  // inner E-step passes per client per round

  void validate() const;
};

// Uplink payload: full posterior parameter set plus the noise statistics the
// server needs, independent of the client's sample count beyond two scalars.
struct ClientSummary {
  NetHyper params;
  double sigma = 0.0;  // regression noise statistic
  double mu = 0.0;     // classification margin statistics
  double second_moment = 0.0;
  int64_t samples = 0;
  bool present = true;
};

nlohmann::json summary_to_json(const ClientSummary& s);
ClientSummary summary_from_json(const nlohmann::json& j);

// Weighted geometric average of the client posteriors: precision-weighted
// Gaussian parts, weighted log-odds for the activities. Weights are sample
// fractions over the present clients; a single present client passes through
// bit-exactly.
NetHyper aggregate_posteriors(const std::vector<ClientSummary>& summaries);

double aggregate_noise_regression(const std::vector<ClientSummary>& summaries);
// pooled (mu, E) for the Gumbel-matched update
std::pair<double, double> aggregate_noise_classification(
    const std::vector<ClientSummary>& summaries);

struct FedResult {
  NetHyper posterior;
  int rounds_run = 0;
};

// Per-round observer; return false to stop early.
using RoundObserver = std::function<bool(int round, const NetHyper& psi)>;

FedResult run_federated(const Dataset& train, NetHyper hyper,
                        const TrainConfig& client_cfg, const FedConfig& fed,
                        const SparsityPolicy& policy,
                        const FTable* ftable = nullptr,
                        MetricsSink* sink = nullptr,
                        const RoundObserver& observer = {});

}  // namespace tdamp
