#include "tdamp/fed.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <iostream>
#include <stdexcept>

namespace tdamp {

void FedConfig::validate() const {
  if (clients < 1) throw std::runtime_error("need at least one client");
  if (rounds < 0) throw std::runtime_error("rounds must be >= 0");
  if (local_iterations < 1)
    throw std::runtime_error("local iterations must be positive");
}

nlohmann::json summary_to_json(const ClientSummary& s) {
  nlohmann::json j;
  j["format"] = "tdamp-client-summary";
  j["version"] = 1;
  j["params"] = hyper_to_json(s.params);
  j["sigma"] = s.sigma;
  j["mu"] = s.mu;
  j["second_moment"] = s.second_moment;
  j["samples"] = s.samples;
  j["present"] = s.present;
  return j;
}

ClientSummary summary_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "tdamp-client-summary" || j.value("version", 0) != 1)
    throw std::runtime_error("not a client summary record");
  ClientSummary s;
  s.params = hyper_from_json(j.at("params"));
  s.sigma = j.at("sigma");
  s.mu = j.at("mu");
  s.second_moment = j.at("second_moment");
  s.samples = j.at("samples");
  s.present = j.at("present");
  return s;
}

namespace {

constexpr double kRhoClamp = 1e-12;

double logit(double rho) {
  const double r = std::clamp(rho, kRhoClamp, 1.0 - kRhoClamp);
  return std::log(r) - std::log1p(-r);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<const ClientSummary*> present_sorted(
    const std::vector<ClientSummary>& summaries) {
  std::vector<const ClientSummary*> p;
  for (const auto& s : summaries) {
    if (s.present) p.push_back(&s);
  }
  if (p.empty()) throw std::runtime_error("no client summaries present");
  return p;
}

bool groups_identical(const std::vector<const ClientSummary*>& p,
                      size_t gi, bool bias) {
  const BGGroup& first = bias ? p[0]->params.biases[gi] : p[0]->params.weights[gi];
  for (size_t k = 1; k < p.size(); ++k) {
    const BGGroup& g = bias ? p[k]->params.biases[gi] : p[k]->params.weights[gi];
    if (g.rho != first.rho || g.mu != first.mu || g.v != first.v) return false;
  }
  return true;
}

BGGroup aggregate_group(const std::vector<const ClientSummary*>& p,
                        const std::vector<double>& w, size_t gi, bool bias) {
  // identical inputs pass through bit-exactly (covers the single-client and
  // duplicated-client degeneracies)
  if (groups_identical(p, gi, bias)) {
    return bias ? p[0]->params.biases[gi] : p[0]->params.weights[gi];
  }
  const size_t n = bias ? p[0]->params.biases[gi].size()
                        : p[0]->params.weights[gi].size();
  BGGroup out;
  out.mu.resize(n);
  out.v.resize(n);
  double lo = 0.0;
  for (size_t k = 0; k < p.size(); ++k) {
    const BGGroup& g = bias ? p[k]->params.biases[gi] : p[k]->params.weights[gi];
    lo += w[k] * logit(g.rho);
  }
  out.rho = sigmoid(lo);
  for (size_t e = 0; e < n; ++e) {
    double prec = 0.0, pm = 0.0;
    for (size_t k = 0; k < p.size(); ++k) {
      const BGGroup& g = bias ? p[k]->params.biases[gi] : p[k]->params.weights[gi];
      prec += w[k] / g.v[e];
      pm += w[k] * g.mu[e] / g.v[e];
    }
    out.v[e] = 1.0 / prec;
    out.mu[e] = pm / prec;
  }
  return out;
}

std::vector<double> sample_weights(const std::vector<const ClientSummary*>& p) {
  double total = 0.0;
  for (const auto* s : p) total += static_cast<double>(s->samples);
  std::vector<double> w(p.size());
  for (size_t k = 0; k < p.size(); ++k) w[k] = p[k]->samples / total;
  return w;
}

}  // namespace

NetHyper aggregate_posteriors(const std::vector<ClientSummary>& summaries) {
  auto p = present_sorted(summaries);
  if (p.size() == 1) return p[0]->params;  // degenerate federation, bit-exact

  const auto w = sample_weights(p);
  NetHyper out = p[0]->params;
  for (size_t gi = 0; gi < out.weights.size(); ++gi) {
    out.weights[gi] = aggregate_group(p, w, gi, false);
  }
  for (size_t gi = 0; gi < out.biases.size(); ++gi) {
    out.biases[gi] = aggregate_group(p, w, gi, true);
  }
  return out;
}

double aggregate_noise_regression(const std::vector<ClientSummary>& summaries) {
  auto p = present_sorted(summaries);
  const auto w = sample_weights(p);
  double v = 0.0;
  for (size_t k = 0; k < p.size(); ++k) v += w[k] * p[k]->sigma;
  return v;
}

std::pair<double, double> aggregate_noise_classification(
    const std::vector<ClientSummary>& summaries) {
  auto p = present_sorted(summaries);
  const auto w = sample_weights(p);
  double mu = 0.0, e = 0.0;
  for (size_t k = 0; k < p.size(); ++k) {
    mu += w[k] * p[k]->mu;
    e += w[k] * p[k]->second_moment;
  }
  return {mu, e};
}

FedResult run_federated(const Dataset& train, NetHyper hyper,
                        const TrainConfig& client_cfg, const FedConfig& fed,
                        const SparsityPolicy& policy, const FTable* ftable,
                        MetricsSink* sink, const RoundObserver& observer) {
  fed.validate();
  client_cfg.validate();
  policy.validate();

  FTable local_table;
  if (train.kind == TaskKind::classification && client_cfg.adapt_noise && !ftable) {
    local_table = FTable::build();
    ftable = &local_table;
  }

  const auto shards = make_shards(train.size(), fed.clients, client_cfg.seed);
  std::vector<Dataset> local_data;
  std::vector<std::unique_ptr<TrainContext>> clients;
  for (int k = 0; k < fed.clients; ++k) {
    local_data.push_back(take(train, shards[k]));
  }
  for (int k = 0; k < fed.clients; ++k) {
    TrainConfig cfg = client_cfg;
    cfg.seed = client_cfg.seed + static_cast<uint64_t>(k);
    clients.push_back(std::make_unique<TrainContext>(local_data[k], hyper, cfg));
  }

  NetHyper psi = std::move(hyper);
  int ran = 0;
  for (int round = 1; round <= fed.rounds; ++round) {
    ran = round;

    // broadcast, then local training with fixed hyperparameters
    std::vector<ClientSummary> summaries(fed.clients);
    for (int k = 0; k < fed.clients; ++k) {
      TrainContext& ctx = *clients[k];
      ClientSummary& s = summaries[k];
      try {
        ctx.set_hyper(psi);
        for (int t = 0; t < fed.local_iterations; ++t) {
          ctx.run_estep(nullptr, (round - 1) * fed.local_iterations + t + 1);
        }
        s.params = ctx.hyper();
        s.samples = ctx.sample_count();
        if (train.kind == TaskKind::regression) {
          s.sigma = ctx.regression_sigma();
        } else {
          const XiStats& xi = ctx.xi_stats();
          if (xi.count > 0) {
            s.mu = xi.sum_mean / static_cast<double>(xi.count);
            s.second_moment = xi.sum_sq / static_cast<double>(xi.count);
          }
        }
      } catch (const std::exception& e) {
        s.present = false;
        std::cerr << "client " << k << " dropped in round " << round << ": "
                  << e.what() << "\n";
      }
    }

    // aggregation and the server-side M-step
    psi = aggregate_posteriors(summaries);
    const int s_count = sparsity_control(psi, policy);
    if (client_cfg.adapt_noise) {
      if (train.kind == TaskKind::regression) {
        psi.noise_var = aggregate_noise_regression(summaries);
      } else {
        const auto [mu, e] = aggregate_noise_classification(summaries);
        const auto v = noise_update_classification(mu, e, psi.noise_var, *ftable);
        if (v) psi.noise_var = *v;
      }
    }

    if (sink) {
      sink->emit(round, "round", "noise_var", psi.noise_var);
      sink->emit(round, "round", "confident_groups", double(s_count));
      sink->emit(round, "round", "active_groups", double(active_weight_groups(psi)));
      for (int k = 0; k < fed.clients; ++k) {
        sink->emit(round, "client_" + std::to_string(k), "present",
                   summaries[k].present ? 1.0 : 0.0);
      }
    }
    if (observer && !observer(round, psi)) break;
  }
  return {std::move(psi), ran};
}

}  // namespace tdamp
