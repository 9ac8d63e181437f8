#include "tdamp/em.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

namespace tdamp {

void SparsityPolicy::validate() const {
  if (!(rho > 0.0 && rho <= 1.0)) throw std::runtime_error("rho must be in (0,1]");
  if (!(rho_0 > 0.0 && rho_0 < rho_th && rho_th < 1.0))
    throw std::runtime_error("need 0 < rho_0 < rho_th < 1");
}

void TrainConfig::validate() const {
  if (iterations < 0) throw std::runtime_error("iterations must be >= 0");
  if (batch_size < 1) throw std::runtime_error("batch size must be positive");
  if (!(damping > 0.0 && damping <= 1.0))
    throw std::runtime_error("damping must be in (0,1]");
  if (sweeps < 0) throw std::runtime_error("sweeps must be >= 0");
  if (lambda != 1.0)
    throw std::runtime_error("posterior-as-prior exponent must be 1");
  if (threads < 1) throw std::runtime_error("threads must be positive");
}

namespace {

void check_data_matches(const Dataset& data, const NetHyper& hyper) {
  if (data.feature_dim() != hyper.arch.in_dim())
    throw std::runtime_error("feature dimension does not match the network input");
  if (data.kind == TaskKind::regression) {
    if (data.y.rows() != hyper.arch.out_dim())
      throw std::runtime_error("target dimension does not match the network output");
  } else {
    if (data.n_classes != hyper.arch.out_dim())
      throw std::runtime_error("class count does not match the network output");
    if (hyper.arch.out_dim() < 2)
      throw std::runtime_error("classification needs at least two classes");
  }
}

}  // namespace

TrainContext::TrainContext(const Dataset& data, NetHyper hyper,
                           const TrainConfig& cfg)
    : data_(data),
      cfg_(cfg),
      hyper_(std::move(hyper)),
      engine_(hyper_.arch, DampConfig{cfg.damping, cfg.sweeps,
                                      1e-12, cfg.threads}) {
  cfg_.validate();
  hyper_.validate();
  check_data_matches(data_, hyper_);
  batches_ = make_batches(data_.size(), cfg_.batch_size, cfg_.seed, cfg_.shuffle);
  batch_state_.resize(batches_.size());
  ext_ = make_flat_extrinsics(hyper_.arch);
  const int n_out = hyper_.arch.out_dim();
  zm_ = Eigen::MatrixXd::Zero(n_out, data_.size());
  zv_ = Eigen::MatrixXd::Zero(n_out, data_.size());
}

void TrainContext::set_hyper(const NetHyper& psi) {
  hyper_ = psi;
  hyper_.validate();
}

void TrainContext::build_priors(std::vector<LayerPriors>& priors) const {
  const Architecture& arch = hyper_.arch;
  const int L = arch.depth();
  priors.resize(L);
  std::vector<GaussianMsg> msgs;
  for (int l = 1; l <= L; ++l) {
    LayerPriors& p = priors[l - 1];
    const int n_out = arch.widths[l], n_in = arch.widths[l - 1];
    p.w_rho.resize(n_out, n_in);
    p.w_mu.resize(n_out, n_in);
    p.w_v.resize(n_out, n_in);
    p.b_rho.resize(n_out);
    p.b_mu.resize(n_out);
    p.b_v.resize(n_out);
    const LayerExtrinsics& ex = ext_[l - 1];
    for (int n = 0; n < n_in; ++n) {
      const BGGroup& g = hyper_.weight_group(l, n);
      msgs.resize(n_out);
      for (int m = 0; m < n_out; ++m) msgs[m] = {ex.w_mean(m, n), ex.w_var(m, n)};
      const ExtrinsicSet b2a = spmp_extrinsic(g, msgs);
      for (int m = 0; m < n_out; ++m) {
        p.w_rho(m, n) = b2a.rho[m];
        p.w_mu(m, n) = b2a.mu[m];
        p.w_v(m, n) = b2a.v[m];
      }
    }
    for (int m = 0; m < n_out; ++m) {
      const BGGroup& g = hyper_.bias_scalar(l, m);
      p.b_rho(m) = g.rho;
      p.b_mu(m) = g.mu[0];
      p.b_v(m) = g.v[0];
    }
  }
}

void TrainContext::run_estep(MetricsSink* sink, int64_t iteration) {
  sq_accum_ = 0.0;
  sq_terms_ = 0;
  xi_ = XiStats{};

  if (cfg_.reshuffle_each_iteration && iteration > 0) {
    batches_ = make_batches(data_.size(), cfg_.batch_size,
                            cfg_.seed + static_cast<uint64_t>(iteration),
                            cfg_.shuffle);
    batch_state_.assign(batches_.size(), PerBatchState{});  // indices moved
  }

  const Architecture& arch = hyper_.arch;
  const int L = arch.depth();
  std::vector<LayerPriors> priors;
  std::vector<GaussianMsg> msgs;

  for (size_t b = 0; b < batches_.size(); ++b) {
    const std::vector<int>& idx = batches_[b];
    const int nb = static_cast<int>(idx.size());

    Eigen::MatrixXd xb(data_.x.rows(), nb);
    for (int i = 0; i < nb; ++i) xb.col(i) = data_.x.col(idx[i]);
    Eigen::MatrixXd yb;
    std::vector<int> lb;
    Head head;
    head.kind = data_.kind;
    head.noise_var = hyper_.noise_var;
    if (data_.kind == TaskKind::regression) {
      yb.resize(data_.y.rows(), nb);
      for (int i = 0; i < nb; ++i) yb.col(i) = data_.y.col(idx[i]);
      head.y = &yb;
    } else {
      lb.resize(nb);
      for (int i = 0; i < nb; ++i) lb[i] = data_.labels[idx[i]];
      head.labels = &lb;
    }

    // group-prior message pass feeding the engine
    build_priors(priors);

    const std::vector<LayerExtrinsics> ext_backup = ext_;
    PerBatchState* state = cfg_.persist_messages ? &batch_state_[b] : nullptr;
    const DampDiagnostics diag = engine_.run(xb, head, priors, ext_, state);
    if (!diag.ok) {
      ext_ = ext_backup;
      if (state) *state = PerBatchState{};  // cold restart after a failure
      ++skipped_;
      if (sink) sink->emit(iteration, "e_step", "skipped_batch", double(b));
      std::cerr << "minibatch " << b << " skipped: " << diag.error << "\n";
      continue;
    }

    // posterior over the fresh pseudo-measurements, then posterior-as-prior
    NetHyper post = hyper_;
    for (int l = 1; l <= L; ++l) {
      const int n_out = arch.widths[l], n_in = arch.widths[l - 1];
      const LayerExtrinsics& ex = ext_[l - 1];
      for (int n = 0; n < n_in; ++n) {
        msgs.resize(n_out);
        for (int m = 0; m < n_out; ++m)
          msgs[m] = {ex.w_mean(m, n), ex.w_var(m, n)};
        post.weights[arch.w_offset(l) + n] =
            group_posterior(hyper_.weight_group(l, n), msgs);
      }
      for (int m = 0; m < n_out; ++m) {
        post.biases[arch.b_offset(l) + m] = bias_posterior(
            hyper_.bias_scalar(l, m), {ex.b_mean(m), ex.b_var(m)});
      }
    }
    pasp_update(hyper_, std::move(post), cfg_.lambda);

    // output posteriors and noise statistics
    const ArrXX& zm = engine_.z_mean();
    const ArrXX& zv = engine_.z_var();
    for (int i = 0; i < nb; ++i) {
      zm_.col(idx[i]) = zm.col(i).matrix();
      zv_.col(idx[i]) = zv.col(i).matrix();
    }
    if (data_.kind == TaskKind::regression) {
      for (int i = 0; i < nb; ++i) {
        for (int m = 0; m < yb.rows(); ++m) {
          const double r = yb(m, i) - zm(m, i);
          sq_accum_ += r * r + zv(m, i);
          ++sq_terms_;
        }
      }
    } else {
      xi_.merge(engine_.xi());
    }
  }
}

double TrainContext::regression_sigma() const {
  if (sq_terms_ == 0) throw std::runtime_error("no output posteriors collected");
  return sq_accum_ / static_cast<double>(sq_terms_);
}

void m_step_prior(NetHyper& psi, const NetHyper& posterior) {
  psi.weights = posterior.weights;
  psi.biases = posterior.biases;
}

int sparsity_control(NetHyper& psi, const SparsityPolicy& policy) {
  int s = 0;
  for (const auto& g : psi.weights) {
    if (g.rho > policy.rho_th) ++s;
  }
  if (s > policy.rho * psi.arch.q_w()) {
    for (auto& g : psi.weights) {
      g.rho = (g.rho >= policy.rho_th) ? policy.rho_0 : 0.0;
    }
  }
  return s;
}

double noise_update_regression(double sum_sq_plus_var, int64_t n_terms) {
  if (n_terms <= 0) throw std::invalid_argument("noise update over an empty set");
  return sum_sq_plus_var / static_cast<double>(n_terms);
}

std::optional<double> noise_update_classification(double mu, double second_moment,
                                                  double current_v,
                                                  const FTable& table) {
  const auto g = gumbel_fit(mu, second_moment);
  if (!g) return std::nullopt;
  const double v0 = g->scale * g->scale * table.lookup(g->location / g->scale);
  return 0.5 * v0 + 0.5 * current_v;
}

EmResult run_em(const Dataset& train, NetHyper hyper, const TrainConfig& cfg,
                const SparsityPolicy& policy, const FTable* ftable,
                MetricsSink* sink, const IterObserver& observer) {
  cfg.validate();
  policy.validate();

  FTable local_table;
  if (train.kind == TaskKind::classification && cfg.adapt_noise && !ftable) {
    local_table = FTable::build();
    ftable = &local_table;
  }

  TrainContext ctx(train, std::move(hyper), cfg);
  int ran = 0;
  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    ctx.run_estep(sink, iter);
    ran = iter;

    NetHyper psi = ctx.hyper();
    m_step_prior(psi, ctx.hyper());
    const int s = sparsity_control(psi, policy);
    if (cfg.adapt_noise) {
      if (train.kind == TaskKind::regression) {
        psi.noise_var = noise_update_regression(ctx.sq_sum(), ctx.sq_count());
      } else {
        const XiStats& xi = ctx.xi_stats();
        if (xi.count > 0) {
          const double n = static_cast<double>(xi.count);
          const auto v = noise_update_classification(
              xi.sum_mean / n, xi.sum_sq / n, psi.noise_var, *ftable);
          if (v) {
            psi.noise_var = *v;
          } else if (sink) {
            sink->emit(iter, "m_step", "noise_update_skipped", 1.0);
          }
        }
      }
    }
    ctx.set_hyper(psi);

    if (sink) {
      sink->emit(iter, "m_step", "noise_var", psi.noise_var);
      sink->emit(iter, "m_step", "confident_groups", double(s));
      sink->emit(iter, "m_step", "active_groups",
                 double(active_weight_groups(psi)));
      sink->emit(iter, "m_step", "skipped_batches",
                 double(ctx.skipped_batches()));
    }
    if (observer && !observer(iter, ctx.hyper())) break;
  }

  return {ctx.hyper(), ctx.z_post_mean(), ctx.z_post_var(), ran};
}

Eigen::MatrixXd predict(const NetHyper& psi, const Eigen::MatrixXd& x) {
  const Architecture& arch = psi.arch;
  Eigen::MatrixXd u = x;
  for (int l = 1; l <= arch.depth(); ++l) {
    const int n_out = arch.widths[l], n_in = arch.widths[l - 1];
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n_out, n_in);
    for (int n = 0; n < n_in; ++n) {
      const BGGroup& g = psi.weight_group(l, n);
      if (g.rho > 0.0) {
        for (int m = 0; m < n_out; ++m) w(m, n) = g.mu[m];
      }
    }
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n_out);
    for (int m = 0; m < n_out; ++m) {
      const BGGroup& g = psi.bias_scalar(l, m);
      if (g.rho > 0.0) b(m) = g.mu[0];
    }
    Eigen::MatrixXd z = (w * u).colwise() + b;
    if (l < arch.depth()) {
      u = z.cwiseMax(0.0);
    } else {
      u = std::move(z);
    }
  }
  return u;
}

std::vector<int> predict_labels(const NetHyper& psi, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd z = predict(psi, x);
  std::vector<int> out(z.cols());
  for (int i = 0; i < z.cols(); ++i) {
    int best = 0;
    for (int m = 1; m < z.rows(); ++m) {
      if (z(m, i) > z(best, i)) best = m;
    }
    out[i] = best + 1;
  }
  return out;
}

double eval_nmse(const NetHyper& psi, const Dataset& test) {
  if (test.kind != TaskKind::regression)
    throw std::runtime_error("NMSE needs a regression dataset");
  const Eigen::MatrixXd pred = predict(psi, test.x);
  double se = (pred - test.y).array().square().sum();
  double var = 0.0;
  for (int m = 0; m < test.y.rows(); ++m) {
    const double mean = test.y.row(m).mean();
    var += (test.y.row(m).array() - mean).square().sum();
  }
  return se / var;
}

double eval_error_rate(const NetHyper& psi, const Dataset& test) {
  if (test.kind != TaskKind::classification)
    throw std::runtime_error("error rate needs a classification dataset");
  const std::vector<int> pred = predict_labels(psi, test.x);
  int64_t wrong = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    wrong += pred[i] != test.labels[i];
  }
  return double(wrong) / double(pred.size());
}

int active_weight_groups(const NetHyper& psi) {
  int n = 0;
  for (const auto& g : psi.weights) n += g.rho > 0.0;
  return n;
}

}  // namespace tdamp
