#include "tdamp/damp.hpp"

#include <cmath>
#include <sstream>

#ifdef TDAMP_HAVE_OPENMP
#include <omp.h>
#endif

namespace tdamp {

namespace {

constexpr double kTinyVar = 1e-300;

inline double logsumexp2(double a, double b) {
  const double m = std::max(a, b);
  if (m == -kInf) return -kInf;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double log_density_at_zero(const GaussianMsg& g) {
  // flat factors contribute the same constant to both branches and cancel
  return g.flat() ? 0.0 : log_norm_pdf(0.0, g.mean, g.var);
}

}  // namespace

CouplingMoments relu_u_moments(const GaussianMsg& forward, const GaussianMsg& backward) {
  CouplingMoments out;
  if (forward.var <= 0.0) {  // pre-activation pinned; backward cannot move it
    out.mean = std::max(forward.mean, 0.0);
    out.var = 0.0;
    out.zero_mass = forward.mean > 0.0 ? 0.0 : 1.0;
    return out;
  }

  // zero branch: P(z <= 0 | forward) times the backward density at u = 0
  const double sd = std::sqrt(forward.var);
  double log_w0 = log_q_func(forward.mean / sd) + log_density_at_zero(backward);

  // positive branch: convolution weight times the positively truncated product
  const GaussianMsg comb = gauss_product(forward, backward);
  const TruncMoments tp = trunc_moments(comb, TruncSide::positive);
  double log_wp = tp.mass > 0.0 ? std::log(tp.mass) : -kInf;
  if (!backward.flat()) {
    log_wp += log_norm_pdf(0.0, forward.mean - backward.mean,
                           forward.var + backward.var);
  }

  const double lse = logsumexp2(log_w0, log_wp);
  if (lse == -kInf) {
    out.flagged = true;
    if (forward.mean <= 0.0) {
      out.mean = 0.0;
      out.var = 0.0;
      out.zero_mass = 1.0;
    } else {
      out.mean = std::max(comb.mean, 0.0);
      out.var = comb.var;
      out.zero_mass = 0.0;
    }
    return out;
  }
  const double pp = std::exp(log_wp - lse);
  out.zero_mass = std::exp(log_w0 - lse);
  out.mean = pp * tp.mean;
  const double e2 = pp * (tp.var + tp.mean * tp.mean);
  out.var = std::max(e2 - out.mean * out.mean, 0.0);
  return out;
}

CouplingMoments relu_z_moments(const GaussianMsg& forward, const GaussianMsg& backward) {
  CouplingMoments out;
  if (forward.var <= 0.0) {
    out.mean = forward.mean;
    out.var = 0.0;
    out.zero_mass = forward.mean <= 0.0 ? 1.0 : 0.0;
    return out;
  }

  // negative branch: forward restricted to z <= 0, backward density at 0
  const TruncMoments tn = trunc_moments(forward, TruncSide::negative);
  double log_wn = (tn.mass > 0.0 ? std::log(tn.mass) : -kInf) +
                  log_density_at_zero(backward);

  // positive branch: product of forward and backward restricted to z > 0
  const GaussianMsg comb = gauss_product(forward, backward);
  const TruncMoments tp = trunc_moments(comb, TruncSide::positive);
  double log_wp = tp.mass > 0.0 ? std::log(tp.mass) : -kInf;
  if (!backward.flat()) {
    log_wp += log_norm_pdf(0.0, forward.mean - backward.mean,
                           forward.var + backward.var);
  }

  const double lse = logsumexp2(log_wn, log_wp);
  if (lse == -kInf) {
    out.flagged = true;
    if (forward.mean <= 0.0) {
      out.mean = tn.degenerate ? std::min(forward.mean, 0.0) : tn.mean;
      out.var = tn.degenerate ? 0.0 : tn.var;
      out.zero_mass = 1.0;
    } else {
      out.mean = tp.degenerate ? std::max(comb.mean, 0.0) : tp.mean;
      out.var = tp.degenerate ? 0.0 : tp.var;
      out.zero_mass = 0.0;
    }
    return out;
  }
  const double pn = std::exp(log_wn - lse);
  const double pp = std::exp(log_wp - lse);
  out.zero_mass = pn;
  out.mean = pn * tn.mean + pp * tp.mean;
  const double e2 = pn * (tn.var + tn.mean * tn.mean) +
                    pp * (tp.var + tp.mean * tp.mean);
  out.var = std::max(e2 - out.mean * out.mean, 0.0);
  return out;
}

ClassHeadResult head_classification_sample(const double* pm, const double* pv,
                                           int n_classes, int label_1based,
                                           double v) {
  ClassHeadResult res;
  res.z_mean.assign(pm, pm + n_classes);
  res.z_var.assign(pv, pv + n_classes);
  const int y = label_1based - 1;

  // tilt the label class by every other class; Gaussian-ize each tilt and
  // divide the pseudo-prior back out to get the per-class factor messages
  const GaussianMsg label_prior{pm[y], pv[y]};
  const double label_prec = 1.0 / pv[y];
  const double label_mp = pm[y] / pv[y];
  std::vector<double> h_prec(n_classes, 0.0), h_mp(n_classes, 0.0);
  double post_prec = label_prec, post_mp = label_mp;
  for (int m = 0; m < n_classes; ++m) {
    if (m == y) continue;
    const double scale = std::sqrt(v + pv[m]);
    const TiltedMoments t = skew_normal_match(label_prior, pm[m], scale,
                                              TiltSlope::rising);
    if (t.degenerate) {
      ++res.degenerate_tilts;
      continue;  // untilted: factor message stays flat
    }
    double hp = 1.0 / t.moments.var - label_prec;
    double hm = t.moments.mean / t.moments.var - label_mp;
    if (!(hp > 0.0)) {  // numerically uninformative tilt
      hp = 0.0;
      hm = 0.0;
    }
    h_prec[m] = hp;
    h_mp[m] = hm;
    post_prec += hp;
    post_mp += hm;
  }
  res.z_var[y] = 1.0 / post_prec;
  res.z_mean[y] = post_mp / post_prec;

  // tilt each non-label class by the extrinsic label message
  for (int m = 0; m < n_classes; ++m) {
    if (m == y) continue;
    const double ep = post_prec - h_prec[m];
    const double em = post_mp - h_mp[m];
    const double ev = 1.0 / ep;
    const double scale = std::sqrt(v + ev);
    const TiltedMoments t = skew_normal_match({pm[m], pv[m]}, em * ev, scale,
                                              TiltSlope::falling);
    if (t.degenerate) {
      ++res.degenerate_tilts;
      continue;  // fall back to the untilted pseudo-prior
    }
    res.z_mean[m] = t.moments.mean;
    res.z_var[m] = t.moments.var;
  }
  return res;
}

std::vector<LayerExtrinsics> make_flat_extrinsics(const Architecture& arch) {
  std::vector<LayerExtrinsics> ext(arch.depth());
  for (int l = 1; l <= arch.depth(); ++l) {
    auto& e = ext[l - 1];
    const int rows = arch.widths[l], cols = arch.widths[l - 1];
    e.w_mean = ArrXX::Zero(rows, cols);
    e.w_var = ArrXX::Constant(rows, cols, kInf);
    e.b_mean = ArrX::Zero(rows);
    e.b_var = ArrX::Constant(rows, kInf);
  }
  return ext;
}

DampEngine::DampEngine(Architecture arch, DampConfig cfg)
    : arch_(std::move(arch)), cfg_(cfg) {
  const int L = arch_.depth();
  u_mean_.resize(L);
  u_var_.resize(L);
  w_mean_.resize(L);
  w_var_.resize(L);
  b_mean_.resize(L);
  b_var_.resize(L);
  vbar_.resize(L);
  phat_.resize(L);
  vfull_.resize(L);
  shat_.resize(L);
  vs_.resize(L);
  rhat_.resize(L);
  rvar_.resize(L);
  z_mean_.resize(L);
  z_var_.resize(L);
}

void DampEngine::resize_batch(int batch) {
  batch_ = batch;
  const int L = arch_.depth();
  for (int li = 0; li < L; ++li) {
    const int n_out = arch_.widths[li + 1];
    const int n_in = arch_.widths[li];
    u_mean_[li].resize(n_in, batch);
    u_var_[li].resize(n_in, batch);
    vbar_[li].resize(n_out, batch);
    phat_[li].resize(n_out, batch);
    vfull_[li].resize(n_out, batch);
    shat_[li] = ArrXX::Zero(n_out, batch);
    vs_[li] = ArrXX::Zero(n_out, batch);
    rhat_[li] = ArrXX::Zero(n_in, batch);
    rvar_[li] = ArrXX::Constant(n_in, batch, kInf);
    z_mean_[li].resize(n_out, batch);
    z_var_[li].resize(n_out, batch);
  }
}

void DampEngine::forward_layer(int l, const std::vector<LayerPriors>& priors,
                               const std::vector<LayerExtrinsics>& ext,
                               bool first_sweep, DampDiagnostics& diag) {
  const int li = l - 1;
  const int n_out = arch_.widths[l];
  const int n_in = arch_.widths[l - 1];

  // activation moments entering this layer
  if (li > 0) {
    ArrXX& um = u_mean_[li];
    ArrXX& uv = u_var_[li];
    const ArrXX& fm = phat_[li - 1];
    const ArrXX& fv = vfull_[li - 1];
    const ArrXX& bm = rhat_[li];
    const ArrXX& bv = rvar_[li];
    int64_t flagged = 0;
#ifdef TDAMP_HAVE_OPENMP
#pragma omp parallel for reduction(+ : flagged) if (cfg_.threads > 1) \
    schedule(static) collapse(2)
#endif
    for (int i = 0; i < batch_; ++i) {
      for (int n = 0; n < n_in; ++n) {
        const CouplingMoments cm =
            relu_u_moments({fm(n, i), fv(n, i)}, {bm(n, i), bv(n, i)});
        um(n, i) = cm.mean;
        uv(n, i) = cm.var;
        flagged += cm.flagged;
      }
    }
    diag.flagged_couplings += flagged;
  }

  // parameter posterior moments from the independent priors and the
  // current pseudo-measurements
  const LayerPriors& pr = priors[li];
  const LayerExtrinsics& ex = ext[li];
  w_mean_[li].resize(n_out, n_in);
  w_var_[li].resize(n_out, n_in);
  {
    ArrXX& wm = w_mean_[li];
    ArrXX& wv = w_var_[li];
#ifdef TDAMP_HAVE_OPENMP
#pragma omp parallel for if (cfg_.threads > 1) schedule(static)
#endif
    for (int n = 0; n < n_in; ++n) {
      for (int m = 0; m < n_out; ++m) {
        const BGMoments b = bg_marginal(pr.w_rho(m, n), pr.w_mu(m, n),
                                        pr.w_v(m, n), {ex.w_mean(m, n), ex.w_var(m, n)});
        wm(m, n) = b.mean;
        wv(m, n) = b.var;
      }
    }
  }
  b_mean_[li].resize(n_out);
  b_var_[li].resize(n_out);
  for (int m = 0; m < n_out; ++m) {
    const BGMoments b = bg_marginal(pr.b_rho(m), pr.b_mu(m), pr.b_v(m),
                                    {ex.b_mean(m), ex.b_var(m)});
    b_mean_[li](m) = b.mean;
    b_var_[li](m) = b.var;
  }

  const ArrXX& um = u_mean_[li];
  const ArrXX& uv = u_var_[li];
  const ArrXX& wm = w_mean_[li];
  const ArrXX& wv = w_var_[li];

  ArrXX vbar = (wm.square().matrix() * uv.matrix() +
                wv.matrix() * um.square().matrix())
                   .array();
  vbar.colwise() += b_var_[li];
  ArrXX pbar = (wm.matrix() * um.matrix()).array();
  pbar.colwise() += b_mean_[li];
  ArrXX vfull_cand = vbar + (wv.matrix() * uv.matrix()).array();
  ArrXX phat_cand = pbar - shat_[li] * vbar;

  vbar_[li] = std::move(vbar);
  if (first_sweep) {
    phat_[li] = std::move(phat_cand);
    vfull_[li] = std::move(vfull_cand);
  } else {
    const double a = cfg_.damping;
    phat_[li] = a * phat_cand + (1.0 - a) * phat_[li];
    vfull_[li] = a * vfull_cand + (1.0 - a) * vfull_[li];
  }

  if (!phat_[li].allFinite() || !vfull_[li].allFinite()) {
    for (int i = 0; i < batch_ && diag.ok; ++i) {
      for (int m = 0; m < n_out; ++m) {
        if (!std::isfinite(phat_[li](m, i)) || !std::isfinite(vfull_[li](m, i))) {
          std::ostringstream os;
          os << "non-finite pseudo-prior at layer " << l << " unit " << m
             << " sample " << i;
          diag.ok = false;
          diag.error = os.str();
          break;
        }
      }
    }
  }
}

void DampEngine::backward_layer(int l, const Head& head, bool first_sweep,
                                bool last_sweep, std::vector<LayerExtrinsics>& ext,
                                DampDiagnostics& diag) {
  const int li = l - 1;
  const int n_out = arch_.widths[l];
  const int n_in = arch_.widths[l - 1];
  const int L = arch_.depth();

  ArrXX& zm = z_mean_[li];
  ArrXX& zv = z_var_[li];

  if (l == L) {
    if (head.kind == TaskKind::regression) {
      const Eigen::MatrixXd& y = *head.y;
      const double v = head.noise_var;
      for (int i = 0; i < batch_; ++i) {
        for (int m = 0; m < n_out; ++m) {
          const double pv = vfull_[li](m, i);
          if (pv <= kTinyVar) {
            zm(m, i) = phat_[li](m, i);
            zv(m, i) = 0.0;
            continue;
          }
          const double prec = 1.0 / pv + 1.0 / v;
          zv(m, i) = 1.0 / prec;
          zm(m, i) = zv(m, i) * (phat_[li](m, i) / pv + y(m, i) / v);
        }
      }
    } else {
      const std::vector<int>& labels = *head.labels;
      std::vector<double> pm(n_out), pv(n_out);
      for (int i = 0; i < batch_; ++i) {
        for (int m = 0; m < n_out; ++m) {
          pm[m] = phat_[li](m, i);
          pv[m] = std::max(vfull_[li](m, i), kTinyVar);
        }
        const ClassHeadResult r = head_classification_sample(
            pm.data(), pv.data(), n_out, labels[i], head.noise_var);
        diag.degenerate_tilts += r.degenerate_tilts;
        for (int m = 0; m < n_out; ++m) {
          zm(m, i) = r.z_mean[m];
          zv(m, i) = r.z_var[m];
        }
        if (last_sweep) {
          const int y0 = labels[i] - 1;
          for (int m = 0; m < n_out; ++m) {
            if (m == y0) continue;
            xi_.add(r.z_mean[m] - r.z_mean[y0], r.z_var[m] + r.z_var[y0]);
          }
        }
      }
    }
  } else {
    const ArrXX& bm = rhat_[li + 1];
    const ArrXX& bv = rvar_[li + 1];
    int64_t flagged = 0;
#ifdef TDAMP_HAVE_OPENMP
#pragma omp parallel for reduction(+ : flagged) if (cfg_.threads > 1) \
    schedule(static) collapse(2)
#endif
    for (int i = 0; i < batch_; ++i) {
      for (int m = 0; m < n_out; ++m) {
        const CouplingMoments cm = relu_z_moments(
            {phat_[li](m, i), vfull_[li](m, i)}, {bm(m, i), bv(m, i)});
        zm(m, i) = cm.mean;
        zv(m, i) = cm.var;
        flagged += cm.flagged;
      }
    }
    diag.flagged_couplings += flagged;
  }

  // residuals
  ArrXX shat_cand(n_out, batch_), vs_cand(n_out, batch_);
  for (int i = 0; i < batch_; ++i) {
    for (int m = 0; m < n_out; ++m) {
      const double pv = vfull_[li](m, i);
      if (pv <= kTinyVar) {
        shat_cand(m, i) = 0.0;
        vs_cand(m, i) = 0.0;
      } else {
        shat_cand(m, i) = (zm(m, i) - phat_[li](m, i)) / pv;
        vs_cand(m, i) = (1.0 - zv(m, i) / pv) / pv;
      }
    }
  }
  if (first_sweep) {
    shat_[li] = std::move(shat_cand);
    vs_[li] = std::move(vs_cand);
  } else {
    const double a = cfg_.damping;
    shat_[li] = a * shat_cand + (1.0 - a) * shat_[li];
    vs_[li] = a * vs_cand + (1.0 - a) * vs_[li];
  }

  const ArrXX& um = u_mean_[li];
  const ArrXX& uv = u_var_[li];
  const ArrXX& wm = w_mean_[li];
  const ArrXX& wv = w_var_[li];
  const double floor = cfg_.precision_floor;

  // weight pseudo-measurements; zero aggregated precision means no evidence,
  // which is a flat message rather than a huge-variance one
  {
    ArrXX prec_raw = (vs_[li].matrix() * um.square().matrix().transpose()).array();
    auto no_evidence = prec_raw <= 0.0;
    diag.clamped_precisions += no_evidence.count();
    ArrXX var = prec_raw.max(floor).inverse();
    ArrXX corr = (vs_[li].matrix() * uv.matrix().transpose()).array();
    ArrXX cross = (shat_[li].matrix() * um.matrix().transpose()).array();
    ArrXX mean = wm * (1.0 - var * corr) + var * cross;
    ext[li].w_var = no_evidence.select(kInf, var);
    ext[li].w_mean = no_evidence.select(0.0, mean);
  }

  // bias pseudo-measurements
  {
    ArrX prec_raw = vs_[li].rowwise().sum();
    auto no_evidence = prec_raw <= 0.0;
    diag.clamped_precisions += no_evidence.count();
    ArrX var = prec_raw.max(floor).inverse();
    ArrX mean = b_mean_[li] + var * shat_[li].rowwise().sum();
    ext[li].b_var = no_evidence.select(kInf, var);
    ext[li].b_mean = no_evidence.select(0.0, mean);
  }

  // backward activation message to the previous interface
  if (l >= 2) {
    ArrXX prec_raw = (wm.square().matrix().transpose() * vs_[li].matrix()).array();
    auto no_evidence = prec_raw <= 0.0;
    diag.clamped_precisions += no_evidence.count();
    ArrXX var = prec_raw.max(floor).inverse();
    ArrXX corr = (wv.matrix().transpose() * vs_[li].matrix()).array();
    ArrXX cross = (wm.matrix().transpose() * shat_[li].matrix()).array();
    ArrXX mean = um * (1.0 - var * corr) + var * cross;
    rvar_[li] = no_evidence.select(kInf, var);
    rhat_[li] = no_evidence.select(0.0, mean);
  }
}

DampDiagnostics DampEngine::run(const Eigen::MatrixXd& x, const Head& head,
                                const std::vector<LayerPriors>& priors,
                                std::vector<LayerExtrinsics>& ext,
                                PerBatchState* state) {
  DampDiagnostics diag;
  xi_ = XiStats{};
  if (cfg_.sweeps <= 0) return diag;

  const int L = arch_.depth();
  resize_batch(static_cast<int>(x.cols()));
  u_mean_[0] = x.array();
  u_var_[0] = ArrXX::Zero(x.rows(), x.cols());

  bool warm = false;
  if (state && state->valid &&
      state->shat.size() == size_t(L) &&
      state->shat[0].cols() == batch_) {
    phat_ = state->phat;
    vfull_ = state->vfull;
    shat_ = state->shat;
    vs_ = state->vs;
    rhat_ = state->rhat;
    rvar_ = state->rvar;
    warm = true;
  }

  for (int sweep = 0; sweep < cfg_.sweeps; ++sweep) {
    const bool first = (sweep == 0) && !warm;
    const bool last = (sweep == cfg_.sweeps - 1);
    for (int l = 1; l <= L; ++l) {
      forward_layer(l, priors, ext, first, diag);
      if (!diag.ok) return diag;
    }
    for (int l = L; l >= 1; --l) {
      backward_layer(l, head, first, last, ext, diag);
      if (!diag.ok) return diag;
    }
  }

  if (state) {
    state->phat = phat_;
    state->vfull = vfull_;
    state->shat = shat_;
    state->vs = vs_;
    state->rhat = rhat_;
    state->rvar = rvar_;
    state->valid = true;
  }
  return diag;
}

}  // namespace tdamp
