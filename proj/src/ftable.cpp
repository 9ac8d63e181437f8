#include "tdamp/ftable.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "tdamp/gaussian.hpp"

namespace tdamp {

namespace {

// 16-point Gauss-Legendre nodes/weights on [-1, 1]
constexpr double kGlNode[16] = {
    -0.9894009349916499, -0.9445750230732326, -0.8656312023878318,
    -0.7554044083550030, -0.6178762444026438, -0.4580167776572274,
    -0.2816035507792589, -0.0950125098376374, 0.0950125098376374,
    0.2816035507792589,  0.4580167776572274,  0.6178762444026438,
    0.7554044083550030,  0.8656312023878318,  0.9445750230732326,
    0.9894009349916499};
constexpr double kGlWeight[16] = {
    0.0271524594117541, 0.0622535239386479, 0.0951585116824928,
    0.1246289712555339, 0.1495959888165767, 0.1691565193950025,
    0.1826034150449236, 0.1894506104550685, 0.1894506104550685,
    0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479,
    0.0271524594117541};

}  // namespace

double FTable::objective(double mu_std, double v, const FTableConfig& cfg) {
  // E[log Q((mu + Z)/sqrt(v))], Z standard min-Gumbel with density exp(z - e^z)
  const double inv_sd = 1.0 / std::sqrt(v);
  const double panel = (cfg.z_hi - cfg.z_lo) / cfg.quad_panels;
  double total = 0.0;
  for (int p = 0; p < cfg.quad_panels; ++p) {
    const double a = cfg.z_lo + p * panel;
    const double half = 0.5 * panel, mid = a + half;
    double acc = 0.0;
    for (int i = 0; i < 16; ++i) {
      const double z = mid + half * kGlNode[i];
      const double w = std::exp(z - std::exp(z));
      acc += kGlWeight[i] * w * log_q_func((mu_std + z) * inv_sd);
    }
    total += half * acc;
  }
  return total;
}

FTable FTable::build(const FTableConfig& cfg) {
  FTable t;
  t.cfg_ = cfg;
  t.grid_.resize(cfg.grid_points);
  t.value_.resize(cfg.grid_points);
  t.edge_.assign(cfg.grid_points, 0);

  const double log_lo = std::log(cfg.v_lo), log_hi = std::log(cfg.v_hi);
  const double gr = 0.6180339887498949;

  for (int gi = 0; gi < cfg.grid_points; ++gi) {
    const double mu = cfg.grid_lo + (cfg.grid_hi - cfg.grid_lo) * gi /
                                        (cfg.grid_points - 1);
    t.grid_[gi] = mu;

    // coarse scan on a log grid
    int best = 0;
    double best_val = -kInf;
    for (int i = 0; i < cfg.coarse_points; ++i) {
      const double lv = log_lo + (log_hi - log_lo) * i / (cfg.coarse_points - 1);
      const double val = objective(mu, std::exp(lv), cfg);
      if (val > best_val) {
        best_val = val;
        best = i;
      }
    }
    if (best_val > -1e-7) {
      // no effective mass above zero: the objective is flat at the quadrature
      // noise level and shrinking the variance can only help
      t.value_[gi] = cfg.v_lo;
      t.edge_[gi] = 1;
      continue;
    }
    if (best == 0 || best == cfg.coarse_points - 1) {
      // optimum pinned at the bracket edge: store the edge value, flag it
      t.value_[gi] = (best == 0) ? cfg.v_lo : cfg.v_hi;
      t.edge_[gi] = 1;
      continue;
    }

    // golden-section refine between the neighbors of the coarse winner
    const double step = (log_hi - log_lo) / (cfg.coarse_points - 1);
    double a = log_lo + (best - 1) * step;
    double b = log_lo + (best + 1) * step;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = objective(mu, std::exp(c), cfg);
    double fd = objective(mu, std::exp(d), cfg);
    for (int it = 0; it < cfg.refine_iters; ++it) {
      if (fc > fd) {
        b = d; d = c; fd = fc;
        c = b - gr * (b - a);
        fc = objective(mu, std::exp(c), cfg);
      } else {
        a = c; c = d; fc = fd;
        d = a + gr * (b - a);
        fd = objective(mu, std::exp(d), cfg);
      }
    }
    t.value_[gi] = std::exp(0.5 * (a + b));
  }
  return t;
}

double FTable::lookup(double mu_std) const {
  if (grid_.empty()) throw std::logic_error("FTable::lookup on empty table");
  if (mu_std <= grid_.front()) return value_.front();
  if (mu_std >= grid_.back()) return value_.back();
  const double step = (grid_.back() - grid_.front()) / (grid_.size() - 1);
  const int i = std::min<int>((mu_std - grid_.front()) / step, grid_.size() - 2);
  const double w = (mu_std - grid_[i]) / (grid_[i + 1] - grid_[i]);
  return (1.0 - w) * value_[i] + w * value_[i + 1];
}

bool FTable::any_edge_pinned() const {
  for (auto e : edge_)
    if (e) return true;
  return false;
}

void FTable::save(const std::string& path) const {
  nlohmann::json j;
  j["format"] = "tdamp-ftable";
  j["version"] = 1;
  j["config"] = {{"v_lo", cfg_.v_lo},
                 {"v_hi", cfg_.v_hi},
                 {"grid_lo", cfg_.grid_lo},
                 {"grid_hi", cfg_.grid_hi},
                 {"grid_points", cfg_.grid_points},
                 {"coarse_points", cfg_.coarse_points},
                 {"refine_iters", cfg_.refine_iters},
                 {"quad_panels", cfg_.quad_panels},
                 {"z_lo", cfg_.z_lo},
                 {"z_hi", cfg_.z_hi}};
  j["grid"] = grid_;
  j["value"] = value_;
  j["edge"] = edge_;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write F-table: " + path);
  out << j.dump() << "\n";
}

std::optional<FTable> FTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  if (j.value("format", "") != "tdamp-ftable" || j.value("version", 0) != 1)
    return std::nullopt;
  FTable t;
  const auto& c = j["config"];
  t.cfg_.v_lo = c["v_lo"];
  t.cfg_.v_hi = c["v_hi"];
  t.cfg_.grid_lo = c["grid_lo"];
  t.cfg_.grid_hi = c["grid_hi"];
  t.cfg_.grid_points = c["grid_points"];
  t.cfg_.coarse_points = c["coarse_points"];
  t.cfg_.refine_iters = c["refine_iters"];
  t.cfg_.quad_panels = c["quad_panels"];
  t.cfg_.z_lo = c["z_lo"];
  t.cfg_.z_hi = c["z_hi"];
  t.grid_ = j["grid"].get<std::vector<double>>();
  t.value_ = j["value"].get<std::vector<double>>();
  t.edge_ = j["edge"].get<std::vector<uint8_t>>();
  if ((int)t.grid_.size() != t.cfg_.grid_points ||
      t.value_.size() != t.grid_.size() || t.edge_.size() != t.grid_.size())
    return std::nullopt;
  return t;
}

}  // namespace tdamp
