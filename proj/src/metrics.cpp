#include "tdamp/metrics.hpp"

#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace tdamp {

void MetricsSink::open(const std::string& path) {
  file_.open(path, std::ios::app);
  if (!file_) throw std::runtime_error("cannot open metrics file: " + path);
}

void MetricsSink::emit(int64_t iteration, const std::string& phase,
                       const std::string& name, double value) {
  records_.push_back({iteration, phase, name, value});
  if (file_.is_open()) {
    nlohmann::json j{{"iteration", iteration},
                     {"phase", phase},
                     {"name", name},
                     {"value", value}};
    file_ << j.dump() << "\n";
    file_.flush();
  }
}

double MetricsSink::last(const std::string& phase, const std::string& name) const {
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->phase == phase && it->name == name) return it->value;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

std::vector<double> MetricsSink::series(const std::string& phase,
                                        const std::string& name) const {
  std::vector<double> out;
  for (const auto& r : records_) {
    if (r.phase == phase && r.name == name) out.push_back(r.value);
  }
  return out;
}

}  // namespace tdamp
