#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace tdamp {

struct MetricRecord {
  int64_t iteration = 0;
  std::string phase;
  std::string name;
  double value = 0.0;
};

// Append-only metrics stream: every record is kept in memory and, when a
// file is attached, written as one complete JSON line and flushed so a
// crashed run never leaves a partial line.
class MetricsSink {
 public:
  MetricsSink() = default;

  void open(const std::string& path);
  void emit(int64_t iteration, const std::string& phase, const std::string& name,
            double value);

  const std::vector<MetricRecord>& records() const { return records_; }
  // last value emitted under (phase, name); NaN when absent
  double last(const std::string& phase, const std::string& name) const;
  std::vector<double> series(const std::string& phase, const std::string& name) const;

 private:
  std::vector<MetricRecord> records_;
  std::ofstream file_;
};

}  // namespace tdamp
