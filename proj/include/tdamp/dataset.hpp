#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "tdamp/network.hpp"

namespace tdamp {

// Samples are stored column-wise: x is N0 x I. Regression targets are
// NL x I; classification labels are 1-based class indices.
struct Dataset {
  TaskKind kind = TaskKind::regression;
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;          // regression only
  std::vector<int> labels;    // classification only, in [1, n_classes]
  int n_classes = 0;

  int size() const { return static_cast<int>(x.cols()); }
  int feature_dim() const { return static_cast<int>(x.rows()); }
};

// Header line, comma-delimited, last column is the target.
Dataset load_regression_csv(const std::string& path);

// Big-endian IDX pair (magic 0x803 images / 0x801 labels), raw or gzip.
// Pixels are scaled to [0,1]; labels 0..9 map to classes 1..10.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Per-feature z-score learned on the training split only; constant features
// keep scale 1. Regression targets are z-scored too; classification is a
// pass-through on targets.
struct Normalizer {
  Eigen::VectorXd x_shift, x_scale;
  Eigen::VectorXd y_shift, y_scale;
  bool identity = true;
};

Normalizer normalize_fit(const Dataset& train);
Dataset normalize_apply(const Normalizer& n, const Dataset& d);
Eigen::MatrixXd denormalize_y(const Normalizer& n, const Eigen::MatrixXd& y);

// Deterministic shuffle + contiguous slicing; the last batch may be short.
std::vector<std::vector<int>> make_batches(int n, int batch_size, uint64_t seed,
                                           bool shuffle = true);

// Equal-size client shards (first shards absorb the remainder). K = 1 keeps
// the original order so a single-client federation degenerates exactly to
// the centralized schedule.
std::vector<std::vector<int>> make_shards(int n, int k, uint64_t seed);

Dataset take(const Dataset& d, const std::vector<int>& idx);

}  // namespace tdamp
