#include "tdamp/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tdamp {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::vector<uint8_t> read_file_maybe_gzip(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<uint8_t> raw((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
  if (raw.size() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b) {
    // gzip container
    std::vector<uint8_t> out;
    out.resize(std::max<size_t>(raw.size() * 4, 1 << 20));
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 16) != Z_OK)
      throw std::runtime_error("zlib init failed: " + path);
    zs.next_in = raw.data();
    zs.avail_in = static_cast<uInt>(raw.size());
    size_t written = 0;
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
      if (written == out.size()) out.resize(out.size() * 2);
      zs.next_out = out.data() + written;
      zs.avail_out = static_cast<uInt>(out.size() - written);
      rc = inflate(&zs, Z_NO_FLUSH);
      if (rc != Z_OK && rc != Z_STREAM_END) {
        inflateEnd(&zs);
        throw std::runtime_error("gzip decode failed: " + path);
      }
      written = out.size() - zs.avail_out;
    }
    inflateEnd(&zs);
    out.resize(written);
    return out;
  }
  return raw;
}

uint32_t be32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) |
         (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

}  // namespace

Dataset load_regression_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty file: " + path);
  const size_t n_cols = split_csv_line(line).size();
  if (n_cols < 2) throw std::runtime_error("need at least one feature column: " + path);

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != n_cols)
      throw std::runtime_error(path + ": ragged row at line " + std::to_string(line_no));
    std::vector<double> vals(n_cols);
    for (size_t c = 0; c < n_cols; ++c) {
      try {
        size_t pos = 0;
        vals[c] = std::stod(cells[c], &pos);
        if (pos != cells[c].size()) throw std::invalid_argument("");
      } catch (...) {
        throw std::runtime_error(path + ": non-numeric cell at line " +
                                 std::to_string(line_no));
      }
    }
    rows.push_back(std::move(vals));
  }

  Dataset d;
  d.kind = TaskKind::regression;
  const int n = static_cast<int>(rows.size());
  const int nf = static_cast<int>(n_cols) - 1;
  d.x.resize(nf, n);
  d.y.resize(1, n);
  for (int i = 0; i < n; ++i) {
    for (int f = 0; f < nf; ++f) d.x(f, i) = rows[i][f];
    d.y(0, i) = rows[i][nf];
  }
  return d;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  auto img = read_file_maybe_gzip(images_path);
  auto lab = read_file_maybe_gzip(labels_path);
  if (img.size() < 16 || be32(img.data()) != 0x00000803)
    throw std::runtime_error("bad image magic: " + images_path);
  if (lab.size() < 8 || be32(lab.data()) != 0x00000801)
    throw std::runtime_error("bad label magic: " + labels_path);
  const uint32_t n = be32(img.data() + 4);
  const uint32_t rows = be32(img.data() + 8);
  const uint32_t cols = be32(img.data() + 12);
  if (be32(lab.data() + 4) != n)
    throw std::runtime_error("image/label count mismatch");
  const size_t pix = size_t(rows) * cols;
  if (img.size() != 16 + size_t(n) * pix)
    throw std::runtime_error("image payload size mismatch: " + images_path);
  if (lab.size() != 8 + size_t(n))
    throw std::runtime_error("label payload size mismatch: " + labels_path);

  Dataset d;
  d.kind = TaskKind::classification;
  d.x.resize(pix, n);
  d.labels.resize(n);
  const uint8_t* px = img.data() + 16;
  for (uint32_t i = 0; i < n; ++i) {
    for (size_t p = 0; p < pix; ++p) {
      d.x(p, i) = px[size_t(i) * pix + p] / 255.0;
    }
    const int y = lab[8 + i];
    if (y > 9) throw std::runtime_error("label out of range");
    d.labels[i] = y + 1;
  }
  d.n_classes = 10;
  return d;
}

Normalizer normalize_fit(const Dataset& train) {
  Normalizer n;
  n.identity = (train.kind == TaskKind::classification);
  if (n.identity) return n;

  const int nf = train.feature_dim();
  n.x_shift.resize(nf);
  n.x_scale.resize(nf);
  for (int f = 0; f < nf; ++f) {
    const double mean = train.x.row(f).mean();
    const double var = (train.x.row(f).array() - mean).square().mean();
    n.x_shift(f) = mean;
    n.x_scale(f) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  const int ny = static_cast<int>(train.y.rows());
  n.y_shift.resize(ny);
  n.y_scale.resize(ny);
  for (int t = 0; t < ny; ++t) {
    const double mean = train.y.row(t).mean();
    const double var = (train.y.row(t).array() - mean).square().mean();
    n.y_shift(t) = mean;
    n.y_scale(t) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return n;
}

Dataset normalize_apply(const Normalizer& n, const Dataset& d) {
  if (n.identity) return d;
  Dataset out = d;
  out.x = (d.x.colwise() - n.x_shift).array().colwise() / n.x_scale.array();
  if (d.y.size() > 0) {
    out.y = (d.y.colwise() - n.y_shift).array().colwise() / n.y_scale.array();
  }
  return out;
}

Eigen::MatrixXd denormalize_y(const Normalizer& n, const Eigen::MatrixXd& y) {
  if (n.identity) return y;
  return (y.array().colwise() * n.y_scale.array()).colwise() + n.y_shift.array();
}

std::vector<std::vector<int>> make_batches(int n, int batch_size, uint64_t seed,
                                           bool shuffle) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) {
      std::swap(order[i], order[rng.uniform_int(i + 1)]);
    }
  }
  std::vector<std::vector<int>> batches;
  for (int b = 0; b < n; b += batch_size) {
    const int e = std::min(b + batch_size, n);
    batches.emplace_back(order.begin() + b, order.begin() + e);
  }
  return batches;
}

std::vector<std::vector<int>> make_shards(int n, int k, uint64_t seed) {
  if (k < 1) throw std::invalid_argument("client count must be positive");
  if (k > n) throw std::invalid_argument("more clients than samples");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (k > 1) {
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) {
      std::swap(order[i], order[rng.uniform_int(i + 1)]);
    }
  }
  std::vector<std::vector<int>> shards(k);
  const int base = n / k, extra = n % k;
  int pos = 0;
  for (int c = 0; c < k; ++c) {
    const int count = base + (c < extra ? 1 : 0);
    shards[c].assign(order.begin() + pos, order.begin() + pos + count);
    pos += count;
  }
  return shards;
}

Dataset take(const Dataset& d, const std::vector<int>& idx) {
  Dataset out;
  out.kind = d.kind;
  out.n_classes = d.n_classes;
  const int n = static_cast<int>(idx.size());
  out.x.resize(d.x.rows(), n);
  for (int i = 0; i < n; ++i) out.x.col(i) = d.x.col(idx[i]);
  if (d.kind == TaskKind::regression) {
    out.y.resize(d.y.rows(), n);
    for (int i = 0; i < n; ++i) out.y.col(i) = d.y.col(idx[i]);
  } else {
    out.labels.resize(n);
    for (int i = 0; i < n; ++i) out.labels[i] = d.labels[idx[i]];
  }
  return out;
}

}  // namespace tdamp
