#pragma once

#include <json.hpp>
#include <string>

#include "tdamp/em.hpp"
#include "tdamp/fed.hpp"

namespace tdamp {

// Flat run configuration. Every key is documented in config_key_docs();
// unknown keys are rejected.
struct RunConfig {
  std::string task = "regression";
  std::string data_format = "csv";
  std::string train_path;
  std::string test_path;
  std::string train_images, train_labels, test_images, test_labels;
  std::string arch = "13,64,64,1";
  int batch_size = 101;
  int iterations = 100;
  double damping = 0.8;
  int sweeps = 1;
  double lambda = 1.0;
  bool adapt_noise = true;
  double noise_var_init = 1.0;
  uint64_t seed = 1;
  bool shuffle = true;
  bool reshuffle_each_iteration = false;
  bool persist_messages = false;
  int threads = 1;
  double rho = 1.0;
  double rho_th = 0.99;
  double rho_0 = 0.5;
  double weight_var_scale = 2.0;
  double bias_var_init = 0.3;
  double bias_mean_std = 0.0;
  double init_mean_scale = 2.0;
  double init_output_mean_scale = -1.0;
  int clients = 4;
  int rounds = 50;
  int local_iterations = 10;
  bool eval_each_iteration = true;
  std::string ftable_path;

  static RunConfig preset(const std::string& name);  // boston/mnist/boston-fed/mnist-fed
  void apply(const std::string& key, const std::string& value);
  void apply_assignment(const std::string& key_eq_value);  // "key=value"
  void load_file(const std::string& path);
  nlohmann::json echo() const;
  void validate() const;

  TaskKind task_kind() const;
  Architecture architecture() const;
  TrainConfig train_config() const;
  SparsityPolicy sparsity_policy() const;
  InitOptions init_options() const;
  FedConfig fed_config() const;
};

struct ConfigKeyDoc {
  std::string key;
  std::string doc;
  std::string default_value;
};
const std::vector<ConfigKeyDoc>& config_key_docs();

}  // namespace tdamp
