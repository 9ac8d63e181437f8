#include "tdamp/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace tdamp {

namespace {

struct KeyEntry {
  std::string key;
  std::string doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::runtime_error("expected a boolean, got '" + v + "'");
}

template <typename T>
T parse_num(const std::string& v) {
  std::istringstream ss(v);
  T out;
  ss >> out;
  if (ss.fail() || !ss.eof()) throw std::runtime_error("bad numeric value '" + v + "'");
  return out;
}

#define STR_KEY(name, doc_text)                                       \
  {#name, doc_text, [](RunConfig& c, const std::string& v) { c.name = v; }, \
   [](const RunConfig& c) { return c.name; }}
#define NUM_KEY(name, type, doc_text)                                      \
  {#name, doc_text,                                                        \
   [](RunConfig& c, const std::string& v) { c.name = parse_num<type>(v); }, \
   [](const RunConfig& c) {                                                \
     std::ostringstream os;                                                \
     os.precision(17);                                                     \
     os << c.name;                                                         \
     return os.str();                                                      \
   }}
#define BOOL_KEY(name, doc_text)                                            \
  {#name, doc_text,                                                         \
   [](RunConfig& c, const std::string& v) { c.name = parse_bool(v); },      \
   [](const RunConfig& c) { return c.name ? std::string("true") : std::string("false"); }}

const std::vector<KeyEntry>& registry() {
  static const std::vector<KeyEntry> keys = {
      STR_KEY(task, "regression or classification"),
      STR_KEY(data_format, "csv (header, target last) or idx (big-endian image/label pair)"),
      STR_KEY(train_path, "training CSV path"),
      STR_KEY(test_path, "test CSV path"),
      STR_KEY(train_images, "training IDX image path (.gz ok)"),
      STR_KEY(train_labels, "training IDX label path"),
      STR_KEY(test_images, "test IDX image path"),
      STR_KEY(test_labels, "test IDX label path"),
      STR_KEY(arch, "comma-separated layer widths, input first"),
      NUM_KEY(batch_size, int, "minibatch size"),
      NUM_KEY(iterations, int, "outer EM iterations (centralized)"),
      NUM_KEY(damping, double, "message damping factor"),
      NUM_KEY(sweeps, int, "AMP passes per minibatch visit"),
      NUM_KEY(lambda, double, "posterior-as-prior exponent; only 1 is accepted"),
      BOOL_KEY(adapt_noise, "learn the output noise variance each M-step"),
      NUM_KEY(noise_var_init, double, "initial output noise variance"),
      NUM_KEY(seed, uint64_t, "RNG seed for init and shuffling"),
      BOOL_KEY(shuffle, "shuffle once before batching"),
      BOOL_KEY(reshuffle_each_iteration, "reshuffle minibatches every EM iteration"),
      BOOL_KEY(persist_messages, "carry per-batch message state across visits"),
      NUM_KEY(threads, int, "worker threads for the per-element pool and GEMMs"),
      NUM_KEY(rho, double, "target fraction of active weight groups (1 = dense)"),
      NUM_KEY(rho_th, double, "confident-activity threshold"),
      NUM_KEY(rho_0, double, "activity value after a sparsity reset; also the initial activity when pruning"),
      NUM_KEY(weight_var_scale, double, "prior weight variance = scale / fan_in"),
      NUM_KEY(bias_var_init, double, "prior bias variance"),
      NUM_KEY(bias_mean_std, double, "random prior bias mean spread (0 = zero means)"),
      NUM_KEY(init_mean_scale, double, "prior weight mean std = scale / sqrt(fan_in)"),
      NUM_KEY(init_output_mean_scale, double, "last-layer mean scale override (< 0 follows init_mean_scale)"),
      NUM_KEY(clients, int, "federated client count"),
      NUM_KEY(rounds, int, "federated communication rounds"),
      NUM_KEY(local_iterations, int, "inner E-step passes per client per round"),
      BOOL_KEY(eval_each_iteration, "evaluate on the test split every iteration/round"),
      STR_KEY(ftable_path, "optional sidecar cache for the variance table"),
  };
  return keys;
}

#undef STR_KEY
#undef NUM_KEY
#undef BOOL_KEY

const KeyEntry& find_key(const std::string& key) {
  for (const auto& e : registry()) {
    if (e.key == key) return e;
  }
  throw std::runtime_error("unknown configuration key '" + key + "'");
}

}  // namespace

const std::vector<ConfigKeyDoc>& config_key_docs() {
  static const std::vector<ConfigKeyDoc> docs = [] {
    std::vector<ConfigKeyDoc> d;
    RunConfig defaults;
    for (const auto& e : registry()) {
      d.push_back({e.key, e.doc, e.get(defaults)});
    }
    return d;
  }();
  return docs;
}

RunConfig RunConfig::preset(const std::string& name) {
  RunConfig c;
  if (name == "boston" || name == "boston-fed") {
    c.task = "regression";
    c.data_format = "csv";
    c.train_path = "data/boston/boston_train.csv";
    c.test_path = "data/boston/boston_test.csv";
    c.arch = "13,64,64,1";
    c.batch_size = 101;
    c.iterations = 100;
    if (name == "boston-fed") {
      c.clients = 4;
      c.rounds = 50;
      c.local_iterations = 10;
    }
  } else if (name == "mnist" || name == "mnist-fed") {
    c.task = "classification";
    c.data_format = "idx";
    c.train_images = "data/mnist/train-images-idx3-ubyte.gz";
    c.train_labels = "data/mnist/train-labels-idx1-ubyte.gz";
    c.test_images = "data/mnist/t10k-images-idx3-ubyte.gz";
    c.test_labels = "data/mnist/t10k-labels-idx1-ubyte.gz";
    c.arch = "784,128,10";
    c.batch_size = 100;
    c.iterations = 20;
    if (name == "mnist-fed") {
      c.clients = 10;
      c.rounds = 50;
      c.local_iterations = 10;
    }
  } else {
    throw std::runtime_error("unknown preset '" + name +
                             "' (expected boston, mnist, boston-fed, mnist-fed)");
  }
  return c;
}

void RunConfig::apply(const std::string& key, const std::string& value) {
  find_key(key).set(*this, value);
}

void RunConfig::apply_assignment(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw std::runtime_error("expected key=value, got '" + kv + "'");
  apply(kv.substr(0, eq), kv.substr(eq + 1));
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j;
  in >> j;
  if (!j.is_object()) throw std::runtime_error("config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::string v;
    if (it.value().is_string()) {
      v = it.value().get<std::string>();
    } else {
      v = it.value().dump();
    }
    apply(it.key(), v);
  }
}

nlohmann::json RunConfig::echo() const {
  nlohmann::json j;
  for (const auto& e : registry()) {
    j[e.key] = e.get(*this);
  }
  return j;
}

void RunConfig::validate() const {
  task_kind();
  architecture();
  train_config().validate();
  sparsity_policy().validate();
  if (data_format != "csv" && data_format != "idx")
    throw std::runtime_error("data_format must be csv or idx");
  if (lambda != 1.0)
    throw std::runtime_error("posterior-as-prior exponent must be 1");
}

TaskKind RunConfig::task_kind() const { return task_from_string(task); }

Architecture RunConfig::architecture() const {
  Architecture a;
  std::stringstream ss(arch);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    a.widths.push_back(parse_num<int>(tok));
  }
  if (a.widths.size() < 2) throw std::runtime_error("arch needs at least two widths");
  return a;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.iterations = iterations;
  t.batch_size = batch_size;
  t.damping = damping;
  t.sweeps = sweeps;
  t.lambda = lambda;
  t.adapt_noise = adapt_noise;
  t.seed = seed;
  t.shuffle = shuffle;
  t.reshuffle_each_iteration = reshuffle_each_iteration;
  t.persist_messages = persist_messages;
  t.threads = threads;
  return t;
}

SparsityPolicy RunConfig::sparsity_policy() const {
  SparsityPolicy p;
  p.rho = rho;
  p.rho_th = rho_th;
  p.rho_0 = rho_0;
  return p;
}

InitOptions RunConfig::init_options() const {
  InitOptions o;
  o.rho = rho < 1.0 ? rho_0 : 1.0;
  o.bias_var = bias_var_init;
  o.bias_mean_std = bias_mean_std;
  o.weight_var_scale = weight_var_scale;
  o.mean_std_scale = init_mean_scale;
  o.output_mean_scale = init_output_mean_scale;
  o.noise_var = noise_var_init;
  o.seed = seed;
  return o;
}

FedConfig RunConfig::fed_config() const {
  FedConfig f;
  f.clients = clients;
  f.rounds = rounds;
  f.local_iterations = local_iterations;
  return f;
}

}  // namespace tdamp
