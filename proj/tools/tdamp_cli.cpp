#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "tdamp/checkpoint.hpp"
#include "tdamp/config.hpp"
#include "tdamp/fed.hpp"

#ifdef TDAMP_HAVE_OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using namespace tdamp;

namespace {

struct LoadedData {
  Dataset train, test;
  Normalizer norm;
  bool has_test = false;
};

LoadedData load_data(const RunConfig& cfg) {
  LoadedData d;
  if (cfg.data_format == "csv") {
    d.train = load_regression_csv(cfg.train_path);
    if (!cfg.test_path.empty()) {
      d.test = load_regression_csv(cfg.test_path);
      d.has_test = true;
    }
  } else {
    d.train = load_idx(cfg.train_images, cfg.train_labels);
    if (!cfg.test_images.empty()) {
      d.test = load_idx(cfg.test_images, cfg.test_labels);
      d.has_test = true;
    }
  }
  d.norm = normalize_fit(d.train);
  d.train = normalize_apply(d.norm, d.train);
  if (d.has_test) d.test = normalize_apply(d.norm, d.test);
  return d;
}

void apply_threads(const RunConfig& cfg) {
#ifdef TDAMP_HAVE_OPENMP
  omp_set_num_threads(cfg.threads);
#endif
  Eigen::setNbThreads(cfg.threads);
}

void write_config_echo(const RunConfig& cfg, const fs::path& out_dir) {
  std::ofstream out(out_dir / "config.json");
  out << cfg.echo().dump(2) << "\n";
}

FTable prepare_ftable(const RunConfig& cfg, const fs::path& out_dir) {
  const std::string path =
      cfg.ftable_path.empty() ? (out_dir / "ftable.json").string() : cfg.ftable_path;
  if (auto t = FTable::load(path)) {
    return std::move(*t);
  }
  FTable t = FTable::build();
  t.save(path);
  return t;
}

double eval_metric(const NetHyper& psi, const Dataset& test) {
  return test.kind == TaskKind::regression ? eval_nmse(psi, test)
                                           : eval_error_rate(psi, test);
}

int cmd_train(const RunConfig& cfg, const std::string& out, bool federated) {
  cfg.validate();
  const fs::path out_dir(out);
  fs::create_directories(out_dir);
  write_config_echo(cfg, out_dir);
  apply_threads(cfg);

  LoadedData data = load_data(cfg);
  MetricsSink sink;
  sink.open((out_dir / "metrics.jsonl").string());

  NetHyper hyper = init_hyper(cfg.architecture(), cfg.init_options());

  FTable table;
  const FTable* table_ptr = nullptr;
  if (cfg.task_kind() == TaskKind::classification && cfg.adapt_noise) {
    table = prepare_ftable(cfg, out_dir);
    table_ptr = &table;
  }

  const std::string metric_name = cfg.task_kind() == TaskKind::regression
                                      ? "test_nmse"
                                      : "test_error";
  auto observer = [&](int iteration, const NetHyper& psi) {
    if (cfg.eval_each_iteration && data.has_test) {
      sink.emit(iteration, "eval", metric_name, eval_metric(psi, data.test));
    }
    return true;
  };

  NetHyper posterior;
  int64_t iterations_run = 0;
  if (federated) {
    FedResult r = run_federated(data.train, std::move(hyper), cfg.train_config(),
                                cfg.fed_config(), cfg.sparsity_policy(), table_ptr,
                                &sink, observer);
    posterior = std::move(r.posterior);
    iterations_run = r.rounds_run;
  } else {
    EmResult r = run_em(data.train, std::move(hyper), cfg.train_config(),
                        cfg.sparsity_policy(), table_ptr, &sink, observer);
    posterior = std::move(r.posterior);
    iterations_run = r.iterations_run;
  }

  Checkpoint ck;
  ck.task = cfg.task_kind();
  ck.hyper = posterior;
  ck.policy = cfg.sparsity_policy();
  ck.normalizer = data.norm;
  ck.iteration = iterations_run;
  ck.config_echo = cfg.echo();
  save_checkpoint((out_dir / "checkpoint.json").string(), ck);

  if (data.has_test) {
    std::cout << metric_name << " " << eval_metric(posterior, data.test) << "\n";
  }
  std::cout << "active_groups " << active_weight_groups(posterior) << "/"
            << posterior.arch.q_w() << "\n";
  std::cout << "noise_var " << posterior.noise_var << "\n";
  std::cout << "checkpoint " << (out_dir / "checkpoint.json").string() << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const RunConfig& cfg) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  Dataset test;
  if (cfg.data_format == "csv") {
    test = load_regression_csv(cfg.test_path);
  } else {
    test = load_idx(cfg.test_images, cfg.test_labels);
  }
  test = normalize_apply(ck.normalizer, test);
  const double m = eval_metric(ck.hyper, test);
  std::cout << (ck.task == TaskKind::regression ? "nmse " : "error ") << m << "\n";
  return 0;
}

int cmd_sweep(RunConfig cfg, const std::string& out,
              const std::vector<double>& sparsity, int repeats) {
  cfg.validate();
  const fs::path out_dir(out);
  fs::create_directories(out_dir);
  write_config_echo(cfg, out_dir);
  apply_threads(cfg);

  LoadedData data = load_data(cfg);
  if (!data.has_test) throw std::runtime_error("sweep needs a test split");

  FTable table;
  const FTable* table_ptr = nullptr;
  if (cfg.task_kind() == TaskKind::classification && cfg.adapt_noise) {
    table = prepare_ftable(cfg, out_dir);
    table_ptr = &table;
  }

  std::vector<double> targets = sparsity;
  std::sort(targets.begin(), targets.end());

  std::ofstream rows((out_dir / "sweep.csv").string());
  rows << "sparsity,repeat,metric,active_ratio\n";
  std::cout << "sparsity metric active_ratio\n";
  for (double target : targets) {
    RunConfig c = cfg;
    {
      std::ostringstream os;
      os.precision(17);
      os << target;
      c.apply("rho", os.str());
    }
    double metric_sum = 0.0, ratio_sum = 0.0;
    for (int rep = 0; rep < repeats; ++rep) {
      TrainConfig tc = c.train_config();
      tc.seed = cfg.seed + static_cast<uint64_t>(rep);
      InitOptions io = c.init_options();
      io.seed = tc.seed;
      EmResult r = run_em(data.train, init_hyper(c.architecture(), io), tc,
                          c.sparsity_policy(), table_ptr, nullptr, {});
      const double metric = eval_metric(r.posterior, data.test);
      const double ratio = double(active_weight_groups(r.posterior)) /
                           double(r.posterior.arch.q_w());
      rows << target << "," << rep << "," << metric << "," << ratio << "\n";
      rows.flush();
      metric_sum += metric;
      ratio_sum += ratio;
    }
    std::cout << target << " " << metric_sum / repeats << " "
              << ratio_sum / repeats << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian neural network training by turbo deep approximate "
               "message passing with EM hyperparameter learning"};
  app.require_subcommand(1);

  std::string preset, config_file, out = "runs/out", checkpoint;
  std::vector<std::string> overrides;
  std::string sparsity_csv = "1.0";
  int repeats = 1;
  uint64_t seed_flag = 0;
  bool seed_set = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--preset", preset, "boston, mnist, boston-fed, mnist-fed");
    sub->add_option("--config", config_file, "JSON config file");
    sub->add_option("--set", overrides, "key=value override (repeatable)");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed_flag, "RNG seed")->each([&](const std::string&) {
      seed_set = true;
    });
  };

  CLI::App* train = app.add_subcommand("train", "centralized training run");
  add_common(train);
  CLI::App* fed = app.add_subcommand("federated", "multi-client federated run");
  add_common(fed);
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  CLI::App* sweep = app.add_subcommand("sweep", "train across target sparsities");
  add_common(sweep);
  sweep->add_option("--sparsity", sparsity_csv, "comma-separated target sparsities");
  sweep->add_option("--repeats", repeats, "runs per sparsity");
  CLI::App* keys = app.add_subcommand("config-keys", "list configuration keys");

  CLI11_PARSE(app, argc, argv);

  try {
    if (keys->parsed()) {
      for (const auto& d : config_key_docs()) {
        std::cout << d.key << " (default " << d.default_value << "): " << d.doc
                  << "\n";
      }
      return 0;
    }

    RunConfig cfg = preset.empty() ? RunConfig{} : RunConfig::preset(preset);
    if (!config_file.empty()) cfg.load_file(config_file);
    for (const auto& kv : overrides) cfg.apply_assignment(kv);
    if (seed_set) {
      std::ostringstream os;
      os << seed_flag;
      cfg.apply("seed", os.str());
    }

    if (train->parsed()) return cmd_train(cfg, out, false);
    if (fed->parsed()) return cmd_train(cfg, out, true);
    if (eval->parsed()) return cmd_eval(checkpoint, cfg);
    if (sweep->parsed()) {
      std::vector<double> targets;
      std::stringstream ss(sparsity_csv);
      std::string tok;
      while (std::getline(ss, tok, ',')) targets.push_back(std::stod(tok));
      return cmd_sweep(cfg, out, targets, repeats);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
