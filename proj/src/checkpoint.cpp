#include "tdamp/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace tdamp {

namespace {

nlohmann::json group_to_json(const BGGroup& g) {
  return {{"rho", g.rho}, {"mu", g.mu}, {"v", g.v}};
}

BGGroup group_from_json(const nlohmann::json& j) {
  BGGroup g;
  g.rho = j.at("rho");
  g.mu = j.at("mu").get<std::vector<double>>();
  g.v = j.at("v").get<std::vector<double>>();
  return g;
}

nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vec_from_json(const nlohmann::json& j) {
  const auto s = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(s.data(), s.size());
}

}  // namespace

nlohmann::json hyper_to_json(const NetHyper& h) {
  nlohmann::json j;
  j["arch"] = h.arch.widths;
  j["noise_var"] = h.noise_var;
  j["weight_groups"] = nlohmann::json::array();
  for (const auto& g : h.weights) j["weight_groups"].push_back(group_to_json(g));
  j["biases"] = nlohmann::json::array();
  for (const auto& g : h.biases) j["biases"].push_back(group_to_json(g));
  return j;
}

NetHyper hyper_from_json(const nlohmann::json& j) {
  NetHyper h;
  h.arch.widths = j.at("arch").get<std::vector<int>>();
  h.noise_var = j.at("noise_var");
  for (const auto& g : j.at("weight_groups")) h.weights.push_back(group_from_json(g));
  for (const auto& g : j.at("biases")) h.biases.push_back(group_from_json(g));
  h.validate();
  return h;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json j;
  j["format"] = "tdamp-checkpoint";
  j["version"] = 1;
  j["task"] = to_string(ck.task);
  j["iteration"] = ck.iteration;
  j["hyper"] = hyper_to_json(ck.hyper);
  j["policy"] = {{"rho", ck.policy.rho},
                 {"rho_th", ck.policy.rho_th},
                 {"rho_0", ck.policy.rho_0}};
  j["normalizer"] = {{"identity", ck.normalizer.identity}};
  if (!ck.normalizer.identity) {
    j["normalizer"]["x_shift"] = vec_to_json(ck.normalizer.x_shift);
    j["normalizer"]["x_scale"] = vec_to_json(ck.normalizer.x_scale);
    j["normalizer"]["y_shift"] = vec_to_json(ck.normalizer.y_shift);
    j["normalizer"]["y_scale"] = vec_to_json(ck.normalizer.y_scale);
  }
  j["config"] = ck.config_echo;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "tdamp-checkpoint")
    throw std::runtime_error("not a checkpoint file: " + path);
  if (j.value("version", 0) != 1)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  Checkpoint ck;
  ck.task = task_from_string(j.at("task"));
  ck.iteration = j.at("iteration");
  ck.hyper = hyper_from_json(j.at("hyper"));
  ck.policy.rho = j.at("policy").at("rho");
  ck.policy.rho_th = j.at("policy").at("rho_th");
  ck.policy.rho_0 = j.at("policy").at("rho_0");
  ck.normalizer.identity = j.at("normalizer").at("identity");
  if (!ck.normalizer.identity) {
    ck.normalizer.x_shift = vec_from_json(j.at("normalizer").at("x_shift"));
    ck.normalizer.x_scale = vec_from_json(j.at("normalizer").at("x_scale"));
    ck.normalizer.y_shift = vec_from_json(j.at("normalizer").at("y_shift"));
    ck.normalizer.y_scale = vec_from_json(j.at("normalizer").at("y_scale"));
  }
  if (j.contains("config")) ck.config_echo = j.at("config");
  return ck;
}

}  // namespace tdamp
