#pragma once

// The run configuration shared by all CLI subcommands. config/defaults.json in
// the repository mirrors run_config_to_json(RunConfig{}).

#include "viewex/experiment.hpp"
#include "viewex/planted.hpp"
#include "viewex/train.hpp"

namespace viewex {

inline Json train_config_to_json(const TrainConfig& c) {
  Json j;
  j["model"] = {{"attr_dim", c.model.attr_dim},
                {"rel_dim", c.model.rel_dim},
                {"hidden_dim", c.model.hidden_dim},
                {"layers", c.model.layers}};
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["patience"] = c.patience;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["train_fraction"] = c.train_fraction;
  j["validation_fraction"] = c.validation_fraction;
  j["seed"] = c.seed;
  return j;
}

inline TrainConfig train_config_from_json(const Json& j, TrainConfig c = {}) {
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "model") {
        for (auto mt = v.begin(); mt != v.end(); ++mt) {
          const auto& mk = mt.key();
          if (mk == "attr_dim") c.model.attr_dim = mt->get<std::size_t>();
          else if (mk == "rel_dim") c.model.rel_dim = mt->get<std::size_t>();
          else if (mk == "hidden_dim") c.model.hidden_dim = mt->get<std::size_t>();
          else if (mk == "layers") c.model.layers = mt->get<std::size_t>();
          else fail(ErrorKind::ConfigError, "unknown model key '" + mk + "'");
        }
      } else if (k == "learning_rate") c.learning_rate = v.get<double>();
      else if (k == "epochs") c.epochs = v.get<std::size_t>();
      else if (k == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (k == "patience") c.patience = v.get<std::size_t>();
      else if (k == "beta1") c.beta1 = v.get<double>();
      else if (k == "beta2") c.beta2 = v.get<double>();
      else if (k == "epsilon") c.epsilon = v.get<double>();
      else if (k == "train_fraction") c.train_fraction = v.get<double>();
      else if (k == "validation_fraction") c.validation_fraction = v.get<double>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else fail(ErrorKind::ConfigError, "unknown train key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ConfigError, std::string("train config: ") + e.what());
  }
  return c;
}

struct RunConfig {
  PlantedConfig planted;
  TrainConfig train;
  ExperimentConfig experiment;

  /// One seed for every stage.
  void set_seed(std::uint64_t s) {
    planted.seed = s;
    train.seed = s;
    experiment.seed = s;
  }
};

inline Json run_config_to_json(const RunConfig& c) {
  return Json{{"planted", planted_config_to_json(c.planted)},
              {"train", train_config_to_json(c.train)},
              {"experiment", experiment_config_to_json(c.experiment)}};
}

/// Overrides sections present in `j`.
inline RunConfig run_config_from_json(const Json& j, RunConfig c = {}) {
  if (!j.is_object()) fail(ErrorKind::ConfigError, "configuration must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "planted") c.planted = planted_config_from_json(*it, c.planted);
    else if (it.key() == "train") c.train = train_config_from_json(*it, c.train);
    else if (it.key() == "experiment") c.experiment = experiment_config_from_json(*it, c.experiment);
    else fail(ErrorKind::ConfigError, "unknown configuration section '" + it.key() + "'");
  }
  return c;
}

}  // namespace viewex
