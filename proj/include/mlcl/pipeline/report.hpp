#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace mlcl {

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_contrastive = 0.0;
  double train_aux = 0.0;
  double train_answer = 0.0;
  double validation_loss = 0.0;
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;
};

struct RuleMetric {
  std::string rule;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t support = 0;
};

/// Outcome of one training or evaluation phase.
struct RunReport {
  std::string phase;  // pretrain, linear_eval, supervised
  std::string mode;
  std::uint64_t seed = 0;
  std::string config_text;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::size_t test_count = 0;
  std::vector<RuleMetric> rule_metrics;
  std::uint64_t encoder_hash_before = 0;
  std::uint64_t encoder_hash_after = 0;
  double wall_clock_seconds = 0.0;

  /// Deterministic scalars (wall-clock excluded), in a stable order.
  std::map<std::string, double> scalars() const {
    std::map<std::string, double> s;
    s["best_epoch"] = static_cast<double>(best_epoch);
    s["epochs_run"] = static_cast<double>(epochs.size());
    s["train_accuracy"] = train_accuracy;
    s["validation_accuracy"] = validation_accuracy;
    s["test_accuracy"] = test_accuracy;
    for (const auto& e : epochs) {
      const std::string p = "epoch" + std::to_string(e.epoch) + ".";
      s[p + "train_loss"] = e.train_loss;
      s[p + "validation_loss"] = e.validation_loss;
    }
    for (const auto& r : rule_metrics) {
      s["rule." + r.rule + ".precision"] = r.precision;
      s["rule." + r.rule + ".recall"] = r.recall;
    }
    return s;
  }

  std::string epochs_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "phase,epoch,train_loss,train_contrastive,train_aux,train_answer,validation_loss,train_accuracy,"
          "validation_accuracy\n";
    for (const auto& e : epochs) {
      os << phase << ',' << e.epoch << ',' << e.train_loss << ',' << e.train_contrastive << ',' << e.train_aux << ','
         << e.train_answer << ',' << e.validation_loss << ',' << e.train_accuracy << ',' << e.validation_accuracy
         << '\n';
    }
    return os.str();
  }
};

inline void to_json(nlohmann::json& j, const EpochRecord& e) {
  j = {{"epoch", e.epoch},
       {"train_loss", e.train_loss},
       {"train_contrastive", e.train_contrastive},
       {"train_aux", e.train_aux},
       {"train_answer", e.train_answer},
       {"validation_loss", e.validation_loss},
       {"train_accuracy", e.train_accuracy},
       {"validation_accuracy", e.validation_accuracy}};
}

inline void from_json(const nlohmann::json& j, EpochRecord& e) {
  j.at("epoch").get_to(e.epoch);
  j.at("train_loss").get_to(e.train_loss);
  j.at("train_contrastive").get_to(e.train_contrastive);
  j.at("train_aux").get_to(e.train_aux);
  j.at("train_answer").get_to(e.train_answer);
  j.at("validation_loss").get_to(e.validation_loss);
  j.at("train_accuracy").get_to(e.train_accuracy);
  j.at("validation_accuracy").get_to(e.validation_accuracy);
}

inline void to_json(nlohmann::json& j, const RuleMetric& r) {
  j = {{"rule", r.rule}, {"precision", r.precision}, {"recall", r.recall}, {"support", r.support}};
}

inline void from_json(const nlohmann::json& j, RuleMetric& r) {
  j.at("rule").get_to(r.rule);
  j.at("precision").get_to(r.precision);
  j.at("recall").get_to(r.recall);
  j.at("support").get_to(r.support);
}

inline void to_json(nlohmann::json& j, const RunReport& r) {
  j = {{"phase", r.phase},
       {"mode", r.mode},
       {"seed", r.seed},
       {"config", r.config_text},
       {"epochs", r.epochs},
       {"best_epoch", r.best_epoch},
       {"stopped_early", r.stopped_early},
       {"train_accuracy", r.train_accuracy},
       {"validation_accuracy", r.validation_accuracy},
       {"test_accuracy", r.test_accuracy},
       {"test_count", r.test_count},
       {"rule_metrics", r.rule_metrics},
       {"encoder_hash_before", r.encoder_hash_before},
       {"encoder_hash_after", r.encoder_hash_after},
       {"wall_clock_seconds", r.wall_clock_seconds}};
}

inline void from_json(const nlohmann::json& j, RunReport& r) {
  j.at("phase").get_to(r.phase);
  j.at("mode").get_to(r.mode);
  j.at("seed").get_to(r.seed);
  j.at("config").get_to(r.config_text);
  j.at("epochs").get_to(r.epochs);
  j.at("best_epoch").get_to(r.best_epoch);
  j.at("stopped_early").get_to(r.stopped_early);
  j.at("train_accuracy").get_to(r.train_accuracy);
  j.at("validation_accuracy").get_to(r.validation_accuracy);
  j.at("test_accuracy").get_to(r.test_accuracy);
  j.at("test_count").get_to(r.test_count);
  j.at("rule_metrics").get_to(r.rule_metrics);
  j.at("encoder_hash_before").get_to(r.encoder_hash_before);
  j.at("encoder_hash_after").get_to(r.encoder_hash_after);
  r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
}

}  // namespace mlcl
