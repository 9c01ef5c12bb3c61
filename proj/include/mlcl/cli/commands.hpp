#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlcl/pipeline/checkpoint.hpp"
#include "mlcl/pipeline/config.hpp"
#include "mlcl/pipeline/report.hpp"
#include "mlcl/pipeline/train.hpp"
#include "mlcl/rpmgen/dataset_io.hpp"
#include "mlcl/rpmgen/generator.hpp"
#include "mlcl/rpmgen/verify.hpp"

namespace mlcl::cli {

inline constexpr const char* kVersion = "mlcl-0.1.0";
inline constexpr const char* kWorkersEnv = "MLCL_WORKERS";

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kDiverged = 3 };

/// Command-line usage problem (bad flag combination, unknown mode).
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Dataset contents that do not fit the request.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Worker count from the environment, default 1.
inline std::size_t worker_count() {
  const char* v = std::getenv(kWorkersEnv);
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw UsageError(std::string(kWorkersEnv) + " must be a positive integer");
  return static_cast<std::size_t>(n);
}

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// What a run was asked to do. The hash covers everything except timestamps.
struct RunManifest {
  std::string command;
  std::string mode;
  std::string config_text;
  std::vector<std::string> overrides;
  std::string dataset_checksum;
  std::string test_checksum;
  std::string version = kVersion;
  std::uint64_t seed = 0;
  std::string started;
  std::string finished;
  double wall_clock_seconds = 0.0;

  std::uint64_t hash() const {
    std::string key = command + '\n' + mode + '\n' + config_text + '\n';
    for (const auto& o : overrides) key += o + '\n';
    key += dataset_checksum + '\n' + test_checksum + '\n' + version + '\n' + std::to_string(seed);
    return fnv1a(key);
  }

  std::string hash_hex() const { return hex64(hash()); }
};

inline void to_json(nlohmann::json& j, const RunManifest& m) {
  j = {{"command", m.command},
       {"mode", m.mode},
       {"config", m.config_text},
       {"overrides", m.overrides},
       {"dataset_checksum", m.dataset_checksum},
       {"test_checksum", m.test_checksum},
       {"version", m.version},
       {"seed", m.seed},
       {"manifest_hash", m.hash_hex()},
       {"started", m.started},
       {"finished", m.finished},
       {"wall_clock_seconds", m.wall_clock_seconds}};
}

inline void from_json(const nlohmann::json& j, RunManifest& m) {
  j.at("command").get_to(m.command);
  j.at("mode").get_to(m.mode);
  j.at("config").get_to(m.config_text);
  j.at("overrides").get_to(m.overrides);
  j.at("dataset_checksum").get_to(m.dataset_checksum);
  j.at("test_checksum").get_to(m.test_checksum);
  j.at("version").get_to(m.version);
  j.at("seed").get_to(m.seed);
  j.at("started").get_to(m.started);
  j.at("finished").get_to(m.finished);
  j.at("wall_clock_seconds").get_to(m.wall_clock_seconds);
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// A fresh directory `<root>/<stem>-<hash>`; reruns get a numeric suffix so
/// nothing is overwritten.
inline std::filesystem::path fresh_run_dir(const std::filesystem::path& root, const std::string& stem) {
  std::filesystem::create_directories(root);
  std::filesystem::path p = root / stem;
  for (int k = 2; std::filesystem::exists(p); ++k) p = root / (stem + "-r" + std::to_string(k));
  std::filesystem::create_directory(p);
  return p;
}

/// Report JSON without timing, so identical manifests give identical bytes.
inline nlohmann::json reproducible_json(const RunReport& r) {
  nlohmann::json j = r;
  j.erase("wall_clock_seconds");
  return j;
}

// ---------------------------------------------------------------------------

struct CommonOptions {
  std::string config_path;
  std::string dataset_path;
  std::string test_path;
  std::string out;
  std::string mode = "mlcl";
  std::string grid = "sweep";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

inline TrainConfig load_config(const CommonOptions& o) {
  TrainConfig c = o.config_path.empty() ? TrainConfig{} : TrainConfig::load(o.config_path);
  for (const auto& ov : o.overrides) c.apply_override(ov);
  c.validate();
  return c;
}

inline int cmd_generate(const CommonOptions& o, std::ostream& out) {
  if (o.out.empty()) throw UsageError("generate needs --out");
  TrainConfig c = load_config(o);
  if (o.seed) c.dataset_seed = *o.seed;
  GeneratorOptions gen;
  gen.panel_size = c.panel_size;
  const auto instances = generate_dataset(c.config, c.count, c.dataset_seed, gen, worker_count());
  const auto bytes = encode_dataset(instances, c.config, c.panel_size);
  if (const auto parent = std::filesystem::path(o.out).parent_path(); !parent.empty()) {
    std::filesystem::create_directories(parent);
  }
  write_file_bytes(o.out, bytes);
  out << "count " << instances.size() << "\ngrammar " << to_string(grammar_of(c.config)) << "\nconfig "
      << to_string(c.config) << "\nchecksum " << file_checksum(bytes) << "\n";
  return kOk;
}

struct LoadedData {
  Dataset data;
  std::string checksum;
};

inline LoadedData load_dataset(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return {decode_dataset(bytes), file_checksum(bytes)};
}

inline void require_compatible(const Dataset& d, const TrainConfig& c, const std::string& what) {
  if (d.header.config != c.config) {
    throw DataError(what + " holds " + std::string(to_string(d.header.config)) + " instances but the config says " +
                    std::string(to_string(c.config)));
  }
  if (d.header.panel_size != c.panel_size) {
    throw DataError(what + " has " + std::to_string(d.header.panel_size) + "-pixel panels but the config says " +
                    std::to_string(c.panel_size));
  }
}

struct TrainOutcome {
  std::filesystem::path dir;
  std::vector<RunReport> reports;
  RunManifest manifest;
};

inline std::optional<SupervisedMode> supervised_mode(const std::string& mode) {
  if (mode == "ce") return SupervisedMode::Ce;
  if (mode == "ce-aux-dense") return SupervisedMode::CeAuxDense;
  if (mode == "ce-aux-sparse") return SupervisedMode::CeAuxSparse;
  if (mode == "mlcl" || mode == "mlcl-noaug") return std::nullopt;
  throw UsageError("unknown mode '" + mode + "' (expected mlcl, mlcl-noaug, ce, ce-aux-dense or ce-aux-sparse)");
}

/// Runs one training protocol and writes manifest.json, report.json,
/// epochs.csv and weights.mlck into a fresh run directory.
inline TrainOutcome run_train(const CommonOptions& o) {
  if (o.dataset_path.empty()) throw UsageError("train needs --dataset");
  if (o.out.empty()) throw UsageError("train needs --out");
  const auto sup = supervised_mode(o.mode);
  TrainConfig c = load_config(o);
  if (o.seed) c.seed = *o.seed;
  if (o.mode == "mlcl-noaug") c.augment = false;
  if (o.mode == "ce-aux-dense") c.scheme = EncodingScheme::Dense;
  if (o.mode == "ce-aux-sparse") c.scheme = EncodingScheme::Sparse;

  const LoadedData train = load_dataset(o.dataset_path);
  require_compatible(train.data, c, "dataset");
  std::optional<LoadedData> test;
  if (!o.test_path.empty()) {
    test = load_dataset(o.test_path);
    require_compatible(test->data, c, "test dataset");
  }

  TrainOutcome res;
  RunManifest& m = res.manifest;
  m.command = "train";
  m.mode = o.mode;
  m.config_text = c.to_text();
  m.overrides = o.overrides;
  m.dataset_checksum = train.checksum;
  m.test_checksum = test ? test->checksum : "";
  m.seed = c.seed;
  m.started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();

  const Split split = split_dataset(train.data.instances, c.validation_percent);
  const InstanceRefs test_refs = test ? refs(test->data.instances) : InstanceRefs{};
  NetworkSet net(c.network_shape(), c.seed);
  if (sup) {
    res.reports.push_back(train_supervised(net, split.train, split.validation, test_refs, c, *sup));
  } else {
    RunReport pre = pretrain_contrastive(net, split.train, split.validation, c);
    pre.mode = o.mode;
    res.reports.push_back(std::move(pre));
    RunReport lin = linear_eval(net, split.train, split.validation, test_refs, c, worker_count());
    lin.mode = o.mode;
    res.reports.push_back(std::move(lin));
  }

  m.finished = utc_now();
  m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.dir = fresh_run_dir(o.out, "train-" + o.mode + "-" + m.hash_hex());
  nlohmann::json reports = nlohmann::json::array();
  std::string csv;
  for (const auto& r : res.reports) {
    reports.push_back(reproducible_json(r));
    const std::string part = r.epochs_csv();
    csv += csv.empty() ? part : part.substr(part.find('\n') + 1);
  }
  write_text(res.dir / "manifest.json", nlohmann::json(m).dump(2) + "\n");
  write_text(res.dir / "report.json", nlohmann::json{{"manifest_hash", m.hash_hex()}, {"phases", reports}}.dump(2) + "\n");
  write_text(res.dir / "epochs.csv", csv);
  save_checkpoint((res.dir / "weights.mlck").string(), net.all_parameters());
  return res;
}

inline int cmd_train(const CommonOptions& o, std::ostream& out) {
  const TrainOutcome r = run_train(o);
  for (const auto& rep : r.reports) {
    out << rep.phase << ": best epoch " << rep.best_epoch << " of " << rep.epochs.size();
    if (rep.phase != "pretrain") {
      out << ", train " << rep.train_accuracy << ", validation " << rep.validation_accuracy << ", test "
          << rep.test_accuracy << " (" << rep.test_count << ")";
    }
    out << "\n";
  }
  out << "wrote " << r.dir.string() << "\n";
  return kOk;
}

inline int cmd_ablate(const CommonOptions& o, std::ostream& out) {
  if (o.dataset_path.empty()) throw UsageError("ablate needs --dataset");
  if (o.out.empty()) throw UsageError("ablate needs --out");
  TrainConfig c = load_config(o);
  if (o.seed) c.seed = *o.seed;
  std::vector<AblationCell> cells;
  if (o.grid == "sweep") cells = sweep_grid();
  else if (o.grid == "directional") cells = directional_variants();
  else throw UsageError("unknown grid '" + o.grid + "' (expected sweep or directional)");

  const LoadedData train = load_dataset(o.dataset_path);
  require_compatible(train.data, c, "dataset");
  std::optional<LoadedData> test;
  if (!o.test_path.empty()) {
    test = load_dataset(o.test_path);
    require_compatible(test->data, c, "test dataset");
  }
  const Split split = split_dataset(train.data.instances, c.validation_percent);
  const InstanceRefs test_refs = test ? refs(test->data.instances) : InstanceRefs{};

  RunManifest top;
  top.command = "ablate";
  top.mode = o.grid;
  top.config_text = c.to_text();
  top.overrides = o.overrides;
  top.dataset_checksum = train.checksum;
  top.test_checksum = test ? test->checksum : "";
  top.seed = c.seed;
  top.started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = ablate(split.train, split.validation, test_refs, c, cells, worker_count());
  top.finished = utc_now();
  top.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto dir = fresh_run_dir(o.out, "ablate-" + o.grid + "-" + top.hash_hex());
  write_text(dir / "manifest.json", nlohmann::json(top).dump(2) + "\n");
  std::ostringstream summary;
  summary.precision(17);
  summary << "cell,beta,gamma,batch_size,negatives,augment,best_epoch,final_train_loss,linear_train_accuracy,"
             "linear_validation_accuracy,linear_test_accuracy,manifest_hash\n";
  for (const auto& r : results) {
    RunManifest m = top;
    m.command = "ablate-cell";
    m.mode = r.cell.label;
    m.config_text = r.config.to_text();
    m.overrides = o.overrides;
    m.overrides.insert(m.overrides.end(), r.cell.overrides.begin(), r.cell.overrides.end());
    m.seed = r.config.seed;
    const auto cell_dir = dir / r.cell.label;
    std::filesystem::create_directory(cell_dir);
    write_text(cell_dir / "manifest.json", nlohmann::json(m).dump(2) + "\n");
    write_text(cell_dir / "report.json",
               nlohmann::json{{"manifest_hash", m.hash_hex()},
                              {"phases", {reproducible_json(r.pretrain), reproducible_json(r.linear)}}}
                       .dump(2) +
                   "\n");
    const double final_loss = r.pretrain.epochs.empty() ? 0.0 : r.pretrain.epochs.back().train_loss;
    summary << r.cell.label << ',' << r.config.beta << ',' << r.config.gamma << ',' << r.config.batch_size << ','
            << (r.config.negatives ? "true" : "false") << ',' << (r.config.augment ? "true" : "false") << ','
            << r.pretrain.best_epoch << ',' << final_loss << ',' << r.linear.train_accuracy << ','
            << r.linear.validation_accuracy << ',' << r.linear.test_accuracy << ',' << m.hash_hex() << '\n';
  }
  write_text(dir / "summary.csv", summary.str());
  out << "ran " << results.size() << " cells\nwrote " << dir.string() << "\n";
  return kOk;
}

inline int cmd_verify(const CommonOptions& o, std::ostream& out) {
  if (o.dataset_path.empty()) throw UsageError("verify needs --dataset");
  const LoadedData d = load_dataset(o.dataset_path);
  std::size_t failed = 0;
  for (std::size_t i = 0; i < d.data.instances.size(); ++i) {
    const auto& inst = d.data.instances[i];
    const auto ok = verify(inst);
    if (ok.size() == 1 && ok.front() == inst.correct_index) continue;
    ++failed;
    out << "instance " << i << ": expected {" << inst.correct_index << "}, satisfying choices {";
    for (std::size_t k = 0; k < ok.size(); ++k) out << (k ? "," : "") << ok[k];
    out << "}\n";
  }
  out << "verified " << d.data.instances.size() << " instances, " << failed << " failed, checksum " << d.checksum
      << "\n";
  return failed == 0 ? kOk : kDataError;
}

/// Prints the scalars of a run directory written by train.
inline int cmd_report(const CommonOptions& o, std::ostream& out) {
  if (o.out.empty()) throw UsageError("report needs --out pointing at a run directory");
  const std::filesystem::path dir(o.out);
  nlohmann::json manifest, report;
  try {
    manifest = nlohmann::json::parse(read_text(dir / "manifest.json"));
    report = nlohmann::json::parse(read_text(dir / "report.json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed run directory: ") + e.what());
  }
  out << "command " << manifest.value("command", "") << " mode " << manifest.value("mode", "") << " manifest "
      << manifest.value("manifest_hash", "") << "\n";
  for (const auto& phase : report.at("phases")) {
    const RunReport r = phase.get<RunReport>();
    out << "[" << r.phase << "]\n";
    for (const auto& [k, v] : r.scalars()) {
      if (k.rfind("epoch", 0) == 0 && k.find('.') != std::string::npos) continue;
      out << "  " << k << " = " << v << "\n";
    }
  }
  return kOk;
}

/// Maps exceptions to exit codes and prints the message.
template <typename F>
int guarded(F&& f, std::ostream& err) {
  try {
    return f();
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DatasetError& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
}

}  // namespace mlcl::cli
