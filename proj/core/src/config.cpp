#include "fedpca/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "fedpca/error.hpp"

namespace fedpca::config {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads fields from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(field(key) + " is required");
    return j_.at(key);
  }

  template <typename T>
  void read(const std::string& key, T& out, bool required = false) {
    seen_.insert(key);
    if (!j_.contains(key)) {
      if (required) throw ConfigError(field(key) + " is required");
      return;
    }
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(field(key) + " must be a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        throw ConfigError(field(key) + " must be a nonnegative integer");
      }
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(field(key) + " must be a number");
      out = v.get<T>();
    } else {
      if (!v.is_string()) throw ConfigError(field(key) + " must be a string");
      out = v.get<T>();
    }
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown key " + field(item.key()));
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string placement_name(synth::NoisePlacement p) {
  return p == synth::NoisePlacement::kCommonOnly ? "common_only" : "uniform";
}

// Re-labels range errors from ScenarioConfig/RoundConfig::validate with the
// section they came from.
template <typename Fn>
void validate_in(const std::string& section, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError(section.empty() ? std::string(e.what()) : section + "." + e.what());
  }
}

}  // namespace

ordered_json scenario_to_json(const synth::ScenarioConfig& s) {
  ordered_json partition;
  switch (s.partition.kind) {
    case synth::PartitionKind::kIid:
      partition["type"] = "iid";
      break;
    case synth::PartitionKind::kDirichlet:
      partition["type"] = "dirichlet";
      partition["beta"] = s.partition.dirichlet_beta;
      break;
    case synth::PartitionKind::kMixed:
      partition["type"] = "mixed";
      partition["alphas"] = s.partition.mixed_alphas;
      break;
  }
  ordered_json j;
  j["num_clients"] = s.num_clients;
  j["num_classes"] = s.num_classes;
  j["input_dim"] = s.input_dim;
  j["samples_per_client"] = s.samples_per_client;
  j["test_samples"] = s.test_samples;
  j["rare_client_fraction"] = s.rare_client_fraction;
  j["corruption_sigma"] = s.corruption_sigma;
  j["rho"] = s.rho;
  j["eta"] = s.eta;
  j["partition"] = partition;
  j["noise_placement"] = placement_name(s.noise_placement);
  j["seed"] = s.seed;
  return j;
}

namespace {

synth::ScenarioConfig parse_scenario(const json& j, const std::string& path) {
  synth::ScenarioConfig s;
  Section sec(j, path);
  sec.read("num_clients", s.num_clients);
  sec.read("num_classes", s.num_classes);
  sec.read("input_dim", s.input_dim);
  sec.read("samples_per_client", s.samples_per_client);
  sec.read("test_samples", s.test_samples);
  sec.read("rare_client_fraction", s.rare_client_fraction);
  sec.read("corruption_sigma", s.corruption_sigma);
  sec.read("rho", s.rho);
  sec.read("eta", s.eta);
  sec.read("seed", s.seed);
  std::string placement = placement_name(s.noise_placement);
  sec.read("noise_placement", placement);
  if (placement == "common_only") {
    s.noise_placement = synth::NoisePlacement::kCommonOnly;
  } else if (placement == "uniform") {
    s.noise_placement = synth::NoisePlacement::kUniform;
  } else {
    throw ConfigError(sec.field("noise_placement") + " must be common_only or uniform");
  }
  if (sec.has("partition")) {
    Section part(sec.raw("partition"), sec.field("partition"));
    std::string type;
    part.read("type", type, true);
    if (type == "iid") {
      s.partition.kind = synth::PartitionKind::kIid;
    } else if (type == "dirichlet") {
      s.partition.kind = synth::PartitionKind::kDirichlet;
      part.read("beta", s.partition.dirichlet_beta, true);
    } else if (type == "mixed") {
      s.partition.kind = synth::PartitionKind::kMixed;
      const json& alphas = part.raw("alphas");
      if (!alphas.is_array()) throw ConfigError(part.field("alphas") + " must be an array");
      for (const auto& a : alphas) {
        if (!a.is_number()) throw ConfigError(part.field("alphas") + " must hold numbers");
        s.partition.mixed_alphas.push_back(a.get<double>());
      }
    } else {
      throw ConfigError(part.field("type") + " must be iid, dirichlet or mixed");
    }
    part.finish();
  }
  sec.finish();
  validate_in(path, [&] { s.validate(); });
  return s;
}

}  // namespace

synth::ScenarioConfig scenario_from_json(const json& j) { return parse_scenario(j, ""); }

void save_scenario(const std::filesystem::path& path, const synth::ScenarioConfig& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << scenario_to_json(s).dump(2) << '\n';
}

synth::ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("scenario file " + path.string() + " cannot be read");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("scenario file " + path.string() + ": " + e.what());
  }
  return scenario_from_json(j);
}

std::string scenario_hash(const synth::ScenarioConfig& s) {
  const std::string text = scenario_to_json(s).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

const std::vector<ScenarioPreset>& scenario_presets() {
  static const std::vector<ScenarioPreset> presets = [] {
    std::vector<ScenarioPreset> p;
    synth::ScenarioConfig reference;  // defaults are the reference scenario
    p.push_back({"reference", "K=20, 4 rare clients (sigma=2), rho=0.2, eta=1.0 on common clients", reference});

    synth::ScenarioConfig clean = reference;
    clean.rho = 0.0;
    p.push_back({"clean", "reference layout without label noise", clean});

    synth::ScenarioConfig dirichlet = reference;
    dirichlet.partition.kind = synth::PartitionKind::kDirichlet;
    dirichlet.partition.dirichlet_beta = 2.0;
    p.push_back({"dirichlet", "reference noise over a Dir(2.0) label-skewed partition", dirichlet});

    synth::ScenarioConfig mixed = reference;
    mixed.rare_client_fraction = 0.25;
    mixed.partition.kind = synth::PartitionKind::kMixed;
    mixed.partition.mixed_alphas = {0.8, 0.6, 0.4, 0.2, 0.0};
    p.push_back({"mixed", "5 rare clients holding alpha-mixtures 0.8/0.6/0.4/0.2/0.0", mixed});

    synth::ScenarioConfig uniform = reference;
    uniform.noise_placement = synth::NoisePlacement::kUniform;
    p.push_back({"uniform_noise", "reference with mislabeled clients drawn from all clients", uniform});
    return p;
  }();
  return presets;
}

const ScenarioPreset* find_preset(const std::string& name) {
  for (const auto& p : scenario_presets()) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void ExperimentConfig::validate() const {
  validate_in("scenario", [&] { scenario.validate(); });
  rounds.validate();
  if (methods.empty()) throw ConfigError("methods must not be empty");
  for (std::size_t i = 0; i < methods.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (methods[i] == methods[j]) throw ConfigError("methods lists " + methods[i].name() + " twice");
    }
  }
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) throw ConfigError("seeds must not contain duplicates");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

ordered_json to_json(const ExperimentConfig& c) {
  const auto& r = c.rounds;
  ordered_json rounds;
  rounds["total_rounds"] = r.total_rounds;
  rounds["warmup_rounds"] = r.warmup_rounds;
  rounds["local_epochs"] = r.local_epochs;
  rounds["q"] = r.q;
  rounds["tau_min"] = r.strategy.tau_min;
  rounds["weight_smoothing"] = r.weight_smoothing;
  rounds["identification_smoothing"] = r.identification_smoothing;
  rounds["final_window"] = r.final_window;
  rounds["normalize_dispersion"] = r.normalize_dispersion;
  rounds["chance_loss_gate"] = r.chance_loss_gate;

  ordered_json training;
  training["hidden_units"] = r.training.hidden_units;
  training["batch_size"] = r.training.batch_size;
  training["learning_rate"] = r.training.sgd.learning_rate;
  training["momentum"] = r.training.sgd.momentum;
  training["weight_decay"] = r.training.sgd.weight_decay;

  ordered_json methods = ordered_json::array();
  for (const auto& m : c.methods) methods.push_back(m.name());

  ordered_json j;
  j["scenario"] = scenario_to_json(c.scenario);
  j["rounds"] = rounds;
  j["training"] = training;
  j["methods"] = methods;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir.generic_string();
  j["threads"] = r.threads;
  return j;
}

ExperimentConfig from_json(const json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  Section top(j, "");

  const json& scenario = top.raw("scenario");
  if (scenario.is_string()) {
    const std::string ref = scenario.get<std::string>();
    if (const ScenarioPreset* preset = find_preset(ref)) {
      c.scenario = preset->scenario;
    } else {
      std::filesystem::path file(ref);
      if (file.is_relative()) file = base_dir / file;
      if (!std::filesystem::exists(file)) throw ConfigError("scenario: '" + ref + "' is neither a preset nor a file");
      c.scenario = load_scenario(file);
    }
  } else {
    c.scenario = parse_scenario(scenario, "scenario");
  }

  if (top.has("rounds")) {
    Section rounds(top.raw("rounds"), "rounds");
    auto& r = c.rounds;
    rounds.read("total_rounds", r.total_rounds);
    rounds.read("warmup_rounds", r.warmup_rounds);
    rounds.read("local_epochs", r.local_epochs);
    rounds.read("q", r.q);
    rounds.read("tau_min", r.strategy.tau_min);
    rounds.read("weight_smoothing", r.weight_smoothing);
    rounds.read("identification_smoothing", r.identification_smoothing);
    rounds.read("final_window", r.final_window);
    rounds.read("normalize_dispersion", r.normalize_dispersion);
    rounds.read("chance_loss_gate", r.chance_loss_gate);
    rounds.finish();
  }
  if (top.has("training")) {
    Section training(top.raw("training"), "training");
    auto& t = c.rounds.training;
    training.read("hidden_units", t.hidden_units);
    training.read("batch_size", t.batch_size);
    training.read("learning_rate", t.sgd.learning_rate);
    training.read("momentum", t.sgd.momentum);
    training.read("weight_decay", t.sgd.weight_decay);
    training.finish();
  }

  const json& methods = top.raw("methods");
  if (!methods.is_array()) throw ConfigError("methods must be an array of method names");
  for (const auto& m : methods) {
    if (!m.is_string()) throw ConfigError("methods must hold strings");
    c.methods.push_back(fed::Method::parse(m.get<std::string>()));
  }

  const json& seeds = top.raw("seeds");
  if (!seeds.is_array()) throw ConfigError("seeds must be an array of integers");
  for (const auto& s : seeds) {
    if (!s.is_number_unsigned()) throw ConfigError("seeds must hold nonnegative integers");
    c.seeds.push_back(s.get<std::uint64_t>());
  }

  std::string output_dir;
  top.read("output_dir", output_dir, true);
  c.output_dir = output_dir;
  top.read("threads", c.rounds.threads);
  top.finish();
  c.validate();
  return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config file " + path.string() + " cannot be read");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

std::string serialize_config(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

}  // namespace fedpca::config
