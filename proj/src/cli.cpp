/* Copyright 2026 The ct2ctpa Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/


#include "ct2ctpa/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>

#include <CLI11.hpp>

#include "ct2ctpa/error.hpp"
#include "ct2ctpa/image_io.hpp"
#include "ct2ctpa/ingest.hpp"
#include "ct2ctpa/metrics.hpp"
#include "ct2ctpa/models.hpp"
#include "ct2ctpa/phantom.hpp"
#include "ct2ctpa/rng.hpp"
#include "ct2ctpa/training.hpp"

namespace ct2ctpa::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config keys

json data_defaults() {
  return {{"data.window.low", -1000.0}, {"data.window.high", 400.0},
          {"data.hu_filter", true},     {"data.image_size", 256},
          {"data.pairing", "auto"},     {"data.interval", "all"},
          {"data.test_fraction", 0.2}};
}

json pretrain_defaults() {
  const training::ClassifierTrainConfig c;
  return {{"pretrain.auto", false},
          {"pretrain.epochs", c.epochs},
          {"pretrain.lr", c.lr},
          {"pretrain.batch_size", c.batch_size},
          {"pretrain.depth", c.model.depth},
          {"pretrain.base_channels", c.model.base_channels}};
}

bool is_train_key(const std::string& key) {
  static const std::set<std::string> keys = [] {
    const auto v = training::TrainConfig::flat_keys();
    return std::set<std::string>(v.begin(), v.end());
  }();
  return keys.count(key) > 0;
}

ingest::IntervalPolicy parse_interval(const std::string& s) {
  ingest::IntervalPolicy p;
  if (s == "all") return p;
  if (s == "gt" || s == "ground_truth" || s == "ground-truth") {
    p.kind = ingest::IntervalKind::ground_truth;
    return p;
  }
  const auto colon = s.find(':');
  try {
    if (colon == std::string::npos) throw std::invalid_argument("no colon");
    std::size_t used = 0;
    const int a = std::stoi(s.substr(0, colon), &used);
    if (used != colon) throw std::invalid_argument("trailing");
    const std::string rest = s.substr(colon + 1);
    const int b = std::stoi(rest, &used);
    if (used != rest.size()) throw std::invalid_argument("trailing");
    if (a < 0 || b < a) throw std::invalid_argument("order");
    p.kind = ingest::IntervalKind::fixed;
    p.fixed = {a, b};
    return p;
  } catch (const std::invalid_argument&) {
  } catch (const std::out_of_range&) {
  }
  throw ConfigError("bad slice interval '" + s + "' (expected all, gt or START:END with START <= END)");
}

std::string interval_string(const ingest::IntervalPolicy& p) {
  switch (p.kind) {
    case ingest::IntervalKind::all: return "all";
    case ingest::IntervalKind::ground_truth: return "gt";
    case ingest::IntervalKind::fixed:
      return std::to_string(p.fixed.start) + ":" + std::to_string(p.fixed.end);
  }
  return "all";
}

ingest::HuWindow parse_window(const std::string& s) {
  const auto colon = s.find(':', 1);  // skip a leading minus sign
  ingest::HuWindow w;
  try {
    if (colon == std::string::npos) throw std::invalid_argument("no colon");
    w.low = std::stod(s.substr(0, colon));
    w.high = std::stod(s.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("bad HU window '" + s + "' (expected LOW:HIGH, e.g. -1000:400)");
  }
  if (!(w.low < w.high)) {
    throw ConfigError("bad HU window '" + s + "': low must be below high");
  }
  return w;
}

// Dotted keys from nested objects: {"loss": {"cycle": "l1"}} -> loss.cycle.
void flatten(const json& j, const std::string& prefix, json& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it.value().is_object()) {
      flatten(it.value(), key, out);
    } else {
      out[key] = it.value();
    }
  }
}

json read_config_file(const fs::path& path) {
  json raw;
  try {
    raw = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!raw.is_object()) throw ConfigError("config file " + path.string() + " must hold a JSON object");
  json flat = json::object();
  flatten(raw, "", flat);
  return flat;
}

std::string value_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

// ---------------------------------------------------------------------------
// Presets

json paper_best_pinned() {
  return {{"mode", "pe_cyclegan"},
          {"generator.backbone", "resnet"},
          {"generator.blocks", 50},
          {"discriminator.layers", 3},
          {"loss.adversarial", "mse"},
          {"loss.cycle", "ssim"},
          {"loss.lambda_cls", 0.3},
          {"loss.target", "rec_ct"},
          {"data.hu_filter", true}};
}

struct Column {
  std::string slug;
  json pinned;
};

std::vector<Column> table_columns(const std::string& name) {
  if (name == "table2") {
    return {{"with_classifier", {{"mode", "pe_cyclegan"}, {"loss.lambda_cls", 0.3}, {"loss.target", "rec_ct"}}},
            {"without_classifier", {{"mode", "cyclegan"}, {"loss.lambda_cls", 0.0}, {"loss.target", "none"}}}};
  }
  if (name == "table3") {
    return {{"ratio_1", {{"loss.lambda_cls", 1.0}}},
            {"ratio_0.3", {{"loss.lambda_cls", 0.3}}},
            {"ratio_0.1", {{"loss.lambda_cls", 0.1}}}};
  }
  if (name == "table4") {
    return {{"disc_3_layers", {{"discriminator.layers", 3}}},
            {"disc_4_layers", {{"discriminator.layers", 4}}}};
  }
  if (name == "table5") {
    return {{"bce_l1", {{"loss.adversarial", "bce"}, {"loss.cycle", "l1"}}},
            {"bce_ssim", {{"loss.adversarial", "bce"}, {"loss.cycle", "ssim"}}},
            {"mse_ssim", {{"loss.adversarial", "mse"}, {"loss.cycle", "ssim"}}}};
  }
  if (name == "table6") {
    return {{"on_rec_ct", {{"loss.target", "rec_ct"}}},
            {"on_fake_ct", {{"loss.target", "fake_ct"}}}};
  }
  return {};
}

}  // namespace

json default_config() {
  json cfg = training::TrainConfig().to_flat();
  cfg.update(data_defaults());
  cfg.update(pretrain_defaults());
  return cfg;
}

json canonical(const std::string& key, const json& value) {
  if (is_train_key(key)) {
    training::TrainConfig t;
    t.apply_flat(json{{key, value}});
    return t.to_flat()[key];
  }
  static const json defaults = [] {
    json d = data_defaults();
    d.update(pretrain_defaults());
    return d;
  }();
  if (!defaults.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  const json& def = defaults[key];
  const bool ok = (def.is_boolean() && value.is_boolean()) ||
                  (def.is_number_integer() && value.is_number_integer()) ||
                  (def.is_number_float() && value.is_number()) ||
                  (def.is_string() && value.is_string());
  if (!ok) {
    throw ConfigError("config key '" + key + "' expects a " + std::string(def.type_name()) +
                      ", got " + value.dump());
  }
  if (key == "data.interval") return interval_string(parse_interval(value.get<std::string>()));
  if (key == "data.pairing") {
    const std::string p = value.get<std::string>();
    if (p != "auto" && p != "paired" && p != "unpaired") {
      throw ConfigError("data.pairing must be auto, paired or unpaired, got '" + p + "'");
    }
  }
  if (def.is_number_float()) return value.get<double>();
  return value;
}

std::vector<std::string> preset_names() {
  return {"paper-best", "table2", "table3", "table4", "table5", "table6"};
}

std::optional<Preset> preset(const std::string& name) {
  if (name == "paper-best") return Preset{name, paper_best_pinned(), {{"pretrain.auto", true}}};
  const auto cols = table_columns(name);
  if (cols.empty()) return std::nullopt;
  // The columns vary some keys; the rest of the recommended recipe stays.
  Preset p{name, paper_best_pinned(), {{"pretrain.auto", true}}};
  for (const auto& c : cols) {
    for (auto it = c.pinned.begin(); it != c.pinned.end(); ++it) p.pinned.erase(it.key());
  }
  return p;
}

Resolution resolve(const std::string& preset_name, const json& file, const json& flags,
                   const std::vector<std::pair<std::string, std::string>>& flag_names) {
  Resolution r;
  r.preset = preset_name;
  std::optional<Preset> p;
  std::vector<Column> columns;
  if (!preset_name.empty()) {
    p = preset(preset_name);
    if (!p) {
      std::string names;
      for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
      throw ConfigError("unknown preset '" + preset_name + "' (available: " + names + ")");
    }
    columns = table_columns(preset_name);
    if (!columns.empty()) r.table = preset_name;
  }
  const std::map<std::string, std::string> spelled(flag_names.begin(), flag_names.end());

  const auto check = [&](const json& source, bool from_flags) {
    for (auto it = source.begin(); it != source.end(); ++it) {
      const std::string& key = it.key();
      const json value = canonical(key, it.value());
      const std::string who = from_flags ? (spelled.count(key) ? spelled.at(key) : "--" + key)
                                         : "config file key '" + key + "'";
      if (p && p->pinned.contains(key) && canonical(key, p->pinned[key]) != value) {
        throw ConfigError(who + " = " + value_text(value) + " conflicts with preset '" + preset_name +
                          "' (which sets " + key + " = " + value_text(p->pinned[key]) + ")");
      }
      for (const auto& c : columns) {
        if (c.pinned.contains(key)) {
          throw ConfigError(who + " conflicts with preset '" + preset_name + "', which varies " + key +
                            " across its runs");
        }
      }
    }
  };
  check(file, false);
  check(flags, true);

  json cfg = default_config();
  const auto apply = [&cfg](const json& src) {
    for (auto it = src.begin(); it != src.end(); ++it) cfg[it.key()] = canonical(it.key(), it.value());
  };
  if (p) {
    apply(p->defaults);
    apply(p->pinned);
  }
  apply(file);
  apply(flags);

  if (columns.empty()) {
    r.runs.push_back({"", "", cfg});
    return r;
  }
  const auto spec = metrics::table_preset(preset_name);
  for (std::size_t i = 0; i < columns.size(); ++i) {
    json c = cfg;
    for (auto it = columns[i].pinned.begin(); it != columns[i].pinned.end(); ++it) {
      c[it.key()] = canonical(it.key(), it.value());
    }
    r.runs.push_back({spec->columns.at(i), columns[i].slug, c});
  }
  return r;
}

namespace {

// ---------------------------------------------------------------------------
// Resolved config -> library structs

training::TrainConfig train_config(const json& cfg) {
  training::TrainConfig t;
  json sub = json::object();
  for (const auto& k : training::TrainConfig::flat_keys()) sub[k] = cfg.at(k);
  t.apply_flat(sub);
  return t;
}

ingest::DatasetOptions data_options(const json& cfg, bool want_paired) {
  ingest::DatasetOptions o;
  o.window = {cfg.at("data.window.low").get<double>(), cfg.at("data.window.high").get<double>()};
  if (!(o.window.low < o.window.high)) {
    throw ConfigError("bad HU window " + value_text(cfg["data.window.low"]) + ":" +
                      value_text(cfg["data.window.high"]) + ": low must be below high");
  }
  o.hu_filter = cfg.at("data.hu_filter");
  o.image_size = cfg.at("data.image_size");
  const std::string pairing = cfg.at("data.pairing");
  o.mode = pairing == "auto" ? (want_paired ? ingest::PairingMode::paired : ingest::PairingMode::unpaired)
                             : ingest::parse_pairing(pairing);
  o.interval = parse_interval(cfg.at("data.interval"));
  o.test_fraction = cfg.at("data.test_fraction");
  o.seed = cfg.at("seed");
  return o;
}

training::ClassifierTrainConfig pretrain_config(const json& cfg) {
  training::ClassifierTrainConfig c;
  c.epochs = cfg.at("pretrain.epochs");
  c.lr = cfg.at("pretrain.lr");
  c.batch_size = cfg.at("pretrain.batch_size");
  c.model.depth = cfg.at("pretrain.depth");
  c.model.base_channels = cfg.at("pretrain.base_channels");
  c.seed = cfg.at("seed");
  return c;
}

json subset(const json& cfg, const std::string& prefix) {
  json out = json::object();
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    if (it.key().rfind(prefix, 0) == 0) out[it.key()] = it.value();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run manifests

std::string fingerprint(const fs::path& p) {
  std::error_code ec;
  fs::path file = p;
  if (fs::is_directory(p, ec)) file = p / "manifest.json";
  if (!fs::is_regular_file(file, ec)) return "";
  const std::string text = io::read_text(file);
  return models::hex64(fnv1a(text.data(), text.size()));
}

json input_entry(const fs::path& p) { return {{"path", p.string()}, {"fingerprint", fingerprint(p)}}; }

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// run.json is byte-stable; the wall time goes to run_timing.json.
void write_command_manifest(const fs::path& out, const std::string& command, const json& config,
                            std::uint64_t seed, const json& inputs,
                            const std::vector<std::string>& artifacts, const Stopwatch& clock,
                            const json& extra = json::object()) {
  for (const auto& a : artifacts) {
    if (!fs::exists(out / a)) throw IoError("artifact missing at command exit", (out / a).string());
  }
  const std::string dumped = config.dump();
  json m = {{"format", "ct2ctpa-command"},
            {"version", 1},
            {"command", command},
            {"tool_version", CT2CTPA_VERSION},
            {"config", config},
            {"config_hash", models::hex64(fnv1a(dumped.data(), dumped.size()))},
            {"seed", seed},
            {"inputs", inputs},
            {"artifacts", artifacts}};
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  fs::create_directories(out);
  io::write_text(out / "run.json", m.dump(2) + "\n");
  io::write_text(out / "run_timing.json", json{{"wall_time_s", clock.seconds()}}.dump(2) + "\n");
}

json read_json(const fs::path& p) {
  if (!fs::exists(p)) throw IoError("file not found", p.string());
  return json::parse(io::read_text(p));
}

std::string manifest_format(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_regular_file(dir / "manifest.json", ec)) return "";
  try {
    return json::parse(io::read_text(dir / "manifest.json")).value("format", "");
  } catch (const json::exception&) {
    return "";
  }
}

// ---------------------------------------------------------------------------
// Datasets

// A preprocessed directory is taken as is; its settings replace the data.*
// config, and an explicit setting that disagrees is an error. Anything else
// is treated as raw studies and preprocessed in memory.
ingest::Dataset load_dataset(const fs::path& path, json& cfg, bool want_paired,
                             const std::map<std::string, std::string>& explicit_keys) {
  if (!fs::exists(path)) throw IoError("data directory not found", path.string());
  if (manifest_format(path) == "ct2ctpa-preprocessed") {
    ingest::Dataset ds = ingest::read_dataset(path);
    const auto& o = ds.options();
    const json actual = {{"data.window.low", o.window.low},
                         {"data.window.high", o.window.high},
                         {"data.hu_filter", o.hu_filter},
                         {"data.image_size", o.image_size},
                         {"data.pairing", ingest::to_string(o.mode)},
                         {"data.interval", interval_string(o.interval)},
                         {"data.test_fraction", o.test_fraction}};
    for (auto it = actual.begin(); it != actual.end(); ++it) {
      const auto e = explicit_keys.find(it.key());
      if (e != explicit_keys.end() && canonical(it.key(), cfg[it.key()]) != it.value()) {
        throw ConfigError(it.key() + " = " + value_text(cfg[it.key()]) + " (from " + e->second +
                          ") disagrees with the preprocessed dataset " + path.string() + ", which has " +
                          value_text(it.value()));
      }
      cfg[it.key()] = it.value();
    }
    return ds;
  }
  const ingest::DatasetOptions opts = data_options(cfg, want_paired);
  cfg["data.pairing"] = ingest::to_string(opts.mode);
  return ingest::build_dataset(ingest::discover_studies(path), opts);
}

// ---------------------------------------------------------------------------
// Flags

class Flags {
 public:
  template <class T>
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto v = std::make_shared<T>();
    CLI::Option* o = app->add_option(flag, *v, help);
    entries_.push_back({o, flag, [v, key](json& out) { out[key] = *v; }, {key}});
  }
  void add_switch(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto v = std::make_shared<bool>(false);
    CLI::Option* o = app->add_flag(flag, *v, help);
    std::string spelled = flag;
    std::replace(spelled.begin(), spelled.end(), ',', '/');
    spelled.erase(std::remove(spelled.begin(), spelled.end(), '!'), spelled.end());
    entries_.push_back({o, spelled, [v, key](json& out) { out[key] = *v; }, {key}});
  }
  void add_window(CLI::App* app) {
    auto v = std::make_shared<std::string>();
    CLI::Option* o = app->add_option("--window", *v, "HU window LOW:HIGH (default -1000:400)");
    entries_.push_back({o, "--window",
                        [v](json& out) {
                          const auto w = parse_window(*v);
                          out["data.window.low"] = w.low;
                          out["data.window.high"] = w.high;
                        },
                        {"data.window.low", "data.window.high"}});
  }
  void add_data_flags(CLI::App* app) {
    add<int>(app, "--size", "data.image_size", "training image side in pixels (default 256)");
    add_window(app);
    add_switch(app, "--hu-filter,!--no-hu-filter", "data.hu_filter",
               "apply the HU tissue window (default on)");
    add<std::string>(app, "--pairing", "data.pairing", "auto, paired or unpaired");
    add<std::string>(app, "--interval", "data.interval", "slice interval: all, gt or START:END");
    add<double>(app, "--test-fraction", "data.test_fraction", "held-out study fraction (default 0.2)");
  }

  json collect(std::vector<std::pair<std::string, std::string>>& names) const {
    json out = json::object();
    for (const auto& e : entries_) {
      if (e.option->count() == 0) continue;
      e.write(out);
      for (const auto& k : e.keys) names.emplace_back(k, e.flag);
    }
    return out;
  }

 private:
  struct Entry {
    CLI::Option* option;
    std::string flag;
    std::function<void(json&)> write;
    std::vector<std::string> keys;
  };
  std::vector<Entry> entries_;
};

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
  bool quiet = false;
  CLI::Option* seed_opt = nullptr;
};

void say(const Globals& g, const std::string& msg) {
  if (!g.quiet) std::fprintf(stderr, "%s\n", msg.c_str());
}

fs::path require_out(const Globals& g, const std::string& command) {
  if (g.out.empty()) throw ConfigError("--out is required for '" + command + "'");
  return g.out;
}

// Config sources common to train, preprocess and pretrain-classifier.
struct Sources {
  json file = json::object();
  json flags = json::object();
  std::vector<std::pair<std::string, std::string>> names;

  std::map<std::string, std::string> explicit_keys(const std::optional<Preset>& p) const {
    std::map<std::string, std::string> out;
    if (p) {
      for (auto it = p->pinned.begin(); it != p->pinned.end(); ++it) out[it.key()] = "preset '" + p->name + "'";
    }
    for (auto it = file.begin(); it != file.end(); ++it) out[it.key()] = "config file key '" + it.key() + "'";
    for (const auto& [k, f] : names) out[k] = f;
    return out;
  }
};

Sources gather(const Globals& g, const Flags& flags) {
  Sources s;
  if (!g.config.empty()) s.file = read_config_file(g.config);
  s.flags = flags.collect(s.names);
  if (g.seed_opt->count() > 0) {
    s.flags["seed"] = g.seed;
    s.names.emplace_back("seed", "--seed");
  }
  return s;
}

// ---------------------------------------------------------------------------
// Commands

struct PhantomArgs {
  int n = 8;
  int size = 256;
  int slices = 24;
  double pe_probability = 0.5;
  double noise = 10.0;
};

int cmd_phantom(const Globals& g, const PhantomArgs& a) {
  const Stopwatch clock;
  const fs::path out = require_out(g, "phantom");
  if (a.n < 0) throw ConfigError("--n must be nonnegative");
  phantom::PhantomSpec spec;
  spec.image_size = a.size;
  spec.n_slices = a.slices;
  spec.pe_lesion_probability = a.pe_probability;
  spec.noise_sigma = a.noise;
  spec.seed = g.seed;
  spec.validate();
  const auto manifest = phantom::generate_dataset(spec, a.n, out);
  std::vector<std::string> artifacts{"manifest.json"};
  for (const auto& s : manifest.studies) {
    artifacts.push_back(s.ct_dir);
    artifacts.push_back(s.ctpa_dir);
  }
  int with_pe = 0;
  for (const auto& s : manifest.studies) with_pe += s.has_pe;
  write_command_manifest(out, "phantom", {{"spec", phantom::spec_to_json(spec)}, {"n_studies", a.n}}, g.seed,
                         json::object(), artifacts, clock);
  say(g, "wrote " + std::to_string(a.n) + " phantom studies (" + std::to_string(with_pe) + " with PE) to " +
             out.string());
  return kOk;
}

int cmd_preprocess(const Globals& g, const Flags& flags, const std::string& data, const std::string& ctpa_root) {
  const Stopwatch clock;
  const fs::path out = require_out(g, "preprocess");
  if (data.empty()) throw ConfigError("--data is required for 'preprocess'");
  if (!fs::is_directory(data)) throw IoError("data directory not found", data);
  const Sources src = gather(g, flags);
  json cfg = resolve("", src.file, src.flags, src.names).runs[0].config;
  const ingest::DatasetOptions opts = data_options(cfg, false);
  cfg["data.pairing"] = ingest::to_string(opts.mode);
  const ingest::Dataset ds = ctpa_root.empty()
                                 ? ingest::build_dataset(ingest::discover_studies(data), opts)
                                 : ingest::build_dataset(data, ctpa_root, opts);
  ingest::write_dataset(ds, out);
  json inputs = {{"data", input_entry(data)}};
  if (!ctpa_root.empty()) inputs["ctpa_root"] = input_entry(ctpa_root);
  json resolved = subset(cfg, "data.");
  resolved["seed"] = cfg["seed"];
  write_command_manifest(out, "preprocess", resolved, cfg["seed"], inputs, {"manifest.json", "arrays", "png"},
                         clock);
  say(g, "preprocessed " + std::to_string(ds.ct_slices().size()) + " CT and " +
             std::to_string(ds.ctpa_slices().size()) + " CTPA slices into " + out.string());
  return kOk;
}

void print_classifier(const Globals& g, const training::ClassifierResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "classifier: train accuracy %.3f, held-out accuracy %.3f (balanced %.3f) on %zu slices",
                r.train_accuracy, r.val_accuracy, r.val_balanced_accuracy, r.n_val);
  say(g, buf);
}

int cmd_pretrain(const Globals& g, const Flags& flags, const std::string& data, bool shuffle_labels) {
  const Stopwatch clock;
  const fs::path out = require_out(g, "pretrain-classifier");
  if (data.empty()) throw ConfigError("--data is required for 'pretrain-classifier'");
  const Sources src = gather(g, flags);
  json cfg = resolve("", src.file, src.flags, src.names).runs[0].config;
  const ingest::Dataset ds = load_dataset(data, cfg, false, src.explicit_keys(std::nullopt));
  training::ClassifierTrainConfig c = pretrain_config(cfg);
  c.shuffle_labels = shuffle_labels;
  const auto r = training::pretrain_classifier(c, ds, out, g.quiet);
  print_classifier(g, r);
  json resolved = subset(cfg, "pretrain.");
  resolved.update(subset(cfg, "data."));
  resolved["seed"] = cfg["seed"];
  resolved["shuffle_labels"] = shuffle_labels;
  write_command_manifest(out, "pretrain-classifier", resolved, cfg["seed"], {{"data", input_entry(data)}},
                         {"manifest.json", "params.bin"}, clock,
                         {{"val_accuracy", r.val_accuracy}, {"val_balanced_accuracy", r.val_balanced_accuracy}});
  return kOk;
}

struct TrainArgs {
  std::string preset;
  std::string data;
};

int cmd_train(const Globals& g, const Flags& flags, const TrainArgs& a) {
  const Stopwatch clock;
  const fs::path out = require_out(g, "train");
  if (a.data.empty()) throw ConfigError("--data is required for 'train'");
  const Sources src = gather(g, flags);
  const Resolution res = resolve(a.preset, src.file, src.flags, src.names);
  const auto p = a.preset.empty() ? std::nullopt : preset(a.preset);

  // Validate every run before any data is touched.
  bool any_pix2pix = false;
  bool needs_classifier = false;
  for (const auto& run : res.runs) {
    training::TrainConfig t = train_config(run.config);
    any_pix2pix = any_pix2pix || t.mode == training::Mode::pix2pix;
    if (t.mode == training::Mode::pe_cyclegan && t.classifier.empty() && run.config.at("pretrain.auto")) {
      needs_classifier = true;
      t.classifier = "<auto>";
    }
    t.validate();
  }

  json cfg = res.runs[0].config;
  const ingest::Dataset ds = load_dataset(a.data, cfg, any_pix2pix, src.explicit_keys(p));
  json inputs = {{"data", input_entry(a.data)}};

  std::string classifier_dir;
  if (needs_classifier) {
    say(g, "pretraining the PE classifier");
    classifier_dir = (out / "classifier").string();
    const auto r = training::pretrain_classifier(pretrain_config(cfg), ds, classifier_dir, g.quiet);
    print_classifier(g, r);
  }

  json matrix = json::array();
  std::vector<std::string> artifacts;
  if (needs_classifier) artifacts.push_back("classifier");
  for (const auto& run : res.runs) {
    json rc = run.config;
    for (const char* k : {"data.window.low", "data.window.high", "data.hu_filter", "data.image_size",
                          "data.pairing", "data.interval", "data.test_fraction"}) {
      rc[k] = cfg[k];
    }
    training::TrainConfig t = train_config(rc);
    if (t.mode == training::Mode::pe_cyclegan && t.classifier.empty() && !classifier_dir.empty()) {
      t.classifier = classifier_dir;
    }
    if (!t.classifier.empty() && t.mode == training::Mode::pe_cyclegan) {
      inputs["classifier"] = input_entry(t.classifier);
    }
    const fs::path run_dir = run.slug.empty() ? out : out / run.slug;
    say(g, "training " + training::to_string(t.mode) + (run.label.empty() ? "" : " [" + run.label + "]") +
               " into " + run_dir.string());
    training::TrainHooks hooks;
    hooks.quiet = g.quiet;
    const auto art = training::train(t, ds, run_dir, hooks);
    if (!run.slug.empty()) {
      matrix.push_back({{"label", run.label}, {"slug", run.slug}, {"config_hash", t.hash()}});
      artifacts.push_back(run.slug);
    } else {
      for (const char* f : {"config.json", "losses.csv", "manifest.json", "checkpoints", "samples"}) {
        artifacts.push_back(f);
      }
    }
  }
  json extra = json::object();
  if (!res.table.empty()) {
    io::write_text(out / "matrix.json", json{{"format", "ct2ctpa-matrix"},
                                             {"version", 1},
                                             {"preset", res.preset},
                                             {"table", res.table},
                                             {"columns", matrix}}
                                                .dump(2) +
                                            "\n");
    artifacts.push_back("matrix.json");
  }
  json resolved = cfg;
  if (!res.preset.empty()) extra["preset"] = res.preset;
  write_command_manifest(out, "train", resolved, cfg["seed"], inputs, artifacts, clock, extra);
  return kOk;
}

struct MatrixEntry {
  std::string label;
  fs::path dir;
};

struct Matrix {
  std::string table;
  std::vector<MatrixEntry> runs;
};

Matrix read_matrix(const fs::path& dir) {
  const json m = read_json(dir / "matrix.json");
  if (m.value("format", "") != "ct2ctpa-matrix") throw IoError("not a run matrix", (dir / "matrix.json").string());
  Matrix out;
  out.table = m.at("table");
  for (const auto& c : m.at("columns")) out.runs.push_back({c.at("label"), dir / c.at("slug").get<std::string>()});
  return out;
}

std::vector<ingest::SliceRecord> pick_split(const std::vector<ingest::SliceRecord>& all, const std::string& split) {
  if (split == "all") return all;
  if (split != "train" && split != "test") throw ConfigError("--split must be train, test or all");
  std::vector<ingest::SliceRecord> out;
  for (const auto& r : all) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

// Writes <out>/{png,arrays,manifest.json} plus input/ (CT) and reference/
// (CTPA with the same name, when every slice has one) for evaluate/report.
std::vector<std::string> generate_one(const fs::path& checkpoint, const ingest::Dataset& ds,
                                      const std::string& split, const fs::path& out, json& extra) {
  const fs::path gpath = training::resolve_generator(checkpoint);
  const auto g = models::load_generator(gpath);
  const auto slices = pick_split(ds.ct_slices(), split);
  if (slices.empty()) throw ConfigError("split '" + split + "' has no CT slices");
  training::generate_dir(*g, slices, out);
  fs::create_directories(out / "input");
  for (const auto& r : slices) ingest::export_png(r.image, out / "input" / (r.name + ".png"));
  std::map<std::string, const ingest::SliceRecord*> ctpa;
  for (const auto& r : ds.ctpa_slices()) ctpa[r.name] = &r;
  const bool complete = std::all_of(slices.begin(), slices.end(),
                                    [&](const ingest::SliceRecord& r) { return ctpa.count(r.name) > 0; });
  std::vector<std::string> artifacts{"png", "arrays", "manifest.json", "input"};
  if (complete) {
    fs::create_directories(out / "reference");
    for (const auto& r : slices) ingest::export_png(ctpa[r.name]->image, out / "reference" / (r.name + ".png"));
    artifacts.push_back("reference");
    extra["reference"] = "reference";
  }
  extra["generator"] = gpath.string();
  extra["count"] = slices.size();
  return artifacts;
}

struct GenerateArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string matrix;
};

int cmd_generate(const Globals& g, const GenerateArgs& a) {
  const Stopwatch clock;
  if (a.data.empty()) throw ConfigError("--data is required for 'generate'");
  if (a.matrix.empty() == a.checkpoint.empty()) throw ConfigError("give exactly one of --checkpoint and --matrix");
  json cfg = default_config();
  const ingest::Dataset ds = load_dataset(a.data, cfg, false, {});
  std::vector<std::pair<fs::path, fs::path>> jobs;  // checkpoint, out
  if (!a.matrix.empty()) {
    for (const auto& r : read_matrix(a.matrix).runs) jobs.emplace_back(r.dir, r.dir / "generated");
  } else {
    jobs.emplace_back(a.checkpoint, require_out(g, "generate"));
  }
  for (const auto& [ckpt, out] : jobs) {
    json extra = json::object();
    const auto artifacts = generate_one(ckpt, ds, a.split, out, extra);
    write_command_manifest(out, "generate", {{"split", a.split}}, 0,
                           {{"checkpoint", input_entry(training::resolve_generator(ckpt))},
                            {"data", input_entry(a.data)}},
                           artifacts, clock, extra);
    say(g, "generated " + value_text(extra["count"]) + " images into " + out.string());
  }
  return kOk;
}

struct EvaluateArgs {
  std::string generated;
  std::string reference;
  std::string matrix;
  bool align = false;
  std::string extractor = "builtin";
  std::string lpips_variant = "cosine";
};

void evaluate_one(const Globals& g, const EvaluateArgs& a, const fs::path& generated, fs::path reference,
                  const fs::path& out) {
  const Stopwatch clock;
  fs::path gen_png = generated;
  if (manifest_format(generated) == "ct2ctpa-generated") {
    gen_png = generated / "png";
    if (reference.empty() && fs::exists(generated / "run.json")) {
      const json run = read_json(generated / "run.json");
      if (run.contains("reference")) reference = generated / run["reference"].get<std::string>();
    }
  }
  if (reference.empty()) throw ConfigError("--reference is required: " + generated.string() + " records none");
  metrics::EvalConfig ec;
  ec.align = a.align;
  ec.extractor = a.extractor;
  if (a.lpips_variant == "cosine") {
    ec.lpips_variant = metrics::LpipsVariant::cosine;
  } else if (a.lpips_variant == "squared_l2") {
    ec.lpips_variant = metrics::LpipsVariant::squared_l2;
  } else {
    throw ConfigError("--lpips-variant must be cosine or squared_l2");
  }
  metrics::MetricsReport report = metrics::evaluate_run(gen_png, reference, ec);
  metrics::write_report(report, out);
  const json cfg = {{"align", a.align}, {"extractor", a.extractor}, {"lpips_variant", a.lpips_variant}};
  write_command_manifest(out, "evaluate", cfg, 0,
                         {{"generated", input_entry(generated)}, {"reference", input_entry(reference)}},
                         {"metrics.csv", "metrics.json"}, clock);
  const auto& v = report.aggregate;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu pairs: PSNR %s  SSIM %.3f  MAE %.2f  LPIPS %.3f  FID %s", report.pairs.size(),
                metrics::format_value(v.psnr, 2).c_str(), v.ssim, v.mae, v.lpips,
                v.fid ? metrics::format_value(*v.fid, 2).c_str() : "-");
  say(g, buf);
}

int cmd_evaluate(const Globals& g, const EvaluateArgs& a) {
  if (!a.matrix.empty()) {
    if (!a.generated.empty() || !a.reference.empty()) {
      throw ConfigError("--matrix cannot be combined with --generated/--reference");
    }
    for (const auto& r : read_matrix(a.matrix).runs) evaluate_one(g, a, r.dir / "generated", {}, r.dir / "evaluation");
    return kOk;
  }
  if (a.generated.empty()) throw ConfigError("--generated is required for 'evaluate'");
  evaluate_one(g, a, a.generated, a.reference, require_out(g, "evaluate"));
  return kOk;
}

struct ReportArgs {
  std::vector<std::string> runs;
  std::vector<std::string> labels;
  std::string table;
  std::string matrix;
  int grid_count = 4;
};

fs::path metrics_file(const fs::path& p) {
  if (fs::is_directory(p)) {
    if (fs::exists(p / "metrics.json")) return p / "metrics.json";
    if (fs::exists(p / "evaluation" / "metrics.json")) return p / "evaluation" / "metrics.json";
  }
  if (fs::is_regular_file(p)) return p;
  throw IoError("no metrics.json found (run `ct2ctpa evaluate` first)", p.string());
}

int cmd_report(const Globals& g, const ReportArgs& a) {
  const Stopwatch clock;
  const fs::path out = require_out(g, "report");
  std::vector<fs::path> files;
  std::vector<std::string> labels = a.labels;
  std::string table = a.table;
  if (!a.matrix.empty()) {
    if (!a.runs.empty()) throw ConfigError("--matrix cannot be combined with --runs");
    const Matrix m = read_matrix(a.matrix);
    if (table.empty()) table = m.table;
    for (const auto& r : m.runs) {
      files.push_back(metrics_file(r.dir / "evaluation"));
      if (a.labels.empty()) labels.push_back(r.label);
    }
  } else {
    for (const auto& r : a.runs) files.push_back(metrics_file(r));
  }
  if (files.empty()) throw ConfigError("'report' needs at least one run (--runs or --matrix)");

  std::vector<metrics::MetricsReport> reports;
  for (const auto& f : files) reports.push_back(metrics::MetricsReport::from_json(read_json(f)));

  metrics::TableSpec spec;
  if (!table.empty()) {
    const auto t = metrics::table_preset(table);
    if (!t) throw ConfigError("unknown table '" + table + "'");
    spec = *t;
    if (!a.labels.empty() && a.labels != spec.columns && a.matrix.empty()) {
      throw ConfigError("--labels conflicts with --table " + table + ", which fixes the column headers");
    }
  } else {
    spec.title = "Comparison of the generated results";
    if (labels.empty()) {
      for (const auto& f : files) {
        const fs::path d = f.parent_path();
        labels.push_back(d.filename() == "evaluation" ? d.parent_path().filename().string() : d.filename().string());
      }
    }
    spec.columns = labels;
  }
  if (spec.columns.size() != reports.size()) {
    throw ConfigError("table has " + std::to_string(spec.columns.size()) + " columns but " +
                      std::to_string(reports.size()) + " runs were given");
  }

  // Per-pair runs must cover the same pairs.
  std::vector<std::set<std::string>> pair_sets;
  for (const auto& r : reports) {
    std::set<std::string> s;
    for (const auto& p : r.pairs) s.insert(p.name);
    pair_sets.push_back(std::move(s));
  }
  for (std::size_t i = 1; i < reports.size(); ++i) {
    if (pair_sets[i] != pair_sets[0]) {
      std::vector<std::string> diff;
      std::set_symmetric_difference(pair_sets[0].begin(), pair_sets[0].end(), pair_sets[i].begin(),
                                    pair_sets[i].end(), std::back_inserter(diff));
      std::string msg = "runs cover different image pairs (" + files[0].string() + " vs " + files[i].string() + "):";
      for (std::size_t k = 0; k < std::min<std::size_t>(diff.size(), 10); ++k) msg += " " + diff[k];
      if (diff.size() > 10) msg += " ...";
      throw IoError(msg, files[i].string());
    }
  }

  std::vector<metrics::MetricValues> values;
  for (const auto& r : reports) values.push_back(r.aggregate);
  const std::string tsv = metrics::render_table(spec, values);
  fs::create_directories(out);
  io::write_text(out / "table.tsv", tsv);
  io::write_text(out / "table.md", metrics::render_markdown(spec, values));
  if (!g.quiet) std::cout << tsv;
  std::vector<std::string> artifacts{"table.tsv", "table.md"};

  // Grids: input CT | one panel per run | reference CTPA.
  if (!pair_sets[0].empty() && a.grid_count > 0) {
    fs::create_directories(out / "grids");
    int written = 0;
    for (const auto& name : pair_sets[0]) {
      if (written == a.grid_count) break;
      std::vector<io::Gray8> panels;
      const auto& prov0 = reports[0].provenance;
      const fs::path generated0 = prov0.value("generated", "");
      const fs::path input = generated0.parent_path() / "input" / name;  // names carry .png
      if (!generated0.empty() && fs::exists(input)) panels.push_back(io::read_png(input));
      for (const auto& r : reports) {
        const fs::path gdir = r.provenance.value("generated", "");
        panels.push_back(io::read_png(gdir / name));
      }
      const fs::path ref = fs::path(prov0.value("reference", "")) / name;
      if (fs::exists(ref)) panels.push_back(io::read_png(ref));
      io::write_png(out / "grids" / name, io::hconcat(panels));
      ++written;
    }
    artifacts.push_back("grids");
  }
  json inputs = json::array();
  for (const auto& f : files) inputs.push_back({{"path", f.string()}, {"fingerprint", fingerprint(f)}});
  write_command_manifest(out, "report", {{"table", table}, {"columns", spec.columns}, {"grid_count", a.grid_count}},
                         0, inputs, artifacts, clock);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Simulate CTPA images from plain CT with cycle-consistent GANs.", "ct2ctpa"};
  app.set_version_flag("--version", CT2CTPA_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  g.seed_opt = app.add_option("--seed", g.seed, "random seed (default 0)");
  app.add_option("--config", g.config, "JSON file of config keys (flat or nested)");
  app.add_option("--out", g.out, "output directory");
  app.add_flag("--quiet", g.quiet, "no progress output");

  // phantom
  PhantomArgs pa;
  auto* phantom_cmd = app.add_subcommand("phantom", "write a synthetic CT/CTPA phantom dataset");
  phantom_cmd->add_option("--n", pa.n, "number of studies")->capture_default_str();
  phantom_cmd->add_option("--size", pa.size, "image side in pixels")->capture_default_str();
  phantom_cmd->add_option("--slices", pa.slices, "slices per study")->capture_default_str();
  phantom_cmd->add_option("--pe-probability", pa.pe_probability, "probability a study has PE")->capture_default_str();
  phantom_cmd->add_option("--noise", pa.noise, "Gaussian noise sigma in HU")->capture_default_str();

  // preprocess
  std::string pre_data, pre_ctpa;
  Flags pre_flags;
  auto* pre_cmd = app.add_subcommand("preprocess", "window, resize and split studies into a training set");
  pre_cmd->add_option("--data", pre_data, "phantom dataset or directory of studies");
  pre_cmd->add_option("--ctpa-root", pre_ctpa, "separate CTPA root matched by study name");
  pre_flags.add_data_flags(pre_cmd);

  // pretrain-classifier
  std::string clf_data;
  bool shuffle = false;
  Flags clf_flags;
  auto* clf_cmd = app.add_subcommand("pretrain-classifier", "train the frozen PE classifier");
  clf_cmd->add_option("--data", clf_data, "preprocessed dataset or raw studies");
  clf_cmd->add_flag("--shuffle-labels", shuffle, "permute the labels (chance-level control)");
  clf_flags.add<int>(clf_cmd, "--epochs", "pretrain.epochs", "training epochs");
  clf_flags.add<double>(clf_cmd, "--lr", "pretrain.lr", "learning rate");
  clf_flags.add<int>(clf_cmd, "--batch-size", "pretrain.batch_size", "batch size");
  clf_flags.add<int>(clf_cmd, "--depth", "pretrain.depth", "residual stages");
  clf_flags.add<int>(clf_cmd, "--base-channels", "pretrain.base_channels", "channels of the first stage");
  clf_flags.add_data_flags(clf_cmd);

  // train
  TrainArgs ta;
  Flags tf;
  auto* train_cmd = app.add_subcommand("train", "train pix2pix, cyclegan or pe-cyclegan");
  train_cmd->add_option("--preset", ta.preset, "paper-best, or table2 ... table6 for a run matrix");
  train_cmd->add_option("--data", ta.data, "preprocessed dataset or raw studies");
  tf.add<std::string>(train_cmd, "--mode", "mode", "pix2pix, cyclegan or pe-cyclegan");
  tf.add<std::string>(train_cmd, "--classifier", "classifier", "pretrained classifier checkpoint (pe-cyclegan)");
  tf.add<int>(train_cmd, "--epochs", "epochs", "training epochs");
  tf.add<double>(train_cmd, "--lr", "optim.lr", "Adam learning rate");
  tf.add<double>(train_cmd, "--beta1", "optim.beta1", "Adam beta1");
  tf.add<double>(train_cmd, "--beta2", "optim.beta2", "Adam beta2");
  tf.add<int>(train_cmd, "--batch-size", "batch_size", "batch size");
  tf.add<std::string>(train_cmd, "--backbone", "generator.backbone", "unet or resnet");
  tf.add<int>(train_cmd, "--blocks", "generator.blocks", "resnet blocks: 9, 34 or 50");
  tf.add<int>(train_cmd, "--unet-depth", "generator.unet_depth", "unet stride-2 stages");
  tf.add<int>(train_cmd, "--base-channels", "generator.base_channels", "generator width");
  tf.add<int>(train_cmd, "--disc-layers", "discriminator.layers", "patch discriminator layers: 3, 4 or 6");
  tf.add<int>(train_cmd, "--disc-base-channels", "discriminator.base_channels", "discriminator width");
  tf.add<int>(train_cmd, "--pixel-disc-base-channels", "pixel_discriminator.base_channels",
              "pixel discriminator width (pix2pix)");
  tf.add<std::string>(train_cmd, "--adversarial", "loss.adversarial", "bce or mse");
  tf.add<std::string>(train_cmd, "--cycle", "loss.cycle", "l1 or ssim");
  tf.add<double>(train_cmd, "--lambda-cycle", "loss.lambda_cycle", "cycle (or pix2pix L1) weight");
  tf.add<double>(train_cmd, "--lambda-cls", "loss.lambda_cls", "classifier supervision weight in [0, 1]");
  tf.add<std::string>(train_cmd, "--target", "loss.target", "supervised image: rec_ct, fake_ct or none");
  tf.add<double>(train_cmd, "--lambda-identity", "loss.lambda_identity", "identity loss weight");
  tf.add<int>(train_cmd, "--checkpoint-interval", "checkpoint_interval", "epochs between checkpoints");
  tf.add<int>(train_cmd, "--sample-interval", "sample_interval", "epochs between sample grids");
  tf.add<int>(train_cmd, "--samples", "n_samples", "sample grids per epoch");
  tf.add<int>(train_cmd, "--replay", "replay_buffer", "fake replay buffer size");
  tf.add_switch(train_cmd, "--auto-pretrain,!--no-auto-pretrain", "pretrain.auto",
                "pretrain a classifier when pe-cyclegan has none");
  tf.add<int>(train_cmd, "--pretrain-epochs", "pretrain.epochs", "classifier pretraining epochs");
  tf.add_data_flags(train_cmd);

  // generate
  GenerateArgs ga;
  auto* gen_cmd = app.add_subcommand("generate", "simulate CTPA images with a trained generator");
  gen_cmd->add_option("--checkpoint", ga.checkpoint, "generator checkpoint or training run directory");
  gen_cmd->add_option("--data", ga.data, "preprocessed dataset or raw studies");
  gen_cmd->add_option("--split", ga.split, "train, test or all")->capture_default_str();
  gen_cmd->add_option("--matrix", ga.matrix, "run matrix from `train --preset tableN`");

  // evaluate
  EvaluateArgs ea;
  auto* eval_cmd = app.add_subcommand("evaluate", "PSNR, SSIM, MAE, LPIPS and FID against references");
  eval_cmd->add_option("--generated", ea.generated, "output of `generate`, or a directory of PNGs");
  eval_cmd->add_option("--reference", ea.reference, "reference PNG directory (default: recorded by generate)");
  eval_cmd->add_option("--matrix", ea.matrix, "evaluate every run of a matrix");
  eval_cmd->add_flag("--align", ea.align, "correct shift and scale before measuring");
  eval_cmd->add_option("--extractor", ea.extractor, "builtin, or a feature extractor checkpoint")
      ->capture_default_str();
  eval_cmd->add_option("--lpips-variant", ea.lpips_variant, "cosine or squared_l2")->capture_default_str();

  // report
  ReportArgs ra;
  auto* report_cmd = app.add_subcommand("report", "comparison table and image grids over evaluated runs");
  report_cmd->add_option("--runs", ra.runs, "evaluation directories or metrics.json files");
  report_cmd->add_option("--labels", ra.labels, "column headers");
  report_cmd->add_option("--table", ra.table, "table1 ... table6 layout");
  report_cmd->add_option("--matrix", ra.matrix, "run matrix from `train --preset tableN`");
  report_cmd->add_option("--grids", ra.grid_count, "image grids to write")->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (phantom_cmd->parsed()) return cmd_phantom(g, pa);
    if (pre_cmd->parsed()) return cmd_preprocess(g, pre_flags, pre_data, pre_ctpa);
    if (clf_cmd->parsed()) return cmd_pretrain(g, clf_flags, clf_data, shuffle);
    if (train_cmd->parsed()) return cmd_train(g, tf, ta);
    if (gen_cmd->parsed()) return cmd_generate(g, ga);
    if (eval_cmd->parsed()) return cmd_evaluate(g, ea);
    if (report_cmd->parsed()) return cmd_report(g, ra);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "ct2ctpa: error: %s\n", e.what());
    return kUsageError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ct2ctpa: error: %s\n", e.what());
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace ct2ctpa::cli
