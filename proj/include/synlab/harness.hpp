#pragma once

// Experiment orchestration: declarative configs, canned experiment families,
// and the (run x seed x test) loop that fills an ExperimentReport.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "synlab/config.hpp"
#include "synlab/evaluator.hpp"
#include "synlab/serialization.hpp"

namespace synlab {

enum class ExperimentKind : std::uint8_t { depth_width_grid, long_tail, attributes, im_ablation, dm_ablation, cross_domain };

inline constexpr std::array<ExperimentKind, 6> kAllExperimentKinds{
    ExperimentKind::depth_width_grid, ExperimentKind::long_tail,   ExperimentKind::attributes,
    ExperimentKind::im_ablation,      ExperimentKind::dm_ablation, ExperimentKind::cross_domain};

constexpr const char* to_string(ExperimentKind k) noexcept {
  switch (k) {
    case ExperimentKind::depth_width_grid: return "depth_width_grid";
    case ExperimentKind::long_tail: return "long_tail";
    case ExperimentKind::attributes: return "attributes";
    case ExperimentKind::im_ablation: return "im_ablation";
    case ExperimentKind::dm_ablation: return "dm_ablation";
    case ExperimentKind::cross_domain: return "cross_domain";
  }
  return "?";
}

inline std::optional<ExperimentKind> parse_experiment_kind(std::string_view s) {
  for (ExperimentKind k : kAllExperimentKinds)
    if (s == to_string(k)) return k;
  return std::nullopt;
}

constexpr const char* to_string(IdentityMixupMode m) noexcept {
  switch (m) {
    case IdentityMixupMode::off: return "off";
    case IdentityMixupMode::soft_label_full_grid: return "soft";
    case IdentityMixupMode::primary_label_narrow_grid: return "narrow";
  }
  return "?";
}

/// A named dataset recipe. `spec.seed` is an offset added to each run seed.
struct NamedDataset {
  std::string name;
  DatasetSpec spec;
  bool operator==(const NamedDataset&) const = default;
};

/// A held-out verification set.
struct NamedTest {
  std::string name;
  DatasetSpec spec;
  std::size_t pairs = 2000;
  bool operator==(const NamedTest&) const = default;
};

/// One trained model: `data` names the primary dataset, `real` optionally a
/// real-proxy dataset trained alongside (mixed when `domain_mixup` is set).
struct RunDef {
  std::string name;
  std::string data;
  std::string real;
  bool domain_mixup = false;
  bool operator==(const RunDef&) const = default;
};

struct ExperimentConfig {
  std::optional<ExperimentKind> kind;
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path output_dir;
  RenderParams render;
  TrainConfig train;  // train.seed is replaced by each run seed
  MarginConfig margin = MarginConfig::arcface();
  std::vector<NamedDataset> datasets;
  std::vector<NamedTest> tests;
  std::vector<RunDef> runs;

  bool operator==(const ExperimentConfig&) const = default;

  const NamedDataset& dataset(const std::string& name) const {
    for (const auto& d : datasets)
      if (d.name == name) return d;
    throw ConfigError(0, "unknown dataset '" + name + "'");
  }

  const RunDef& run(const std::string& name) const {
    for (const auto& r : runs)
      if (r.name == name) return r;
    throw ConfigError(0, "unknown run '" + name + "'");
  }

  /// Structural checks, plus the fields each kind needs.
  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(0, msg); };
    if (seeds.empty()) fail("at least one seed is required");
    try {
      train.validate();
      margin.validate();
      for (const auto& d : datasets) d.spec.validate();
      for (const auto& t : tests) t.spec.validate();
    } catch (const InvalidArgument& e) {
      fail(e.what());
    }
    std::set<std::string, std::less<>> names;
    for (const auto& d : datasets)
      if (!names.insert(d.name).second) fail("duplicate dataset name '" + d.name + "'");
    names.clear();
    for (const auto& t : tests) {
      if (!names.insert(t.name).second) fail("duplicate test name '" + t.name + "'");
      if (t.pairs < 10) fail("test '" + t.name + "' needs at least 10 pairs");
    }
    names.clear();
    for (const auto& r : runs) {
      if (!names.insert(r.name).second) fail("duplicate run name '" + r.name + "'");
      const NamedDataset& d = dataset(r.data);
      if (!r.real.empty()) {
        const NamedDataset& real = dataset(r.real);
        if (real.spec.domain != Domain::real_proxy)
          fail("run '" + r.name + "': dataset '" + r.real + "' given as real must have domain real_proxy");
      }
      if (r.domain_mixup && r.real.empty()) fail("run '" + r.name + "': domain_mixup needs a real dataset");
      if (r.domain_mixup && d.spec.domain != Domain::synthetic)
        fail("run '" + r.name + "': domain mixup mixes a synthetic dataset with a real-proxy one");
    }
    if (!kind) return;
    if (runs.empty()) fail(std::string(to_string(*kind)) + " needs at least one run");
    if (tests.empty()) fail(std::string(to_string(*kind)) + " needs at least one test set");
    switch (*kind) {
      case ExperimentKind::depth_width_grid:
        for (const auto& r : runs)
          if (dataset(r.data).spec.group_identities.size() != 1)
            fail("depth_width_grid runs use balanced datasets (identities x depth)");
        break;
      case ExperimentKind::im_ablation:
        if (std::none_of(runs.begin(), runs.end(),
                         [&](const RunDef& r) { return dataset(r.data).spec.im_mode != IdentityMixupMode::off; }))
          fail("im_ablation needs a run with identity mixup on");
        break;
      case ExperimentKind::dm_ablation:
        if (std::none_of(runs.begin(), runs.end(), [](const RunDef& r) { return r.domain_mixup; }))
          fail("dm_ablation needs a run with domain_mixup = true and a real-proxy dataset");
        break;
      case ExperimentKind::cross_domain: {
        const bool syn = std::any_of(tests.begin(), tests.end(),
                                     [](const NamedTest& t) { return t.spec.domain == Domain::synthetic; });
        const bool real = std::any_of(tests.begin(), tests.end(),
                                      [](const NamedTest& t) { return t.spec.domain == Domain::real_proxy; });
        if (!syn || !real) fail("cross_domain needs a synthetic and a real_proxy test set");
        break;
      }
      case ExperimentKind::long_tail:
      case ExperimentKind::attributes: break;
    }
  }

  /// The desk-scale training recipe shared by the canned experiments.
  static TrainConfig desk_recipe() {
    TrainConfig t;
    t.epochs = 160;
    t.decay_epochs = {96, 120, 144};
    t.base_lr = 0.01;
    return t;
  }

  static ExperimentConfig canned(ExperimentKind k);
};

namespace detail {

inline DatasetSpec balanced_spec(std::size_t ids, std::size_t depth, Domain domain = Domain::synthetic,
                                 IdentityMixupMode im = IdentityMixupMode::off, std::uint64_t offset = 0) {
  DatasetSpec s = DatasetSpec::balanced(ids, depth);
  s.domain = domain;
  s.im_mode = im;
  s.seed = offset;
  return s;
}

inline NamedTest default_test(Domain d = Domain::synthetic, std::string name = "syn_test") {
  NamedTest t{std::move(name), balanced_spec(200, 10, d), 2000};
  t.spec.held_out = true;
  return t;
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::canned(ExperimentKind k) {
  using detail::balanced_spec;
  ExperimentConfig c;
  c.kind = k;
  c.seeds = {1, 2, 3};
  c.train = desk_recipe();
  c.tests = {detail::default_test()};
  switch (k) {
    case ExperimentKind::depth_width_grid:
      c.datasets = {{"1000x10", balanced_spec(1000, 10)}, {"100x100", balanced_spec(100, 100)}};
      break;
    case ExperimentKind::long_tail:
      // The three long-tail group vectors at 40 identities per group.
      c.datasets = {{"UB1", DatasetSpec::grouped(40, {2, 2, 6, 40, 200})},
                    {"UB2", DatasetSpec::grouped(40, {4, 16, 30, 80, 120})},
                    {"balanced", DatasetSpec::grouped(40, {50, 50, 50, 50, 50})}};
      break;
    case ExperimentKind::attributes: {
      const std::pair<const char*, AttributeSet> sets[] = {{"none", AttributeSet::none()},
                                                           {"expression", {true, false, false}},
                                                           {"pose", {false, true, false}},
                                                           {"illumination", {false, false, true}},
                                                           {"all", AttributeSet::all()}};
      for (const auto& [name, attrs] : sets) {
        DatasetSpec s = balanced_spec(200, 20);
        s.attribute_variation = attrs;
        c.datasets.push_back({name, s});
      }
      break;
    }
    case ExperimentKind::im_ablation:
      c.datasets = {{"im_off", balanced_spec(200, 20)},
                    {"im_soft", balanced_spec(200, 20, Domain::synthetic, IdentityMixupMode::soft_label_full_grid)},
                    {"im_narrow", balanced_spec(200, 20, Domain::synthetic, IdentityMixupMode::primary_label_narrow_grid)}};
      break;
    case ExperimentKind::dm_ablation:
      c.datasets = {{"syn", balanced_spec(1000, 10, Domain::synthetic, IdentityMixupMode::soft_label_full_grid)},
                    {"real", balanced_spec(100, 10, Domain::real_proxy, IdentityMixupMode::off, 1000)}};
      c.tests = {detail::default_test(Domain::real_proxy, "real_test")};
      c.runs = {{"syn", "syn", "", false}, {"real", "real", "", false}, {"mix", "syn", "real", true}};
      break;
    case ExperimentKind::cross_domain:
      c.datasets = {{"syn", balanced_spec(1000, 10)},
                    {"real", balanced_spec(1000, 10, Domain::real_proxy, IdentityMixupMode::off, 1000)}};
      c.tests = {detail::default_test(Domain::synthetic, "syn_test"), detail::default_test(Domain::real_proxy, "real_test")};
      c.runs = {{"synface", "syn", "", false}, {"realface", "real", "", false}};
      break;
  }
  if (c.runs.empty())
    for (const auto& d : c.datasets) c.runs.push_back({d.name, d.name, "", false});
  return c;
}

// ---------------------------------------------------------------------------
// Config text <-> ExperimentConfig

namespace detail {

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream ss;
  for (std::size_t i = 0; i < v.size(); ++i) ss << (i ? ", " : "") << v[i];
  return ss.str();
}

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::string attributes_text(const AttributeSet& a) {
  std::vector<std::string> parts;
  if (a.expression) parts.emplace_back("expression");
  if (a.pose) parts.emplace_back("pose");
  if (a.illumination) parts.emplace_back("illumination");
  return parts.empty() ? "none" : join(parts);
}

inline void write_spec(std::ostringstream& out, const DatasetSpec& s) {
  out << "group_identities = " << join(s.group_identities) << "\n";
  out << "group_depths = " << join(s.group_depths) << "\n";
  out << "attributes = " << attributes_text(s.attribute_variation) << "\n";
  out << "expression_variance = " << format_double(s.expression_variance) << "\n";
  out << "im = " << to_string(s.im_mode) << "\n";
  out << "domain = " << to_string(s.domain) << "\n";
  out << "seed_offset = " << s.seed << "\n";
}

inline const std::set<std::string, std::less<>>& spec_keys() {
  static const std::set<std::string, std::less<>> keys{"identities",   "depth",      "group_identities",
                                                       "group_depths", "attributes", "expression_variance",
                                                       "im",           "domain",     "seed_offset"};
  return keys;
}

inline DatasetSpec read_spec(const ConfigFile& f, const std::string& sec) {
  DatasetSpec s;
  const bool balanced = f.has(sec, "identities") || f.has(sec, "depth");
  const bool grouped = f.has(sec, "group_identities") || f.has(sec, "group_depths");
  if (balanced && grouped)
    throw ConfigError(f.section_line(sec), "[" + sec + "] mixes identities/depth with group_identities/group_depths");
  if (balanced) {
    s.group_identities = {f.get<std::size_t>(sec, "identities")};
    s.group_depths = {f.get<std::size_t>(sec, "depth")};
  } else if (grouped) {
    s.group_identities = f.get_list<std::size_t>(sec, "group_identities");
    s.group_depths = f.get_list<std::size_t>(sec, "group_depths");
  } else {
    throw ConfigError(f.section_line(sec), "[" + sec + "] needs identities and depth (or group_identities and group_depths)");
  }
  if (f.has(sec, "attributes")) {
    s.attribute_variation = AttributeSet::none();
    for (const std::string& a : f.get_list<std::string>(sec, "attributes")) {
      if (a == "none") continue;
      if (a == "all") s.attribute_variation = AttributeSet::all();
      else if (a == "expression") s.attribute_variation.expression = true;
      else if (a == "pose") s.attribute_variation.pose = true;
      else if (a == "illumination") s.attribute_variation.illumination = true;
      else throw ConfigError(f.entry(sec, "attributes").line, "unknown attribute '" + a + "'");
    }
  }
  s.expression_variance = f.get<double>(sec, "expression_variance", s.expression_variance);
  if (f.has(sec, "im")) {
    const std::string im = f.get<std::string>(sec, "im");
    if (im == "off") s.im_mode = IdentityMixupMode::off;
    else if (im == "soft") s.im_mode = IdentityMixupMode::soft_label_full_grid;
    else if (im == "narrow") s.im_mode = IdentityMixupMode::primary_label_narrow_grid;
    else throw ConfigError(f.entry(sec, "im").line, "im must be off, soft or narrow, got '" + im + "'");
  }
  if (f.has(sec, "domain")) {
    const std::string d = f.get<std::string>(sec, "domain");
    if (d == "synthetic") s.domain = Domain::synthetic;
    else if (d == "real_proxy") s.domain = Domain::real_proxy;
    else throw ConfigError(f.entry(sec, "domain").line, "domain must be synthetic or real_proxy, got '" + d + "'");
  }
  s.seed = f.get<std::uint64_t>(sec, "seed_offset", 0);
  try {
    s.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(f.section_line(sec), "[" + sec + "]: " + e.what());
  }
  return s;
}

}  // namespace detail

/// Canonical config text. Every field is written, so parsing it back yields an
/// equal config and hashing it identifies the experiment.
inline std::string to_config_text(const ExperimentConfig& c) {
  using detail::format_double;
  using detail::join;
  std::ostringstream out;
  out << "[experiment]\n";
  if (c.kind) out << "kind = " << to_string(*c.kind) << "\n";
  out << "seeds = " << join(c.seeds) << "\n";
  if (!c.output_dir.empty()) out << "output = " << c.output_dir.generic_string() << "\n";

  const RenderParams& r = c.render;
  out << "\n[generator]\n";
  out << "render_seed = " << r.render_seed << "\n";
  out << "identity_gain = " << format_double(r.identity_gain) << "\n";
  out << "nuisance_gain = " << format_double(r.nuisance_gain) << "\n";
  out << "noise_gain = " << format_double(r.noise_gain) << "\n";
  out << "nuisance_correlation = " << format_double(r.nuisance_correlation) << "\n";

  const TrainConfig& t = c.train;
  out << "\n[train]\n";
  out << "epochs = " << t.epochs << "\n";
  out << "base_lr = " << format_double(t.base_lr) << "\n";
  out << "decay_epochs = " << join(t.decay_epochs) << "\n";
  out << "decay_factor = " << format_double(t.decay_factor) << "\n";
  out << "momentum = " << format_double(t.momentum) << "\n";
  out << "weight_decay = " << format_double(t.weight_decay) << "\n";
  out << "batch_size = " << t.batch_size << "\n";
  out << "hidden = " << join(t.hidden) << "\n";
  out << "embedding_dim = " << t.embedding_dim << "\n";

  out << "\n[margin]\n";
  out << "m1 = " << format_double(c.margin.m1) << "\nm2 = " << format_double(c.margin.m2)
      << "\nm3 = " << format_double(c.margin.m3) << "\ns = " << format_double(c.margin.s) << "\n";

  for (const auto& d : c.datasets) {
    out << "\n[data." << d.name << "]\n";
    detail::write_spec(out, d.spec);
  }
  for (const auto& tst : c.tests) {
    out << "\n[test." << tst.name << "]\n";
    detail::write_spec(out, tst.spec);
    out << "pairs = " << tst.pairs << "\n";
  }
  for (const auto& run : c.runs) {
    out << "\n[run." << run.name << "]\n";
    out << "data = " << run.data << "\n";
    if (!run.real.empty()) out << "real = " << run.real << "\n";
    out << "domain_mixup = " << (run.domain_mixup ? "true" : "false") << "\n";
  }
  return out.str();
}

inline ExperimentConfig parse_experiment_config(const ConfigFile& f) {
  ExperimentConfig c;
  for (const std::string& sec : f.sections()) {
    const bool known = sec == "experiment" || sec == "generator" || sec == "train" || sec == "margin" ||
                       sec.starts_with("data.") || sec.starts_with("test.") || sec.starts_with("run.");
    if (!known) throw ConfigError(f.section_line(sec), "unknown section [" + sec + "]");
  }

  f.reject_unknown_keys("experiment", {"kind", "seeds", "output"});
  if (f.has("experiment", "kind")) {
    const std::string k = f.get<std::string>("experiment", "kind");
    c.kind = parse_experiment_kind(k);
    if (!c.kind) throw ConfigError(f.entry("experiment", "kind").line, "unknown experiment kind '" + k + "'");
  }
  c.seeds = f.get_list<std::uint64_t>("experiment", "seeds", c.seeds);
  if (f.has("experiment", "output")) c.output_dir = f.get<std::string>("experiment", "output");

  f.reject_unknown_keys("generator",
                        {"render_seed", "identity_gain", "nuisance_gain", "noise_gain", "nuisance_correlation"});
  RenderParams& r = c.render;
  r.render_seed = f.get<std::uint64_t>("generator", "render_seed", r.render_seed);
  r.identity_gain = f.get<double>("generator", "identity_gain", r.identity_gain);
  r.nuisance_gain = f.get<double>("generator", "nuisance_gain", r.nuisance_gain);
  r.noise_gain = f.get<double>("generator", "noise_gain", r.noise_gain);
  r.nuisance_correlation = f.get<double>("generator", "nuisance_correlation", r.nuisance_correlation);
  if (r.nuisance_correlation < 0.0 || r.nuisance_correlation > 1.0)
    throw ConfigError(f.entry("generator", "nuisance_correlation").line, "nuisance_correlation must lie in [0, 1]");

  f.reject_unknown_keys("train", {"epochs", "base_lr", "decay_epochs", "decay_factor", "momentum", "weight_decay",
                                  "batch_size", "hidden", "embedding_dim"});
  TrainConfig& t = c.train;
  t.epochs = f.get<std::size_t>("train", "epochs", t.epochs);
  t.base_lr = f.get<double>("train", "base_lr", t.base_lr);
  t.decay_epochs = f.get_list<std::size_t>("train", "decay_epochs", t.decay_epochs);
  t.decay_factor = f.get<double>("train", "decay_factor", t.decay_factor);
  t.momentum = f.get<double>("train", "momentum", t.momentum);
  t.weight_decay = f.get<double>("train", "weight_decay", t.weight_decay);
  t.batch_size = f.get<std::size_t>("train", "batch_size", t.batch_size);
  t.hidden = f.get_list<std::size_t>("train", "hidden", t.hidden);
  t.embedding_dim = f.get<std::size_t>("train", "embedding_dim", t.embedding_dim);
  try {
    t.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(f.section_line("train"), std::string("[train]: ") + e.what());
  }

  f.reject_unknown_keys("margin", {"preset", "m1", "m2", "m3", "s"});
  if (f.has("margin", "preset")) {
    const std::string p = f.get<std::string>("margin", "preset");
    if (p == "arcface") c.margin = MarginConfig::arcface();
    else if (p == "cosface") c.margin = MarginConfig::cosface();
    else if (p == "sphereface") c.margin = MarginConfig::sphereface();
    else if (p == "softmax") c.margin = MarginConfig::softmax();
    else throw ConfigError(f.entry("margin", "preset").line, "unknown margin preset '" + p + "'");
  }
  c.margin.m1 = f.get<double>("margin", "m1", c.margin.m1);
  c.margin.m2 = f.get<double>("margin", "m2", c.margin.m2);
  c.margin.m3 = f.get<double>("margin", "m3", c.margin.m3);
  c.margin.s = f.get<double>("margin", "s", c.margin.s);
  try {
    c.margin.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(f.section_line("margin"), std::string("[margin]: ") + e.what());
  }

  for (const std::string& sec : f.sections_with_prefix("data.")) {
    f.reject_unknown_keys(sec, detail::spec_keys());
    c.datasets.push_back({sec.substr(5), detail::read_spec(f, sec)});
  }
  for (const std::string& sec : f.sections_with_prefix("test.")) {
    auto keys = detail::spec_keys();
    keys.insert("pairs");
    f.reject_unknown_keys(sec, keys);
    NamedTest tst{sec.substr(5), detail::read_spec(f, sec), f.get<std::size_t>(sec, "pairs", 2000)};
    tst.spec.held_out = true;
    c.tests.push_back(std::move(tst));
  }
  for (const std::string& sec : f.sections_with_prefix("run.")) {
    f.reject_unknown_keys(sec, {"data", "real", "domain_mixup"});
    RunDef run{sec.substr(4), f.get<std::string>(sec, "data"), f.get<std::string>(sec, "real", std::string{}),
               f.get<bool>(sec, "domain_mixup", false)};
    auto known = [&](const std::string& n) {
      return std::any_of(c.datasets.begin(), c.datasets.end(), [&](const NamedDataset& d) { return d.name == n; });
    };
    if (!known(run.data)) throw ConfigError(f.entry(sec, "data").line, "no [data." + run.data + "] section");
    if (!run.real.empty() && !known(run.real))
      throw ConfigError(f.entry(sec, "real").line, "no [data." + run.real + "] section");
    c.runs.push_back(std::move(run));
  }
  // Without explicit runs, every dataset is trained on by itself.
  if (c.runs.empty())
    for (const auto& d : c.datasets) c.runs.push_back({d.name, d.name, "", false});

  c.validate();
  return c;
}

inline ExperimentConfig parse_experiment_config(std::string_view text) {
  return parse_experiment_config(ConfigFile::parse(text));
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(ConfigFile::load(path));
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t config_hash(const ExperimentConfig& c) { return fnv1a64(to_config_text(c)); }

/// Short, git-style identifier derived from the config hash.
inline std::string run_id(const ExperimentConfig& c) { return hex64(config_hash(c)).substr(0, 12); }

// ---------------------------------------------------------------------------
// Running

struct RunCell {
  std::string train_set;
  std::string test_set;
  std::uint64_t seed = 0;
  std::optional<VerificationReport> verification;
  std::string failure;  // nonempty when the run failed

  bool failed() const noexcept { return !verification.has_value(); }
  double accuracy() const { return verification ? verification->accuracy : std::nan(""); }
};

struct AggregateRow {
  std::string train_set;
  std::string test_set;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single seed
  std::size_t count = 0;
};

/// Mean and sample standard deviation of the successful cells of each
/// (train_set, test_set), in first-appearance order.
inline std::vector<AggregateRow> aggregate(const std::vector<RunCell>& cells) {
  std::vector<AggregateRow> rows;
  std::vector<std::vector<double>> values;
  for (const auto& c : cells) {
    if (c.failed()) continue;
    auto it = std::find_if(rows.begin(), rows.end(), [&](const AggregateRow& r) {
      return r.train_set == c.train_set && r.test_set == c.test_set;
    });
    if (it == rows.end()) {
      rows.push_back({c.train_set, c.test_set, 0.0, 0.0, 0});
      values.emplace_back();
      it = rows.end() - 1;
    }
    values[static_cast<std::size_t>(it - rows.begin())].push_back(c.accuracy());
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& v = values[i];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    rows[i].mean = mean;
    rows[i].stddev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    rows[i].count = v.size();
  }
  return rows;
}

struct ExperimentReport {
  std::string kind;
  std::string run_id;
  std::uint64_t config_hash = 0;
  double wall_seconds = 0.0;
  std::vector<RunCell> cells;  // ordered by (run, test, seed)
  bool partial = false;
  std::string failure;

  std::vector<AggregateRow> aggregates() const { return aggregate(cells); }

  /// Mean accuracy of one (train_set, test_set); NaN when absent.
  double mean(const std::string& train_set, const std::string& test_set) const {
    for (const auto& a : aggregates())
      if (a.train_set == train_set && a.test_set == test_set) return a.mean;
    return std::nan("");
  }
};

struct RunOptions {
  /// Where per-run checkpoints go; empty to skip them.
  std::filesystem::path checkpoint_dir;
  std::function<void(const std::string&)> log;
};

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, const std::string& run,
                                             std::uint64_t seed) {
  return dir / (run + "-seed" + std::to_string(seed) + ".synw");
}

/// Dataset for a run seed: the spec's seed field is an offset.
inline DatasetSpec seeded(DatasetSpec spec, std::uint64_t seed) {
  spec.seed += seed;
  return spec;
}

/// Builds the held-out set and its pairs. Pairs depend only on the label
/// layout and the seed, so test sets differing only in domain share them.
inline TestSet build_test_set(const NamedTest& t, std::uint64_t seed, const Generator& gen) {
  TestSet ts;
  ts.name = t.name;
  DatasetSpec spec = seeded(t.spec, seed);
  spec.held_out = true;
  ts.dataset = build_dataset(spec, gen);
  Rng rng = make_rng(spec.seed, Stream::pairs);
  ts.pairs = build_pair_protocol(ts.dataset, t.pairs, rng);
  return ts;
}

/// Trains one run for one seed.
inline TrainResult train_run(const ExperimentConfig& cfg, const RunDef& run, std::uint64_t seed, const Generator& gen,
                             const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  const Dataset primary = build_dataset(seeded(cfg.dataset(run.data).spec, seed), gen);
  Dataset real;
  TrainingData data{&primary, nullptr};
  if (!run.real.empty()) {
    real = build_dataset(seeded(cfg.dataset(run.real).spec, seed), gen);
    data.real = &real;
  }
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  tc.domain_mixup = run.domain_mixup;
  return train(tc, cfg.margin, data, std::nullopt, std::nullopt, on_epoch);
}

/// Every run x seed is trained once and verified on every test set. A
/// non-finite loss stops the experiment; cells finished so far are kept and
/// the failing ones carry the error.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentReport rep;
  rep.kind = cfg.kind ? to_string(*cfg.kind) : "custom";
  rep.config_hash = config_hash(cfg);
  rep.run_id = run_id(cfg);
  const Generator gen(LatentConfig{}, cfg.render);
  auto log = [&](const std::string& msg) {
    if (opt.log) opt.log(msg);
  };
  if (!opt.checkpoint_dir.empty()) std::filesystem::create_directories(opt.checkpoint_dir);

  // cells[run][test][seed]
  std::vector<std::vector<std::vector<std::optional<RunCell>>>> grid(
      cfg.runs.size(), std::vector<std::vector<std::optional<RunCell>>>(
                           cfg.tests.size(), std::vector<std::optional<RunCell>>(cfg.seeds.size())));
  for (std::size_t si = 0; si < cfg.seeds.size() && !rep.partial; ++si) {
    const std::uint64_t seed = cfg.seeds[si];
    std::vector<TestSet> tests;
    for (const auto& t : cfg.tests) tests.push_back(build_test_set(t, seed, gen));
    for (std::size_t ri = 0; ri < cfg.runs.size(); ++ri) {
      const RunDef& run = cfg.runs[ri];
      log("train " + run.name + " seed " + std::to_string(seed));
      try {
        const TrainResult res = train_run(cfg, run, seed, gen);
        if (!opt.checkpoint_dir.empty())
          save_checkpoint(Checkpoint{res.net, res.momentum}, checkpoint_path(opt.checkpoint_dir, run.name, seed));
        for (std::size_t ti = 0; ti < tests.size(); ++ti) {
          RunCell cell{run.name, tests[ti].name, seed, verify(res.net, tests[ti].pairs, tests[ti].dataset), {}};
          log("  " + run.name + " on " + tests[ti].name + ": " + std::to_string(cell.accuracy()));
          grid[ri][ti][si] = std::move(cell);
        }
      } catch (const TrainingError& e) {
        rep.partial = true;
        rep.failure = run.name + " seed " + std::to_string(seed) + ": " + e.what();
        for (std::size_t ti = 0; ti < tests.size(); ++ti)
          grid[ri][ti][si] = RunCell{run.name, tests[ti].name, seed, std::nullopt, e.what()};
        log("failed: " + rep.failure);
        break;
      }
    }
  }
  for (auto& by_test : grid)
    for (auto& by_seed : by_test)
      for (auto& cell : by_seed)
        if (cell) rep.cells.push_back(std::move(*cell));
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace synlab
