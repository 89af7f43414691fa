// synlab command line: generate datasets, train, evaluate, run whole
// experiments and project embeddings with MDS.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "synlab.hpp"

namespace fs = std::filesystem;
using namespace synlab;

namespace {

constexpr const char* kConfigKeys = R"(Config file keys (sections of `key = value` lines, # starts a comment):

[experiment]
  kind         depth_width_grid | long_tail | attributes | im_ablation |
               dm_ablation | cross_domain   (optional; enables kind checks)
  seeds        comma-separated u64 list                       (default 1)
  output       output directory; --out overrides it

[generator]
  render_seed           u64 seed of the renderer weights
  identity_gain         scale of the identity contribution     (1.0)
  nuisance_gain         scale of the nuisance contribution     (1.0)
  noise_gain            scale of the per-sample noise          (0.35)
  nuisance_correlation  0..1; how much the real-proxy nuisance weights
                        share with the synthetic ones          (0.0)

[train]
  epochs, base_lr, decay_epochs (list), decay_factor, momentum,
  weight_decay, batch_size, hidden (list of layer widths), embedding_dim

[margin]
  preset       arcface | cosface | sphereface | softmax
  m1, m2, m3, s   override single terms of the preset (default arcface)

[data.NAME]  a training set        [test.NAME]  a held-out test set
  identities, depth                 balanced layout, or
  group_identities, group_depths    lists, one entry per group
  attributes   none | all | any of expression, pose, illumination (list)
  expression_variance   multiplier on the expression draw        (0.3)
  im           off | soft | narrow   identity mixup mode          (off)
  domain       synthetic | real_proxy                             (synthetic)
  seed_offset  added to the run seed when building the set        (0)
  pairs        [test] sections only: verification pairs          (2000)

[run.NAME]   one trained model; without run sections every data set is a run
  data          name of the primary [data.*] section
  real          optional [data.*] section with domain = real_proxy
  domain_mixup  true to mix `data` with `real` per pair           (false)
)";

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
  auto* opt = cmd->add_option("--config", c.config, "Experiment config file")->check(CLI::ExistingFile);
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "Run seed; replaces the config's seed list");
  cmd->add_option("--out", c.out, "Output directory");
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = load_experiment_config(c.config);
  if (c.seed) cfg.seeds = {*c.seed};
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (cfg.output_dir.empty()) cfg.output_dir = "synlab-out";
  return cfg;
}

void log_line(const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); }

void print_outputs(const fs::path& dir) {
  const fs::path manifest = write_manifest(dir);
  std::cout << nlohmann::json{{"status", "ok"}, {"out", dir.generic_string()}, {"manifest", manifest.generic_string()}}
                   .dump()
            << "\n";
}

int cmd_generate(const Common& c, const std::string& only) {
  const ExperimentConfig cfg = load(c);
  const std::uint64_t seed = cfg.seeds.front();
  const Generator gen(LatentConfig{}, cfg.render);
  fs::create_directories(cfg.output_dir);
  bool any = false;
  for (const auto& d : cfg.datasets) {
    if (!only.empty() && d.name != only) continue;
    save_dataset(build_dataset(seeded(d.spec, seed), gen), cfg.output_dir / (d.name + ".synd"));
    any = true;
  }
  for (const auto& t : cfg.tests) {
    if (!only.empty() && t.name != only) continue;
    const TestSet ts = build_test_set(t, seed, gen);
    save_dataset(ts.dataset, cfg.output_dir / (t.name + ".synd"));
    write_with(cfg.output_dir / (t.name + "-pairs.csv"), [&](std::ostream& o) {
      o << "a,b,same\n";
      for (const Pair& p : ts.pairs.pairs) o << p.a << "," << p.b << "," << (p.is_same ? 1 : 0) << "\n";
    });
    any = true;
  }
  if (!any) throw InvalidArgument("no data or test section named '" + only + "'");
  print_outputs(cfg.output_dir);
  return 0;
}

int cmd_train(const Common& c, const std::string& only, bool verbose) {
  const ExperimentConfig cfg = load(c);
  const Generator gen(LatentConfig{}, cfg.render);
  fs::create_directories(cfg.output_dir);
  bool any = false;
  for (const auto& run : cfg.runs) {
    if (!only.empty() && run.name != only) continue;
    any = true;
    for (std::uint64_t seed : cfg.seeds) {
      std::ostringstream history;
      history << "epoch,mean_loss,lr\n";
      const TrainResult res = train_run(cfg, run, seed, gen, [&](const EpochRecord& r) {
        history << r.epoch << "," << detail::num(r.mean_loss) << "," << detail::num(r.lr) << "\n";
        if (verbose) log_line(run.name + " seed " + std::to_string(seed) + " epoch " + std::to_string(r.epoch) +
                              " loss " + std::to_string(r.mean_loss));
      });
      save_checkpoint(Checkpoint{res.net, res.momentum}, checkpoint_path(cfg.output_dir, run.name, seed));
      write_text_file(cfg.output_dir / (run.name + "-seed" + std::to_string(seed) + "-history.csv"), history.str());
    }
  }
  if (!any) throw InvalidArgument("no run named '" + only + "'");
  print_outputs(cfg.output_dir);
  return 0;
}

int cmd_eval(const Common& c, const std::vector<std::string>& checkpoints, const std::vector<std::string>& formats) {
  const ExperimentConfig cfg = load(c);
  if (cfg.tests.empty()) throw ConfigError(0, "eval needs at least one [test.*] section");
  const Generator gen(LatentConfig{}, cfg.render);
  ExperimentReport rep;
  rep.kind = "eval";
  rep.config_hash = config_hash(cfg);
  rep.run_id = run_id(cfg);
  for (std::uint64_t seed : cfg.seeds) {
    std::vector<TestSet> tests;
    for (const auto& t : cfg.tests) tests.push_back(build_test_set(t, seed, gen));
    for (const auto& path : checkpoints) {
      const Checkpoint ck = load_checkpoint(path);
      for (const auto& ts : tests)
        rep.cells.push_back({fs::path(path).stem().string(), ts.name, seed, verify(ck.net, ts.pairs, ts.dataset), {}});
    }
  }
  emit_report(rep, cfg.output_dir, formats);
  print_outputs(cfg.output_dir);
  return 0;
}

int cmd_experiment(const Common& c, const std::string& kind, const std::vector<std::string>& formats, bool quiet) {
  ExperimentConfig cfg;
  if (!c.config.empty()) {
    cfg = load(c);
  } else {
    const auto k = parse_experiment_kind(kind);
    if (!k) throw InvalidArgument("give --config or --kind (unknown kind '" + kind + "')");
    cfg = ExperimentConfig::canned(*k);
    if (c.seed) cfg.seeds = {*c.seed};
    cfg.output_dir = c.out.empty() ? fs::path("synlab-out") : fs::path(c.out);
  }
  // Reject bad format tags before hours of training.
  for (const auto& f : formats)
    if (known_report_formats().count(f) == 0) throw InvalidArgument("unknown report format '" + f + "'");
  RunOptions opt;
  opt.checkpoint_dir = cfg.output_dir / "checkpoints";
  if (!quiet) opt.log = log_line;
  const ExperimentReport rep = run_experiment(cfg, opt);
  write_text_file(cfg.output_dir / "config.ini", to_config_text(cfg));
  emit_report(rep, cfg.output_dir, formats);
  print_outputs(cfg.output_dir);
  if (rep.partial) {
    std::cerr << nlohmann::json{{"error", "training"}, {"message", rep.failure}, {"partial", true}}.dump() << "\n";
    return 3;
  }
  return 0;
}

int cmd_mds(const Common& c, const std::string& data, const std::string& checkpoint, std::size_t classes) {
  const ExperimentConfig cfg = load(c);
  const std::uint64_t seed = cfg.seeds.front();
  const Generator gen(LatentConfig{}, cfg.render);
  std::optional<DatasetSpec> spec;
  for (const auto& d : cfg.datasets)
    if (d.name == data) spec = d.spec;
  for (const auto& t : cfg.tests)
    if (t.name == data) spec = t.spec;
  if (!spec) throw InvalidArgument("no data or test section named '" + data + "'");
  const Dataset ds = build_dataset(seeded(*spec, seed), gen);

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.samples[i].provenance.primary < classes) rows.push_back(i);
  if (rows.size() < 3) throw InvalidArgument("MDS needs at least 3 samples; raise --classes");
  RowMatrix features = observation_matrix(ds, rows);
  if (!checkpoint.empty()) features = normalize_rows(forward_embed(load_checkpoint(checkpoint).net, features));
  std::vector<std::uint32_t> cls;
  for (std::size_t r : rows) cls.push_back(ds.samples[r].provenance.primary);

  const Embedding2D e = classical_mds(features, cls);
  const auto spread = intra_class_spread(features, cls);
  fs::create_directories(cfg.output_dir);
  write_with(cfg.output_dir / "mds.csv", [&](std::ostream& o) { write_mds_csv(e, o); });
  write_with(cfg.output_dir / "mds.svg", [&](std::ostream& o) { write_mds_svg(e, o, data); });
  write_with(cfg.output_dir / "spread.csv", [&](std::ostream& o) {
    o << "class,spread\n";
    for (const auto& [k, v] : spread) o << k << "," << detail::num(v) << "\n";
  });
  if (e.degenerate) log_line("warning: fewer than 2 positive eigenvalues; missing axes are zero");
  print_outputs(cfg.output_dir);
  return 0;
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synlab: synthetic face-recognition laboratory"};
  app.footer(kConfigKeys);
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, exp_c, mds_c;
  std::string gen_data, train_run_name, exp_kind, mds_data, mds_ckpt;
  std::vector<std::string> eval_ckpts, eval_formats{"csv"}, exp_formats{"csv", "svg", "json"};
  std::size_t mds_classes = 10;
  bool verbose = false, quiet = false;

  auto* gen = app.add_subcommand("generate", "Build the config's data and test sets and save them");
  add_common(gen, gen_c);
  gen->add_option("--data", gen_data, "Only this data/test section");

  auto* tr = app.add_subcommand("train", "Train the config's runs and save checkpoints");
  add_common(tr, train_c);
  tr->add_option("--run", train_run_name, "Only this run section");
  tr->add_flag("-v,--verbose", verbose, "Log every epoch");

  auto* ev = app.add_subcommand("eval", "Verify checkpoints on the config's test sets");
  add_common(ev, eval_c);
  ev->add_option("--checkpoint", eval_ckpts, "Checkpoint file(s)")->required()->check(CLI::ExistingFile);
  ev->add_option("--formats", eval_formats, "Report formats: csv, svg, json")->delimiter(',');

  auto* ex = app.add_subcommand("experiment", "Run a whole experiment and emit its report");
  add_common(ex, exp_c, false);
  ex->add_option("--kind", exp_kind, "Canned experiment when no --config is given");
  ex->add_option("--formats", exp_formats, "Report formats: csv, svg, json")->delimiter(',');
  ex->add_flag("-q,--quiet", quiet, "No progress log");

  auto* md = app.add_subcommand("mds", "Project a data set (raw or embedded) to 2-D with classical MDS");
  add_common(md, mds_c);
  md->add_option("--data", mds_data, "Data or test section to project")->required();
  md->add_option("--checkpoint", mds_ckpt, "Embed with this network first")->check(CLI::ExistingFile);
  md->add_option("--classes", mds_classes, "Use identities 0..N-1");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (*gen) return cmd_generate(gen_c, gen_data);
    if (*tr) return cmd_train(train_c, train_run_name, verbose);
    if (*ev) return cmd_eval(eval_c, eval_ckpts, eval_formats);
    if (*ex) return cmd_experiment(exp_c, exp_kind, exp_formats, quiet);
    if (*md) return cmd_mds(mds_c, mds_data, mds_ckpt, mds_classes);
  } catch (const synlab::Error& e) {
    print_error(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
