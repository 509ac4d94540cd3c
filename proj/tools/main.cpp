// carrygap: implied-discount extraction, benchmark curves, carry-gap panel,
// clustered regressions, leave-one-year-out validation, and synthetic data.
//
// `run` executes every configured stage; the stage subcommands execute one at
// a time against the same config and produce byte-identical artifacts.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>

#include "carrygap/pipeline.hpp"
#include "carrygap/synthgen.hpp"

namespace {

using namespace carrygap;

struct CliOverrides {
  std::string config;
  std::string benchmark;
  std::string specs;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;
};

void add_common(CLI::App* cmd, CliOverrides& o) {
  cmd->add_option("--config", o.config, "run configuration file (key = value)")
      ->required();
  cmd->add_option("--benchmark", o.benchmark, "override benchmark curve: ois|dgs");
  cmd->add_option("--spec", o.specs, "override spec list: pooled|spx|rut, comma separated, or all");
  cmd->add_option("--out", o.out, "override output directory");
  cmd->add_option("--seed", o.seed, "override RNG seed")
      ->each([flag = &o.seed_set](const std::string&) { *flag = true; });
  cmd->add_option("--workers", o.workers, "worker threads (default from config)");
}

RunConfig load_config(const CliOverrides& o) {
  RunConfig cfg = parse_run_config(o.config);
  if (!o.benchmark.empty()) cfg.benchmark = parse_curve_kind(o.benchmark);
  if (!o.specs.empty()) cfg.specs = parse_spec_list(o.specs);
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.seed_set) cfg.seed = o.seed;
  if (o.workers > 0) cfg.workers = o.workers;
  return cfg;
}

int run_stage(const CliOverrides& o, const char* name, void (*stage)(const RunConfig&)) {
  try {
    const RunConfig cfg = load_config(o);
    validate_config(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    stage(cfg);
    std::cerr << name << ": done -> " << cfg.out_dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_synth(const std::string& preset, const std::string& out_dir, std::uint64_t seed) {
  std::filesystem::create_directories(out_dir);
  if (preset == "panel") {
    PlantedPanelSpec sp;
    sp.seed = seed;
    const GeneratedPanel gen = gen_regression_panel(sp);
    OutputFile p_out(out_dir + "/panel.csv");
    p_out.write_line(std::string(kPanelHeader));
    for (const auto& r : gen.rows)
      p_out.write_line(std::string(to_string(r.market)) + "," + r.date.to_string() + "," +
                       r.expiry.to_string() + "," + fmt_double(r.tau) + "," +
                       std::string(bin_label(r.bin)) + "," + fmt_double(r.cg_bp) + "," +
                       fmt_double(r.gbm_1y) + "," + fmt_double(r.gbm_10y) + "," +
                       fmt_double(r.ba_over_tau) + "," + fmt_double(r.nfci) + "," +
                       (r.market == Market::SPX ? "1" : "0"));
    p_out.commit();
    ojson truth;
    truth["preset"] = preset;
    truth["seed"] = seed;
    ojson coef;
    for (size_t i = 0; i < gen.truth.names.size(); ++i)
      coef[gen.truth.names[i]] = gen.truth.coef[i];
    truth["coefficients"] = coef;
    truth["noise_sd_bp"] = gen.truth.noise_sd_bp;
    truth["n_rows"] = long(gen.rows.size());
    write_json(out_dir + "/truth.json", truth);
    std::cerr << "synth panel: " << gen.rows.size() << " rows -> " << out_dir << "\n";
    return 0;
  }
  if (preset == "dataset") {
    DatasetSpec ds;
    ds.seed = seed;
    const DatasetTruth truth = write_synthetic_dataset(out_dir, ds);
    ojson t;
    t["preset"] = preset;
    t["seed"] = seed;
    t["cg_mean_bp"] = truth.cg_mean_bp;
    t["cg_sd_bp"] = truth.cg_sd_bp;
    t["realized_mean_cg_bp"] = truth.realized_mean_cg_bp;
    t["realized_mean_spx"] = truth.realized_mean_spx;
    t["realized_mean_rut"] = truth.realized_mean_rut;
    t["n_cells"] = truth.n_cells;
    write_json(out_dir + "/truth.json", t);

    RunConfig cfg;
    const DatasetFiles files = dataset_files(out_dir);
    cfg.quotes_spx = files.quotes_spx;
    cfg.quotes_rut = files.quotes_rut;
    cfg.ois = files.ois;
    cfg.dgs = files.dgs;
    cfg.vix = files.vix;
    cfg.rvx = files.rvx;
    cfg.nfci = files.nfci;
    cfg.seed = seed;
    write_config_file(out_dir + "/run.conf", cfg);
    std::cerr << "synth dataset: " << truth.n_cells << " cells -> " << out_dir
              << " (config: " << out_dir << "/run.conf)\n";
    return 0;
  }
  std::cerr << "error: unknown preset '" << preset << "' (want panel|dataset)\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"implied discount factors, benchmark curves, and the carry-gap panel"};
  app.require_subcommand(1);

  CliOverrides run_o, extract_o, curves_o, panel_o, regress_o, loyo_o, manifest_o;
  auto* run_cmd = app.add_subcommand("run", "execute every configured stage");
  add_common(run_cmd, run_o);
  auto* extract_cmd = app.add_subcommand("extract", "per-cell implied discount fits");
  add_common(extract_cmd, extract_o);
  auto* curves_cmd = app.add_subcommand("bootstrap", "benchmark curve construction");
  add_common(curves_cmd, curves_o);
  auto* panel_cmd = app.add_subcommand("panel", "carry-gap panel and distribution stats");
  add_common(panel_cmd, panel_o);
  auto* regress_cmd = app.add_subcommand("regress", "clustered panel regressions");
  add_common(regress_cmd, regress_o);
  auto* loyo_cmd = app.add_subcommand("loyo", "leave-one-year-out validation");
  add_common(loyo_cmd, loyo_o);
  auto* manifest_cmd = app.add_subcommand("manifest", "hash artifacts into run_manifest.json");
  add_common(manifest_cmd, manifest_o);

  auto* mc_cmd = app.add_subcommand("mc-check", "Monte Carlo vs closed-form path-risk check");
  double mc_sigma = 0.2, mc_horizon = 1.0, mc_tolerance = 0.02;
  long mc_paths = 200000, mc_steps = 2000;
  std::uint64_t mc_seed = 7;
  int mc_workers = 1;
  std::string mc_out = "out";
  mc_cmd->add_option("--sigma", mc_sigma, "GBM volatility (e.g. 0.2)");
  mc_cmd->add_option("--horizon", mc_horizon, "horizon in years");
  mc_cmd->add_option("--paths", mc_paths, "number of simulated paths");
  mc_cmd->add_option("--steps", mc_steps, "monitoring steps per path");
  mc_cmd->add_option("--seed", mc_seed, "RNG seed");
  mc_cmd->add_option("--tolerance", mc_tolerance, "relative tolerance vs closed forms");
  mc_cmd->add_option("--workers", mc_workers, "worker threads");
  mc_cmd->add_option("--out", mc_out, "output directory for pathrisk_check.json");

  auto* synth_cmd = app.add_subcommand("synth", "generate synthetic inputs with known truth");
  std::string synth_preset, synth_out = "synth";
  std::uint64_t synth_seed = 42;
  synth_cmd->add_option("--preset", synth_preset, "panel (planted regression panel) | dataset (full inputs)")
      ->required();
  synth_cmd->add_option("--out", synth_out, "output directory");
  synth_cmd->add_option("--seed", synth_seed, "RNG seed");

  CLI11_PARSE(app, argc, argv);

  if (run_cmd->parsed()) {
    try {
      return run_pipeline(load_config(run_o));
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  if (extract_cmd->parsed())
    return run_stage(extract_o, "extract", [](const RunConfig& c) { (void)stage_extract(c); });
  if (curves_cmd->parsed())
    return run_stage(curves_o, "bootstrap", [](const RunConfig& c) { (void)stage_curves(c); });
  if (panel_cmd->parsed()) return run_stage(panel_o, "panel", &stage_panel);
  if (regress_cmd->parsed()) return run_stage(regress_o, "regress", &stage_regress);
  if (loyo_cmd->parsed()) return run_stage(loyo_o, "loyo", &stage_loyo);
  if (manifest_cmd->parsed()) return run_stage(manifest_o, "manifest", &write_manifest);

  if (mc_cmd->parsed()) {
    try {
      RunConfig cfg;
      cfg.mc_check = true;
      cfg.mc_sigma = mc_sigma;
      cfg.mc_horizon = mc_horizon;
      cfg.mc_paths = mc_paths;
      cfg.mc_steps = mc_steps;
      cfg.mc_tolerance = mc_tolerance;
      cfg.seed = mc_seed;
      cfg.workers = mc_workers;
      cfg.out_dir = mc_out;
      if (cfg.mc_paths < 1 || cfg.mc_steps < 1) throw std::runtime_error("paths/steps must be >= 1");
      if (!(cfg.mc_sigma >= 0.0)) throw std::runtime_error("sigma must be >= 0");
      if (!(cfg.mc_horizon > 0.0)) throw std::runtime_error("horizon must be > 0");
      if (!(cfg.mc_tolerance > 0.0)) throw std::runtime_error("tolerance must be > 0");
      std::filesystem::create_directories(cfg.out_dir);
      const bool ok = stage_mc_check(cfg);
      std::cerr << "mc-check: " << (ok ? "pass" : "FAIL") << " -> " << cfg.out_dir
                << "/pathrisk_check.json\n";
      return ok ? 0 : 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  if (synth_cmd->parsed()) {
    try {
      return cmd_synth(synth_preset, synth_out, synth_seed);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 1;
}
