// Experiment driver: simulate, run, plotdata, validate.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mdsbl/experiment.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw mdsbl::Error("cannot open " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw mdsbl::Error("cannot write " + p.string());
  out << text;
}

struct Overrides {
  std::string config;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string algorithm;
};

mdsbl::ExperimentConfig load_with_overrides(const Overrides& o) {
  auto cfg = mdsbl::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.output.empty()) cfg.output_path = o.output;
  if (!o.algorithm.empty()) cfg.algorithms = {mdsbl::parse_algorithm(o.algorithm)};
  mdsbl::validate_config(cfg);
  return cfg;
}

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--output", o.output, "Output directory (overrides output_path)");
  cmd->add_option("--seed", o.seed, "Base seed (overrides the configuration)");
  cmd->add_option("--algorithm", o.algorithm, "Restrict to one algorithm")->check(CLI::IsMember({"sbl", "nomp"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-radar sparse Bayesian learning experiments"};
  app.require_subcommand(1);

  Overrides run_opts;
  auto* run = app.add_subcommand("run", "Run a Monte-Carlo experiment and write rows, aggregate and timing CSV");
  add_common(run, run_opts);
  run->add_option("--workers", run_opts.workers, "Worker threads (default: MDSBL_WORKERS or all cores)");
  bool quiet = false;
  run->add_flag("--quiet", quiet, "No progress output");

  Overrides sim_opts;
  auto* simulate = app.add_subcommand("simulate", "Write the raw synthetic observations of an experiment");
  add_common(simulate, sim_opts);

  Overrides val_opts;
  auto* validate = app.add_subcommand("validate", "Check a configuration and print its normalized form");
  validate->add_option("--config", val_opts.config, "Experiment configuration (JSON)")->required();

  std::string aggregate_path, figure, plot_out;
  auto* plotdata = app.add_subcommand("plotdata", "Extract figure data from an aggregate CSV");
  plotdata->add_option("--aggregate", aggregate_path, "aggregate.csv from a run")->required()->check(CLI::ExistingFile);
  plotdata->add_option("--figure", figure, "fig3, fig4 or fig5")->required()->check(CLI::IsMember({"fig3", "fig4", "fig5"}));
  plotdata->add_option("--output", plot_out, "Output file (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto cfg = load_with_overrides(run_opts);
      const int workers = mdsbl::resolve_workers(run_opts.workers);
      mdsbl::ProgressCallback progress;
      if (!quiet)
        progress = [](std::size_t done, std::size_t total) {
          if (done == total || done % 100 == 0) std::cerr << "\r" << done << "/" << total << std::flush;
        };
      const auto result = mdsbl::run_experiment(cfg, workers, progress);
      if (!quiet) std::cerr << "\n";
      mdsbl::write_results(result, cfg.output_path);
      std::cout << "wrote " << result.rows.size() << " rows to " << cfg.output_path << "\n";
    } else if (*simulate) {
      const auto cfg = load_with_overrides(sim_opts);
      const fs::path out = fs::path(cfg.output_path) / "observations.csv";
      write_file(out, mdsbl::observations_csv(cfg));
      std::cout << "wrote " << out.string() << "\n";
    } else if (*validate) {
      const auto cfg = mdsbl::load_config(val_opts.config);
      std::cout << mdsbl::config_to_json(cfg).dump(2) << "\n";
    } else if (*plotdata) {
      const auto text = mdsbl::plot_data_csv(read_file(aggregate_path), mdsbl::parse_figure(figure));
      if (plot_out.empty()) std::cout << text;
      else write_file(plot_out, text);
    }
  } catch (const mdsbl::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
