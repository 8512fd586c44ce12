#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lucid/parallel.hpp"
#include "lucid/scenario.hpp"

namespace {

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

bool parse_switch(const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw CLI::ValidationError("--safety", "expected on or off, got '" + v + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online objective estimation and planning for multi-vehicle games"};
  app.require_subcommand(1);

  std::string scenario_name = "ramp_merge";
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  std::string safety = "off";

  auto* run = app.add_subcommand("run", "Simulate one scenario and write the JSONL run log");
  std::string out_path;
  run->add_option("--scenario", scenario_name, "Scenario name or YAML path");
  run->add_option("--seed", seed, "Random seed");
  run->add_option("--safety", safety, "Uncertainty-aware safety constraints (on|off)");
  run->add_option("--steps", steps, "Simulation steps (default: the scenario's)");
  run->add_option("--out", out_path, "Log file (default: stdout)");

  auto* mc = app.add_subcommand("montecarlo", "Monte Carlo sweep; writes metrics.csv and per-run logs");
  std::size_t runs = 20;
  std::string predictors = "lucidgames,straight_line,fixed_prior,oracle";
  std::string out_dir = "mc_out";
  bool no_logs = false;
  mc->add_option("--scenario", scenario_name, "Scenario name or YAML path");
  mc->add_option("--runs", runs, "Number of runs")->check(CLI::PositiveNumber);
  mc->add_option("--seed", seed, "Random seed");
  mc->add_option("--predictors", predictors, "Comma-separated predictor list");
  mc->add_option("--out-dir", out_dir, "Output directory");
  mc->add_option("--steps", steps, "Simulation steps per run (default: the scenario's)");
  mc->add_option("--safety", safety, "Uncertainty-aware safety constraints (on|off)");
  mc->add_flag("--no-logs", no_logs, "Skip the per-run JSONL logs");

  auto* bench = app.add_subcommand("bench", "Per-step wall time of the estimate-and-plan loop");
  std::size_t players = 3;
  std::size_t bench_steps = 20;
  bench->add_option("--scenario", scenario_name, "Scenario name or YAML path");
  bench->add_option("--players", players, "Number of vehicles (2-4)");
  bench->add_option("--steps", bench_steps, "Simulation steps")->check(CLI::Range(2, 100000));
  bench->add_option("--seed", seed, "Random seed");

  auto* rep = app.add_subcommand("replay", "Re-simulate a run log and check it is reproduced exactly");
  std::string log_path;
  rep->add_option("--log", log_path, "JSONL run log")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const std::size_t workers = lucid::default_workers();
    if (*rep) {
      std::ifstream in(log_path);
      if (!in) throw std::runtime_error("cannot open " + log_path);
      const auto report = lucid::replay(in, workers);
      if (!report.identical) {
        std::cerr << "replay: mismatch at step " << report.first_mismatch << "\n";
        return 1;
      }
      std::cout << "replay: " << report.steps << " steps reproduced exactly\n";
      return 0;
    }

    const lucid::Scenario scenario = lucid::load_scenario(lucid::resolve_scenario_path(scenario_name));

    if (*run) {
      lucid::WorldConfig world = scenario.sample_world(seed, 0);
      if (steps) world.steps = steps;
      world.workers = workers;
      const lucid::LoopOptions loop{parse_switch(safety), false, false};
      const auto log = lucid::lucidgames_loop(world, scenario.prior(), loop);
      const auto header = lucid::run_header(scenario, seed, 0, world.steps, loop);
      if (out_path.empty()) {
        lucid::write_jsonl(std::cout, header, log);
      } else {
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("cannot write " + out_path);
        lucid::write_jsonl(out, header, log);
      }
      const auto& last = log.steps.back();
      const auto err = lucid::relative_errors(last.belief.mean, world.theta_true);
      std::fprintf(stderr, "%s seed %llu: %zu steps, final relative error speed %.4g lane %.4g aggressiveness %.4g\n",
                   scenario.name.c_str(), static_cast<unsigned long long>(seed), log.steps.size(), err(0), err(1),
                   err(2));
      return 0;
    }

    if (*mc) {
      lucid::MonteCarloOptions o;
      o.runs = runs;
      o.seed = seed;
      o.predictors = split(predictors);
      o.steps = steps;
      o.safety_on = parse_switch(safety);
      o.workers = workers;
      std::filesystem::create_directories(out_dir);
      if (!no_logs) o.log_dir = (std::filesystem::path(out_dir) / "logs").string();
      const auto result = lucid::run_monte_carlo(scenario, o);
      const auto csv_path = std::filesystem::path(out_dir) / "metrics.csv";
      std::ofstream csv(csv_path, std::ios::binary);
      if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
      csv << lucid::to_csv(result.rows);
      std::fprintf(stderr, "%zu runs (%zu failed) -> %s\n", runs, result.failed_runs.size(), csv_path.c_str());
      return result.runs.empty() ? 1 : 0;
    }

    if (*bench) {
      const auto st = lucid::timing_benchmark(scenario, players, bench_steps, seed, workers);
      std::printf("players %zu  freq %.1f Hz  mean %.2f ms  std %.2f ms  (%zu steps, %zu workers)\n", st.players,
                  st.frequency_hz, st.mean_ms, st.std_ms, st.samples, workers);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
