#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lucid/controller.hpp"

namespace lucid {

/// Config problems, with "source:line: " prefixed to the message.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double sample(std::mt19937_64& rng) const;
};

struct VehicleRanges {
  Range px, py, heading, speed;
};

struct ThetaRanges {
  Range speed, lane, aggressiveness;
};

struct RampGeometry {
  double x_start = 0.0;
  double x_end = 1.0;
  double depth = 3.0;  // how far the ramp's outer edge sits below the road at x_start
};

struct ObstacleGeometry {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 2.0;
};

struct Scenario {
  std::string name;
  std::string source;  // config text, stored in run-log headers
  std::size_t players = 2;
  std::size_t robot = 0;

  int lanes = 2;
  double lane_width = 3.0;
  std::optional<RampGeometry> ramp;
  std::optional<ObstacleGeometry> obstacle;

  double dt = 0.15;
  std::size_t horizon = 21;
  std::size_t steps = 81;

  Eigen::Vector4d state_weights{0.0, 0.5, 2.0, 1.0};
  Eigen::Vector2d control_weights{4.0, 1.0};
  Eigen::Vector4d terminal_weights{0.0, 2.0, 4.0, 2.0};
  double activation_scale = 2.5;
  double collision_radius = 1.0;

  ObjectiveParams robot_objective;
  std::vector<VehicleRanges> initial;  // at least `players` entries; the first `players` are used
  std::vector<ThetaRanges> theta;      // one per vehicle; the robot's entry is ignored

  double state_noise_std = 0.01;
  double belief_noise_fraction = 0.1;
  double ukf_alpha = 1.0, ukf_beta = 2.0, ukf_kappa = 0.0;
  double process_var = 1e-4;
  double measurement_var = 1e-4;
  Eigen::Vector3d prior_mean = Eigen::Vector3d::Constant(1.0);
  Eigen::Vector3d prior_variance = Eigen::Vector3d::Constant(25.0);
  SafetyOptions safety;
  SolverOptions solver;

  /// Lane centers, bottom lane first.
  double lane_center(int lane) const { return (lane + 0.5) * lane_width; }
  Scene scene() const;
  Belief prior() const;
  /// A feasible world for Monte Carlo run `run`; every draw comes from (seed, run).
  WorldConfig sample_world(std::uint64_t seed, std::uint64_t run) const;
  /// Copy restricted to the first m vehicles.
  Scenario with_players(std::size_t m) const;
};

Scenario parse_scenario(const std::string& text, const std::string& source_name = "<config>");
Scenario load_scenario(const std::string& path);
/// A name like "ramp_merge" resolves to <config dir>/ramp_merge.yaml; anything
/// containing '/' or ending in .yaml is a path.
std::string resolve_scenario_path(const std::string& name_or_path);
std::string default_config_dir();

// ---------------------------------------------------------------------------
// Predictors and metrics

/// Constant heading and speed for every vehicle, `steps` states starting at x.
StateTrajectory straight_line_predict(const JointState& x, double horizon_seconds, double dt);

/// RMS over steps 1..N-1 of the 2D position distance, averaged over vehicles
/// other than `skip`. Tracks are [vehicle][k].
double prediction_error(const PositionTracks& predicted, const PositionTracks& realized, std::size_t skip);

/// Realized tracks x_t .. x_{t+len-1}; empty when the run is too short.
PositionTracks realized_tracks(const RunLog& log, std::size_t t, std::size_t len);

/// Per-class mean relative error |mu - theta| / |theta| over agents: (speed, lane, aggressiveness).
Eigen::Vector3d relative_errors(const ThetaVector& mu, const ThetaVector& truth);

inline const std::vector<std::string> kPredictors{"lucidgames", "straight_line", "fixed_prior", "oracle"};

struct MonteCarloOptions {
  std::size_t runs = 20;
  std::uint64_t seed = 0;
  std::vector<std::string> predictors = kPredictors;
  std::size_t steps = 0;  // 0: the scenario's own
  bool safety_on = false;
  std::size_t workers = 1;
  std::string log_dir;  // write one JSONL per run when non-empty
};

/// Per-run metric series, indexed by time step; NaN where undefined.
struct RunMetrics {
  std::vector<Eigen::Vector3d> param_error;  // lucidgames belief
  std::vector<std::vector<double>> prediction;  // [predictor][t]
  double mean_step_ms = 0.0;
};

struct QuantileRow {
  std::size_t t = 0;
  double time = 0.0;
  std::string predictor;
  std::string quantile;  // q1 / median / q3
  double speed = 0.0, lane = 0.0, aggressiveness = 0.0, prediction = 0.0;  // NaN: not applicable
};

struct MonteCarloResult {
  std::vector<QuantileRow> rows;
  std::vector<RunMetrics> runs;
  std::vector<std::size_t> failed_runs;
  std::vector<double> initial_param_error;  // per run, speed class (diagnostic)
};

RunMetrics run_metrics(const RunLog& log, const WorldConfig& world, const Belief& prior,
                       const std::vector<std::string>& predictors);

MonteCarloResult run_monte_carlo(const Scenario& scenario, const MonteCarloOptions& options);

/// Same rows for the same inputs, byte for byte.
std::string to_csv(const std::vector<QuantileRow>& rows);

/// Quantile at fraction p (linear interpolation between order statistics).
double quantile(std::vector<double> values, double p);

struct TimingStats {
  std::size_t players = 0;
  double frequency_hz = 0.0;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  std::size_t samples = 0;
};

/// Mean and spread of the robot's per-step compute (planning plus estimation).
TimingStats timing_benchmark(const Scenario& scenario, std::size_t players, std::size_t steps, std::uint64_t seed = 0,
                             std::size_t workers = 1);

/// Header line for a run log: config text, seed, run index, steps, safety flag.
nlohmann::json run_header(const Scenario& scenario, std::uint64_t seed, std::uint64_t run, std::size_t steps,
                          const LoopOptions& loop);

struct ReplayReport {
  bool identical = true;
  std::size_t steps = 0;
  std::size_t first_mismatch = 0;
};

/// Re-runs the world described by a JSONL log header and compares every
/// record, timing fields excluded.
ReplayReport replay(std::istream& in, std::size_t workers = 1);

}  // namespace lucid
