#include "lucid/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

#include "lucid/parallel.hpp"

#ifndef LUCID_CONFIG_DIR
#define LUCID_CONFIG_DIR "configs"
#endif

namespace lucid {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Typed access to a YAML mapping with line-numbered errors.
class Reader {
 public:
  Reader(YAML::Node node, std::string source, std::string path)
      : node_(std::move(node)), source_(std::move(source)), path_(std::move(path)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& msg) const {
    const int line = at.IsDefined() ? at.Mark().line + 1 : node_.Mark().line + 1;
    throw ScenarioError(source_ + ":" + std::to_string(line) + ": " + msg);
  }

  void expect_map() const {
    if (!node_.IsMap()) fail(node_, (path_.empty() ? std::string("document") : path_) + " must be a mapping");
  }

  /// Throws on keys outside `allowed`.
  void only(std::initializer_list<const char*> allowed) const {
    expect_map();
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!ok.count(key)) fail(kv.first, "unknown key '" + qualified(key) + "'");
    }
  }

  bool has(const char* key) const { return node_[key].IsDefined() && !node_[key].IsNull(); }

  Reader child(const char* key) const {
    const YAML::Node n = node_[key];
    if (!n.IsDefined()) fail(node_, "missing key '" + qualified(key) + "'");
    Reader r(n, source_, qualified(key));
    r.expect_map();
    return r;
  }

  YAML::Node raw(const char* key) const { return node_[key]; }
  const std::string& source() const { return source_; }
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const char* key, std::optional<double> fallback = std::nullopt) const {
    const YAML::Node n = node_[key];
    if (!n.IsDefined() || n.IsNull()) {
      if (fallback) return *fallback;
      fail(node_, "missing key '" + qualified(key) + "'");
    }
    return scalar(n, qualified(key));
  }

  double scalar(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + " must be a number");
    double v = 0.0;
    try {
      v = n.as<double>();
    } catch (const YAML::Exception&) {
      fail(n, what + " must be a number");
    }
    if (!std::isfinite(v)) fail(n, what + " must be finite");
    return v;
  }

  std::size_t count(const char* key, std::optional<std::size_t> fallback, std::size_t min_value) const {
    const YAML::Node n = node_[key];
    if (!n.IsDefined() || n.IsNull()) {
      if (fallback) return *fallback;
      fail(node_, "missing key '" + qualified(key) + "'");
    }
    long v = 0;
    try {
      v = n.as<long>();
    } catch (const YAML::Exception&) {
      fail(n, qualified(key) + " must be an integer");
    }
    if (v < static_cast<long>(min_value)) fail(n, qualified(key) + " must be at least " + std::to_string(min_value));
    return static_cast<std::size_t>(v);
  }

  std::string text(const char* key) const {
    const YAML::Node n = node_[key];
    if (!n.IsDefined() || !n.IsScalar()) fail(n.IsDefined() ? n : node_, "'" + qualified(key) + "' must be a string");
    return n.as<std::string>();
  }

  template <int Size>
  Eigen::Matrix<double, Size, 1> vec(const char* key, const Eigen::Matrix<double, Size, 1>& fallback) const {
    const YAML::Node n = node_[key];
    if (!n.IsDefined()) return fallback;
    if (!n.IsSequence() || n.size() != Size)
      fail(n, qualified(key) + " must be a list of " + std::to_string(Size) + " numbers");
    Eigen::Matrix<double, Size, 1> v;
    for (int i = 0; i < Size; ++i) v(i) = scalar(n[i], qualified(key));
    return v;
  }

  /// A number broadcast to all three parameter classes, or a [speed, lane, aggressiveness] list.
  Eigen::Vector3d per_class(const char* key, const Eigen::Vector3d& fallback) const {
    const YAML::Node n = node_[key];
    if (n.IsDefined() && n.IsScalar()) return Eigen::Vector3d::Constant(scalar(n, qualified(key)));
    return vec<3>(key, fallback);
  }

  /// A number (degenerate range) or [lo, hi].
  Range range(const char* key) const {
    const YAML::Node n = node_[key];
    if (!n.IsDefined()) fail(node_, "missing key '" + qualified(key) + "'");
    if (n.IsScalar()) {
      const double v = scalar(n, qualified(key));
      return {v, v};
    }
    if (!n.IsSequence() || n.size() != 2) fail(n, qualified(key) + " must be a number or [lo, hi]");
    Range r{scalar(n[0], qualified(key)), scalar(n[1], qualified(key))};
    if (r.lo > r.hi) fail(n, qualified(key) + " has lo > hi");
    return r;
  }

  void require(bool ok, const char* key, const std::string& msg) const {
    if (!ok) fail(node_[key].IsDefined() ? node_[key] : node_, qualified(key) + " " + msg);
  }

 private:
  YAML::Node node_;
  std::string source_;
  std::string path_;
};

std::mt19937_64 run_rng(std::uint64_t seed, std::uint64_t run) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(run), static_cast<std::uint32_t>(run >> 32), 0x5eedu};
  return std::mt19937_64(seq);
}

// Pairwise gap and road clearance at a single state.
bool strictly_feasible(const JointState& x, const ConstraintSet& set) {
  std::vector<ConstraintValue> values;
  evaluate_constraints_at(x.stacked(), 0, set, values);
  return std::all_of(values.begin(), values.end(), [](const ConstraintValue& c) { return c.value < 0.0; });
}

}  // namespace

double Range::sample(std::mt19937_64& rng) const {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Scenario parse_scenario(const std::string& text, const std::string& source_name) {
  YAML::Node doc;
  try {
    doc = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ScenarioError(source_name + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  Reader root(doc, source_name, "");
  root.only({"name", "players", "robot", "road", "timing", "cost", "robot_objective", "vehicles", "noise",
             "estimator", "safety", "solver"});

  Scenario s;
  s.source = text;
  s.name = root.text("name");
  s.players = root.count("players", std::nullopt, 2);
  s.robot = root.count("robot", 0, 0);

  if (root.has("road")) {
    const Reader road = root.child("road");
    road.only({"lanes", "lane_width", "ramp", "obstacle"});
    s.lanes = static_cast<int>(road.count("lanes", 2, 1));
    s.lane_width = road.number("lane_width", 3.0);
    road.require(s.lane_width > 0.0, "lane_width", "must be positive");
    if (road.has("ramp")) {
      const Reader r = road.child("ramp");
      r.only({"x_start", "x_end", "depth"});
      RampGeometry g{r.number("x_start"), r.number("x_end"), r.number("depth")};
      r.require(g.x_end > g.x_start, "x_end", "must exceed x_start");
      r.require(g.depth > 0.0, "depth", "must be positive");
      s.ramp = g;
    }
    if (road.has("obstacle")) {
      const Reader o = road.child("obstacle");
      o.only({"center", "radius"});
      ObstacleGeometry g{o.vec<2>("center", Eigen::Vector2d::Zero()), o.number("radius")};
      o.require(o.has("center"), "center", "is required");
      o.require(g.radius > 0.0, "radius", "must be positive");
      s.obstacle = g;
    }
  }

  if (root.has("timing")) {
    const Reader t = root.child("timing");
    t.only({"dt", "horizon", "steps"});
    s.dt = t.number("dt", 0.15);
    t.require(s.dt > 0.0, "dt", "must be positive");
    s.horizon = t.count("horizon", 21, 2);
    s.steps = t.count("steps", 81, 2);
  }

  if (root.has("cost")) {
    const Reader c = root.child("cost");
    c.only({"state", "control", "terminal", "activation_scale", "collision_radius"});
    s.state_weights = c.vec<4>("state", s.state_weights);
    s.control_weights = c.vec<2>("control", s.control_weights);
    s.terminal_weights = c.vec<4>("terminal", s.terminal_weights);
    c.require(s.state_weights.minCoeff() >= 0.0, "state", "weights must be non-negative");
    c.require(s.terminal_weights.minCoeff() >= 0.0, "terminal", "weights must be non-negative");
    c.require(s.control_weights.minCoeff() > 0.0, "control", "weights must be positive");
    c.require(s.state_weights(0) == 0.0 && s.terminal_weights(0) == 0.0, "state",
              "must put zero weight on longitudinal position");
    s.activation_scale = c.number("activation_scale", 2.5);
    c.require(s.activation_scale > 1.0, "activation_scale", "must exceed 1");
    s.collision_radius = c.number("collision_radius", 1.0);
    c.require(s.collision_radius > 0.0, "collision_radius", "must be positive");
  }

  {
    const Reader o = root.child("robot_objective");
    o.only({"speed", "lane", "aggressiveness"});
    s.robot_objective = {o.number("speed"), o.number("lane"), o.number("aggressiveness", 1.0)};
  }

  const YAML::Node vehicles = root.raw("vehicles");
  if (!vehicles.IsDefined() || !vehicles.IsSequence()) root.fail(vehicles, "'vehicles' must be a list");
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    const std::string path = "vehicles[" + std::to_string(i) + "]";
    Reader v(vehicles[i], source_name, path);
    v.only({"initial", "theta"});
    const Reader init = v.child("initial");
    init.only({"px", "py", "heading", "speed"});
    s.initial.push_back({init.range("px"), init.range("py"), init.range("heading"), init.range("speed")});
    if (i == s.robot && !v.has("theta")) {
      s.theta.push_back({});
      continue;
    }
    const Reader th = v.child("theta");
    th.only({"speed", "lane", "aggressiveness"});
    ThetaRanges tr{th.range("speed"), th.range("lane"), th.range("aggressiveness")};
    th.require(tr.aggressiveness.lo >= 0.0, "aggressiveness", "must be non-negative");
    s.theta.push_back(tr);
  }
  if (s.initial.size() < s.players)
    root.fail(root.raw("players"), "'vehicles' lists " + std::to_string(s.initial.size()) + " entries but players is " +
                            std::to_string(s.players));
  if (s.robot >= s.players) root.fail(root.raw("robot"), "'robot' must index one of the players");

  if (root.has("noise")) {
    const Reader n = root.child("noise");
    n.only({"state_std", "belief_fraction"});
    s.state_noise_std = n.number("state_std", s.state_noise_std);
    s.belief_noise_fraction = n.number("belief_fraction", s.belief_noise_fraction);
    n.require(s.state_noise_std >= 0.0, "state_std", "must be non-negative");
    n.require(s.belief_noise_fraction >= 0.0, "belief_fraction", "must be non-negative");
  }
  if (root.has("estimator")) {
    const Reader e = root.child("estimator");
    e.only({"alpha", "beta", "kappa", "process_var", "measurement_var", "prior_mean", "prior_variance"});
    s.ukf_alpha = e.number("alpha", s.ukf_alpha);
    s.ukf_beta = e.number("beta", s.ukf_beta);
    s.ukf_kappa = e.number("kappa", s.ukf_kappa);
    s.process_var = e.number("process_var", s.process_var);
    s.measurement_var = e.number("measurement_var", s.measurement_var);
    s.prior_mean = e.per_class("prior_mean", s.prior_mean);
    s.prior_variance = e.per_class("prior_variance", s.prior_variance);
    e.require(s.ukf_alpha > 0.0, "alpha", "must be positive");
    e.require(s.process_var >= 0.0, "process_var", "must be non-negative");
    e.require(s.measurement_var >= 0.0, "measurement_var", "must be non-negative");
    e.require((s.prior_variance.array() > 0.0).all(), "prior_variance", "must be positive");
  }
  if (root.has("safety")) {
    const Reader sf = root.child("safety");
    sf.only({"confidence", "min_inflation"});
    s.safety.confidence = sf.number("confidence", s.safety.confidence);
    s.safety.min_inflation = sf.number("min_inflation", s.safety.min_inflation);
    sf.require(s.safety.confidence > 0.0 && s.safety.confidence < 1.0, "confidence", "must be in (0, 1)");
    sf.require(s.safety.min_inflation >= 0.0, "min_inflation", "must be non-negative");
  }
  s.solver.tol_feasibility = 1e-3;
  if (root.has("solver")) {
    const Reader so = root.child("solver");
    so.only({"tol_stationarity", "tol_feasibility", "initial_penalty", "penalty_growth", "max_penalty",
             "max_outer_iterations", "max_inner_iterations"});
    s.solver.tol_stationarity = so.number("tol_stationarity", s.solver.tol_stationarity);
    s.solver.tol_feasibility = so.number("tol_feasibility", s.solver.tol_feasibility);
    s.solver.initial_penalty = so.number("initial_penalty", s.solver.initial_penalty);
    s.solver.penalty_growth = so.number("penalty_growth", s.solver.penalty_growth);
    s.solver.max_penalty = so.number("max_penalty", s.solver.max_penalty);
    s.solver.max_outer_iterations = static_cast<int>(so.count("max_outer_iterations", 10, 1));
    s.solver.max_inner_iterations = static_cast<int>(so.count("max_inner_iterations", 30, 1));
    so.require(s.solver.tol_stationarity > 0.0, "tol_stationarity", "must be positive");
    so.require(s.solver.tol_feasibility > 0.0, "tol_feasibility", "must be positive");
    so.require(s.solver.penalty_growth > 1.0, "penalty_growth", "must exceed 1");
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path + ":0: cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path);
}

std::string default_config_dir() {
  if (const char* env = std::getenv("LUCID_CONFIG_DIR")) return env;
  return LUCID_CONFIG_DIR;
}

std::string resolve_scenario_path(const std::string& name_or_path) {
  const bool is_path = name_or_path.find('/') != std::string::npos ||
                       (name_or_path.size() > 5 && name_or_path.ends_with(".yaml"));
  if (is_path) return name_or_path;
  return (std::filesystem::path(default_config_dir()) / (name_or_path + ".yaml")).string();
}

Scene Scenario::scene() const {
  Scene sc;
  sc.robot = robot;
  sc.horizon = horizon;
  sc.dt = dt;
  sc.robot_params = robot_objective;
  sc.options = solver;
  CostWeights w;
  w.state = state_weights.asDiagonal();
  w.control = control_weights.asDiagonal();
  w.terminal = terminal_weights.asDiagonal();
  w.activation_scale = activation_scale;
  w.collision_radii.assign(players, collision_radius);
  sc.weights.assign(players, w);

  ConstraintSet& c = sc.constraints;
  c.robot = robot;
  for (std::size_t a = 0; a < players; ++a)
    for (std::size_t b = a + 1; b < players; ++b) c.collisions.push_back({a, b, 2.0 * collision_radius});
  const double top = lanes * lane_width;
  for (std::size_t i = 0; i < players; ++i) {
    c.half_planes.push_back({i, {0.0, 1.0}, top - collision_radius});
    if (ramp) {
      c.ramps.push_back({i, ramp->x_start, ramp->x_end, -ramp->depth, 0.0, collision_radius});
    } else {
      c.half_planes.push_back({i, {0.0, -1.0}, -collision_radius});
    }
    if (obstacle) c.obstacles.push_back({i, obstacle->center, obstacle->radius + collision_radius});
  }
  return sc;
}

Belief Scenario::prior() const {
  const auto q = static_cast<Eigen::Index>(kParamsPerAgent * (players - 1));
  const Eigen::Index agents = q / static_cast<Eigen::Index>(kParamsPerAgent);
  const Eigen::VectorXd mean = prior_mean.replicate(agents, 1);
  const Eigen::VectorXd var = prior_variance.replicate(agents, 1);
  return {mean, var.asDiagonal()};
}

WorldConfig Scenario::sample_world(std::uint64_t seed, std::uint64_t run) const {
  std::mt19937_64 rng = run_rng(seed, run);
  WorldConfig w;
  w.scene = scene();
  w.steps = steps;
  w.state_noise_std = state_noise_std;
  w.belief_noise_fraction = belief_noise_fraction;
  w.ukf = UkfConfig::isotropic(static_cast<std::size_t>(kParamsPerAgent * (players - 1)), 4 * players, process_var,
                               measurement_var);
  w.ukf.alpha = ukf_alpha;
  w.ukf.beta = ukf_beta;
  w.ukf.kappa = ukf_kappa;
  w.safety = safety;

  bool found = false;
  for (int attempt = 0; attempt < 1000 && !found; ++attempt) {
    JointState x;
    for (std::size_t i = 0; i < players; ++i) {
      const auto& r = initial[i];
      x.vehicles.push_back({r.px.sample(rng), r.py.sample(rng), r.heading.sample(rng), r.speed.sample(rng)});
    }
    if (strictly_feasible(x, w.scene.constraints)) {
      w.x0 = x;
      found = true;
    }
  }
  if (!found) throw ScenarioError(name + ": could not sample a feasible initial state in 1000 attempts");

  std::vector<ObjectiveParams> agents;
  for (std::size_t i = 0; i < players; ++i) {
    if (i == robot) continue;
    const auto& t = theta[i];
    agents.push_back({t.speed.sample(rng), t.lane.sample(rng), t.aggressiveness.sample(rng)});
  }
  w.theta_true = pack_theta(agents);
  w.seed = rng();
  return w;
}

Scenario Scenario::with_players(std::size_t m) const {
  if (m < 2 || m > initial.size())
    throw ScenarioError(name + ": supports 2.." + std::to_string(initial.size()) + " players, not " + std::to_string(m));
  if (robot >= m) throw ScenarioError(name + ": the robot is not among the first " + std::to_string(m) + " vehicles");
  Scenario s = *this;
  s.players = m;
  return s;
}

// ---------------------------------------------------------------------------

StateTrajectory straight_line_predict(const JointState& x, double horizon_seconds, double dt) {
  if (!(horizon_seconds > 0.0)) throw std::invalid_argument("straight line: horizon must be positive");
  const auto steps = static_cast<std::size_t>(std::llround(horizon_seconds / dt));
  const ControlProfile zero(x.size(), ControlSequence(steps));
  return rollout(x, zero, dt);
}

double prediction_error(const PositionTracks& predicted, const PositionTracks& realized, std::size_t skip) {
  if (predicted.size() != realized.size()) throw std::invalid_argument("prediction error: vehicle count mismatch");
  double total = 0.0;
  std::size_t agents = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (i == skip) continue;
    if (predicted[i].size() != realized[i].size() || predicted[i].size() < 2)
      throw std::invalid_argument("prediction error: track length mismatch");
    double sq = 0.0;
    for (std::size_t k = 1; k < predicted[i].size(); ++k) sq += (predicted[i][k] - realized[i][k]).squaredNorm();
    total += std::sqrt(sq / static_cast<double>(predicted[i].size() - 1));
    ++agents;
  }
  return agents ? total / static_cast<double>(agents) : 0.0;
}

PositionTracks realized_tracks(const RunLog& log, std::size_t t, std::size_t len) {
  if (t + len > log.steps.size()) return {};
  StateTrajectory X;
  for (std::size_t k = t; k < t + len; ++k) X.push_back(log.steps[k].state);
  return position_tracks(X);
}

Eigen::Vector3d relative_errors(const ThetaVector& mu, const ThetaVector& truth) {
  if (mu.size() != truth.size() || truth.size() % kParamsPerAgent != 0)
    throw std::invalid_argument("relative errors: shape mismatch");
  const Eigen::Index agents = truth.size() / kParamsPerAgent;
  Eigen::Vector3d e = Eigen::Vector3d::Zero();
  for (Eigen::Index a = 0; a < agents; ++a)
    for (int c = 0; c < kParamsPerAgent; ++c) {
      const Eigen::Index i = kParamsPerAgent * a + c;
      e(c) += std::abs(mu(i) - truth(i)) / std::abs(truth(i));
    }
  return e / static_cast<double>(agents);
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

RunMetrics run_metrics(const RunLog& log, const WorldConfig& world, const Belief& prior,
                       const std::vector<std::string>& predictors) {
  const std::size_t T = log.steps.size();
  const std::size_t N = world.scene.horizon;
  const double dt = world.scene.dt;
  RunMetrics m;
  m.prediction.assign(predictors.size(), std::vector<double>(T, kNaN));
  double total_ms = 0.0;
  std::size_t timed = 0;
  for (std::size_t t = 0; t < T; ++t) {
    const StepRecord& r = log.steps[t];
    m.param_error.push_back(relative_errors(r.belief.mean, world.theta_true));
    if (r.estimator_ran) {
      total_ms += r.planner_ms + r.estimator_ms;
      ++timed;
    }
    const PositionTracks realized = realized_tracks(log, t, N);
    if (realized.empty()) continue;
    for (std::size_t p = 0; p < predictors.size(); ++p) {
      const std::string& name = predictors[p];
      PositionTracks predicted;
      if (name == "lucidgames") {
        predicted = r.robot_plan;
      } else if (name == "straight_line") {
        predicted = position_tracks(straight_line_predict(r.state, static_cast<double>(N - 1) * dt, dt));
      } else if (name == "oracle") {
        predicted = r.oracle_plan;
      } else if (name == "fixed_prior") {
        predicted = r.prior_plan;
      }
      if (!predicted.empty()) m.prediction[p][t] = prediction_error(predicted, realized, world.scene.robot);
    }
  }
  (void)prior;
  m.mean_step_ms = timed ? total_ms / static_cast<double>(timed) : 0.0;
  return m;
}

nlohmann::json run_header(const Scenario& scenario, std::uint64_t seed, std::uint64_t run, std::size_t steps,
                          const LoopOptions& loop) {
  return {{"type", "header"},
          {"scenario", scenario.name},
          {"config", scenario.source},
          {"players", scenario.players},
          {"seed", seed},
          {"run", run},
          {"steps", steps},
          {"safety", loop.safety_on},
          {"oracle", loop.predict_oracle},
          {"prior", loop.predict_prior}};
}

ReplayReport replay(std::istream& in, std::size_t workers) {
  std::string line;
  if (!std::getline(in, line)) throw ScenarioError("replay: empty log");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("replay: bad header: ") + e.what());
  }
  if (header.value("type", "") != "header") throw ScenarioError("replay: first line is not a header");
  const Scenario scenario =
      parse_scenario(header.at("config").get<std::string>(), "<log header>").with_players(header.at("players"));
  WorldConfig world = scenario.sample_world(header.at("seed"), header.at("run"));
  world.steps = header.at("steps");
  world.workers = workers;
  const LoopOptions loop{header.at("safety"), header.at("oracle"), header.at("prior")};
  const RunLog log = lucidgames_loop(world, scenario.prior(), loop);

  ReplayReport report;
  report.steps = log.steps.size();
  std::size_t t = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json recorded = nlohmann::json::parse(line);
    recorded.erase("planner_ms");
    recorded.erase("estimator_ms");
    if (t >= log.steps.size() || recorded != to_json(log.steps[t], false)) {
      report.identical = false;
      report.first_mismatch = t;
      return report;
    }
    ++t;
  }
  if (t != log.steps.size()) {
    report.identical = false;
    report.first_mismatch = t;
  }
  return report;
}

MonteCarloResult run_monte_carlo(const Scenario& scenario, const MonteCarloOptions& options) {
  if (options.runs < 1) throw std::invalid_argument("monte carlo: need at least one run");
  for (const auto& p : options.predictors)
    if (std::find(kPredictors.begin(), kPredictors.end(), p) == kPredictors.end())
      throw std::invalid_argument("monte carlo: unknown predictor '" + p + "'");
  const bool want_oracle =
      std::find(options.predictors.begin(), options.predictors.end(), "oracle") != options.predictors.end();
  const bool want_prior =
      std::find(options.predictors.begin(), options.predictors.end(), "fixed_prior") != options.predictors.end();
  const Belief prior = scenario.prior();
  const std::size_t steps = options.steps ? options.steps : scenario.steps;
  if (!options.log_dir.empty()) std::filesystem::create_directories(options.log_dir);

  std::vector<std::optional<RunMetrics>> per_run(options.runs);
  std::vector<std::string> errors(options.runs);
  std::vector<WorldConfig> worlds(options.runs);
  parallel_for(options.runs, options.workers, [&](std::size_t run) {
    try {
      WorldConfig world = scenario.sample_world(options.seed, run);
      world.steps = steps;
      const LoopOptions loop{options.safety_on, want_oracle, want_prior};
      const RunLog log = lucidgames_loop(world, prior, loop);
      per_run[run] = run_metrics(log, world, prior, options.predictors);
      worlds[run] = world;
      if (!options.log_dir.empty()) {
        char name[32];
        std::snprintf(name, sizeof name, "run_%03zu.jsonl", run);
        std::ofstream out(std::filesystem::path(options.log_dir) / name);
        write_jsonl(out, run_header(scenario, options.seed, run, steps, loop), log);
      }
    } catch (const std::exception& e) {
      errors[run] = e.what();
    }
  });

  MonteCarloResult result;
  std::vector<std::size_t> ok;
  for (std::size_t run = 0; run < options.runs; ++run) {
    if (per_run[run]) {
      ok.push_back(run);
      result.runs.push_back(*per_run[run]);
      result.initial_param_error.push_back(relative_errors(prior.mean, worlds[run].theta_true)(0));
    } else {
      result.failed_runs.push_back(run);
      std::cerr << "warning: run " << run << " failed and is excluded: " << errors[run] << "\n";
    }
  }

  const std::array<std::pair<const char*, double>, 3> quantiles{{{"q1", 0.25}, {"median", 0.5}, {"q3", 0.75}}};
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t p = 0; p < options.predictors.size(); ++p) {
      const std::string& name = options.predictors[p];
      std::array<std::vector<double>, 4> samples;
      for (std::size_t i = 0; i < ok.size(); ++i) {
        const RunMetrics& m = result.runs[i];
        Eigen::Vector3d pe = Eigen::Vector3d::Constant(kNaN);
        if (name == "lucidgames") {
          pe = m.param_error[t];
        } else if (name == "fixed_prior") {
          pe = relative_errors(prior.mean, worlds[ok[i]].theta_true);
        } else if (name == "oracle") {
          pe.setZero();
        }
        for (int c = 0; c < 3; ++c)
          if (!std::isnan(pe(c))) samples[c].push_back(pe(c));
        if (!std::isnan(m.prediction[p][t])) samples[3].push_back(m.prediction[p][t]);
      }
      for (const auto& [label, frac] : quantiles) {
        QuantileRow row;
        row.t = t;
        row.time = static_cast<double>(t) * scenario.dt;
        row.predictor = name;
        row.quantile = label;
        row.speed = quantile(samples[0], frac);
        row.lane = quantile(samples[1], frac);
        row.aggressiveness = quantile(samples[2], frac);
        row.prediction = quantile(samples[3], frac);
        result.rows.push_back(std::move(row));
      }
    }
  }
  return result;
}

std::string to_csv(const std::vector<QuantileRow>& rows) {
  std::string out = "time,predictor,quantile,speed_error,lane_error,aggressiveness_error,prediction_error\n";
  auto num = [](double v) -> std::string {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
  };
  for (const auto& r : rows) {
    out += num(r.time) + "," + r.predictor + "," + r.quantile + "," + num(r.speed) + "," + num(r.lane) + "," +
           num(r.aggressiveness) + "," + num(r.prediction) + "\n";
  }
  return out;
}

TimingStats timing_benchmark(const Scenario& scenario, std::size_t players, std::size_t steps, std::uint64_t seed,
                             std::size_t workers) {
  const Scenario s = scenario.with_players(players);
  WorldConfig world = s.sample_world(seed, 0);
  world.steps = steps;
  world.workers = workers;
  const RunLog log = lucidgames_loop(world, s.prior());
  std::vector<double> ms;
  for (const auto& r : log.steps)
    if (r.estimator_ran && r.t + 1 < log.steps.size()) ms.push_back(r.planner_ms + r.estimator_ms);
  TimingStats st;
  st.players = players;
  st.samples = ms.size();
  if (ms.empty()) return st;
  st.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  double var = 0.0;
  for (double v : ms) var += (v - st.mean_ms) * (v - st.mean_ms);
  st.std_ms = ms.size() > 1 ? std::sqrt(var / static_cast<double>(ms.size() - 1)) : 0.0;
  st.frequency_hz = 1000.0 / st.mean_ms;
  return st;
}

}  // namespace lucid
