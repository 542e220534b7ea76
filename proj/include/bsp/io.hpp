#pragma once

#include "bsp/planner.hpp"
#include "bsp/simulation.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace bsp {

using Json = nlohmann::json;

inline constexpr double kDegToRad = std::numbers::pi / 180.0;

/// Everything needed to build a SolverProblem. Angles in the file are degrees for the map and
/// camera and radians for states.
struct ScenarioConfig {
  std::string map_path;  // as written in the file, relative to the scenario's directory
  FeatureMap map;
  MotionModel motion;
  CameraParams camera;
  Belief start;
  StateVector goal = StateVector::Zero();
  int horizon = 0;
  CostWeights weights;
  double three_sigma_xy = 0.0;
  double three_sigma_theta = 0.0;
  bool constrained = true;
  VisibilityMode visibility = VisibilityMode::smooth;
  double p_min = kDefaultPMin;
  ALSchedule schedule;
  InnerOptions inner;
  std::vector<VectorXd> initial_controls;  // empty means straight line
};

namespace io_detail {

inline const Json& field(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw Error(path + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw Error(path + "." + key + ": missing field");
  return *it;
}

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline double number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw Error(path + ": expected a number");
  return j.get<double>();
}

inline double number_field(const Json& j, const std::string& key, const std::string& path) {
  return number(field(j, key, path), join(path, key));
}

inline double number_or(const Json& j, const std::string& key, double fallback, const std::string& path) {
  return j.contains(key) ? number(j.at(key), join(path, key)) : fallback;
}

inline int integer(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) throw Error(path + ": expected an integer");
  return j.get<int>();
}

inline std::string text(const Json& j, const std::string& path) {
  if (!j.is_string()) throw Error(path + ": expected a string");
  return j.get<std::string>();
}

inline VectorXd vector(const Json& j, const std::string& path, Eigen::Index expected = -1) {
  if (!j.is_array()) throw Error(path + ": expected an array");
  if (expected >= 0 && static_cast<Eigen::Index>(j.size()) != expected)
    throw Error(path + ": expected " + std::to_string(expected) + " entries, got " + std::to_string(j.size()));
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

inline MatrixXd matrix(const Json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw Error(path + ": expected a non-empty array of rows");
  const VectorXd first = vector(j[0], path + "[0]");
  MatrixXd m(static_cast<Eigen::Index>(j.size()), first.size());
  for (std::size_t r = 0; r < j.size(); ++r)
    m.row(static_cast<Eigen::Index>(r)) = vector(j[r], path + "[" + std::to_string(r) + "]", first.size()).transpose();
  return m;
}

inline Json to_json(const VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Json to_json(const MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(VectorXd(m.row(r).transpose())));
  return rows;
}

inline Json read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace io_detail

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

// Maps

inline FeatureMap map_from_json(const Json& j) {
  using namespace io_detail;
  FeatureMap map;
  const Json& feats = field(j, "features", "map");
  if (!feats.is_array()) throw Error("features: expected an array");
  std::set<int> seen;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const std::string p = "features[" + std::to_string(i) + "]";
    Feature f;
    f.id = integer(field(feats[i], "id", p), p + ".id");
    f.position = {number_field(feats[i], "x", p), number_field(feats[i], "y", p)};
    f.normal_angle = number_field(feats[i], "normal_deg", p) * kDegToRad;
    if (!seen.insert(f.id).second) throw Error(p + ".id: duplicate feature id " + std::to_string(f.id));
    map.features.push_back(f);
  }
  if (j.contains("obstacles")) {
    const Json& obs = j.at("obstacles");
    if (!obs.is_array()) throw Error("obstacles: expected an array");
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const std::string p = "obstacles[" + std::to_string(i) + "]";
      Obstacle o;
      o.center = {number_field(obs[i], "cx", p), number_field(obs[i], "cy", p)};
      o.radius = number_field(obs[i], "r", p);
      if (!(o.radius > 0)) throw Error(p + ".r: radius must be positive");
      map.obstacles.push_back(o);
    }
  }
  if (j.contains("bounds")) {
    const Json& b = j.at("bounds");
    Bounds bd{number_field(b, "xmin", "bounds"), number_field(b, "xmax", "bounds"), number_field(b, "ymin", "bounds"),
              number_field(b, "ymax", "bounds")};
    if (!(bd.xmin < bd.xmax && bd.ymin < bd.ymax)) throw Error("bounds: min must be below max");
    map.bounds = bd;
  }
  return map;
}

inline Json map_to_json(const FeatureMap& map) {
  Json j;
  j["features"] = Json::array();
  for (const Feature& f : map.features)
    j["features"].push_back({{"id", f.id}, {"x", f.position.x()}, {"y", f.position.y()}, {"normal_deg", f.normal_angle / kDegToRad}});
  j["obstacles"] = Json::array();
  for (const Obstacle& o : map.obstacles) j["obstacles"].push_back({{"cx", o.center.x()}, {"cy", o.center.y()}, {"r", o.radius}});
  if (map.bounds)
    j["bounds"] = {{"xmin", map.bounds->xmin}, {"xmax", map.bounds->xmax}, {"ymin", map.bounds->ymin}, {"ymax", map.bounds->ymax}};
  return j;
}

inline FeatureMap load_map(const std::filesystem::path& path) {
  try {
    return map_from_json(io_detail::read_file(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

// Scenarios

inline MotionKind parse_motion_kind(const std::string& s) {
  if (s == "holonomic") return MotionKind::holonomic;
  if (s == "unicycle") return MotionKind::unicycle;
  throw Error("unknown motion model '" + s + "' (holonomic, unicycle)");
}

inline VisibilityMode parse_visibility(const std::string& s) {
  if (s == "smooth") return VisibilityMode::smooth;
  if (s == "hard") return VisibilityMode::hard;
  throw Error("unknown visibility mode '" + s + "' (smooth, hard)");
}

inline bool parse_constrained(const std::string& s) {
  if (s == "constrained") return true;
  if (s == "unconstrained") return false;
  throw Error("unknown solver mode '" + s + "' (constrained, unconstrained)");
}

/// Parses a scenario document. The map is resolved relative to base_dir unless map_override is given.
inline ScenarioConfig scenario_from_json(const Json& j, const std::filesystem::path& base_dir,
                                         const std::optional<FeatureMap>& map_override = std::nullopt) {
  using namespace io_detail;
  ScenarioConfig c;
  c.map_path = text(field(j, "map", "scenario"), "map");
  c.map = map_override ? *map_override : load_map(base_dir / c.map_path);

  const Json& mo = field(j, "motion", "scenario");
  c.motion.kind = parse_motion_kind(text(field(mo, "model", "motion"), "motion.model"));
  c.motion.dt = number_field(mo, "dt", "motion");
  const int m = c.motion.input_dim();
  if (mo.contains("process_noise_diag"))
    c.motion.process_noise_cov = vector(mo.at("process_noise_diag"), "motion.process_noise_diag", m).asDiagonal();
  else
    c.motion.process_noise_cov = matrix(field(mo, "process_noise", "motion"), "motion.process_noise");
  c.motion.validate();

  if (j.contains("camera")) {
    const Json& cj = j.at("camera");
    CameraParams d;
    c.camera.focal_px = number_or(cj, "focal_px", d.focal_px, "camera");
    c.camera.baseline_m = number_or(cj, "baseline_m", d.baseline_m, "camera");
    c.camera.alpha_max = number_or(cj, "alpha_max_deg", d.alpha_max / kDegToRad, "camera") * kDegToRad;
    c.camera.beta_max = number_or(cj, "beta_max_deg", d.beta_max / kDegToRad, "camera") * kDegToRad;
    c.camera.pixel_noise_std = number_or(cj, "pixel_noise_std", d.pixel_noise_std, "camera");
  }
  c.camera.validate();

  const Json& st = field(j, "start", "scenario");
  const VectorXd mean = vector(field(st, "mean", "start"), "start.mean", 3);
  MatrixXd cov;
  if (st.contains("cov_diag"))
    cov = vector(st.at("cov_diag"), "start.cov_diag", 3).asDiagonal();
  else
    cov = matrix(field(st, "cov", "start"), "start.cov");
  if (cov.rows() != 3 || cov.cols() != 3) throw Error("start.cov: expected 3x3");
  c.start = Belief(mean, cov);
  c.goal = vector(field(j, "goal", "scenario"), "goal", 3);
  c.horizon = integer(field(j, "horizon", "scenario"), "horizon");
  if (c.horizon < 2) throw Error("horizon: must be at least 2");

  const Json& w = field(j, "weights", "scenario");
  c.weights.S_K = vector(field(w, "S_K", "weights"), "weights.S_K", 3);
  c.weights.S_I = vector(field(w, "S_I", "weights"), "weights.S_I", 3);
  c.weights.S_u = vector(field(w, "S_u", "weights"), "weights.S_u", m);
  c.weights.s_c = number_or(w, "s_c", 0.0, "weights");
  c.weights.goal = c.goal;
  c.weights.validate(m);

  c.constrained = parse_constrained(j.contains("mode") ? text(j.at("mode"), "mode") : "constrained");
  if (j.contains("constraints")) {
    const Json& cs = j.at("constraints");
    c.three_sigma_xy = number_field(cs, "three_sigma_xy", "constraints");
    c.three_sigma_theta = number_field(cs, "three_sigma_theta", "constraints");
  }
  if (c.constrained && !(c.three_sigma_xy > 0 && c.three_sigma_theta > 0))
    throw Error("constraints: 3-sigma bounds must be positive in constrained mode");
  if (j.contains("visibility")) c.visibility = parse_visibility(text(j.at("visibility"), "visibility"));
  c.p_min = number_or(j, "p_min", kDefaultPMin, "");
  if (!(c.p_min > 0 && c.p_min < 1)) throw Error("p_min: must lie in (0, 1)");

  if (j.contains("solver")) {
    const Json& s = j.at("solver");
    ALSchedule& a = c.schedule;
    a.lambda0 = number_or(s, "lambda0", a.lambda0, "solver");
    a.mu0 = number_or(s, "mu0", a.mu0, "solver");
    a.mu_growth = number_or(s, "mu_growth", a.mu_growth, "solver");
    a.threshold_decay = number_or(s, "threshold_decay", a.threshold_decay, "solver");
    a.mu_max = number_or(s, "mu_max", a.mu_max, "solver");
    a.max_outer = static_cast<int>(number_or(s, "max_outer", a.max_outer, "solver"));
    a.feasibility_tolerance = number_or(s, "feasibility_tolerance", a.feasibility_tolerance, "solver");
    a.penalty_tolerance = number_or(s, "penalty_tolerance", a.penalty_tolerance, "solver");
    c.inner.max_iterations = static_cast<int>(number_or(s, "max_inner_iterations", c.inner.max_iterations, "solver"));
    c.inner.relative_tolerance = number_or(s, "relative_tolerance", c.inner.relative_tolerance, "solver");
  }

  if (j.contains("initial_controls")) {
    const Json& ic = j.at("initial_controls");
    if (ic.is_string()) {
      if (ic.get<std::string>() != "straight_line") throw Error("initial_controls: expected \"straight_line\" or a list");
    } else {
      if (!ic.is_array() || static_cast<int>(ic.size()) != c.horizon)
        throw Error("initial_controls: expected one control per timestep");
      for (std::size_t k = 0; k < ic.size(); ++k)
        c.initial_controls.push_back(vector(ic[k], "initial_controls[" + std::to_string(k) + "]", m));
    }
  }
  return c;
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path,
                                    const std::optional<FeatureMap>& map_override = std::nullopt) {
  try {
    return scenario_from_json(io_detail::read_file(path), path.parent_path(), map_override);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

inline Json scenario_to_json(const ScenarioConfig& c) {
  using io_detail::to_json;
  Json j;
  j["map"] = c.map_path;
  j["motion"] = {{"model", to_string(c.motion.kind)}, {"dt", c.motion.dt}, {"process_noise", to_json(c.motion.process_noise_cov)}};
  j["camera"] = {{"focal_px", c.camera.focal_px},
                 {"baseline_m", c.camera.baseline_m},
                 {"alpha_max_deg", c.camera.alpha_max / kDegToRad},
                 {"beta_max_deg", c.camera.beta_max / kDegToRad},
                 {"pixel_noise_std", c.camera.pixel_noise_std}};
  j["start"] = {{"mean", to_json(c.start.mean)}, {"cov", to_json(c.start.covariance())}};
  j["goal"] = to_json(VectorXd(c.goal));
  j["horizon"] = c.horizon;
  j["weights"] = {{"S_K", to_json(c.weights.S_K)}, {"S_I", to_json(c.weights.S_I)}, {"S_u", to_json(c.weights.S_u)}, {"s_c", c.weights.s_c}};
  j["constraints"] = {{"three_sigma_xy", c.three_sigma_xy}, {"three_sigma_theta", c.three_sigma_theta}};
  j["mode"] = c.constrained ? "constrained" : "unconstrained";
  j["visibility"] = to_string(c.visibility);
  j["p_min"] = c.p_min;
  const ALSchedule& a = c.schedule;
  j["solver"] = {{"lambda0", a.lambda0},
                 {"mu0", a.mu0},
                 {"mu_growth", a.mu_growth},
                 {"threshold_decay", a.threshold_decay},
                 {"mu_max", a.mu_max},
                 {"max_outer", a.max_outer},
                 {"feasibility_tolerance", a.feasibility_tolerance},
                 {"penalty_tolerance", a.penalty_tolerance},
                 {"max_inner_iterations", c.inner.max_iterations},
                 {"relative_tolerance", c.inner.relative_tolerance}};
  if (c.initial_controls.empty()) {
    j["initial_controls"] = "straight_line";
  } else {
    j["initial_controls"] = Json::array();
    for (const VectorXd& u : c.initial_controls) j["initial_controls"].push_back(to_json(u));
  }
  return j;
}

/// Variance bounds on x, y and theta from the configured 3-sigma limits.
inline ConstraintSpec config_constraints(const ScenarioConfig& c) {
  if (!(c.three_sigma_xy > 0 && c.three_sigma_theta > 0)) return {MatrixXd::Zero(0, belief_dim(kStateDim)), VectorXd::Zero(0)};
  return three_sigma_bounds(Eigen::Vector3d(c.three_sigma_xy, c.three_sigma_xy, c.three_sigma_theta));
}

inline SolverProblem to_problem(const ScenarioConfig& c) {
  SolverProblem p;
  p.belief_model.motion = c.motion;
  p.belief_model.map = c.map;
  p.belief_model.cam = c.camera;
  p.belief_model.visibility = c.visibility;
  p.belief_model.p_min = c.p_min;
  p.weights = c.weights;
  p.constraints = config_constraints(c);
  p.constrained = c.constrained;
  p.horizon = c.horizon;
  p.initial_belief = c.start;
  p.initial_controls = c.initial_controls.empty()
                           ? straight_line_controls(c.motion, StateVector(c.start.mean), c.goal, c.horizon)
                           : c.initial_controls;
  p.validate();
  return p;
}

// Policies and reports

inline Json policy_to_json(const Policy& p) {
  using io_detail::to_json;
  Json j;
  j["horizon"] = p.horizon();
  j["nominal_states"] = Json::array();
  for (const VectorXd& b : p.nominal_states) j["nominal_states"].push_back(to_json(b));
  j["nominal_controls"] = Json::array();
  for (const VectorXd& u : p.nominal_controls) j["nominal_controls"].push_back(to_json(u));
  j["feedforward"] = Json::array();
  for (const VectorXd& f : p.feedforward) j["feedforward"].push_back(to_json(f));
  j["feedback"] = Json::array();
  for (const MatrixXd& k : p.feedback) j["feedback"].push_back(to_json(k));
  return j;
}

inline Policy policy_from_json(const Json& j) {
  using namespace io_detail;
  Policy p;
  auto list = [&](const char* key) -> const Json& {
    const Json& a = field(j, key, "policy");
    if (!a.is_array()) throw Error(std::string(key) + ": expected an array");
    return a;
  };
  const Json& xs = list("nominal_states");
  for (std::size_t k = 0; k < xs.size(); ++k) p.nominal_states.push_back(vector(xs[k], "nominal_states[" + std::to_string(k) + "]"));
  const Json& us = list("nominal_controls");
  for (std::size_t k = 0; k < us.size(); ++k) p.nominal_controls.push_back(vector(us[k], "nominal_controls[" + std::to_string(k) + "]"));
  const Json& ff = list("feedforward");
  for (std::size_t k = 0; k < ff.size(); ++k) p.feedforward.push_back(vector(ff[k], "feedforward[" + std::to_string(k) + "]"));
  const Json& fb = list("feedback");
  for (std::size_t k = 0; k < fb.size(); ++k) p.feedback.push_back(matrix(fb[k], "feedback[" + std::to_string(k) + "]"));
  const std::size_t kk = p.nominal_controls.size();
  if (p.nominal_states.size() != kk + 1 || p.feedforward.size() != kk || p.feedback.size() != kk)
    throw Error("policy: inconsistent trajectory lengths");
  return p;
}

inline Policy load_policy(const std::filesystem::path& path) {
  try {
    return policy_from_json(io_detail::read_file(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

/// Checks that a policy fits a problem before anything is simulated.
inline void check_policy_matches(const Policy& policy, const SolverProblem& problem) {
  if (policy.horizon() != problem.horizon)
    throw Error("policy horizon " + std::to_string(policy.horizon()) + " does not match scenario horizon " +
                std::to_string(problem.horizon));
  const int n = problem.belief_model.belief_dim();
  const int m = problem.belief_model.control_dim();
  for (int k = 0; k < policy.horizon(); ++k) {
    if (policy.nominal_controls[k].size() != m || policy.feedback[k].rows() != m || policy.feedback[k].cols() != n)
      throw Error("policy dimensions at step " + std::to_string(k) + " do not match the scenario's motion model");
  }
  for (const VectorXd& b : policy.nominal_states)
    if (b.size() != n) throw Error("policy belief dimension does not match the scenario");
}

/// 64-bit FNV-1a over the raw bytes of a control sequence, as 16 hex digits.
inline std::string trajectory_hash(const std::vector<VectorXd>& controls) {
  std::uint64_t h = 14695981039346656037ull;
  for (const VectorXd& u : controls) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(u.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(u.size()) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline Json report_to_json(const SolveResult& r, const SolverProblem& problem) {
  using io_detail::to_json;
  const SolveReport& rep = r.report;
  Json j;
  j["converged"] = rep.converged;
  j["feasible"] = rep.feasible;
  j["mode"] = problem.constrained ? "constrained" : "unconstrained";
  j["visibility"] = to_string(problem.belief_model.visibility);
  j["outer_iterations"] = rep.outer_iterations;
  j["inner_iterations"] = rep.inner_iterations;
  j["final_cost"] = rep.final_cost;
  j["final_augmented_cost"] = rep.final_augmented_cost;
  j["constraint_bounds"] = to_json(problem.constraints.bounds);
  j["max_violation_per_constraint"] = to_json(rep.max_violation_per_constraint);
  j["max_violation"] = rep.max_violation_per_constraint.size() ? rep.max_violation_per_constraint.maxCoeff() : 0.0;
  j["initial_trajectory_hash"] = trajectory_hash(problem.initial_controls);
  j["history"] = Json::array();
  for (const OuterIterationLog& h : rep.history)
    j["history"].push_back({{"cost", h.cost},
                            {"augmented_cost", h.augmented_cost},
                            {"max_violation", h.max_violation},
                            {"inner_iterations", h.inner_iterations},
                            {"inner_converged", h.inner_converged}});
  return j;
}

// Flat tables

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : out_(path) {
    if (!out_) throw Error("cannot write " + path.string());
    out_ << std::setprecision(17);
  }
  void header(const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) out_ << (i ? "," : "") << cols[i];
    out_ << "\n";
  }
  void row(const std::vector<double>& vals) {
    for (std::size_t i = 0; i < vals.size(); ++i) out_ << (i ? "," : "") << vals[i];
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

/// One row per timestep of the nominal plan: mean, covariance diagonal, 3-sigma, controls and psi.
inline void write_plan_table(const std::filesystem::path& path, const Policy& p, const ConstraintSpec& spec) {
  CsvWriter csv(path);
  const int m = p.horizon() > 0 ? static_cast<int>(p.nominal_controls[0].size()) : 0;
  std::vector<std::string> cols{"k", "x", "y", "theta", "var_x", "var_y", "var_theta", "sigma3_x", "sigma3_y", "sigma3_theta"};
  for (int i = 0; i < m; ++i) cols.push_back("u" + std::to_string(i));
  for (int i = 0; i < spec.count(); ++i) cols.push_back("psi" + std::to_string(i));
  csv.header(cols);
  const MatrixXd psi = planned_constraint_values(p, spec);
  for (std::size_t k = 0; k < p.nominal_states.size(); ++k) {
    const Belief b = Belief::from_stacked(p.nominal_states[k], kStateDim);
    const MatrixXd c = b.covariance();
    const Eigen::Vector3d s3 = three_sigma(b);
    std::vector<double> r{static_cast<double>(k), b.mean(0), b.mean(1), b.mean(2), c(0, 0), c(1, 1), c(2, 2), s3(0), s3(1), s3(2)};
    for (int i = 0; i < m; ++i) r.push_back(k < p.nominal_controls.size() ? p.nominal_controls[k](i) : 0.0);
    for (int i = 0; i < spec.count(); ++i) r.push_back(psi(static_cast<Eigen::Index>(k), i));
    csv.row(r);
  }
}

inline Json trace_to_json(const ExecutionTrace& t) {
  using io_detail::to_json;
  Json j;
  j["seed"] = t.seed;
  j["diverged"] = t.diverged;
  auto list = [](const auto& xs) {
    Json a = Json::array();
    for (const auto& x : xs) a.push_back(to_json(VectorXd(x)));
    return a;
  };
  j["true_states"] = list(t.true_states);
  Json beliefs = Json::array();
  for (const Belief& b : t.estimated_beliefs) beliefs.push_back({{"mean", to_json(b.mean)}, {"cov_vech", to_json(b.cov_vech)}});
  j["estimated_beliefs"] = beliefs;
  j["applied_controls"] = list(t.applied_controls);
  j["estimation_errors"] = list(t.estimation_errors);
  j["planned_3sigma"] = list(t.planned_3sigma);
  j["realized_3sigma"] = list(t.realized_3sigma);
  j["detected_features"] = t.detected_features;
  return j;
}

/// Per-timestep estimation error with planned and realized 3-sigma envelopes per axis.
inline void write_trace_table(const std::filesystem::path& path, const ExecutionTrace& t) {
  CsvWriter csv(path);
  csv.header({"k", "true_x", "true_y", "true_theta", "est_x", "est_y", "est_theta", "err_x", "err_y", "err_theta",
              "planned3s_x", "planned3s_y", "planned3s_theta", "realized3s_x", "realized3s_y", "realized3s_theta"});
  for (std::size_t k = 0; k < t.estimation_errors.size(); ++k) {
    const StateVector& x = t.true_states[k];
    const VectorXd& e = t.estimated_beliefs[k].mean;
    const StateVector& d = t.estimation_errors[k];
    const Eigen::Vector3d& ps = t.planned_3sigma[k];
    const Eigen::Vector3d& rs = t.realized_3sigma[k];
    csv.row({static_cast<double>(k), x(0), x(1), x(2), e(0), e(1), e(2), d(0), d(1), d(2), ps(0), ps(1), ps(2), rs(0), rs(1), rs(2)});
  }
}

inline Json summary_to_json(const MonteCarloSummary& s) {
  Json j;
  j["runs"] = s.runs;
  j["base_seed"] = s.base_seed;
  j["diverged_runs"] = s.diverged_runs;
  const char* axes[] = {"x", "y", "theta"};
  Json vc = Json::object();
  Json pc = Json::object();
  for (std::size_t i = 0; i < s.violation_counts.size(); ++i) {
    const std::string key = i < 3 ? axes[i] : std::to_string(i);
    vc[key] = s.violation_counts[i];
    pc[key] = s.planned_violation_counts[i];
  }
  j["violation_counts"] = vc;
  j["total_violations"] = std::accumulate(s.violation_counts.begin(), s.violation_counts.end(), 0);
  j["planned_violation_counts"] = pc;
  j["within_3sigma_fraction"] = {{"x", s.within_3sigma_fraction(0)}, {"y", s.within_3sigma_fraction(1)}, {"theta", s.within_3sigma_fraction(2)}};
  j["samples_per_axis"] = s.samples_per_axis;
  j["mean_final_goal_error"] = s.mean_final_goal_error;
  return j;
}

}  // namespace bsp
