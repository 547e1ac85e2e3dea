#include "mavcal/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace mavcal {

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : "; ") + x;
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw std::invalid_argument("expected a number, got '" + s + "'");
  return v;
}

template <typename Int>
Int parse_int(const std::string& s) {
  Int v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw std::invalid_argument("expected an integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "on" || s == "1") return true;
  if (s == "false" || s == "off" || s == "0") return false;
  throw std::invalid_argument("expected true/false, got '" + s + "'");
}

Vec3 parse_vec3(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  if (parts.size() == 1) {
    const double v = parse_double(parts[0]);
    return Vec3::Constant(v);
  }
  if (parts.size() != 3) throw std::invalid_argument("expected 3 comma-separated numbers, got '" + s + "'");
  return Vec3(parse_double(parts[0]), parse_double(parts[1]), parse_double(parts[2]));
}

std::string fmt(const Vec3& v) { return fmt(v.x()) + ", " + fmt(v.y()) + ", " + fmt(v.z()); }

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

Field real(std::string key, double RunConfig::*outer) {
  return {std::move(key), [outer](const RunConfig& c) { return fmt(c.*outer); },
          [outer](RunConfig& c, const std::string& v) { c.*outer = parse_double(v); }};
}

template <typename Get>
Field real_at(std::string key, Get get) {
  return {std::move(key), [get](const RunConfig& c) { return fmt(get(const_cast<RunConfig&>(c))); },
          [get](RunConfig& c, const std::string& v) { get(c) = parse_double(v); }};
}

template <typename Get>
Field vec_at(std::string key, Get get) {
  return {std::move(key), [get](const RunConfig& c) { return fmt(Vec3(get(const_cast<RunConfig&>(c)))); },
          [get](RunConfig& c, const std::string& v) { get(c) = parse_vec3(v); }};
}

template <typename Int, typename Get>
Field int_at(std::string key, Get get) {
  return {std::move(key), [get](const RunConfig& c) { return std::to_string(get(const_cast<RunConfig&>(c))); },
          [get](RunConfig& c, const std::string& v) { get(c) = parse_int<Int>(v); }};
}

template <typename Get>
Field bool_at(std::string key, Get get) {
  return {std::move(key), [get](const RunConfig& c) { return std::string(get(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [get](RunConfig& c, const std::string& v) { get(c) = parse_bool(v); }};
}

template <typename E, typename Get>
Field enum_at(std::string key, std::vector<std::pair<E, std::string>> names, Get get) {
  return {std::move(key),
          [get, names](const RunConfig& c) {
            const E e = get(const_cast<RunConfig&>(c));
            for (const auto& [k, n] : names)
              if (k == e) return n;
            return std::string("?");
          },
          [get, names](RunConfig& c, const std::string& v) {
            for (const auto& [k, n] : names) {
              if (n == v) {
                get(c) = k;
                return;
              }
            }
            std::string allowed;
            for (const auto& p : names) allowed += (allowed.empty() ? "" : ", ") + p.second;
            throw std::invalid_argument("expected one of {" + allowed + "}, got '" + v + "'");
          }};
}

void add_theta(std::vector<Field>& f, const std::string& prefix, ParameterVector RunConfig::*member) {
  f.push_back(real_at(prefix + ".cT", [member](RunConfig& c) -> double& { return (c.*member).c_T; }));
  f.push_back(real_at(prefix + ".cD", [member](RunConfig& c) -> double& { return (c.*member).c_D; }));
  f.push_back(real_at(prefix + ".cM", [member](RunConfig& c) -> double& { return (c.*member).c_M; }));
  f.push_back(real_at(prefix + ".jx", [member](RunConfig& c) -> double& { return (c.*member).j_x; }));
  f.push_back(real_at(prefix + ".jy", [member](RunConfig& c) -> double& { return (c.*member).j_y; }));
  f.push_back(real_at(prefix + ".jz", [member](RunConfig& c) -> double& { return (c.*member).j_z; }));
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> f;
    auto P = [](RunConfig& c) -> PlannerConfig& { return c.planner; };
    f.push_back(real_at("planner.budget", [P](RunConfig& c) -> double& { return P(c).budget; }));
    f.push_back(enum_at<TerminationMode>("planner.mode", {{TerminationMode::WallClock, "wallclock"}, {TerminationMode::Iterations, "iterations"}},
                                         [P](RunConfig& c) -> TerminationMode& { return P(c).termination; }));
    f.push_back(real_at("planner.runtime", [P](RunConfig& c) -> double& { return P(c).runtime; }));
    f.push_back(int_at<int>("planner.iterations", [P](RunConfig& c) -> int& { return P(c).iterations; }));
    f.push_back(int_at<std::uint64_t>("planner.seed", [P](RunConfig& c) -> std::uint64_t& { return P(c).seed; }));
    f.push_back(real_at("planner.yaw_weight", [P](RunConfig& c) -> double& { return P(c).yaw_weight; }));
    f.push_back(int_at<int>("planner.max_connected_vertices", [P](RunConfig& c) -> int& { return P(c).max_connected_vertices; }));
    f.push_back(real_at("planner.min_segment_time", [P](RunConfig& c) -> double& { return P(c).min_segment_time; }));
    f.push_back(bool_at("planner.pruning", [P](RunConfig& c) -> bool& { return P(c).pruning; }));
    f.push_back(enum_at<QueueDiscipline>("planner.queue", {{QueueDiscipline::LowestCost, "lowest_cost"}, {QueueDiscipline::Fifo, "fifo"}},
                                         [P](RunConfig& c) -> QueueDiscipline& { return P(c).queue; }));
    f.push_back(int_at<std::size_t>("planner.max_beliefs", [P](RunConfig& c) -> std::size_t& { return P(c).max_beliefs; }));
    f.push_back(real_at("planner.checkpoint_interval", [P](RunConfig& c) -> double& { return P(c).checkpoint_interval; }));

    f.push_back(real_at("planner.rotor_margin", [P](RunConfig& c) -> double& { return P(c).rotor_margin; }));

    f.push_back(vec_at("box.min", [P](RunConfig& c) -> Vec3& { return P(c).limits.box_min; }));
    f.push_back(vec_at("box.max", [P](RunConfig& c) -> Vec3& { return P(c).limits.box_max; }));
    f.push_back(real_at("limits.thrust_min", [P](RunConfig& c) -> double& { return P(c).limits.thrust_min; }));
    f.push_back(real_at("limits.thrust_max", [P](RunConfig& c) -> double& { return P(c).limits.thrust_max; }));
    f.push_back(real_at("limits.omega_max", [P](RunConfig& c) -> double& { return P(c).limits.omega_max; }));
    f.push_back(real_at("limits.yaw_acc_max", [P](RunConfig& c) -> double& { return P(c).limits.yaw_acc_max; }));
    f.push_back(real_at("limits.v_max", [P](RunConfig& c) -> double& { return P(c).limits.v_max; }));
    f.push_back(real_at("limits.segment_time_max", [P](RunConfig& c) -> double& { return P(c).limits.segment_time_max; }));

    f.push_back(real_at("vehicle.mass", [P](RunConfig& c) -> double& { return P(c).geometry.mass; }));
    f.push_back(real_at("vehicle.arm_length", [P](RunConfig& c) -> double& { return P(c).geometry.arm_length; }));

    f.push_back(vec_at("noise.force_var", [P](RunConfig& c) -> Vec3& { return P(c).noise.force_var; }));
    f.push_back(vec_at("noise.moment_var", [P](RunConfig& c) -> Vec3& { return P(c).noise.moment_var; }));
    f.push_back(vec_at("noise.position_var", [P](RunConfig& c) -> Vec3& { return P(c).noise.position_var; }));
    f.push_back(vec_at("noise.attitude_var", [P](RunConfig& c) -> Vec3& { return P(c).noise.attitude_var; }));
    f.push_back(real_at("noise.rate", [P](RunConfig& c) -> double& { return P(c).noise.rate; }));

    f.push_back(real_at("prior.kinematic_var", [P](RunConfig& c) -> double& { return P(c).prior_kinematic_var; }));
    f.push_back(real_at("prior.param_rel_std", [P](RunConfig& c) -> double& { return P(c).prior_param_rel_std; }));

    add_theta(f, "theta_true", &RunConfig::theta_true);
    f.push_back(enum_at<GuessPolicy>("theta_guess.policy", {{GuessPolicy::Fixed, "fixed"}, {GuessPolicy::Uniform, "uniform"}},
                                     [](RunConfig& c) -> GuessPolicy& { return c.guess_policy; }));
    f.push_back(real("theta_guess.fraction", &RunConfig::guess_fraction));
    add_theta(f, "theta_guess", &RunConfig::theta_guess);

    f.push_back(int_at<int>("study.runs", [](RunConfig& c) -> int& { return c.runs; }));
    f.push_back(real("study.convergence_threshold", &RunConfig::convergence_threshold));
    f.push_back(enum_at<SynthesisMode>("study.synthesis", {{SynthesisMode::PerfectTracking, "perfect_tracking"}, {SynthesisMode::ClosedModel, "closed_model"}},
                                       [](RunConfig& c) -> SynthesisMode& { return c.synthesis; }));
    f.push_back(bool_at("study.measurement_noise", [](RunConfig& c) -> bool& { return c.measurement_noise; }));
    f.push_back({"output.dir", [](const RunConfig& c) { return c.output_dir; },
                 [](RunConfig& c, const std::string& v) { c.output_dir = v; }});
    return f;
  }();
  return f;
}

void collect(std::vector<std::string>& out, const std::string& key, const std::function<void()>& check) {
  try {
    check();
  } catch (const std::exception& e) {
    out.push_back(key + ": " + e.what());
  }
}

// Rebuilds the hexacopter layout after mass or arm length changed.
void refresh_geometry(RunConfig& c) {
  c.planner.geometry = RotorGeometry::hexacopter(c.planner.geometry.arm_length, c.planner.geometry.mass);
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::invalid_argument("invalid configuration: " + join(violations)), violations_(std::move(violations)) {}

void RunConfig::validate() const {
  std::vector<std::string> v;
  const PlannerConfig& p = planner;
  if (!(p.budget > 0.0) || !std::isfinite(p.budget)) v.push_back("planner.budget: must be positive");
  if (!(p.runtime > 0.0)) v.push_back("planner.runtime: must be positive");
  if (p.iterations < 0) v.push_back("planner.iterations: must be non-negative");
  if (!(p.yaw_weight >= 0.0)) v.push_back("planner.yaw_weight: must be non-negative");
  if (p.max_connected_vertices < 1) v.push_back("planner.max_connected_vertices: must be at least 1");
  if (!(p.min_segment_time > 0.0)) v.push_back("planner.min_segment_time: must be positive");
  if (p.max_beliefs < 1) v.push_back("planner.max_beliefs: must be at least 1");
  if (!(p.checkpoint_interval > 0.0)) v.push_back("planner.checkpoint_interval: must be positive");
  if (!(p.rotor_margin >= 0.0 && p.rotor_margin < 1.0)) v.push_back("planner.rotor_margin: must lie in [0, 1)");
  if (!(p.prior_kinematic_var > 0.0)) v.push_back("prior.kinematic_var: must be positive");
  if (!(p.prior_param_rel_std > 0.0)) v.push_back("prior.param_rel_std: must be positive");
  collect(v, "limits", [&] { p.limits.validate(); });
  collect(v, "vehicle", [&] { p.geometry.validate(); });
  collect(v, "noise", [&] { p.noise.validate(); });
  collect(v, "theta_true", [&] { theta_true.validate(); });
  collect(v, "theta_guess", [&] { theta_guess.validate(); });
  if (!(guess_fraction >= 0.0 && guess_fraction < 1.0)) v.push_back("theta_guess.fraction: must lie in [0, 1)");
  if (runs < 1) v.push_back("study.runs: must be at least 1");
  if (!(convergence_threshold > 0.0 && convergence_threshold < 1.0)) {
    v.push_back("study.convergence_threshold: must lie in (0, 1)");
  }
  if (output_dir.empty()) v.push_back("output.dir: must not be empty");
  if (!v.empty()) throw ConfigError(std::move(v));
}

bool RunConfig::operator==(const RunConfig& o) const { return save_config(*this) == save_config(o); }

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, const Field*> index;
  for (const auto& f : fields()) index[f.key] = &f;

  std::vector<std::string> errors;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        errors.push_back("line " + std::to_string(lineno) + ": malformed section header");
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected 'key = value'");
      continue;
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    const auto it = index.find(key);
    if (it == index.end()) {
      errors.push_back(key + ": unknown key");
      continue;
    }
    if (!seen.insert(key).second) {
      errors.push_back(key + ": duplicate key");
      continue;
    }
    try {
      it->second->set(cfg, value);
    } catch (const std::exception& e) {
      errors.push_back(key + ": " + e.what());
    }
  }
  refresh_geometry(cfg);
  if (cfg.guess_policy == GuessPolicy::Fixed && !seen.count("theta_guess.cT")) {
    // A fixed guess defaults to the truth when no explicit guess is given.
    bool any = false;
    for (const char* n : kParameterNames) any = any || seen.count(std::string("theta_guess.") + n);
    if (!any) cfg.theta_guess = cfg.theta_true;
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    errors.insert(errors.end(), e.violations().begin(), e.violations().end());
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError({"cannot read config file '" + path + "'"});
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string save_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + s + "]\n";
      section = s;
    }
    out += f.key.substr(dot + 1) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

void write_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << save_config(cfg);
}

ParameterVector sample_guess(const RunConfig& cfg, std::mt19937_64& rng) {
  if (cfg.guess_policy == GuessPolicy::Fixed) return cfg.theta_guess;
  std::uniform_real_distribution<double> u(1.0 - cfg.guess_fraction, 1.0 + cfg.guess_fraction);
  Vec6 v = cfg.theta_true.as_vector();
  for (int i = 0; i < 6; ++i) v[i] *= u(rng);
  return ParameterVector::from_vector(v);
}

std::uint64_t run_seed(std::uint64_t base, int index) {
  // splitmix64 step so neighbouring runs get unrelated streams.
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace mavcal
