#include "mavcal/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mavcal {

namespace {

class CsvWriter {
 public:
  CsvWriter(std::ostream& os, std::vector<std::string> header) : os_(os), columns_(header.size()) {
    row(std::move(header));
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw std::logic_error("csv row has the wrong number of columns");
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) line += (i ? "," : "") + cells[i];
    os_ << line << '\n';
  }

  void numbers(const std::vector<double>& values) {
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values) cells.push_back(format_double(v));
    row(cells);
  }

 private:
  std::ostream& os_;
  std::size_t columns_;
};

std::vector<std::string> rotor_columns(const std::string& prefix, long k) {
  std::vector<std::string> c;
  for (long i = 1; i <= k; ++i) c.push_back(prefix + std::to_string(i));
  return c;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj, double rate) {
  if (!(rate > 0.0)) throw std::invalid_argument("sample rate must be positive");
  CsvWriter w(os, {"t", "px", "py", "pz", "vx", "vy", "vz", "ax", "ay", "az", "jx", "jy", "jz", "sx", "sy", "sz", "yaw",
                   "yawd", "yawdd"});
  if (traj.segments.empty()) return;
  const double T = traj.duration();
  const auto n = static_cast<std::size_t>(std::floor(T * rate + 1e-9));
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) / rate;
    const FlatState f = evaluate(traj, std::min(t, T));
    w.numbers({t, f.position.x(), f.position.y(), f.position.z(), f.velocity.x(), f.velocity.y(), f.velocity.z(),
               f.acceleration.x(), f.acceleration.y(), f.acceleration.z(), f.jerk.x(), f.jerk.y(), f.jerk.z(),
               f.snap.x(), f.snap.y(), f.snap.z(), f.yaw, f.yaw_rate, f.yaw_acceleration});
  }
}

void write_full_state_csv(std::ostream& os, const std::vector<NominalPoint>& points) {
  const long k = points.empty() ? 0 : points.front().input.size();
  std::vector<std::string> h{"t", "px", "py", "pz", "vbx", "vby", "vbz", "qw", "qx", "qy", "qz", "wx", "wy", "wz"};
  for (auto& c : rotor_columns("n", k)) h.push_back(c);
  CsvWriter w(os, h);
  for (const auto& p : points) {
    const FullState& s = p.state;
    std::vector<double> v{p.timestamp, s.p_W.x(), s.p_W.y(), s.p_W.z(), s.v_B.x(), s.v_B.y(), s.v_B.z(),
                          s.q.w(), s.q.x(), s.q.y(), s.q.z(), s.omega_B.x(), s.omega_B.y(), s.omega_B.z()};
    for (long i = 0; i < p.input.size(); ++i) v.push_back(p.input[i]);
    w.numbers(v);
  }
}

void write_measurements_csv(std::ostream& os, const MeasurementStream& stream) {
  const long k = stream.records.empty() ? 0 : stream.records.front().input.size();
  std::vector<std::string> h{"t", "zpx", "zpy", "zpz", "zqw", "zqx", "zqy", "zqz"};
  for (auto& c : rotor_columns("n", k)) h.push_back(c);
  CsvWriter w(os, h);
  for (const auto& r : stream.records) {
    std::vector<double> v{r.t, r.z_p.x(), r.z_p.y(), r.z_p.z(), r.z_q.w(), r.z_q.x(), r.z_q.y(), r.z_q.z()};
    for (long i = 0; i < r.input.size(); ++i) v.push_back(r.input[i]);
    w.numbers(v);
  }
}

MeasurementStream read_measurements_csv(std::istream& is, double rate) {
  MeasurementStream s;
  s.rate = rate;
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("measurement csv is empty");
  const auto header = split(line);
  if (header.size() < 9 || header[0] != "t" || header[7] != "zqz") {
    throw std::invalid_argument("measurement csv has an unexpected header");
  }
  const std::size_t k = header.size() - 8;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw std::invalid_argument("wrong column count on line " + std::to_string(lineno));
    std::vector<double> v(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto r = std::from_chars(cells[i].data(), cells[i].data() + cells[i].size(), v[i]);
      if (r.ec != std::errc()) throw std::invalid_argument("bad number on line " + std::to_string(lineno));
    }
    MeasurementRecord rec;
    rec.t = v[0];
    rec.z_p = Vec3(v[1], v[2], v[3]);
    rec.z_q = Quat(v[4], v[5], v[6], v[7]).normalized();
    rec.input.resize(static_cast<long>(k));
    for (std::size_t i = 0; i < k; ++i) rec.input[static_cast<long>(i)] = v[8 + i];
    s.records.push_back(std::move(rec));
  }
  s.validate();
  return s;
}

void write_estimation_csv(std::ostream& os, const EstimationRun& run) {
  std::vector<std::string> h{"t"};
  for (const char* n : kParameterNames) {
    h.push_back(n);
    h.push_back(std::string("sigma_") + n);
  }
  h.push_back("dopt");
  CsvWriter w(os, h);
  for (std::size_t k = 0; k < run.size(); ++k) {
    std::vector<double> v{run.t[k]};
    for (int i = 0; i < 6; ++i) {
      v.push_back(run.theta[k][i]);
      v.push_back(run.sigma[k][i]);
    }
    v.push_back(run.dopt[k]);
    w.numbers(v);
  }
}

CovarianceTrace predicted_covariance_trace(const Trajectory& traj, const PlannerConfig& cfg) {
  CovarianceTrace out;
  Covariance sigma = cfg.prior();
  double t0 = 0.0;
  auto push = [&](double t) {
    out.t.push_back(t);
    out.sigma.push_back(parameter_block(sigma).diagonal().cwiseMax(0.0).cwiseSqrt());
    out.dopt.push_back(d_optimality(parameter_block(sigma)));
  };
  push(0.0);
  for (const auto& seg : traj.segments) {
    const auto systems = edge_systems(seg, cfg.geometry, cfg.theta_plan, cfg.noise);
    for (std::size_t k = 0; k < systems.size(); ++k) {
      sigma = ekf_step(sigma, systems[k]);
      push(t0 + static_cast<double>(k + 1) * systems[k].dt);
    }
    t0 += seg.duration();
  }
  return out;
}

void write_covariance_trace_csv(std::ostream& os, const CovarianceTrace& trace) {
  std::vector<std::string> h{"t"};
  for (const char* n : kParameterNames) h.push_back(std::string("sigma_") + n);
  h.push_back("dopt");
  CsvWriter w(os, h);
  for (std::size_t k = 0; k < trace.t.size(); ++k) {
    std::vector<double> v{trace.t[k]};
    for (int i = 0; i < 6; ++i) v.push_back(trace.sigma[k][i]);
    v.push_back(trace.dopt[k]);
    w.numbers(v);
  }
}

void write_checkpoints_csv(std::ostream& os, const std::vector<Checkpoint>& checkpoints) {
  CsvWriter w(os, {"runtime", "iteration", "beliefs", "alive_beliefs", "vertices", "incumbent"});
  for (const auto& c : checkpoints) {
    w.row({format_double(c.runtime), std::to_string(c.iteration), std::to_string(c.beliefs),
           std::to_string(c.alive_beliefs), std::to_string(c.vertices), format_double(c.incumbent)});
  }
}

void write_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << content;
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace mavcal
