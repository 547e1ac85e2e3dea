#include "mavcal/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

namespace mavcal {

namespace {

constexpr double kCostTolerance = 1e-9;
constexpr double kRelTolerance = 1e-9;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Every sample point of the edge schedule must be recoverable with each
// squared rotor speed at least rotor_margin times its hover value, so the
// segment stays flyable when the true parameters differ from the guess.
bool recoverable(const Segment4D& seg, const PlannerConfig& cfg) {
  const int n = edge_step_count(seg.duration(), cfg.noise.rate);
  const double dt = seg.duration() / n;
  const double hover_sq = cfg.geometry.mass * kGravity / (cfg.geometry.rotor_count() * cfg.theta_plan.c_T);
  try {
    for (int k = 0; k <= n; ++k) {
      const NominalPoint p = flat_to_full(evaluate(seg, std::min(k * dt, seg.duration())), cfg.geometry, cfg.theta_plan);
      if (p.input.minCoeff() * p.input.minCoeff() < cfg.rotor_margin * hover_sq) return false;
    }
  } catch (const SingularityError&) {
    return false;
  }
  return true;
}

std::optional<Connection> finish_connection(Segment4D seg, const PlannerConfig& cfg, bool propagate_beliefs) {
  if (!check_feasibility(seg, cfg.limits)) return std::nullopt;
  Connection c;
  c.end = evaluate(seg, seg.duration());
  if (!c.end.finite()) return std::nullopt;
  if (!recoverable(seg, cfg)) return std::nullopt;
  if (propagate_beliefs) {
    try {
      c.propagator = std::make_shared<const EdgePropagator>(
          edge_transfer(seg, cfg.geometry, cfg.theta_plan, cfg.noise));
    } catch (const SingularityError&) {
      return std::nullopt;
    } catch (const NumericalError&) {
      return std::nullopt;
    }
  }
  c.segment = std::move(seg);
  return c;
}

std::optional<Connection> connect_impl(const FlatState& from, const Vec3& position, double yaw,
                                       const std::optional<FlatState>& end, double budget_left,
                                       const PlannerConfig& cfg, std::mt19937_64& rng, bool propagate_beliefs) {
  const double distance = (position - from.position).norm();
  double t_s = 0.0;
  try {
    t_s = sample_segment_time(distance, cfg.limits.v_max, budget_left, cfg.limits.segment_time_max, rng);
  } catch (const std::domain_error&) {
    return std::nullopt;
  }
  if (!(t_s > 0.0)) return std::nullopt;
  const double end_yaw = from.yaw + wrap_angle(yaw - from.yaw);
  Segment4D seg;
  try {
    seg = solve_segment(from, position, end_yaw, end, t_s);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  return finish_connection(std::move(seg), cfg, propagate_beliefs);
}

}  // namespace

void PlannerConfig::validate() const {
  if (!(budget > 0.0) || !std::isfinite(budget)) throw std::invalid_argument("planner.budget must be positive");
  if (termination == TerminationMode::WallClock && !(runtime > 0.0)) {
    throw std::invalid_argument("planner.runtime must be positive");
  }
  if (termination == TerminationMode::Iterations && iterations < 0) {
    throw std::invalid_argument("planner.iterations must be non-negative");
  }
  if (!(yaw_weight >= 0.0)) throw std::invalid_argument("planner.yaw_weight must be non-negative");
  if (max_connected_vertices < 1) throw std::invalid_argument("planner.max_connected_vertices must be at least 1");
  if (!(min_segment_time > 0.0)) throw std::invalid_argument("planner.min_segment_time must be positive");
  if (max_beliefs < 1) throw std::invalid_argument("planner.max_beliefs must be at least 1");
  if (!(checkpoint_interval > 0.0)) throw std::invalid_argument("planner.checkpoint_interval must be positive");
  if (!(rotor_margin >= 0.0 && rotor_margin < 1.0)) throw std::invalid_argument("planner.rotor_margin must lie in [0, 1)");
  if (!(prior_kinematic_var > 0.0)) throw std::invalid_argument("prior.kinematic_var must be positive");
  if (!(prior_param_rel_std > 0.0)) throw std::invalid_argument("prior.param_rel_std must be positive");
  limits.validate();
  theta_plan.validate();
  noise.validate();
  geometry.validate();
}

bool dominates(const BeliefNode& a, const BeliefNode& b) {
  return a.cost < b.cost - kCostTolerance && a.dopt_full < b.dopt_full * (1.0 - kRelTolerance) &&
         a.dopt_theta < b.dopt_theta * (1.0 - kRelTolerance);
}

double Trajectory::duration() const {
  double t = 0.0;
  for (const auto& s : segments) t += s.duration();
  return t;
}

FlatState evaluate(const Trajectory& traj, double t) {
  if (traj.segments.empty()) throw std::out_of_range("empty trajectory");
  double offset = 0.0;
  for (std::size_t i = 0; i < traj.segments.size(); ++i) {
    const double d = traj.segments[i].duration();
    if (t <= offset + d || i + 1 == traj.segments.size()) {
      return evaluate(traj.segments[i], std::clamp(t - offset, 0.0, d));
    }
    offset += d;
  }
  return evaluate(traj.segments.back(), traj.segments.back().duration());
}

RawSample sample_state(const Vec3& box_min, const Vec3& box_max, std::mt19937_64& rng) {
  RawSample s;
  for (int i = 0; i < 3; ++i) {
    if (box_max[i] > box_min[i]) {
      s.position[i] = std::uniform_real_distribution<double>(box_min[i], box_max[i])(rng);
    } else {
      s.position[i] = box_min[i];
    }
  }
  // Uniform on (-pi, pi]: mirror the half-open [-pi, pi) draw.
  s.yaw = -std::uniform_real_distribution<double>(-std::numbers::pi, std::numbers::pi)(rng);
  return s;
}

double flat_distance(const FlatState& a, const Vec3& position, double yaw, double yaw_weight) {
  const double dp = (a.position - position).squaredNorm();
  const double dy = yaw_weight * wrap_angle(yaw - a.yaw);
  return std::sqrt(dp + dy * dy);
}

const Vertex& nearest(const std::vector<Vertex>& vertices, const RawSample& sample, double yaw_weight) {
  if (vertices.empty()) throw std::invalid_argument("nearest: no vertices");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const double d = flat_distance(vertices[i].flat, sample.position, sample.yaw, yaw_weight);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return vertices[best];
}

std::optional<Connection> connect(const FlatState& from, const RawSample& target, double budget_left,
                                  const PlannerConfig& cfg, std::mt19937_64& rng, bool propagate_beliefs) {
  return connect_impl(from, target.position, target.yaw, std::nullopt, budget_left, cfg, rng, propagate_beliefs);
}

std::optional<Connection> connect(const FlatState& from, const FlatState& target, double budget_left,
                                  const PlannerConfig& cfg, std::mt19937_64& rng, bool propagate_beliefs) {
  return connect_impl(from, target.position, target.yaw, target, budget_left, cfg, rng, propagate_beliefs);
}

// ---------------------------------------------------------------------------

BeliefGraph::BeliefGraph(PlannerConfig cfg, const FlatState& initial, bool propagate_beliefs)
    : cfg_(std::move(cfg)), propagate_beliefs_(propagate_beliefs),
      incumbent_(std::numeric_limits<double>::infinity()) {
  add_vertex(initial);
  BeliefNode root;
  root.id = 0;
  root.cost = 0.0;
  root.vertex = 0;
  if (propagate_beliefs_) {
    root.sigma = std::make_unique<Covariance>(cfg_.prior());
    root.sigma_theta = parameter_block(*root.sigma);
    root.dopt_full = d_optimality_fast(*root.sigma);
    root.dopt_theta = d_optimality_fast(root.sigma_theta);
  }
  root.open = cfg_.budget >= cfg_.min_segment_time;
  if (root.open) {
    vertices_[0].open_beliefs.push_back(0);
  } else {
    vertices_[0].closed_beliefs.push_back(0);
    root.sigma.reset();
  }
  beliefs_.push_back(std::move(root));
  stats_.beliefs = 1;
  stats_.alive_beliefs = 1;
}

int BeliefGraph::add_vertex(const FlatState& flat) {
  Vertex v;
  v.id = static_cast<int>(vertices_.size());
  v.flat = flat;
  v.flat.yaw = wrap_angle(flat.yaw);
  vertices_.push_back(std::move(v));
  stats_.vertices = vertices_.size();
  return vertices_.back().id;
}

int BeliefGraph::add_edge(int from, int to, Connection connection) {
  if (from < 0 || to < 0 || from >= static_cast<int>(vertices_.size()) || to >= static_cast<int>(vertices_.size())) {
    throw std::out_of_range("add_edge: unknown vertex");
  }
  Edge e;
  e.id = static_cast<int>(edges_.size());
  e.from = from;
  e.to = to;
  e.cost = connection.segment.duration();
  e.segment = std::move(connection.segment);
  e.propagator = std::move(connection.propagator);
  if (e.propagator && std::holds_alternative<SequentialFallback>(*e.propagator)) ++stats_.fallback_edges;
  vertices_[from].out_edges.push_back(e.id);
  edges_.push_back(std::move(e));
  stats_.edges = edges_.size();
  return edges_.back().id;
}

std::optional<BeliefNode> BeliefGraph::propagate(const Edge& e, const BeliefNode& b) {
  const double cost = b.cost + e.cost;
  if (cost > cfg_.budget + kCostTolerance) return std::nullopt;
  if (!b.sigma || !e.propagator) return std::nullopt;
  Covariance sigma;
  try {
    sigma = mavcal::propagate(*b.sigma, *e.propagator);
  } catch (const NumericalError&) {
    try {
      sigma = propagate_sequential(*b.sigma, edge_systems(e.segment, cfg_.geometry, cfg_.theta_plan, cfg_.noise));
    } catch (const std::exception&) {
      ++stats_.failed_propagations;
      return std::nullopt;
    }
  }
  BeliefNode n;
  n.sigma_theta = parameter_block(sigma);
  try {
    n.dopt_full = d_optimality_fast(sigma);
    n.dopt_theta = d_optimality_fast(n.sigma_theta);
  } catch (const NumericalError&) {
    ++stats_.failed_propagations;
    return std::nullopt;
  }
  n.sigma = std::make_unique<Covariance>(sigma);
  n.cost = cost;
  n.parent = b.id;
  n.vertex = e.to;
  n.edge = e.id;
  n.open = cfg_.budget - cost >= cfg_.min_segment_time;
  return n;
}

void BeliefGraph::release_if_final(BeliefNode& b) {
  if (!b.alive || !b.open) b.sigma.reset();
}

bool BeliefGraph::append_belief(BeliefNode b) {
  if (beliefs_.size() >= cfg_.max_beliefs) {
    saturated_ = true;
    return false;
  }
  Vertex& v = vertices_[b.vertex];
  if (cfg_.pruning) {
    for (const auto* set : {&v.open_beliefs, &v.closed_beliefs}) {
      for (int id : *set) {
        if (dominates(beliefs_[id], b)) {
          ++stats_.rejected;
          return false;
        }
      }
    }
    for (auto* set : {&v.open_beliefs, &v.closed_beliefs}) {
      auto keep = std::remove_if(set->begin(), set->end(), [&](int id) {
        if (!dominates(b, beliefs_[id])) return false;
        BeliefNode& old = beliefs_[id];
        old.alive = false;
        release_if_final(old);
        ++stats_.pruned;
        --stats_.alive_beliefs;
        return true;
      });
      set->erase(keep, set->end());
    }
  }
  b.id = static_cast<int>(beliefs_.size());
  b.alive = true;
  b.next_edge = 0;
  b.queued = false;
  (b.open ? v.open_beliefs : v.closed_beliefs).push_back(b.id);
  if (b.dopt_theta < incumbent_) incumbent_ = b.dopt_theta;
  release_if_final(b);
  beliefs_.push_back(std::move(b));
  stats_.beliefs = beliefs_.size();
  ++stats_.alive_beliefs;
  return true;
}

void BeliefGraph::enqueue_open(int vertex) {
  for (int id : vertices_[vertex].open_beliefs) {
    BeliefNode& b = beliefs_[id];
    if (b.queued || !b.alive || !b.sigma) continue;
    if (b.next_edge >= vertices_[vertex].out_edges.size()) continue;
    b.queued = true;
    if (cfg_.queue == QueueDiscipline::Fifo) {
      fifo_.push_back(id);
    } else {
      heap_.emplace_back(b.cost, id);
      std::push_heap(heap_.begin(), heap_.end(), std::greater<>());
    }
  }
}

bool BeliefGraph::pop(int& out) {
  while (true) {
    int id = -1;
    if (cfg_.queue == QueueDiscipline::Fifo) {
      if (fifo_head_ >= fifo_.size()) {
        fifo_.clear();
        fifo_head_ = 0;
        return false;
      }
      id = fifo_[fifo_head_++];
    } else {
      if (heap_.empty()) return false;
      std::pop_heap(heap_.begin(), heap_.end(), std::greater<>());
      id = heap_.back().second;
      heap_.pop_back();
    }
    BeliefNode& b = beliefs_[id];
    b.queued = false;
    if (b.alive && b.open && b.sigma) {
      out = id;
      return true;
    }
  }
}

void BeliefGraph::drain(const std::function<bool()>& should_stop) {
  int id = -1;
  while (!saturated_ && pop(id)) {
    const int vertex = beliefs_[id].vertex;
    while (beliefs_[id].alive && beliefs_[id].next_edge < vertices_[vertex].out_edges.size()) {
      if (should_stop()) {
        enqueue_open(vertex);
        return;
      }
      const int edge_id = vertices_[vertex].out_edges[beliefs_[id].next_edge++];
      std::optional<BeliefNode> nb = propagate(edges_[edge_id], beliefs_[id]);
      if (!nb) continue;
      const bool open = nb->open;
      if (append_belief(std::move(*nb)) && open) {
        BeliefNode& added = beliefs_.back();
        added.queued = true;
        if (cfg_.queue == QueueDiscipline::Fifo) {
          fifo_.push_back(added.id);
        } else {
          heap_.emplace_back(added.cost, added.id);
          std::push_heap(heap_.begin(), heap_.end(), std::greater<>());
        }
      }
      if (saturated_) return;
    }
  }
}

std::optional<int> BeliefGraph::best_belief() const {
  std::optional<int> best;
  for (const auto& b : beliefs_) {
    if (b.parent < 0 || !b.alive) continue;
    if (!best) {
      best = b.id;
      continue;
    }
    const BeliefNode& c = beliefs_[*best];
    if (b.dopt_theta < c.dopt_theta || (b.dopt_theta == c.dopt_theta && b.cost < c.cost)) best = b.id;
  }
  return best;
}

Trajectory BeliefGraph::extract(int belief) const {
  if (belief < 0 || belief >= static_cast<int>(beliefs_.size())) throw std::out_of_range("extract: unknown belief");
  std::vector<int> chain;
  for (int id = belief; id >= 0; id = beliefs_[id].parent) {
    chain.push_back(id);
    if (chain.size() > beliefs_.size()) throw std::logic_error("belief parent chain has a cycle");
  }
  std::reverse(chain.begin(), chain.end());
  Trajectory t;
  for (int id : chain) {
    const BeliefNode& b = beliefs_[id];
    if (b.edge >= 0) t.segments.push_back(edges_[b.edge].segment);
    t.trace.push_back({b.cost, b.dopt_theta, b.id, b.vertex});
  }
  t.cost = beliefs_[belief].cost;
  if (propagate_beliefs_) t.sigma_theta = beliefs_[belief].sigma_theta;
  return t;
}

Trajectory BeliefGraph::get_d_optimal_path() const {
  const auto best = best_belief();
  if (!best) throw PlanningError("no informative trajectory found");
  return extract(*best);
}

double BeliefGraph::min_open_cost(int vertex) const {
  double c = std::numeric_limits<double>::infinity();
  for (int id : vertices_[vertex].open_beliefs) c = std::min(c, beliefs_[id].cost);
  return std::isfinite(c) ? c : 0.0;
}

nlohmann::json BeliefGraph::to_json() const {
  nlohmann::json j;
  j["vertices"] = nlohmann::json::array();
  for (const auto& v : vertices_) {
    const FlatState& f = v.flat;
    auto vec = [](const Vec3& x) { return nlohmann::json::array({x.x(), x.y(), x.z()}); };
    j["vertices"].push_back({{"id", v.id},
                             {"position", vec(f.position)},
                             {"velocity", vec(f.velocity)},
                             {"acceleration", vec(f.acceleration)},
                             {"jerk", vec(f.jerk)},
                             {"snap", vec(f.snap)},
                             {"yaw", f.yaw},
                             {"yaw_rate", f.yaw_rate},
                             {"yaw_acceleration", f.yaw_acceleration}});
  }
  j["edges"] = nlohmann::json::array();
  for (const auto& e : edges_) {
    j["edges"].push_back({{"id", e.id},
                          {"from", e.from},
                          {"to", e.to},
                          {"cost", e.cost},
                          {"sequential_fallback",
                           e.propagator && std::holds_alternative<SequentialFallback>(*e.propagator)},
                          {"segment", segment_to_json(e.segment)}});
  }
  j["beliefs"] = nlohmann::json::array();
  for (const auto& b : beliefs_) {
    j["beliefs"].push_back({{"id", b.id},
                            {"cost", b.cost},
                            {"dopt", b.dopt_full},
                            {"dopt_theta", b.dopt_theta},
                            {"parent", b.parent},
                            {"vertex", b.vertex},
                            {"edge", b.edge},
                            {"open", b.open},
                            {"alive", b.alive}});
  }
  return j;
}

// ---------------------------------------------------------------------------

FlatState initial_hover(const PlannerConfig& cfg) {
  return FlatState::hover(0.5 * (cfg.limits.box_min + cfg.limits.box_max), 0.0);
}

namespace {

// Phase 1 of one iteration: sample, extend from the nearest vertex, connect
// back and interconnect with the rest of the graph. budget_left(v) gives the
// remaining time used to bound segment durations leaving v.
template <typename BudgetLeft, typename OnEdge>
void grow(BeliefGraph& g, const PlannerConfig& cfg, std::mt19937_64& rng, bool propagate_beliefs,
          BudgetLeft budget_left, OnEdge on_edge, const std::function<bool()>& out_of_time) {
  const RawSample sample = sample_state(cfg.limits.box_min, cfg.limits.box_max, rng);
  const int near_id = nearest(g.vertices(), sample, cfg.yaw_weight).id;
  const FlatState near_flat = g.vertices()[near_id].flat;
  auto forward = connect(near_flat, sample, budget_left(near_id), cfg, rng, propagate_beliefs);
  if (!forward) return;
  const int new_id = g.add_vertex(forward->end);
  on_edge(g.add_edge(near_id, new_id, std::move(*forward)));
  const FlatState new_flat = g.vertices()[new_id].flat;
  if (auto back = connect(new_flat, near_flat, budget_left(new_id), cfg, rng, propagate_beliefs)) {
    on_edge(g.add_edge(new_id, near_id, std::move(*back)));
  }
  // Interconnect with every vertex while the graph is small, afterwards with
  // the max_connected_vertices closest ones.
  std::vector<int> others;
  for (int v = 0; v < new_id; ++v)
    if (v != near_id) others.push_back(v);
  const auto cap = static_cast<std::size_t>(std::max(0, cfg.max_connected_vertices - 1));
  if (others.size() > cap) {
    auto dist = [&](int v) {
      return flat_distance(g.vertices()[v].flat, new_flat.position, new_flat.yaw, cfg.yaw_weight);
    };
    std::stable_sort(others.begin(), others.end(), [&](int a, int b) { return dist(a) < dist(b); });
    others.resize(cap);
    std::sort(others.begin(), others.end());
  }
  for (int v : others) {
    if (out_of_time()) return;
    const FlatState vf = g.vertices()[v].flat;
    if (auto in = connect(vf, new_flat, budget_left(v), cfg, rng, propagate_beliefs)) {
      on_edge(g.add_edge(v, new_id, std::move(*in)));
    }
    if (auto out = connect(new_flat, vf, budget_left(new_id), cfg, rng, propagate_beliefs)) {
      on_edge(g.add_edge(new_id, v, std::move(*out)));
    }
  }
}

}  // namespace

PlanOutcome plan_search(const PlannerConfig& cfg, const FlatState& initial, bool dump_graph) {
  cfg.validate();
  const auto start = Clock::now();
  BeliefGraph g(cfg, initial, true);
  std::mt19937_64 rng(cfg.seed);
  const bool wall = cfg.termination == TerminationMode::WallClock;
  int iteration = 0;
  double next_checkpoint = 0.0;

  auto record = [&](double t) {
    Checkpoint c;
    c.runtime = t;
    c.iteration = iteration;
    c.beliefs = g.accepted();
    c.alive_beliefs = g.stats().alive_beliefs;
    c.vertices = g.vertices().size();
    c.incumbent = g.incumbent();
    g.mutable_stats().checkpoints.push_back(c);
  };
  auto checkpoint = [&]() {
    if (!wall) return;
    const double t = seconds_since(start);
    while (t >= next_checkpoint && next_checkpoint <= cfg.runtime + 1e-9) {
      record(next_checkpoint);
      next_checkpoint += cfg.checkpoint_interval;
    }
  };
  std::function<bool()> out_of_time = [&]() {
    if (!wall) return false;
    checkpoint();
    return seconds_since(start) >= cfg.runtime;
  };

  checkpoint();
  while (!g.saturated()) {
    if (wall ? out_of_time() : iteration >= cfg.iterations) break;
    ++iteration;
    std::vector<int> touched;
    grow(
        g, cfg, rng, true, [&](int v) { return cfg.budget - g.min_open_cost(v); },
        [&](int e) { touched.push_back(g.edges()[e].from); }, out_of_time);
    for (int v : touched) g.enqueue_open(v);
    g.drain(out_of_time);
    if (!wall) record(seconds_since(start));
  }
  if (wall) {
    // Final sample at the termination time so every run ends on the same checkpoint.
    checkpoint();
    if (g.stats().checkpoints.empty() || g.stats().checkpoints.back().runtime < cfg.runtime - 1e-9) {
      record(cfg.runtime);
    }
  }

  PlanOutcome r;
  r.stats = g.stats();
  r.stats.iterations = iteration;
  r.stats.runtime = seconds_since(start);
  if (const auto best = g.best_belief()) r.trajectory = g.extract(*best);
  if (dump_graph) r.graph = g.to_json();
  return r;
}

PlanResult plan(const PlannerConfig& cfg, const FlatState& initial) {
  PlanOutcome o = plan_search(cfg, initial);
  if (!o.trajectory) throw PlanningError("no informative trajectory found");
  return {std::move(*o.trajectory), std::move(o.stats)};
}

PlanResult plan(const PlannerConfig& cfg) { return plan(cfg, initial_hover(cfg)); }

Trajectory random_baseline_plan(const PlannerConfig& cfg, const FlatState& initial) {
  cfg.validate();
  const auto start = Clock::now();
  BeliefGraph g(cfg, initial, false);
  std::mt19937_64 rng(cfg.seed);
  const bool wall = cfg.termination == TerminationMode::WallClock;
  const double inf = std::numeric_limits<double>::infinity();

  // Shortest arrival time from the root, maintained incrementally.
  std::vector<double> dist{0.0};
  auto relax = [&](int e_id) {
    const Edge& e = g.edges()[e_id];
    dist.resize(g.vertices().size(), inf);
    if (dist[e.from] + e.cost >= dist[e.to]) return;
    dist[e.to] = dist[e.from] + e.cost;
    std::vector<int> stack{e.to};
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int out : g.vertices()[u].out_edges) {
        const Edge& f = g.edges()[out];
        if (dist[u] + f.cost < dist[f.to]) {
          dist[f.to] = dist[u] + f.cost;
          stack.push_back(f.to);
        }
      }
    }
  };
  auto budget_left = [&](int v) {
    dist.resize(g.vertices().size(), inf);
    return std::isfinite(dist[v]) ? cfg.budget - dist[v] : cfg.budget;
  };
  std::function<bool()> out_of_time = [&]() { return wall && seconds_since(start) >= cfg.runtime; };

  int iteration = 0;
  while (wall ? !out_of_time() : iteration < cfg.iterations) {
    ++iteration;
    grow(g, cfg, rng, false, budget_left, relax, out_of_time);
  }

  // Randomised depth-bounded walk over budget-respecting paths.
  const auto& V = g.vertices();
  const auto& E = g.edges();
  double min_cost = inf;
  for (const auto& e : E) min_cost = std::min(min_cost, e.cost);
  const int depth_bound = std::isfinite(min_cost) && min_cost > 0 ? static_cast<int>(cfg.budget / min_cost) + 1 : 0;
  constexpr std::size_t kMaxExpansions = 200000;

  std::vector<int> path, best_path;
  std::vector<int> use_count(E.size(), 0);
  int distinct = 0, best_distinct = 0;
  double best_cost = 0.0;
  std::size_t expansions = 0;
  std::vector<std::vector<int>> order(V.size());
  for (std::size_t v = 0; v < V.size(); ++v) {
    order[v] = V[v].out_edges;
    std::shuffle(order[v].begin(), order[v].end(), rng);
  }
  std::function<void(int, double)> walk = [&](int v, double cost) {
    if (distinct > best_distinct || (distinct == best_distinct && distinct > 0 && cost < best_cost)) {
      best_distinct = distinct;
      best_cost = cost;
      best_path = path;
    }
    if (static_cast<int>(path.size()) >= depth_bound || ++expansions > kMaxExpansions) return;
    for (int e : order[v]) {
      const double c = cost + E[e].cost;
      if (c > cfg.budget + kCostTolerance) continue;
      path.push_back(e);
      if (use_count[e]++ == 0) ++distinct;
      walk(E[e].to, c);
      if (--use_count[e] == 0) --distinct;
      path.pop_back();
      if (expansions > kMaxExpansions) return;
    }
  };
  walk(0, 0.0);
  if (best_path.empty()) throw PlanningError("no informative trajectory found");

  Trajectory t;
  t.trace.push_back({0.0, 0.0, -1, 0});
  double c = 0.0;
  for (int e : best_path) {
    t.segments.push_back(E[e].segment);
    c += E[e].cost;
    t.trace.push_back({c, 0.0, -1, E[e].to});
  }
  t.cost = c;
  return t;
}

Trajectory random_baseline_plan(const PlannerConfig& cfg) { return random_baseline_plan(cfg, initial_hover(cfg)); }

Covariance evaluate_trajectory(const Trajectory& traj, const PlannerConfig& cfg) {
  Covariance sigma = cfg.prior();
  for (const auto& seg : traj.segments) {
    sigma = propagate_sequential(sigma, edge_systems(seg, cfg.geometry, cfg.theta_plan, cfg.noise));
  }
  return sigma;
}

nlohmann::json trajectory_to_json(const Trajectory& traj) {
  nlohmann::json j;
  j["cost"] = traj.cost;
  j["segments"] = nlohmann::json::array();
  for (const auto& s : traj.segments) j["segments"].push_back(segment_to_json(s));
  j["trace"] = nlohmann::json::array();
  for (const auto& s : traj.trace) {
    j["trace"].push_back({{"cost", s.cost}, {"dopt_theta", s.dopt_theta}, {"belief", s.belief}, {"vertex", s.vertex}});
  }
  if (traj.sigma_theta) {
    nlohmann::json m = nlohmann::json::array();
    for (int r = 0; r < 6; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < 6; ++c) row.push_back((*traj.sigma_theta)(r, c));
      m.push_back(row);
    }
    j["sigma_theta"] = m;
  } else {
    j["sigma_theta"] = nullptr;
  }
  return j;
}

Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory t;
  t.cost = j.at("cost").get<double>();
  for (const auto& s : j.at("segments")) t.segments.push_back(segment_from_json(s));
  if (j.contains("trace")) {
    for (const auto& s : j.at("trace")) {
      t.trace.push_back({s.at("cost").get<double>(), s.at("dopt_theta").get<double>(), s.at("belief").get<int>(),
                         s.at("vertex").get<int>()});
    }
  }
  if (j.contains("sigma_theta") && !j.at("sigma_theta").is_null()) {
    Mat6 m;
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c) m(r, c) = j.at("sigma_theta").at(r).at(c).get<double>();
    t.sigma_theta = m;
  }
  return t;
}

}  // namespace mavcal
