#pragma once

// Sampling-based belief-space planner for informative calibration flights:
// a bidirectional graph of minimum-snap segments, uniform-cost propagation of
// EKF beliefs along it, modular dominance pruning and D-optimal extraction.
// Also hosts the random maximum-segment baseline.

#include "mavcal/belief.hpp"
#include "mavcal/polynomial.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace mavcal {

class PlanningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TerminationMode { WallClock, Iterations };
enum class QueueDiscipline { LowestCost, Fifo };

struct PlannerConfig {
  double budget = 20.0;               // C, total flight time (s)
  Limits limits;
  TerminationMode termination = TerminationMode::WallClock;
  double runtime = 10.0;              // t_terminate (s), wall-clock mode
  int iterations = 30;                // sampling iterations, iteration mode
  std::uint64_t seed = 1;
  ParameterVector theta_plan;
  NoiseConfig noise;
  RotorGeometry geometry = RotorGeometry::hexacopter();
  double prior_kinematic_var = 1e-6;
  double prior_param_rel_std = 0.5;
  double yaw_weight = 1.0;            // w_psi (m/rad) in the nearest metric
  int max_connected_vertices = 40;    // all-pairs interconnection cap
  double min_segment_time = 0.25;     // open/closed threshold on remaining budget (s)
  bool pruning = true;
  QueueDiscipline queue = QueueDiscipline::LowestCost;
  std::size_t max_beliefs = 400000;   // memory guard on accepted beliefs
  double checkpoint_interval = 0.5;   // statistics trace spacing (s of runtime)
  double rotor_margin = 0.3;          // min squared rotor speed over hover value along an edge

  void validate() const;
  Covariance prior() const { return default_prior(theta_plan, prior_kinematic_var, prior_param_rel_std); }
};

struct Vertex {
  int id = 0;
  FlatState flat;
  std::vector<int> open_beliefs;
  std::vector<int> closed_beliefs;
  std::vector<int> out_edges;  // append-only
};

struct Edge {
  int id = 0;
  int from = 0;
  int to = 0;
  Segment4D segment;
  std::shared_ptr<const EdgePropagator> propagator;  // null when propagation is disabled
  double cost = 0.0;
};

struct BeliefNode {
  int id = 0;
  std::unique_ptr<Covariance> sigma;  // released once the belief can no longer be extended
  Mat6 sigma_theta = Mat6::Zero();
  double cost = 0.0;
  double dopt_full = 0.0;
  double dopt_theta = 0.0;
  int parent = -1;
  int vertex = 0;
  int edge = -1;
  bool open = true;
  bool alive = true;        // false once dominated and removed from its vertex
  std::size_t next_edge = 0;  // outgoing edges of the vertex already traversed
  bool queued = false;
};

/// Belief dominance with cost tolerance 1e-9 s and relative tolerance 1e-9.
bool dominates(const BeliefNode& a, const BeliefNode& b);

struct Checkpoint {
  double runtime = 0.0;
  int iteration = 0;
  std::size_t beliefs = 0;        // accepted beliefs
  std::size_t alive_beliefs = 0;
  std::size_t vertices = 0;
  double incumbent = 0.0;         // best d_opt(Sigma_Theta), +inf before the first belief
};

struct TrajectoryStep {
  double cost = 0.0;
  double dopt_theta = 0.0;
  int belief = -1;
  int vertex = -1;
};

struct Trajectory {
  std::vector<Segment4D> segments;
  std::vector<TrajectoryStep> trace;  // root first
  double cost = 0.0;
  std::optional<Mat6> sigma_theta;    // predicted, when beliefs were propagated

  double duration() const;
};

/// Flat state at time t of the concatenated trajectory (clamped to the end).
FlatState evaluate(const Trajectory& traj, double t);

struct PlanStats {
  int iterations = 0;
  std::size_t vertices = 0;
  std::size_t edges = 0;
  std::size_t beliefs = 0;
  std::size_t alive_beliefs = 0;
  std::size_t pruned = 0;
  std::size_t rejected = 0;
  std::size_t failed_propagations = 0;
  std::size_t fallback_edges = 0;
  double runtime = 0.0;
  std::vector<Checkpoint> checkpoints;
};

struct PlanResult {
  Trajectory trajectory;
  PlanStats stats;
};

/// Target of a connection: a raw sample (position + yaw, free end derivatives)
/// or a fully specified flat state.
struct RawSample {
  Vec3 position;
  double yaw = 0.0;
};

struct Connection {
  Segment4D segment;
  FlatState end;  // locked end state
  std::shared_ptr<const EdgePropagator> propagator;
};

/// Uniform position in the box and yaw in (-pi, pi].
RawSample sample_state(const Vec3& box_min, const Vec3& box_max, std::mt19937_64& rng);

/// Weighted position/yaw distance used by nearest().
double flat_distance(const FlatState& a, const Vec3& position, double yaw, double yaw_weight);

/// Lowest-distance vertex, ties to the lowest id. Throws when empty.
const Vertex& nearest(const std::vector<Vertex>& vertices, const RawSample& sample, double yaw_weight);

/// Samples a duration, solves, checks feasibility and builds the propagator.
/// Returns nullopt when any step fails. propagate_beliefs = false skips the
/// transfer but still verifies that every sample point is recoverable.
std::optional<Connection> connect(const FlatState& from, const RawSample& target, double budget_left,
                                  const PlannerConfig& cfg, std::mt19937_64& rng, bool propagate_beliefs = true);
std::optional<Connection> connect(const FlatState& from, const FlatState& target, double budget_left,
                                  const PlannerConfig& cfg, std::mt19937_64& rng, bool propagate_beliefs = true);

/// The motion graph together with its beliefs.
class BeliefGraph {
 public:
  BeliefGraph(PlannerConfig cfg, const FlatState& initial, bool propagate_beliefs = true);

  const PlannerConfig& config() const { return cfg_; }
  const std::vector<Vertex>& vertices() const { return vertices_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<BeliefNode>& beliefs() const { return beliefs_; }
  const PlanStats& stats() const { return stats_; }

  int add_vertex(const FlatState& flat);
  int add_edge(int from, int to, Connection connection);

  /// Propagates belief b along edge e; nullopt when the budget is exceeded
  /// or propagation fails numerically.
  std::optional<BeliefNode> propagate(const Edge& e, const BeliefNode& b);

  /// Inserts a belief at its resident vertex with dominance pruning. Returns
  /// false when an existing belief dominates it.
  bool append_belief(BeliefNode b);

  /// Pushes the open beliefs of a vertex into the search queue.
  void enqueue_open(int vertex);
  /// Drains the queue; stops early when should_stop() returns true.
  void drain(const std::function<bool()>& should_stop);
  bool saturated() const { return saturated_; }

  /// Lowest d_opt(Sigma_Theta) among live non-root beliefs, ties by cost then id.
  std::optional<int> best_belief() const;
  Trajectory extract(int belief) const;
  Trajectory get_d_optimal_path() const;

  double min_open_cost(int vertex) const;
  double incumbent() const { return incumbent_; }
  std::size_t accepted() const { return beliefs_.size(); }

  /// Graph dump: vertices, edges (segment JSON + cost) and beliefs.
  nlohmann::json to_json() const;

  PlanStats& mutable_stats() { return stats_; }

 private:
  void release_if_final(BeliefNode& b);
  bool pop(int& out);

  PlannerConfig cfg_;
  bool propagate_beliefs_;
  std::vector<Vertex> vertices_;
  std::vector<Edge> edges_;
  std::vector<BeliefNode> beliefs_;
  std::vector<int> fifo_;
  std::size_t fifo_head_ = 0;
  std::vector<std::pair<double, int>> heap_;
  double incumbent_;
  bool saturated_ = false;
  PlanStats stats_;
};

struct PlanOutcome {
  std::optional<Trajectory> trajectory;  // empty when no belief beyond the root exists
  PlanStats stats;
  std::optional<nlohmann::json> graph;   // BeliefGraph::to_json when requested
};

/// Full planner loop without the final error on an empty result.
PlanOutcome plan_search(const PlannerConfig& cfg, const FlatState& initial, bool dump_graph = false);

/// Full planner loop. Throws PlanningError when no belief beyond the root
/// was found.
PlanResult plan(const PlannerConfig& cfg, const FlatState& initial);
PlanResult plan(const PlannerConfig& cfg);  // hover at the box centre

/// Same graph construction without covariance propagation; picks the
/// budget-respecting path with the most distinct segments (ties: lower cost).
Trajectory random_baseline_plan(const PlannerConfig& cfg, const FlatState& initial);
Trajectory random_baseline_plan(const PlannerConfig& cfg);

/// Sequential belief propagation along a trajectory (e.g. a baseline) with
/// the planner model. Returns the final covariance.
Covariance evaluate_trajectory(const Trajectory& traj, const PlannerConfig& cfg);

nlohmann::json trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const nlohmann::json& j);

FlatState initial_hover(const PlannerConfig& cfg);

}  // namespace mavcal
