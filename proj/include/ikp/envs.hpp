#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "ikp/ebm.hpp"
#include "ikp/kinematics.hpp"
#include "ikp/rng.hpp"

namespace ikp::env {

using Eigen::Vector2d;
using Eigen::VectorXd;

// Deterministic, quasi-static planar tasks on a 2-link arm at 10 Hz control.
// Actions are desired joint targets; the low-level servo drives the encoder
// reading toward the command at a per-joint speed limit. With encoder offsets
// injected, the reading is true + offsets, so the true configuration settles
// at command - offsets.
enum class TaskKind { kCartSweep, kJointFlip, kMiscalInsert };

const char* task_name(TaskKind kind);
TaskKind task_from_name(const std::string& name);

struct Task {
  TaskKind kind;
  kin::KinematicChain chain;
  int episode_len = 0;
  double vmax = 0.15;     // rad per step
  double ee_step = 0.05;  // oracle EE advance per step, meters

  // cart-sweep: shepherd a particle to a goal
  Vector2d box_lo, box_hi;        // object / EE workspace box
  double contact_radius = 0.07;   // tool keep-out radius; pushing happens here
  double success_radius = 0.02;
  double min_separation = 0.15;

  // joint-flip: crank a lever hinged at the base with the elbow
  double band = 0.12;
  double lever_travel = 1.3;

  // miscal-insert: pick a block, snap it into a fixture
  double grasp_radius = 0.02;
  double snap_radius = 0.015;
  double success_pos = 0.005;
  double success_ang = 0.0872664625997164789;  // 5 degrees

  // Cartesian action box for the implicit-cartesian baseline.
  ebm::ActionBounds cart_action_box() const;

  static Task make(TaskKind kind);
  static Task make(TaskKind kind, const VectorXd& offsets);
};

struct EnvState {
  VectorXd q_true;  // offset-free joints
  int step = 0;
  // cart-sweep
  Vector2d particle{0, 0}, goal{0, 0};
  // joint-flip
  double lever = 0.0, lever_goal = 0.0;
  // miscal-insert
  Vector2d block{0, 0}, fixture{0, 0};
  double block_heading = 0.0, fixture_heading = 0.0;
  bool carried = false, snapped = false;
};

struct Observation {
  VectorXd features;
};

int obs_dim(TaskKind kind);

// Samples the initial configuration; deterministic per seed.
std::pair<EnvState, Observation> reset(const Task& task, uint64_t seed);

// Advances one control step. Commands are clamped to joint limits; motion is
// clamped per joint to vmax. Returns the next observation.
Observation step(const Task& task, EnvState& state, const VectorXd& commanded);

Observation observe(const Task& task, const EnvState& state);

// Privileged scripted expert: plans in true space and compensates for the
// injected encoder offsets.
VectorXd oracle_action(const Task& task, const EnvState& state);

bool success(const Task& task, const EnvState& state);

// Returns a copy of the chain with true_encoder_offsets set; throws
// ConfigError when any offset reaches 2 degrees.
kin::KinematicChain inject_miscalibration(const kin::KinematicChain& chain,
                                          const VectorXd& offsets);

// Per-joint offsets uniform over +-[0.2 deg, 2 deg] (sign random).
VectorXd draw_offsets(int m, Rng& rng);

// The sweep oracle's planned EE polyline from a reset state (used by tests
// to check the executed trace against the plan).
std::vector<Eigen::Vector2d> sweep_oracle_waypoints(const Task& task, const EnvState& s0);

}  // namespace ikp::env
