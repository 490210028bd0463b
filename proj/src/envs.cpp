#include "ikp/envs.hpp"

#include <cmath>

namespace ikp::env {

const char* task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::kCartSweep: return "cart-sweep";
    case TaskKind::kJointFlip: return "joint-flip";
    case TaskKind::kMiscalInsert: return "miscal-insert";
  }
  return "?";
}

TaskKind task_from_name(const std::string& name) {
  for (TaskKind k : {TaskKind::kCartSweep, TaskKind::kJointFlip, TaskKind::kMiscalInsert})
    if (name == task_name(k)) return k;
  throw ConfigError("unknown task '" + name + "'");
}

namespace {

// Elbow-up sector for the Cartesian tasks, symmetric wide limits for the
// whole-arm flip task.
kin::KinematicChain sweep_chain() {
  kin::KinematicChain c = kin::KinematicChain::planar({0.5, 0.5});
  c.joint_min << -2.6, 0.3;
  c.joint_max << 1.8, 2.9;
  return c;
}

kin::KinematicChain flip_chain() {
  return kin::KinematicChain::planar({0.5, 0.5}, -2.6, 2.6);
}

Vector2d toward(const Vector2d& from, const Vector2d& to, double step) {
  const Vector2d d = to - from;
  const double dist = d.norm();
  if (dist < 1e-12) return from;
  return from + d * (std::min(step, dist) / dist);
}

namespace sweep_plan {

// Towing freezes the tool-particle offset at first contact, so the oracle
// always makes contact along the push axis: sidestep (W) when the straight
// path would bump the particle, line up behind it (B), close in (A), then
// tow straight to the goal. Waypoints stay inside the reachable annulus so
// commanded paths are exactly piecewise linear.
struct Frame {
  Vector2d p, g, d, perp;
  double r;
};

Frame frame(const Task& task, const EnvState& s) {
  Frame f;
  f.p = s.particle;
  f.g = s.goal;
  f.d = f.g - f.p;
  f.d /= f.d.norm();
  f.perp = Vector2d(-f.d.y(), f.d.x());
  f.r = task.contact_radius;
  return f;
}

double seg_dist(const Vector2d& a, const Vector2d& b, const Vector2d& x) {
  const Vector2d d = b - a;
  const double t =
      clamp(d.squaredNorm() > 0 ? (x - a).dot(d) / d.squaredNorm() : 0.0, 0.0, 1.0);
  return (a + t * d - x).norm();
}

Vector2d waypoint_w(const Task& task, const Frame& f, const Vector2d& ee) {
  const double side = (ee - f.p).dot(f.perp) >= 0.0 ? 1.0 : -1.0;
  return kin::clamp_to_annulus(task.chain, f.p + 2.5 * f.r * side * f.perp, 0.015);
}

Vector2d waypoint_b(const Task& task, const Frame& f) {
  return kin::clamp_to_annulus(task.chain, f.p - 2.0 * f.r * f.d, 0.015);
}

// strictly inside the contact radius so towing engages without FP knife edges
Vector2d waypoint_a(const Task& task, const Frame& f) {
  return kin::clamp_to_annulus(task.chain, f.p - 0.9 * f.r * f.d, 0.015);
}

// true when the straight path from ee to B would come too close to the
// particle (early contact would freeze a sideways towing offset)
bool needs_sidestep(const Frame& f, const Vector2d& ee) {
  if ((ee - f.p).dot(f.d) > 1e-9) return true;  // on the goal side
  return seg_dist(ee, f.p - 2.0 * f.r * f.d, f.p) < 1.25 * f.r;
}

bool lined_up(const Frame& f, const Vector2d& ee) {
  const Vector2d rel = ee - f.p;
  const double gap = rel.norm();
  // loose cone: closing in on A re-aligns by itself, and a tight cone can
  // limit-cycle against the joint speed clamp near the workspace rim
  return gap <= 2.3 * f.r && rel.dot(-f.d) / gap >= 0.995;
}

}  // namespace sweep_plan

// Advances `dist` along [from -> vs[0] -> vs[1] -> ...]; stops at the end.
// The per-vertex damping shrinks the leftover budget after a corner: heavy
// damping hugs real corners, light damping keeps the push phase moving.
Vector2d walk_polyline(const Vector2d& from, const std::vector<Vector2d>& vs,
                       const std::vector<double>& damps, double dist) {
  Vector2d cur = from;
  for (size_t k = 0; k < vs.size(); ++k) {
    const double seg = (vs[k] - cur).norm();
    if (seg < 1e-12) continue;
    if (dist <= seg) return cur + (vs[k] - cur) * (dist / seg);
    dist = damps[k] * (dist - seg);
    cur = vs[k];
  }
  return cur;
}

// Pursuit along the remaining waypoints keeps the action continuous in the
// state; switching targets only on arrival makes pairs of near-identical
// observations with conflicting actions, which no smooth policy can fit.
// Re-aiming at the anchor every step also stabilizes the push laterally.
Vector2d sweep_oracle_target(const Task& task, const EnvState& s, const Vector2d& ee) {
  using namespace sweep_plan;
  const Frame f = frame(task, s);
  std::vector<Vector2d> vs;
  std::vector<double> damps;
  if (!lined_up(f, ee)) {
    if (needs_sidestep(f, ee)) {
      vs.push_back(waypoint_w(task, f, ee));
      damps.push_back(0.15);
    }
    vs.push_back(waypoint_b(task, f));
    damps.push_back(0.15);
  }
  const Vector2d a = waypoint_a(task, f);
  vs.push_back(a);
  damps.push_back(0.4);
  vs.push_back(kin::clamp_to_annulus(task.chain, a + f.d * (f.g - f.p).norm(), 0.015));
  damps.push_back(1.0);
  return walk_polyline(ee, vs, damps, task.ee_step);
}

}  // namespace

std::vector<Vector2d> sweep_oracle_waypoints(const Task& task, const EnvState& s0) {
  using namespace sweep_plan;
  const Frame f = frame(task, s0);
  Vector2d ee = kin::ee_position(task.chain, s0.q_true);
  std::vector<Vector2d> pts{ee};
  if (!lined_up(f, ee)) {
    if (needs_sidestep(f, ee)) {
      ee = waypoint_w(task, f, ee);
      pts.push_back(ee);
    }
    pts.push_back(waypoint_b(task, f));
  }
  pts.push_back(waypoint_a(task, f));
  pts.push_back(kin::clamp_to_annulus(
      task.chain, waypoint_a(task, f) + f.d * (f.g - f.p).norm(), 0.015));
  return pts;
}

Task Task::make(TaskKind kind) {
  Task t;
  t.kind = kind;
  switch (kind) {
    case TaskKind::kCartSweep:
      // box margins leave room for the behind-the-particle waypoints inside
      // the reachable annulus at every edge
      t.chain = sweep_chain();
      t.episode_len = 80;
      t.box_lo = {0.34, -0.26};
      t.box_hi = {0.70, 0.40};
      break;
    case TaskKind::kJointFlip:
      t.chain = flip_chain();
      t.episode_len = 60;
      t.box_lo = {-1.0, -1.0};
      t.box_hi = {1.0, 1.0};
      break;
    case TaskKind::kMiscalInsert:
      t.chain = sweep_chain();
      t.episode_len = 100;
      t.box_lo = {0.32, -0.25};
      t.box_hi = {0.75, 0.45};
      break;
  }
  return t;
}

Task Task::make(TaskKind kind, const VectorXd& offsets) {
  Task t = make(kind);
  t.chain = inject_miscalibration(t.chain, offsets);
  return t;
}

ebm::ActionBounds Task::cart_action_box() const {
  if (kind == TaskKind::kJointFlip) return ebm::ActionBounds::box(box_lo, box_hi);
  // wide enough for the expert's behind-the-object waypoints
  const double m = kind == TaskKind::kCartSweep ? 2.5 * contact_radius + ee_step : 0.06;
  const Vector2d margin(m, m);
  return ebm::ActionBounds::box(box_lo - margin, box_hi + margin);
}

int obs_dim(TaskKind kind) {
  switch (kind) {
    case TaskKind::kCartSweep: return 6;
    case TaskKind::kJointFlip: return 4;
    case TaskKind::kMiscalInsert: return 11;
  }
  return 0;
}

Observation observe(const Task& task, const EnvState& state) {
  const VectorXd reported = state.q_true + task.chain.true_encoder_offsets;
  Observation obs;
  obs.features.resize(obs_dim(task.kind));
  obs.features[0] = reported[0] / kPi;
  obs.features[1] = reported[1] / kPi;
  switch (task.kind) {
    case TaskKind::kCartSweep:
      obs.features[2] = state.particle.x();
      obs.features[3] = state.particle.y();
      obs.features[4] = state.goal.x();
      obs.features[5] = state.goal.y();
      break;
    case TaskKind::kJointFlip:
      obs.features[2] = state.lever / kPi;
      obs.features[3] = state.lever_goal / kPi;
      break;
    case TaskKind::kMiscalInsert:
      obs.features[2] = state.block.x();
      obs.features[3] = state.block.y();
      obs.features[4] = std::cos(state.block_heading);
      obs.features[5] = std::sin(state.block_heading);
      obs.features[6] = state.carried ? 1.0 : 0.0;
      obs.features[7] = state.fixture.x();
      obs.features[8] = state.fixture.y();
      obs.features[9] = std::cos(state.fixture_heading);
      obs.features[10] = std::sin(state.fixture_heading);
      break;
  }
  return obs;
}

namespace {

Vector2d draw_in_box(const Task& task, Rng& rng) {
  return {rng.uniform(task.box_lo.x(), task.box_hi.x()),
          rng.uniform(task.box_lo.y(), task.box_hi.y())};
}

VectorXd joints_at(const Task& task, const Vector2d& ee) {
  return kin::analytic_ik_planar2(task.chain, kin::clamp_to_annulus(task.chain, ee),
                                  kin::ElbowBranch::kUp);
}

}  // namespace

std::pair<EnvState, Observation> reset(const Task& task, uint64_t seed) {
  Rng rng = Rng(seed).child(0x7e5e7);
  EnvState s;
  s.q_true = VectorXd::Zero(2);
  switch (task.kind) {
    case TaskKind::kCartSweep: {
      s.particle = draw_in_box(task, rng);
      s.goal = draw_in_box(task, rng);
      while ((s.goal - s.particle).norm() < task.min_separation) s.goal = draw_in_box(task, rng);
      Vector2d ee0 = draw_in_box(task, rng);
      while ((ee0 - s.particle).norm() < 2.0 * task.contact_radius) ee0 = draw_in_box(task, rng);
      s.q_true = joints_at(task, ee0);
      break;
    }
    case TaskKind::kJointFlip: {
      s.lever = rng.uniform(-0.8, 0.4);
      s.lever_goal = s.lever + task.lever_travel;
      const double q1 = s.lever - rng.uniform(0.5, 1.3);
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double q2 = sign * rng.uniform(0.45, 1.1);
      s.q_true << q1, q2;
      break;
    }
    case TaskKind::kMiscalInsert: {
      s.block = draw_in_box(task, rng);
      s.block_heading = rng.uniform(-kPi, kPi);
      const Vector2d flo(0.35, -0.20), fhi(0.72, 0.42);
      auto draw_fixture = [&] {
        return Vector2d(rng.uniform(flo.x(), fhi.x()), rng.uniform(flo.y(), fhi.y()));
      };
      s.fixture = draw_fixture();
      while ((s.fixture - s.block).norm() < 0.20) s.fixture = draw_fixture();
      s.fixture_heading = rng.uniform(-0.5, 0.5);
      Vector2d ee0 = draw_in_box(task, rng);
      while ((ee0 - s.block).norm() < 2.0 * task.grasp_radius) ee0 = draw_in_box(task, rng);
      s.q_true = joints_at(task, ee0);
      break;
    }
  }
  return {s, observe(task, s)};
}

Observation step(const Task& task, EnvState& state, const VectorXd& commanded) {
  if (commanded.size() != 2) throw ConfigError("step: command dimension mismatch");
  const VectorXd q_old = state.q_true;
  const Vector2d ee_old = kin::ee_position(task.chain, q_old);
  const double heading_old = kin::ee_pose(task.chain, q_old).heading;

  // servo: encoder reading (true + offsets) chases the command
  for (int j = 0; j < 2; ++j) {
    const double cmd = clamp(commanded[j], task.chain.joint_min[j], task.chain.joint_max[j]);
    const double target = cmd - task.chain.true_encoder_offsets[j];
    state.q_true[j] += clamp(target - state.q_true[j], -task.vmax, task.vmax);
  }

  const Vector2d ee_new = kin::ee_position(task.chain, state.q_true);
  switch (task.kind) {
    case TaskKind::kCartSweep:
      // quasi-static push: the particle yields to keep the tool clearance
      if ((ee_new - state.particle).norm() < task.contact_radius) {
        Vector2d dir = state.particle - ee_new;
        if (dir.norm() < 1e-12) dir = ee_new - ee_old;
        if (dir.norm() < 1e-12) dir = Vector2d(1.0, 0.0);
        state.particle = ee_new + dir * (task.contact_radius / dir.norm());
      }
      break;
    case TaskKind::kJointFlip:
      if (std::abs(wrap_angle(q_old[0] - state.lever)) <= task.band)
        state.lever += state.q_true[0] - q_old[0];
      break;
    case TaskKind::kMiscalInsert: {
      if (state.snapped) break;
      if (state.carried) {
        const double heading_new = kin::ee_pose(task.chain, state.q_true).heading;
        state.block += ee_new - ee_old;
        state.block_heading = wrap_angle(state.block_heading + heading_new - heading_old);
        if ((state.block - state.fixture).norm() <= task.snap_radius) {
          state.block = state.fixture;
          state.block_heading = state.fixture_heading;
          state.carried = false;
          state.snapped = true;
        }
      } else if ((ee_new - state.block).norm() <= task.grasp_radius) {
        state.carried = true;
        state.block = ee_new;  // gripper centers the block
      }
      break;
    }
  }
  state.step += 1;
  return observe(task, state);
}

VectorXd oracle_action(const Task& task, const EnvState& state) {
  const VectorXd& offsets = task.chain.true_encoder_offsets;
  const Vector2d ee = kin::ee_position(task.chain, state.q_true);
  VectorXd cmd(2);

  switch (task.kind) {
    case TaskKind::kCartSweep: {
      if ((state.particle - state.goal).norm() <= 0.5 * task.success_radius) {
        cmd = state.q_true + offsets;  // parked
        break;
      }
      cmd = joints_at(task, sweep_oracle_target(task, state, ee)) + offsets;
      break;
    }
    case TaskKind::kJointFlip: {
      const double q1 = std::min(state.q_true[0] + 0.8 * task.vmax, state.lever_goal + 0.18);
      cmd << q1 + offsets[0], state.q_true[1] + offsets[1];
      break;
    }
    case TaskKind::kMiscalInsert: {
      if (state.snapped) {
        cmd = state.q_true + offsets;
        break;
      }
      const Vector2d dest = state.carried ? state.fixture : state.block;
      cmd = joints_at(task, toward(ee, dest, task.ee_step)) + offsets;
      break;
    }
    default:
      throw ConfigError("oracle_action: unknown task");
  }
  for (int j = 0; j < 2; ++j)
    cmd[j] = clamp(cmd[j], task.chain.joint_min[j], task.chain.joint_max[j]);
  return cmd;
}

bool success(const Task& task, const EnvState& state) {
  switch (task.kind) {
    case TaskKind::kCartSweep:
      return (state.particle - state.goal).norm() <= task.success_radius;
    case TaskKind::kJointFlip:
      return state.lever >= state.lever_goal;
    case TaskKind::kMiscalInsert:
      return (state.block - state.fixture).norm() <= task.success_pos &&
             std::abs(wrap_angle(state.block_heading - state.fixture_heading)) <=
                 task.success_ang;
  }
  return false;
}

kin::KinematicChain inject_miscalibration(const kin::KinematicChain& chain,
                                          const VectorXd& offsets) {
  if (offsets.size() != chain.dof())
    throw ConfigError("inject_miscalibration: offset count does not match chain");
  for (int i = 0; i < offsets.size(); ++i)
    if (std::abs(offsets[i]) >= kin::kMaxEncoderOffset)
      throw ConfigError("inject_miscalibration: offsets must stay below 2 degrees");
  kin::KinematicChain out = chain;
  out.true_encoder_offsets = offsets;
  out.validate();
  return out;
}

VectorXd draw_offsets(int m, Rng& rng) {
  VectorXd offsets(m);
  const double lo = deg2rad(0.2), hi = deg2rad(2.0);
  for (int i = 0; i < m; ++i) {
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    offsets[i] = sign * rng.uniform(lo, hi);
  }
  return offsets;
}

}  // namespace ikp::env
