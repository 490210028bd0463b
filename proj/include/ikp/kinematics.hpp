#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "ikp/common.hpp"
#include "ikp/tape.hpp"

namespace ikp::kin {

using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;
using Eigen::VectorXd;

// Maximum simulated encoder bias: 2 degrees.
inline constexpr double kMaxEncoderOffset = 0.03490658503988659;

enum class JointType { kPlanarRevolute, kSpatialRevolute };

struct Link {
  double length = 0.0;
  JointType type = JointType::kPlanarRevolute;
  Vector3d axis{0.0, 0.0, 1.0};  // spatial joints only
};

struct PlanarPose {
  double x = 0.0, y = 0.0, heading = 0.0;
};

struct SpatialPose {
  Vector3d p = Vector3d::Zero();
  Matrix3d R = Matrix3d::Identity();
};

// Serial chain: per-link transform = rotate about the joint axis, then
// translate `length` along the rotated local x axis. Bimanual setups are two
// independent chains; there is no branching.
struct KinematicChain {
  std::vector<Link> links;
  PlanarPose base;                 // planar chains only
  VectorXd joint_min, joint_max;   // per-joint limits, radians
  VectorXd true_encoder_offsets;   // simulation-only ground truth, radians

  int dof() const { return static_cast<int>(links.size()); }
  bool planar() const;
  void validate() const;  // throws ConfigError on invariant violations

  static KinematicChain planar(const std::vector<double>& lengths,
                               double limit_lo = -kPi, double limit_hi = kPi);
};

struct LinkPoseSet {
  bool is_planar = true;
  std::vector<PlanarPose> planar;
  std::vector<SpatialPose> spatial;
  int count() const {
    return static_cast<int>(is_planar ? planar.size() : spatial.size());
  }
};

// Feature width per link: planar (x, y, cos h, sin h) = 4; spatial
// (x, y, z, flattened basis) = 12.
int pose_feature_dim(bool is_planar);

LinkPoseSet forward_kinematics(const KinematicChain& chain, const VectorXd& joints);
PlanarPose ee_pose(const KinematicChain& chain, const VectorXd& joints);
Vector2d ee_position(const KinematicChain& chain, const VectorXd& joints);

// Concatenates poses 0..upto into a flat vector with the fixed layout above.
VectorXd link_pose_features(const LinkPoseSet& poses, int upto);

// Incremental planar FK for per-candidate scoring: cumulative state through
// link n-1, advanced by one adjusted joint at a time.
struct PlanarPrefix {
  double theta, x, y;
  static PlanarPrefix from_base(const KinematicChain& chain) {
    return {chain.base.heading, chain.base.x, chain.base.y};
  }
  PlanarPrefix advanced(double length, double joint_adj) const {
    const double t = theta + joint_adj;
    return {t, x + length * std::cos(t), y + length * std::sin(t)};
  }
  PlanarPose pose() const { return {x, y, theta}; }
};

// ----- learnable residual joint offsets (Delta) -----

enum class ResidualMode { kConstant, kAffine };

// Constant mode: one learnable offset per joint. Affine mode: causal
// Delta_j = <row_j, q_0..j> + bias_j so it composes with per-dimension
// autoregression.
struct ResidualOffsets {
  ResidualMode mode = ResidualMode::kConstant;
  int m = 0;
  int delta_id = -1;            // constant mode: length-m array
  std::vector<int> row_ids;     // affine mode: per-joint rows, length j+1
  int bias_id = -1;             // affine mode: length-m array

  static ResidualOffsets create(ad::ParamStore& params, ResidualMode mode, int m,
                                const std::string& prefix);
  VectorXd delta(const ad::ParamStore& params, const VectorXd& joints) const;
  // Adjusted joint nodes q_j + Delta_j(q) from raw joint scalar nodes.
  std::vector<ad::NodeId> apply_graph(ad::Tape& tape,
                                      const std::vector<ad::NodeId>& joints) const;
};

// joints + Delta(joints); identity when residual parameters are zero.
VectorXd apply_residual(const VectorXd& joints, const ResidualOffsets& residual,
                        const ad::ParamStore& params);

// ----- analytic planar 2-link IK -----

enum class ElbowBranch { kUp, kDown };

// Throws UnreachableError when the target is outside the annulus; callers
// clamp to the workspace first if needed.
VectorXd analytic_ik_planar2(const KinematicChain& chain, const Vector2d& target,
                             ElbowBranch branch);
Vector2d clamp_to_annulus(const KinematicChain& chain, const Vector2d& target,
                          double margin = 1e-6);

// ----- graph FK (participates in the autodiff tape) -----

// Incremental planar FK on the tape. Copy the struct to branch per-candidate
// poses off a shared prefix.
struct PlanarFkGraph {
  ad::NodeId theta, x, y;  // cumulative through the links added so far
  static PlanarFkGraph from_base(ad::Tape& tape, const KinematicChain& chain);
  // Advances by one link and returns that link's (x, y, cos h, sin h) node.
  ad::NodeId advance(ad::Tape& tape, double length, ad::NodeId joint_adj);
};

// Returns per-link pose feature nodes, each of width pose_feature_dim().
std::vector<ad::NodeId> fk_feature_nodes(ad::Tape& tape, const KinematicChain& chain,
                                         const std::vector<ad::NodeId>& joint_nodes);

// ----- chain description file (`ikp-chain v1`) -----

std::string chain_to_text(const KinematicChain& chain);
KinematicChain chain_from_text(const std::string& text);
void save_chain(const std::string& path, const KinematicChain& chain);
KinematicChain load_chain(const std::string& path);

}  // namespace ikp::kin
