#include "ikp/kinematics.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ikp::kin {

bool KinematicChain::planar() const {
  for (const Link& l : links)
    if (l.type != JointType::kPlanarRevolute) return false;
  return true;
}

void KinematicChain::validate() const {
  const int m = dof();
  if (m < 1) throw ConfigError("chain: need at least one link");
  for (const Link& l : links) {
    if (!(l.length > 0.0)) throw ConfigError("chain: link lengths must be positive");
    if (l.type == JointType::kSpatialRevolute && l.axis.norm() < 1e-12)
      throw ConfigError("chain: spatial joint axis must be nonzero");
  }
  if (joint_min.size() != m || joint_max.size() != m)
    throw ConfigError("chain: joint limits must have one entry per joint");
  for (int i = 0; i < m; ++i)
    if (!(joint_min[i] < joint_max[i]))
      throw ConfigError("chain: joint_min must be below joint_max");
  if (true_encoder_offsets.size() != m)
    throw ConfigError("chain: true_encoder_offsets must have one entry per joint");
  for (int i = 0; i < m; ++i)
    if (std::abs(true_encoder_offsets[i]) > kMaxEncoderOffset + 1e-12)
      throw ConfigError("chain: encoder offsets must stay below 2 degrees");
}

KinematicChain KinematicChain::planar(const std::vector<double>& lengths,
                                      double limit_lo, double limit_hi) {
  KinematicChain c;
  for (double l : lengths) c.links.push_back(Link{l, JointType::kPlanarRevolute, {0, 0, 1}});
  const int m = static_cast<int>(lengths.size());
  c.joint_min = VectorXd::Constant(m, limit_lo);
  c.joint_max = VectorXd::Constant(m, limit_hi);
  c.true_encoder_offsets = VectorXd::Zero(m);
  c.validate();
  return c;
}

int pose_feature_dim(bool is_planar) { return is_planar ? 4 : 12; }

namespace {
Matrix3d axis_angle(const Vector3d& axis_raw, double q) {
  const Vector3d axis = axis_raw.normalized();
  Matrix3d K;
  K << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  return Matrix3d::Identity() + std::sin(q) * K + (1.0 - std::cos(q)) * (K * K);
}
}  // namespace

LinkPoseSet forward_kinematics(const KinematicChain& chain, const VectorXd& joints) {
  if (joints.size() != chain.dof())
    throw ConfigError("forward_kinematics: joint count does not match chain");
  LinkPoseSet out;
  out.is_planar = chain.planar();
  if (out.is_planar) {
    PlanarPrefix p = PlanarPrefix::from_base(chain);
    out.planar.reserve(chain.dof());
    for (int i = 0; i < chain.dof(); ++i) {
      p = p.advanced(chain.links[i].length, joints[i]);
      out.planar.push_back(p.pose());
    }
  } else {
    SpatialPose t;  // identity base for spatial chains
    out.spatial.reserve(chain.dof());
    for (int i = 0; i < chain.dof(); ++i) {
      t.R = t.R * axis_angle(chain.links[i].axis, joints[i]);
      t.p = t.p + t.R * Vector3d(chain.links[i].length, 0.0, 0.0);
      out.spatial.push_back(t);
    }
  }
  return out;
}

PlanarPose ee_pose(const KinematicChain& chain, const VectorXd& joints) {
  LinkPoseSet ps = forward_kinematics(chain, joints);
  if (!ps.is_planar) throw ConfigError("ee_pose: planar chains only");
  return ps.planar.back();
}

Vector2d ee_position(const KinematicChain& chain, const VectorXd& joints) {
  const PlanarPose p = ee_pose(chain, joints);
  return {p.x, p.y};
}

VectorXd link_pose_features(const LinkPoseSet& poses, int upto) {
  if (upto < 0 || upto >= poses.count())
    throw ConfigError("link_pose_features: index out of range");
  const int d = pose_feature_dim(poses.is_planar);
  VectorXd f(d * (upto + 1));
  for (int i = 0; i <= upto; ++i) {
    if (poses.is_planar) {
      const PlanarPose& p = poses.planar[i];
      f[4 * i + 0] = p.x;
      f[4 * i + 1] = p.y;
      f[4 * i + 2] = std::cos(p.heading);
      f[4 * i + 3] = std::sin(p.heading);
    } else {
      const SpatialPose& p = poses.spatial[i];
      f.segment<3>(12 * i) = p.p;
      // column-major flattened basis
      for (int c = 0; c < 3; ++c)
        f.segment<3>(12 * i + 3 + 3 * c) = p.R.col(c);
    }
  }
  return f;
}

// ---------------- residual offsets ----------------

ResidualOffsets ResidualOffsets::create(ad::ParamStore& params, ResidualMode mode,
                                        int m, const std::string& prefix) {
  if (m < 1) throw ConfigError("ResidualOffsets: need m >= 1");
  ResidualOffsets r;
  r.mode = mode;
  r.m = m;
  if (mode == ResidualMode::kConstant) {
    r.delta_id = params.add(prefix + ".delta", m);
  } else {
    for (int j = 0; j < m; ++j)
      r.row_ids.push_back(params.add(prefix + ".row" + std::to_string(j), j + 1));
    r.bias_id = params.add(prefix + ".bias", m);
  }
  return r;
}

VectorXd ResidualOffsets::delta(const ad::ParamStore& params, const VectorXd& joints) const {
  if (joints.size() != m) throw ConfigError("residual: joint dimension mismatch");
  VectorXd d(m);
  if (mode == ResidualMode::kConstant) {
    d = params.vec(delta_id);
  } else {
    const auto bias = params.vec(bias_id);
    for (int j = 0; j < m; ++j) {
      const auto row = params.vec(row_ids[j]);
      d[j] = bias[j] + row.dot(joints.head(j + 1));
    }
  }
  return d;
}

std::vector<ad::NodeId> ResidualOffsets::apply_graph(
    ad::Tape& tape, const std::vector<ad::NodeId>& joints) const {
  if (static_cast<int>(joints.size()) != m)
    throw ConfigError("residual: joint dimension mismatch");
  std::vector<ad::NodeId> out(joints.size());
  if (mode == ResidualMode::kConstant) {
    const ad::NodeId delta = tape.param(delta_id);
    for (int j = 0; j < m; ++j) out[j] = tape.add(joints[j], tape.slice(delta, j, 1));
  } else {
    const ad::NodeId bias = tape.param(bias_id);
    for (int j = 0; j < m; ++j) {
      const ad::NodeId row = tape.param(row_ids[j]);
      std::vector<ad::NodeId> prefix(joints.begin(), joints.begin() + j + 1);
      const ad::NodeId q = j == 0 ? joints[0] : tape.concat(prefix);
      const ad::NodeId d = tape.add(tape.dot(row, q), tape.slice(bias, j, 1));
      out[j] = tape.add(joints[j], d);
    }
  }
  return out;
}

VectorXd apply_residual(const VectorXd& joints, const ResidualOffsets& residual,
                        const ad::ParamStore& params) {
  return joints + residual.delta(params, joints);
}

// ---------------- analytic planar IK ----------------

VectorXd analytic_ik_planar2(const KinematicChain& chain, const Vector2d& target,
                             ElbowBranch branch) {
  if (chain.dof() != 2 || !chain.planar())
    throw ConfigError("analytic_ik_planar2: chain must be a 2-link planar arm");
  const double l1 = chain.links[0].length, l2 = chain.links[1].length;
  // work in the base frame
  const double ch = std::cos(chain.base.heading), sh = std::sin(chain.base.heading);
  const double dx = target.x() - chain.base.x, dy = target.y() - chain.base.y;
  const double tx = ch * dx + sh * dy, ty = -sh * dx + ch * dy;
  const double r2 = tx * tx + ty * ty;
  const double r = std::sqrt(r2);
  const double eps = 1e-9;
  if (r > l1 + l2 + eps || r < std::abs(l1 - l2) - eps)
    throw UnreachableError("analytic_ik_planar2: target outside reachable annulus");
  double c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
  c2 = clamp(c2, -1.0, 1.0);
  const double q2mag = std::acos(c2);
  const double q2 = branch == ElbowBranch::kUp ? q2mag : -q2mag;
  const double q1 = std::atan2(ty, tx) - std::atan2(l2 * std::sin(q2), l1 + l2 * std::cos(q2));
  VectorXd q(2);
  q << wrap_angle(q1), q2;
  return q;
}

Vector2d clamp_to_annulus(const KinematicChain& chain, const Vector2d& target,
                          double margin) {
  const double l1 = chain.links[0].length, l2 = chain.links[1].length;
  const Vector2d base(chain.base.x, chain.base.y);
  Vector2d d = target - base;
  double r = d.norm();
  const double lo = std::abs(l1 - l2) + margin, hi = l1 + l2 - margin;
  if (r < 1e-12) return base + Vector2d(lo, 0.0);
  if (r > hi) return base + d * (hi / r);
  if (r < lo) return base + d * (lo / r);
  return target;
}

// ---------------- graph FK ----------------

namespace {

// Spatial rotation entries are c0 + c1*sin(q) + c2*cos(q) with constants from
// the axis (Rodrigues form R = I + sin q K + (1 - cos q) K^2).
struct RotCoeffs {
  Matrix3d c0, c1, c2;
};

RotCoeffs rot_coeffs(const Vector3d& axis_raw) {
  const Vector3d axis = axis_raw.normalized();
  Matrix3d K;
  K << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  RotCoeffs rc;
  rc.c0 = Matrix3d::Identity() + K * K;
  rc.c1 = K;
  rc.c2 = -(K * K);
  return rc;
}

}  // namespace

PlanarFkGraph PlanarFkGraph::from_base(ad::Tape& tape, const KinematicChain& chain) {
  PlanarFkGraph g;
  g.theta = tape.scalar_input(chain.base.heading);
  g.x = tape.scalar_input(chain.base.x);
  g.y = tape.scalar_input(chain.base.y);
  return g;
}

ad::NodeId PlanarFkGraph::advance(ad::Tape& tape, double length, ad::NodeId joint_adj) {
  theta = tape.add(theta, joint_adj);
  const ad::NodeId c = tape.cos(theta);
  const ad::NodeId s = tape.sin(theta);
  x = tape.add(x, tape.scale(c, length));
  y = tape.add(y, tape.scale(s, length));
  return tape.concat({x, y, c, s});
}

std::vector<ad::NodeId> fk_feature_nodes(ad::Tape& tape, const KinematicChain& chain,
                                         const std::vector<ad::NodeId>& joint_nodes) {
  if (static_cast<int>(joint_nodes.size()) != chain.dof())
    throw ConfigError("fk_feature_nodes: joint count does not match chain");
  std::vector<ad::NodeId> features;
  features.reserve(chain.dof());

  if (chain.planar()) {
    PlanarFkGraph g = PlanarFkGraph::from_base(tape, chain);
    for (int i = 0; i < chain.dof(); ++i)
      features.push_back(g.advance(tape, chain.links[i].length, joint_nodes[i]));
    return features;
  }

  // spatial chain: carry R (9 scalar nodes, column-major) and p (3 nodes)
  std::array<ad::NodeId, 9> R;
  std::array<ad::NodeId, 3> p;
  const ad::NodeId one = tape.scalar_input(1.0);
  const ad::NodeId zero = tape.scalar_input(0.0);
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 3; ++r) R[3 * c + r] = (r == c) ? one : zero;
  for (int r = 0; r < 3; ++r) p[r] = zero;

  for (int i = 0; i < chain.dof(); ++i) {
    const RotCoeffs rc = rot_coeffs(chain.links[i].axis);
    const ad::NodeId s = tape.sin(joint_nodes[i]);
    const ad::NodeId c = tape.cos(joint_nodes[i]);
    // local rotation entries
    std::array<ad::NodeId, 9> L;
    for (int col = 0; col < 3; ++col) {
      for (int row = 0; row < 3; ++row) {
        ad::NodeId e = tape.scalar_input(rc.c0(row, col));
        if (rc.c1(row, col) != 0.0) e = tape.add(e, tape.scale(s, rc.c1(row, col)));
        if (rc.c2(row, col) != 0.0) e = tape.add(e, tape.scale(c, rc.c2(row, col)));
        L[3 * col + row] = e;
      }
    }
    // R = R * L
    std::array<ad::NodeId, 9> Rn;
    for (int col = 0; col < 3; ++col) {
      for (int row = 0; row < 3; ++row) {
        ad::NodeId acc = tape.mul(R[0 * 3 + row], L[3 * col + 0]);
        acc = tape.add(acc, tape.mul(R[1 * 3 + row], L[3 * col + 1]));
        acc = tape.add(acc, tape.mul(R[2 * 3 + row], L[3 * col + 2]));
        Rn[3 * col + row] = acc;
      }
    }
    R = Rn;
    // p = p + R * (length, 0, 0)
    for (int row = 0; row < 3; ++row)
      p[row] = tape.add(p[row], tape.scale(R[0 + row], chain.links[i].length));
    std::vector<ad::NodeId> parts = {p[0], p[1], p[2]};
    for (int k = 0; k < 9; ++k) parts.push_back(R[k]);
    features.push_back(tape.concat(parts));
  }
  return features;
}

// ---------------- chain file ----------------

namespace {
constexpr const char* kChainHeader = "ikp-chain v1";

void write_double(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}
}  // namespace

std::string chain_to_text(const KinematicChain& chain) {
  std::ostringstream out;
  out << kChainHeader << "\n";
  for (const Link& l : chain.links) {
    out << "link ";
    write_double(out, l.length);
    if (l.type == JointType::kPlanarRevolute) {
      out << " planar\n";
    } else {
      out << " spatial ";
      write_double(out, l.axis.x());
      out << " ";
      write_double(out, l.axis.y());
      out << " ";
      write_double(out, l.axis.z());
      out << "\n";
    }
  }
  out << "base ";
  write_double(out, chain.base.x);
  out << " ";
  write_double(out, chain.base.y);
  out << " ";
  write_double(out, chain.base.heading);
  out << "\n";
  for (int i = 0; i < chain.dof(); ++i) {
    out << "limit " << i << " ";
    write_double(out, chain.joint_min[i]);
    out << " ";
    write_double(out, chain.joint_max[i]);
    out << "\n";
  }
  bool any = false;
  for (int i = 0; i < chain.dof(); ++i) any = any || chain.true_encoder_offsets[i] != 0.0;
  if (any) {
    out << "offsets";
    for (int i = 0; i < chain.dof(); ++i) {
      out << " ";
      write_double(out, chain.true_encoder_offsets[i]);
    }
    out << "\n";
  }
  out << "end\n";
  return out.str();
}

KinematicChain chain_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kChainHeader)
    throw ConfigError("chain: bad header");
  KinematicChain chain;
  std::vector<std::pair<double, double>> limits;
  std::vector<double> offsets;
  bool have_offsets = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "end") break;
    if (tag == "link") {
      Link l;
      std::string kind;
      ls >> l.length >> kind;
      if (kind == "planar") {
        l.type = JointType::kPlanarRevolute;
      } else if (kind == "spatial") {
        l.type = JointType::kSpatialRevolute;
        ls >> l.axis.x() >> l.axis.y() >> l.axis.z();
      } else {
        throw ConfigError("chain: unknown joint kind '" + kind + "'");
      }
      if (!ls && kind == "spatial") throw ConfigError("chain: bad link line '" + line + "'");
      chain.links.push_back(l);
    } else if (tag == "base") {
      ls >> chain.base.x >> chain.base.y >> chain.base.heading;
    } else if (tag == "limit") {
      int idx;
      double lo, hi;
      ls >> idx >> lo >> hi;
      if (!ls) throw ConfigError("chain: bad limit line '" + line + "'");
      if (idx != static_cast<int>(limits.size()))
        throw ConfigError("chain: limits must be listed in joint order");
      limits.emplace_back(lo, hi);
    } else if (tag == "offsets") {
      double v;
      while (ls >> v) offsets.push_back(v);
      have_offsets = true;
    } else {
      throw ConfigError("chain: unknown line '" + line + "'");
    }
  }
  const int m = chain.dof();
  if (static_cast<int>(limits.size()) != m)
    throw ConfigError("chain: need one limit line per joint");
  chain.joint_min.resize(m);
  chain.joint_max.resize(m);
  for (int i = 0; i < m; ++i) {
    chain.joint_min[i] = limits[i].first;
    chain.joint_max[i] = limits[i].second;
  }
  chain.true_encoder_offsets = VectorXd::Zero(m);
  if (have_offsets) {
    if (static_cast<int>(offsets.size()) != m)
      throw ConfigError("chain: offsets must have one entry per joint");
    for (int i = 0; i < m; ++i) chain.true_encoder_offsets[i] = offsets[i];
  }
  chain.validate();
  return chain;
}

void save_chain(const std::string& path, const KinematicChain& chain) {
  std::ofstream out(path);
  if (!out) throw ConfigError("chain: cannot open '" + path + "' for writing");
  out << chain_to_text(chain);
}

KinematicChain load_chain(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("chain: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return chain_from_text(ss.str());
}

}  // namespace ikp::kin
