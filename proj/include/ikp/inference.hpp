#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ikp/checkpoint.hpp"
#include "ikp/ebm.hpp"
#include "ikp/kernels.hpp"
#include "ikp/kinematics.hpp"
#include "ikp/net.hpp"
#include "ikp/optim.hpp"

namespace ikp::infer {

using ebm::ActionBounds;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Joint angles are fed to the nets scaled by 1/pi; Cartesian features are raw
// meters. The layout is fixed per checkpoint.
inline constexpr double kJointScale = 1.0 / kPi;

struct SamplerConfig {
  int n_samples = 1024;
  int n_iters = 3;
  double shrink = 0.5;
  double temperature = 1.0;
  void validate() const;
};

// Scores a batch of candidate actions (columns) in one call.
using BatchEnergyFn = std::function<void(const MatrixXd& candidates, VectorXd& out)>;

// Iterated derivative-free argmin: uniform init, then softmax(-E/T) resampling
// with Gaussian jitter of std shrink^iter * width/2, clipped to bounds.
// Returns the lowest-energy sample seen (ties: lowest index, earliest round).
VectorXd argmin_free(const BatchEnergyFn& energy, const ActionBounds& bounds,
                     const SamplerConfig& cfg, Rng& rng);

// ----- policy variants -----

enum class Variant {
  kImplicitJoints,
  kImplicitCartesian,
  kIkp,
  kIkpResidual,
  kExplicitJoints,
  kExplicitFk,
};

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);
bool variant_autoregressive(Variant v);
bool variant_implicit(Variant v);
bool variant_uses_cartesian_features(Variant v);
bool variant_has_residual(Variant v);

// One trained policy: shared observation encoder plus either m per-dimension
// energy heads (autoregressive variants), one full-space energy head
// (implicit-cartesian), or one regression head (explicit variants).
struct PolicyModel {
  Variant variant = Variant::kIkp;
  kin::KinematicChain chain;
  int obs_dim = 0;
  int hidden = 24;
  int enc_blocks = 2;
  int head_blocks = 4;
  ActionBounds bounds;  // joint bounds, or the Cartesian box for icart
  SamplerConfig sampler;

  ad::ParamStore params;
  ad::DenseResNet encoder;
  std::vector<ad::DenseResNet> heads;
  std::optional<kin::ResidualOffsets> residual;

  int dof() const { return chain.dof(); }
  int action_dim() const { return static_cast<int>(bounds.lo.size()); }
  bool uses_cartesian() const { return variant_uses_cartesian_features(variant); }
  int head_input_dim(int dim_index) const;

  static PolicyModel build(Variant variant, const kin::KinematicChain& chain,
                           int obs_dim, int hidden, int enc_blocks, int head_blocks,
                           const ActionBounds& bounds, const SamplerConfig& sampler,
                           kin::ResidualMode residual_mode, uint64_t init_seed,
                           bool zero_init = false);
};

// Scores n candidate values for joint dimension `dim` given the encoded
// observation and the frozen prefix (joints in radians, prefix pose features).
// Exposed so tests can drive argmin_free with the exact same energies.
void score_dim_candidates(const PolicyModel& model, const VectorXd& latent,
                          const VectorXd& joints_prefix, const VectorXd& prefix_pose_features,
                          const kin::PlanarPrefix& fk_prefix, int dim,
                          const VectorXd& candidates, VectorXd& out);

// Per-dimension argmin with FK threaded through candidate scoring (Fig-style
// autoregression). Each frozen dimension's pose is computed from the
// residual-adjusted joints, so joint and Cartesian inputs stay consistent by
// construction.
VectorXd autoregressive_infer(const PolicyModel& model, const VectorXd& obs,
                              const SamplerConfig& cfg, Rng& rng);

// Full-space inference for the Cartesian variant: returns the argmin action
// in the model's Cartesian box.
VectorXd fullspace_infer(const PolicyModel& model, const VectorXd& obs,
                         const SamplerConfig& cfg, Rng& rng);

// ----- training steps -----

struct TrainBatch {
  // columns: one sample per column
  const MatrixXd* obs = nullptr;
  const MatrixXd* actions = nullptr;
  int size() const { return obs ? static_cast<int>(obs->cols()) : 0; }
};

// Teacher-forced InfoNCE over all dimensions; negatives resample the n-th
// coordinate uniformly. Returns the mean loss over the batch and accumulates
// parameter gradients (already scaled by 1/batch). Deterministic for any
// thread count: per-item gradients merge in index order.
double autoregressive_train_step(const PolicyModel& model, const TrainBatch& batch,
                                 int n_neg, Rng& rng, ad::GradStore& grads,
                                 bool parallel = true);

// Full-space InfoNCE for implicit-cartesian: positives are FK(expert joints)
// end-effector positions, negatives uniform in the box.
double fullspace_train_step(const PolicyModel& model, const TrainBatch& batch,
                            int n_neg, Rng& rng, ad::GradStore& grads,
                            bool parallel = true);

// Mean-squared joint error; with fk_lambda > 0 adds fk_lambda times the mean
// squared link-position error, backpropagated through FK.
double explicit_train_step(const PolicyModel& model, const TrainBatch& batch,
                           double fk_lambda, ad::GradStore& grads,
                           bool parallel = true);

// ----- checkpoint round-trip -----

ad::Checkpoint policy_to_checkpoint(const PolicyModel& model);
PolicyModel policy_from_checkpoint(const ad::Checkpoint& cp);

}  // namespace ikp::infer
