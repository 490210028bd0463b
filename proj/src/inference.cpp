#include "ikp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ikp::infer {

void SamplerConfig::validate() const {
  if (n_samples < 2) throw ConfigError("sampler: n_samples must be >= 2");
  if (n_iters < 1) throw ConfigError("sampler: n_iters must be >= 1");
  if (!(shrink > 0.0 && shrink < 1.0)) throw ConfigError("sampler: shrink must be in (0,1)");
  if (!(temperature > 0.0)) throw ConfigError("sampler: temperature must be > 0");
}

VectorXd argmin_free(const BatchEnergyFn& energy, const ActionBounds& bounds,
                     const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  bounds.validate();
  const int d = bounds.dim();
  const int n = cfg.n_samples;

  MatrixXd samples = ebm::sample_negatives(bounds, n, rng);
  MatrixXd next(d, n);
  VectorXd e(n), w(n);
  double best_e = std::numeric_limits<double>::infinity();
  VectorXd best_a = bounds.mid();

  for (int iter = 1; iter <= cfg.n_iters; ++iter) {
    energy(samples, e);
    if (e.size() != n) throw ConfigError("argmin_free: energy batch size mismatch");
    for (int i = 0; i < n; ++i) {
      if (!std::isfinite(e[i])) throw InferenceError("argmin_free: non-finite energy");
      if (e[i] < best_e) {
        best_e = e[i];
        best_a = samples.col(i);
      }
    }
    if (iter == cfg.n_iters) break;

    ebm::softmax_neg_energy(e, cfg.temperature, w);
    for (int i = 1; i < n; ++i) w[i] += w[i - 1];  // cumulative
    const double stdscale = std::pow(cfg.shrink, iter) * 0.5;
    for (int j = 0; j < n; ++j) {
      const double u = rng.uniform() * w[n - 1];
      const double* begin = w.data();
      int idx = static_cast<int>(std::lower_bound(begin, begin + n, u) - begin);
      if (idx >= n) idx = n - 1;
      for (int k = 0; k < d; ++k) {
        const double width = bounds.hi[k] - bounds.lo[k];
        const double v = samples(k, idx) + rng.normal() * stdscale * width;
        next(k, j) = clamp(v, bounds.lo[k], bounds.hi[k]);
      }
    }
    samples.swap(next);
  }
  return best_a;
}

// ---------------- variants ----------------

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kImplicitJoints: return "implicit-joints";
    case Variant::kImplicitCartesian: return "implicit-cartesian";
    case Variant::kIkp: return "ikp";
    case Variant::kIkpResidual: return "ikp-residual";
    case Variant::kExplicitJoints: return "explicit-joints";
    case Variant::kExplicitFk: return "explicit-fk";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  for (Variant v : {Variant::kImplicitJoints, Variant::kImplicitCartesian, Variant::kIkp,
                    Variant::kIkpResidual, Variant::kExplicitJoints, Variant::kExplicitFk})
    if (name == variant_name(v)) return v;
  throw ConfigError("unknown variant '" + name + "'");
}

bool variant_autoregressive(Variant v) {
  return v == Variant::kImplicitJoints || v == Variant::kIkp || v == Variant::kIkpResidual;
}

bool variant_implicit(Variant v) {
  return variant_autoregressive(v) || v == Variant::kImplicitCartesian;
}

bool variant_uses_cartesian_features(Variant v) {
  return v == Variant::kIkp || v == Variant::kIkpResidual;
}

bool variant_has_residual(Variant v) { return v == Variant::kIkpResidual; }

// ---------------- model ----------------

int PolicyModel::head_input_dim(int dim_index) const {
  if (variant_autoregressive(variant)) {
    const int joints = dim_index + 1;
    const int poses = uses_cartesian() ? 4 * (dim_index + 1) : 0;
    return hidden + joints + poses;
  }
  if (variant == Variant::kImplicitCartesian) return hidden + action_dim();
  return hidden;  // explicit head consumes the latent only
}

PolicyModel PolicyModel::build(Variant variant, const kin::KinematicChain& chain,
                               int obs_dim, int hidden, int enc_blocks, int head_blocks,
                               const ActionBounds& bounds, const SamplerConfig& sampler,
                               kin::ResidualMode residual_mode, uint64_t init_seed,
                               bool zero_init) {
  chain.validate();
  bounds.validate();
  sampler.validate();
  if (obs_dim < 1) throw ConfigError("policy: obs_dim must be >= 1");
  const int m = chain.dof();

  PolicyModel model;
  model.variant = variant;
  model.chain = chain;
  model.obs_dim = obs_dim;
  model.hidden = hidden;
  model.enc_blocks = enc_blocks;
  model.head_blocks = head_blocks;
  model.bounds = bounds;
  model.sampler = sampler;

  if (variant_autoregressive(variant) || variant == Variant::kExplicitJoints ||
      variant == Variant::kExplicitFk) {
    if (bounds.dim() != m) throw ConfigError("policy: bounds must match chain dof");
  }
  if (variant == Variant::kImplicitCartesian) {
    if (bounds.dim() != 2) throw ConfigError("policy: implicit-cartesian needs a 2-D box");
    if (m != 2 || !chain.planar())
      throw ConfigError("policy: implicit-cartesian execution needs a planar 2-link arm");
  }
  if ((variant_uses_cartesian_features(variant) || variant == Variant::kExplicitFk) &&
      !chain.planar())
    throw ConfigError("policy: Cartesian feature variants need a planar chain");

  model.encoder =
      ad::DenseResNet::create(model.params, "enc", obs_dim, hidden, enc_blocks, hidden);
  if (variant_autoregressive(variant)) {
    for (int j = 0; j < m; ++j)
      model.heads.push_back(ad::DenseResNet::create(model.params, "head" + std::to_string(j),
                                                    model.head_input_dim(j), hidden,
                                                    head_blocks, 1));
  } else if (variant == Variant::kImplicitCartesian) {
    model.heads.push_back(ad::DenseResNet::create(model.params, "head0",
                                                  model.head_input_dim(0), hidden,
                                                  head_blocks, 1));
  } else {
    model.heads.push_back(ad::DenseResNet::create(model.params, "head0",
                                                  model.head_input_dim(0), hidden,
                                                  head_blocks, m));
  }
  if (variant_has_residual(variant))
    model.residual = kin::ResidualOffsets::create(model.params, residual_mode, m, "residual");

  if (!zero_init) {
    Rng rng(init_seed);
    model.encoder.init(model.params, rng);
    for (const auto& h : model.heads) h.init(model.params, rng);
    // residual offsets start at zero
  }
  return model;
}

namespace {

// Delta_dim for a candidate given the frozen prefix (constant mode ignores
// the joints entirely).
double residual_delta_dim(const ad::ParamStore& params, const kin::ResidualOffsets& r,
                          const VectorXd& joints_prefix, double cand, int dim) {
  if (r.mode == kin::ResidualMode::kConstant) return params.vec(r.delta_id)[dim];
  const auto row = params.vec(r.row_ids[dim]);
  double acc = params.vec(r.bias_id)[dim] + row[dim] * cand;
  for (int i = 0; i < dim; ++i) acc += row[i] * joints_prefix[i];
  return acc;
}

}  // namespace

void score_dim_candidates(const PolicyModel& model, const VectorXd& latent,
                          const VectorXd& joints_prefix, const VectorXd& prefix_pose_features,
                          const kin::PlanarPrefix& fk_prefix, int dim,
                          const VectorXd& candidates, VectorXd& out) {
  if (!variant_autoregressive(model.variant))
    throw ConfigError("score_dim_candidates: not an autoregressive model");
  const int m = model.dof();
  if (dim < 0 || dim >= m) throw ConfigError("score_dim_candidates: bad dimension");
  if (latent.size() != model.hidden || joints_prefix.size() != dim)
    throw ConfigError("score_dim_candidates: layout mismatch");
  const bool cart = model.uses_cartesian();
  if (cart && prefix_pose_features.size() != 4 * dim)
    throw ConfigError("score_dim_candidates: layout mismatch");

  const int in_dim = model.head_input_dim(dim);
  const int n = static_cast<int>(candidates.size());
  VectorXd base(in_dim);
  base.head(model.hidden) = latent;
  for (int i = 0; i < dim; ++i) base[model.hidden + i] = joints_prefix[i] * kJointScale;
  base[model.hidden + dim] = 0.0;  // candidate slot
  if (cart) {
    base.segment(model.hidden + dim + 1, 4 * dim) = prefix_pose_features;
  }

  const double length = model.chain.links[dim].length;
  MatrixXd X(in_dim, n);
  for (int j = 0; j < n; ++j) {
    X.col(j) = base;
    const double c = candidates[j];
    X(model.hidden + dim, j) = c * kJointScale;
    if (cart) {
      const double delta =
          model.residual
              ? residual_delta_dim(model.params, *model.residual, joints_prefix, c, dim)
              : 0.0;
      const double t = fk_prefix.theta + c + delta;
      const double ct = std::cos(t), st = std::sin(t);
      const int off = model.hidden + dim + 1 + 4 * dim;
      X(off + 0, j) = fk_prefix.x + length * ct;
      X(off + 1, j) = fk_prefix.y + length * st;
      X(off + 2, j) = ct;
      X(off + 3, j) = st;
    }
  }
  kernels::eval_energies(model.heads[dim], model.params, X, out);
}

VectorXd autoregressive_infer(const PolicyModel& model, const VectorXd& obs,
                              const SamplerConfig& cfg, Rng& rng) {
  if (!variant_autoregressive(model.variant))
    throw ConfigError("autoregressive_infer: wrong variant");
  if (obs.size() != model.obs_dim)
    throw ConfigError("autoregressive_infer: observation layout mismatch");
  const int m = model.dof();
  const VectorXd latent = model.encoder.eval(model.params, obs);

  VectorXd q(m);
  VectorXd pose_feats(4 * m);
  kin::PlanarPrefix fk = kin::PlanarPrefix::from_base(model.chain);

  for (int dim = 0; dim < m; ++dim) {
    const VectorXd prefix = q.head(dim);
    const VectorXd pf = pose_feats.head(4 * dim);
    const kin::PlanarPrefix fk_now = fk;
    BatchEnergyFn fn = [&, dim](const MatrixXd& cands, VectorXd& out) {
      score_dim_candidates(model, latent, prefix, pf, fk_now, dim,
                           cands.row(0).transpose(), out);
    };
    const VectorXd a = argmin_free(fn, model.bounds.slice(dim), cfg, rng);
    q[dim] = a[0];
    const double delta =
        model.residual ? residual_delta_dim(model.params, *model.residual, prefix, q[dim], dim)
                       : 0.0;
    fk = fk.advanced(model.chain.links[dim].length, q[dim] + delta);
    pose_feats[4 * dim + 0] = fk.x;
    pose_feats[4 * dim + 1] = fk.y;
    pose_feats[4 * dim + 2] = std::cos(fk.theta);
    pose_feats[4 * dim + 3] = std::sin(fk.theta);
  }
  return q;
}

VectorXd fullspace_infer(const PolicyModel& model, const VectorXd& obs,
                         const SamplerConfig& cfg, Rng& rng) {
  if (model.variant != Variant::kImplicitCartesian)
    throw ConfigError("fullspace_infer: wrong variant");
  if (obs.size() != model.obs_dim)
    throw ConfigError("fullspace_infer: observation layout mismatch");
  const VectorXd latent = model.encoder.eval(model.params, obs);
  const int d = model.action_dim();
  BatchEnergyFn fn = [&](const MatrixXd& cands, VectorXd& out) {
    const int n = static_cast<int>(cands.cols());
    MatrixXd X(model.hidden + d, n);
    for (int j = 0; j < n; ++j) {
      X.col(j).head(model.hidden) = latent;
      X.col(j).tail(d) = cands.col(j);
    }
    kernels::eval_energies(model.heads[0], model.params, X, out);
  };
  return argmin_free(fn, model.bounds, cfg, rng);
}

// ---------------- training steps ----------------

namespace {

void check_batch(const PolicyModel& model, const TrainBatch& batch) {
  if (!batch.obs || !batch.actions || batch.size() < 1)
    throw ConfigError("train_step: empty batch");
  if (batch.obs->rows() != model.obs_dim)
    throw ConfigError("train_step: observation layout mismatch");
  if (batch.actions->rows() != model.action_dim() &&
      !(model.variant == Variant::kImplicitCartesian && batch.actions->rows() == model.dof()))
    throw ConfigError("train_step: action dimension mismatch");
  if (batch.actions->cols() != batch.obs->cols())
    throw ConfigError("train_step: obs/action count mismatch");
}

double merge_item_grads(const std::vector<ad::GradStore>& item_grads,
                        const std::vector<double>& losses, ad::GradStore& grads) {
  const int b = static_cast<int>(losses.size());
  const double inv = 1.0 / static_cast<double>(b);
  double loss = 0.0;
  for (int i = 0; i < b; ++i) {
    grads.add_scaled(item_grads[i], inv);
    loss += losses[i];
  }
  loss *= inv;
  if (!std::isfinite(loss)) throw TrainingError("train_step: non-finite loss");
  return loss;
}

// Residual-adjusted candidate node for dimension `dim` with a frozen raw
// joint prefix.
ad::NodeId residual_adj_node(ad::Tape& tape, const kin::ResidualOffsets& r,
                             const std::vector<ad::NodeId>& q_raw, ad::NodeId cand,
                             int dim, ad::NodeId delta_param, ad::NodeId bias_param) {
  if (r.mode == kin::ResidualMode::kConstant)
    return tape.add(cand, tape.slice(delta_param, dim, 1));
  const ad::NodeId row = tape.param(r.row_ids[dim]);
  std::vector<ad::NodeId> parts(q_raw.begin(), q_raw.begin() + dim);
  parts.push_back(cand);
  const ad::NodeId joints = parts.size() == 1 ? parts[0] : tape.concat(parts);
  const ad::NodeId d = tape.add(tape.dot(row, joints), tape.slice(bias_param, dim, 1));
  return tape.add(cand, d);
}

}  // namespace

double autoregressive_train_step(const PolicyModel& model, const TrainBatch& batch,
                                 int n_neg, Rng& rng, ad::GradStore& grads,
                                 bool parallel) {
  if (!variant_autoregressive(model.variant))
    throw ConfigError("autoregressive_train_step: wrong variant");
  if (n_neg < 1) throw ConfigError("autoregressive_train_step: need n_neg >= 1");
  check_batch(model, batch);
  const int b = batch.size();
  const int m = model.dof();
  const bool cart = model.uses_cartesian();

  std::vector<ad::GradStore> item_grads(b, ad::GradStore(model.params));
  std::vector<double> losses(static_cast<size_t>(b), 0.0);

  kernels::parallel_for(b, parallel, [&](int i) {
    Rng item_rng = rng.child(static_cast<uint64_t>(i));
    thread_local ad::Tape tape;  // arena capacity persists across items
    tape.reset(&model.params);
    const ad::NodeId latent = model.encoder.forward(tape, tape.input(batch.obs->col(i)));

    std::vector<ad::NodeId> q_raw(m), q_scaled(m);
    for (int j = 0; j < m; ++j) {
      q_raw[j] = tape.scalar_input((*batch.actions)(j, i));
      q_scaled[j] = tape.scale(q_raw[j], kJointScale);
    }

    ad::NodeId delta_param = -1, bias_param = -1;
    if (model.residual) {
      if (model.residual->mode == kin::ResidualMode::kConstant)
        delta_param = tape.param(model.residual->delta_id);
      else
        bias_param = tape.param(model.residual->bias_id);
    }

    // expert poses through residual + FK; keep the prefix state before each
    // link so candidate poses can branch off it
    std::vector<ad::NodeId> pf(m);
    std::vector<kin::PlanarFkGraph> fk_before(m);
    if (cart) {
      std::vector<ad::NodeId> q_adj =
          model.residual ? model.residual->apply_graph(tape, q_raw) : q_raw;
      kin::PlanarFkGraph fk = kin::PlanarFkGraph::from_base(tape, model.chain);
      for (int j = 0; j < m; ++j) {
        fk_before[j] = fk;
        pf[j] = fk.advance(tape, model.chain.links[j].length, q_adj[j]);
      }
    }

    ad::NodeId total = -1;
    std::vector<ad::NodeId> energies(static_cast<size_t>(n_neg) + 1);
    std::vector<ad::NodeId> parts;
    for (int dim = 0; dim < m; ++dim) {
      parts.clear();
      parts.push_back(latent);
      for (int j = 0; j <= dim; ++j) parts.push_back(q_scaled[j]);
      if (cart)
        for (int j = 0; j <= dim; ++j) parts.push_back(pf[j]);
      energies[0] = model.heads[dim].forward(tape, tape.concat(parts));

      for (int k = 0; k < n_neg; ++k) {
        const double c = item_rng.uniform(model.bounds.lo[dim], model.bounds.hi[dim]);
        const ad::NodeId c_raw = tape.scalar_input(c);
        parts.clear();
        parts.push_back(latent);
        for (int j = 0; j < dim; ++j) parts.push_back(q_scaled[j]);
        parts.push_back(tape.scale(c_raw, kJointScale));
        if (cart) {
          for (int j = 0; j < dim; ++j) parts.push_back(pf[j]);
          const ad::NodeId c_adj =
              model.residual ? residual_adj_node(tape, *model.residual, q_raw, c_raw, dim,
                                                 delta_param, bias_param)
                             : c_raw;
          kin::PlanarFkGraph fkc = fk_before[dim];
          parts.push_back(fkc.advance(tape, model.chain.links[dim].length, c_adj));
        }
        energies[static_cast<size_t>(k) + 1] = model.heads[dim].forward(tape, tape.concat(parts));
      }
      const ad::NodeId loss_dim = tape.infonce(tape.concat(energies));
      total = total < 0 ? loss_dim : tape.add(total, loss_dim);
    }

    tape.backward(total);
    tape.export_param_grads(item_grads[i]);
    losses[i] = tape.value_scalar(total);
  });

  return merge_item_grads(item_grads, losses, grads);
}

double fullspace_train_step(const PolicyModel& model, const TrainBatch& batch,
                            int n_neg, Rng& rng, ad::GradStore& grads, bool parallel) {
  if (model.variant != Variant::kImplicitCartesian)
    throw ConfigError("fullspace_train_step: wrong variant");
  if (n_neg < 1) throw ConfigError("fullspace_train_step: need n_neg >= 1");
  check_batch(model, batch);
  const int b = batch.size();
  const int d = model.action_dim();

  std::vector<ad::GradStore> item_grads(b, ad::GradStore(model.params));
  std::vector<double> losses(static_cast<size_t>(b), 0.0);

  kernels::parallel_for(b, parallel, [&](int i) {
    Rng item_rng = rng.child(static_cast<uint64_t>(i));
    thread_local ad::Tape tape;
    tape.reset(&model.params);
    const ad::NodeId latent = model.encoder.forward(tape, tape.input(batch.obs->col(i)));

    // positives: end-effector position of the expert joint action
    const Eigen::Vector2d pos = kin::ee_position(model.chain, batch.actions->col(i));
    VectorXd pos_v(d);
    pos_v << pos.x(), pos.y();

    std::vector<ad::NodeId> energies(static_cast<size_t>(n_neg) + 1);
    energies[0] = model.heads[0].forward(tape, tape.concat({latent, tape.input(pos_v)}));
    VectorXd cand(d);
    for (int k = 0; k < n_neg; ++k) {
      for (int j = 0; j < d; ++j)
        cand[j] = item_rng.uniform(model.bounds.lo[j], model.bounds.hi[j]);
      energies[static_cast<size_t>(k) + 1] =
          model.heads[0].forward(tape, tape.concat({latent, tape.input(cand)}));
    }
    const ad::NodeId loss = tape.infonce(tape.concat(energies));
    tape.backward(loss);
    tape.export_param_grads(item_grads[i]);
    losses[i] = tape.value_scalar(loss);
  });

  return merge_item_grads(item_grads, losses, grads);
}

double explicit_train_step(const PolicyModel& model, const TrainBatch& batch,
                           double fk_lambda, ad::GradStore& grads, bool parallel) {
  if (model.variant != Variant::kExplicitJoints && model.variant != Variant::kExplicitFk)
    throw ConfigError("explicit_train_step: wrong variant");
  if (model.variant == Variant::kExplicitJoints) fk_lambda = 0.0;
  check_batch(model, batch);
  const int b = batch.size();
  const int m = model.dof();

  std::vector<ad::GradStore> item_grads(b, ad::GradStore(model.params));
  std::vector<double> losses(static_cast<size_t>(b), 0.0);

  kernels::parallel_for(b, parallel, [&](int i) {
    thread_local ad::Tape tape;
    tape.reset(&model.params);
    const ad::NodeId latent = model.encoder.forward(tape, tape.input(batch.obs->col(i)));
    const ad::NodeId pred = model.heads[0].forward(tape, latent);
    const ad::NodeId diff = tape.sub(pred, tape.input(batch.actions->col(i)));
    ad::NodeId total = tape.scale(tape.dot(diff, diff), 1.0 / m);

    if (fk_lambda > 0.0) {
      std::vector<ad::NodeId> joints(m);
      for (int j = 0; j < m; ++j) joints[j] = tape.slice(pred, j, 1);
      const auto pf = kin::fk_feature_nodes(tape, model.chain, joints);
      const kin::LinkPoseSet target = kin::forward_kinematics(model.chain, batch.actions->col(i));
      ad::NodeId acc = -1;
      for (int j = 0; j < m; ++j) {
        VectorXd txy(2);
        txy << target.planar[j].x, target.planar[j].y;
        const ad::NodeId dxy = tape.sub(tape.slice(pf[j], 0, 2), tape.input(txy));
        const ad::NodeId sq = tape.dot(dxy, dxy);
        acc = acc < 0 ? sq : tape.add(acc, sq);
      }
      total = tape.add(total, tape.scale(acc, fk_lambda / m));
    }

    tape.backward(total);
    tape.export_param_grads(item_grads[i]);
    losses[i] = tape.value_scalar(total);
  });

  return merge_item_grads(item_grads, losses, grads);
}

// ---------------- checkpoint ----------------

namespace {

std::string doubles_to_text(const VectorXd& v) {
  std::string out;
  char buf[40];
  for (int i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
    if (i) out += " ";
    out += buf;
  }
  return out;
}

VectorXd doubles_from_text(const std::string& text) {
  std::vector<double> vals;
  std::istringstream in(text);
  double v;
  while (in >> v) vals.push_back(v);
  return Eigen::Map<const VectorXd>(vals.data(), static_cast<int>(vals.size()));
}

std::string pack_lines(const std::string& text) {
  std::string out = text;
  std::replace(out.begin(), out.end(), '\n', '|');
  return out;
}

std::string unpack_lines(const std::string& text) {
  std::string out = text;
  std::replace(out.begin(), out.end(), '|', '\n');
  return out;
}

}  // namespace

ad::Checkpoint policy_to_checkpoint(const PolicyModel& model) {
  ad::Checkpoint cp;
  cp.set_meta("variant", variant_name(model.variant));
  cp.set_meta("obs_dim", std::to_string(model.obs_dim));
  cp.set_meta("hidden", std::to_string(model.hidden));
  cp.set_meta("enc_blocks", std::to_string(model.enc_blocks));
  cp.set_meta("head_blocks", std::to_string(model.head_blocks));
  cp.set_meta("bounds_lo", doubles_to_text(model.bounds.lo));
  cp.set_meta("bounds_hi", doubles_to_text(model.bounds.hi));
  cp.set_meta("sampler", std::to_string(model.sampler.n_samples) + " " +
                             std::to_string(model.sampler.n_iters) + " " +
                             doubles_to_text(Eigen::Vector2d(model.sampler.shrink,
                                                             model.sampler.temperature)));
  cp.set_meta("residual_mode",
              !model.residual ? "none"
                              : (model.residual->mode == kin::ResidualMode::kConstant
                                     ? "constant"
                                     : "affine"));
  cp.set_meta("chain", pack_lines(kin::chain_to_text(model.chain)));
  cp.params = model.params;
  return cp;
}

PolicyModel policy_from_checkpoint(const ad::Checkpoint& cp) {
  const Variant variant = variant_from_name(cp.require_meta("variant"));
  const kin::KinematicChain chain = kin::chain_from_text(unpack_lines(cp.require_meta("chain")));
  ActionBounds bounds;
  bounds.lo = doubles_from_text(cp.require_meta("bounds_lo"));
  bounds.hi = doubles_from_text(cp.require_meta("bounds_hi"));
  SamplerConfig sampler;
  {
    std::istringstream in(cp.require_meta("sampler"));
    in >> sampler.n_samples >> sampler.n_iters >> sampler.shrink >> sampler.temperature;
    if (!in) throw ConfigError("checkpoint: bad sampler meta");
  }
  kin::ResidualMode rmode = kin::ResidualMode::kConstant;
  const std::string rm = cp.require_meta("residual_mode");
  if (rm == "affine") rmode = kin::ResidualMode::kAffine;

  PolicyModel model = PolicyModel::build(
      variant, chain, std::stoi(cp.require_meta("obs_dim")),
      std::stoi(cp.require_meta("hidden")), std::stoi(cp.require_meta("enc_blocks")),
      std::stoi(cp.require_meta("head_blocks")), bounds, sampler, rmode,
      /*init_seed=*/0, /*zero_init=*/true);

  if (model.params.count() != cp.params.count())
    throw ConfigError("checkpoint: parameter array count mismatch");
  for (int id = 0; id < cp.params.count(); ++id) {
    const ad::ParamArray& src = cp.params.array(id);
    const int dst_id = model.params.find(src.name);
    if (dst_id < 0) throw ConfigError("checkpoint: unexpected array '" + src.name + "'");
    ad::ParamArray& dst = model.params.array(dst_id);
    if (dst.rows != src.rows || dst.cols != src.cols)
      throw ConfigError("checkpoint: shape mismatch for '" + src.name + "'");
    dst.data = src.data;
  }
  return model;
}

}  // namespace ikp::infer
