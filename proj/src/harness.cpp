#include "ikp/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace ikp::harness {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string vec_text(const VectorXd& v) {
  std::string out;
  for (int i = 0; i < v.size(); ++i) {
    if (i) out += " ";
    out += fmt(v[i]);
  }
  return out;
}

const char* residual_mode_name(kin::ResidualMode m) {
  return m == kin::ResidualMode::kConstant ? "constant" : "affine";
}

kin::ResidualMode residual_mode_from(const std::string& s) {
  if (s == "constant") return kin::ResidualMode::kConstant;
  if (s == "affine") return kin::ResidualMode::kAffine;
  throw ConfigError("unknown residual mode '" + s + "'");
}

}  // namespace

// ---------------- config ----------------

void TrainConfig::validate() const {
  if (steps < 1 || batch < 1 || n_neg < 1 || hidden < 1 || enc_blocks < 0 ||
      head_blocks < 0)
    throw ConfigError("config: counts must be positive");
  if (!(lr > 0.0)) throw ConfigError("config: lr must be > 0");
  if (lambda < 0.0) throw ConfigError("config: lambda must be >= 0");
  if (!(bounds_shrink >= 0.0 && bounds_shrink < 1.0))
    throw ConfigError("config: bounds_shrink must be in [0,1)");
  sampler.validate();
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out << "ikp-config v1\n";
  out << "variant " << infer::variant_name(variant) << "\n";
  out << "task " << env::task_name(task) << "\n";
  out << "seed " << seed << "\n";
  out << "steps " << steps << "\n";
  out << "batch " << batch << "\n";
  out << "n_neg " << n_neg << "\n";
  out << "hidden " << hidden << "\n";
  out << "enc_blocks " << enc_blocks << "\n";
  out << "head_blocks " << head_blocks << "\n";
  out << "lr " << fmt(lr) << "\n";
  out << "lr_cosine " << (lr_cosine ? 1 : 0) << "\n";
  out << "lambda " << fmt(lambda) << "\n";
  out << "bounds_shrink " << fmt(bounds_shrink) << "\n";
  out << "residual_mode " << residual_mode_name(residual_mode) << "\n";
  out << "sampler_n_samples " << sampler.n_samples << "\n";
  out << "sampler_n_iters " << sampler.n_iters << "\n";
  out << "sampler_shrink " << fmt(sampler.shrink) << "\n";
  out << "sampler_temperature " << fmt(sampler.temperature) << "\n";
  out << "end\n";
  return out.str();
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "ikp-config v1")
    throw ConfigError("config: bad header");
  TrainConfig cfg;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "end") break;
    std::string sval;
    ls >> sval;
    if (!ls && key != "end") throw ConfigError("config: bad line '" + line + "'");
    if (key == "variant") cfg.variant = infer::variant_from_name(sval);
    else if (key == "task") cfg.task = env::task_from_name(sval);
    else if (key == "seed") cfg.seed = std::stoull(sval);
    else if (key == "steps") cfg.steps = std::stoi(sval);
    else if (key == "batch") cfg.batch = std::stoi(sval);
    else if (key == "n_neg") cfg.n_neg = std::stoi(sval);
    else if (key == "hidden") cfg.hidden = std::stoi(sval);
    else if (key == "enc_blocks") cfg.enc_blocks = std::stoi(sval);
    else if (key == "head_blocks") cfg.head_blocks = std::stoi(sval);
    else if (key == "lr") cfg.lr = std::stod(sval);
    else if (key == "lr_cosine") cfg.lr_cosine = std::stoi(sval) != 0;
    else if (key == "lambda") cfg.lambda = std::stod(sval);
    else if (key == "bounds_shrink") cfg.bounds_shrink = std::stod(sval);
    else if (key == "residual_mode") cfg.residual_mode = residual_mode_from(sval);
    else if (key == "sampler_n_samples") cfg.sampler.n_samples = std::stoi(sval);
    else if (key == "sampler_n_iters") cfg.sampler.n_iters = std::stoi(sval);
    else if (key == "sampler_shrink") cfg.sampler.shrink = std::stod(sval);
    else if (key == "sampler_temperature") cfg.sampler.temperature = std::stod(sval);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

void TrainConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("config: cannot open '" + path + "' for writing");
  out << to_text();
}

std::string TrainConfig::hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : to_text()) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------- dataset ----------------

int Dataset::sample_count() const {
  int n = 0;
  for (const auto& ep : episodes) n += static_cast<int>(ep.steps.size());
  return n;
}

void Dataset::validate() const {
  chain.validate();
  if (episodes.empty()) throw ConfigError("dataset: no episodes");
  const ebm::ActionBounds bounds = ebm::ActionBounds::from_chain(chain, 0.05);
  for (const auto& ep : episodes) {
    if (ep.steps.empty()) throw ConfigError("dataset: empty episode");
    for (const auto& st : ep.steps)
      for (int j = 0; j < st.action.size(); ++j)
        if (st.action[j] < bounds.lo[j] - 1e-9 || st.action[j] > bounds.hi[j] + 1e-9)
          throw ConfigError("dataset: action outside bounds");
  }
}

Dataset generate_dataset(const env::Task& task, int n_episodes, uint64_t seed,
                         int* dropped) {
  Dataset ds;
  ds.task = task.kind;
  ds.chain = task.chain;
  if (dropped) *dropped = 0;
  Rng seeder(seed);
  uint64_t counter = 0;
  while (static_cast<int>(ds.episodes.size()) < n_episodes) {
    const uint64_t ep_seed = seeder.child(counter++).seed();
    auto [state, obs] = env::reset(task, ep_seed);
    Episode ep;
    ep.seed = ep_seed;
    ep.offsets = task.chain.true_encoder_offsets;
    for (int t = 0; t < task.episode_len; ++t) {
      StepRecord rec;
      rec.obs = obs.features;
      rec.action = env::oracle_action(task, state);
      rec.q_true = state.q_true;
      rec.offsets = ep.offsets;
      rec.success = env::success(task, state);
      obs = env::step(task, state, rec.action);
      ep.steps.push_back(std::move(rec));
    }
    if (env::success(task, state)) {
      ds.episodes.push_back(std::move(ep));
    } else {
      if (dropped) ++*dropped;
      std::cerr << "[gen-data] dropped failed oracle episode (seed " << ep_seed
                << "), resampling\n";
    }
  }
  return ds;
}

void save_dataset(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw ConfigError("dataset: cannot open '" + path + "' for writing");
  out << "ikp-episodes v1\n";
  out << "task " << env::task_name(dataset.task) << "\n";
  out << "chain-begin\n" << kin::chain_to_text(dataset.chain) << "chain-end\n";
  for (const auto& ep : dataset.episodes) {
    out << "episode " << ep.seed << "\n";
    for (const auto& st : ep.steps) {
      out << "step o " << vec_text(st.obs) << " a " << vec_text(st.action) << " t "
          << vec_text(st.q_true) << " d " << vec_text(st.offsets) << " s "
          << (st.success ? 1 : 0) << "\n";
    }
    out << "end-episode\n";
  }
  out << "end\n";
  if (!out) throw ConfigError("dataset: write failed for '" + path + "'");
}

namespace {

VectorXd read_values(std::istringstream& ls, int n, const char* what) {
  VectorXd v(n);
  for (int i = 0; i < n; ++i)
    if (!(ls >> v[i])) throw ConfigError(std::string("dataset: truncated ") + what);
  return v;
}

}  // namespace

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("dataset: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "ikp-episodes v1")
    throw ConfigError("dataset: bad header in '" + path + "'");
  Dataset ds;
  bool have_chain = false;
  Episode* cur = nullptr;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "end") break;
    if (tag == "task") {
      std::string name;
      ls >> name;
      ds.task = env::task_from_name(name);
    } else if (tag == "chain-begin") {
      std::string text;
      while (std::getline(in, line) && line != "chain-end") text += line + "\n";
      ds.chain = kin::chain_from_text(text);
      have_chain = true;
    } else if (tag == "episode") {
      Episode ep;
      ls >> ep.seed;
      ds.episodes.push_back(ep);
      cur = &ds.episodes.back();
    } else if (tag == "step") {
      if (!cur || !have_chain) throw ConfigError("dataset: step before episode/chain");
      const int m = ds.chain.dof();
      StepRecord rec;
      std::string mark;
      ls >> mark;  // o
      rec.obs = read_values(ls, env::obs_dim(ds.task), "obs");
      ls >> mark;  // a
      rec.action = read_values(ls, m, "action");
      ls >> mark;  // t
      rec.q_true = read_values(ls, m, "true joints");
      ls >> mark;  // d
      rec.offsets = read_values(ls, m, "offsets");
      int s;
      ls >> mark >> s;
      rec.success = s != 0;
      cur->steps.push_back(std::move(rec));
      if (cur->offsets.size() == 0) cur->offsets = cur->steps.back().offsets;
    } else if (tag == "end-episode") {
      cur = nullptr;
    } else {
      throw ConfigError("dataset: unknown line '" + line + "'");
    }
  }
  ds.validate();
  return ds;
}

// ---------------- training ----------------

TrainResult train(const TrainConfig& config, const Dataset& dataset, bool parallel) {
  config.validate();
  dataset.validate();
  if (dataset.task != config.task)
    throw ConfigError("train: dataset task does not match config");

  const kin::KinematicChain& chain = dataset.chain;
  const env::Task task = env::Task::make(config.task, chain.true_encoder_offsets);
  const int obs_d = env::obs_dim(config.task);

  ebm::ActionBounds bounds =
      config.variant == Variant::kImplicitCartesian
          ? task.cart_action_box()
          : ebm::ActionBounds::from_chain(chain, config.bounds_shrink);

  Rng master(config.seed);
  infer::PolicyModel model = infer::PolicyModel::build(
      config.variant, chain, obs_d, config.hidden, config.enc_blocks, config.head_blocks,
      bounds, config.sampler, config.residual_mode, master.child(0xA11CE).seed());

  // flat sample matrices
  const int n = dataset.sample_count();
  Eigen::MatrixXd all_obs(obs_d, n), all_act(chain.dof(), n);
  {
    int k = 0;
    for (const auto& ep : dataset.episodes)
      for (const auto& st : ep.steps) {
        all_obs.col(k) = st.obs;
        all_act.col(k) = st.action;
        ++k;
      }
  }

  ad::Adam opt(model.params, config.lr);
  Rng batch_rng = master.child(0xBA7C4);
  TrainResult result;
  Eigen::MatrixXd bobs(obs_d, config.batch), bact(chain.dof(), config.batch);

  for (int step = 0; step < config.steps; ++step) {
    if (config.lr_cosine) {
      const double frac = static_cast<double>(step) / std::max(1, config.steps - 1);
      opt.set_lr(config.lr * (0.02 + 0.98 * 0.5 * (1.0 + std::cos(kPi * frac))));
    }
    for (int i = 0; i < config.batch; ++i) {
      const int idx = batch_rng.uniform_int(n);
      bobs.col(i) = all_obs.col(idx);
      bact.col(i) = all_act.col(idx);
    }
    infer::TrainBatch batch{&bobs, &bact};
    ad::GradStore grads(model.params);
    Rng step_rng = master.child(0x100000ULL + static_cast<uint64_t>(step));
    double loss = 0.0;
    try {
      switch (config.variant) {
        case Variant::kImplicitJoints:
        case Variant::kIkp:
        case Variant::kIkpResidual:
          loss = infer::autoregressive_train_step(model, batch, config.n_neg, step_rng,
                                                  grads, parallel);
          break;
        case Variant::kImplicitCartesian:
          loss = infer::fullspace_train_step(model, batch, config.n_neg, step_rng, grads,
                                             parallel);
          break;
        case Variant::kExplicitJoints:
        case Variant::kExplicitFk:
          loss = infer::explicit_train_step(model, batch, config.lambda, grads, parallel);
          break;
      }
      opt.step(model.params, grads);
    } catch (const TrainingError& e) {
      throw TrainingError("training diverged at step " + std::to_string(step) + ": " +
                          e.what());
    }
    result.loss_curve.push_back(loss);
  }
  result.model = std::move(model);
  return result;
}

// ---------------- checkpoints ----------------

void save_policy(const std::string& path, const infer::PolicyModel& model,
                 const TrainConfig& config) {
  ad::Checkpoint cp = infer::policy_to_checkpoint(model);
  cp.set_meta("task", env::task_name(config.task));
  cp.set_meta("config_hash", config.hash());
  std::string cfg = config.to_text();
  std::replace(cfg.begin(), cfg.end(), '\n', '|');
  cp.set_meta("config", cfg);
  ad::save_checkpoint(path, cp);
}

infer::PolicyModel load_policy(const std::string& path) {
  return infer::policy_from_checkpoint(ad::load_checkpoint(path));
}

env::TaskKind policy_task(const std::string& path) {
  return env::task_from_name(ad::load_checkpoint(path).require_meta("task"));
}

// ---------------- evaluation ----------------

void EvalReport::finalize() {
  const int k = static_cast<int>(rates.size());
  mean = 0.0;
  for (double r : rates) mean += r;
  mean /= k;
  stddev = 0.0;
  if (k > 1) {
    for (double r : rates) stddev += (r - mean) * (r - mean);
    stddev = std::sqrt(stddev / (k - 1));
  }
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "task,variant,seed,episodes,rate\n";
  for (size_t i = 0; i < seeds.size(); ++i)
    out << task << "," << variant << "," << seeds[i] << "," << episodes_per_seed << ","
        << fmt(rates[i]) << "\n";
  out << task << "," << variant << ",mean," << episodes_per_seed * seeds.size() << ","
      << fmt(mean) << "\n";
  out << task << "," << variant << ",std,," << fmt(stddev) << "\n";
  return out.str();
}

EvalReport evaluate_policy(const env::Task& task, const ActFn& act, int n_episodes,
                           const std::vector<uint64_t>& seeds, bool parallel) {
  if (n_episodes < 1 || seeds.empty()) throw ConfigError("evaluate: need episodes and seeds");
  EvalReport report;
  report.task = env::task_name(task.kind);
  report.episodes_per_seed = n_episodes;
  report.seeds = seeds;
  for (uint64_t s : seeds) {
    std::vector<char> ok(static_cast<size_t>(n_episodes), 0);
    Rng seed_rng(s);
    kernels::parallel_for(n_episodes, parallel, [&](int e) {
      const uint64_t ep_seed = seed_rng.child(static_cast<uint64_t>(e)).seed();
      auto [state, obs] = env::reset(task, ep_seed);
      Rng act_rng = Rng(ep_seed).child(0xAC7);
      bool failed = false;
      for (int t = 0; t < task.episode_len && !failed; ++t) {
        VectorXd a;
        try {
          a = act(obs.features, act_rng);
        } catch (const InferenceError& err) {
          std::cerr << "[eval] inference error, episode counted as failure: " << err.what()
                    << "\n";
          failed = true;
          break;
        }
        obs = env::step(task, state, a);
      }
      ok[e] = !failed && env::success(task, state) ? 1 : 0;
    });
    int wins = 0;
    for (char c : ok) wins += c;
    report.rates.push_back(static_cast<double>(wins) / n_episodes);
  }
  report.finalize();
  return report;
}

VectorXd policy_action(const infer::PolicyModel& model, const VectorXd& obs, Rng& rng) {
  switch (model.variant) {
    case Variant::kImplicitJoints:
    case Variant::kIkp:
    case Variant::kIkpResidual:
      return infer::autoregressive_infer(model, obs, model.sampler, rng);
    case Variant::kImplicitCartesian: {
      const VectorXd a = infer::fullspace_infer(model, obs, model.sampler, rng);
      const Eigen::Vector2d target = kin::clamp_to_annulus(model.chain, {a[0], a[1]});
      VectorXd q = kin::analytic_ik_planar2(model.chain, target, kin::ElbowBranch::kUp);
      for (int j = 0; j < q.size(); ++j)
        q[j] = clamp(q[j], model.chain.joint_min[j], model.chain.joint_max[j]);
      return q;
    }
    case Variant::kExplicitJoints:
    case Variant::kExplicitFk: {
      const VectorXd latent = model.encoder.eval(model.params, obs);
      VectorXd q = model.heads[0].eval(model.params, latent);
      for (int j = 0; j < q.size(); ++j) q[j] = clamp(q[j], model.bounds.lo[j], model.bounds.hi[j]);
      return q;
    }
  }
  throw ConfigError("policy_action: unknown variant");
}

EvalReport evaluate(const env::Task& task, const infer::PolicyModel& model,
                    int n_episodes, const std::vector<uint64_t>& seeds, bool parallel) {
  if (task.chain.dof() != model.chain.dof())
    throw ConfigError("evaluate: checkpoint chain does not match task");
  ActFn act = [&](const VectorXd& obs, Rng& rng) { return policy_action(model, obs, rng); };
  EvalReport report = evaluate_policy(task, act, n_episodes, seeds, parallel);
  report.variant = infer::variant_name(model.variant);
  return report;
}

VectorXd recover_offsets(const infer::PolicyModel& model) {
  if (!model.residual)
    throw ConfigError("recover_offsets: checkpoint lacks a residual module");
  if (model.residual->mode != kin::ResidualMode::kConstant)
    throw ConfigError("recover_offsets: residual mode must be constant-vector");
  return model.params.vec(model.residual->delta_id);
}

}  // namespace ikp::harness
