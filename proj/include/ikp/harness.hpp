#pragma once

#include <string>
#include <vector>

#include "ikp/envs.hpp"
#include "ikp/inference.hpp"

namespace ikp::harness {

using Eigen::VectorXd;
using infer::Variant;

// All hyperparameters the method leaves open. Text form `ikp-config v1` with
// `key value` lines; unknown keys are configuration errors.
struct TrainConfig {
  Variant variant = Variant::kIkp;
  env::TaskKind task = env::TaskKind::kCartSweep;
  uint64_t seed = 1;
  int steps = 1600;
  int batch = 8;
  int n_neg = 256;
  int hidden = 24;
  int enc_blocks = 2;
  int head_blocks = 4;
  double lr = 1e-3;
  bool lr_cosine = true;  // cosine decay to a 2% floor over the run
  double lambda = 1.0;    // explicit-fk Cartesian loss weight
  double bounds_shrink = 0.05;
  kin::ResidualMode residual_mode = kin::ResidualMode::kConstant;
  infer::SamplerConfig sampler;

  void validate() const;
  std::string to_text() const;
  static TrainConfig from_text(const std::string& text);
  static TrainConfig load(const std::string& path);
  void save(const std::string& path) const;
  std::string hash() const;  // FNV-1a of the text form
};

struct StepRecord {
  VectorXd obs, action, q_true, offsets;
  bool success = false;
};

struct Episode {
  uint64_t seed = 0;
  VectorXd offsets;
  std::vector<StepRecord> steps;
};

struct Dataset {
  env::TaskKind task = env::TaskKind::kCartSweep;
  kin::KinematicChain chain;  // carries the injected offsets
  std::vector<Episode> episodes;

  int sample_count() const;
  void validate() const;  // non-empty, actions within chain bounds
};

// Rolls out the privileged oracle; failed episodes are dropped, resampled and
// counted in `dropped` when given.
Dataset generate_dataset(const env::Task& task, int n_episodes, uint64_t seed,
                         int* dropped = nullptr);

// Line-delimited text, versioned header `ikp-episodes v1`.
void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);

struct TrainResult {
  infer::PolicyModel model;
  std::vector<double> loss_curve;  // one entry per step
};

// Trains one policy variant on a fixed dataset. Divergence (non-finite loss)
// aborts with a TrainingError carrying the step index.
TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  bool parallel = true);

void save_policy(const std::string& path, const infer::PolicyModel& model,
                 const TrainConfig& config);
infer::PolicyModel load_policy(const std::string& path);
env::TaskKind policy_task(const std::string& path);  // from checkpoint meta

struct EvalReport {
  std::string variant, task;
  int episodes_per_seed = 0;
  std::vector<uint64_t> seeds;
  std::vector<double> rates;  // success rate per seed
  double mean = 0.0, stddev = 0.0;
  std::string config_hash;

  void finalize();  // mean and sample std over seeds
  std::string to_csv() const;
};

// One environment instance per episode worker; aggregation is by episode
// index, so reports are reproducible for any thread count.
using ActFn = std::function<VectorXd(const VectorXd& obs, Rng& rng)>;

EvalReport evaluate_policy(const env::Task& task, const ActFn& act, int n_episodes,
                           const std::vector<uint64_t>& seeds, bool parallel);
EvalReport evaluate(const env::Task& task, const infer::PolicyModel& model,
                    int n_episodes, const std::vector<uint64_t>& seeds,
                    bool parallel = true);

// Policy action for one observation (autoregressive argmin, Cartesian argmin
// + analytic IK, or direct regression, by variant). Inference failures throw;
// evaluate() counts them as episode failures.
VectorXd policy_action(const infer::PolicyModel& model, const VectorXd& obs, Rng& rng);

// Learned constant joint offsets from a residual checkpoint.
VectorXd recover_offsets(const infer::PolicyModel& model);

// ----- bench: the full experiment matrix -----

struct BenchOptions {
  uint64_t seed = 1;
  std::string out_dir = "bench_out";
  bool quick = false;  // reduced protocol (same code paths)
  bool echo = true;    // print per-criterion lines to stdout
};

// Runs every criterion, writes CSV tables, criteria.txt and summary.json.
// Returns the number of failed criteria.
int run_bench(const BenchOptions& opts);

}  // namespace ikp::harness
