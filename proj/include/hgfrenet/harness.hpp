#pragma once

// Optimizer, schedule, training loop, evaluation and checkpoint directories.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "hgfrenet/data.hpp"
#include "hgfrenet/metrics.hpp"
#include "hgfrenet/network.hpp"

namespace hgf::train {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  std::vector<Tensor> m, v;
  std::size_t step = 0;
};

/// One AdamW update: decoupled weight decay on the parameter, bias-corrected
/// moments. Throws NumericError (and changes nothing) if any gradient is
/// non-finite.
void adamw_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, AdamWState& state,
                const AdamWConfig& cfg);

/// Convenience form over trainable Vars; parameters that received no
/// gradient are treated as having a zero gradient.
void adamw_step(const std::vector<Var>& params, AdamWState& state, const AdamWConfig& cfg);

/// initial * decay^epoch.
double lr_schedule(std::size_t epoch, double initial, double decay);

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(const std::vector<Var>& params, double max_norm);

enum class Stage { Preliminary, Main };
std::string stage_name(Stage stage);
Stage stage_from_name(const std::string& name);

struct TrainConfig {
  Stage stage = Stage::Main;
  std::size_t epochs = 500;
  std::size_t batch_size = 8;
  double lr = 1e-4;
  double lr_decay = 0.99;
  double weight_decay = 0.01;
  bool clip_grad = false;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  bool shuffle = true;
  bool noise_during_training = true;  // main stage: noise the preliminary output
  bool noise_at_eval = false;
  data::NoiseConfig noise = data::h36m_noise_config();
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::filesystem::path preliminary_checkpoint;  // required for the main stage
  bool verbose = false;

  void validate() const;
};

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json train_config_to_json(const TrainConfig& cfg);

struct StepLog {
  std::size_t epoch = 0, step = 0;
  double l_w = 0, l_t = 0, l_m = 0, l_f = 0, total = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double total = 0.0;  // mean training loss over the epoch's steps
  double score = 0.0;  // validation MPJPE in mm, or the mean training loss without validation data
  bool validated = false;
  bool improved = false;
};

/// Snapshot of every parameter and buffer value.
using ModelState = std::vector<Tensor>;
ModelState capture_state(const net::Model& model);
void restore_state(net::Model& model, const ModelState& state);

struct TrainResult {
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_score = 0.0;
  ModelState best_state;
  bool diverged = false;
};

/// Input tensor fed to `model` for each sample: the 2D keypoints for the
/// preliminary stage, [2D | preliminary 3D] for the main stage. Noise is not
/// applied here.
std::vector<Tensor> stage_inputs(const std::vector<data::Sample>& samples, const net::Model* preliminary);

/// Called after every epoch with that epoch's step logs; the model holds
/// the epoch's final parameters.
using EpochCallback = std::function<void(const EpochLog&, const std::vector<StepLog>&)>;

/// In-memory training. For the main stage `preliminary` must be given; its
/// predictions are computed once (eval mode) and, when enabled, re-noised
/// every step. Validation MPJPE (two-stage, clean) selects the best state;
/// without validation data the epoch's mean training loss is used. On a
/// non-finite loss the model is rolled back to the last completed epoch and
/// DivergenceError is thrown.
TrainResult train_model(net::Model& model, const net::Model* preliminary, const std::vector<data::Sample>& train,
                        const std::vector<data::Sample>& val, const TrainConfig& cfg,
                        const EpochCallback& on_epoch = {});

struct EvalConfig {
  metrics::EvalOptions metric;
  bool central_frame = false;  // score only frame T/2 of each sequence
  bool noise = false;          // noise the preliminary output (main models)
  data::NoiseConfig noise_cfg = data::h36m_noise_config();
  std::uint64_t noise_seed = 0;
};

/// Predictions of `model` (clean two-stage for a main model) per sample.
std::vector<Tensor> predict_samples(const net::Model& model, const net::Model* preliminary,
                                    const std::vector<data::Sample>& samples, const EvalConfig& cfg = {});

metrics::EvalReport evaluate_model(const net::Model& model, const net::Model* preliminary,
                                   const std::vector<data::Sample>& samples, const EvalConfig& cfg = {});

// Checkpoint directory: model.json (stage, model config, skeleton) and
// weights.hgfw; a main-stage checkpoint carries its preliminary model in
// preliminary/.
struct LoadedCheckpoint {
  Stage stage = Stage::Main;
  skeleton::SkeletonGraph graph;
  std::unique_ptr<net::Model> model;
  std::unique_ptr<net::Model> preliminary;
};

void save_checkpoint_dir(const std::filesystem::path& dir, Stage stage, const net::Model& model,
                         const skeleton::SkeletonGraph& graph, const net::Model* preliminary);
LoadedCheckpoint load_checkpoint_dir(const std::filesystem::path& dir);

/// File-based training: reads cfg.data_dir, trains, and writes best/, last/,
/// loss.csv (epoch,step,L_w,L_t,L_m,L_f,total) and epochs.csv under
/// cfg.out_dir. Main stage loads cfg.preliminary_checkpoint first.
TrainResult run_training(const TrainConfig& cfg, const net::ModelConfig& model_cfg,
                         const skeleton::SkeletonGraph& graph);

/// File-based evaluation of a checkpoint directory on a dataset directory.
metrics::EvalReport run_evaluation(const std::filesystem::path& checkpoint_dir, const std::filesystem::path& data_dir,
                                   const EvalConfig& cfg = {});

}  // namespace hgf::train
