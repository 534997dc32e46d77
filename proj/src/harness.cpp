#include "hgfrenet/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "hgfrenet/error.hpp"
#include "hgfrenet/losses.hpp"
#include "hgfrenet/parameters.hpp"

namespace hgf::train {

namespace fs = std::filesystem;

namespace {

// Stacks equally shaped tensors along a new leading axis.
Tensor stack(const std::vector<const Tensor*>& items) {
  Shape s = items.front()->shape();
  s.insert(s.begin(), items.size());
  Tensor out(s);
  const std::size_t each = items.front()->size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::copy(items[i]->ptr(), items[i]->ptr() + each, out.ptr() + i * each);
  }
  return out;
}

void require_sample_shapes(const std::vector<data::Sample>& samples, const net::ModelConfig& cfg) {
  for (const auto& s : samples) {
    if (s.pose2d.frames() != cfg.frames || s.pose2d.joints() != cfg.joints || s.pose3d.frames() != cfg.frames ||
        s.pose3d.joints() != cfg.joints) {
      throw ConfigError("sample shape " + shape_str(s.pose3d.values.shape()) + " does not match model T=" +
                        std::to_string(cfg.frames) + ", N=" + std::to_string(cfg.joints));
    }
  }
}

double mean_mpjpe_mm(const std::vector<Tensor>& preds, const std::vector<data::Sample>& samples) {
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    total += metrics::mpjpe(data::root_relative(preds[i], 0), data::root_relative(samples[i].pose3d.values, 0));
  }
  return 1000.0 * total / static_cast<double>(preds.size());
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

}  // namespace

void adamw_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, AdamWState& state,
                const AdamWConfig& cfg) {
  if (params.size() != grads.size()) throw ShapeError("adamw_step: parameter and gradient counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i] && grads[i]->size() != params[i]->size()) {
      throw ShapeError("adamw_step: gradient " + std::to_string(i) + " has shape " + shape_str(grads[i]->shape()) +
                       ", parameter " + shape_str(params[i]->shape()));
    }
    if (grads[i] && !grads[i]->all_finite()) {
      throw NumericError("adamw_step rejected: non-finite gradient for parameter " + std::to_string(i));
    }
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adamw_step: optimizer state belongs to other parameters");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* w = params[i]->ptr();
    double* m = state.m[i].ptr();
    double* v = state.v[i].ptr();
    const double* g = grads[i] ? grads[i]->ptr() : nullptr;
    for (std::size_t j = 0; j < params[i]->size(); ++j) {
      const double gj = g ? g[j] : 0.0;
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      w[j] -= cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * w[j]);
    }
  }
}

void adamw_step(const std::vector<Var>& params, AdamWState& state, const AdamWConfig& cfg) {
  std::vector<Tensor*> p;
  std::vector<const Tensor*> g;
  for (const auto& v : params) {
    p.push_back(&v.mutable_value());
    g.push_back(v.grad().empty() ? nullptr : &v.grad());
  }
  adamw_step(p, g, state, cfg);
}

double lr_schedule(std::size_t epoch, double initial, double decay) {
  return initial * std::pow(decay, static_cast<double>(epoch));
}

double clip_grad_norm(const std::vector<Var>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& v : params) {
    for (double g : v.grad().data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (const auto& v : params) {
      if (v.grad().empty()) continue;
      for (double& g : v.grad_buffer().data()) g *= s;
    }
  }
  return norm;
}

std::string stage_name(Stage stage) { return stage == Stage::Preliminary ? "preliminary" : "main"; }

Stage stage_from_name(const std::string& name) {
  if (name == "preliminary") return Stage::Preliminary;
  if (name == "main") return Stage::Main;
  throw ConfigError("unknown stage '" + name + "' (expected preliminary or main)");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr decay must be in (0, 1]");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (clip_grad && !(clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base) {
  static const std::set<std::string> known = {
      "stage", "epochs", "batch_size", "lr", "lr_decay", "weight_decay", "clip_grad", "clip_norm", "seed",
      "shuffle", "noise_during_training", "noise_at_eval", "noise", "data_dir", "out_dir",
      "preliminary_checkpoint", "verbose"};
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown training config key '" + key + "'");
  }
  try {
    if (j.contains("stage")) base.stage = stage_from_name(j.at("stage").get<std::string>());
    if (j.contains("epochs")) base.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("batch_size")) base.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("lr")) base.lr = j.at("lr").get<double>();
    if (j.contains("lr_decay")) base.lr_decay = j.at("lr_decay").get<double>();
    if (j.contains("weight_decay")) base.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("clip_grad")) base.clip_grad = j.at("clip_grad").get<bool>();
    if (j.contains("clip_norm")) base.clip_norm = j.at("clip_norm").get<double>();
    if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("shuffle")) base.shuffle = j.at("shuffle").get<bool>();
    if (j.contains("noise_during_training")) base.noise_during_training = j.at("noise_during_training").get<bool>();
    if (j.contains("noise_at_eval")) base.noise_at_eval = j.at("noise_at_eval").get<bool>();
    if (j.contains("noise")) {
      base.noise.groups = j.at("noise").at("groups").get<std::vector<std::vector<std::size_t>>>();
      base.noise.stddevs = j.at("noise").at("stddevs").get<std::vector<double>>();
    }
    if (j.contains("data_dir")) base.data_dir = j.at("data_dir").get<std::string>();
    if (j.contains("out_dir")) base.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("preliminary_checkpoint")) {
      base.preliminary_checkpoint = j.at("preliminary_checkpoint").get<std::string>();
    }
    if (j.contains("verbose")) base.verbose = j.at("verbose").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  return base;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"stage", stage_name(c.stage)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"lr_decay", c.lr_decay},
          {"weight_decay", c.weight_decay},
          {"clip_grad", c.clip_grad},
          {"clip_norm", c.clip_norm},
          {"seed", c.seed},
          {"shuffle", c.shuffle},
          {"noise_during_training", c.noise_during_training},
          {"noise_at_eval", c.noise_at_eval},
          {"noise", {{"groups", c.noise.groups}, {"stddevs", c.noise.stddevs}}},
          {"data_dir", c.data_dir.string()},
          {"out_dir", c.out_dir.string()},
          {"preliminary_checkpoint", c.preliminary_checkpoint.string()},
          {"verbose", c.verbose}};
}

ModelState capture_state(const net::Model& model) {
  ModelState s;
  for (const auto& e : model.parameters().entries()) s.push_back(e.var.value());
  return s;
}

void restore_state(net::Model& model, const ModelState& state) {
  const auto& entries = model.parameters().entries();
  if (entries.size() != state.size()) throw ShapeError("restore_state: state has a different parameter count");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].var.shape() != state[i].shape()) {
      throw ShapeError("restore_state: shape mismatch for " + entries[i].name);
    }
    entries[i].var.mutable_value() = state[i];
  }
}

std::vector<Tensor> stage_inputs(const std::vector<data::Sample>& samples, const net::Model* preliminary) {
  std::vector<Tensor> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (!preliminary) {
      out.push_back(s.pose2d.values);
    } else {
      out.push_back(data::concat_2d3d(s.pose2d.values, preliminary->predict(s.pose2d.values)));
    }
  }
  return out;
}

std::vector<Tensor> predict_samples(const net::Model& model, const net::Model* preliminary,
                                    const std::vector<data::Sample>& samples, const EvalConfig& cfg) {
  const bool main = model.config().channels_in == 5;
  if (main && !preliminary) throw ConfigError("a main model needs its preliminary model for prediction");
  std::mt19937_64 noise_rng(cfg.noise_seed);
  std::vector<Tensor> preds;
  preds.reserve(samples.size());
  for (const auto& s : samples) {
    if (!main) {
      preds.push_back(model.predict(s.pose2d.values));
      continue;
    }
    Tensor pre = preliminary->predict(s.pose2d.values);
    if (cfg.noise) pre = data::inject_noise(pre, cfg.noise_cfg, noise_rng);
    preds.push_back(model.predict(data::concat_2d3d(s.pose2d.values, pre)));
  }
  return preds;
}

metrics::EvalReport evaluate_model(const net::Model& model, const net::Model* preliminary,
                                   const std::vector<data::Sample>& samples, const EvalConfig& cfg) {
  require_sample_shapes(samples, model.config());
  const auto preds = predict_samples(model, preliminary, samples, cfg);
  std::vector<metrics::Prediction> items;
  items.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!cfg.central_frame) {
      items.push_back({samples[i].action, preds[i], samples[i].pose3d.values});
      continue;
    }
    const std::size_t t = preds[i].dim(0), n = preds[i].dim(1);
    const std::size_t mid = t / 2;
    Tensor yh(Shape{1, n, 3}), y(Shape{1, n, 3});
    std::copy(preds[i].ptr() + mid * n * 3, preds[i].ptr() + (mid + 1) * n * 3, yh.ptr());
    std::copy(samples[i].pose3d.values.ptr() + mid * n * 3, samples[i].pose3d.values.ptr() + (mid + 1) * n * 3,
              y.ptr());
    items.push_back({samples[i].action, std::move(yh), std::move(y)});
  }
  return metrics::evaluate_predictions(items, cfg.metric);
}

TrainResult train_model(net::Model& model, const net::Model* preliminary, const std::vector<data::Sample>& train,
                        const std::vector<data::Sample>& val, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty()) throw DataError("no training samples");
  const auto& mcfg = model.config();
  if (cfg.stage == Stage::Main) {
    if (!preliminary) throw ConfigError("stage=main requires a trained preliminary model");
    net::validate_pipeline(preliminary->config(), mcfg);
    data::validate_noise(cfg.noise, mcfg.joints);
  } else if (mcfg.channels_in != 2) {
    throw ConfigError("stage=preliminary requires a 2-channel model");
  }
  require_sample_shapes(train, mcfg);
  require_sample_shapes(val, mcfg);
  const net::Model* pre = cfg.stage == Stage::Main ? preliminary : nullptr;

  // Preliminary predictions are fixed during the main stage; compute them once.
  std::vector<Tensor> pre_3d;
  if (pre) {
    NoGradGuard guard;
    for (const auto& s : train) pre_3d.push_back(pre->predict(s.pose2d.values));
  }

  std::mt19937_64 shuffle_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed + 1);
  std::mt19937_64 noise_rng(cfg.seed + 2);
  const auto params = model.parameters().trainable();
  const auto weights = mcfg.loss_weights();
  AdamWState opt;
  AdamWConfig acfg;
  acfg.weight_decay = cfg.weight_decay;

  EvalConfig eval_cfg;
  eval_cfg.noise = cfg.noise_at_eval;
  eval_cfg.noise_cfg = cfg.noise;
  eval_cfg.noise_seed = cfg.seed + 3;

  TrainResult result;
  ModelState last_good = capture_state(model);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t global_step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    acfg.lr = lr_schedule(epoch, cfg.lr, cfg.lr_decay);
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::vector<StepLog> epoch_steps;
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<Tensor> inputs;
      std::vector<const Tensor*> xs, ys;
      inputs.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = train[order[i]];
        if (!pre) {
          xs.push_back(&s.pose2d.values);
        } else {
          const Tensor p3 = cfg.noise_during_training ? data::inject_noise(pre_3d[order[i]], cfg.noise, noise_rng)
                                                      : pre_3d[order[i]];
          inputs.push_back(data::concat_2d3d(s.pose2d.values, p3));
        }
        ys.push_back(&s.pose3d.values);
      }
      for (const auto& t : inputs) xs.push_back(&t);
      const Tensor x = stack(xs);
      const Tensor y = stack(ys);

      model.parameters().zero_grad();
      const Var y_hat = model.forward(Var(x), net::ForwardContext{true, &dropout_rng});
      const auto loss = losses::total_loss(y_hat, y, weights);
      const double total = loss.total.value()[0];
      if (!std::isfinite(total)) {
        restore_state(model, last_good);
        result.diverged = true;
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(global_step) + ": non-finite loss");
      }
      backward(loss.total);
      if (cfg.clip_grad) clip_grad_norm(params, cfg.clip_norm);
      try {
        adamw_step(params, opt, acfg);
      } catch (const NumericError& e) {
        restore_state(model, last_good);
        result.diverged = true;
        throw DivergenceError(std::string("training diverged at epoch ") + std::to_string(epoch) + ": " + e.what());
      }
      epoch_steps.push_back({epoch, global_step++, loss.l_w, loss.l_t, loss.l_m, loss.l_f, total});
      epoch_total += total;
    }
    model.parameters().zero_grad();

    EpochLog log;
    log.epoch = epoch;
    log.lr = acfg.lr;
    log.total = epoch_total / static_cast<double>(epoch_steps.size());
    if (!val.empty()) {
      log.score = mean_mpjpe_mm(predict_samples(model, preliminary, val, eval_cfg), val);
      log.validated = true;
    } else {
      log.score = log.total;
    }
    log.improved = result.epochs.empty() || log.score < result.best_score;
    if (log.improved) {
      result.best_score = log.score;
      result.best_epoch = epoch;
      result.best_state = capture_state(model);
    }
    last_good = capture_state(model);
    result.epochs.push_back(log);
    result.steps.insert(result.steps.end(), epoch_steps.begin(), epoch_steps.end());
    if (cfg.verbose) {
      std::cerr << "epoch " << epoch << " lr " << log.lr << " loss " << log.total
                << (log.validated ? " val_mpjpe_mm " : " score ") << log.score << '\n';
    }
    if (on_epoch) on_epoch(log, epoch_steps);
  }
  return result;
}

void save_checkpoint_dir(const fs::path& dir, Stage stage, const net::Model& model,
                         const skeleton::SkeletonGraph& graph, const net::Model* preliminary) {
  if (stage == Stage::Main && !preliminary) throw ConfigError("a main checkpoint needs its preliminary model");
  fs::create_directories(dir);
  nlohmann::json meta;
  meta["format"] = "hgfrenet-checkpoint";
  meta["stage"] = stage_name(stage);
  meta["model"] = net::config_to_json(model.config());
  meta["skeleton"] = nlohmann::json::parse(skeleton::skeleton_to_json_text(graph));
  write_text(dir / "model.json", meta.dump(2) + "\n");
  save_checkpoint(model.parameters(), dir / "weights.hgfw");
  if (stage == Stage::Main) save_checkpoint_dir(dir / "preliminary", Stage::Preliminary, *preliminary, graph, nullptr);
}

LoadedCheckpoint load_checkpoint_dir(const fs::path& dir) {
  const auto meta = read_json_file(dir / "model.json");
  LoadedCheckpoint out;
  try {
    if (meta.value("format", std::string()) != "hgfrenet-checkpoint") {
      throw DataError(dir.string() + " is not a checkpoint directory");
    }
    out.stage = stage_from_name(meta.at("stage").get<std::string>());
    out.graph = skeleton::skeleton_from_json_text(meta.at("skeleton").dump());
    out.model = std::make_unique<net::Model>(net::config_from_json(meta.at("model")), out.graph, 0);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint metadata in " + dir.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError("checkpoint " + dir.string() + " has an invalid model config: " + e.what());
  }
  load_checkpoint(out.model->parameters(), dir / "weights.hgfw");
  if (out.stage == Stage::Main) {
    auto pre = load_checkpoint_dir(dir / "preliminary");
    out.preliminary = std::move(pre.model);
  }
  return out;
}

TrainResult run_training(const TrainConfig& cfg, const net::ModelConfig& model_cfg,
                         const skeleton::SkeletonGraph& graph) {
  cfg.validate();
  if (cfg.data_dir.empty()) throw ConfigError("training needs a data directory");
  if (cfg.out_dir.empty()) throw ConfigError("training needs an output directory");

  LoadedCheckpoint pre;
  if (cfg.stage == Stage::Main) {
    if (cfg.preliminary_checkpoint.empty() || !fs::exists(cfg.preliminary_checkpoint / "model.json")) {
      throw ConfigError("stage=main requires a trained preliminary checkpoint; train stage=preliminary first "
                        "and pass its directory (got '" +
                        cfg.preliminary_checkpoint.string() + "')");
    }
    pre = load_checkpoint_dir(cfg.preliminary_checkpoint);
    if (pre.stage != Stage::Preliminary) throw ConfigError(cfg.preliminary_checkpoint.string() + " is not a preliminary checkpoint");
  }

  net::ModelConfig mc = model_cfg;
  mc.channels_in = cfg.stage == Stage::Preliminary ? 2 : 5;
  net::Model model(mc, graph, cfg.seed);
  const auto samples = data::load_dataset(cfg.data_dir);
  require_sample_shapes(samples, mc);
  const auto [train, val] = data::split_train_val(samples);

  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "train_config.json", train_config_to_json(cfg).dump(2) + "\n");
  const net::Model* pre_model = pre.model.get();
  save_checkpoint_dir(cfg.out_dir / "last", cfg.stage, model, graph, pre_model);

  std::ofstream loss_csv(cfg.out_dir / "loss.csv", std::ios::trunc);
  std::ofstream epoch_csv(cfg.out_dir / "epochs.csv", std::ios::trunc);
  if (!loss_csv || !epoch_csv) throw DataError("cannot write logs under " + cfg.out_dir.string());
  loss_csv << "epoch,step,L_w,L_t,L_m,L_f,total\n" << std::setprecision(12);
  epoch_csv << "epoch,lr,loss,score,validated\n" << std::setprecision(12);

  return train_model(model, pre_model, train, val, cfg, [&](const EpochLog& log, const std::vector<StepLog>& steps) {
    for (const auto& s : steps) {
      loss_csv << s.epoch << ',' << s.step << ',' << s.l_w << ',' << s.l_t << ',' << s.l_m << ',' << s.l_f << ','
               << s.total << '\n';
    }
    epoch_csv << log.epoch << ',' << log.lr << ',' << log.total << ',' << log.score << ',' << log.validated << '\n';
    loss_csv.flush();
    epoch_csv.flush();
    save_checkpoint_dir(cfg.out_dir / "last", cfg.stage, model, graph, pre_model);
    if (log.improved) save_checkpoint_dir(cfg.out_dir / "best", cfg.stage, model, graph, pre_model);
  });
}

metrics::EvalReport run_evaluation(const fs::path& checkpoint_dir, const fs::path& data_dir, const EvalConfig& cfg) {
  const auto ckpt = load_checkpoint_dir(checkpoint_dir);
  const auto samples = data::load_dataset(data_dir);
  try {
    require_sample_shapes(samples, ckpt.model->config());
  } catch (const ConfigError& e) {
    throw DataError(std::string("dataset does not fit the checkpoint: ") + e.what());
  }
  return evaluate_model(*ckpt.model, ckpt.preliminary.get(), samples, cfg);
}

}  // namespace hgf::train
