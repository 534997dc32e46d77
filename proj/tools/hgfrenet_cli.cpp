// hgfrenet: data generation, training, evaluation and diagnostics.
// Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric divergence.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hgfrenet/data.hpp"
#include "hgfrenet/error.hpp"
#include "hgfrenet/frequency.hpp"
#include "hgfrenet/harness.hpp"
#include "hgfrenet/metrics.hpp"
#include "hgfrenet/network.hpp"
#include "hgfrenet/skeleton.hpp"

namespace fs = std::filesystem;
using namespace hgf;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

bool parse_double(const std::string& s, double& v) {
  try {
    std::size_t used = 0;
    v = std::stod(s, &used);
    return used == s.size() || s.find_first_not_of(" \t\r", used) == std::string::npos;
  } catch (const std::exception&) {
    return false;
  }
}

// Rows are frames, columns are signals; a non-numeric first line is a header.
Table read_table(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path.string());
  Table t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    std::vector<double> row;
    bool numeric = true;
    for (const auto& c : cells) {
      double v = 0.0;
      if (!parse_double(c, v)) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (t.rows.empty() && t.header.empty()) {
        t.header = cells;
        continue;
      }
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": non-numeric value");
    }
    if (!t.rows.empty() && row.size() != t.rows.front().size()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(t.rows.front().size()) + " columns, found " + std::to_string(row.size()));
    }
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw DataError(path.string() + " contains no numeric rows");
  if (!t.header.empty() && t.header.size() != t.rows.front().size()) {
    throw DataError(path.string() + ": header and data column counts differ");
  }
  if (t.header.empty()) {
    for (std::size_t c = 0; c < t.rows.front().size(); ++c) t.header.push_back("c" + std::to_string(c));
  }
  return t;
}

// [frames, columns] tensor from the first `frames` rows.
Tensor table_tensor(const Table& t, std::size_t frames) {
  if (frames == 0) frames = t.rows.size();
  if (frames > t.rows.size()) {
    throw DataError("requested T=" + std::to_string(frames) + " but the input has " + std::to_string(t.rows.size()) +
                    " rows");
  }
  const std::size_t cols = t.rows.front().size();
  Tensor out(Shape{frames, cols});
  for (std::size_t r = 0; r < frames; ++r) std::copy(t.rows[r].begin(), t.rows[r].end(), out.ptr() + r * cols);
  return out;
}

void write_matrix(std::ostream& os, const Tensor& m, const std::vector<std::string>& header,
                  const std::string& index_name) {
  os << std::setprecision(12);
  os << index_name;
  for (const auto& h : header) os << ',' << h;
  os << '\n';
  const std::size_t cols = m.dim(1);
  for (std::size_t r = 0; r < m.dim(0); ++r) {
    os << r;
    for (std::size_t c = 0; c < cols; ++c) os << ',' << m[r * cols + c];
    os << '\n';
  }
}

// Writes to `path`, or stdout when it is empty or "-".
template <typename Fn>
void emit(const std::string& path, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    return;
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write " + path);
  fn(f);
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

skeleton::SkeletonGraph skeleton_or_default(const std::string& path) {
  if (path.empty()) return skeleton::h36m_skeleton();
  if (!fs::exists(path)) throw ConfigError("skeleton file " + path + " does not exist");
  return skeleton::load_skeleton(path);
}

// --- gen-data ---------------------------------------------------------------

struct GenArgs {
  std::string out;
  data::DatasetConfig cfg;
};

void run_gen_data(const GenArgs& a) {
  const auto graph = skeleton::h36m_skeleton();
  const auto samples = data::generate_dataset(graph, data::h36m_rest_pose(), a.cfg);
  data::save_dataset(samples, a.cfg, a.out);
  std::cout << "wrote " << samples.size() << " sequences (T=" << a.cfg.frames << ", N=" << graph.joint_count
            << ") to " << a.out << '\n';
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string config, stage, data, out, preliminary, skeleton;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> frames, dim, depth, hops, epochs, batch_size;
  std::optional<double> lambda_f, lr, lr_decay;
  bool clip = false, verbose = false, no_noise = false;
};

void run_train(const TrainArgs& a) {
  nlohmann::json cfg_json = nlohmann::json::object();
  if (!a.config.empty()) cfg_json = read_json(a.config);
  if (!cfg_json.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : cfg_json.items()) {
    if (key != "model" && key != "preliminary_model" && key != "train" && key != "skeleton") {
      throw ConfigError("unknown config section '" + key + "'");
    }
  }

  train::TrainConfig tc;
  if (cfg_json.contains("train")) tc = train::train_config_from_json(cfg_json["train"]);
  if (!a.stage.empty()) tc.stage = train::stage_from_name(a.stage);
  if (a.seed) tc.seed = *a.seed;
  if (a.epochs) tc.epochs = *a.epochs;
  if (a.batch_size) tc.batch_size = *a.batch_size;
  if (a.lr) tc.lr = *a.lr;
  if (a.lr_decay) tc.lr_decay = *a.lr_decay;
  if (a.clip) tc.clip_grad = true;
  if (a.no_noise) tc.noise_during_training = false;
  if (a.verbose) tc.verbose = true;
  if (!a.data.empty()) tc.data_dir = a.data;
  if (!a.out.empty()) tc.out_dir = a.out;
  if (!a.preliminary.empty()) tc.preliminary_checkpoint = a.preliminary;

  net::ModelConfig mc;
  if (cfg_json.contains("model")) mc = net::config_from_json(cfg_json["model"]);
  if (tc.stage == train::Stage::Preliminary && cfg_json.contains("preliminary_model")) {
    mc = net::config_from_json(cfg_json["preliminary_model"], mc);
  }
  if (a.frames) mc.frames = *a.frames;
  if (a.dim) mc.embed_dim = *a.dim;
  if (a.depth) mc.depth = *a.depth;
  if (a.hops) {
    mc.hops = *a.hops;
    if (mc.hop_weights.size() != mc.hops) mc.hop_weights.assign(mc.hops, 1.0);
  }
  if (a.lambda_f) mc.lambda_f = *a.lambda_f;

  std::string skel = a.skeleton;
  if (skel.empty() && cfg_json.contains("skeleton")) skel = cfg_json["skeleton"].get<std::string>();
  const auto graph = skeleton_or_default(skel);
  mc.joints = graph.joint_count;

  const auto result = train::run_training(tc, mc, graph);
  nlohmann::json summary = {{"stage", train::stage_name(tc.stage)},
                            {"epochs", result.epochs.size()},
                            {"best_epoch", result.best_epoch},
                            {"best_score", result.best_score},
                            {"validated", !result.epochs.empty() && result.epochs.back().validated},
                            {"final_loss", result.epochs.empty() ? 0.0 : result.epochs.back().total},
                            {"out_dir", tc.out_dir.string()}};
  std::cout << summary.dump(2) << '\n';
}

// --- eval ---------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, data, json_out, csv_out;
  bool no_scale = false, central = false, pck = false, noise = false;
  std::uint64_t seed = 0;
};

void run_eval(const EvalArgs& a) {
  train::EvalConfig cfg;
  cfg.metric.procrustes_scale = !a.no_scale;
  cfg.metric.pck = a.pck;
  cfg.central_frame = a.central;
  cfg.noise = a.noise;
  cfg.noise_seed = a.seed;
  const auto report = train::run_evaluation(a.checkpoint, a.data, cfg);
  const std::string text = metrics::to_json(report).dump(2) + "\n";
  if (a.json_out.empty()) {
    std::cout << text;
  } else {
    emit(a.json_out, [&](std::ostream& os) { os << text; });
  }
  if (!a.csv_out.empty()) emit(a.csv_out, [&](std::ostream& os) { os << metrics::per_action_csv(report); });
}

// --- dct / smooth -------------------------------------------------------------

struct DctArgs {
  std::string in, out;
  std::size_t frames = 0;
  std::size_t keep = 0;
};

void run_dct(const DctArgs& a) {
  const auto table = read_table(a.in);
  const Tensor x = table_tensor(table, a.frames);
  const Tensor c = freq::dct_forward(x, freq::dct_basis(x.dim(0)));
  emit(a.out, [&](std::ostream& os) { write_matrix(os, c, table.header, "u"); });
}

void run_smooth(const DctArgs& a) {
  const auto table = read_table(a.in);
  const Tensor x = table_tensor(table, a.frames);
  const std::size_t frames = x.dim(0);
  if (a.keep == 0 || a.keep > frames) {
    throw ConfigError("--keep must be in [1, " + std::to_string(frames) + "], got " + std::to_string(a.keep));
  }
  const auto& basis = freq::dct_basis(frames);
  Tensor c = freq::dct_forward(x, basis);
  const std::size_t cols = c.dim(1);
  for (std::size_t u = a.keep; u < frames; ++u) {
    for (std::size_t k = 0; k < cols; ++k) c[u * cols + k] = 0.0;
  }
  const Tensor y = freq::dct_inverse(c, basis);
  emit(a.out, [&](std::ostream& os) { write_matrix(os, y, table.header, "frame"); });
}

// --- inspect-adjacency ----------------------------------------------------------

struct AdjArgs {
  std::string skeleton;
  std::size_t hops = 2;
  std::vector<double> weights;
  bool row_normalize = false;
};

void print_square(const std::string& title, const Tensor& m, const std::vector<std::string>& names) {
  std::cout << "# " << title << '\n';
  write_matrix(std::cout, m, names, "joint");
}

void run_inspect_adjacency(const AdjArgs& a) {
  const auto graph = skeleton_or_default(a.skeleton);
  skeleton::validate(graph);
  if (a.hops == 0) throw ConfigError("--hops must be at least 1");
  std::vector<double> weights = a.weights.empty() ? std::vector<double>(a.hops, 1.0) : a.weights;
  const auto hops = skeleton::shortest_path_hops(graph);
  std::vector<std::string> names = graph.joint_names;
  if (names.size() != graph.joint_count) {
    names.clear();
    for (std::size_t i = 0; i < graph.joint_count; ++i) names.push_back(std::to_string(i));
  }
  const auto hybrid =
      skeleton::make_hybrid_adjacency(graph, static_cast<int>(a.hops), weights, a.row_normalize);
  print_square("symmetric", skeleton::symmetric_matrix(graph), names);
  for (std::size_t k = 1; k <= a.hops; ++k) {
    print_square("hop " + std::to_string(k), skeleton::khop_adjacency(hops, static_cast<int>(k)), names);
  }
  print_square("hybrid", hybrid.skeletal, names);
}

// --- export-trajectory -------------------------------------------------------------

struct ExportArgs {
  std::string in, out, checkpoint, data;
  std::size_t index = 0;
};

void run_export_trajectory(const ExportArgs& a) {
  const char axes[] = {'x', 'y', 'z', 'u', 'v'};
  const auto names = skeleton::h36m_skeleton().joint_names;
  auto joint_name = [&](std::size_t j) { return j < names.size() ? names[j] : std::to_string(j); };

  if (!a.checkpoint.empty()) {
    if (a.data.empty()) throw ConfigError("--checkpoint needs --data");
    const auto ckpt = train::load_checkpoint_dir(a.checkpoint);
    const auto samples = data::load_dataset(a.data);
    if (a.index >= samples.size()) {
      throw ConfigError("--index " + std::to_string(a.index) + " out of range (" + std::to_string(samples.size()) +
                        " sequences)");
    }
    const std::vector<data::Sample> one{samples[a.index]};
    const Tensor pred = train::predict_samples(*ckpt.model, ckpt.preliminary.get(), one).front();
    const Tensor& gt = one.front().pose3d.values;
    emit(a.out, [&](std::ostream& os) {
      os << std::setprecision(9) << "frame,joint,name,axis,target,prediction\n";
      for (std::size_t t = 0; t < gt.dim(0); ++t) {
        for (std::size_t j = 0; j < gt.dim(1); ++j) {
          for (std::size_t c = 0; c < 3; ++c) {
            const std::size_t o = (t * gt.dim(1) + j) * 3 + c;
            os << t << ',' << j << ',' << joint_name(j) << ',' << axes[c] << ',' << gt[o] << ',' << pred[o] << '\n';
          }
        }
      }
    });
    return;
  }

  if (a.in.empty()) throw ConfigError("export-trajectory needs --in or --checkpoint/--data");
  const auto seq = data::read_sequence(a.in);
  const std::size_t ch = seq.channels();
  emit(a.out, [&](std::ostream& os) {
    os << std::setprecision(9) << "frame,joint,name,axis,value\n";
    for (std::size_t t = 0; t < seq.frames(); ++t) {
      for (std::size_t j = 0; j < seq.joints(); ++j) {
        for (std::size_t c = 0; c < ch; ++c) {
          // 2D channels are u, v; 5-channel inputs are u, v, x, y, z.
          const char axis = ch == 3 ? axes[c] : (c < 2 ? axes[3 + c] : axes[c - 2]);
          os << t << ',' << j << ',' << joint_name(j) << ',' << axis << ',' << seq.values[(t * seq.joints() + j) * ch + c]
             << '\n';
        }
      }
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hgfrenet: two-stage graph-attention 3D pose lifting"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--count", gen.cfg.count, "Number of sequences")->capture_default_str();
  gen_cmd->add_option("--frames", gen.cfg.frames, "Frames per sequence")->capture_default_str();
  gen_cmd->add_option("--fps", gen.cfg.fps, "Frame rate")->capture_default_str();
  gen_cmd->add_option("--seed", gen.cfg.seed, "Seed of sequence 0")->capture_default_str();
  gen_cmd->add_option("--depth", gen.cfg.depth, "Camera distance to the root")->capture_default_str();
  gen_cmd->add_option("--jitter", gen.cfg.jitter_2d, "Std of Gaussian noise on 2D inputs")->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the preliminary or main model");
  train_cmd->add_option("--config", tr.config, "JSON with model / preliminary_model / train / skeleton sections");
  train_cmd->add_option("--stage", tr.stage, "preliminary or main");
  train_cmd->add_option("--data", tr.data, "Dataset directory");
  train_cmd->add_option("--out", tr.out, "Output directory");
  train_cmd->add_option("--preliminary", tr.preliminary, "Preliminary checkpoint directory (stage main)");
  train_cmd->add_option("--skeleton", tr.skeleton, "Skeleton JSON (default: 17-joint preset)");
  train_cmd->add_option("--seed", tr.seed, "Seed");
  train_cmd->add_option("--frames", tr.frames, "Frames T");
  train_cmd->add_option("--dim", tr.dim, "Embedding dimension C");
  train_cmd->add_option("--depth", tr.depth, "Number of spatial/temporal block pairs");
  train_cmd->add_option("--hops", tr.hops, "Hop count K");
  train_cmd->add_option("--lambda-f", tr.lambda_f, "Frequency loss weight");
  train_cmd->add_option("--epochs", tr.epochs, "Epochs");
  train_cmd->add_option("--batch-size", tr.batch_size, "Batch size");
  train_cmd->add_option("--lr", tr.lr, "Initial learning rate");
  train_cmd->add_option("--lr-decay", tr.lr_decay, "Learning-rate decay per epoch");
  train_cmd->add_flag("--clip-grad", tr.clip, "Clip gradients at the configured global norm");
  train_cmd->add_flag("--no-train-noise", tr.no_noise, "Do not noise the preliminary output during main training");
  train_cmd->add_flag("--verbose", tr.verbose, "Log every epoch to stderr");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--json", ev.json_out, "Write the report JSON here instead of stdout");
  eval_cmd->add_option("--csv", ev.csv_out, "Write the per-action CSV here");
  eval_cmd->add_flag("--no-scale", ev.no_scale, "Rigid Procrustes alignment without scale");
  eval_cmd->add_flag("--central-frame", ev.central, "Score only the central frame of each sequence");
  eval_cmd->add_flag("--pck", ev.pck, "Also report PCK and AUC");
  eval_cmd->add_flag("--noise", ev.noise, "Noise the preliminary output before the main model");
  eval_cmd->add_option("--seed", ev.seed, "Seed for --noise");

  DctArgs dct;
  auto* dct_cmd = app.add_subcommand("dct", "DCT coefficients of each CSV column");
  dct_cmd->add_option("--in", dct.in, "CSV, one row per frame")->required();
  dct_cmd->add_option("--T", dct.frames, "Frames to transform (default: all rows)");
  dct_cmd->add_option("--out", dct.out, "Output CSV (default stdout)");

  DctArgs smooth;
  auto* smooth_cmd = app.add_subcommand("smooth", "Reconstruct each CSV column from its lowest frequencies");
  smooth_cmd->add_option("--in", smooth.in, "CSV, one row per frame")->required();
  smooth_cmd->add_option("--keep", smooth.keep, "Number of coefficients kept")->required();
  smooth_cmd->add_option("--T", smooth.frames, "Frames to use (default: all rows)");
  smooth_cmd->add_option("--out", smooth.out, "Output CSV (default stdout)");

  AdjArgs adj;
  auto* adj_cmd = app.add_subcommand("inspect-adjacency", "Print symmetric, k-hop and hybrid matrices as CSV");
  adj_cmd->add_option("--skeleton", adj.skeleton, "Skeleton JSON (default: 17-joint preset)");
  adj_cmd->add_option("--hops", adj.hops, "Hop count K")->capture_default_str();
  adj_cmd->add_option("--weights", adj.weights, "Per-hop weights (default: all ones)")->delimiter(',');
  adj_cmd->add_flag("--row-normalize", adj.row_normalize, "Divide every row by its sum");

  ExportArgs ex;
  auto* ex_cmd = app.add_subcommand("export-trajectory", "Per-joint, per-axis trajectories as long-form CSV");
  ex_cmd->add_option("--in", ex.in, "Sequence file (.pseq)");
  ex_cmd->add_option("--checkpoint", ex.checkpoint, "Export prediction and target for a dataset sequence");
  ex_cmd->add_option("--data", ex.data, "Dataset directory (with --checkpoint)");
  ex_cmd->add_option("--index", ex.index, "Sequence index (with --checkpoint)");
  ex_cmd->add_option("--out", ex.out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen_cmd) run_gen_data(gen);
    if (*train_cmd) run_train(tr);
    if (*eval_cmd) run_eval(ev);
    if (*dct_cmd) run_dct(dct);
    if (*smooth_cmd) run_smooth(smooth);
    if (*adj_cmd) run_inspect_adjacency(adj);
    if (*ex_cmd) run_export_trajectory(ex);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const StructuralError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
