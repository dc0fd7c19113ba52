// adgauss: data generation, training, rendering, evaluation and gradient
// checking for the single-image Gaussian-splatting pipeline.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "adg/evaluate.hpp"
#include "adg/gradcheck.hpp"
#include "adg/scene_io.hpp"
#include "adg/train.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat application config; mirrors the model, training, loss and data
/// sections of the JSON config file. Flags override file values.
struct AppConfig {
  // model
  int patch = 8;
  int64_t dim = 64;
  int encoder_blocks = 4;
  int matcher_blocks = 2;
  int heads = 4;
  int mlp_ratio = 4;
  std::vector<int64_t> head_channels = {48, 48, 48, 48};
  uint64_t init_seed = 1234;
  bool offset_enabled = true;
  double offset_range_px = 1.0;
  double scale_clip = 5.0;
  // train
  double lr_init = 1e-4;
  double lr_min = 1e-6;
  int64_t total_steps = 2000;
  uint64_t seed = 0;
  double grad_clip = 1.0;
  double depth_dropout = 0.0;
  int batch_size = 1;
  std::string ablation = "full";
  // loss
  double lambda_lpips = 0.05;
  double depth_weight = 1.0;
  // data generation
  uint64_t data_seed = 0;
  int data_scenes = 1;
  int data_frames = 2;
  int data_width = 96;
  int data_height = 64;
  double data_density = 0.05;
  std::string data_pattern = "scanline";
  // paths
  std::string scenes_dir;
};

void reject_unknown(const json& obj, const std::vector<std::string>& allowed,
                    const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError("config: unknown key \"" + where + it.key() + "\"");
  }
}

template <typename T>
void get_if(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

AppConfig load_config_file(const std::string& path) {
  AppConfig c;
  if (path.empty()) return c;
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  reject_unknown(root, {"model", "train", "loss", "data", "scenes_dir"}, "");
  if (root.contains("model")) {
    const json& m = root["model"];
    reject_unknown(m,
                   {"patch", "dim", "encoder_blocks", "matcher_blocks", "heads", "mlp_ratio",
                    "head_channels", "init_seed", "offset_enabled", "offset_range_px",
                    "scale_clip"},
                   "model.");
    get_if(m, "patch", c.patch);
    get_if(m, "dim", c.dim);
    get_if(m, "encoder_blocks", c.encoder_blocks);
    get_if(m, "matcher_blocks", c.matcher_blocks);
    get_if(m, "heads", c.heads);
    get_if(m, "mlp_ratio", c.mlp_ratio);
    get_if(m, "head_channels", c.head_channels);
    get_if(m, "init_seed", c.init_seed);
    get_if(m, "offset_enabled", c.offset_enabled);
    get_if(m, "offset_range_px", c.offset_range_px);
    get_if(m, "scale_clip", c.scale_clip);
  }
  if (root.contains("train")) {
    const json& t = root["train"];
    reject_unknown(t,
                   {"lr_init", "lr_min", "total_steps", "seed", "grad_clip", "batch_size",
                    "ablation", "depth_dropout"},
                   "train.");
    get_if(t, "lr_init", c.lr_init);
    get_if(t, "depth_dropout", c.depth_dropout);
    get_if(t, "lr_min", c.lr_min);
    get_if(t, "total_steps", c.total_steps);
    get_if(t, "seed", c.seed);
    get_if(t, "grad_clip", c.grad_clip);
    get_if(t, "batch_size", c.batch_size);
    get_if(t, "ablation", c.ablation);
  }
  if (root.contains("loss")) {
    const json& l = root["loss"];
    reject_unknown(l, {"lambda_lpips", "depth_weight"}, "loss.");
    get_if(l, "lambda_lpips", c.lambda_lpips);
    get_if(l, "depth_weight", c.depth_weight);
  }
  if (root.contains("data")) {
    const json& d = root["data"];
    reject_unknown(d, {"seed", "scenes", "frames", "width", "height", "density", "pattern"},
                   "data.");
    get_if(d, "seed", c.data_seed);
    get_if(d, "scenes", c.data_scenes);
    get_if(d, "frames", c.data_frames);
    get_if(d, "width", c.data_width);
    get_if(d, "height", c.data_height);
    get_if(d, "density", c.data_density);
    get_if(d, "pattern", c.data_pattern);
  }
  get_if(root, "scenes_dir", c.scenes_dir);
  return c;
}

template <typename T>
adg::ModelConfig<T> model_config(const AppConfig& c) {
  adg::ModelConfig<T> m;
  m.encoder.patch = c.patch;
  m.encoder.dim = c.dim;
  m.encoder.blocks = c.encoder_blocks;
  m.encoder.heads = c.heads;
  m.encoder.mlp_ratio = c.mlp_ratio;
  m.matcher.dim = c.dim;
  m.matcher.blocks = c.matcher_blocks;
  m.matcher.heads = c.heads;
  m.matcher.mlp_ratio = c.mlp_ratio;
  m.head.patch = c.patch;
  m.head.token_dim = c.dim;
  if (c.head_channels.size() != 4)
    throw ConfigError("config: model.head_channels must have 4 entries");
  for (int i = 0; i < 4; ++i) m.head.ch[i] = c.head_channels[static_cast<size_t>(i)];
  m.activation.offset_enabled = c.offset_enabled;
  m.activation.offset_range_px = c.offset_range_px;
  m.activation.scale_clip = c.scale_clip;
  m.ablation = adg::parse_ablation(c.ablation);
  m.init_seed = c.init_seed;
  return m;
}

template <typename T>
adg::TrainConfig<T> train_config(const AppConfig& c) {
  adg::TrainConfig<T> t;
  t.lr_init = c.lr_init;
  t.lr_min = c.lr_min;
  t.total_steps = c.total_steps;
  t.seed = c.seed;
  t.grad_clip = c.grad_clip;
  t.depth_dropout = c.depth_dropout;
  t.batch_size = c.batch_size;
  return t;
}

template <typename T>
adg::LossConfig<T> loss_config(const AppConfig& c) {
  adg::LossConfig<T> l;
  l.lambda_lpips = static_cast<T>(c.lambda_lpips);
  l.depth_weight = static_cast<T>(c.depth_weight);
  return l;
}

int precision_bits() {
  const char* env = std::getenv("ADG_PRECISION");
  if (!env || std::string(env) == "32") return 32;
  if (std::string(env) == "64") return 64;
  throw ConfigError("ADG_PRECISION must be 32 or 64");
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const AppConfig& c, const std::string& out, bool force) {
  const std::filesystem::path root(out);
  if (std::filesystem::exists(root) && !std::filesystem::is_empty(root) && !force)
    throw ConfigError("gen-data: output directory " + out + " is not empty (use --force)");
  std::filesystem::create_directories(root);

  adg::SparsifyPattern pattern;
  if (c.data_pattern == "scanline") pattern = adg::SparsifyPattern::kScanline;
  else if (c.data_pattern == "uniform") pattern = adg::SparsifyPattern::kUniform;
  else throw ConfigError("gen-data: unknown pattern " + c.data_pattern);

  for (int k = 0; k < c.data_scenes; ++k) {
    adg::SyntheticSceneConfig scfg;
    scfg.seed = c.data_seed + static_cast<uint64_t>(k);
    scfg.n_frames = c.data_frames;
    scfg.width = c.data_width;
    scfg.height = c.data_height;
    scfg.lidar_density = c.data_density;
    scfg.pattern = pattern;
    adg::Scene scene = adg::generate_synthetic_scene(scfg);
    char id[32];
    std::snprintf(id, sizeof(id), "scene_%03d", k);
    scene.id = id;
    adg::save_scene(scene, root);
    std::cout << "wrote " << (root / scene.id).string() << " (" << scene.frames.size()
              << " frames)\n";
  }
  return kExitOk;
}

template <typename T>
int cmd_train(const AppConfig& c, const std::string& out, const std::string& log_path) {
  const auto scenes = adg::load_scenes(c.scenes_dir);
  const auto mcfg = model_config<T>(c);
  const auto tcfg = train_config<T>(c);
  const auto lcfg = loss_config<T>(c);

  adg::Model<T> model(mcfg);
  std::ofstream log(log_path.empty() ? out + ".log.jsonl" : log_path);
  if (!log) throw ConfigError("train: cannot open log file");
  const auto records = adg::train(model, scenes, tcfg, lcfg, &log);

  adg::CheckpointData ckpt = adg::params_to_checkpoint(
      model.params(), static_cast<uint64_t>(tcfg.total_steps),
      adg::fnv1a_hash(adg::config_signature(mcfg, tcfg)));
  adg::write_checkpoint(out, ckpt);
  std::cout << "final loss " << static_cast<double>(records.back().report.total) << " after "
            << records.size() << " steps; checkpoint " << out << "\n";
  return kExitOk;
}

template <typename T>
adg::Model<T> load_model(const AppConfig& c, const std::string& ckpt_path) {
  const auto mcfg = model_config<T>(c);
  const auto tcfg = train_config<T>(c);
  adg::Model<T> model(mcfg);
  const adg::CheckpointData ckpt = adg::read_checkpoint(ckpt_path);
  const uint64_t expect = adg::fnv1a_hash(adg::config_signature(mcfg, tcfg));
  if (ckpt.config_hash != expect)
    throw ConfigError("checkpoint " + ckpt_path + " was trained with a different config");
  adg::checkpoint_to_params(ckpt, model.params());
  return model;
}

template <typename T>
int cmd_render(const AppConfig& c, const std::string& ckpt_path, const std::string& scene_id,
               int frame, double shift_x, const std::string& out_prefix) {
  auto model = load_model<T>(c, ckpt_path);
  const auto scenes = adg::load_scenes(c.scenes_dir);
  const adg::Scene* scene = nullptr;
  for (const auto& s : scenes)
    if (s.id == scene_id) scene = &s;
  if (!scene) throw ConfigError("render: no scene " + scene_id + " under " + c.scenes_dir);
  if (frame < 0 || static_cast<size_t>(frame) >= scene->frames.size())
    throw ConfigError("render: frame index " + std::to_string(frame) + " out of range (scene has " +
                      std::to_string(scene->frames.size()) + " frames)");

  const adg::Frame& src = scene->frames[static_cast<size_t>(frame)];
  const adg::CameraModel cam = adg::shift_camera_x(src.camera, shift_x);
  const adg::Tensor<float>* sub = nullptr;
  if (model.config().ablation == adg::Ablation::kNoMatching) {
    const size_t next = static_cast<size_t>(frame) + 1;
    sub = next < scene->frames.size() ? &scene->frames[next].image : &src.image;
  }
  const auto outp = model.render_view(src, cam, sub);

  const std::filesystem::path prefix(out_prefix);
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  adg::write_png(out_prefix + ".png", outp.color.template cast<float>());
  adg::write_adgd(out_prefix + ".depth.adgd", outp.depth.template cast<float>());
  std::cout << "wrote " << out_prefix << ".png and " << out_prefix << ".depth.adgd\n";
  return kExitOk;
}

template <typename T>
int cmd_eval(const AppConfig& c, const std::string& ckpt_path, const std::string& protocol,
             double shift_x, double drop_frac, const std::string& out_csv,
             const std::string& export_dir) {
  auto model = load_model<T>(c, ckpt_path);
  const auto scenes = adg::load_scenes(c.scenes_dir);
  adg::EvalConfig ec;
  ec.protocol = adg::parse_protocol(protocol);
  ec.view_shift_m = shift_x;
  ec.depth_drop_frac = drop_frac;
  ec.seed = c.seed;
  ec.export_dir = export_dir;
  const auto rows = adg::evaluate(model, scenes, ec);
  if (out_csv.empty()) {
    adg::write_metrics_csv(std::cout, rows);
  } else {
    std::ofstream os(out_csv);
    if (!os) throw ConfigError("eval: cannot open " + out_csv);
    adg::write_metrics_csv(os, rows);
    std::cout << "wrote " << out_csv << "\n";
  }
  return kExitOk;
}

int cmd_grad_check(uint64_t seed, const std::string& size, bool corrupt) {
  // Computation is always 64-bit; an explicit 32-bit request is an error.
  if (std::getenv("ADG_PRECISION") && precision_bits() != 64)
    throw ConfigError("grad-check requires ADG_PRECISION=64");
  int h = 32, w = 48;
  if (!size.empty() && std::sscanf(size.c_str(), "%dx%d", &h, &w) != 2)
    throw ConfigError("grad-check: --size must be HxW");

  adg::GradCheckReport rep = adg::grad_check_renderer(seed, 8, 8, 10, corrupt);
  const adg::GradCheckReport pipe = adg::grad_check_pipeline(seed, h, w, 48, corrupt);
  rep.groups.insert(rep.groups.end(), pipe.groups.begin(), pipe.groups.end());
  rep.print(std::cout);
  const bool ok = rep.pass(1e-3);
  std::cout << (ok ? "PASS" : "FAIL") << " (max rel err " << rep.max_rel_err() << ")\n";
  return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feed-forward 3D Gaussian splatting from a posed image + sparse depth"};
  app.require_subcommand(1);

  std::string config_path, out, log_path, scenes_dir, scene_id, protocol = "next_frame";
  std::string size, export_dir, out_csv;
  bool force = false, corrupt = false;
  int frame = 0;
  double shift_x = 0.0, drop_frac = 0.0;

  // Flag overrides applied on top of the config file. Defaults shown by
  // --help are the config defaults.
  AppConfig defaults;
  std::string ablation = defaults.ablation;
  int64_t steps = defaults.total_steps;
  uint64_t seed = defaults.seed;
  uint64_t data_seed = defaults.data_seed;
  int n_scenes = defaults.data_scenes, n_frames = defaults.data_frames;
  double density = defaults.data_density;
  int width = defaults.data_width, height = defaults.data_height;
  std::string pattern = defaults.data_pattern;

  auto* gen = app.add_subcommand("gen-data", "Generate synthetic scene directories");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--seed", data_seed, "Base scene seed")->capture_default_str();
  gen->add_option("--scenes", n_scenes, "Number of scenes")->capture_default_str();
  gen->add_option("--frames", n_frames, "Frames per scene")->capture_default_str();
  gen->add_option("--density", density, "Sparse depth density in (0,1]")->capture_default_str();
  gen->add_option("--width", width, "Image width")->capture_default_str();
  gen->add_option("--height", height, "Image height")->capture_default_str();
  gen->add_option("--pattern", pattern, "Sparsify pattern: scanline|uniform")->capture_default_str();
  gen->add_flag("--force", force, "Overwrite a non-empty output directory");

  auto* tr = app.add_subcommand("train", "Train a model on a scene directory");
  tr->add_option("--config", config_path, "JSON config file");
  tr->add_option("--scenes", scenes_dir, "Scene directory root");
  tr->add_option("--out", out, "Output checkpoint path")->required();
  tr->add_option("--log", log_path, "Training log path (default <ckpt>.log.jsonl)");
  tr->add_option("--ablation", ablation,
                 "Variant: full|no_dpe|no_multiscale|no_dpe_multiscale|no_matching")
      ->capture_default_str();
  tr->add_option("--steps", steps, "Total optimization steps")->capture_default_str();
  tr->add_option("--seed", seed, "Training seed")->capture_default_str();

  std::string ckpt_path;
  auto* rd = app.add_subcommand("render", "Render a frame from a checkpoint");
  rd->add_option("--config", config_path, "JSON config file");
  rd->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
  rd->add_option("--scenes", scenes_dir, "Scene directory root");
  rd->add_option("--scene", scene_id, "Scene id")->required();
  rd->add_option("--frame", frame, "Frame index")->capture_default_str();
  rd->add_option("--shift-x", shift_x, "Lateral camera shift in meters")->capture_default_str();
  rd->add_option("--out", out, "Output path prefix")->required();
  rd->add_option("--ablation", ablation, "Variant the checkpoint was trained with")
      ->capture_default_str();
  rd->add_option("--steps", steps, "total_steps the checkpoint was trained with")
      ->capture_default_str();
  rd->add_option("--seed", seed, "Seed the checkpoint was trained with")->capture_default_str();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint under a protocol");
  ev->add_option("--config", config_path, "JSON config file");
  ev->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
  ev->add_option("--scenes", scenes_dir, "Scene directory root");
  ev->add_option("--protocol", protocol, "next_frame|skip_frame|view_shift|depth_drop")
      ->capture_default_str();
  ev->add_option("--shift-x", shift_x, "view_shift displacement in meters")->capture_default_str();
  ev->add_option("--drop-frac", drop_frac, "depth_drop fraction in [0,1]")->capture_default_str();
  ev->add_option("--out", out_csv, "Output CSV path (default: stdout)");
  ev->add_option("--export-dir", export_dir, "Directory for no-reference renders");
  ev->add_option("--ablation", ablation, "Variant the checkpoint was trained with")
      ->capture_default_str();
  ev->add_option("--steps", steps, "total_steps the checkpoint was trained with")
      ->capture_default_str();
  ev->add_option("--seed", seed, "Seed the checkpoint was trained with")->capture_default_str();

  auto* gc = app.add_subcommand("grad-check", "Verify analytic gradients vs finite differences");
  uint64_t gc_seed = 7;
  gc->add_option("--seed", gc_seed, "Random seed")->capture_default_str();
  gc->add_option("--size", size, "Pipeline check resolution HxW (default 32x48)");
  gc->add_flag("--corrupt", corrupt, "Deliberately corrupt the backward pass (must fail)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    AppConfig cfg = load_config_file(config_path);
    // Flags win over the config file.
    auto apply_overrides = [&](CLI::App* sub) {
      if (sub->count("--ablation")) cfg.ablation = ablation;
      if (sub->count("--steps")) cfg.total_steps = steps;
      if (sub->count("--seed")) cfg.seed = seed;
      if (sub->count("--scenes")) cfg.scenes_dir = scenes_dir;
    };

    if (gen->parsed()) {
      if (gen->count("--seed")) cfg.data_seed = data_seed;
      if (gen->count("--scenes")) cfg.data_scenes = n_scenes;
      if (gen->count("--frames")) cfg.data_frames = n_frames;
      if (gen->count("--density")) cfg.data_density = density;
      if (gen->count("--width")) cfg.data_width = width;
      if (gen->count("--height")) cfg.data_height = height;
      if (gen->count("--pattern")) cfg.data_pattern = pattern;
      return cmd_gen_data(cfg, out, force);
    }
    if (gc->parsed()) return cmd_grad_check(gc_seed, size, corrupt);

    const int bits = precision_bits();
    if (tr->parsed()) {
      apply_overrides(tr);
      if (cfg.scenes_dir.empty()) throw ConfigError("train: --scenes (or scenes_dir) required");
      return bits == 64 ? cmd_train<double>(cfg, out, log_path)
                        : cmd_train<float>(cfg, out, log_path);
    }
    if (rd->parsed()) {
      apply_overrides(rd);
      if (cfg.scenes_dir.empty()) throw ConfigError("render: --scenes (or scenes_dir) required");
      return bits == 64 ? cmd_render<double>(cfg, ckpt_path, scene_id, frame, shift_x, out)
                        : cmd_render<float>(cfg, ckpt_path, scene_id, frame, shift_x, out);
    }
    if (ev->parsed()) {
      apply_overrides(ev);
      if (cfg.scenes_dir.empty()) throw ConfigError("eval: --scenes (or scenes_dir) required");
      return bits == 64
                 ? cmd_eval<double>(cfg, ckpt_path, protocol, shift_x, drop_frac, out_csv, export_dir)
                 : cmd_eval<float>(cfg, ckpt_path, protocol, shift_x, drop_frac, out_csv, export_dir);
    }
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
