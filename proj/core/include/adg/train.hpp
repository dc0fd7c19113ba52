#pragma once

#include <chrono>
#include <ostream>
#include <sstream>

#include "adg/checkpoint.hpp"
#include "adg/model.hpp"
#include "adg/optimizer.hpp"
#include "adg/scene.hpp"

namespace adg {

template <typename T>
struct TrainConfig {
  double lr_init = 1e-4;
  double lr_min = 1e-6;
  AdamConfig<T> adam;
  int batch_size = 1;
  int64_t total_steps = 2000;
  uint64_t seed = 0;
  double grad_clip = 1.0;
  // Input augmentation: each step drops a uniformly drawn fraction in
  // [0, depth_dropout] of the source frame's sparse depth samples, making
  // the model robust to test-time depth degradation. 0 disables it.
  double depth_dropout = 0.0;

  void validate() const {
    if (total_steps < 1) throw std::invalid_argument("TrainConfig: total_steps must be >= 1");
    if (lr_init <= 0) throw std::invalid_argument("TrainConfig: lr_init must be > 0");
    if (batch_size != 1) throw std::invalid_argument("TrainConfig: only batch_size 1 is supported");
    if (depth_dropout < 0.0 || depth_dropout >= 1.0)
      throw std::invalid_argument("TrainConfig: depth_dropout must be in [0, 1)");
  }
};

/// Canonical text form of the model + schedule configuration; its FNV-1a
/// hash binds checkpoints to the config they were trained with.
template <typename T>
std::string config_signature(const ModelConfig<T>& m, const TrainConfig<T>& t) {
  std::ostringstream os;
  os << "enc:" << m.encoder.patch << "," << m.encoder.dim << "," << m.encoder.blocks << ","
     << m.encoder.heads << "," << m.encoder.mlp_ratio << ";match:" << m.matcher.blocks << ","
     << m.matcher.heads << "," << m.matcher.mlp_ratio << ";head:" << m.head.ch[0] << ","
     << m.head.ch[1] << "," << m.head.ch[2] << "," << m.head.ch[3]
     << ";act:" << m.activation.offset_enabled << "," << m.activation.offset_range_px << ","
     << m.activation.scale_clip << ";abl:" << ablation_name(m.ablation)
     << ";init:" << m.init_seed << ";lr:" << t.lr_init << "," << t.lr_min
     << ";steps:" << t.total_steps << ";seed:" << t.seed << ";clip:" << t.grad_clip
     << ";ddrop:" << t.depth_dropout;
  return os.str();
}

template <typename T>
CheckpointData params_to_checkpoint(const ParamStore<T>& store, uint64_t step,
                                    uint64_t config_hash) {
  CheckpointData ckpt;
  ckpt.step = step;
  ckpt.config_hash = config_hash;
  for (const auto& p : store.all()) {
    ckpt.tensors[p->name] = p->value.template cast<float>();
    ckpt.tensors["opt.m." + p->name] = p->adam_m.template cast<float>();
    ckpt.tensors["opt.v." + p->name] = p->adam_v.template cast<float>();
  }
  return ckpt;
}

template <typename T>
void checkpoint_to_params(const CheckpointData& ckpt, ParamStore<T>& store) {
  for (auto& p : store.all()) {
    const auto it = ckpt.tensors.find(p->name);
    if (it == ckpt.tensors.end())
      throw std::invalid_argument("checkpoint: missing tensor " + p->name);
    if (it->second.shape != p->value.shape)
      throw std::invalid_argument("checkpoint: shape mismatch for " + p->name + ": " +
                                  shape_str(it->second.shape) + " vs " +
                                  shape_str(p->value.shape));
    p->value = it->second.template cast<T>();
    const auto im = ckpt.tensors.find("opt.m." + p->name);
    const auto iv = ckpt.tensors.find("opt.v." + p->name);
    if (im != ckpt.tensors.end()) p->adam_m = im->second.template cast<T>();
    if (iv != ckpt.tensors.end()) p->adam_v = iv->second.template cast<T>();
  }
}

template <typename T>
struct TrainStepRecord {
  int64_t step = 0;
  double lr = 0;
  LossReport<T> report;
  double grad_norm = 0;
  double wall_s = 0;
};

/// Per-step frame sampling: deterministic in (seed, step) alone so resumed
/// runs see the same sequence.
inline std::pair<size_t, size_t> sample_pair(uint64_t seed, int64_t step,
                                             const std::vector<Scene>& scenes) {
  Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(step + 1)));
  const size_t s = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(scenes.size())));
  const size_t t = static_cast<size_t>(
      rng.uniform_int(static_cast<int64_t>(scenes[s].frames.size() - 1)));
  return {s, t};
}

/// Runs the optimization loop. Writes one JSON object per step to `log`
/// when given. Throws std::runtime_error with a diagnostic dump if the loss
/// goes non-finite.
template <typename T>
std::vector<TrainStepRecord<T>> train(Model<T>& model, const std::vector<Scene>& scenes,
                                      const TrainConfig<T>& cfg, const LossConfig<T>& loss_cfg,
                                      std::ostream* log = nullptr) {
  cfg.validate();
  if (scenes.empty()) throw std::invalid_argument("train: no scenes");
  for (const auto& s : scenes)
    if (s.frames.size() < 2)
      throw std::invalid_argument("train: scene " + s.id + " has fewer than 2 frames");

  const bool no_matching = model.config().ablation == Ablation::kNoMatching;
  std::vector<TrainStepRecord<T>> records;
  records.reserve(static_cast<size_t>(cfg.total_steps));
  const auto t_start = std::chrono::steady_clock::now();

  for (int64_t step = 0; step < cfg.total_steps; ++step) {
    const auto [si, fi] = sample_pair(cfg.seed, step, scenes);
    const Scene& scene = scenes[si];
    const Frame* src_ptr = &scene.frames[fi];
    const Frame& target = scene.frames[fi + 1];

    Frame augmented;
    if (cfg.depth_dropout > 0.0) {
      // Deterministic in (seed, step), like frame sampling.
      Rng drng(cfg.seed ^ 0xc2b2ae3d27d4eb4fULL ^
               (0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(step + 1)));
      const double frac = drng.uniform() * cfg.depth_dropout;
      if (frac > 0.0) {
        augmented = scene.frames[fi];
        augmented.sparse_depth =
            sparsify_depth(augmented.sparse_depth, 1.0 - frac, SparsifyPattern::kUniform,
                           drng.next_u64());
        src_ptr = &augmented;
      }
    }
    const Frame& src = *src_ptr;

    model.params().zero_grad();
    Tape<T> tape;
    const auto res = model.forward_loss(tape, src, target, loss_cfg,
                                        no_matching ? &target.image : nullptr);
    if (!std::isfinite(static_cast<double>(res.report.total))) {
      std::ostringstream os;
      os << "train: non-finite loss at step " << step << " (scene " << scene.id << ", frames "
         << fi << "->" << fi + 1 << "): total=" << res.report.total << " mse=" << res.report.mse
         << " perceptual=" << res.report.perceptual
         << " depth_smoothness=" << res.report.depth_smoothness;
      throw std::runtime_error(os.str());
    }
    tape.backward(res.loss);

    const T norm = clip_global_norm(model.params(), static_cast<T>(cfg.grad_clip));
    const double lr = cosine_lr(cfg.lr_init, cfg.lr_min, step, cfg.total_steps);
    adam_step(model.params(), static_cast<T>(lr), cfg.adam, step + 1);

    TrainStepRecord<T> rec;
    rec.step = step;
    rec.lr = lr;
    rec.report = res.report;
    rec.grad_norm = static_cast<double>(norm);
    rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (log) {
      (*log) << "{\"step\":" << rec.step << ",\"lr\":" << rec.lr
             << ",\"total\":" << static_cast<double>(rec.report.total)
             << ",\"mse\":" << static_cast<double>(rec.report.mse)
             << ",\"perceptual\":" << static_cast<double>(rec.report.perceptual)
             << ",\"depth_smoothness\":" << static_cast<double>(rec.report.depth_smoothness)
             << ",\"grad_norm\":" << rec.grad_norm << ",\"wall_s\":" << rec.wall_s << "}\n";
    }
    records.push_back(rec);
  }
  return records;
}

}  // namespace adg
