#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>

#include "adg/metrics.hpp"
#include "adg/model.hpp"
#include "adg/scene.hpp"
#include "adg/scene_io.hpp"
#include "adg/train.hpp"

namespace adg {

enum class Protocol { kNextFrame, kSkipFrame, kViewShift, kDepthDrop };

inline const char* protocol_name(Protocol p) {
  switch (p) {
    case Protocol::kNextFrame: return "next_frame";
    case Protocol::kSkipFrame: return "skip_frame";
    case Protocol::kViewShift: return "view_shift";
    case Protocol::kDepthDrop: return "depth_drop";
  }
  return "?";
}

inline Protocol parse_protocol(const std::string& s) {
  if (s == "next_frame") return Protocol::kNextFrame;
  if (s == "skip_frame") return Protocol::kSkipFrame;
  if (s == "view_shift") return Protocol::kViewShift;
  if (s == "depth_drop") return Protocol::kDepthDrop;
  throw std::invalid_argument("unknown protocol: " + s);
}

struct MetricsRow {
  std::string scene;
  std::string protocol;
  double psnr = 0;
  double ssim = 0;
  std::optional<double> lpips;
  bool no_reference = false;  // view_shift without a GT view
};

struct EvalConfig {
  Protocol protocol = Protocol::kNextFrame;
  double view_shift_m = 0.0;   // lateral displacement for view_shift
  double depth_drop_frac = 0.0;
  uint64_t seed = 0;           // drives the test-time depth drop
  std::filesystem::path export_dir;  // when set, renders are written here
};

/// Camera translated by dx meters along its own x axis (pose change only).
inline CameraModel shift_camera_x(const CameraModel& cam, double dx) {
  CameraModel out = cam;
  // pc = R p + t; moving the center by R^T (dx,0,0) subtracts dx from t.x.
  out.w2c(0, 3) -= dx;
  return out;
}

inline void append_metrics(MetricsRow& row, const Tensor<float>& pred,
                           const Tensor<float>& gt, int* count) {
  row.psnr += psnr(pred, gt);
  row.ssim += ssim(pred, gt);
  ++*count;
}

/// Runs one protocol over every scene; each row aggregates the mean over
/// all applicable frame pairs of that scene.
template <typename T>
std::vector<MetricsRow> evaluate(Model<T>& model, const std::vector<Scene>& scenes,
                                 const EvalConfig& cfg) {
  const bool no_matching = model.config().ablation == Ablation::kNoMatching;
  std::vector<MetricsRow> rows;
  for (const auto& scene : scenes) {
    MetricsRow row;
    row.scene = scene.id;
    row.protocol = protocol_name(cfg.protocol);
    int count = 0;

    auto render_from = [&](const Frame& src, const CameraModel& target_cam,
                           const Frame* target) {
      const Tensor<float>* sub = nullptr;
      if (no_matching) {
        if (!target)
          throw std::invalid_argument("evaluate: no_matching needs a target frame as input");
        sub = &target->image;
      }
      return model.render_view(src, target_cam, sub);
    };

    switch (cfg.protocol) {
      case Protocol::kNextFrame:
        for (size_t t = 0; t + 1 < scene.frames.size(); ++t) {
          const auto out = render_from(scene.frames[t], scene.frames[t + 1].camera,
                                       &scene.frames[t + 1]);
          append_metrics(row, out.color.template cast<float>(), scene.frames[t + 1].image, &count);
        }
        break;
      case Protocol::kSkipFrame:
        for (size_t t = 0; t + 2 < scene.frames.size(); ++t) {
          const auto out = render_from(scene.frames[t], scene.frames[t + 2].camera,
                                       &scene.frames[t + 2]);
          append_metrics(row, out.color.template cast<float>(), scene.frames[t + 2].image, &count);
        }
        break;
      case Protocol::kViewShift:
        // No GT exists at the shifted pose; renders are exported instead.
        row.no_reference = cfg.view_shift_m != 0.0;
        for (size_t t = 0; t < scene.frames.size(); ++t) {
          const Frame& src = scene.frames[t];
          const CameraModel cam = shift_camera_x(src.camera, cfg.view_shift_m);
          const auto out = render_from(src, cam, no_matching ? &src : nullptr);
          if (cfg.view_shift_m == 0.0) {
            append_metrics(row, out.color.template cast<float>(), src.image, &count);
          } else if (!cfg.export_dir.empty()) {
            std::filesystem::create_directories(cfg.export_dir / scene.id);
            char stem[32];
            std::snprintf(stem, sizeof(stem), "%04zu.shift.png", t);
            write_png(cfg.export_dir / scene.id / stem, out.color.template cast<float>());
          }
        }
        break;
      case Protocol::kDepthDrop:
        for (size_t t = 0; t + 1 < scene.frames.size(); ++t) {
          Frame src = scene.frames[t];
          src.sparse_depth = sparsify_depth(src.sparse_depth, 1.0 - cfg.depth_drop_frac,
                                            SparsifyPattern::kUniform, cfg.seed);
          const auto out = render_from(src, scene.frames[t + 1].camera, &scene.frames[t + 1]);
          append_metrics(row, out.color.template cast<float>(), scene.frames[t + 1].image, &count);
        }
        break;
    }

    if (count > 0) {
      row.psnr /= count;
      row.ssim /= count;
    } else {
      row.psnr = std::nan("");
      row.ssim = std::nan("");
      row.no_reference = true;
    }
    rows.push_back(row);
  }
  return rows;
}

/// Mean PSNR over metric-producing rows.
inline double mean_psnr(const std::vector<MetricsRow>& rows) {
  double acc = 0;
  int n = 0;
  for (const auto& r : rows)
    if (!r.no_reference) {
      acc += r.psnr;
      ++n;
    }
  if (n == 0) throw std::invalid_argument("mean_psnr: no metric-producing rows");
  return acc / n;
}

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << "scene,protocol,psnr,ssim,lpips\n";
  for (const auto& r : rows) {
    os << r.scene << "," << r.protocol << ",";
    if (!r.no_reference) os << r.psnr << "," << r.ssim;
    else os << ",";
    os << ",";
    if (r.lpips) os << *r.lpips;
    os << "\n";
  }
}

/// Trains one ablation variant from scratch and reports next-frame metrics.
/// The variant shares every config field (including seeds) with the base.
template <typename T>
std::vector<MetricsRow> ablate(Ablation variant, const std::vector<Scene>& scenes,
                               ModelConfig<T> model_cfg, const TrainConfig<T>& train_cfg,
                               const LossConfig<T>& loss_cfg, std::ostream* log = nullptr) {
  model_cfg.ablation = variant;
  Model<T> model(model_cfg);
  train(model, scenes, train_cfg, loss_cfg, log);
  EvalConfig ec;
  ec.protocol = Protocol::kNextFrame;
  auto rows = evaluate(model, scenes, ec);
  for (auto& r : rows) r.protocol = std::string("next_frame/") + ablation_name(variant);
  return rows;
}

}  // namespace adg
