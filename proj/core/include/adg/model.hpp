#pragma once

#include <array>
#include <optional>

#include "adg/encoder.hpp"
#include "adg/heads.hpp"
#include "adg/losses.hpp"
#include "adg/matcher.hpp"
#include "adg/renderer.hpp"
#include "adg/scene.hpp"

namespace adg {

enum class Ablation { kFull, kNoDpe, kNoMultiscale, kNoDpeMultiscale, kNoMatching };

inline const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kNoDpe: return "no_dpe";
    case Ablation::kNoMultiscale: return "no_multiscale";
    case Ablation::kNoDpeMultiscale: return "no_dpe_multiscale";
    case Ablation::kNoMatching: return "no_matching";
  }
  return "?";
}

inline Ablation parse_ablation(const std::string& s) {
  if (s == "full") return Ablation::kFull;
  if (s == "no_dpe") return Ablation::kNoDpe;
  if (s == "no_multiscale") return Ablation::kNoMultiscale;
  if (s == "no_dpe_multiscale") return Ablation::kNoDpeMultiscale;
  if (s == "no_matching") return Ablation::kNoMatching;
  throw std::invalid_argument("unknown ablation variant: " + s);
}

template <typename T>
struct ModelConfig {
  EncoderConfig<T> encoder;
  MatcherConfig<T> matcher;
  HeadConfig<T> head;
  ActivationConfig activation;
  Ablation ablation = Ablation::kFull;
  uint64_t init_seed = 1234;
  std::array<T, 3> background = {T(0), T(0), T(0)};
};

/// The full feed-forward pipeline: tokenize image + depth, encode with the
/// shared ViT, fuse with the cross-modal matcher, decode Gaussian
/// parameters with the two DPT heads, lift to world space and splat.
template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig<T>& cfg) : cfg_(cfg) {
    Rng rng(cfg.init_seed);
    encoder_ = Encoder<T>::create(store_, cfg.encoder, rng);
    MatcherConfig<T> mc = cfg.matcher;
    mc.dim = cfg.encoder.dim;
    matcher_ = CrossModalMatcher<T>::create(store_, mc, rng);
    HeadConfig<T> hc = cfg.head;
    hc.patch = cfg.encoder.patch;
    hc.token_dim = cfg.encoder.dim;
    gaussian_head_ = DptHead<T>::create(store_, "gaussian_head", hc, 3, 10, rng);
    geometry_head_ = DptHead<T>::create(store_, "geometry_head", hc, 1, 4, rng);
    // Rotation w-channel bias starts at 1 so raw quaternions begin near
    // identity instead of the zero-norm fallback (which has no gradient).
    store_.at("gaussian_head.out.b").value[6] = T(1);
  }

  ParamStore<T>& params() { return store_; }
  const ModelConfig<T>& config() const { return cfg_; }

  struct RawOutputs {
    VarId geo = -1;  // [4,H,W]
    VarId app = -1;  // [10,H,W]
    TokenLayout layout;
  };

  /// Builds the graph from a source frame to the raw Gaussian rasters.
  /// `matching_substitute` replaces the depth-branch encoder input (the
  /// w/o-Matching protocol); it must be a [3,H,W] image.
  RawOutputs forward_raw(Tape<T>& t, const Frame& src,
                         const Tensor<float>* matching_substitute = nullptr) const {
    const int p = cfg_.encoder.patch;
    const int64_t h = src.height(), w = src.width();
    if (h % p != 0 || w % p != 0)
      throw std::invalid_argument("Model: frame size must be divisible by the patch size");
    TokenLayout layout{h / p, w / p, p, cfg_.encoder.dim};
    const double far = src.camera.far;

    const VarId image = t.constant(src.image.template cast<T>());
    VarId depth_input;
    if (cfg_.ablation == Ablation::kNoMatching) {
      if (!matching_substitute)
        throw std::invalid_argument("Model: no_matching requires a substitute image");
      depth_input = t.constant(matching_substitute->template cast<T>());
    } else {
      depth_input = t.constant(replicate_depth_channels<T>(src.sparse_depth, far));
    }

    const bool use_z = cfg_.ablation != Ablation::kNoDpe &&
                       cfg_.ablation != Ablation::kNoDpeMultiscale &&
                       cfg_.ablation != Ablation::kNoMatching;
    const auto dpe = build_dpe<T>(layout.h_l, layout.w_l, src.sparse_depth, p,
                                  cfg_.encoder.dim, far, use_z);

    const VarId f_img = encoder_.encode(t, encoder_.patchify(t, image), dpe);
    const VarId f_depth = encoder_.encode(t, encoder_.patchify(t, depth_input), dpe);
    const auto [g_img, g_depth] = matcher_.decode_pair(t, f_img, f_depth);

    const bool multiscale = cfg_.ablation != Ablation::kNoMultiscale &&
                            cfg_.ablation != Ablation::kNoDpeMultiscale;

    Tensor<T> depth_skip({1, h, w});
    for (int64_t i = 0; i < h * w; ++i)
      depth_skip[i] = static_cast<T>(src.sparse_depth[i] / far);

    RawOutputs out;
    out.layout = layout;
    out.app = gaussian_head_.apply(t, g_img, layout, src.sparse_depth, image, far,
                                   multiscale, /*skip_enabled=*/true);
    out.geo = geometry_head_.apply(t, g_depth, layout, src.sparse_depth,
                                   t.constant(std::move(depth_skip)), far, multiscale,
                                   /*skip_enabled=*/multiscale);
    return out;
  }

  struct StepResult {
    LossReport<T> report;
    RenderOutput<T> render;
    VarId loss = -1;
    RawOutputs raw;
  };

  /// Full training-step graph: raw rasters -> lift -> splat at the target
  /// camera -> loss against the target image. The splat + loss segment is a
  /// fused tape node with a hand-written backward.
  StepResult forward_loss(Tape<T>& t, const Frame& src, const Frame& target,
                          const LossConfig<T>& loss_cfg,
                          const Tensor<float>* matching_substitute = nullptr) const {
    const RawOutputs raw = forward_raw(t, src, matching_substitute);

    GaussianRaster<T> raster{t.val(raw.geo), t.val(raw.app)};
    const CameraModel cam = target.camera;
    const ActivationConfig acfg = cfg_.activation;
    const std::array<T, 3> bg = cfg_.background;

    const GaussianSet<T> gs = activate_and_lift(raster, cam, acfg);
    StepResult res;
    res.raw = raw;
    res.render = render(gs, cam, bg, RenderPath::kTiled);

    const Tensor<T> gt_image = target.image.template cast<T>();
    RenderOutputGrad<T> rgrads;
    res.report = total_loss(res.render, gt_image, loss_cfg, &rgrads);

    Tensor<T> loss_val({1});
    loss_val[0] = res.report.total;
    res.loss = t.custom(
        {raw.geo, raw.app}, std::move(loss_val),
        [raster = std::move(raster), gs, cam, bg, acfg, rgrads = std::move(rgrads)](
            const Tensor<T>& gout, const std::vector<Tensor<T>*>& gin) {
          const T scale = gout[0];
          RenderOutputGrad<T> scaled;
          scaled.color = rgrads.color;
          scaled.depth = rgrads.depth;
          scaled.alpha = rgrads.alpha;
          for (auto* tens : {&scaled.color, &scaled.depth, &scaled.alpha})
            for (auto& v : tens->data) v *= scale;
          const GaussianGrads<T> ggrads = render_backward(gs, cam, bg, scaled, RenderPath::kTiled);
          const GaussianRaster<T> rgrad = activate_and_lift_backward(raster, cam, ggrads, acfg);
          if (gin[0])
            for (int64_t i = 0; i < gin[0]->numel(); ++i) (*gin[0])[i] += rgrad.geo[i];
          if (gin[1])
            for (int64_t i = 0; i < gin[1]->numel(); ++i) (*gin[1])[i] += rgrad.app[i];
        });
    return res;
  }

  /// Inference: predict Gaussians from `src` and splat them into
  /// `target_cam`.
  RenderOutput<T> render_view(const Frame& src, const CameraModel& target_cam,
                              const Tensor<float>* matching_substitute = nullptr) const {
    Tape<T> t;
    const RawOutputs raw = forward_raw(t, src, matching_substitute);
    const GaussianRaster<T> raster{t.val(raw.geo), t.val(raw.app)};
    const GaussianSet<T> gs = activate_and_lift(raster, target_cam, cfg_.activation);
    return render(gs, target_cam, cfg_.background, RenderPath::kTiled);
  }

  /// Predicted Gaussians for a source frame (lifted through the source
  /// camera).
  GaussianSet<T> predict_gaussians(const Frame& src,
                                   const Tensor<float>* matching_substitute = nullptr) const {
    Tape<T> t;
    const RawOutputs raw = forward_raw(t, src, matching_substitute);
    const GaussianRaster<T> raster{t.val(raw.geo), t.val(raw.app)};
    return activate_and_lift(raster, src.camera, cfg_.activation);
  }

 private:
  ModelConfig<T> cfg_;
  ParamStore<T> store_;
  Encoder<T> encoder_;
  CrossModalMatcher<T> matcher_;
  DptHead<T> gaussian_head_, geometry_head_;
};

}  // namespace adg
