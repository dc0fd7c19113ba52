#include <doctest.h>

#include "adg/losses.hpp"
#include "adg/rng.hpp"

using namespace adg;

namespace {

RenderOutput<double> random_render(Rng& rng, int64_t h, int64_t w) {
  RenderOutput<double> out;
  out.color = Tensor<double>({3, h, w});
  out.depth = Tensor<double>({h, w});
  out.alpha = Tensor<double>({h, w});
  for (auto& v : out.color.data) v = rng.uniform();
  for (auto& v : out.depth.data) v = rng.uniform(1.0, 10.0);
  for (auto& v : out.alpha.data) v = rng.uniform();
  return out;
}

}  // namespace

TEST_CASE("identical prediction gives zero loss in every component") {
  Rng rng(1);
  RenderOutput<double> out = random_render(rng, 6, 7);
  out.depth.fill(3.0);  // flat depth: no smoothness penalty
  LossConfig<double> cfg;
  const auto rep = total_loss(out, out.color, cfg);
  CHECK(rep.mse == 0.0);
  CHECK(rep.perceptual == 0.0);
  CHECK(rep.depth_smoothness == 0.0);
  CHECK(rep.total == 0.0);
}

TEST_CASE("a constant 0.1 offset yields MSE 0.01") {
  Tensor<double> gt({3, 4, 5}, 0.4);
  Tensor<double> pred({3, 4, 5}, 0.5);
  CHECK(mse_loss(pred, gt) == doctest::Approx(0.01).epsilon(1e-12));

  // Gradient of MSE is 2*(pred-gt)/n at every entry.
  Tensor<double> grad({3, 4, 5});
  mse_loss(pred, gt, &grad);
  for (double g : grad.data) CHECK(g == doctest::Approx(2.0 * 0.1 / 60.0).epsilon(1e-12));
}

TEST_CASE("perceptual plug-in composes as mse + lambda * distance, exactly") {
  Tensor<double> gt({3, 4, 5}, 0.4);
  Tensor<double> pred({3, 4, 5}, 0.5);
  LossConfig<double> cfg;
  cfg.lambda_lpips = 0.05;
  cfg.perceptual = [](const Tensor<double>&, const Tensor<double>&, Tensor<double>* g) {
    if (g) g->fill(0.25);
    return 2.0;
  };
  double mse = 0, perc = 0;
  Tensor<double> grad({3, 4, 5});
  const double nvs = nvs_loss(pred, gt, cfg, &grad, &mse, &perc);
  CHECK(perc == 2.0);
  CHECK(nvs == mse + 0.05 * 2.0);  // exact floating-point composition
  CHECK(nvs == doctest::Approx(0.11).epsilon(1e-12));
  // Gradient composes too: d(mse) + lambda * d(perceptual).
  for (double g : grad.data)
    CHECK(g == doctest::Approx(2.0 * 0.1 / 60.0 + 0.05 * 0.25).epsilon(1e-12));

  // Plug-in off: the perceptual term vanishes.
  LossConfig<double> off;
  CHECK(nvs_loss(pred, gt, off) == mse_loss(pred, gt));
}

TEST_CASE("smoothness of a linear depth ramp under a flat image equals the slope") {
  const int64_t h = 5, w = 8;
  const double slope = 0.37;
  Tensor<double> depth({h, w});
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) depth.at(i, j) = slope * static_cast<double>(j);
  const Tensor<double> image({3, h, w}, 0.5);
  CHECK(depth_smoothness_loss(depth, image) == doctest::Approx(slope).epsilon(1e-12));
}

TEST_CASE("smoothness hand case on a 2x3 raster with one strong edge") {
  // Sites: (0,0) and (0,1). Depth x-diffs 1 and 2; all y-diffs 0.
  // Image x-gradient is 4 at the first site, 0 at the second.
  Tensor<double> depth({2, 3});
  depth.at(0, 0) = 0;
  depth.at(0, 1) = 1;
  depth.at(0, 2) = 3;
  depth.at(1, 0) = 0;
  depth.at(1, 1) = 1;
  depth.at(1, 2) = 3;
  Tensor<double> image({3, 2, 3});
  for (int c = 0; c < 3; ++c)
    for (int64_t i = 0; i < 2; ++i) {
      image.at(c, i, 0) = 0.0;
      image.at(c, i, 1) = 4.0;
      image.at(c, i, 2) = 4.0;
    }
  const double expect = (1.0 * std::exp(-4.0) + 2.0 * 1.0) / 2.0;
  CHECK(depth_smoothness_loss(depth, image) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("smoothness is nonnegative and sharper image edges reduce the penalty") {
  Rng rng(2);
  Tensor<double> depth({6, 6});
  for (auto& v : depth.data) v = rng.uniform(1.0, 5.0);
  Tensor<double> flat({3, 6, 6}, 0.5);
  Tensor<double> edgy({3, 6, 6}, 0.5);
  for (int c = 0; c < 3; ++c)
    for (int64_t i = 0; i < 6; ++i)
      for (int64_t j = 0; j < 6; ++j) edgy.at(c, i, j) = (i + j) % 2 ? 1.0 : 0.0;
  const double on_flat = depth_smoothness_loss(depth, flat);
  const double on_edgy = depth_smoothness_loss(depth, edgy);
  CHECK(on_flat >= 0.0);
  CHECK(on_edgy >= 0.0);
  CHECK(on_edgy < on_flat);  // e^{-|dI|} < 1 wherever the image varies
}

TEST_CASE("total loss composes its parts exactly and gives alpha no gradient") {
  Rng rng(3);
  const RenderOutput<double> out = random_render(rng, 8, 9);
  Tensor<double> gt({3, 8, 9});
  for (auto& v : gt.data) v = rng.uniform();
  LossConfig<double> cfg;
  cfg.lambda_lpips = 0.05;
  cfg.depth_weight = 0.7;
  cfg.perceptual = [](const Tensor<double>& p, const Tensor<double>& g, Tensor<double>* grad) {
    double acc = 0;
    for (int64_t i = 0; i < p.numel(); ++i) {
      acc += (p[i] - g[i]) * (p[i] - g[i]) * 0.5;
      if (grad) (*grad)[i] += (p[i] - g[i]);
    }
    return acc;
  };
  RenderOutputGrad<double> grads;
  const auto rep = total_loss(out, gt, cfg, &grads);
  CHECK(rep.total == rep.mse + cfg.lambda_lpips * rep.perceptual + cfg.depth_weight * rep.depth_smoothness);
  for (double v : grads.alpha.data) CHECK(v == 0.0);
  CHECK(rep.total > 0.0);
}

TEST_CASE("total-loss gradients match finite differences") {
  Rng rng(4);
  RenderOutput<double> out = random_render(rng, 5, 6);
  // Space depth values apart so finite differences stay off the |.| kinks.
  for (int64_t i = 0; i < out.depth.numel(); ++i)
    out.depth[i] = 1.0 + 0.3 * static_cast<double>(i) + rng.uniform(0.0, 0.05);
  Tensor<double> gt({3, 5, 6});
  for (auto& v : gt.data) v = rng.uniform();
  LossConfig<double> cfg;
  cfg.depth_weight = 0.7;

  RenderOutputGrad<double> grads;
  total_loss(out, gt, cfg, &grads);
  auto objective = [&]() { return total_loss(out, gt, cfg).total; };

  auto fd_check = [&](Tensor<double>& params, const Tensor<double>& analytic) {
    for (int64_t i = 0; i < params.numel(); ++i) {
      const double saved = params[i];
      const double h = 1e-6;
      params[i] = saved + h;
      const double fp = objective();
      params[i] = saved - h;
      const double fm = objective();
      params[i] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double mag = std::max({std::fabs(fd), std::fabs(analytic[i]), 1e-7});
      CHECK(std::fabs(analytic[i] - fd) / mag < 1e-3);
    }
  };
  fd_check(out.color, grads.color);
  fd_check(out.depth, grads.depth);
}

TEST_CASE("loss functions reject mismatched shapes") {
  Tensor<double> a({3, 4, 4}), b({3, 4, 5});
  CHECK_THROWS_AS(mse_loss(a, b), std::invalid_argument);
  Tensor<double> depth({4, 4});
  CHECK_THROWS_AS(depth_smoothness_loss(depth, b), std::invalid_argument);
  RenderOutput<double> out;
  out.color = a;
  out.depth = depth;
  out.alpha = depth;
  LossConfig<double> cfg;
  CHECK_THROWS_AS(total_loss(out, b, cfg), std::invalid_argument);
}

TEST_CASE("degenerate rasters: single pixel is zero, single row uses x only") {
  Tensor<double> d1({1, 1}, 2.0);
  Tensor<double> i1({3, 1, 1}, 0.5);
  CHECK(depth_smoothness_loss(d1, i1) == 0.0);

  Tensor<double> row({1, 4});
  for (int64_t j = 0; j < 4; ++j) row.at(0, j) = 0.25 * static_cast<double>(j);
  Tensor<double> irow({3, 1, 4}, 0.5);
  CHECK(depth_smoothness_loss(row, irow) == doctest::Approx(0.25).epsilon(1e-12));
}
