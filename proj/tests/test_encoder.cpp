#include <doctest.h>

#include "adg/encoder.hpp"

using namespace adg;

namespace {

Tensor<float> random_depth(Rng& rng, int64_t h, int64_t w, double density = 0.3) {
  Tensor<float> d({h, w});
  for (auto& v : d.data)
    if (rng.uniform() < density) v = static_cast<float>(rng.uniform(1.0, 50.0));
  return d;
}

Tensor<double> random_image(Rng& rng, int64_t h, int64_t w) {
  Tensor<double> img({3, h, w});
  for (auto& v : img.data) v = rng.uniform();
  return img;
}

}  // namespace

TEST_CASE("replicate_depth_channels copies the normalized map into all channels") {
  const double far = 60.0;
  SUBCASE("all-zero map stays zero") {
    Tensor<float> d({4, 6});
    const auto r = replicate_depth_channels<double>(d, far);
    for (double v : r.data) CHECK(v == 0.0);
  }
  SUBCASE("d == far maps to 1 in every channel") {
    Tensor<float> d({2, 2});
    d.at(1, 1) = static_cast<float>(far);
    const auto r = replicate_depth_channels<double>(d, far);
    for (int c = 0; c < 3; ++c) CHECK(r.at(c, 1, 1) == doctest::Approx(1.0));
  }
  SUBCASE("channels are identical on random maps") {
    Rng rng(3);
    const auto d = random_depth(rng, 8, 8);
    const auto r = replicate_depth_channels<double>(d, far);
    for (int64_t i = 0; i < 8; ++i)
      for (int64_t j = 0; j < 8; ++j) {
        CHECK(r.at(0, i, j) == r.at(1, i, j));
        CHECK(r.at(1, i, j) == r.at(2, i, j));
        CHECK(r.at(0, i, j) == doctest::Approx(d.at(i, j) / far));
      }
  }
}

TEST_CASE("patchify with an identity projection returns the flattened patches") {
  const int p = 4;
  ParamStore<double> store;
  Rng rng(1);
  EncoderConfig<double> cfg;
  cfg.patch = p;
  cfg.dim = 3 * p * p;  // square projection, can hold the identity
  auto enc = Encoder<double>::create(store, cfg, rng);
  auto& w = store.at("encoder.patch_proj.w").value;
  w.fill(0.0);
  for (int64_t i = 0; i < cfg.dim; ++i) w.at(i, i) = 1.0;
  store.at("encoder.patch_proj.b").value.fill(0.0);

  Rng irng(2);
  const auto img = random_image(irng, 8, 12);
  Tape<double> t;
  const VarId tokens = enc.patchify(t, t.constant(img));
  const Tensor<double>& tv = t.val(tokens);
  REQUIRE(tv.shape == std::vector<int64_t>{(8 / p) * (12 / p), 3 * p * p});

  // Token (i,j) must equal the channel-major flattened p x p patch.
  for (int64_t ti = 0; ti < 2; ++ti)
    for (int64_t tj = 0; tj < 3; ++tj) {
      int64_t col = 0;
      for (int64_t c = 0; c < 3; ++c)
        for (int pi = 0; pi < p; ++pi)
          for (int pj = 0; pj < p; ++pj, ++col)
            CHECK(tv.at(ti * 3 + tj, col) == img.at(c, ti * p + pi, tj * p + pj));
    }
}

TEST_CASE("patchify maps constant rasters to equal tokens and localizes patch edits") {
  ParamStore<double> store;
  Rng rng(4);
  EncoderConfig<double> cfg;
  cfg.patch = 8;
  cfg.dim = 32;
  auto enc = Encoder<double>::create(store, cfg, rng);

  Tensor<double> img({3, 16, 24}, 0.25);
  Tape<double> t;
  const Tensor<double>& tok = t.val(enc.patchify(t, t.constant(img)));
  for (int64_t l = 1; l < tok.dim(0); ++l)
    for (int64_t c = 0; c < tok.dim(1); ++c) CHECK(tok.at(l, c) == doctest::Approx(tok.at(0, c)));

  Tensor<double> img2 = img;
  img2.at(1, 9, 17) += 0.5;  // inside patch (1, 2) of the 2x3 grid
  Tape<double> t2;
  const Tensor<double>& tok2 = t2.val(enc.patchify(t2, t2.constant(img2)));
  for (int64_t l = 0; l < tok.dim(0); ++l) {
    bool differs = false;
    for (int64_t c = 0; c < tok.dim(1); ++c) differs = differs || tok.at(l, c) != tok2.at(l, c);
    CHECK(differs == (l == 1 * 3 + 2));
  }
}

TEST_CASE("dpe linear index follows row-major order and inverts cleanly") {
  const int64_t h_l = 4, w_l = 3;
  Tensor<float> depth({h_l * 8, w_l * 8});
  const auto dpe = build_dpe<double>(h_l, w_l, depth, 8, 64, 60.0);
  REQUIRE(dpe.linear_index.size() == static_cast<size_t>(h_l * w_l));
  // k = i*w_l + j; in particular (i=1, j=2) -> 5.
  CHECK(dpe.linear_index[static_cast<size_t>(1 * w_l + 2)] == 5);
  std::vector<bool> seen(static_cast<size_t>(h_l * w_l), false);
  for (int64_t i = 0; i < h_l; ++i)
    for (int64_t j = 0; j < w_l; ++j) {
      const int64_t k = dpe.linear_index[static_cast<size_t>(i * w_l + j)];
      CHECK(k == i * w_l + j);
      CHECK(k / w_l == i);
      CHECK(k % w_l == j);
      CHECK_FALSE(seen[static_cast<size_t>(k)]);
      seen[static_cast<size_t>(k)] = true;
    }
}

TEST_CASE("dpe channel split gives ceil(C/3) to x and splits the rest") {
  int64_t cx, cy, cz;
  dpe_channel_split(64, &cx, &cy, &cz);
  CHECK(cx == 22);
  CHECK(cy == 21);
  CHECK(cz == 21);
  dpe_channel_split(6, &cx, &cy, &cz);
  CHECK(cx == 2);
  CHECK(cy == 2);
  CHECK(cz == 2);
  dpe_channel_split(7, &cx, &cy, &cz);
  CHECK(cx + cy + cz == 7);
  CHECK(cx == 3);
}

TEST_CASE("dpe patch depth is the valid mean with a zero sentinel") {
  const int p = 8;
  Tensor<float> depth({8, 16});  // 1x2 token grid
  depth.at(0, 0) = 10.f;
  depth.at(3, 5) = 30.f;  // both in cell (0,0); cell (0,1) stays empty
  const auto dpe = build_dpe<double>(1, 2, depth, p, 9, 60.0);
  CHECK(dpe.patch_depth[0] == doctest::Approx(20.0));
  CHECK(dpe.patch_depth[1] == 0.0);

  // Empty cell's z-slice equals the encoding of 0.
  int64_t cx, cy, cz;
  dpe_channel_split(9, &cx, &cy, &cz);
  std::vector<double> zero_code(static_cast<size_t>(cz));
  sinusoidal_encode(0.0, cz, zero_code.data());
  for (int64_t c = 0; c < cz; ++c)
    CHECK(dpe.values.at(1, cx + cy + c) == doctest::Approx(zero_code[static_cast<size_t>(c)]));
}

TEST_CASE("tokens at the same grid slot differ only in the z-slice when depth differs") {
  const int p = 8;
  const int64_t h_l = 2, w_l = 2, C = 30;
  Tensor<float> d1({h_l * p, w_l * p});
  Tensor<float> d2 = d1;
  d1.at(2, 2) = 5.f;   // cell (0,0)
  d2.at(2, 2) = 40.f;  // same cell, different depth
  const auto a = build_dpe<double>(h_l, w_l, d1, p, C, 60.0);
  const auto b = build_dpe<double>(h_l, w_l, d2, p, C, 60.0);
  int64_t cx, cy, cz;
  dpe_channel_split(C, &cx, &cy, &cz);
  for (int64_t c = 0; c < C; ++c) {
    if (c < cx + cy) {
      CHECK(a.values.at(0, c) == b.values.at(0, c));
    }
  }
  double zdiff = 0;
  for (int64_t c = cx + cy; c < C; ++c) zdiff += std::fabs(a.values.at(0, c) - b.values.at(0, c));
  CHECK(zdiff > 0.0);
  // Other tokens are untouched.
  for (int64_t l = 1; l < h_l * w_l; ++l)
    for (int64_t c = 0; c < C; ++c) CHECK(a.values.at(l, c) == b.values.at(l, c));
}

TEST_CASE("include_z=false zeroes the z slice") {
  Tensor<float> depth({8, 8});
  depth.at(4, 4) = 25.f;
  const auto dpe = build_dpe<double>(1, 1, depth, 8, 12, 60.0, /*include_z=*/false);
  int64_t cx, cy, cz;
  dpe_channel_split(12, &cx, &cy, &cz);
  for (int64_t c = cx + cy; c < 12; ++c) CHECK(dpe.values.at(0, c) == 0.0);
}

TEST_CASE("weight-shared encoder produces identical features for identical inputs") {
  ParamStore<double> store;
  Rng rng(5);
  EncoderConfig<double> cfg;
  cfg.dim = 24;
  cfg.blocks = 2;
  cfg.heads = 2;
  auto enc = Encoder<double>::create(store, cfg, rng);

  Rng irng(6);
  const auto raster = random_image(irng, 16, 16);
  const auto depth = random_depth(irng, 16, 16);
  const auto dpe = build_dpe<double>(2, 2, depth, 8, cfg.dim, 60.0);

  Tape<double> t;
  const VarId fa = enc.encode(t, enc.patchify(t, t.constant(raster)), dpe);
  const VarId fb = enc.encode(t, enc.patchify(t, t.constant(raster)), dpe);
  CHECK(t.val(fa).data == t.val(fb).data);
}

TEST_CASE("zero-weight encoder blocks reduce to tokens + dpe") {
  ParamStore<double> store;
  Rng rng(7);
  EncoderConfig<double> cfg;
  cfg.dim = 24;
  cfg.blocks = 2;
  cfg.heads = 2;
  auto enc = Encoder<double>::create(store, cfg, rng);
  // Zero every block parameter except layernorm gamma; residual-only path.
  for (auto& p : store.all()) {
    if (p->name.rfind("encoder.block", 0) == 0 && p->name.find(".gamma") == std::string::npos)
      p->value.fill(0.0);
  }

  Rng irng(8);
  const auto raster = random_image(irng, 16, 16);
  const auto depth = random_depth(irng, 16, 16);
  const auto dpe = build_dpe<double>(2, 2, depth, 8, cfg.dim, 60.0);

  Tape<double> t;
  const VarId tokens = enc.patchify(t, t.constant(raster));
  const VarId out = enc.encode(t, tokens, dpe);
  const Tensor<double>& tv = t.val(tokens);
  const Tensor<double>& ov = t.val(out);
  for (int64_t i = 0; i < ov.numel(); ++i)
    CHECK(ov[i] == doctest::Approx(tv[i] + dpe.values[i]).epsilon(1e-12));
}

TEST_CASE("attention blocks are token-permutation equivariant") {
  ParamStore<double> store;
  Rng rng(9);
  auto block = TransformerBlock<double>::create(store, "b", 16, 2, 32, rng);

  Rng irng(10);
  Tensor<double> x({6, 16});
  for (auto& v : x.data) v = irng.uniform(-1.0, 1.0);
  const std::vector<int64_t> perm = {3, 0, 5, 1, 4, 2};
  Tensor<double> xp({6, 16});
  for (int64_t i = 0; i < 6; ++i)
    for (int64_t c = 0; c < 16; ++c) xp.at(i, c) = x.at(perm[static_cast<size_t>(i)], c);

  Tape<double> t;
  const Tensor<double>& y = t.val(block.apply(t, t.constant(x)));
  Tape<double> t2;
  const Tensor<double>& yp = t2.val(block.apply(t2, t2.constant(xp)));
  for (int64_t i = 0; i < 6; ++i)
    for (int64_t c = 0; c < 16; ++c)
      CHECK(yp.at(i, c) == doctest::Approx(y.at(perm[static_cast<size_t>(i)], c)).epsilon(1e-12));
}

TEST_CASE("encoder output stays finite on [0,1] inputs with std-0.02 init") {
  ParamStore<double> store;
  Rng rng(11);
  EncoderConfig<double> cfg;
  cfg.dim = 32;
  auto enc = Encoder<double>::create(store, cfg, rng);
  Rng irng(12);
  const auto raster = random_image(irng, 24, 32);
  const auto depth = random_depth(irng, 24, 32);
  const auto dpe = build_dpe<double>(3, 4, depth, 8, cfg.dim, 60.0);
  Tape<double> t;
  const Tensor<double>& out = t.val(enc.encode(t, enc.patchify(t, t.constant(raster)), dpe));
  for (double v : out.data) CHECK(std::isfinite(v));
}

TEST_CASE("encode rejects mismatched token/dpe shapes") {
  ParamStore<double> store;
  Rng rng(13);
  EncoderConfig<double> cfg;
  cfg.dim = 16;
  cfg.blocks = 1;
  cfg.heads = 2;
  auto enc = Encoder<double>::create(store, cfg, rng);
  Tensor<float> depth({8, 8});
  const auto dpe = build_dpe<double>(1, 1, depth, 8, 16, 60.0);
  Tape<double> t;
  const VarId bad_tokens = t.constant(Tensor<double>({2, 16}));
  CHECK_THROWS_AS(enc.encode(t, bad_tokens, dpe), std::invalid_argument);
}
