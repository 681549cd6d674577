#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.h"
#include "hallu/correspond.h"
#include "hallu/error.h"
#include "hallu/image_io.h"

namespace hallu {
namespace {

using testing::noise_image;
using testing::smooth_texture;

SearchConfig translation_only(int z) {
  SearchConfig cfg;
  cfg.patch_size = z;
  cfg.allow_similarity = false;
  cfg.allow_reflection = false;
  cfg.workers = 1;
  return cfg;
}

NNF random_nnf(const ImageBuf& target, const ImageBuf& cand, int z, uint64_t seed) {
  NNF f(target.width(), target.height(), z, 0);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dx(0, cand.width() - z);
  std::uniform_int_distribution<int> dy(0, cand.height() - z);
  for (PatchTransform& e : f.entries) {
    e.sx = static_cast<float>(dx(rng));
    e.sy = static_cast<float>(dy(rng));
  }
  return f;
}

ImageBuf shifted(const ImageBuf& img, int dx) {
  ImageBuf out(img.width(), img.height());
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        out.at(c, x, y) = img.at(c, std::clamp(x - dx, 0, img.width() - 1), y);
      }
    }
  }
  return out;
}

TEST(Nnf, GridDims) {
  const NNF f(50, 40, 8, 0);
  EXPECT_EQ(f.grid_w, 43);
  EXPECT_EQ(f.grid_h, 33);
  EXPECT_EQ(f.target_w(), 50);
  EXPECT_EQ(f.target_h(), 40);
  EXPECT_EQ(f.entries.size(), 43u * 33u);
}

TEST(Nnf, TooSmallTarget) { EXPECT_THROW(NNF(7, 40, 8, 0), InputTooSmallError); }

TEST(InitNnfs, SelfMatchIsIdentity) {
  const ImageBuf img = smooth_texture(48, 40, 1);
  SearchConfig cfg = translation_only(8);
  const auto nnfs = init_nnfs(img, {img}, cfg);
  ASSERT_EQ(nnfs.size(), 1u);
  for (int y = 0; y < nnfs[0].grid_h; ++y) {
    for (int x = 0; x < nnfs[0].grid_w; ++x) {
      const PatchTransform& e = nnfs[0].at(x, y);
      EXPECT_EQ(e.sx, x);
      EXPECT_EQ(e.sy, y);
      EXPECT_EQ(e.dist, 0.0);
      EXPECT_EQ(e.scale, 1.0f);
      EXPECT_EQ(e.theta, 0.0f);
      EXPECT_FALSE(e.reflect);
    }
  }
}

TEST(InitNnfs, RecoversShift) {
  const ImageBuf img = noise_image(96, 64, 2);
  const ImageBuf cand = shifted(img, 8);
  const auto nnfs = init_nnfs(img, {cand}, translation_only(8));
  int hits = 0, total = 0;
  const NNF& f = nnfs[0];
  for (int y = 0; y < f.grid_h; ++y) {
    for (int x = 0; x + 8 < f.grid_w; ++x) {
      ++total;
      hits += f.at(x, y).sx == x + 8 && f.at(x, y).sy == y;
    }
  }
  EXPECT_GE(hits, 0.9 * total);
}

TEST(InitNnfs, OneFieldPerCandidate) {
  const ImageBuf img = smooth_texture(40, 36, 3);
  const auto nnfs =
      init_nnfs(img, {smooth_texture(50, 50, 4), smooth_texture(45, 60, 5)}, translation_only(8));
  ASSERT_EQ(nnfs.size(), 2u);
  for (int m = 0; m < 2; ++m) {
    EXPECT_EQ(nnfs[m].candidate, m);
    EXPECT_EQ(nnfs[m].grid_w, 33);
    EXPECT_EQ(nnfs[m].grid_h, 29);
  }
}

TEST(InitNnfs, SkipsTinyCandidates) {
  const ImageBuf img = smooth_texture(40, 36, 3);
  const auto nnfs = init_nnfs(img, {noise_image(4, 4, 1), smooth_texture(50, 50, 4)},
                              translation_only(8));
  ASSERT_EQ(nnfs.size(), 1u);
  EXPECT_EQ(nnfs[0].candidate, 1);
  EXPECT_THROW(init_nnfs(img, {noise_image(4, 4, 1)}, translation_only(8)), NoCandidatesError);
}

TEST(UpsampleNnfs, SingleEntryScalesPosition) {
  NNF f(8, 8, 8, 0);
  f.at(0, 0).sx = 10;
  f.at(0, 0).sy = 10;
  const auto up = upsample_nnfs({f}, 1.2, 8, 8, {noise_image(40, 40, 1)});
  ASSERT_EQ(up[0].entries.size(), 1u);
  EXPECT_EQ(up[0].at(0, 0).sx, 12.0f);
  EXPECT_EQ(up[0].at(0, 0).sy, 12.0f);
  EXPECT_TRUE(std::isnan(up[0].at(0, 0).dist));
}

TEST(UpsampleNnfs, IdentityStaysIdentity) {
  NNF f(30, 24, 8, 0);
  for (int y = 0; y < f.grid_h; ++y) {
    for (int x = 0; x < f.grid_w; ++x) {
      f.at(x, y).sx = static_cast<float>(x);
      f.at(x, y).sy = static_cast<float>(y);
    }
  }
  const auto up = upsample_nnfs({f}, 1.25, 38, 30, {noise_image(38, 30, 1)});
  EXPECT_EQ(up[0].grid_w, 31);
  EXPECT_EQ(up[0].grid_h, 23);
  for (int y = 0; y < up[0].grid_h; ++y) {
    for (int x = 0; x < up[0].grid_w; ++x) {
      EXPECT_EQ(up[0].at(x, y).sx, x);
      EXPECT_EQ(up[0].at(x, y).sy, y);
    }
  }
}

TEST(UpsampleNnfs, CopiesGeometry) {
  NNF f(16, 16, 8, 0);
  for (PatchTransform& e : f.entries) {
    e.sx = 5;
    e.sy = 6;
    e.scale = 1.05f;
    e.theta = 0.2f;
    e.reflect = true;
  }
  const auto up = upsample_nnfs({f}, 1.2, 19, 19, {noise_image(60, 60, 1)});
  for (const PatchTransform& e : up[0].entries) {
    EXPECT_EQ(e.scale, 1.05f);
    EXPECT_EQ(e.theta, 0.2f);
    EXPECT_TRUE(e.reflect);
  }
}

TEST(Search, SelfMatchStaysPut) {
  const ImageBuf img = noise_image(40, 32, 4);
  SearchConfig cfg;
  cfg.patch_size = 8;
  cfg.workers = 1;
  NNF f(40, 32, 8, 0);
  for (int y = 0; y < f.grid_h; ++y) {
    for (int x = 0; x < f.grid_w; ++x) {
      f.at(x, y).sx = static_cast<float>(x);
      f.at(x, y).sy = static_cast<float>(y);
    }
  }
  const auto out = search(img, {f}, {img}, cfg);
  for (int y = 0; y < f.grid_h; ++y) {
    for (int x = 0; x < f.grid_w; ++x) {
      const PatchTransform& e = out[0].at(x, y);
      EXPECT_EQ(e.sx, x);
      EXPECT_EQ(e.sy, y);
      EXPECT_EQ(e.scale, 1.0f);
      EXPECT_EQ(e.theta, 0.0f);
      EXPECT_FALSE(e.reflect);
      EXPECT_EQ(e.dist, 0.0);
    }
  }
}

TEST(Search, DistancesNeverIncrease) {
  for (uint64_t seed = 0; seed < 3; ++seed) {
    const ImageBuf target = smooth_texture(40, 36, 10 + seed);
    const ImageBuf cand = smooth_texture(48, 48, 20 + seed);
    SearchConfig cfg;
    cfg.patch_size = 8;
    cfg.workers = 1;
    cfg.seed = seed;
    cfg.iterations = 0;
    const auto before = search(target, {random_nnf(target, cand, 8, seed)}, {cand}, cfg);
    cfg.iterations = 5;
    const auto after = search(target, before, {cand}, cfg);
    for (size_t i = 0; i < before[0].entries.size(); ++i) {
      EXPECT_LE(after[0].entries[i].dist, before[0].entries[i].dist);
    }
  }
}

TEST(Search, RandomSearchStaysInBox) {
  // A single-anchor field has no neighbors, so only random search moves it.
  const ImageBuf target = noise_image(8, 8, 5);
  const ImageBuf cand = noise_image(80, 80, 6);
  SearchConfig cfg = translation_only(8);
  cfg.search_radius = 10;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    cfg.seed = seed;
    NNF f(8, 8, 8, 0);
    f.at(0, 0).sx = 35;
    f.at(0, 0).sy = 30;
    const auto out = search(target, {f}, {cand}, cfg);
    EXPECT_LE(std::fabs(out[0].at(0, 0).sx - 35.0f), 10.0f);
    EXPECT_LE(std::fabs(out[0].at(0, 0).sy - 30.0f), 10.0f);
  }
}

TEST(Search, DeterministicForSeedAndWorkers) {
  const ImageBuf target = smooth_texture(48, 48, 7);
  const ImageBuf cand = smooth_texture(64, 56, 8);
  SearchConfig cfg;
  cfg.patch_size = 8;
  cfg.seed = 42;
  cfg.workers = 2;
  const NNF init = random_nnf(target, cand, 8, 1);
  const auto a = search(target, {init}, {cand}, cfg, 3);
  const auto b = search(target, {init}, {cand}, cfg, 3);
  ASSERT_EQ(a[0].entries.size(), b[0].entries.size());
  for (size_t i = 0; i < a[0].entries.size(); ++i) {
    EXPECT_EQ(a[0].entries[i].sx, b[0].entries[i].sx);
    EXPECT_EQ(a[0].entries[i].sy, b[0].entries[i].sy);
    EXPECT_EQ(a[0].entries[i].scale, b[0].entries[i].scale);
    EXPECT_EQ(a[0].entries[i].theta, b[0].entries[i].theta);
    EXPECT_EQ(a[0].entries[i].reflect, b[0].entries[i].reflect);
    EXPECT_EQ(a[0].entries[i].dist, b[0].entries[i].dist);
  }
}

TEST(Search, CachedDistancesMatchReference) {
  const ImageBuf target = smooth_texture(40, 40, 9);
  const ImageBuf cand = smooth_texture(56, 48, 10);
  SearchConfig cfg;
  cfg.patch_size = 8;
  cfg.workers = 1;
  const auto out = search(target, {random_nnf(target, cand, 8, 2)}, {cand}, cfg);
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(out[0].entries.size()) - 1);
  int similarity = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int i = pick(rng);
    const int ax = i % out[0].grid_w;
    const int ay = i / out[0].grid_w;
    const PatchTransform& e = out[0].entries[i];
    similarity += !e.is_integer_translation();
    const double ref = testing::reference_distance(target, cand, ax, ay, e, 8, cfg.lambda);
    EXPECT_NEAR(e.dist, ref, 1e-6 * std::max(ref, 1.0)) << "anchor " << ax << "," << ay;
  }
  EXPECT_GT(similarity, 0) << "the sample should exercise the general transform path";
}

TEST(EntryDistance, MatchesReference) {
  const ImageBuf target = smooth_texture(32, 32, 11);
  const ImageBuf cand = noise_image(40, 40, 12);
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> pos(0.0, 30.0);
  std::uniform_real_distribution<double> ang(-0.7, 0.7);
  std::uniform_real_distribution<double> sc(0.9, 1.1);
  for (int trial = 0; trial < 30; ++trial) {
    PatchTransform t;
    t.sx = static_cast<float>(pos(rng));
    t.sy = static_cast<float>(pos(rng));
    t.theta = static_cast<float>(ang(rng));
    t.scale = static_cast<float>(sc(rng));
    t.reflect = trial % 2;
    const double d = entry_distance(target, cand, 5, 7, t, 8, 5.0);
    const double ref = testing::reference_distance(target, cand, 5, 7, t, 8, 5.0);
    EXPECT_NEAR(d, ref, 1e-9 * ref);
  }
}

TEST(NnfIo, RoundTrip) {
  testing::TempDir dir;
  NNF f(20, 18, 8, 3);
  std::mt19937 rng(5);
  std::uniform_real_distribution<float> u(0.0f, 10.0f);
  for (PatchTransform& e : f.entries) {
    e.sx = u(rng);
    e.sy = u(rng);
    e.scale = 0.95f;
    e.theta = -0.3f;
    e.reflect = u(rng) > 5.0f;
    e.dist = 1234.5;
  }
  const auto path = dir.path() / "f.nnf";
  write_nnf(f, path);
  EXPECT_EQ(std::filesystem::file_size(path), 16u + 29u * f.entries.size());
  const NNF g = read_nnf(path, 8);
  EXPECT_EQ(g.grid_w, f.grid_w);
  EXPECT_EQ(g.grid_h, f.grid_h);
  EXPECT_EQ(g.candidate, 3);
  for (size_t i = 0; i < f.entries.size(); ++i) {
    EXPECT_EQ(g.entries[i].sx, f.entries[i].sx);
    EXPECT_EQ(g.entries[i].sy, f.entries[i].sy);
    EXPECT_EQ(g.entries[i].scale, f.entries[i].scale);
    EXPECT_EQ(g.entries[i].theta, f.entries[i].theta);
    EXPECT_EQ(g.entries[i].reflect, f.entries[i].reflect);
    EXPECT_EQ(g.entries[i].dist, 1234.5);
  }
}

TEST(Search, ApproachesExhaustiveOnSmallPair) {
  const ImageBuf photo = load_image(testing::data_path("chelsea.png"));
  const ImageBuf small = resize_area(photo, 150, 100);
  const ImageBuf target = testing::crop(small, 10, 20, 32, 32);
  const ImageBuf cand = testing::crop(small, 70, 30, 40, 40);
  const auto ex = testing::exhaustive_nnf(target, cand, 8, 5.0);
  SearchConfig cfg = translation_only(8);
  cfg.search_radius = 0;
  cfg.seed = 1;
  const auto out = search(target, {random_nnf(target, cand, 8, 9)}, {cand}, cfg);
  double mean = 0.0;
  for (const PatchTransform& e : out[0].entries) mean += e.dist;
  mean /= out[0].entries.size();
  EXPECT_LE(mean, 1.05 * ex.mean());
}

}  // namespace
}  // namespace hallu
