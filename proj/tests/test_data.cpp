#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "sps/data.hpp"
#include "sps/error.hpp"
#include "sps/instrument.hpp"
#include "sps/util.hpp"
#include "test_support.hpp"

namespace {

using namespace sps;
using sps::testing::random_mask;
using sps::testing::small_corpus;
namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sps_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double mean_intensity(const std::vector<ImageSample>& samples) {
  double total = 0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    for (float v : s.image.pixels) total += v;
    n += s.image.pixels.size();
  }
  return total / static_cast<double>(n);
}

BoxPrompt scan_box(const BinaryMask& m) {
  BoxPrompt b{int(m.rows()), int(m.cols()), -1, -1};
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      if (m(r, c)) b = {std::min(b.row_min, r), std::min(b.col_min, c), std::max(b.row_max, r), std::max(b.col_max, c)};
    }
  }
  return b;
}

void write_gray(const fs::path& path, int size, const std::vector<std::uint8_t>& levels, std::uint64_t seed) {
  Raster r;
  r.width = r.height = size;
  r.channels = 1;
  r.data.resize(static_cast<std::size_t>(size) * size);
  std::mt19937_64 rng(seed);
  for (auto& v : r.data) v = levels[rng() % levels.size()];
  write_png(path.string(), r);
}

TEST(Data, GenerationIsDeterministic) {
  const CorpusSpec spec = small_corpus(32, 6, 4, 9);
  const auto a = generate_corpus(spec);
  const auto b = generate_corpus(spec);
  ASSERT_EQ(a.size(), 16u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].mask, b[i].mask);
  }
  CorpusSpec other = spec;
  other.seed = 10;
  EXPECT_NE(generate_corpus(other)[0].image, a[0].image);
}

TEST(Data, DefaultCorpusCounts) {
  CorpusSpec spec;
  spec.image_size = 32;
  spec.min_radius = 3;
  spec.max_radius = 7;
  const auto c = generate_corpus(spec);
  EXPECT_EQ(select(c, Domain::kSource, Split::kTrain).size(), 200u);
  EXPECT_EQ(select(c, Domain::kTarget, Split::kTrain).size(), 200u);
  EXPECT_EQ(select(c, Domain::kTarget, Split::kTest).size(), 50u);
  EXPECT_EQ(select(c, Domain::kSource, Split::kTest).size(), 0u);
}

TEST(Data, MasksAreBinaryAndNonEmpty) {
  const auto c = generate_corpus(small_corpus(32, 30, 10, 3));
  for (const auto& s : c) {
    EXPECT_GT(s.mask.cast<int>().sum(), 0) << s.id;
    EXPECT_LE(s.mask.maxCoeff(), 1);
    for (float v : s.image.pixels) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
}

TEST(Data, IdsAreUniqueAndTrainTestDisjoint) {
  const CorpusSpec spec = small_corpus(32, 20, 20, 4);
  const auto c = generate_corpus(spec);
  std::set<std::string> ids;
  for (const auto& s : c) EXPECT_TRUE(ids.insert(s.id).second) << s.id;
  const auto train = select(c, Domain::kTarget, Split::kTrain);
  const auto test = select(c, Domain::kTarget, Split::kTest);
  for (const auto& a : train) {
    for (const auto& b : test) EXPECT_FALSE(a.image == b.image && a.mask == b.mask);
  }
  for (const auto& s : generate_source_test(spec, 5)) EXPECT_TRUE(ids.insert(s.id).second) << s.id;
}

TEST(Data, MaskIsPreservedAcrossDomains) {
  const CorpusSpec spec = small_corpus(32, 1, 1, 5);
  for (int i = 0; i < 20; ++i) {
    const Geometry g = sample_geometry(spec, sample_seed(spec.seed, 0, i));
    const auto src = render_sample(spec, g, Domain::kSource, 1);
    const auto tgt = render_sample(spec, g, Domain::kTarget, 1);
    EXPECT_EQ(src.mask, tgt.mask);
    EXPECT_EQ(src.mask, rasterize(g, spec.image_size));
    EXPECT_NE(src.image, tgt.image);
  }
}

// With matching contrast and no blur or noise the two domains render the
// same distribution.
TEST(Data, EqualContrastDomainsShareDistribution) {
  CorpusSpec spec = small_corpus(32, 1, 1, 6);
  spec.target_contrast = spec.source_contrast;
  spec.target_noise_std = 0;
  spec.blur_radius = 0;
  const auto src = generate_group(spec, Domain::kSource, Split::kTrain, 500, 0);
  const auto tgt = generate_group(spec, Domain::kTarget, Split::kTrain, 500, 1);
  EXPECT_LT(std::abs(mean_intensity(src) - mean_intensity(tgt)), 0.01);

  const Geometry g = sample_geometry(spec, 77);
  EXPECT_EQ(render_sample(spec, g, Domain::kSource, 1).image, render_sample(spec, g, Domain::kTarget, 2).image);
}

TEST(Data, TargetDomainHasLowerContrast) {
  const CorpusSpec spec = small_corpus(32, 1, 1, 7);
  double src_gap = 0, tgt_gap = 0;
  for (int i = 0; i < 50; ++i) {
    const Geometry g = sample_geometry(spec, sample_seed(spec.seed, 0, i));
    for (Domain d : {Domain::kSource, Domain::kTarget}) {
      const auto s = render_sample(spec, g, d, i);
      double fg = 0, bg = 0;
      int nf = 0, nb = 0;
      for (int r = 0; r < 32; ++r) {
        for (int c = 0; c < 32; ++c) {
          (s.mask(r, c) ? fg : bg) += s.image.at(r, c);
          (s.mask(r, c) ? nf : nb)++;
        }
      }
      if (nf == 0 || nb == 0) continue;
      (d == Domain::kSource ? src_gap : tgt_gap) += std::abs(fg / nf - bg / nb);
    }
  }
  EXPECT_GT(src_gap, 2 * tgt_gap);
}

TEST(Data, SpecValidation) {
  CorpusSpec s;
  s.max_radius = 40;
  EXPECT_THROW(s.validate(), GenerationError);
  s = CorpusSpec{};
  s.target_contrast = 0.9;
  EXPECT_THROW(s.validate(), ConfigError);
  s = CorpusSpec{};
  s.n_train = 0;
  EXPECT_THROW(s.validate(), ConfigError);
  const CorpusSpec d;
  const CorpusSpec back = CorpusSpec::from_key_values(parse_key_values(d.to_text()));
  EXPECT_EQ(back.to_text(), d.to_text());
  EXPECT_THROW(CorpusSpec::from_key_values({{"bogus", "1"}}), ConfigError);
}

TEST(Data, GtBoxHandExamples) {
  BinaryMask m = BinaryMask::Zero(6, 6);
  m(1, 4) = 1;
  EXPECT_EQ(gt_box(m), (BoxPrompt{1, 4, 1, 4}));
  m(3, 2) = 1;
  EXPECT_EQ(gt_box(m), (BoxPrompt{1, 2, 3, 4}));
  EXPECT_THROW(gt_box(BinaryMask::Zero(3, 3)), InputError);
}

TEST(Data, GtBoxMatchesScan) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 100; ++t) {
    BinaryMask m = random_mask(20, 20, 0.03, rng);
    m(rng() % 20, rng() % 20) = 1;
    EXPECT_EQ(gt_box(m), scan_box(m));
  }
}

TEST(Data, GtPointOnSinglePixel) {
  BinaryMask m = BinaryMask::Zero(5, 5);
  m(2, 3) = 1;
  for (auto strategy : {PointStrategy::kRandom, PointStrategy::kCenter}) {
    EXPECT_EQ(gt_point(m, strategy, 1), (PointPrompt{2, 3, true}));
  }
  EXPECT_THROW(gt_point(BinaryMask::Zero(3, 3), PointStrategy::kCenter, 0), InputError);
}

TEST(Data, GtCenterPointOfDisk) {
  BinaryMask m = BinaryMask::Zero(21, 21);
  for (int r = 0; r < 21; ++r) {
    for (int c = 0; c < 21; ++c) m(r, c) = (r - 10) * (r - 10) + (c - 10) * (c - 10) <= 25;
  }
  EXPECT_EQ(gt_point(m, PointStrategy::kCenter, 0), (PointPrompt{10, 10, true}));
}

TEST(Data, GtRandomPointIsUniformOverForeground) {
  BinaryMask m = BinaryMask::Zero(4, 4);
  m(0, 0) = 1;
  m(3, 3) = 1;
  int first = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto p = gt_point(m, PointStrategy::kRandom, i);
    ASSERT_TRUE(m(p.row, p.col));
    first += p.row == 0;
  }
  EXPECT_NEAR(first / double(n), 0.5, 0.02);
}

TEST(Data, GtPromptsAreCounted) {
  BinaryMask m = BinaryMask::Zero(4, 4);
  m(1, 1) = 1;
  counters().reset();
  gt_point(m, PointStrategy::kRandom, 0);
  gt_point(m, PointStrategy::kCenter, 0);
  EXPECT_EQ(counters().ground_truth_prompts.load(), 2);
}

TEST(Data, CorpusRoundTrip) {
  const fs::path dir = temp_dir("roundtrip");
  const auto c = generate_corpus(small_corpus(32, 3, 2, 10));
  write_corpus(dir.string(), c);
  const auto back = read_corpus(dir.string());
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(back[i].id, c[i].id);
    EXPECT_EQ(back[i].split, c[i].split);
    EXPECT_EQ(back[i].domain, c[i].domain);
    EXPECT_EQ(back[i].mask, c[i].mask);
    // Pixels are stored on the 8-bit grid, so they survive PNG exactly.
    EXPECT_EQ(back[i].image, c[i].image);
  }
  fs::remove_all(dir);
}

TEST(Data, LoadDirectorySplitsByRatio) {
  const fs::path dir = temp_dir("load");
  fs::create_directories(dir / "img");
  fs::create_directories(dir / "mask");
  for (int i = 0; i < 10; ++i) {
    const std::string name = "case" + std::to_string(i) + ".png";
    write_gray(dir / "img" / name, 40, {10, 90, 200}, i);
    write_gray(dir / "mask" / name, 40, {0, 255}, 100 + i);
  }
  const auto a = load_directory((dir / "img").string(), (dir / "mask").string(), 0.7, 32, 1);
  ASSERT_EQ(a.size(), 10u);
  int train = 0;
  for (const auto& s : a) {
    train += s.split == Split::kTrain;
    EXPECT_EQ(s.image.height, 32);
    EXPECT_EQ(s.mask.rows(), 32);
    EXPECT_EQ(s.domain, Domain::kTarget);
  }
  EXPECT_EQ(train, 7);
  const auto b = load_directory((dir / "img").string(), (dir / "mask").string(), 0.7, 32, 1);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].split, b[i].split);
  }
  fs::remove_all(dir);
}

TEST(Data, LoadDirectoryRejectsBadInput) {
  const fs::path dir = temp_dir("bad");
  fs::create_directories(dir / "img");
  fs::create_directories(dir / "mask");
  write_gray(dir / "img" / "a.png", 16, {0, 128}, 1);
  write_gray(dir / "mask" / "a.png", 16, {0, 128, 255}, 2);
  EXPECT_THROW(load_directory((dir / "img").string(), (dir / "mask").string(), 0.5, 16, 1), IngestionError);
  write_gray(dir / "mask" / "a.png", 16, {0, 255}, 2);
  write_gray(dir / "img" / "b.png", 16, {0, 128}, 3);
  EXPECT_THROW(load_directory((dir / "img").string(), (dir / "mask").string(), 0.5, 16, 1), IngestionError);
  EXPECT_THROW(load_directory((dir / "nope").string(), (dir / "mask").string(), 0.5, 16, 1), IngestionError);
  EXPECT_THROW(load_directory((dir / "img").string(), (dir / "mask").string(), 1.5, 16, 1), ConfigError);
  fs::remove_all(dir);
}

TEST(Data, ResizeHelpers) {
  BinaryMask m = BinaryMask::Zero(4, 4);
  m(0, 0) = 1;
  const BinaryMask up = resize_nearest(m, 8);
  EXPECT_EQ(up.cast<int>().sum(), 4);
  EXPECT_EQ(up(1, 1), 1);
  Image flat(5, 5, 1);
  for (auto& p : flat.pixels) p = 0.25f;
  for (float v : resize_bilinear(flat, 9).pixels) EXPECT_NEAR(v, 0.25f, 1e-6f);
}

}  // namespace
