#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <type_traits>
#include <vector>

#include <gtest/gtest.h>

#include "edm/feature_space.hpp"
#include "edm/score_net.hpp"
#include "edm/toyworld.hpp"
#include "test_support.hpp"

using namespace edm;

TEST(MakeClean, GaussianMean) {
  DomainSpec spec;
  spec.kind = DomainKind::gaussian2d;
  spec.clean_std = 0.3;
  const auto pts = make_clean(spec, 10000, 1);
  Vec sum = Vec::Zero(2);
  for (const auto& p : pts) sum += p.values;
  EXPECT_LT((sum / 10000.0).cwiseAbs().maxCoeff(), 0.01);
}

TEST(MakeClean, ImagesInRangeAndDeterministic) {
  DomainSpec spec;
  const auto a = make_clean(spec, 100, 3);
  const auto b = make_clean(spec, 100, 3);
  const auto c = make_clean(spec, 100, 4);
  ASSERT_EQ(a.size(), 100u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].height, 16u);
    EXPECT_EQ(a[i].width, 16u);
    EXPECT_LE(a[i].values.cwiseAbs().maxCoeff(), 1.0);
    EXPECT_EQ(a[i].values, b[i].values);
  }
  EXPECT_NE(a[0].values, c[0].values);
  EXPECT_THROW(make_clean(spec, 0, 1), ConfigError);
}

TEST(Corrupt, ZeroDeltaIsAShuffle) {
  DomainSpec spec;
  spec.delta = 0.0;
  const auto clean = make_clean(spec, 50, 5);
  const CorruptedSet r = corrupt(clean, spec, 6);
  ASSERT_EQ(r.rainy.size(), clean.size());
  bool moved = false;
  for (std::size_t j = 0; j < r.rainy.size(); ++j) {
    EXPECT_EQ(r.rainy[j].values, clean[r.pairing.clean_index(j)].values);
    moved |= r.pairing.clean_index(j) != j;
  }
  EXPECT_TRUE(moved);
  std::set<std::size_t> seen(r.pairing.table().begin(), r.pairing.table().end());
  EXPECT_EQ(seen.size(), clean.size());
}

TEST(Corrupt, StreaksChangePixels) {
  DomainSpec spec;
  const auto clean = make_clean(spec, 400, 7);
  const CorruptedSet r = corrupt(clean, spec, 8);
  double affected = 0.0;
  for (std::size_t j = 0; j < r.rainy.size(); ++j) {
    const Vec& c = clean[r.pairing.clean_index(j)].values;
    const Vec diff = r.rainy[j].values - c;
    EXPECT_GT(diff.squaredNorm() / 256.0, 0.0);
    EXPECT_LE(r.rainy[j].values.cwiseAbs().maxCoeff(), 1.0);
    affected += static_cast<double>((diff.array().abs() > 0.0).count()) / 256.0;
  }
  // Enumerate offsets of three independent wrapped diagonals: the expected
  // number of distinct diagonals among 16 equally likely ones.
  double distinct = 0.0;
  for (int a = 0; a < 16; ++a)
    for (int b = 0; b < 16; ++b)
      for (int c = 0; c < 16; ++c) distinct += static_cast<double>(std::set<int>{a, b, c}.size());
  distinct /= 16.0 * 16.0 * 16.0;
  const double expected = distinct * 16.0 / 256.0;
  EXPECT_NEAR(expected, 0.1760, 1e-4);
  EXPECT_NEAR(affected / static_cast<double>(r.rainy.size()), expected, 0.005);
  EXPECT_LE(expected, 3.0 * 16.0 / 256.0);
}

TEST(Corrupt, GaussianOffset) {
  DomainSpec spec;
  spec.kind = DomainKind::gaussian2d;
  const auto clean = make_clean(spec, 5000, 9);
  const CorruptedSet r = corrupt(clean, spec, 10);
  Vec shift = Vec::Zero(2);
  for (std::size_t j = 0; j < r.rainy.size(); ++j) shift += r.rainy[j].values - clean[r.pairing.clean_index(j)].values;
  shift /= 5000.0;
  EXPECT_NEAR(shift[0], 2.0, 0.01);
  EXPECT_NEAR(shift[1], 2.0, 0.01);
}

TEST(Corrupt, Errors) {
  DomainSpec spec;
  EXPECT_THROW(corrupt(std::vector<Sample>{}, spec, 1), ConfigError);
  EXPECT_THROW(corrupt_one(Sample::point(Vec::Zero(3)), spec, 1), DimensionError);
  EXPECT_THROW(parse_domain_kind("fog"), ConfigError);
}

TEST(Unpaired, TrainersNeverSeePairing) {
  // Trainers take plain sample spans; the pairing lives in its own type.
  static_assert(!std::is_convertible_v<CorruptedSet, std::span<const Sample>>);
  static_assert(!std::is_convertible_v<HiddenPairing, std::span<const Sample>>);
  static_assert(std::is_invocable_v<decltype(&train_prompts), const FeatureEncoder&, std::span<const Sample>,
                                    std::span<const Sample>, const TrainConfig&, double>);
  SUCCEED();
}

TEST(Pgm, EndpointsAndRounding) {
  EXPECT_EQ(pixel_to_value(0), -1.0);
  EXPECT_EQ(pixel_to_value(255), 1.0);
  EXPECT_EQ(value_to_pixel(-1.0), 0u);
  EXPECT_EQ(value_to_pixel(1.0), 255u);
  EXPECT_EQ(value_to_pixel(5.0), 255u);
  EXPECT_EQ(value_to_pixel(-5.0), 0u);
  // 0.0 sits exactly half-way between pixels 127 and 128.
  EXPECT_EQ(value_to_pixel(0.0), 128u);
  for (unsigned p = 0; p < 256; ++p) EXPECT_EQ(value_to_pixel(pixel_to_value(p)), p);
}

TEST(Pgm, RoundTripAndIdempotence) {
  test::TempDir dir("pgm");
  DomainSpec spec;
  const Sample img = corrupt_one(make_clean(spec, 1, 2)[0], spec, 3);
  save_pgm(img, dir / "a.pgm");
  const Sample once = load_pgm(dir / "a.pgm");
  EXPECT_EQ(once.height, 16u);
  EXPECT_LE((once.values - img.values).cwiseAbs().maxCoeff(), 1.0 / 127.5);
  save_pgm(once, dir / "b.pgm");
  EXPECT_EQ(load_pgm(dir / "b.pgm").values, once.values);
}

TEST(Pgm, HeaderCommentsAndErrors) {
  test::TempDir dir("pgmerr");
  {
    std::ofstream f(dir / "c.pgm", std::ios::binary);
    f << "P5\n# a comment\n2 1\n255\n";
    f.put(static_cast<char>(0));
    f.put(static_cast<char>(255));
  }
  const Sample s = load_pgm(dir / "c.pgm");
  EXPECT_EQ(s.width, 2u);
  EXPECT_EQ(s.values[0], -1.0);
  EXPECT_EQ(s.values[1], 1.0);
  {
    std::ofstream f(dir / "bad.pgm", std::ios::binary);
    f << "P2\n2 1\n255\n0 0\n";
  }
  EXPECT_THROW(load_pgm(dir / "bad.pgm"), FormatError);
  {
    std::ofstream f(dir / "short.pgm", std::ios::binary);
    f << "P5\n4 4\n255\n";
    f.put('a');
  }
  EXPECT_THROW(load_pgm(dir / "short.pgm"), FormatError);
  EXPECT_THROW(load_pgm(dir / "missing.pgm"), IoError);

  test::TempDir sized("pgmsize");
  save_pgm(Sample::image(Vec::Zero(4), 2, 2), sized / "x.pgm");
  EXPECT_THROW(load_image_dir(sized.path(), 16), FormatError);
  EXPECT_EQ(load_image_dir(sized.path(), 2).size(), 1u);
}

TEST(Points, RoundTrip) {
  test::TempDir dir("pts");
  const Sample p = Sample::point((Vec(2) << 0.1234567890123, -3.5).finished());
  save_point(p, dir / "p.tsv");
  EXPECT_EQ(load_sample(dir / "p.tsv").values, p.values);
}

namespace {

std::vector<Sample> blob(std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(Sample::point(rng.normal_vector(2)));
  return out;
}

}  // namespace

TEST(ClusterFilter, QuantileOneKeepsEverything) {
  const auto s = blob(60, 1);
  const FeatureEncoder id = FeatureEncoder::identity(2, Activation::identity);
  std::vector<std::size_t> all(60);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(cluster_filter_indices(s, id, 3, 1.0), all);
}

TEST(ClusterFilter, MedianCutKeepsCeilHalfInOrder) {
  const FeatureEncoder id = FeatureEncoder::identity(2, Activation::identity);
  for (std::size_t n : {7u, 10u, 101u}) {
    const auto s = blob(n, n);
    const auto kept = cluster_filter_indices(s, id, 1, 0.5);
    EXPECT_EQ(kept.size(), (n + 1) / 2);
    EXPECT_TRUE(std::is_sorted(kept.begin(), kept.end()));
  }
  // Ties resolved by original index.
  const std::vector<Sample> same(5, Sample::point(Vec::Ones(2)));
  EXPECT_EQ(cluster_filter_indices(same, id, 1, 0.5), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(ClusterFilter, DropsPlantedOutlier) {
  const FeatureEncoder id = FeatureEncoder::identity(2, Activation::identity);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto s = blob(150, 100 + seed);
    double radius = 0.0;
    for (const auto& p : s) radius = std::max(radius, p.values.norm());
    s.insert(s.begin() + 37, Sample::point(Vec::Constant(2, 100.0 * radius)));
    for (double q : {0.5, 0.9, 0.99}) {
      const auto kept = cluster_filter_indices(s, id, 1, q);
      EXPECT_EQ(std::count(kept.begin(), kept.end(), 37u), 0);
      EXPECT_LE(kept.size(), s.size());
    }
  }
}

TEST(ClusterFilter, Errors) {
  const FeatureEncoder id = FeatureEncoder::identity(2, Activation::identity);
  const auto s = blob(3, 1);
  EXPECT_THROW(cluster_filter_indices(s, id, 4, 0.5), ConfigError);
  EXPECT_THROW(cluster_filter_indices(s, id, 1, 0.0), ConfigError);
  EXPECT_EQ(cluster_filter(s, id, 1, 1.0).size(), 3u);
}
