#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include <zlib.h>

#include "rdbd/data.hpp"

using namespace rdbd;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> header(std::uint32_t magic, std::vector<std::uint32_t> dims) {
  std::vector<std::uint8_t> out;
  const auto put = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
  };
  put(magic);
  for (auto d : dims) put(d);
  return out;
}

fs::path scratch_dir(const std::string &name) {
  const auto dir = fs::temp_directory_path() / ("rdbd_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path &p, const std::vector<std::uint8_t> &bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_gzip(const fs::path &p, const std::vector<std::uint8_t> &bytes) {
  gzFile f = gzopen(p.string().c_str(), "wb");
  ASSERT_NE(f, nullptr);
  gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
  gzclose(f);
}

Dataset labelled(std::vector<int> labels, int classes) {
  Dataset d;
  d.features = FeatureMatrix::Zero(static_cast<Eigen::Index>(labels.size()), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) d.features(static_cast<Eigen::Index>(i), 0) = double(i);
  d.labels = std::move(labels);
  d.num_classes = classes;
  return d;
}

} // namespace

TEST(Idx, ParsesLabels) {
  auto bytes = header(0x801, {3});
  bytes.insert(bytes.end(), {7, 2, 1});
  const auto t = parse_idx(bytes);
  EXPECT_EQ(t.dims, std::vector<std::uint32_t>{3});
  EXPECT_EQ(t.data, (std::vector<std::uint8_t>{7, 2, 1}));
}

TEST(Idx, ParsesOneImage) {
  auto bytes = header(0x803, {1, 2, 2});
  bytes.insert(bytes.end(), {0, 64, 128, 255});
  const auto t = parse_idx(bytes);
  EXPECT_EQ(t.dims, (std::vector<std::uint32_t>{1, 2, 2}));
  EXPECT_EQ(t.count(), 1u);
}

TEST(Idx, RejectsMalformedStreams) {
  auto bad_magic = header(0x802, {1});
  bad_magic.push_back(0);
  EXPECT_THROW(parse_idx(bad_magic), IdxError);

  auto truncated = header(0x801, {5});
  truncated.insert(truncated.end(), {1, 2});
  EXPECT_THROW(parse_idx(truncated), IdxError);

  auto long_payload = header(0x801, {1});
  long_payload.insert(long_payload.end(), {1, 2});
  EXPECT_THROW(parse_idx(long_payload), IdxError);

  EXPECT_THROW(parse_idx(std::vector<std::uint8_t>{0, 0, 8}), IdxError);
  EXPECT_THROW(parse_idx(header(0x803, {1, 2})), IdxError);
}

TEST(Idx, RoundTripsRandomTensors) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> dim(1, 6), byte(0, 255);
  for (int trial = 0; trial < 100; ++trial) {
    IdxTensor t;
    t.dims = trial % 2 ? std::vector<std::uint32_t>{std::uint32_t(dim(rng))}
                       : std::vector<std::uint32_t>{std::uint32_t(dim(rng)), std::uint32_t(dim(rng)),
                                                    std::uint32_t(dim(rng))};
    std::size_t n = 1;
    for (auto d : t.dims) n *= d;
    for (std::size_t i = 0; i < n; ++i) t.data.push_back(static_cast<std::uint8_t>(byte(rng)));
    const auto back = parse_idx(serialize_idx(t));
    ASSERT_EQ(back.dims, t.dims);
    ASSERT_EQ(back.data, t.data);
  }
}

TEST(Idx, ReadsPlainAndGzipFiles) {
  const auto dir = scratch_dir("gzip");
  auto bytes = header(0x801, {4});
  bytes.insert(bytes.end(), {9, 8, 7, 6});
  write_file(dir / "plain", bytes);
  write_gzip(dir / "packed.gz", bytes);
  EXPECT_EQ(read_maybe_gzip(dir / "plain"), bytes);
  EXPECT_EQ(read_maybe_gzip(dir / "packed.gz"), bytes);
  EXPECT_THROW(read_maybe_gzip(dir / "absent"), DataMissing);
}

TEST(Mnist, LoadsSyntheticIdxDirectory) {
  const auto dir = scratch_dir("mnist");
  IdxTensor images{{3, 2, 2}, {0, 255, 51, 102, 1, 2, 3, 4, 5, 6, 7, 8}};
  IdxTensor labels{{3}, {4, 0, 9}};
  write_gzip(dir / "train-images-idx3-ubyte.gz", serialize_idx(images));
  write_file(dir / "train-labels-idx1-ubyte", serialize_idx(labels));
  const Dataset d = load_mnist(dir, true);
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.dim(), 4u);
  EXPECT_EQ(d.labels, (std::vector<int>{4, 0, 9}));
  EXPECT_DOUBLE_EQ(d.features(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(d.features(0, 2), 0.2);
  EXPECT_THROW(load_mnist(dir, false), DataMissing);
}

TEST(Mnist, LocateFallsBackToEnvironment) {
  EXPECT_EQ(locate_mnist(fs::path("/some/where")), fs::path("/some/where"));
  ::setenv("MNIST_DIR", "/env/dir", 1);
  EXPECT_EQ(locate_mnist(std::nullopt), fs::path("/env/dir"));
  ::unsetenv("MNIST_DIR");
  EXPECT_FALSE(locate_mnist(std::nullopt).has_value());
}

TEST(Stratified, FullSizeIsIdentity) {
  const auto d = labelled({2, 0, 1, 1, 0, 2, 2}, 3);
  const auto idx = stratified_indices(d, d.size(), 42);
  std::vector<std::size_t> expect(d.size());
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(idx, expect);
}

TEST(Stratified, OnePerClassAtMinimum) {
  std::vector<int> labels;
  for (int i = 0; i < 200; ++i) labels.push_back(i < 110 ? 0 : (i % 9) + 1);
  const auto d = labelled(labels, 10);
  const auto idx = stratified_indices(d, 10, 7);
  std::set<int> classes;
  for (auto i : idx) classes.insert(d.labels[i]);
  EXPECT_EQ(classes.size(), 10u);
}

TEST(Stratified, ProportionsWithinOneAndDeterministic) {
  std::vector<int> labels;
  for (int i = 0; i < 1000; ++i) labels.push_back(i % 7 == 0 ? 0 : (i % 3) + 1);
  const auto d = labelled(labels, 4);
  std::map<int, double> share;
  for (int l : labels) share[l] += 1.0 / 1000;
  for (std::size_t n : {50u, 123u, 400u}) {
    const auto idx = stratified_indices(d, n, 3);
    EXPECT_EQ(idx, stratified_indices(d, n, 3));
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), n);
    std::map<int, double> count;
    for (auto i : idx) count[d.labels[i]] += 1;
    for (auto [c, s] : share) EXPECT_LE(std::abs(count[c] - s * double(n)), 1.0);
  }
  EXPECT_NE(stratified_indices(d, 50, 3), stratified_indices(d, 50, 4));
  EXPECT_THROW(stratified_indices(d, 1001, 3), std::invalid_argument);
  EXPECT_THROW(stratified_indices(d, 3, 3), std::invalid_argument);
}

TEST(Blobs, DeterministicAndBalanced) {
  const auto a = synthetic_blobs(100, 5, 4, 9);
  const auto b = synthetic_blobs(100, 5, 4, 9);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(std::count(a.labels.begin(), a.labels.end(), 3), 25);
  EXPECT_NE(synthetic_blobs(100, 5, 4, 10).features, a.features);
  const auto one = synthetic_blobs(20, 3, 1, 1);
  EXPECT_TRUE(std::all_of(one.labels.begin(), one.labels.end(), [](int l) { return l == 0; }));
}

TEST(Blobs, SeparationSetsMeanGap) {
  const auto d = synthetic_blobs(20000, 3, 2, 5, 6.0);
  Eigen::RowVectorXd m0 = Eigen::RowVectorXd::Zero(3), m1 = m0;
  for (std::size_t i = 0; i < d.size(); ++i) (d.labels[i] ? m1 : m0) += d.features.row(Eigen::Index(i));
  EXPECT_NEAR((m1 - m0).norm() / 10000.0, 6.0, 0.1);
}

TEST(BatchSampler, EachEpochIsAPermutation) {
  BatchSampler s(10, 3, 77);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::vector<std::size_t> seen;
    std::vector<std::size_t> sizes;
    for (int b = 0; b < 4; ++b) {
      const auto batch = s.next();
      sizes.push_back(batch.size());
      seen.insert(seen.end(), batch.begin(), batch.end());
    }
    EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 3, 3, 1}));
    std::sort(seen.begin(), seen.end());
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(seen[i], i);
  }
}

TEST(BatchSampler, SeededAndValidated) {
  BatchSampler a(50, 5, 1), b(50, 5, 1), c(50, 5, 2);
  bool differs = false;
  for (int i = 0; i < 20; ++i) {
    const auto x = a.next(), y = b.next(), z = c.next();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin(), y.end()));
    differs |= !std::equal(x.begin(), x.end(), z.begin(), z.end());
  }
  EXPECT_TRUE(differs);
  EXPECT_THROW(BatchSampler(0, 1, 1), std::invalid_argument);
  EXPECT_THROW(BatchSampler(5, 6, 1), std::invalid_argument);
  EXPECT_THROW(BatchSampler(5, 0, 1), std::invalid_argument);
}

TEST(Seeds, StreamsAreDistinct) {
  std::set<std::uint64_t> all;
  for (std::uint64_t m = 0; m < 50; ++m) {
    for (auto s : {SeedStream::Data, SeedStream::Init, SeedStream::Batches, SeedStream::Subset}) {
      all.insert(derive_seed(m, s));
    }
  }
  EXPECT_EQ(all.size(), 200u);
  EXPECT_EQ(derive_seed(3, SeedStream::Init), derive_seed(3, SeedStream::Init));
}
