#include "rdbd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>

#include <zlib.h>

namespace rdbd {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

void write_be32(std::vector<std::uint8_t> &out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t> &in) {
  z_stream zs{};
  // 16 + MAX_WBITS selects gzip framing.
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) {
    throw IdxError("zlib initialisation failed");
  }
  zs.next_in = const_cast<Bytef *>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());

  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 16);
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw IdxError("corrupt gzip stream");
    }
    out.insert(out.end(), chunk.begin(), chunk.begin() + (chunk.size() - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw IdxError("truncated gzip stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

} // namespace

IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) {
    throw IdxError("IDX stream shorter than its magic number");
  }
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxLabelMagic && magic != kIdxImageMagic) {
    throw IdxError("bad IDX magic");
  }
  const std::size_t ndims = magic & 0xFF;
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header) {
    throw IdxError("truncated IDX header");
  }

  IdxTensor t;
  std::size_t total = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    const std::uint32_t d = read_be32(bytes, 4 + 4 * i);
    if (d != 0 && total > std::numeric_limits<std::size_t>::max() / d) {
      throw IdxError("IDX dimensions overflow");
    }
    total *= d;
    t.dims.push_back(d);
  }
  const std::size_t payload = bytes.size() - header;
  if (payload < total) {
    throw IdxError("truncated IDX payload: header claims " + std::to_string(total) + " bytes, found " +
                   std::to_string(payload));
  }
  if (payload > total) {
    throw IdxError("IDX payload longer than header claims");
  }
  t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return t;
}

std::vector<std::uint8_t> serialize_idx(const IdxTensor &t) {
  if (t.dims.size() != 1 && t.dims.size() != 3) {
    throw IdxError("only 1-d label and 3-d image tensors are serialisable");
  }
  std::size_t total = 1;
  for (auto d : t.dims) total *= d;
  if (total != t.data.size()) {
    throw IdxError("IDX tensor data does not match its dims");
  }
  std::vector<std::uint8_t> out;
  out.reserve(4 + 4 * t.dims.size() + t.data.size());
  write_be32(out, t.dims.size() == 1 ? kIdxLabelMagic : kIdxImageMagic);
  for (auto d : t.dims) write_be32(out, d);
  out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataMissing("cannot open " + path.string());
  }
  std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b) {
    return gunzip(raw);
  }
  return raw;
}

void Dataset::validate() const {
  if (labels.empty()) {
    throw std::invalid_argument("dataset must have at least one sample");
  }
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw std::invalid_argument("feature rows and label count differ");
  }
  if (num_classes < 1) {
    throw std::invalid_argument("num_classes must be positive");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw std::invalid_argument("label out of range");
    }
  }
  if (!features.allFinite()) {
    throw std::invalid_argument("features must be finite");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.num_classes = num_classes;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) {
      throw std::out_of_range("subset index out of range");
    }
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(indices[i]));
    out.labels.push_back(labels[indices[i]]);
  }
  return out;
}

Dataset dataset_from_idx(const IdxTensor &images, const IdxTensor &labels, int num_classes) {
  if (images.dims.size() != 3 || labels.dims.size() != 1) {
    throw IdxError("expected a 3-d image tensor and a 1-d label tensor");
  }
  if (images.dims[0] != labels.dims[0]) {
    throw IdxError("image and label counts differ");
  }
  const std::size_t n = images.dims[0];
  const std::size_t pixels = static_cast<std::size_t>(images.dims[1]) * images.dims[2];
  Dataset d;
  d.num_classes = num_classes;
  d.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(pixels));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < pixels; ++j) {
      d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          static_cast<double>(images.data[i * pixels + j]) / 255.0;
    }
  }
  d.labels.assign(labels.data.begin(), labels.data.end());
  d.validate();
  return d;
}

std::optional<std::filesystem::path> locate_mnist(const std::optional<std::filesystem::path> &flag) {
  if (flag && !flag->empty()) {
    return flag;
  }
  if (const char *env = std::getenv("MNIST_DIR"); env != nullptr && *env != '\0') {
    return std::filesystem::path(env);
  }
  return std::nullopt;
}

Dataset load_mnist(const std::filesystem::path &dir, bool train) {
  const std::string prefix = train ? "train" : "t10k";
  const auto find = [&](const std::string &stem) {
    for (const auto &name : {stem, stem + ".gz"}) {
      const auto p = dir / name;
      if (std::filesystem::exists(p)) return p;
    }
    throw DataMissing("MNIST file " + stem + " not found in " + dir.string());
  };
  const auto images = parse_idx(read_maybe_gzip(find(prefix + "-images-idx3-ubyte")));
  const auto labels = parse_idx(read_maybe_gzip(find(prefix + "-labels-idx1-ubyte")));
  return dataset_from_idx(images, labels, 10);
}

std::vector<std::size_t> stratified_indices(const Dataset &data, std::size_t n, std::uint64_t seed) {
  const std::size_t total = data.size();
  if (n > total) {
    throw std::invalid_argument("subset larger than dataset");
  }
  if (n < static_cast<std::size_t>(data.num_classes)) {
    throw std::invalid_argument("subset must hold at least one sample per class");
  }
  if (n == total) {
    std::vector<std::size_t> all(total);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }

  const auto k = static_cast<std::size_t>(data.num_classes);
  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t i = 0; i < total; ++i) {
    by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  }

  // Largest-remainder allocation of n proportional to class counts.
  std::vector<std::size_t> quota(k);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double exact = static_cast<double>(n) * static_cast<double>(by_class[c].size()) /
                         static_cast<double>(total);
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    remainders.emplace_back(exact - static_cast<double>(quota[c]), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto &a, const auto &b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) {
    ++quota[remainders[i % k].second];
  }

  // Every present class keeps one row, taken from the largest quota.
  for (std::size_t c = 0; c < k; ++c) {
    if (quota[c] == 0 && !by_class[c].empty()) {
      const auto donor = static_cast<std::size_t>(
          std::distance(quota.begin(), std::max_element(quota.begin(), quota.end())));
      --quota[donor];
      quota[c] = 1;
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t c = 0; c < k; ++c) {
    auto pool = by_class[c];
    std::shuffle(pool.begin(), pool.end(), rng);
    out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(quota[c]));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Dataset mnist_subset(const Dataset &data, std::size_t n, std::uint64_t seed) {
  const auto idx = stratified_indices(data, n, seed);
  return data.subset(idx);
}

Dataset synthetic_blobs(std::size_t n, std::size_t dim, int num_classes, std::uint64_t seed, double separation) {
  if (num_classes < 1 || dim < 1) {
    throw std::invalid_argument("synthetic_blobs needs dim >= 1 and num_classes >= 1");
  }
  if (n < static_cast<std::size_t>(num_classes)) {
    throw std::invalid_argument("synthetic_blobs needs n >= num_classes");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto random_unit = [&] {
    Eigen::VectorXd u(static_cast<Eigen::Index>(dim));
    do {
      for (auto &e : u) e = normal(rng);
    } while (u.norm() == 0.0);
    return Eigen::VectorXd(u.normalized());
  };

  std::vector<Eigen::VectorXd> means;
  if (num_classes == 2) {
    const Eigen::VectorXd u = random_unit();
    means = {0.5 * separation * u, -0.5 * separation * u};
  } else {
    for (int c = 0; c < num_classes; ++c) {
      means.push_back((separation / std::sqrt(2.0)) * random_unit());
    }
  }

  Dataset d;
  d.num_classes = num_classes;
  d.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % static_cast<std::size_t>(num_classes));
    d.labels[i] = c;
    for (std::size_t j = 0; j < dim; ++j) {
      d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          means[static_cast<std::size_t>(c)][static_cast<Eigen::Index>(j)] + normal(rng);
    }
  }
  return d;
}

BatchSampler::BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_size_(batch_size), seed_(seed), order_(n) {
  if (n == 0) {
    throw std::invalid_argument("BatchSampler over an empty dataset");
  }
  if (batch_size == 0 || batch_size > n) {
    throw std::invalid_argument("batch size must lie in [1, n]");
  }
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::iota(order_.begin(), order_.end(), 0);
  std::mt19937_64 rng(splitmix64(seed_ + 0x9E3779B97F4A7C15ULL * (epoch_ + 1)));
  std::shuffle(order_.begin(), order_.end(), rng);
  cursor_ = 0;
}

std::span<const std::size_t> BatchSampler::next() {
  if (cursor_ >= n_) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t len = std::min(batch_size_, n_ - cursor_);
  std::span<const std::size_t> batch(order_.data() + cursor_, len);
  cursor_ += len;
  return batch;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, SeedStream stream) {
  return splitmix64(splitmix64(master) ^ (static_cast<std::uint64_t>(stream) * 0xD1B54A32D192ED03ULL));
}

} // namespace rdbd
