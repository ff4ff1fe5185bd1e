#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rdbd {

class IdxError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Raised when an optional input dataset cannot be found.
class DataMissing : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// An unsigned-byte IDX tensor: labels (1 dim) or images (3 dims).
struct IdxTensor {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;

  std::size_t count() const { return dims.empty() ? 0 : dims.front(); }
};

inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

/// Parses a raw (already decompressed) IDX byte stream.
IdxTensor parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_idx(const IdxTensor &t);

/// Reads a file, inflating it first when it carries a gzip header.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path &path);

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row-per-sample features with integer class labels.
struct Dataset {
  FeatureMatrix features;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }

  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

/// Pixels scaled by 1/255; images must be n x rows x cols.
Dataset dataset_from_idx(const IdxTensor &images, const IdxTensor &labels, int num_classes = 10);

/// Resolves the MNIST directory from an explicit flag, else $MNIST_DIR.
std::optional<std::filesystem::path> locate_mnist(const std::optional<std::filesystem::path> &flag);

/// Loads train (or t10k) MNIST from `dir`; plain or .gz files. Throws DataMissing.
Dataset load_mnist(const std::filesystem::path &dir, bool train = true);

/**
 * Deterministic stratified sample of n rows; per-class counts follow the
 * original class proportions within +-1 and every class present in the
 * data keeps at least one row. Indices are returned in ascending order.
 */
std::vector<std::size_t> stratified_indices(const Dataset &data, std::size_t n, std::uint64_t seed);
Dataset mnist_subset(const Dataset &data, std::size_t n, std::uint64_t seed);

/**
 * Gaussian clusters with unit covariance. `separation` is the distance
 * between cluster means in units of the noise standard deviation; labels
 * cycle through classes so counts are balanced.
 */
Dataset synthetic_blobs(std::size_t n, std::size_t dim, int num_classes, std::uint64_t seed,
                        double separation = 2.0);

/// Without-replacement mini-batch sampler, reshuffled every epoch.
class BatchSampler {
public:
  BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);

  /// The next batch; the final batch of an epoch may be short.
  std::span<const std::size_t> next();

  std::size_t batch_size() const { return batch_size_; }
  std::size_t epoch() const { return epoch_; }

private:
  void reshuffle();

  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

/// Counter-based split of one master seed into independent streams.
enum class SeedStream : std::uint64_t { Data = 1, Init = 2, Batches = 3, Subset = 4 };
std::uint64_t derive_seed(std::uint64_t master, SeedStream stream);
std::uint64_t splitmix64(std::uint64_t x);

} // namespace rdbd
