#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "c2hm/errors.hpp"
#include "c2hm/tensor.hpp"

namespace c2hm {

// IDX payload shorter than its header promises.
class LengthError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Image and label files disagree.
class ConsistencyError : public FormatError {
 public:
  using FormatError::FormatError;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Unsigned-byte IDX array: big-endian magic (0x0000 08 <rank>), one
/// big-endian u32 per dimension, then row-major bytes.
struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;

  std::uint32_t magic() const { return 0x00000800u | static_cast<std::uint32_t>(dims.size()); }
};

IdxArray parse_idx(std::span<const std::uint8_t> bytes, std::uint32_t expected_magic);
std::vector<std::uint8_t> serialize_idx(const IdxArray& array);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);
bool is_gzip(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> gzip_bytes(std::span<const std::uint8_t> bytes);

struct LabeledDataset {
  Tensor images;  // [N x D], pixels in [0, 1]
  std::vector<std::size_t> labels;
  std::string split;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return images.cols(); }
  LabeledDataset slice(std::size_t begin, std::size_t count, std::string split_name) const;
  LabeledDataset gather(std::span<const std::size_t> rows) const;
};

LabeledDataset dataset_from_idx(const IdxArray& images, const IdxArray& labels);
IdxArray images_to_idx(const LabeledDataset& ds, std::uint32_t rows, std::uint32_t cols);

/// Reads an image/label pair of IDX files; gzip-compressed files are inflated.
/// Pixels are divided by 255.
LabeledDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

// Last `fraction` of the rows becomes the validation split.
std::pair<LabeledDataset, LabeledDataset> split_validation(const LabeledDataset& ds, double fraction);

/// psi = mixing * g(structure * phi_true) + noise, g = identity or tanh.
struct SyntheticLinearGaussian {
  Tensor mixing;     // A [D x k]
  Tensor structure;  // B [k x d]
  double sigma = 0.0;
  bool tanh_structure = false;
  Tensor phi_true;  // [N x d]
  Tensor psi;       // [N x D]

  std::size_t size() const { return phi_true.rows(); }
};

// A ~ N(0, 1/k), B ~ N(0, 1/d), phi ~ N(0, I), noise ~ N(0, sigma^2 I).
SyntheticLinearGaussian make_linear_gaussian(std::size_t D, std::size_t d, std::size_t k, std::size_t N, double sigma,
                                             std::uint64_t seed);

// N = 1000, d = 2, D = 20 with hidden width 8, tanh structure, sigma = 0.1.
SyntheticLinearGaussian make_delta_dataset(std::uint64_t seed);

}  // namespace c2hm
