#include "c2hm/data_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "c2hm/rng.hpp"

namespace c2hm {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

}  // namespace

IdxArray parse_idx(std::span<const std::uint8_t> bytes, std::uint32_t expected_magic) {
  if (bytes.size() < 4) throw LengthError("IDX file shorter than its magic number");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != expected_magic) {
    throw FormatError("IDX magic " + hex32(magic) + " does not match expected " + hex32(expected_magic));
  }
  const std::size_t rank = magic & 0xff;
  const std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header) throw LengthError("IDX header truncated");
  IdxArray a;
  std::size_t payload = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    a.dims.push_back(read_be32(bytes, 4 + 4 * i));
    payload *= a.dims.back();
  }
  if (bytes.size() < header + payload) {
    throw LengthError("IDX payload truncated: header promises " + std::to_string(payload) + " bytes, file has " +
                      std::to_string(bytes.size() - header));
  }
  if (bytes.size() > header + payload) {
    throw LengthError("IDX file has " + std::to_string(bytes.size() - header - payload) + " trailing bytes");
  }
  a.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return a;
}

std::vector<std::uint8_t> serialize_idx(const IdxArray& a) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + 4 * a.dims.size() + a.data.size());
  write_be32(out, a.magic());
  for (auto d : a.dims) write_be32(out, d);
  out.insert(out.end(), a.data.begin(), a.data.end());
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

bool is_gzip(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw std::runtime_error("zlib init failed");
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = buf;
    zs.avail_out = sizeof buf;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw LengthError("gzip stream corrupt or truncated");
    }
    out.insert(out.end(), buf, buf + (sizeof buf - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw LengthError("gzip stream truncated");
    }
  }
  inflateEnd(&zs);
  return out;
}

std::vector<std::uint8_t> gzip_bytes(std::span<const std::uint8_t> bytes) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, 16 + MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw std::runtime_error("zlib init failed");
  }
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(bytes.size())) + 32);
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw std::runtime_error("gzip compression failed");
  out.resize(zs.total_out);
  return out;
}

LabeledDataset LabeledDataset::slice(std::size_t begin, std::size_t count, std::string split_name) const {
  if (begin + count > size()) throw ContractError("dataset slice out of range");
  std::vector<std::size_t> rows(count);
  for (std::size_t i = 0; i < count; ++i) rows[i] = begin + i;
  auto out = gather(rows);
  out.split = std::move(split_name);
  return out;
}

LabeledDataset LabeledDataset::gather(std::span<const std::size_t> rows) const {
  if (rows.empty()) throw ContractError("dataset gather: no rows");
  const auto D = dim();
  LabeledDataset out;
  out.images = Tensor({rows.size(), D});
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i];
    std::copy_n(images.data() + r * D, D, out.images.data() + i * D);
    out.labels.push_back(labels[r]);
  }
  out.split = split;
  return out;
}

LabeledDataset dataset_from_idx(const IdxArray& images, const IdxArray& labels) {
  if (images.dims.size() != 3) throw FormatError("image IDX must have rank 3");
  if (labels.dims.size() != 1) throw FormatError("label IDX must have rank 1");
  if (images.dims[0] != labels.dims[0]) {
    throw ConsistencyError("image count " + std::to_string(images.dims[0]) + " differs from label count " +
                           std::to_string(labels.dims[0]));
  }
  const std::size_t n = images.dims[0];
  const std::size_t D = std::size_t{images.dims[1]} * images.dims[2];
  if (n == 0 || D == 0) throw FormatError("IDX dataset is empty");
  LabeledDataset ds;
  ds.images = Tensor({n, D});
  for (std::size_t i = 0; i < n * D; ++i) ds.images[i] = images.data[i] / 255.0;
  ds.labels.assign(labels.data.begin(), labels.data.end());
  ds.split = "all";
  return ds;
}

IdxArray images_to_idx(const LabeledDataset& ds, std::uint32_t rows, std::uint32_t cols) {
  if (std::size_t{rows} * cols != ds.dim()) throw ShapeError("images_to_idx: rows*cols must equal image dimension");
  IdxArray a;
  a.dims = {static_cast<std::uint32_t>(ds.size()), rows, cols};
  a.data.resize(ds.images.size());
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    a.data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(ds.images[i], 0.0, 1.0) * 255.0));
  }
  return a;
}

LabeledDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  auto load = [](const std::string& path, std::uint32_t magic) {
    auto bytes = read_file_bytes(path);
    if (is_gzip(bytes)) bytes = gunzip(bytes);
    try {
      return parse_idx(bytes, magic);
    } catch (const LengthError& e) {
      throw LengthError(path + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path + ": " + e.what());
    }
  };
  return dataset_from_idx(load(images_path, kIdxImageMagic), load(labels_path, kIdxLabelMagic));
}

std::pair<LabeledDataset, LabeledDataset> split_validation(const LabeledDataset& ds, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ContractError("validation fraction must lie in (0, 1)");
  const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
  if (n_val == 0 || n_val >= ds.size()) throw ContractError("dataset too small for a validation split");
  return {ds.slice(0, ds.size() - n_val, "train"), ds.slice(ds.size() - n_val, n_val, "validation")};
}

namespace {

Tensor gaussian_matrix(SeededRng& rng, std::size_t rows, std::size_t cols, double sd) {
  return sd * rng_standard_normal(rng, {rows, cols});
}

SyntheticLinearGaussian generate(std::size_t D, std::size_t d, std::size_t k, std::size_t N, double sigma,
                                 bool tanh_structure, std::uint64_t seed) {
  if (!(d <= k && k <= D)) {
    throw ContractError("synthetic data needs d <= k <= D, got d=" + std::to_string(d) + " k=" + std::to_string(k) +
                        " D=" + std::to_string(D));
  }
  if (N == 0) throw ContractError("synthetic data needs N >= 1");
  if (sigma < 0.0) throw ContractError("noise sigma must be non-negative");
  SeededRng rng(seed);
  SyntheticLinearGaussian s;
  s.mixing = gaussian_matrix(rng, D, k, 1.0 / std::sqrt(static_cast<double>(k)));
  s.structure = gaussian_matrix(rng, k, d, 1.0 / std::sqrt(static_cast<double>(d)));
  s.sigma = sigma;
  s.tanh_structure = tanh_structure;
  s.phi_true = rng_standard_normal(rng, {N, d});
  s.psi = Tensor({N, D});
  std::vector<double> h(k);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t i = 0; i < k; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += s.structure.at(i, j) * s.phi_true.at(n, j);
      h[i] = tanh_structure ? std::tanh(acc) : acc;
    }
    for (std::size_t r = 0; r < D; ++r) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += s.mixing.at(r, i) * h[i];
      s.psi.at(n, r) = acc;
    }
  }
  if (sigma > 0.0) {
    for (double& v : s.psi.values()) v += sigma * rng.standard_normal();
  }
  return s;
}

}  // namespace

SyntheticLinearGaussian make_linear_gaussian(std::size_t D, std::size_t d, std::size_t k, std::size_t N, double sigma,
                                             std::uint64_t seed) {
  return generate(D, d, k, N, sigma, false, seed);
}

SyntheticLinearGaussian make_delta_dataset(std::uint64_t seed) { return generate(20, 2, 8, 1000, 0.1, true, seed); }

}  // namespace c2hm
