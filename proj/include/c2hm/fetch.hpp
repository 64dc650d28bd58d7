#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace c2hm {

class FetchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kMirrorEnv = "C2HM_MNIST_MIRROR";
inline constexpr const char* kDefaultMnistMirror = "https://storage.googleapis.com/cvdf-datasets/mnist/";

// Non-empty flag value, else the C2HM_MNIST_MIRROR environment variable, else the default mirror.
std::string resolve_mirror(const std::string& flag_value);

/// GET over http(s), or a read for file:// URLs. Throws FetchError on
/// transport errors, non-200 status, or a body shorter or longer than the
/// announced Content-Length.
std::vector<std::uint8_t> fetch_url(const std::string& url);

/// Inflates (when gzipped) and parses the payload as IDX with the expected
/// magic; returns the item count. Truncated payloads throw.
std::size_t verify_idx_payload(std::span<const std::uint8_t> bytes, std::uint32_t magic);

struct FetchedFile {
  std::string name;
  std::string path;
  std::size_t bytes = 0;
  std::size_t items = 0;
};

// The four standard MNIST archives, verified and written under out_dir.
std::vector<FetchedFile> fetch_mnist(const std::string& mirror, const std::string& out_dir);

}  // namespace c2hm
