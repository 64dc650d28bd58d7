#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "c2hm/fetch.hpp"

#include <httplib.h>

#include <cstdlib>
#include <filesystem>

#include "c2hm/data_io.hpp"

namespace c2hm {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw FetchError("not a URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

std::string resolve_mirror(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv(kMirrorEnv); env != nullptr && *env != '\0') return env;
  return kDefaultMnistMirror;
}

std::vector<std::uint8_t> fetch_url(const std::string& url) {
  if (url.rfind("file://", 0) == 0) {
    try {
      return read_file_bytes(url.substr(7));
    } catch (const std::exception& e) {
      throw FetchError(e.what());
    }
  }
  if (url.rfind("http://", 0) != 0 && url.rfind("https://", 0) != 0) throw FetchError("unsupported scheme: " + url);
  const auto [origin, path] = split_url(url);
  httplib::Client client(origin);
  client.set_follow_location(true);
  client.set_connection_timeout(30);
  client.set_read_timeout(120);
  const auto res = client.Get(path);
  if (!res) throw FetchError("request to " + url + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw FetchError(url + ": HTTP status " + std::to_string(res->status));
  if (res->has_header("Content-Length")) {
    const auto announced = std::stoull(res->get_header_value("Content-Length"));
    if (announced != res->body.size()) {
      throw FetchError(url + ": received " + std::to_string(res->body.size()) + " bytes, announced " +
                       std::to_string(announced));
    }
  }
  return {res->body.begin(), res->body.end()};
}

std::size_t verify_idx_payload(std::span<const std::uint8_t> bytes, std::uint32_t magic) {
  const auto raw = is_gzip(bytes) ? gunzip(bytes) : std::vector<std::uint8_t>(bytes.begin(), bytes.end());
  const IdxArray a = parse_idx(raw, magic);
  return a.dims.front();
}

std::vector<FetchedFile> fetch_mnist(const std::string& mirror, const std::string& out_dir) {
  struct Want {
    const char* name;
    std::uint32_t magic;
  };
  constexpr Want wants[] = {{"train-images-idx3-ubyte.gz", kIdxImageMagic},
                            {"train-labels-idx1-ubyte.gz", kIdxLabelMagic},
                            {"t10k-images-idx3-ubyte.gz", kIdxImageMagic},
                            {"t10k-labels-idx1-ubyte.gz", kIdxLabelMagic}};
  std::string base = mirror;
  if (!base.empty() && base.back() != '/') base += '/';
  std::filesystem::create_directories(out_dir);
  std::vector<FetchedFile> out;
  for (const auto& w : wants) {
    const auto bytes = fetch_url(base + w.name);
    FetchedFile f;
    f.name = w.name;
    f.bytes = bytes.size();
    try {
      f.items = verify_idx_payload(bytes, w.magic);
    } catch (const std::exception& e) {
      throw FetchError(std::string(w.name) + ": " + e.what());
    }
    f.path = (std::filesystem::path(out_dir) / w.name).string();
    write_file_bytes(f.path, bytes);
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace c2hm
