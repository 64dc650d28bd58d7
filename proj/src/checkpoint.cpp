#include <cstdio>
#include <fstream>
#include <sstream>

#include "c2hm/errors.hpp"
#include "c2hm/model.hpp"

namespace c2hm {

namespace {

constexpr const char* kMagic = "C2HM-CKPT v1";

void write_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

void write_row(std::string& out, const double* v, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    if (j) out += ' ';
    write_double(out, v[j]);
  }
  out += '\n';
}

void write_layer(std::string& out, const Tensor& weight, const Tensor& bias, Activation act) {
  out += std::to_string(weight.rows()) + ' ' + std::to_string(weight.cols()) + ' ' + activation_name(act) + '\n';
  for (std::size_t r = 0; r < weight.rows(); ++r) write_row(out, weight.data() + r * weight.cols(), weight.cols());
  write_row(out, bias.data(), bias.size());
}

class LineReader {
 public:
  explicit LineReader(const std::string& text) : in_(text) {}

  std::istringstream next(const char* what) {
    std::string line;
    if (!std::getline(in_, line)) throw FormatError(std::string("checkpoint truncated while reading ") + what);
    ++line_no_;
    return std::istringstream(line);
  }

  std::size_t line_no() const { return line_no_; }

 private:
  std::istringstream in_;
  std::size_t line_no_ = 0;
};

std::vector<double> read_row(LineReader& r, std::size_t n, const char* what) {
  auto ls = r.next(what);
  std::vector<double> v;
  v.reserve(n);
  std::string tok;
  while (ls >> tok) {
    char* end = nullptr;
    const double x = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') {
      throw FormatError("checkpoint line " + std::to_string(r.line_no()) + ": bad number '" + tok + "'");
    }
    v.push_back(x);
  }
  if (v.size() != n) {
    throw FormatError("checkpoint line " + std::to_string(r.line_no()) + ": expected " + std::to_string(n) +
                      " values in " + what + ", got " + std::to_string(v.size()));
  }
  return v;
}

DenseLayer read_layer(LineReader& r) {
  auto hs = r.next("layer header");
  std::size_t rows = 0, cols = 0;
  std::string act;
  if (!(hs >> rows >> cols >> act) || rows == 0 || cols == 0) {
    throw FormatError("checkpoint line " + std::to_string(r.line_no()) + ": bad layer header");
  }
  DenseLayer layer;
  layer.activation = parse_activation(act);
  std::vector<double> w;
  w.reserve(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    auto row = read_row(r, cols, "weight row");
    w.insert(w.end(), row.begin(), row.end());
  }
  layer.weight = Tensor({rows, cols}, std::move(w));
  layer.bias = Tensor({rows}, read_row(r, rows, "bias"));
  return layer;
}

std::vector<DenseLayer> read_section(LineReader& r, const std::string& expected) {
  auto hs = r.next("section header");
  std::string name;
  std::size_t count = 0;
  if (!(hs >> name >> count) || name != expected || count == 0) {
    throw FormatError("checkpoint line " + std::to_string(r.line_no()) + ": expected section '" + expected + "'");
  }
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i < count; ++i) layers.push_back(read_layer(r));
  return layers;
}

}  // namespace

std::string serialize_checkpoint(const C2hmParams& p) {
  p.validate();
  std::string out = std::string(kMagic) + '\n';
  out += std::to_string(p.d) + ' ' + std::to_string(p.k) + ' ' + std::to_string(p.D) + ' ' +
         std::to_string(p.num_classes) + '\n';
  // The embedding table is stored as a single identity layer with a zero bias.
  out += "goal_embed 1\n";
  write_layer(out, p.goal_embed, Tensor({p.num_classes}), Activation::Identity);
  auto section = [&out](const char* name, const MlpParams& mlp) {
    out += std::string(name) + ' ' + std::to_string(mlp.layers.size()) + '\n';
    for (const auto& l : mlp.layers) write_layer(out, l.weight, l.bias, l.activation);
  };
  section("sim", p.sim);
  section("dec", p.dec);
  section("cyc_enc", p.cyc_enc);
  section("cyc_dec", p.cyc_dec);
  return out;
}

C2hmParams parse_checkpoint(const std::string& text) {
  LineReader r(text);
  {
    auto ls = r.next("magic");
    if (ls.str() != kMagic) throw FormatError("not a C2HM checkpoint: first line '" + ls.str() + "'");
  }
  C2hmParams p;
  {
    auto ls = r.next("dimensions");
    if (!(ls >> p.d >> p.k >> p.D >> p.num_classes)) throw FormatError("checkpoint: bad dimension line");
  }
  auto embed = read_section(r, "goal_embed");
  if (embed.size() != 1) throw FormatError("checkpoint: goal_embed must hold exactly one table");
  for (double b : embed[0].bias.values()) {
    if (b != 0.0) throw FormatError("checkpoint: goal_embed bias must be zero");
  }
  p.goal_embed = std::move(embed[0].weight);
  p.sim.layers = read_section(r, "sim");
  p.dec.layers = read_section(r, "dec");
  p.cyc_enc.layers = read_section(r, "cyc_enc");
  p.cyc_dec.layers = read_section(r, "cyc_dec");
  p.validate();
  return p;
}

void save_checkpoint(const C2hmParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << serialize_checkpoint(params);
}

C2hmParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace c2hm
