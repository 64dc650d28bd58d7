#include "c2hm/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "c2hm/errors.hpp"

namespace c2hm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2*pi)

void check_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": dimension mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

double rows_of(Var v) { return static_cast<double>(v.value().rows()); }

}  // namespace

DiagonalGaussian::DiagonalGaussian(Tensor mean, Tensor log_var) : mean_(std::move(mean)), log_var_(std::move(log_var)) {
  if (!mean_.same_shape(log_var_)) {
    throw ShapeError("DiagonalGaussian: mean " + mean_.shape_string() + " and log_var " + log_var_.shape_string() +
                     " differ");
  }
  for (double& v : log_var_.values()) v = std::clamp(v, kLogVarMin, kLogVarMax);
}

Tensor DiagonalGaussian::variance() const {
  Tensor v = log_var_;
  for (double& x : v.values()) x = std::exp(x);
  return v;
}

DiagonalGaussian DiagonalGaussian::row(std::size_t r) const { return {mean_.row(r), log_var_.row(r)}; }

Tensor CategoricalPrior::probabilities() const {
  Tensor p = logits_;
  const double mx = *std::max_element(p.values().begin(), p.values().end());
  double z = 0.0;
  for (double& v : p.values()) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : p.values()) v /= z;
  return p;
}

Tensor sample_reparam(const DiagonalGaussian& g, SeededRng& rng) {
  Tensor out = g.mean();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += std::exp(0.5 * g.log_var()[i]) * rng.standard_normal();
  return out;
}

double kl_to_standard(const DiagonalGaussian& g) {
  double kl = 0.0;
  for (std::size_t i = 0; i < g.dim(); ++i) {
    const double m = g.mean()[i];
    const double lv = g.log_var()[i];
    kl += m * m + std::exp(lv) - 1.0 - lv;
  }
  return 0.5 * kl;
}

double kl_between(const DiagonalGaussian& a, const DiagonalGaussian& b) {
  check_same(a.mean(), b.mean(), "kl_between");
  double kl = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double dm = a.mean()[i] - b.mean()[i];
    const double la = a.log_var()[i];
    const double lb = b.log_var()[i];
    kl += lb - la + (std::exp(la) + dm * dm) * std::exp(-lb) - 1.0;
  }
  return 0.5 * kl;
}

double entropy(const DiagonalGaussian& g) {
  double h = 0.0;
  for (double lv : g.log_var().values()) h += kLog2Pi + 1.0 + lv;
  return 0.5 * h;
}

double gaussian_log_prob(const DiagonalGaussian& g, const Tensor& x) {
  check_same(g.mean(), x, "gaussian_log_prob");
  double lp = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - g.mean()[i];
    const double lv = g.log_var()[i];
    lp += kLog2Pi + lv + d * d * std::exp(-lv);
  }
  return -0.5 * lp;
}

Var sample_reparam(const GaussianVar& g, SeededRng& rng) {
  Tape& t = g.mean.tape();
  const Var eps = t.constant(rng_standard_normal(rng, g.mean.shape()));
  const Var sd = ad::exp(ad::scale(g.log_var, 0.5));
  return ad::add(g.mean, ad::mul(sd, eps));
}

Var kl_to_standard(const GaussianVar& g) {
  const Var terms = ad::sub(ad::add(ad::square(g.mean), ad::exp(g.log_var)), ad::add_scalar(g.log_var, 1.0));
  return ad::scale(ad::sum(terms), 0.5 / rows_of(g.mean));
}

Var kl_between(const GaussianVar& a, const GaussianVar& b) {
  check_same(a.mean.value(), b.mean.value(), "kl_between");
  const Var dm = ad::sub(a.mean, b.mean);
  const Var ratio = ad::mul(ad::add(ad::exp(a.log_var), ad::square(dm)), ad::exp(ad::scale(b.log_var, -1.0)));
  const Var terms = ad::add_scalar(ad::add(ad::sub(b.log_var, a.log_var), ratio), -1.0);
  return ad::scale(ad::sum(terms), 0.5 / rows_of(a.mean));
}

Var entropy(const GaussianVar& g) {
  const Var terms = ad::add_scalar(g.log_var, kLog2Pi + 1.0);
  return ad::scale(ad::sum(terms), 0.5 / rows_of(g.mean));
}

Var gaussian_nll(Var mean, Var x, double obs_var) {
  if (!(obs_var > 0.0)) throw ContractError("gaussian_nll: observation variance must be positive");
  check_same(mean.value(), x.value(), "gaussian_nll");
  const double per_dim = 0.5 * (kLog2Pi + std::log(obs_var));
  const double n = static_cast<double>(x.value().size());
  const Var sq = ad::sum(ad::square(ad::sub(x, mean)));
  return ad::add_scalar(ad::scale(sq, 0.5 / (obs_var * rows_of(mean))), per_dim * n / rows_of(mean));
}

Var gaussian_nll(const GaussianVar& g, Var x) {
  check_same(g.mean.value(), x.value(), "gaussian_nll");
  const Var sq = ad::mul(ad::square(ad::sub(x, g.mean)), ad::exp(ad::scale(g.log_var, -1.0)));
  const Var terms = ad::add_scalar(ad::add(g.log_var, sq), kLog2Pi);
  return ad::scale(ad::sum(terms), 0.5 / rows_of(g.mean));
}

}  // namespace c2hm
