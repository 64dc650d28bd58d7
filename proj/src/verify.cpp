#include "c2hm/verify.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "c2hm/data_io.hpp"
#include "c2hm/distributions.hpp"
#include "c2hm/errors.hpp"
#include "c2hm/grad_check.hpp"
#include "c2hm/inference.hpp"
#include "c2hm/model.hpp"
#include "c2hm/objectives.hpp"
#include "c2hm/planner.hpp"

namespace c2hm {

namespace {

struct Check {
  std::string name;
  ScalarFunction f;
  std::vector<Tensor> point;
};

Tensor normal(SeededRng& rng, Shape s, double scale = 1.0) { return scale * rng_standard_normal(rng, s); }

Tensor uniform(SeededRng& rng, Shape s, double lo, double hi) { return rng_uniform(rng, s, lo, hi); }

// Binds `params` from leaves laid out as parameter_tensors(params, All).
BoundC2hm bound_from_leaves(const C2hmParams& params, std::span<const Var> leaves) {
  BoundC2hm b;
  b.params = &params;
  std::size_t i = 0;
  b.goal_embed = leaves[i++];
  auto take = [&](const MlpParams& mlp, BoundMlp& out) {
    for (const auto& l : mlp.layers) {
      out.weights.push_back(leaves[i++]);
      out.biases.push_back(leaves[i++]);
      out.activations.push_back(l.activation);
    }
  };
  take(params.sim, b.sim);
  take(params.dec, b.dec);
  take(params.cyc_enc, b.cyc_enc);
  take(params.cyc_dec, b.cyc_dec);
  return b;
}

std::vector<Tensor> values_of(const C2hmParams& params) {
  std::vector<Tensor> out;
  for (const Tensor* t : parameter_tensors(params)) out.push_back(*t);
  return out;
}

C2hmParams small_model(SeededRng& rng) {
  ModelConfig mc;
  mc.d = 2;
  mc.k = 3;
  mc.D = 5;
  mc.num_classes = 3;
  mc.hidden = 4;
  mc.hidden_layers = 1;
  return init_c2hm(mc, rng);
}

std::vector<Check> gradient_checks(SeededRng& rng, bool inject_bug, const C2hmParams& model) {
  std::vector<Check> c;
  auto unary = [&](std::string name, std::function<Var(Var)> op, Tensor x) {
    c.push_back({std::move(name), [op](Tape&, std::span<const Var> v) { return ad::sum(op(v[0])); }, {std::move(x)}});
  };
  const std::vector<std::size_t> rows{2, 0, 2};
  const std::vector<std::size_t> labels{1, 0, 2};
  c.push_back({"matmul", [](Tape&, std::span<const Var> v) { return ad::sum(ad::square(ad::matmul(v[0], v[1]))); },
               {normal(rng, {3, 4}), normal(rng, {4, 2})}});
  c.push_back({"linear",
               [](Tape&, std::span<const Var> v) { return ad::sum(ad::square(ad::linear(v[0], v[1], v[2]))); },
               {normal(rng, {3, 4}), normal(rng, {2, 4}), normal(rng, {2})}});
  c.push_back({"add/sub/mul",
               [](Tape&, std::span<const Var> v) { return ad::sum(ad::mul(ad::add(v[0], v[1]), ad::sub(v[0], v[1]))); },
               {normal(rng, {2, 3}), normal(rng, {2, 3})}});
  c.push_back({"add row bias", [](Tape&, std::span<const Var> v) { return ad::sum(ad::square(ad::add(v[0], v[1]))); },
               {normal(rng, {3, 4}), normal(rng, {4})}});
  unary("scale/add_scalar", [](Var x) { return ad::square(ad::add_scalar(ad::scale(x, -1.7), 0.3)); },
        normal(rng, {2, 3}));
  unary("sigmoid", [](Var x) { return ad::sigmoid(x); }, normal(rng, {2, 3}));
  unary("tanh", [](Var x) { return ad::tanh(x); }, normal(rng, {2, 3}));
  unary("exp", [](Var x) { return ad::exp(x); }, normal(rng, {2, 3}));
  unary("log", [](Var x) { return ad::log(x); }, uniform(rng, {2, 3}, 0.5, 2.0));
  unary("mean", [](Var x) { return ad::mean(ad::square(x)); }, normal(rng, {2, 3}));
  unary("slice_cols", [](Var x) { return ad::square(ad::slice_cols(x, 1, 2)); }, normal(rng, {2, 4}));
  unary("transpose", [](Var x) { return ad::square(ad::matmul(ad::transpose(x), x)); }, normal(rng, {3, 2}));
  unary("clamp (interior)", [](Var x) { return ad::square(ad::clamp(x, -5.0, 5.0)); }, normal(rng, {2, 3}));
  c.push_back({"squared_error", [](Tape&, std::span<const Var> v) { return ad::squared_error(v[0], v[1]); },
               {normal(rng, {2, 3}), normal(rng, {2, 3})}});
  c.push_back({"gather_rows",
               [rows](Tape&, std::span<const Var> v) { return ad::sum(ad::square(ad::gather_rows(v[0], rows))); },
               {normal(rng, {3, 2})}});
  c.push_back({"softmax_cross_entropy",
               [labels](Tape&, std::span<const Var> v) { return ad::softmax_cross_entropy(v[0], labels); },
               {normal(rng, {3, 4})}});
  c.push_back({"gaussian kl/entropy/nll",
               [](Tape&, std::span<const Var> v) {
                 const GaussianVar a{v[0], v[1]}, b{v[2], v[3]};
                 return ad::add(ad::add(kl_between(a, b), entropy(a)), gaussian_nll(a, v[4]));
               },
               {normal(rng, {2, 3}), normal(rng, {2, 3}, 0.5), normal(rng, {2, 3}), normal(rng, {2, 3}, 0.5),
                normal(rng, {2, 3})}});
  {
    const C2hmParams* p = &model;
    c.push_back({"composite loss (all networks)",
                 [p](Tape&, std::span<const Var> v) {
                   const auto m = bound_from_leaves(*p, v);
                   SeededRng r(99);
                   const std::size_t lab[] = {0, 2};
                   const auto cyc = full_cycle(m, embed_goal(m, lab), r);
                   Tape& t = v[0].tape();
                   const Var x = t.constant(Tensor({2, p->D}, 0.4));
                   return composite_loss(cyc, x, {}).total;
                 },
                 values_of(model)});
    // Its inputs are detached, so only the cycle decoder is perturbed.
    std::vector<Tensor> cyc_dec_point;
    for (const auto& l : model.cyc_dec.layers) {
      cyc_dec_point.push_back(l.weight);
      cyc_dec_point.push_back(l.bias);
    }
    c.push_back({"content cycle loss (cycle decoder)",
                 [p](Tape& t, std::span<const Var> v) {
                   auto m = bind(t, *p, false);
                   for (std::size_t i = 0; i < m.cyc_dec.weights.size(); ++i) {
                     m.cyc_dec.weights[i] = v[2 * i];
                     m.cyc_dec.biases[i] = v[2 * i + 1];
                   }
                   SeededRng r(5);
                   const std::size_t lab[] = {0, 1};
                   return content_cycle_loss(m, full_cycle(m, embed_goal(m, lab), r));
                 },
                 cyc_dec_point});
    c.push_back({"variational objective",
                 [p](Tape&, std::span<const Var> v) {
                   const auto m = bound_from_leaves(*p, v);
                   SeededRng r(7);
                   const std::size_t lab[] = {1, 2};
                   Tape& t = v[0].tape();
                   return vb_loss(m, embed_goal(m, lab), t.constant(Tensor({2, p->D}, 0.6)), 1.0, r);
                 },
                 values_of(model)});
  }
  {
    GridWorld g(12, 12);
    g.start = {1, 1};
    g.goal = {10, 9};
    for (int r = 4; r < 8; ++r) g.set_occupied({r, 5});
    const Tensor field = blurred_occupancy(g, 1.0);
    Tensor code({1, 6});
    const double pts[] = {3.2, 2.1, 5.4, 6.3, 8.1, 8.7};
    for (int i = 0; i < 6; ++i) code[i] = pts[i];
    c.push_back({"planning objective",
                 [g, field](Tape&, std::span<const Var> v) { return planning_objective(v[0], g, field, PlannerConfig{}); },
                 {code}});
  }
  if (inject_bug) {
    // d/dx sum(x * stop(x)) on the tape is x, the true derivative is 2x.
    unary("injected: detached product", [](Var x) { return ad::mul(x, ad::detach(x)); }, normal(rng, {2, 3}));
  }
  return c;
}

std::string g4(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

// Mean and standard error of f over samples of g.
std::pair<double, double> monte_carlo(const DiagonalGaussian& g, std::size_t n, SeededRng& rng,
                                      const std::function<double(const Tensor&)>& f) {
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = f(sample_reparam(g, rng));
    s += v;
    s2 += v * v;
  }
  const double m = s / static_cast<double>(n);
  const double var = std::max(0.0, s2 / static_cast<double>(n) - m * m);
  return {m, std::sqrt(var / static_cast<double>(n))};
}

Tensor orthogonal(std::size_t d, SeededRng& rng) {
  // Gram-Schmidt on a Gaussian matrix.
  Tensor q = rng_standard_normal(rng, {d, d});
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += q.at(i, k) * q.at(j, k);
      for (std::size_t k = 0; k < d; ++k) q.at(i, k) -= dot * q.at(j, k);
    }
    double n = 0.0;
    for (std::size_t k = 0; k < d; ++k) n += q.at(i, k) * q.at(i, k);
    n = std::sqrt(n);
    for (std::size_t k = 0; k < d; ++k) q.at(i, k) /= n;
  }
  return q;
}

// Depth-first walk over every simple path, pruned by the best length found.
void search(const GridWorld& g, Cell c, std::vector<char>& seen, int depth, int& best) {
  if (best >= 0 && depth >= best) return;
  if (c == g.goal) {
    best = depth;
    return;
  }
  constexpr int dr[] = {-1, 1, 0, 0};
  constexpr int dc[] = {0, 0, -1, 1};
  for (int k = 0; k < 4; ++k) {
    const Cell n{c.row + dr[k], c.col + dc[k]};
    if (!g.free(n)) continue;
    auto& s = seen[static_cast<std::size_t>(n.row * g.cols() + n.col)];
    if (s) continue;
    s = 1;
    search(g, n, seen, depth + 1, best);
    s = 0;
  }
}

}  // namespace

int enumerate_shortest_path(const GridWorld& grid) {
  if (!grid.free(grid.start) || !grid.free(grid.goal)) return -1;
  std::vector<char> seen(static_cast<std::size_t>(grid.rows() * grid.cols()), 0);
  seen[static_cast<std::size_t>(grid.start.row * grid.cols() + grid.start.col)] = 1;
  int best = -1;
  search(grid, grid.start, seen, 0, best);
  return best;
}

ExperimentReport run_verify(const VerifyOptions& options) {
  ExperimentReport rep;
  rep.id = "verify";
  SeededRng rng(options.seed);
  auto add = [&rep](std::string crit, std::string name, bool pass, std::string detail) {
    rep.verdicts.push_back({std::move(crit), std::move(name), pass, std::move(detail)});
  };

  // C6: gradients.
  {
    SeededRng mrng = rng.fork(1);
    const C2hmParams model = small_model(mrng);
    SeededRng prng = rng.fork(2);
    double worst = 0.0;
    std::string worst_name;
    for (const auto& c : gradient_checks(prng, options.inject_grad_bug, model)) {
      const auto r = grad_check(c.f, c.point, 1e-5);
      if (r.max_relative_error >= worst) {
        worst = r.max_relative_error;
        worst_name = c.name;
      }
    }
    add("C6", "autodiff vs central differences", worst < 1e-4,
        "max relative error " + g4(worst) + " (" + worst_name + "), tolerance 1e-4");
  }
  // C6: KL and entropy against Monte Carlo.
  {
    SeededRng grng = rng.fork(3);
    const DiagonalGaussian a(normal(grng, {3}), normal(grng, {3}, 0.5));
    const DiagonalGaussian b(normal(grng, {3}), normal(grng, {3}, 0.5));
    SeededRng mc = rng.fork(4);
    const auto [kl_mc, kl_se] = monte_carlo(a, options.mc_samples, mc, [&](const Tensor& x) {
      return gaussian_log_prob(a, x) - gaussian_log_prob(b, x);
    });
    const double kl = kl_between(a, b);
    add("C6", "KL closed form vs Monte Carlo", std::abs(kl - kl_mc) <= 3.0 * kl_se,
        "closed " + g4(kl) + ", MC " + g4(kl_mc) + " +- " + g4(kl_se));
    const auto [h_mc, h_se] = monte_carlo(a, options.mc_samples, mc, [&](const Tensor& x) {
      return -gaussian_log_prob(a, x);
    });
    const double h = entropy(a);
    add("C6", "entropy closed form vs Monte Carlo", std::abs(h - h_mc) <= 3.0 * h_se,
        "closed " + g4(h) + ", MC " + g4(h_mc) + " +- " + g4(h_se));
    const double kl0 = kl_to_standard(DiagonalGaussian(Tensor({8}), Tensor({8})));
    add("C6", "KL(N(0,I) || N(0,I)) == 0", kl0 == 0.0, "value " + g4(kl0));
  }
  // C4: affine contractions with known rate.
  {
    SeededRng crng = rng.fork(5);
    bool ok = true;
    std::string detail;
    for (double gamma : {0.3, 0.5, 0.9}) {
      const std::size_t d = 4;
      const Tensor q = orthogonal(d, crng);
      const Tensor c = normal(crng, {d});
      Tensor fixed({d});
      {
        // phi* = (I - gamma Q)^-1 c by iterating to machine precision.
        for (int it = 0; it < 2000; ++it) {
          Tensor next = c;
          for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) next[i] += gamma * q.at(i, j) * fixed[j];
          fixed = next;
        }
      }
      auto op = [&](const Tensor& phi) {
        Tensor out = c;
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j) out[i] += gamma * q.at(i, j) * phi[j];
        return out;
      };
      const Tensor phi0 = normal(crng, {d}, 3.0);
      FixedPointOptions fo;
      fo.tol = 1e-9;
      const auto [fp, trace] = run_fixed_point(op, phi0, fo);
      const double e0 = std::sqrt(squared_norm(phi0 - fixed));
      bool envelope = true;
      for (std::size_t t = 0; t < trace.size(); ++t) {
        const double et = std::sqrt(squared_norm(trace.iterations[t].phi - fixed));
        if (et > std::pow(gamma, static_cast<double>(t + 1)) * e0 * 1.05 + 1e-12) envelope = false;
      }
      const double g = fp.estimated_gamma;
      const double residual = std::sqrt(squared_norm(op(fp.final_phi) - fp.final_phi));
      const bool pass = fp.converged && std::abs(g - gamma) <= 0.05 && envelope && residual < 2.0 * fo.tol;
      ok = ok && pass;
      detail += std::string(detail.empty() ? "" : "; ") + "gamma " + g4(gamma) + ": est " + g4(g) +
                (envelope ? "" : " envelope violated") + (fp.converged ? "" : " not converged");
    }
    add("C4", "contraction rate and error envelope", ok, detail);
  }
  // Half-cycle descent on random instances.
  {
    SeededRng hrng = rng.fork(6);
    int bad = 0;
    for (int i = 0; i < 100; ++i) {
      const C2hmParams p = small_model(hrng);
      const Tensor phi = normal(hrng, {1, p.d});
      const Tensor psi = uniform(hrng, {1, p.D}, 0.0, 1.0);
      const auto s = half_cycle_descent_step(p, phi, psi, 0.05);
      if (s.residual_after > s.residual_before) ++bad;
    }
    add("C4", "half-cycle step never increases the residual", bad == 0,
        std::to_string(100 - bad) + "/100 instances descend");
  }
  // C5: entropy descent on a linear generator.
  {
    SeededRng lrng = rng.fork(7);
    ModelConfig mc;
    mc.d = 3;
    mc.k = 6;
    mc.D = 30;
    mc.num_classes = 1;
    mc.hidden_layers = 0;
    mc.decoder_output = Activation::Identity;
    const C2hmParams p = init_c2hm(mc, lrng);
    const Tensor phi_true = normal(lrng, {4, mc.d});
    Tensor psi = decode(p, simulate_latent(p, phi_true).mean());
    psi = psi + normal(lrng, psi.shape(), 0.05);
    ModelLoopOptions lo;
    lo.eta = 0.05;
    SeededRng loop_rng = rng.fork(8);
    const auto [fp, trace] = run_to_fixed_point(p, Tensor({4, mc.d}), psi, lo, loop_rng);
    const double frac = entropy_descent_check(trace);
    add("C5", "entropy proxy non-increasing (linear generator)", frac >= 0.95,
        "fraction " + g4(frac) + " over " + std::to_string(trace.size()) + " iterations");
  }
  // Raster gradient.
  {
    GridWorld g(10, 10);
    g.start = {0, 0};
    g.goal = {9, 7};
    Tensor code({1, 4});
    const double pts[] = {2.3, 3.1, 5.6, 6.2};
    for (int i = 0; i < 4; ++i) code[i] = pts[i];
    Tensor weights = uniform(rng, {10, 10}, 0.0, 1.0);
    const double err = grad_check(
        [&](Tape& t, Var c) { return ad::sum(ad::mul(rasterize_path(c, g), t.constant(weights))); }, code);
    add("C7", "raster gradient vs finite differences", err < 1e-3, "max relative error " + g4(err));
  }
  // C7: BFS against enumeration on small grids.
  {
    SeededRng brng = rng.fork(9);
    int agree = 0, total = 0;
    for (int i = 0; i < 60; ++i) {
      const int rows = 2 + static_cast<int>(brng.uniform_index(5));
      const int cols = 2 + static_cast<int>(brng.uniform_index(5));
      GridWorld g(rows, cols);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          if (brng.uniform() < 0.25) g.set_occupied({r, c});
      g.start = {static_cast<int>(brng.uniform_index(rows)), static_cast<int>(brng.uniform_index(cols))};
      g.goal = {static_cast<int>(brng.uniform_index(rows)), static_cast<int>(brng.uniform_index(cols))};
      g.set_occupied(g.start, false);
      g.set_occupied(g.goal, false);
      const int expect = enumerate_shortest_path(g);
      int got = -1;
      try {
        got = static_cast<int>(bfs_shortest_path(g).length);
      } catch (const NoPathError&) {
      }
      agree += got == expect;
      ++total;
    }
    add("C7", "BFS matches exhaustive enumeration (<= 6x6)", agree == total,
        std::to_string(agree) + "/" + std::to_string(total) + " grids agree");
  }
  // C8: IDX round trip.
  {
    IdxArray img;
    img.dims = {2, 3, 4};
    for (int i = 0; i < 24; ++i) img.data.push_back(static_cast<std::uint8_t>(i * 11));
    const auto bytes = serialize_idx(img);
    const auto back = parse_idx(bytes, kIdxImageMagic);
    const bool same = back.dims == img.dims && back.data == img.data && serialize_idx(back) == bytes;
    const auto zipped = gunzip(gzip_bytes(bytes));
    bool bad_magic = false;
    auto corrupt = bytes;
    corrupt[3] = 0x01;
    try {
      parse_idx(corrupt, kIdxImageMagic);
    } catch (const FormatError&) {
      bad_magic = true;
    }
    add("C8", "IDX round trip and magic check", same && zipped == bytes && bad_magic,
        std::string(same ? "bit-exact" : "mismatch") + (bad_magic ? ", corrupted magic rejected" : ", bad magic accepted"));
  }
  return rep;
}

}  // namespace c2hm
