#include "mcb/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "mcb/attention.hpp"
#include "mcb/compact_bilinear.hpp"
#include "mcb/fft.hpp"
#include "mcb/harness.hpp"
#include "mcb/nn.hpp"
#include "mcb/oracle.hpp"
#include "mcb/random.hpp"
#include "mcb/sketch.hpp"

namespace mcb::verify {
namespace {

RealVec random_vec(Rng& rng, std::size_t n) {
  RealVec v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

ComplexVec random_complex(Rng& rng, std::size_t n) {
  ComplexVec v(n);
  for (auto& x : v) x = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

SuiteResult finish(std::string name, double measured, double tolerance, const Options& opts, std::string detail,
                   bool exact = false) {
  SuiteResult r;
  r.name = std::move(name);
  r.measured = measured;
  r.tolerance = opts.tolerance.value_or(tolerance);
  r.exact = exact;
  r.passed = exact ? measured <= r.tolerance : measured < r.tolerance;
  r.detail = std::move(detail);
  return r;
}

/// Worst relative error of backward(r) against central differences of <r, f(v)>.
double check_vjp(const std::function<RealVec(const RealVec&)>& forward,
                 const std::function<RealVec(const RealVec&, const RealVec&)>& backward, RealVec v, Rng& rng) {
  const RealVec r = random_vec(rng, forward(v).size());
  const RealVec analytic = backward(v, r);
  double worst = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double numeric =
        oracle::central_difference([&] { return dot(r, forward(v)); }, v[i], harness::kFiniteDifferenceStep);
    worst = std::max(worst, oracle::relative_error(analytic[i], numeric));
  }
  return worst;
}

/// Inputs kept away from the signed-sqrt and ReLU kinks.
RealVec away_from_zero(Rng& rng, std::size_t n) {
  RealVec v(n);
  for (auto& x : v) x = rng.sign() * rng.uniform(0.1, 1.0);
  return v;
}

}  // namespace

SuiteResult fft_roundtrip(const Options& opts) {
  Rng rng(derive_seed(opts.seed, 1));
  double worst = 0.0;
  for (std::size_t n = 1; n <= 1024; ++n) {
    const ComplexVec v = random_complex(rng, n);
    const ComplexVec back = fft::inverse(fft::forward(v));
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(back[i] - v[i]));
  }
  return finish("fft_roundtrip", worst, 1e-10, opts, "max |ifft(fft(v)) - v| over lengths 1..1024");
}

SuiteResult fft_against_naive(const Options& opts) {
  Rng rng(derive_seed(opts.seed, 2));
  double worst = 0.0;
  for (std::size_t n = 1; n <= 128; ++n) {
    const ComplexVec v = random_complex(rng, n);
    const ComplexVec fast = fft::forward(v);
    const ComplexVec slow = oracle::naive_dft(v);
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(fast[i] - slow[i]));
  }
  return finish("fft_against_naive_dft", worst, 1e-9, opts, "max |fft - naive DFT| over lengths 1..128");
}

SuiteResult fft_parseval(const Options& opts) {
  Rng rng(derive_seed(opts.seed, 3));
  double worst = 0.0;
  for (std::size_t n = 1; n <= 1024; n += (n < 64 ? 1 : 37)) {
    const ComplexVec v = random_complex(rng, n);
    const ComplexVec spectrum = fft::forward(v);
    double time = 0.0;
    double freq = 0.0;
    for (const auto& c : v) time += std::norm(c);
    for (const auto& c : spectrum) freq += std::norm(c);
    freq /= static_cast<double>(n);
    worst = std::max(worst, std::abs(time - freq) / time);
  }
  return finish("fft_parseval", worst, 1e-10, opts, "relative energy mismatch");
}

SuiteResult fft_linearity(const Options& opts) {
  Rng rng(derive_seed(opts.seed, 4));
  double worst = 0.0;
  for (std::size_t n = 1; n <= 1024; n += (n < 64 ? 1 : 53)) {
    const ComplexVec u = random_complex(rng, n);
    const ComplexVec v = random_complex(rng, n);
    const Complex alpha{rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const Complex beta{rng.uniform(-2, 2), rng.uniform(-2, 2)};
    ComplexVec mix(n);
    for (std::size_t i = 0; i < n; ++i) mix[i] = alpha * u[i] + beta * v[i];
    const auto fm = fft::forward(mix);
    const auto fu = fft::forward(u);
    const auto fv = fft::forward(v);
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(fm[i] - (alpha * fu[i] + beta * fv[i])));
  }
  return finish("fft_linearity", worst, 1e-10, opts, "max |F(au+bv) - aF(u) - bF(v)|");
}

SuiteResult convolution_against_naive(const Options& opts) {
  Rng rng(derive_seed(opts.seed, 5));
  double worst = 0.0;
  for (std::size_t n = 1; n <= 256; ++n) {
    const RealVec a = random_vec(rng, n);
    const RealVec b = random_vec(rng, n);
    const RealVec fast = fft::circular_convolve(a, b);
    const RealVec slow = oracle::naive_circular_convolution(a, b);
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(fast[i] - slow[i]));
  }
  return finish("convolution_against_naive", worst, 1e-9, opts, "max |a*b - naive| over lengths 1..256");
}

SuiteResult convolution_commutes(const Options& opts) {
  Rng rng(derive_seed(opts.seed, 6));
  double worst = 0.0;
  for (std::size_t n = 1; n <= 256; n += 3) {
    const RealVec a = random_vec(rng, n);
    const RealVec b = random_vec(rng, n);
    const RealVec ab = fft::circular_convolve(a, b);
    const RealVec ba = fft::circular_convolve(b, a);
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(ab[i] - ba[i]));
  }
  return finish("convolution_commutes", worst, 1e-10, opts, "max |a*b - b*a|");
}

SuiteResult sketch_adjoint(const Options& opts) {
  Rng rng(derive_seed(opts.seed, 7));
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.uniform_below(64);
    const std::size_t d = 1 + rng.uniform_below(64);
    const auto p = sketch::sample_params(rng.next_u64(), n, d);
    const RealVec v = random_vec(rng, n);
    const RealVec g = random_vec(rng, d);
    const RealVec r = sketch::apply_adjoint(p, g);
    const double lhs = dot(sketch::apply(p, v), g);
    const double rhs = dot(v, r);
    // Summand magnitudes, since the sums can cancel to near zero.
    double scale = 1e-300;
    for (std::size_t i = 0; i < n; ++i) scale += std::abs(v[i] * r[i]);
    worst = std::max(worst, std::abs(lhs - rhs) / scale);
  }
  return finish("sketch_adjoint", worst, 1e-12, opts, "|<Pv,g> - <v,P^T g>| / sum |v_i (P^T g)_i| over 1000 triples");
}

SuiteResult sketch_unbiased(const Options& opts) {
  Rng rng(derive_seed(opts.seed, 8));
  const std::size_t n = 16;
  const std::size_t d = 64;
  const std::size_t trials = 2000;
  const RealVec u = rng.unit_vector(n);
  RealVec v = u;
  for (auto& x : v) x += 0.8 * rng.gaussian() / std::sqrt(static_cast<double>(n));
  v = nn::l2_normalize_forward(v);
  const double target = dot(u, v);
  std::vector<double> estimates;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto p = sketch::sample_params(derive_seed(opts.seed, 1000 + t), n, d);
    estimates.push_back(dot(sketch::apply(p, u), sketch::apply(p, v)));
  }
  const double mean = std::accumulate(estimates.begin(), estimates.end(), 0.0) / trials;
  const double se = harness::sample_std(estimates) / std::sqrt(static_cast<double>(trials));
  std::ostringstream detail;
  detail << "mean " << mean << " vs <u,v> " << target << ", stderr " << se;
  return finish("sketch_unbiased_inner_product", std::abs(mean - target) / se, 4.0, opts, detail.str());
}

SuiteResult mcb_oracle_equivalence(const Options& opts) {
  Rng rng(derive_seed(opts.seed, 9));
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n1 = 1 + rng.uniform_below(32);
    const std::size_t n2 = 1 + rng.uniform_below(32);
    const std::size_t d = 1 + rng.uniform_below(64);
    const auto op = CompactBilinear::sample(derive_seed(opts.seed, 2000 + t), n1, n2, d);
    const RealVec x = random_vec(rng, n1);
    const RealVec q = random_vec(rng, n2);
    const RealVec fast = op(x, q);
    const auto outer = sketch::outer_product_params(op.sketches()[0], op.sketches()[1]);
    const RealVec slow = sketch::apply(outer, oracle::outer_product(x, q));
    for (std::size_t i = 0; i < d; ++i) worst = std::max(worst, std::abs(fast[i] - slow[i]));
  }
  return finish("mcb_oracle_equivalence", worst, 1e-9, opts,
                "max |MCB(x,q) - sketch(vec(x q^T))|, 100 seeds, n1,n2 <= 32, d <= 64");
}

SuiteResult mcb_triple_oracle_equivalence(const Options& opts) {
  Rng rng(derive_seed(opts.seed, 10));
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t dims[] = {1 + rng.uniform_below(12), 1 + rng.uniform_below(12), 1 + rng.uniform_below(12)};
    const std::size_t d = 1 + rng.uniform_below(64);
    const auto op = CompactBilinear::sample(derive_seed(opts.seed, 3000 + t), dims, d);
    const std::vector<RealVec> inputs = {random_vec(rng, dims[0]), random_vec(rng, dims[1]), random_vec(rng, dims[2])};
    const RealVec fast = op.forward(inputs).output;
    const RealVec slow = oracle::brute_force_tensor_sketch(op.sketches(), inputs);
    for (std::size_t i = 0; i < d; ++i) worst = std::max(worst, std::abs(fast[i] - slow[i]));
  }
  return finish("mcb_triple_oracle_equivalence", worst, 1e-9, opts,
                "max |MCB(a,b,c) - brute-force sketch of a (x) b (x) c|, 100 seeds");
}

SuiteResult mcb_kernel_unbiased(const Options& opts) {
  Rng rng(derive_seed(opts.seed, 11));
  const std::size_t n = 16;
  const std::size_t d = 512;
  const std::size_t operators = 2000;
  auto correlated = [&](const RealVec& base) {
    RealVec v = base;
    for (auto& x : v) x += 0.7 * rng.gaussian() / std::sqrt(static_cast<double>(n));
    return nn::l2_normalize_forward(v);
  };
  const RealVec x = rng.unit_vector(n);
  const RealVec q = rng.unit_vector(n);
  const RealVec x2 = correlated(x);
  const RealVec q2 = correlated(q);
  const double target = dot(x, x2) * dot(q, q2);
  std::vector<double> estimates;
  estimates.reserve(operators);
  for (std::size_t t = 0; t < operators; ++t) {
    const auto op = CompactBilinear::sample(derive_seed(opts.seed, 10000 + t), n, n, d);
    estimates.push_back(dot(op(x, q), op(x2, q2)));
  }
  const double mean = std::accumulate(estimates.begin(), estimates.end(), 0.0) / operators;
  const double se = harness::sample_std(estimates) / std::sqrt(static_cast<double>(operators));
  std::ostringstream detail;
  detail << "mean " << mean << " vs <x,x'><q,q'> " << target << ", stderr " << se;
  return finish("mcb_kernel_unbiased", std::abs(mean - target) / se, 4.0, opts, detail.str());
}

SuiteResult layer_gradients(const Options& opts) {
  Rng rng(derive_seed(opts.seed, 12));
  double worst = 0.0;
  std::string worst_name = "-";
  auto note = [&](double err, const std::string& name) {
    if (err > worst || worst_name == "-") {
      worst = std::max(worst, err);
      worst_name = name;
    }
  };

  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + rng.uniform_below(12);
    note(check_vjp([](const RealVec& v) { return nn::signed_sqrt_forward(v); },
                   [](const RealVec& v, const RealVec& g) { return nn::signed_sqrt_backward(v, g); },
                   away_from_zero(rng, n), rng),
         "signed_sqrt");
    note(check_vjp([](const RealVec& v) { return nn::l2_normalize_forward(v); },
                   [](const RealVec& v, const RealVec& g) { return nn::l2_normalize_backward(v, g); },
                   random_vec(rng, n), rng),
         "l2_normalize");
    note(check_vjp([](const RealVec& v) { return nn::softmax(v); },
                   [](const RealVec& v, const RealVec& g) { return nn::softmax_backward(nn::softmax(v), g); },
                   random_vec(rng, n), rng),
         "softmax");
    note(check_vjp([](const RealVec& v) { return nn::relu_forward(v); },
                   [](const RealVec& v, const RealVec& g) { return nn::relu_backward(v, g); },
                   away_from_zero(rng, n), rng),
         "relu");

    // Linear: input, weight and bias.
    const std::size_t out = 1 + rng.uniform_below(6);
    auto layer = nn::LinearLayer::init(n, out, true, rng);
    for (auto& b : layer.bias) b = rng.uniform(-1, 1);
    RealVec v = random_vec(rng, n);
    const RealVec r = random_vec(rng, out);
    const auto grad = nn::linear_backward(layer, v, r);
    auto loss = [&] { return dot(r, nn::linear_forward(layer, v)); };
    for (std::size_t i = 0; i < v.size(); ++i) {
      note(oracle::relative_error(grad.input[i], oracle::central_difference(loss, v[i], harness::kFiniteDifferenceStep)),
           "linear.input");
    }
    for (std::size_t i = 0; i < layer.weight.data.size(); ++i) {
      note(oracle::relative_error(grad.weight.data[i],
                                  oracle::central_difference(loss, layer.weight.data[i], harness::kFiniteDifferenceStep)),
           "linear.weight");
    }
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      note(oracle::relative_error(grad.bias[i],
                                  oracle::central_difference(loss, layer.bias[i], harness::kFiniteDifferenceStep)),
           "linear.bias");
    }

    // Cross-entropy.
    RealVec logits = random_vec(rng, n + 1);
    for (auto& z : logits) z *= 3.0;
    const std::size_t label = rng.uniform_below(logits.size());
    const auto ce = nn::softmax_cross_entropy(logits, label);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double numeric = oracle::central_difference(
          [&] { return nn::softmax_cross_entropy(logits, label).loss; }, logits[i], harness::kFiniteDifferenceStep);
      note(oracle::relative_error(ce.grad_logits[i], numeric), "softmax_cross_entropy");
    }
  }

  // MCB backward at arity 2 and 3, 100 cases.
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = t % 2 == 0 ? 2 : 3;
    std::vector<std::size_t> dims;
    for (std::size_t m = 0; m < k; ++m) dims.push_back(1 + rng.uniform_below(8));
    const std::size_t d = 1 + rng.uniform_below(24);
    const auto op = CompactBilinear::sample(rng.next_u64(), dims, d);
    std::vector<RealVec> inputs;
    for (auto n : dims) inputs.push_back(random_vec(rng, n));
    const RealVec r = random_vec(rng, d);
    const auto grads = op.backward(op.forward(inputs), r);
    for (std::size_t m = 0; m < k; ++m) {
      for (std::size_t i = 0; i < inputs[m].size(); ++i) {
        const double numeric = oracle::central_difference([&] { return dot(r, op.forward(inputs).output); },
                                                          inputs[m][i], harness::kFiniteDifferenceStep);
        note(oracle::relative_error(grads[m][i], numeric), "mcb_backward k=" + std::to_string(k));
      }
    }
  }

  // Attention head alone, glimpses 1, 2, 4.
  for (std::size_t glimpses : {1, 2, 4}) {
    auto head = attention::AttentionHead::create(3, 3, 8, 5, glimpses, derive_seed(opts.seed, 40 + glimpses));
    for (auto& b : head.proj1.bias) b = rng.uniform(0.05, 0.3);
    attention::SpatialGrid grid(2, 2, 3, random_vec(rng, 12));
    RealVec query = random_vec(rng, 3);
    const RealVec r = random_vec(rng, glimpses * 3);
    auto out = attention::attention_forward(head, grid, query);
    const auto grads = attention::attention_backward(head, out.cache, r);
    auto loss = [&] { return dot(r, attention::attention_forward(head, grid, query).attended); };
    const std::string name = "attention g=" + std::to_string(glimpses);
    for (std::size_t i = 0; i < grid.data.size(); ++i) {
      note(oracle::relative_error(grads.grid[i],
                                  oracle::central_difference(loss, grid.data[i], harness::kFiniteDifferenceStep)),
           name + " grid");
    }
    for (std::size_t i = 0; i < query.size(); ++i) {
      note(oracle::relative_error(grads.query[i],
                                  oracle::central_difference(loss, query[i], harness::kFiniteDifferenceStep)),
           name + " query");
    }
    for (auto [layer, grad] : {std::pair{&head.proj1, &grads.proj1}, std::pair{&head.proj2, &grads.proj2}}) {
      for (std::size_t i = 0; i < layer->weight.data.size(); ++i) {
        note(oracle::relative_error(grad->weight.data[i], oracle::central_difference(loss, layer->weight.data[i],
                                                                                     harness::kFiniteDifferenceStep)),
             name + " proj weight");
      }
      for (std::size_t i = 0; i < layer->bias.size(); ++i) {
        note(oracle::relative_error(grad->bias[i],
                                    oracle::central_difference(loss, layer->bias[i], harness::kFiniteDifferenceStep)),
             name + " proj bias");
      }
    }
  }
  return finish("layer_gradients", worst, 1e-5, opts, "worst: " + worst_name);
}

SuiteResult pipeline_gradients(const Options& opts) {
  double worst = 0.0;
  std::string worst_name = "-";
  auto note = [&](const harness::GradCheckReport& report, const std::string& name) {
    if (report.max_relative_error > worst || worst_name == "-") {
      worst = std::max(worst, report.max_relative_error);
      worst_name = name + " (" + report.worst_entry + ")";
    }
  };

  const char* methods[] = {"eltwise-sum", "eltwise-product", "concat", "concat-fc", "full-bilinear", "mcb"};
  for (const char* name : methods) {
    harness::ModelSpec spec;
    spec.pooling = nn::PoolingMethod::parse(name);
    if (spec.pooling.kind == nn::PoolingKind::mcb) spec.pooling.d = 32;
    if (spec.pooling.kind == nn::PoolingKind::concat_fc) spec.pooling.hidden = {7};
    spec.n1 = spec.n2 = 6;
    spec.classes = 4;
    spec.seed = derive_seed(opts.seed, 60);
    tasks::BilinearClassificationTask task{6, 6, 4, 0.05, opts.seed, 1};
    const auto sample = tasks::gen_classification(task, 1).front();
    note(harness::grad_check(spec, sample), name);
  }

  for (std::size_t glimpses : {1, 2, 4}) {
    harness::ModelSpec spec;
    spec.pooling = nn::PoolingMethod{nn::PoolingKind::mcb, 16, {}};
    spec.use_attention = true;
    spec.glimpses = glimpses;
    spec.attention_d = 16;
    spec.attention_hidden = 6;
    spec.n1 = spec.n2 = 4;
    spec.classes = 3;
    spec.grid_locations = 4;
    spec.seed = derive_seed(opts.seed, 70 + glimpses);
    tasks::BilinearClassificationTask task{4, 4, 3, 0.05, opts.seed, 4};
    const auto sample = tasks::gen_classification(task, 1).front();
    note(harness::grad_check(spec, sample), "mcb+attention g=" + std::to_string(glimpses));
  }

  for (const char* name : {"mcb", "concat"}) {
    harness::GroundingSpec spec;
    spec.pooling = nn::PoolingMethod::parse(name);
    if (spec.pooling.kind == nn::PoolingKind::mcb) spec.pooling.d = 24;
    spec.n_v = 5;
    spec.n_p = 4;
    spec.seed = derive_seed(opts.seed, 80);
    tasks::GroundingRankingTask task{5, 4, 3, 0.05, opts.seed};
    const auto item = tasks::gen_grounding(task, 1).front();
    note(harness::grad_check(spec, item), std::string("grounding ") + name);
  }
  return finish("pipeline_gradients", worst, 1e-5, opts, "worst: " + worst_name);
}

SuiteResult param_counts(const Options& opts) {
  const double bilinear = std::abs(static_cast<double>(full_bilinear_param_count(2048, 2048, 3000)) - 12582912000.0);
  const double compact = std::abs(static_cast<double>(mcb_param_count(16000, 3000)) - 48000000.0);
  return finish("param_counts", bilinear + compact, 0.0, opts,
                "full bilinear 2048x2048->3000 = 12582912000, MCB d=16000 -> 3000 = 48000000", true);
}

std::vector<SuiteResult> run_all(const Options& opts) {
  return {fft_roundtrip(opts),
          fft_against_naive(opts),
          fft_parseval(opts),
          fft_linearity(opts),
          convolution_against_naive(opts),
          convolution_commutes(opts),
          sketch_adjoint(opts),
          sketch_unbiased(opts),
          mcb_oracle_equivalence(opts),
          mcb_triple_oracle_equivalence(opts),
          mcb_kernel_unbiased(opts),
          layer_gradients(opts),
          pipeline_gradients(opts),
          param_counts(opts)};
}

}  // namespace mcb::verify
