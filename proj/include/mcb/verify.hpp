#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mcb::verify {

struct SuiteResult {
  std::string name;
  double measured = 0.0;   // worst-case error (or z-score) observed
  double tolerance = 0.0;  // pass iff measured < tolerance (<= for exact suites)
  bool exact = false;
  bool passed = false;
  std::string detail;
};

struct Options {
  std::optional<double> tolerance;  // replaces every suite's own tolerance
  std::uint64_t seed = 20160606;
};

SuiteResult fft_roundtrip(const Options& opts);         // lengths 1..1024, < 1e-10
SuiteResult fft_against_naive(const Options& opts);     // lengths 1..128, < 1e-9
SuiteResult fft_parseval(const Options& opts);          // relative < 1e-10
SuiteResult fft_linearity(const Options& opts);         // < 1e-10
SuiteResult convolution_against_naive(const Options& opts);  // lengths 1..256, < 1e-9
SuiteResult convolution_commutes(const Options& opts);  // < 1e-10
SuiteResult sketch_adjoint(const Options& opts);        // 1000 triples, relative < 1e-12
SuiteResult sketch_unbiased(const Options& opts);       // |bias| / stderr < 4
SuiteResult mcb_oracle_equivalence(const Options& opts);         // k = 2, 100 seeds, < 1e-9
SuiteResult mcb_triple_oracle_equivalence(const Options& opts);  // k = 3, 100 seeds, < 1e-9
SuiteResult mcb_kernel_unbiased(const Options& opts);   // 2000 operators, d = 512, < 4 stderr
SuiteResult layer_gradients(const Options& opts);       // every layer, < 1e-5
SuiteResult pipeline_gradients(const Options& opts);    // six poolings + attention g in {1,2,4} + grounding
SuiteResult param_counts(const Options& opts);          // exact

std::vector<SuiteResult> run_all(const Options& opts);

}  // namespace mcb::verify
