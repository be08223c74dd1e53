#pragma once

#include <functional>
#include <string>

#include "issrnn/lm.hpp"

namespace issrnn {

struct FdCheckReport {
  double max_rel_error = 0;
  std::string worst_tensor;
  int worst_index = -1;
  long long params_checked = 0;
};

// Central-difference check of analytic gradients for an arbitrary parameter
// vector: fd = (E(w+eps) - E(w-eps)) / 2eps, compared entrywise against
// `analytic` with rel = |fd - g| / (max(|fd|, |g|) + 1e-10).
double fd_max_rel_error(std::vector<double>& params,
                        const std::function<double()>& loss,
                        const std::vector<double>& analytic, double epsilon);

// Builds a random 64-bit model of the given topology, computes analytic
// gradients of the mean cross-entropy over a random probe batch, and compares
// every parameter against central differences.
FdCheckReport finite_difference_check(LmModelT<double>& model, int steps, int batch,
                                      uint64_t seed, double epsilon);

// Convenience wrappers used by the CLI and the acceptance suite.
FdCheckReport fd_check_random_lstm(int vocab, int embed, const std::vector<int>& hidden,
                                   int steps, int batch, uint64_t seed,
                                   double epsilon = 1e-5);
FdCheckReport fd_check_random_rhn(int vocab, int embed, int width, int depth,
                                  bool coupled_c, bool tied, int steps, int batch,
                                  uint64_t seed, double epsilon = 1e-5);

}  // namespace issrnn
