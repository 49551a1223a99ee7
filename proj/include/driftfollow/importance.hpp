#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "driftfollow/lstm.hpp"

namespace dfw {

enum class ImportanceKind { fisher, mas };

// Per-parameter importance weights plus the anchor the quadratic penalty
// pulls toward.
struct ImportanceVector {
  ImportanceKind kind = ImportanceKind::fisher;
  int tasks_seen = 1;
  std::vector<double> weights;  // nonnegative, aligned with anchor.values
  ParamVector anchor;
};

enum class Accumulation { sum, running_mean };

struct RegConfig {
  double lambda = 100.0;
  Accumulation accumulation = Accumulation::sum;
};

// Writes the per-sample gradient (full parameter length) into grad.
using SampleGradFn = std::function<void(std::size_t index, std::vector<double>& grad)>;

// Diagonal Fisher under the unit-variance Gaussian likelihood convention:
// mean over samples of the squared per-sample loss gradient.
ImportanceVector estimate_fisher(const ParamVector& params, std::size_t n_samples,
                                 const SampleGradFn& sample_grad);

// MAS: mean over samples of |gradient of the squared model output|.
ImportanceVector estimate_mas(const ParamVector& params, std::size_t n_samples,
                              const SampleGradFn& output_sq_grad);

// Quadratic penalty value; gradient is accumulated into grad_acc when
// non-null. Fisher: (lambda/2) sum F_i d_i^2; MAS: lambda sum O_i d_i^2.
double penalty(const ParamVector& params, const ImportanceVector& imp,
               const RegConfig& cfg, double* grad_acc);

ImportanceVector accumulate(const ImportanceVector& prev,
                            const ImportanceVector& next, const RegConfig& cfg);

}  // namespace dfw
