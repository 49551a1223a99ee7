#include "driftfollow/importance.hpp"

#include <cmath>
#include <stdexcept>

namespace dfw {
namespace {

ImportanceVector estimate(ImportanceKind kind, const ParamVector& params,
                          std::size_t n_samples, const SampleGradFn& fn) {
  if (n_samples == 0) throw std::invalid_argument("importance needs >= 1 sample");
  ImportanceVector imp;
  imp.kind = kind;
  imp.tasks_seen = 1;
  imp.anchor = params;
  imp.weights.assign(params.values.size(), 0.0);

  std::vector<double> grad(params.values.size());
  for (std::size_t k = 0; k < n_samples; ++k) {
    std::fill(grad.begin(), grad.end(), 0.0);
    fn(k, grad);
    if (kind == ImportanceKind::fisher) {
      for (std::size_t i = 0; i < grad.size(); ++i)
        imp.weights[i] += grad[i] * grad[i];
    } else {
      for (std::size_t i = 0; i < grad.size(); ++i)
        imp.weights[i] += std::abs(grad[i]);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n_samples);
  for (double& w : imp.weights) w *= inv_n;
  return imp;
}

}  // namespace

ImportanceVector estimate_fisher(const ParamVector& params, std::size_t n_samples,
                                 const SampleGradFn& sample_grad) {
  return estimate(ImportanceKind::fisher, params, n_samples, sample_grad);
}

ImportanceVector estimate_mas(const ParamVector& params, std::size_t n_samples,
                              const SampleGradFn& output_sq_grad) {
  return estimate(ImportanceKind::mas, params, n_samples, output_sq_grad);
}

double penalty(const ParamVector& params, const ImportanceVector& imp,
               const RegConfig& cfg, double* grad_acc) {
  const std::size_t n = params.values.size();
  if (imp.weights.size() != n || imp.anchor.values.size() != n)
    throw std::invalid_argument("importance/parameter length mismatch");

  double value = 0.0;
  if (imp.kind == ImportanceKind::fisher) {
    for (std::size_t i = 0; i < n; ++i) {
      const double d = params.values[i] - imp.anchor.values[i];
      value += imp.weights[i] * d * d;
      if (grad_acc) grad_acc[i] += cfg.lambda * imp.weights[i] * d;
    }
    value *= 0.5 * cfg.lambda;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double d = params.values[i] - imp.anchor.values[i];
      value += imp.weights[i] * d * d;
      if (grad_acc) grad_acc[i] += 2.0 * cfg.lambda * imp.weights[i] * d;
    }
    value *= cfg.lambda;
  }
  return value;
}

ImportanceVector accumulate(const ImportanceVector& prev,
                            const ImportanceVector& next, const RegConfig& cfg) {
  if (prev.kind != next.kind)
    throw std::invalid_argument("cannot accumulate importance of different kinds");
  if (prev.weights.size() != next.weights.size())
    throw std::invalid_argument("importance length mismatch");

  ImportanceVector out;
  out.kind = prev.kind;
  out.anchor = next.anchor;
  out.tasks_seen = prev.tasks_seen + 1;
  out.weights.resize(prev.weights.size());
  if (cfg.accumulation == Accumulation::sum) {
    for (std::size_t i = 0; i < out.weights.size(); ++i)
      out.weights[i] = prev.weights[i] + next.weights[i];
  } else {
    const double n = static_cast<double>(prev.tasks_seen);
    for (std::size_t i = 0; i < out.weights.size(); ++i)
      out.weights[i] = (prev.weights[i] * n + next.weights[i]) / (n + 1.0);
  }
  return out;
}

}  // namespace dfw
