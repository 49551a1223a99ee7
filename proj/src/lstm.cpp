#include "driftfollow/lstm.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "driftfollow/kernels.hpp"

namespace dfw {

ParamVector init_params(int hidden_size, std::uint64_t seed) {
  if (hidden_size < 1) throw std::invalid_argument("hidden_size must be >= 1");
  ParamVector p;
  p.hidden_size = hidden_size;
  p.values.assign(ParamVector::size_for(hidden_size), 0.0);

  std::mt19937_64 rng(seed);
  const double k = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  std::uniform_real_distribution<double> dist(-k, k);

  const std::size_t h = static_cast<std::size_t>(hidden_size);
  for (std::size_t i = 0; i < 16 * h + 4 * h * h; ++i) p.values[i] = dist(rng);
  for (std::size_t i = 0; i < h; ++i) p.values[p.wo_off() + i] = dist(rng);
  // forget-gate bias 1.0 stabilizes short-sequence training
  for (std::size_t i = 0; i < h; ++i) p.values[p.b_off() + h + i] = 1.0;
  return p;
}

FeatureWindow FeatureWindow::from_rows(const std::vector<double>& rows, int horizon) {
  if (horizon < 1 || rows.size() != static_cast<std::size_t>(horizon) * kFeatureCount)
    throw std::invalid_argument("feature window must have exactly horizon rows");
  for (int t = 0; t < horizon; ++t) {
    const double* r = rows.data() + t * kFeatureCount;
    for (int j = 0; j < kFeatureCount; ++j)
      if (!std::isfinite(r[j])) throw std::invalid_argument("non-finite feature value");
    if (r[3] <= 0.0) throw std::invalid_argument("spacing must be positive");
    if (std::abs(r[2] - (r[1] - r[0])) > 1e-9)
      throw std::invalid_argument("relative_speed must equal lv_speed - sv_speed");
  }
  FeatureWindow w;
  w.horizon = horizon;
  w.rows = rows;
  return w;
}

void LstmCache::resize(int hidden_size, int horizon_steps) {
  hidden = hidden_size;
  horizon = horizon_steps;
  const std::size_t n = static_cast<std::size_t>(horizon_steps) * hidden_size;
  input.resize(static_cast<std::size_t>(horizon_steps) * kFeatureCount);
  gi.resize(n);
  gf.resize(n);
  gg.resize(n);
  go.resize(n);
  c.resize(n);
  tc.resize(n);
  hs.resize(n);
  valid = false;
}

double lstm_forward(const double* window, int horizon, const ParamVector& p,
                    LstmCache& cache) {
  const auto& K = kernels::active();
  const int h = p.hidden_size;
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (p.values.size() != ParamVector::size_for(h))
    throw std::invalid_argument("parameter vector length mismatch");
  for (int i = 0; i < horizon * kFeatureCount; ++i)
    if (!std::isfinite(window[i])) throw std::invalid_argument("non-finite input");

  if (cache.hidden != h || cache.horizon != horizon) cache.resize(h, horizon);
  std::copy(window, window + horizon * kFeatureCount, cache.input.begin());

  const std::size_t hz = static_cast<std::size_t>(h);
  std::vector<double> pre(4 * hz);
  const double* h_prev = nullptr;  // null means zero state
  const double* c_prev = nullptr;

  for (int t = 0; t < horizon; ++t) {
    const double* x = window + t * kFeatureCount;
    std::copy(p.b(), p.b() + 4 * hz, pre.begin());
    K.matvec_acc(pre.data(), p.wx(), x, 4 * hz, kFeatureCount);
    if (h_prev) K.matvec_acc(pre.data(), p.wh(), h_prev, 4 * hz, hz);

    double* gi = cache.gi.data() + t * hz;
    double* gf = cache.gf.data() + t * hz;
    double* gg = cache.gg.data() + t * hz;
    double* go = cache.go.data() + t * hz;
    double* c = cache.c.data() + t * hz;
    double* tc = cache.tc.data() + t * hz;
    double* hs = cache.hs.data() + t * hz;

    K.vsigmoid(gi, pre.data(), hz);
    K.vsigmoid(gf, pre.data() + hz, hz);
    K.vtanh(gg, pre.data() + 2 * hz, hz);
    K.vsigmoid(go, pre.data() + 3 * hz, hz);

    for (std::size_t j = 0; j < hz; ++j)
      c[j] = (c_prev ? gf[j] * c_prev[j] : 0.0) + gi[j] * gg[j];
    K.vtanh(tc, c, hz);
    for (std::size_t j = 0; j < hz; ++j) hs[j] = go[j] * tc[j];

    h_prev = hs;
    c_prev = c;
  }

  cache.raw = K.dot(p.wo(), h_prev, hz) + p.bo();
  cache.accel = kAccelLimit * std::tanh(cache.raw / kAccelLimit);
  cache.valid = true;
  return cache.accel;
}

double lstm_forward(const FeatureWindow& window, const ParamVector& p,
                    LstmCache& cache) {
  return lstm_forward(window.rows.data(), window.horizon, p, cache);
}

void LstmBackwardWork::resize(int hidden_size, int horizon_steps) {
  const std::size_t hz = static_cast<std::size_t>(hidden_size);
  input_grad.assign(static_cast<std::size_t>(horizon_steps) * kFeatureCount, 0.0);
  dh.assign(hz, 0.0);
  dc.assign(hz, 0.0);
  dpre.assign(4 * hz, 0.0);
  din.assign(hz, 0.0);
}

void lstm_backward(const LstmCache& cache, const ParamVector& p,
                   double upstream, double* param_grad_acc,
                   LstmBackwardWork& work) {
  if (!cache.valid) throw std::runtime_error("backward called on invalid cache");
  if (cache.hidden != p.hidden_size)
    throw std::runtime_error("cache/parameter hidden size mismatch");
  const auto& K = kernels::active();
  const int h = p.hidden_size;
  const int horizon = cache.horizon;
  const std::size_t hz = static_cast<std::size_t>(h);

  work.resize(h, horizon);
  if (upstream == 0.0) return;

  ParamVector dummy;  // offsets into the gradient buffer mirror ParamVector
  const std::size_t wx_off = 0;
  const std::size_t wh_off = 16 * hz;
  const std::size_t b_off = wh_off + 4 * hz * hz;
  const std::size_t wo_off = b_off + 4 * hz;
  const std::size_t bo_off = wo_off + hz;
  (void)dummy;

  // head: accel = L * tanh(raw / L)
  const double t = cache.accel / kAccelLimit;
  const double draw = upstream * (1.0 - t * t);
  const double* h_last = cache.hs.data() + (horizon - 1) * hz;
  K.axpy(param_grad_acc + wo_off, draw, h_last, hz);
  param_grad_acc[bo_off] += draw;

  std::fill(work.dh.begin(), work.dh.end(), 0.0);
  std::fill(work.dc.begin(), work.dc.end(), 0.0);
  K.axpy(work.dh.data(), draw, p.wo(), hz);

  for (int step = horizon - 1; step >= 0; --step) {
    const double* gi = cache.gi.data() + step * hz;
    const double* gf = cache.gf.data() + step * hz;
    const double* gg = cache.gg.data() + step * hz;
    const double* go = cache.go.data() + step * hz;
    const double* tc = cache.tc.data() + step * hz;
    const double* c_prev = step > 0 ? cache.c.data() + (step - 1) * hz : nullptr;
    const double* h_prev = step > 0 ? cache.hs.data() + (step - 1) * hz : nullptr;
    const double* x = cache.input.data() + step * kFeatureCount;

    double* dpre = work.dpre.data();
    for (std::size_t j = 0; j < hz; ++j) {
      const double dtc = work.dh[j] * go[j];
      const double dcj = work.dc[j] + dtc * (1.0 - tc[j] * tc[j]);
      const double doj = work.dh[j] * tc[j];
      const double dij = dcj * gg[j];
      const double dgj = dcj * gi[j];
      const double dfj = c_prev ? dcj * c_prev[j] : 0.0;
      dpre[j] = dij * gi[j] * (1.0 - gi[j]);
      dpre[hz + j] = dfj * gf[j] * (1.0 - gf[j]);
      dpre[2 * hz + j] = dgj * (1.0 - gg[j] * gg[j]);
      dpre[3 * hz + j] = doj * go[j] * (1.0 - go[j]);
      work.dc[j] = dcj * gf[j];  // carried to step-1
    }

    K.ger_acc(param_grad_acc + wx_off, dpre, x, 4 * hz, kFeatureCount);
    if (h_prev) K.ger_acc(param_grad_acc + wh_off, dpre, h_prev, 4 * hz, hz);
    for (std::size_t j = 0; j < 4 * hz; ++j) param_grad_acc[b_off + j] += dpre[j];

    K.matvec_t_acc(work.input_grad.data() + step * kFeatureCount, p.wx(), dpre,
                   4 * hz, kFeatureCount);

    std::fill(work.dh.begin(), work.dh.end(), 0.0);
    if (step > 0) K.matvec_t_acc(work.dh.data(), p.wh(), dpre, 4 * hz, hz);
  }
}

std::vector<double> finite_diff_grad(
    const std::function<double(const ParamVector&)>& f, const ParamVector& params,
    double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  ParamVector perturbed = params;
  std::vector<double> grad(params.values.size());
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const double orig = params.values[i];
    perturbed.values[i] = orig + eps;
    const double fp = f(perturbed);
    perturbed.values[i] = orig - eps;
    const double fm = f(perturbed);
    perturbed.values[i] = orig;
    grad[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

}  // namespace dfw
