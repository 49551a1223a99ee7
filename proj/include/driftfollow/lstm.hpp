#pragma once

#include <cstdint>
#include <cstddef>
#include <functional>
#include <vector>

namespace dfw {

// Flat parameter vector of a single-layer LSTM with a scalar affine head.
// Layout (hidden = h, gate order i|f|g|o):
//   wx   4h x 4   input weights
//   wh   4h x h   recurrent weights
//   b    4h       gate biases
//   wo   h        output-head weights
//   bo   1        output-head bias
struct ParamVector {
  int hidden_size = 0;
  std::vector<double> values;

  static std::size_t size_for(int hidden) {
    auto h = static_cast<std::size_t>(hidden);
    return 4 * h * (4 + h) + 4 * h + h + 1;
  }
  std::size_t wx_off() const { return 0; }
  std::size_t wh_off() const { return 16 * static_cast<std::size_t>(hidden_size); }
  std::size_t b_off() const { return wh_off() + 4 * static_cast<std::size_t>(hidden_size) * hidden_size; }
  std::size_t wo_off() const { return b_off() + 4 * static_cast<std::size_t>(hidden_size); }
  std::size_t bo_off() const { return wo_off() + static_cast<std::size_t>(hidden_size); }

  const double* wx() const { return values.data() + wx_off(); }
  const double* wh() const { return values.data() + wh_off(); }
  const double* b() const { return values.data() + b_off(); }
  const double* wo() const { return values.data() + wo_off(); }
  double bo() const { return values[bo_off()]; }
};

ParamVector init_params(int hidden_size, std::uint64_t seed);

// Validated model input: H rows of (sv_speed, lv_speed, relative_speed,
// spacing) in physical units, row-major.
struct FeatureWindow {
  int horizon = 0;
  std::vector<double> rows;  // horizon * 4

  static FeatureWindow from_rows(const std::vector<double>& rows, int horizon);
};

constexpr int kFeatureCount = 4;
constexpr double kAccelLimit = 8.0;  // m/s^2, smooth tanh saturation

struct LstmCache {
  int hidden = 0;
  int horizon = 0;
  bool valid = false;
  std::vector<double> input;               // H*4
  std::vector<double> gi, gf, gg, go;      // H*h, post-activation gates
  std::vector<double> c, tc, hs;           // H*h
  double raw = 0.0;
  double accel = 0.0;

  void resize(int hidden_size, int horizon_steps);
};

// Runs the LSTM over `horizon` steps from zero state and returns the
// saturated acceleration. `window` is horizon*4 row-major. The cache is
// filled for a subsequent backward pass.
double lstm_forward(const double* window, int horizon, const ParamVector& p,
                    LstmCache& cache);

double lstm_forward(const FeatureWindow& window, const ParamVector& p,
                    LstmCache& cache);

struct LstmBackwardWork {
  std::vector<double> input_grad;  // H*4, overwritten by lstm_backward
  std::vector<double> dh, dc, dpre, din;
  void resize(int hidden_size, int horizon_steps);
};

// Accumulates upstream * d(accel)/d(theta) into param_grad_acc (length
// ParamVector::size_for) and writes upstream * d(accel)/d(window) into
// work.input_grad.
void lstm_backward(const LstmCache& cache, const ParamVector& p,
                   double upstream, double* param_grad_acc,
                   LstmBackwardWork& work);

// Central finite differences of an arbitrary scalar function of the
// parameters; testing oracle.
std::vector<double> finite_diff_grad(
    const std::function<double(const ParamVector&)>& f, const ParamVector& params,
    double eps);

}  // namespace dfw
