#include "driftfollow/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>

#include "driftfollow/util.hpp"

namespace dfw {

std::string method_name(Method m) {
  switch (m) {
    case Method::joint: return "joint";
    case Method::baseline: return "baseline";
    case Method::ewc: return "ewc";
    case Method::mas: return "mas";
  }
  return "unknown";
}

Method method_from_name(const std::string& name) {
  if (name == "joint") return Method::joint;
  if (name == "baseline") return Method::baseline;
  if (name == "ewc") return Method::ewc;
  if (name == "mas") return Method::mas;
  throw std::invalid_argument("unknown method '" + name + "'");
}

RegConfig TrainConfig::resolved_reg() const {
  RegConfig reg;
  reg.accumulation = accumulation;
  if (lambda >= 0.0)
    reg.lambda = lambda;
  else
    reg.lambda = 10000.0;
  return reg;
}

void TrainConfig::validate() const {
  if (epochs < 1 || horizon < 1 || hidden_size < 1 || batch_size < 1 ||
      rollout_chunk < 1 || jobs < 1)
    throw std::invalid_argument("config counts must be positive");
  if (!(learning_rate > 0.0) || !(dt > 0.0) || !(penalty_weight >= 0.0))
    throw std::invalid_argument("config rates must be positive");
}

NormStats compute_norm_stats(const std::vector<const Event*>& events) {
  NormStats stats;
  std::array<double, kFeatureCount> sum{}, sumsq{};
  std::size_t n = 0;
  for (const Event* ev : events) {
    for (std::size_t i = 0; i < ev->size(); ++i) {
      const double f[kFeatureCount] = {ev->fv_speed[i], ev->lv_speed[i],
                                       ev->lv_speed[i] - ev->fv_speed[i],
                                       ev->spacing[i]};
      for (int j = 0; j < kFeatureCount; ++j) {
        sum[j] += f[j];
        sumsq[j] += f[j] * f[j];
      }
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("cannot compute stats from no data");
  for (int j = 0; j < kFeatureCount; ++j) {
    stats.mean[j] = sum[j] / static_cast<double>(n);
    const double var = sumsq[j] / static_cast<double>(n) - stats.mean[j] * stats.mean[j];
    stats.stddev[j] = std::sqrt(std::max(var, 0.0));
    if (stats.stddev[j] < 1e-8) stats.stddev[j] = 1e-8;
  }
  return stats;
}

namespace {

inline void normalize_row(double* out, double sv, double lv, double spacing,
                          const NormStats& norm) {
  out[0] = (sv - norm.mean[0]) / norm.stddev[0];
  out[1] = (lv - norm.mean[1]) / norm.stddev[1];
  out[2] = (lv - sv - norm.mean[2]) / norm.stddev[2];
  out[3] = (spacing - norm.mean[3]) / norm.stddev[3];
}

}  // namespace

EventLossResult event_loss(const ParamVector& params, const Event& event,
                           const TrainConfig& cfg, const NormStats& norm,
                           double* grad_acc) {
  const int h_steps = cfg.horizon;
  const int n = static_cast<int>(event.size());
  if (n < h_steps + 2)
    throw std::invalid_argument("event '" + event.event_id + "' shorter than horizon + 2");
  const double dt = cfg.dt;

  std::vector<double> sv(n), sp(n);
  std::vector<char> clamped(n, 0);
  std::vector<double> norm_rows(static_cast<std::size_t>(n) * kFeatureCount);
  for (int t = 0; t < h_steps; ++t) {
    sv[t] = event.fv_speed[t];
    sp[t] = event.spacing[t];
    normalize_row(norm_rows.data() + t * kFeatureCount, sv[t], event.lv_speed[t],
                  sp[t], norm);
  }

  const std::size_t p_len = params.values.size();
  std::vector<double> local_grad;
  if (grad_acc) local_grad.assign(p_len, 0.0);

  const int chunk = cfg.rollout_chunk;
  std::vector<LstmCache> caches(grad_acc ? chunk : 1);
  LstmBackwardWork work;
  std::vector<double> lam_sv(chunk), lam_sp(chunk);

  EventLossResult result;
  double sq_sum = 0.0;
  int last_step = -1;
  bool truncated = false;

  for (int chunk_start = h_steps; chunk_start < n && !truncated;
       chunk_start += chunk) {
    const int chunk_end = std::min(chunk_start + chunk, n);
    int chunk_last = chunk_start - 1;

    for (int t = chunk_start; t < chunk_end; ++t) {
      LstmCache& cache = caches[grad_acc ? (t - chunk_start) : 0];
      const double accel = lstm_forward(
          norm_rows.data() + static_cast<std::size_t>(t - h_steps) * kFeatureCount,
          h_steps, params, cache);
      const double raw_speed = sv[t - 1] + accel * dt;
      clamped[t] = raw_speed < 0.0;
      sv[t] = clamped[t] ? 0.0 : raw_speed;
      sp[t] = sp[t - 1] + (event.lv_speed[t - 1] - sv[t - 1]) * dt;
      if (clamped[t]) result.clamped = true;
      normalize_row(norm_rows.data() + static_cast<std::size_t>(t) * kFeatureCount,
                    sv[t], event.lv_speed[t], sp[t], norm);

      const double dsp = sp[t] - event.spacing[t];
      const double dsv = sv[t] - event.fv_speed[t];
      sq_sum += dsp * dsp + dsv * dsv;
      chunk_last = t;
      last_step = t;
      if (sp[t] <= 0.0) {
        result.collided = true;
        truncated = true;  // training semantics: stop at first collision
        break;
      }
    }

    if (!grad_acc) continue;

    std::fill(lam_sv.begin(), lam_sv.end(), 0.0);
    std::fill(lam_sp.begin(), lam_sp.end(), 0.0);
    for (int t = chunk_last; t >= chunk_start; --t) {
      const int idx = t - chunk_start;
      lam_sv[idx] += 2.0 * (sv[t] - event.fv_speed[t]);
      lam_sp[idx] += 2.0 * (sp[t] - event.spacing[t]);

      const double up_accel = clamped[t] ? 0.0 : lam_sv[idx] * dt;
      if (idx > 0) {
        lam_sv[idx - 1] += (clamped[t] ? 0.0 : lam_sv[idx]) - lam_sp[idx] * dt;
        lam_sp[idx - 1] += lam_sp[idx];
      }
      if (up_accel == 0.0) continue;

      lstm_backward(caches[idx], params, up_accel, local_grad.data(), work);
      // window rows feed back into earlier simulated states (same chunk only:
      // truncated BPTT drops cross-chunk terms)
      const int first_row = std::max(chunk_start, h_steps) - (t - h_steps);
      for (int r = std::max(0, first_row); r < h_steps; ++r) {
        const int i = t - h_steps + r;
        const int j = i - chunk_start;
        if (j < 0) continue;
        const double* g = work.input_grad.data() + r * kFeatureCount;
        lam_sv[j] += g[0] / norm.stddev[0] - g[2] / norm.stddev[2];
        lam_sp[j] += g[3] / norm.stddev[3];
      }
    }
  }

  const int scored = last_step - h_steps + 1;
  result.mse = sq_sum / static_cast<double>(scored);
  result.value = result.mse;
  if (result.collided) result.value += cfg.penalty_weight;
  if (result.clamped) result.value += cfg.penalty_weight;
  if (!std::isfinite(result.value))
    throw std::runtime_error("non-finite loss on event '" + event.event_id + "'");

  if (grad_acc) {
    const double scale = 1.0 / static_cast<double>(scored);
    for (std::size_t i = 0; i < p_len; ++i) grad_acc[i] += scale * local_grad[i];
  }
  return result;
}

Controller make_lstm_controller(const ParamVector& params, const NormStats& norm,
                                int horizon) {
  auto cache = std::make_shared<LstmCache>();
  auto buffer = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(horizon) * kFeatureCount);
  return [params, norm, horizon, cache, buffer](const double* window, int) {
    double* out = buffer->data();
    for (int t = 0; t < horizon; ++t) {
      const double* r = window + t * kFeatureCount;
      normalize_row(out + t * kFeatureCount, r[0], r[1], r[3], norm);
    }
    return lstm_forward(out, horizon, params, *cache);
  };
}

void adam_step(ParamVector& params, const std::vector<double>& grad,
               AdamState& state, double lr) {
  const std::size_t n = params.values.size();
  if (grad.size() != n) throw std::invalid_argument("gradient length mismatch");
  if (state.m.size() != n) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
    state.step = 0;
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params.values[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

namespace {

// Pooled closed-loop MSEs (spacing, speed) over a split; NaN when empty.
std::pair<double, double> closed_loop_mse(const ParamVector& params,
                                          const std::vector<Event>& events,
                                          const TrainConfig& cfg,
                                          const NormStats& norm) {
  if (events.empty())
    return {std::numeric_limits<double>::quiet_NaN(),
            std::numeric_limits<double>::quiet_NaN()};
  struct Sums { double sp = 0.0, sv = 0.0; long n = 0; };
  std::vector<Sums> per_event(events.size());
  parallel_for(events.size(), cfg.jobs, [&](std::size_t i) {
    const Controller ctrl = make_lstm_controller(params, norm, cfg.horizon);
    const SimTrajectory traj = rollout(ctrl, events[i], cfg.horizon, cfg.dt, false);
    Sums& s = per_event[i];
    for (std::size_t k = 0; k < traj.spacing.size(); ++k) {
      const int t = cfg.horizon + static_cast<int>(k);
      const double dsp = traj.spacing[k] - events[i].spacing[t];
      const double dsv = traj.sv_speed[k] - events[i].fv_speed[t];
      s.sp += dsp * dsp;
      s.sv += dsv * dsv;
    }
    s.n = static_cast<long>(traj.spacing.size());
  });
  double sp = 0.0, svs = 0.0;
  long n = 0;
  for (const Sums& s : per_event) {
    sp += s.sp;
    svs += s.sv;
    n += s.n;
  }
  if (n == 0)
    return {std::numeric_limits<double>::quiet_NaN(),
            std::numeric_limits<double>::quiet_NaN()};
  return {sp / static_cast<double>(n), svs / static_cast<double>(n)};
}

}  // namespace

TrainTaskResult train_task(ParamVector params, const TaskSet& task,
                           const TrainConfig& cfg, const NormStats& norm,
                           const ImportanceVector* importance) {
  cfg.validate();
  if (task.train.empty()) throw std::invalid_argument("empty training split");
  const RegConfig reg = cfg.resolved_reg();
  const bool use_penalty = importance != nullptr && reg.lambda > 0.0;

  AdamState adam;
  const std::size_t p_len = params.values.size();
  std::vector<std::vector<double>> event_grads(cfg.batch_size);
  std::vector<EventLossResult> event_results(cfg.batch_size);
  std::vector<double> batch_grad(p_len);
  std::vector<std::size_t> order(task.train.size());

  TrainTaskResult out;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(derive_seed(cfg.seed, 7000 +
                                    static_cast<std::uint64_t>(task.task_id) * 100 +
                                    static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    double event_loss_sum = 0.0;
    double penalty_sum = 0.0;
    std::size_t batches = 0;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t bsz =
          std::min<std::size_t>(cfg.batch_size, order.size() - start);
      parallel_for(bsz, cfg.jobs, [&](std::size_t i) {
        event_grads[i].assign(p_len, 0.0);
        event_results[i] = event_loss(params, task.train[order[start + i]], cfg,
                                      norm, event_grads[i].data());
      });
      std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
      const double inv_b = 1.0 / static_cast<double>(bsz);
      for (std::size_t i = 0; i < bsz; ++i) {
        for (std::size_t j = 0; j < p_len; ++j)
          batch_grad[j] += inv_b * event_grads[i][j];
        event_loss_sum += event_results[i].value;
      }
      if (use_penalty)
        penalty_sum += penalty(params, *importance, reg, batch_grad.data());
      ++batches;
      adam_step(params, batch_grad, adam, cfg.learning_rate);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.task_id = task.task_id;
    rec.train_loss = event_loss_sum / static_cast<double>(order.size()) +
                     (batches ? penalty_sum / static_cast<double>(batches) : 0.0);
    if (!std::isfinite(rec.train_loss))
      throw std::runtime_error("non-finite training loss");
    auto [vsp, vsv] = closed_loop_mse(params, task.val, cfg, norm);
    rec.val_mse_spacing = vsp;
    rec.val_mse_speed = vsv;
    out.history.push_back(rec);
  }
  out.params = std::move(params);
  return out;
}

namespace {

std::vector<std::size_t> capped_sample(std::size_t total, std::size_t cap,
                                       std::uint64_t seed) {
  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  if (total <= cap) return idx;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

ImportanceVector estimate_fisher_for_task(const ParamVector& params,
                                          const std::vector<Event>& train_events,
                                          const TrainConfig& cfg,
                                          const NormStats& norm) {
  if (train_events.empty()) throw std::invalid_argument("empty event set");
  const auto idx = capped_sample(train_events.size(), cfg.importance_sample_cap,
                                 derive_seed(cfg.seed, 9100));
  return estimate_fisher(params, idx.size(),
                         [&](std::size_t k, std::vector<double>& grad) {
                           event_loss(params, train_events[idx[k]], cfg, norm,
                                      grad.data());
                         });
}

ImportanceVector estimate_mas_for_task(const ParamVector& params,
                                       const std::vector<Event>& train_events,
                                       const TrainConfig& cfg,
                                       const NormStats& norm) {
  if (train_events.empty()) throw std::invalid_argument("empty event set");
  const int h_steps = cfg.horizon;
  // every H-step window of recorded data is a sample point
  std::vector<std::pair<std::size_t, int>> windows;
  for (std::size_t e = 0; e < train_events.size(); ++e) {
    const int n = static_cast<int>(train_events[e].size());
    for (int t = h_steps; t <= n; ++t) windows.emplace_back(e, t - h_steps);
  }
  if (windows.empty()) throw std::invalid_argument("no windows in event set");
  const auto idx = capped_sample(windows.size(), cfg.importance_sample_cap,
                                 derive_seed(cfg.seed, 9200));

  std::vector<double> row_buf(static_cast<std::size_t>(h_steps) * kFeatureCount);
  LstmCache cache;
  LstmBackwardWork work;
  return estimate_mas(params, idx.size(),
                      [&](std::size_t k, std::vector<double>& grad) {
                        const auto [e, start] = windows[idx[k]];
                        const Event& ev = train_events[e];
                        for (int t = 0; t < h_steps; ++t) {
                          const int i = start + t;
                          normalize_row(row_buf.data() + t * kFeatureCount,
                                        ev.fv_speed[i], ev.lv_speed[i],
                                        ev.spacing[i], norm);
                        }
                        const double f =
                            lstm_forward(row_buf.data(), h_steps, params, cache);
                        lstm_backward(cache, params, 2.0 * f, grad.data(), work);
                      });
}

CurriculumResult run_curriculum(const std::array<TaskSet, 3>& tasks,
                                const TrainConfig& cfg) {
  cfg.validate();
  CurriculumResult out;

  if (cfg.method == Method::joint) {
    TaskSet merged;
    merged.task_id = 0;
    for (const TaskSet& t : tasks) {
      merged.train.insert(merged.train.end(), t.train.begin(), t.train.end());
      merged.val.insert(merged.val.end(), t.val.begin(), t.val.end());
    }
    std::vector<const Event*> stat_events;
    for (const Event& e : merged.train) stat_events.push_back(&e);
    const NormStats norm = compute_norm_stats(stat_events);

    auto result = train_task(init_params(cfg.hidden_size, cfg.seed), merged, cfg,
                             norm, nullptr);
    out.history = std::move(result.history);
    out.checkpoints.push_back(Checkpoint{std::move(result.params), std::nullopt, 3,
                                         Method::joint, cfg.horizon, norm});
    return out;
  }

  std::vector<const Event*> stat_events;
  for (const Event& e : tasks[0].train) stat_events.push_back(&e);
  const NormStats norm = compute_norm_stats(stat_events);

  ParamVector params = init_params(cfg.hidden_size, cfg.seed);
  std::optional<ImportanceVector> accumulated;
  const RegConfig reg = cfg.resolved_reg();

  for (int stage = 1; stage <= 3; ++stage) {
    const TaskSet& task = tasks[stage - 1];
    auto result = train_task(std::move(params), task, cfg, norm,
                             accumulated ? &*accumulated : nullptr);
    params = std::move(result.params);
    out.history.insert(out.history.end(), result.history.begin(),
                       result.history.end());

    if (cfg.method == Method::ewc || cfg.method == Method::mas) {
      ImportanceVector fresh =
          cfg.method == Method::ewc
              ? estimate_fisher_for_task(params, task.train, cfg, norm)
              : estimate_mas_for_task(params, task.train, cfg, norm);
      accumulated = accumulated ? accumulate(*accumulated, fresh, reg)
                                : std::move(fresh);
    }

    out.checkpoints.push_back(
        Checkpoint{params, accumulated, stage, cfg.method, cfg.horizon, norm});
  }
  return out;
}

}  // namespace dfw
