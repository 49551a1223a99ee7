#include "driftfollow/sim.hpp"

#include <cmath>
#include <stdexcept>

#include "driftfollow/lstm.hpp"

namespace dfw {

SimState sim_step(const SimState& state, double accel, double lv_speed, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!std::isfinite(accel) || !std::isfinite(lv_speed) ||
      !std::isfinite(state.sv_speed) || !std::isfinite(state.spacing))
    throw std::invalid_argument("non-finite simulator input");
  SimState next;
  const double raw_speed = state.sv_speed + accel * dt;
  next.sv_speed = raw_speed < 0.0 ? 0.0 : raw_speed;
  next.clamped = raw_speed < 0.0;
  next.spacing = state.spacing + (lv_speed - state.sv_speed) * dt;
  next.t_index = state.t_index + 1;
  return next;
}

SimTrajectory rollout(const Controller& controller, const Event& event,
                      int horizon, double dt, bool stop_on_collision) {
  const int n = static_cast<int>(event.size());
  if (n < horizon + 2)
    throw std::invalid_argument("event '" + event.event_id +
                                "' shorter than horizon + 2 steps");

  SimTrajectory traj;
  traj.warmup = horizon;
  traj.dt = dt;
  const int sim_steps = n - horizon;
  traj.sv_speed.reserve(sim_steps);
  traj.spacing.reserve(sim_steps);
  traj.accel.reserve(sim_steps);

  // window rows for event steps t-H..t-1; warm-up rows use the recorded FV
  std::vector<double> window(static_cast<std::size_t>(horizon) * kFeatureCount);
  auto fill_row = [&](double* row, double sv, double lv, double spacing) {
    row[0] = sv;
    row[1] = lv;
    row[2] = lv - sv;
    row[3] = spacing;
  };
  for (int t = 0; t < horizon; ++t)
    fill_row(window.data() + t * kFeatureCount, event.fv_speed[t],
             event.lv_speed[t], event.spacing[t]);

  SimState state;
  state.sv_speed = event.fv_speed[horizon - 1];
  state.spacing = event.spacing[horizon - 1];
  state.t_index = horizon - 1;

  for (int t = horizon; t < n; ++t) {
    const double accel = controller(window.data(), t);
    state = sim_step(state, accel, event.lv_speed[t - 1], dt);
    if (state.clamped) ++traj.backward_clamp_count;

    traj.sv_speed.push_back(state.sv_speed);
    traj.spacing.push_back(state.spacing);
    traj.accel.push_back(accel);

    if (!traj.collision_step && state.spacing <= 0.0) {
      traj.collision_step = t - horizon;
      if (stop_on_collision) break;
    }

    // slide the window: drop the oldest row, append the new simulated state
    std::move(window.begin() + kFeatureCount, window.end(), window.begin());
    fill_row(window.data() + (horizon - 1) * kFeatureCount, state.sv_speed,
             event.lv_speed[t], state.spacing);
  }
  return traj;
}

bool detect_collision(const SimTrajectory& traj) {
  return traj.collision_step.has_value();
}

std::vector<double> reconstruct_accels(const Event& event) {
  std::vector<double> accels(event.size(), 0.0);
  for (std::size_t t = 1; t < event.size(); ++t)
    accels[t] = (event.fv_speed[t] - event.fv_speed[t - 1]) / event.dt;
  return accels;
}

}  // namespace dfw
