#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "driftfollow/events.hpp"

namespace dfw {

struct SimState {
  double sv_speed = 0.0;
  double spacing = 0.0;
  int t_index = 0;
  bool clamped = false;  // speed clamp fired on the last step
};

// Forward Euler with step-start speeds; sv_speed clamped at zero.
SimState sim_step(const SimState& state, double accel, double lv_speed, double dt);

// Closed-loop rollout over the simulated portion of an event. Index 0 of the
// arrays corresponds to event step `warmup` (= horizon); the first `warmup`
// steps are teacher-forced from the recorded FV.
struct SimTrajectory {
  int warmup = 0;
  double dt = 0.0;
  std::vector<double> sv_speed;
  std::vector<double> spacing;
  std::vector<double> accel;
  std::optional<int> collision_step;  // index into the arrays above
  int backward_clamp_count = 0;
};

// Controller: maps an H x 4 physical feature window (row-major, rows
// (sv, lv, lv-sv, spacing)) plus the event step being decided to an
// acceleration in m/s^2.
using Controller = std::function<double(const double* window, int t)>;

SimTrajectory rollout(const Controller& controller, const Event& event,
                      int horizon, double dt, bool stop_on_collision);

bool detect_collision(const SimTrajectory& traj);

// Per-step accelerations implied by the recorded FV speeds under the
// simulator's own Euler rule; feeding these back reproduces the recording.
std::vector<double> reconstruct_accels(const Event& event);

}  // namespace dfw
