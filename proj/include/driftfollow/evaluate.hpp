#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "driftfollow/train.hpp"

namespace dfw {

struct MetricCell {
  double mse_spacing = 0.0;
  double mse_speed = 0.0;
  double collision_rate = 0.0;  // percent
  int n_events = 0;
  // per-event averages, emitted alongside the step-pooled tables
  double mse_spacing_per_event = 0.0;
  double mse_speed_per_event = 0.0;
};

struct EventMetrics {
  double se_spacing_sum = 0.0;
  double se_speed_sum = 0.0;
  long n_steps = 0;
  bool collided = false;
};

EventMetrics event_metrics(const Checkpoint& checkpoint, const Event& event,
                           double dt);

MetricCell taskset_metrics(const Checkpoint& checkpoint, const TaskSet& task,
                           double dt, int jobs = 1);

// (method, task_id, stage) -> cell; task_id <= stage for CL methods, joint
// populated at stage 3 only.
struct StageMatrix {
  std::map<std::tuple<Method, int, int>, MetricCell> cells;

  const MetricCell* find(Method m, int task_id, int stage) const {
    auto it = cells.find({m, task_id, stage});
    return it == cells.end() ? nullptr : &it->second;
  }
};

StageMatrix build_stage_matrix(const std::vector<Checkpoint>& checkpoints,
                               const std::array<TaskSet, 3>& tasks, double dt,
                               int jobs = 1);

// Relative MSE increase (percent) from the first stage the task was trained
// on to stage 3; NaN marks an undefined (zero-denominator) score.
double forgetting_pct(double first_stage_mse, double final_stage_mse);

struct ForgettingScore {
  double spacing_pct = 0.0;
  double speed_pct = 0.0;
  int first_stage = 0;
};

ForgettingScore forgetting_score(const StageMatrix& matrix, Method method,
                                 int task_id);

// Writes report.md, stage_matrix.csv and traj_task<k>.csv into out_dir.
void render_report(const StageMatrix& matrix,
                   const std::vector<Checkpoint>& checkpoints,
                   const std::array<TaskSet, 3>& tasks, const std::string& out_dir,
                   double dt, std::uint64_t seed);

}  // namespace dfw
