#include "driftfollow/evaluate.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "driftfollow/util.hpp"

namespace dfw {

EventMetrics event_metrics(const Checkpoint& checkpoint, const Event& event,
                           double dt) {
  const Controller ctrl =
      make_lstm_controller(checkpoint.params, checkpoint.norm, checkpoint.horizon);
  const SimTrajectory traj = rollout(ctrl, event, checkpoint.horizon, dt, false);
  EventMetrics m;
  m.collided = detect_collision(traj);
  m.n_steps = static_cast<long>(traj.spacing.size());
  for (std::size_t k = 0; k < traj.spacing.size(); ++k) {
    const int t = checkpoint.horizon + static_cast<int>(k);
    const double dsp = traj.spacing[k] - event.spacing[t];
    const double dsv = traj.sv_speed[k] - event.fv_speed[t];
    m.se_spacing_sum += dsp * dsp;
    m.se_speed_sum += dsv * dsv;
  }
  return m;
}

MetricCell taskset_metrics(const Checkpoint& checkpoint, const TaskSet& task,
                           double dt, int jobs) {
  if (task.test.empty())
    throw std::invalid_argument("task " + std::to_string(task.task_id) +
                                " has an empty test split");
  std::vector<EventMetrics> per_event(task.test.size());
  parallel_for(task.test.size(), jobs, [&](std::size_t i) {
    per_event[i] = event_metrics(checkpoint, task.test[i], dt);
  });

  MetricCell cell;
  cell.n_events = static_cast<int>(task.test.size());
  double sp = 0.0, sv = 0.0, sp_pe = 0.0, sv_pe = 0.0;
  long steps = 0;
  int collisions = 0;
  for (const EventMetrics& m : per_event) {
    sp += m.se_spacing_sum;
    sv += m.se_speed_sum;
    steps += m.n_steps;
    if (m.n_steps > 0) {
      sp_pe += m.se_spacing_sum / static_cast<double>(m.n_steps);
      sv_pe += m.se_speed_sum / static_cast<double>(m.n_steps);
    }
    if (m.collided) ++collisions;
  }
  cell.mse_spacing = sp / static_cast<double>(steps);
  cell.mse_speed = sv / static_cast<double>(steps);
  cell.mse_spacing_per_event = sp_pe / static_cast<double>(cell.n_events);
  cell.mse_speed_per_event = sv_pe / static_cast<double>(cell.n_events);
  cell.collision_rate = 100.0 * collisions / static_cast<double>(cell.n_events);
  return cell;
}

StageMatrix build_stage_matrix(const std::vector<Checkpoint>& checkpoints,
                               const std::array<TaskSet, 3>& tasks, double dt,
                               int jobs) {
  if (checkpoints.empty()) throw std::runtime_error("no checkpoints to evaluate");
  StageMatrix matrix;
  for (const Checkpoint& cp : checkpoints) {
    const int max_task = cp.method == Method::joint ? 3 : cp.stage;
    for (int task_id = 1; task_id <= max_task; ++task_id)
      matrix.cells[{cp.method, task_id, cp.stage}] =
          taskset_metrics(cp, tasks[task_id - 1], dt, jobs);
  }
  return matrix;
}

double forgetting_pct(double first_stage_mse, double final_stage_mse) {
  if (first_stage_mse == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return 100.0 * (final_stage_mse - first_stage_mse) / first_stage_mse;
}

ForgettingScore forgetting_score(const StageMatrix& matrix, Method method,
                                 int task_id) {
  const int first_stage = method == Method::joint ? 3 : task_id;
  const MetricCell* first = matrix.find(method, task_id, first_stage);
  const MetricCell* final_cell = matrix.find(method, task_id, 3);
  if (!first || !final_cell)
    throw std::runtime_error("stage matrix not populated for this method/task");
  ForgettingScore score;
  score.first_stage = first_stage;
  score.spacing_pct = forgetting_pct(first->mse_spacing, final_cell->mse_spacing);
  score.speed_pct = forgetting_pct(first->mse_speed, final_cell->mse_speed);
  return score;
}

namespace {

const char* kMethodOrder[] = {"joint", "baseline", "ewc", "mas"};

std::string cell_str(const MetricCell* cell, double MetricCell::* field) {
  if (!cell) return "-";
  return format_double(cell->*field);
}

void write_table(std::ostream& out, const StageMatrix& matrix,
                 const std::vector<Method>& methods, const char* title,
                 double MetricCell::* field) {
  out << "## " << title << "\n\n";
  out << "| Method | Task Set | Stage 1 | Stage 2 | Stage 3 |\n";
  out << "|---|---|---|---|---|\n";
  for (Method m : methods) {
    for (int task = 1; task <= 3; ++task) {
      out << "| " << method_name(m) << " | " << task;
      for (int stage = 1; stage <= 3; ++stage)
        out << " | " << cell_str(matrix.find(m, task, stage), field);
      out << " |\n";
    }
  }
  out << "\n";
}

}  // namespace

void render_report(const StageMatrix& matrix,
                   const std::vector<Checkpoint>& checkpoints,
                   const std::array<TaskSet, 3>& tasks, const std::string& out_dir,
                   double dt, std::uint64_t seed) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);

  std::vector<Method> methods;
  for (const char* name : kMethodOrder) {
    const Method m = method_from_name(name);
    for (const auto& [key, cell] : matrix.cells)
      if (std::get<0>(key) == m) {
        methods.push_back(m);
        break;
      }
  }

  // stage_matrix.csv
  {
    std::ofstream csv(fs::path(out_dir) / "stage_matrix.csv");
    if (!csv) throw std::runtime_error("cannot write stage_matrix.csv");
    csv << "method,task,stage,mse_spacing,mse_speed,collision_rate_pct,n_events,"
           "mse_spacing_per_event,mse_speed_per_event\n";
    for (Method m : methods)
      for (int task = 1; task <= 3; ++task)
        for (int stage = 1; stage <= 3; ++stage)
          if (const MetricCell* cell = matrix.find(m, task, stage)) {
            csv << method_name(m) << ',' << task << ',' << stage << ','
                << format_double(cell->mse_spacing) << ','
                << format_double(cell->mse_speed) << ','
                << format_double(cell->collision_rate) << ',' << cell->n_events
                << ',' << format_double(cell->mse_spacing_per_event) << ','
                << format_double(cell->mse_speed_per_event) << '\n';
          }
  }

  // report.md
  {
    std::ofstream md(fs::path(out_dir) / "report.md");
    if (!md) throw std::runtime_error("cannot write report.md");
    md << "# Stage-matrix evaluation\n\n";
    md << "Closed-loop metrics on each task's test split. Stage k means the "
          "model state after training on task sets 1..k; joint is trained once "
          "on the union.\n\n";
    write_table(md, matrix, methods, "MSE in spacing (m^2)", &MetricCell::mse_spacing);
    write_table(md, matrix, methods, "MSE in speed ((m/s)^2)", &MetricCell::mse_speed);
    write_table(md, matrix, methods, "Collision rate (%)", &MetricCell::collision_rate);

    md << "## Forgetting scores\n\n";
    md << "Relative MSE increase from the first-trained stage to stage 3.\n\n";
    md << "| Method | Task Set | Spacing | Speed |\n|---|---|---|---|\n";
    for (Method m : methods) {
      const int max_task = 3;
      for (int task = 1; task <= max_task; ++task) {
        if (!matrix.find(m, task, 3)) continue;
        const int first_stage = m == Method::joint ? 3 : task;
        if (!matrix.find(m, task, first_stage)) continue;
        const ForgettingScore s = forgetting_score(matrix, m, task);
        auto pct = [](double v) {
          return std::isnan(v) ? std::string("undefined")
                               : format_double(v) + "%";
        };
        md << "| " << method_name(m) << " | " << task << " | "
           << pct(s.spacing_pct) << " | " << pct(s.speed_pct) << " |\n";
      }
    }
    md << "\n";
  }

  // trajectory comparisons: one seeded-random test event per task, all
  // methods' stage-3 checkpoints
  for (int task = 1; task <= 3; ++task) {
    const TaskSet& ts = tasks[task - 1];
    if (ts.test.empty()) continue;
    std::mt19937_64 rng(derive_seed(seed, 5000 + static_cast<std::uint64_t>(task)));
    const Event& event =
        ts.test[std::uniform_int_distribution<std::size_t>(0, ts.test.size() - 1)(rng)];

    std::ofstream csv(fs::path(out_dir) /
                      ("traj_task" + std::to_string(task) + ".csv"));
    if (!csv) throw std::runtime_error("cannot write trajectory csv");
    csv << "method,t,lv_speed,fv_speed_recorded,sv_speed_sim,spacing_recorded,"
           "spacing_sim,accel\n";
    for (const Checkpoint& cp : checkpoints) {
      if (cp.stage != 3) continue;
      const Controller ctrl =
          make_lstm_controller(cp.params, cp.norm, cp.horizon);
      const SimTrajectory traj = rollout(ctrl, event, cp.horizon, dt, false);
      for (std::size_t k = 0; k < traj.spacing.size(); ++k) {
        const int t = cp.horizon + static_cast<int>(k);
        csv << method_name(cp.method) << ',' << format_double(t * dt) << ','
            << format_double(event.lv_speed[t]) << ','
            << format_double(event.fv_speed[t]) << ','
            << format_double(traj.sv_speed[k]) << ','
            << format_double(event.spacing[t]) << ','
            << format_double(traj.spacing[k]) << ','
            << format_double(traj.accel[k]) << '\n';
      }
    }
  }
}

}  // namespace dfw
