#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "driftfollow/evaluate.hpp"

using namespace dfw;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("dfw_eval_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::array<TaskSet, 3> small_tasks(std::uint64_t seed) {
  const Regime regimes[3] = {Regime::high, Regime::mid, Regime::low};
  std::array<TaskSet, 3> tasks;
  for (int k = 0; k < 3; ++k) {
    const auto ev = generate_events(regimes[k], 8, 0.1, seed + k);
    tasks[k].task_id = k + 1;
    tasks[k].speed_low = 0.0;
    tasks[k].speed_high = 1e9;
    tasks[k].train.assign(ev.begin(), ev.begin() + 4);
    tasks[k].val.assign(ev.begin() + 4, ev.begin() + 6);
    tasks[k].test.assign(ev.begin() + 6, ev.end());
  }
  return tasks;
}

Checkpoint make_checkpoint(const std::array<TaskSet, 3>& tasks, Method m,
                           int stage, std::uint64_t seed) {
  Checkpoint cp;
  cp.params = init_params(4, seed);
  cp.stage = stage;
  cp.method = m;
  cp.horizon = 10;
  std::vector<const Event*> ptrs;
  for (const Event& e : tasks[0].train) ptrs.push_back(&e);
  cp.norm = compute_norm_stats(ptrs);
  return cp;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("taskset_metrics pools per-step errors exactly") {
  const auto tasks = small_tasks(100);
  const Checkpoint cp = make_checkpoint(tasks, Method::baseline, 1, 5);

  const MetricCell cell = taskset_metrics(cp, tasks[0], 0.1);
  CHECK(cell.n_events == static_cast<int>(tasks[0].test.size()));

  // independent pooling from per-event sums
  double se_sp = 0.0, se_v = 0.0, per_ev_sp = 0.0, per_ev_v = 0.0;
  long steps = 0;
  int collided = 0;
  for (const Event& ev : tasks[0].test) {
    const EventMetrics em = event_metrics(cp, ev, 0.1);
    se_sp += em.se_spacing_sum;
    se_v += em.se_speed_sum;
    steps += em.n_steps;
    collided += em.collided ? 1 : 0;
    per_ev_sp += em.se_spacing_sum / static_cast<double>(em.n_steps);
    per_ev_v += em.se_speed_sum / static_cast<double>(em.n_steps);
  }
  const double n = static_cast<double>(tasks[0].test.size());
  CHECK(cell.mse_spacing == doctest::Approx(se_sp / steps).epsilon(1e-12));
  CHECK(cell.mse_speed == doctest::Approx(se_v / steps).epsilon(1e-12));
  CHECK(cell.collision_rate == doctest::Approx(100.0 * collided / n).epsilon(1e-12));
  CHECK(cell.mse_spacing_per_event == doctest::Approx(per_ev_sp / n).epsilon(1e-12));
  CHECK(cell.mse_speed_per_event == doctest::Approx(per_ev_v / n).epsilon(1e-12));
}

TEST_CASE("event_metrics on a flat equilibrium event is exactly zero") {
  // flat event, params all zero -> simulated trajectory equals recording,
  // every squared error is exactly zero
  const auto tasks = small_tasks(200);
  Event ev;
  ev.event_id = "flat";
  ev.dt = 0.1;
  ev.lv_speed.assign(30, 7.0);
  ev.fv_speed.assign(30, 7.0);
  ev.spacing.assign(30, 14.0);

  Checkpoint cp = make_checkpoint(tasks, Method::baseline, 1, 1);
  cp.params.values.assign(cp.params.values.size(), 0.0);
  cp.norm = NormStats{};  // identity normalization
  const EventMetrics em = event_metrics(cp, ev, 0.1);
  CHECK(em.n_steps == 20);
  CHECK(em.se_spacing_sum == 0.0);
  CHECK(em.se_speed_sum == 0.0);
  CHECK_FALSE(em.collided);
}

TEST_CASE("stage matrix shape: 6 cells for CL methods, 3 for joint") {
  const auto tasks = small_tasks(300);

  std::vector<Checkpoint> cl;
  for (int stage = 1; stage <= 3; ++stage)
    cl.push_back(make_checkpoint(tasks, Method::ewc, stage, stage));
  const StageMatrix m1 = build_stage_matrix(cl, tasks, 0.1);
  CHECK(m1.cells.size() == 6);
  for (int stage = 1; stage <= 3; ++stage)
    for (int task = 1; task <= stage; ++task)
      CHECK(m1.find(Method::ewc, task, stage) != nullptr);
  CHECK(m1.find(Method::ewc, 2, 1) == nullptr);

  std::vector<Checkpoint> joint{make_checkpoint(tasks, Method::joint, 3, 9)};
  const StageMatrix m2 = build_stage_matrix(joint, tasks, 0.1);
  CHECK(m2.cells.size() == 3);
  for (int task = 1; task <= 3; ++task)
    CHECK(m2.find(Method::joint, task, 3) != nullptr);
}

TEST_CASE("forgetting percentage arithmetic") {
  CHECK(forgetting_pct(23.01, 81.35) ==
        doctest::Approx(100.0 * (81.35 - 23.01) / 23.01).epsilon(1e-12));
  CHECK(forgetting_pct(23.01, 81.35) == doctest::Approx(253.6).epsilon(1e-3));
  CHECK(forgetting_pct(10.0, 5.0) == doctest::Approx(-50.0).epsilon(1e-12));
  CHECK(std::isnan(forgetting_pct(0.0, 5.0)));
}

TEST_CASE("forgetting_score reads the right cells") {
  StageMatrix m;
  MetricCell first, last;
  first.mse_spacing = 2.0;
  first.mse_speed = 1.0;
  last.mse_spacing = 6.0;
  last.mse_speed = 3.0;
  m.cells[{Method::baseline, 1, 1}] = first;
  m.cells[{Method::baseline, 1, 3}] = last;
  const ForgettingScore fs1 = forgetting_score(m, Method::baseline, 1);
  CHECK(fs1.first_stage == 1);
  CHECK(fs1.spacing_pct == doctest::Approx(200.0).epsilon(1e-12));
  CHECK(fs1.speed_pct == doctest::Approx(200.0).epsilon(1e-12));

  // task 2 first appears at stage 2
  m.cells[{Method::baseline, 2, 2}] = first;
  m.cells[{Method::baseline, 2, 3}] = last;
  const ForgettingScore fs2 = forgetting_score(m, Method::baseline, 2);
  CHECK(fs2.first_stage == 2);
  CHECK(fs2.spacing_pct == doctest::Approx(200.0).epsilon(1e-12));
}

TEST_CASE("render_report emits stable, re-parsable artifacts") {
  const auto tasks = small_tasks(400);
  std::vector<Checkpoint> cps;
  for (int stage = 1; stage <= 3; ++stage)
    cps.push_back(make_checkpoint(tasks, Method::baseline, stage, 40 + stage));
  const StageMatrix matrix = build_stage_matrix(cps, tasks, 0.1);

  TempDir dir1, dir2;
  render_report(matrix, cps, tasks, dir1.path.string(), 0.1, 42);
  render_report(matrix, cps, tasks, dir2.path.string(), 0.1, 42);

  for (const char* name :
       {"report.md", "stage_matrix.csv", "traj_task1.csv", "traj_task2.csv",
        "traj_task3.csv"}) {
    CAPTURE(name);
    REQUIRE(fs::exists(dir1.path / name));
    CHECK(slurp(dir1.path / name) == slurp(dir2.path / name));
  }

  // csv re-parse: every numeric field round-trips to the matrix exactly
  std::ifstream csv(dir1.path / "stage_matrix.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line ==
        "method,task,stage,mse_spacing,mse_speed,collision_rate_pct,n_events,"
        "mse_spacing_per_event,mse_speed_per_event");
  int rows = 0;
  while (std::getline(csv, line)) {
    std::istringstream ls(line);
    std::string method_s, task_s, stage_s, sp_s, v_s, coll_s, n_s, spe_s, ve_s;
    std::getline(ls, method_s, ',');
    std::getline(ls, task_s, ',');
    std::getline(ls, stage_s, ',');
    std::getline(ls, sp_s, ',');
    std::getline(ls, v_s, ',');
    std::getline(ls, coll_s, ',');
    std::getline(ls, n_s, ',');
    std::getline(ls, spe_s, ',');
    std::getline(ls, ve_s, ',');
    const MetricCell* cell = matrix.find(method_from_name(method_s),
                                         std::stoi(task_s), std::stoi(stage_s));
    REQUIRE(cell != nullptr);
    CHECK(std::stod(sp_s) == cell->mse_spacing);
    CHECK(std::stod(v_s) == cell->mse_speed);
    CHECK(std::stod(coll_s) == cell->collision_rate);
    CHECK(std::stoi(n_s) == cell->n_events);
    ++rows;
  }
  CHECK(rows == 6);

  const std::string report = slurp(dir1.path / "report.md");
  CHECK(report.find("baseline") != std::string::npos);
  CHECK(report.find("orgetting") != std::string::npos);
}

TEST_CASE("taskset_metrics rejects an empty test split") {
  auto tasks = small_tasks(500);
  const Checkpoint cp = make_checkpoint(tasks, Method::baseline, 1, 2);
  tasks[0].test.clear();
  CHECK_THROWS_AS(taskset_metrics(cp, tasks[0], 0.1), std::invalid_argument);
}
