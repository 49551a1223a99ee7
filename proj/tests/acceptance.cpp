// Acceptance suite: one pass/fail line per criterion. Criteria 6 and 7 run
// the CLI binary named by DRIFTFOLLOW_BIN; everything else runs in-process.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "driftfollow/evaluate.hpp"
#include "driftfollow/importance.hpp"
#include "driftfollow/lstm.hpp"
#include "driftfollow/train.hpp"

using namespace dfw;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Criterion {
  int id;
  std::string summary;
  std::function<void(std::string& detail)> run;  // throws on failure
};

double elapsed_s(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void require(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

std::vector<double> random_window(std::mt19937_64& rng, int horizon) {
  std::uniform_real_distribution<double> speed(0.0, 30.0);
  std::uniform_real_distribution<double> gap(1.0, 80.0);
  std::vector<double> w(horizon * kFeatureCount);
  for (int t = 0; t < horizon; ++t) {
    const double sv = speed(rng), lv = speed(rng);
    w[t * 4 + 0] = sv;
    w[t * 4 + 1] = lv;
    w[t * 4 + 2] = lv - sv;
    w[t * 4 + 3] = gap(rng);
  }
  return w;
}

// ---- criterion 1: gradient exactness -------------------------------------

void crit_gradients(std::string& detail) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(31337);
  LstmCache cache;
  LstmBackwardWork work;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const ParamVector p = init_params(4, 500 + trial);
    const auto w = random_window(rng, 3);
    lstm_forward(w.data(), 3, p, cache);
    std::vector<double> grad(p.values.size(), 0.0);
    lstm_backward(cache, p, 1.0, grad.data(), work);

    LstmCache fd_cache;
    const auto fd = finite_diff_grad(
        [&](const ParamVector& q) { return lstm_forward(w.data(), 3, q, fd_cache); },
        p, 1e-5);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const double denom = std::max(std::abs(fd[i]), 1e-6);
      worst = std::max(worst, std::abs(grad[i] - fd[i]) / denom);
    }
  }
  require(worst < 1e-4, "BPTT max relative error " + std::to_string(worst));

  // penalty gradients vs finite differences, both importance kinds
  double worst_pen = 0.0;
  for (int kind = 0; kind < 2; ++kind) {
    ParamVector p;
    p.hidden_size = 1;
    p.values.resize(12);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (double& v : p.values) v = dist(rng);
    ImportanceVector imp;
    imp.kind = kind == 0 ? ImportanceKind::fisher : ImportanceKind::mas;
    imp.anchor = p;
    for (double& v : imp.anchor.values) v = dist(rng);
    imp.weights.resize(12);
    std::uniform_real_distribution<double> wdist(0.0, 4.0);
    for (double& v : imp.weights) v = wdist(rng);
    RegConfig cfg;
    cfg.lambda = 1.7;

    std::vector<double> grad(12, 0.0);
    penalty(p, imp, cfg, grad.data());
    const auto fd = finite_diff_grad(
        [&](const ParamVector& q) { return penalty(q, imp, cfg, nullptr); }, p,
        1e-6);
    for (int i = 0; i < 12; ++i)
      worst_pen = std::max(worst_pen, std::abs(grad[i] - fd[i]));
  }
  require(worst_pen < 1e-8, "penalty gradient error " + std::to_string(worst_pen));

  const double dt = elapsed_s(t0);
  require(dt < 10.0, "runtime " + std::to_string(dt) + " s >= 10 s");
  std::ostringstream os;
  os << "max BPTT rel err " << worst << ", penalty err " << worst_pen << ", "
     << dt << " s";
  detail = os.str();
}

// ---- criterion 2: closed-loop gradient check -----------------------------

void crit_closed_loop_gradient(std::string& detail) {
  const auto t0 = Clock::now();
  Event ev = generate_events(Regime::mid, 1, 0.1, 424242)[0];
  ev.lv_speed.resize(15);
  ev.fv_speed.resize(15);
  ev.spacing.resize(15);

  TrainConfig cfg;
  cfg.hidden_size = 4;
  cfg.horizon = 10;
  cfg.rollout_chunk = 50;
  const std::vector<const Event*> ptrs{&ev};
  const NormStats norm = compute_norm_stats(ptrs);
  const ParamVector p = init_params(4, 99);

  std::vector<double> grad(p.values.size(), 0.0);
  const EventLossResult r = event_loss(p, ev, cfg, norm, grad.data());
  require(!r.collided, "gradient-check event collided");

  const auto fd = finite_diff_grad(
      [&](const ParamVector& q) {
        return event_loss(q, ev, cfg, norm, nullptr).value;
      },
      p, 1e-5);
  double worst = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double denom = std::max(std::abs(fd[i]), 1e-5);
    worst = std::max(worst, std::abs(grad[i] - fd[i]) / denom);
  }
  require(worst < 1e-3, "closed-loop max relative error " + std::to_string(worst));

  const double dt = elapsed_s(t0);
  require(dt < 30.0, "runtime " + std::to_string(dt) + " s >= 30 s");
  std::ostringstream os;
  os << "max rel err " << worst << ", " << dt << " s";
  detail = os.str();
}

// ---- criterion 3: formula oracles ----------------------------------------

void crit_formula_oracles(std::string& detail) {
  std::mt19937_64 rng(1000);
  for (int trial = 0; trial < 100; ++trial) {
    const Regime regime = static_cast<Regime>(trial % 3);
    const int n_events = 2 + static_cast<int>(rng() % 3);
    const auto events = generate_events(regime, n_events, 0.1, 20000 + trial);
    TaskSet task;
    task.task_id = 1;
    task.speed_high = 1e9;
    task.test = events;
    task.train = {events[0]};

    Checkpoint cp;
    cp.params = init_params(2, 30000 + trial);
    cp.stage = 1;
    cp.horizon = 10;
    std::vector<const Event*> ptrs{&events[0]};
    cp.norm = compute_norm_stats(ptrs);

    const MetricCell cell = taskset_metrics(cp, task, 0.1);

    double se_sp = 0.0, se_v = 0.0;
    long steps = 0;
    int collided = 0;
    for (const Event& ev : task.test) {
      const EventMetrics em = event_metrics(cp, ev, 0.1);
      se_sp += em.se_spacing_sum;
      se_v += em.se_speed_sum;
      steps += em.n_steps;
      collided += em.collided ? 1 : 0;
    }
    require(cell.mse_spacing == se_sp / static_cast<double>(steps),
            "spacing MSE pooling mismatch");
    require(cell.mse_speed == se_v / static_cast<double>(steps),
            "speed MSE pooling mismatch");
    require(cell.collision_rate ==
                100.0 * collided / static_cast<double>(task.test.size()),
            "collision rate mismatch");
  }

  // penalty value for lambda=2, F=[1,2], delta=[1,1] is exactly 3
  ParamVector p;
  p.hidden_size = 1;
  p.values = {2.0, 3.0};
  ImportanceVector imp;
  imp.kind = ImportanceKind::fisher;
  imp.weights = {1.0, 2.0};
  imp.anchor = p;
  imp.anchor.values = {1.0, 2.0};
  RegConfig cfg;
  cfg.lambda = 2.0;
  require(penalty(p, imp, cfg, nullptr) == 3.0, "penalty value != 3");

  // one-parameter linear model oracles
  const auto fisher = estimate_fisher(imp.anchor, 1,
                                      [&](std::size_t, std::vector<double>& g) {
                                        g.assign(2, 0.0);
                                        g[0] = 8.0;  // d/dtheta (theta*2)^2 at theta=1
                                      });
  require(fisher.weights[0] == 64.0, "Fisher oracle != 64");
  ParamVector sp;
  sp.hidden_size = 1;
  sp.values = {3.0};
  const double xs[] = {1.0, 2.0};
  const auto mas = estimate_mas(sp, 2, [&](std::size_t k, std::vector<double>& g) {
    g[0] = 2.0 * sp.values[0] * xs[k] * xs[k];
  });
  require(mas.weights[0] == 15.0, "MAS oracle != 15");
  detail = "100 pooling cases exact, penalty=3, Fisher=64, Omega=15";
}

// ---- criterion 4: replay fidelity ----------------------------------------

void crit_replay(std::string& detail) {
  double worst_mse = 0.0;
  int n = 0;
  for (Regime r : {Regime::low, Regime::mid, Regime::high}) {
    for (const Event& ev : generate_events(r, 20, 0.1, 777)) {
      const auto accels = reconstruct_accels(ev);
      const Controller replay = [&](const double*, int t) { return accels[t]; };
      const SimTrajectory traj = rollout(replay, ev, 10, ev.dt, false);
      require(!detect_collision(traj), "replay collided on " + ev.event_id);
      double se = 0.0;
      for (std::size_t k = 0; k < traj.spacing.size(); ++k) {
        const int t = 10 + static_cast<int>(k);
        se += (traj.spacing[k] - ev.spacing[t]) * (traj.spacing[k] - ev.spacing[t]) +
              (traj.sv_speed[k] - ev.fv_speed[t]) * (traj.sv_speed[k] - ev.fv_speed[t]);
      }
      const double mse = se / static_cast<double>(traj.spacing.size());
      worst_mse = std::max(worst_mse, mse);
      ++n;
    }
  }
  require(worst_mse < 1e-12, "replay MSE " + std::to_string(worst_mse));
  std::ostringstream os;
  os << n << " events, worst MSE " << worst_mse;
  detail = os.str();
}

// ---- criterion 5: reduction identities -----------------------------------

std::array<TaskSet, 3> tiny_tasks(std::uint64_t seed) {
  const Regime regimes[3] = {Regime::high, Regime::mid, Regime::low};
  std::array<TaskSet, 3> tasks;
  for (int k = 0; k < 3; ++k) {
    const auto ev = generate_events(regimes[k], 8, 0.1, seed + k);
    tasks[k].task_id = k + 1;
    tasks[k].speed_high = 1e9;
    tasks[k].train.assign(ev.begin(), ev.begin() + 5);
    tasks[k].val.assign(ev.begin() + 5, ev.begin() + 6);
    tasks[k].test.assign(ev.begin() + 6, ev.end());
  }
  return tasks;
}

void crit_reductions(std::string& detail) {
  const auto tasks = tiny_tasks(5000);
  TrainConfig base;
  base.hidden_size = 8;
  base.epochs = 1;
  base.batch_size = 4;
  base.method = Method::baseline;

  const CurriculumResult rb = run_curriculum(tasks, base);

  std::vector<CurriculumResult> regs;
  for (Method m : {Method::ewc, Method::mas}) {
    TrainConfig c = base;
    c.method = m;
    c.lambda = 0.0;
    regs.push_back(run_curriculum(tasks, c));
  }
  for (const CurriculumResult& r : regs) {
    require(r.checkpoints.size() == 3, "expected 3 checkpoints");
    for (int s = 0; s < 3; ++s)
      require(r.checkpoints[s].params.values == rb.checkpoints[s].params.values,
              "lambda=0 curriculum differs from baseline at stage " +
                  std::to_string(s + 1));
  }

  // stage-1 identity with default (nonzero) lambdas
  std::vector<std::vector<double>> stage1;
  for (Method m : {Method::baseline, Method::ewc, Method::mas}) {
    TrainConfig c = base;
    c.method = m;
    stage1.push_back(run_curriculum(tasks, c).checkpoints[0].params.values);
  }
  require(stage1[0] == stage1[1] && stage1[0] == stage1[2],
          "stage-1 checkpoints differ across methods");
  detail = "lambda=0 bit-identical over 3 stages; stage-1 identical across methods";
}

// ---- criteria 6 & 7: fixed-seed repro via the CLI ------------------------

struct CsvRow {
  std::string method;
  int task = 0, stage = 0;
  double mse_spacing = 0.0, mse_speed = 0.0, collision = 0.0;
};

std::vector<CsvRow> parse_matrix_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    CsvRow r;
    std::string field;
    std::getline(ls, r.method, ',');
    std::getline(ls, field, ',');
    r.task = std::stoi(field);
    std::getline(ls, field, ',');
    r.stage = std::stoi(field);
    std::getline(ls, field, ',');
    r.mse_spacing = std::stod(field);
    std::getline(ls, field, ',');
    r.mse_speed = std::stod(field);
    std::getline(ls, field, ',');
    r.collision = std::stod(field);
    rows.push_back(r);
  }
  return rows;
}

const CsvRow& find_row(const std::vector<CsvRow>& rows, const std::string& method,
                       int task, int stage) {
  for (const CsvRow& r : rows)
    if (r.method == method && r.task == task && r.stage == stage) return r;
  fail("missing matrix row " + method + " task " + std::to_string(task) +
       " stage " + std::to_string(stage));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path g_repro_dir1, g_repro_dir2;
double g_repro_seconds = 0.0;

void run_repro_once(const std::string& bin, const fs::path& out_dir) {
  const std::string cmd = bin + " repro --seed 42 --jobs 1 --out-dir " +
                          out_dir.string() + " > " +
                          (out_dir.string() + ".log") + " 2>&1";
  fs::create_directories(out_dir.parent_path());
  const int rc = std::system(cmd.c_str());
  if (rc != 0) fail("repro exited with status " + std::to_string(rc));
}

void crit_forgetting_repro(std::string& detail) {
  const char* bin = std::getenv("DRIFTFOLLOW_BIN");
  if (!bin) fail("DRIFTFOLLOW_BIN not set");
  const fs::path root =
      fs::temp_directory_path() / ("dfw_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  g_repro_dir1 = root / "run1";
  g_repro_dir2 = root / "run2";

  const auto t0 = Clock::now();
  run_repro_once(bin, g_repro_dir1);
  g_repro_seconds = elapsed_s(t0);
  run_repro_once(bin, g_repro_dir2);

  const auto rows = parse_matrix_csv(g_repro_dir1 / "stage_matrix.csv");

  const double base1 = find_row(rows, "baseline", 1, 1).mse_spacing;
  const double base3 = find_row(rows, "baseline", 1, 3).mse_spacing;
  require(base3 >= 1.5 * base1,
          "baseline forgetting too small: stage1 " + std::to_string(base1) +
              ", stage3 " + std::to_string(base3));

  const double ewc3 = find_row(rows, "ewc", 1, 3).mse_spacing;
  const double mas3 = find_row(rows, "mas", 1, 3).mse_spacing;
  require(ewc3 <= 0.7 * base3, "ewc stage-3 task-1 spacing MSE " +
                                   std::to_string(ewc3) + " > 0.7 * baseline " +
                                   std::to_string(base3));
  require(mas3 <= 0.7 * base3, "mas stage-3 task-1 spacing MSE " +
                                   std::to_string(mas3) + " > 0.7 * baseline " +
                                   std::to_string(base3));

  for (const CsvRow& r : rows)
    if (r.method == "ewc" || r.method == "mas")
      require(r.collision == 0.0, r.method + " task " + std::to_string(r.task) +
                                      " stage " + std::to_string(r.stage) +
                                      " collision rate " +
                                      std::to_string(r.collision));

  require(g_repro_seconds < 900.0,
          "repro took " + std::to_string(g_repro_seconds) + " s >= 900 s");
  std::ostringstream os;
  os << "baseline T1 " << base1 << " -> " << base3 << " (x"
     << base3 / base1 << "), ewc " << ewc3 << ", mas " << mas3 << ", "
     << g_repro_seconds << " s";
  detail = os.str();
}

void crit_determinism(std::string& detail) {
  require(!g_repro_dir1.empty() && fs::exists(g_repro_dir1 / "stage_matrix.csv") &&
              fs::exists(g_repro_dir2 / "stage_matrix.csv"),
          "repro outputs unavailable (criterion 6 did not run)");
  const std::string a = slurp(g_repro_dir1 / "stage_matrix.csv");
  const std::string b = slurp(g_repro_dir2 / "stage_matrix.csv");
  require(!a.empty(), "empty stage_matrix.csv");
  require(a == b, "stage_matrix.csv differs between identical repro runs");
  std::ostringstream os;
  os << a.size() << " bytes, byte-identical across two runs";
  detail = os.str();
}

// ---- criterion 8: forgetting-score arithmetic ----------------------------

void crit_forgetting_arithmetic(std::string& detail) {
  const double pct = forgetting_pct(23.01, 81.35);
  require(std::abs(pct - 253.6) <= 0.5,
          "forgetting_pct(23.01, 81.35) = " + std::to_string(pct));
  std::ostringstream os;
  os << "23.01 -> 81.35 gives +" << pct << "%";
  detail = os.str();
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "gradient exactness (BPTT vs finite differences; penalty gradients)",
       crit_gradients},
      {2, "closed-loop rollout gradient check", crit_closed_loop_gradient},
      {3, "formula oracles (metric pooling, penalty, Fisher/Omega)",
       crit_formula_oracles},
      {4, "replay fidelity on synthetic events", crit_replay},
      {5, "reduction identities (lambda=0, stage-1 equivalence)", crit_reductions},
      {6, "qualitative forgetting reproduction (fixed-seed repro)",
       crit_forgetting_repro},
      {7, "determinism of repeated repro runs", crit_determinism},
      {8, "forgetting-score arithmetic on published values",
       crit_forgetting_arithmetic},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    std::string detail;
    try {
      c.run(detail);
      std::cout << "criterion " << c.id << ": PASS — " << c.summary
                << (detail.empty() ? "" : " [" + detail + "]") << "\n";
    } catch (const std::exception& e) {
      ++failures;
      std::cout << "criterion " << c.id << ": FAIL — " << c.summary << ": "
                << e.what() << "\n";
    }
    std::cout.flush();
  }
  if (failures) {
    std::cout << failures << " of " << criteria.size() << " criteria failed\n";
    return 1;
  }
  std::cout << "all " << criteria.size() << " acceptance criteria passed\n";
  return 0;
}
