#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "driftfollow/checkpoint.hpp"
#include "driftfollow/evaluate.hpp"
#include "driftfollow/events.hpp"
#include "driftfollow/train.hpp"
#include "driftfollow/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitMissing = 5;

struct CliError {
  int code;
  std::string message;
};

std::uint64_t default_seed() {
  if (const char* env = std::getenv("DRIFTFOLLOW_SEED"))
    return std::strtoull(env, nullptr, 10);
  return 42;
}

// Flat key=value config file; '#' starts a comment.
void apply_config_file(dfw::TrainConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError{kExitIo, "cannot open config file " + path};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (eq == std::string::npos)
      throw CliError{kExitUsage, path + ":" + std::to_string(line_no) +
                                     ": expected key = value"};
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "epochs") cfg.epochs = std::stoi(value);
      else if (key == "horizon") cfg.horizon = std::stoi(value);
      else if (key == "hidden_size") cfg.hidden_size = std::stoi(value);
      else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
      else if (key == "batch_size") cfg.batch_size = std::stoi(value);
      else if (key == "penalty_weight") cfg.penalty_weight = std::stod(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "method") cfg.method = dfw::method_from_name(value);
      else if (key == "lambda") cfg.lambda = std::stod(value);
      else if (key == "accumulation")
        cfg.accumulation = value == "running-mean" ? dfw::Accumulation::running_mean
                                                   : dfw::Accumulation::sum;
      else if (key == "dt") cfg.dt = std::stod(value);
      else if (key == "rollout_chunk") cfg.rollout_chunk = std::stoi(value);
      else if (key == "jobs") cfg.jobs = std::stoi(value);
      else
        throw CliError{kExitUsage, path + ": unknown config key '" + key + "'"};
    } catch (const std::invalid_argument&) {
      throw CliError{kExitUsage, path + ": bad value for '" + key + "'"};
    }
  }
}

void write_effective_config(const dfw::TrainConfig& cfg, const fs::path& path) {
  std::ofstream out(path);
  out << "method = " << dfw::method_name(cfg.method) << "\n"
      << "epochs = " << cfg.epochs << "\n"
      << "horizon = " << cfg.horizon << "\n"
      << "hidden_size = " << cfg.hidden_size << "\n"
      << "learning_rate = " << dfw::format_double(cfg.learning_rate) << "\n"
      << "batch_size = " << cfg.batch_size << "\n"
      << "penalty_weight = " << dfw::format_double(cfg.penalty_weight) << "\n"
      << "seed = " << cfg.seed << "\n"
      << "lambda = " << dfw::format_double(cfg.resolved_reg().lambda) << "\n"
      << "accumulation = "
      << (cfg.accumulation == dfw::Accumulation::sum ? "sum" : "running-mean")
      << "\n"
      << "dt = " << dfw::format_double(cfg.dt) << "\n"
      << "rollout_chunk = " << cfg.rollout_chunk << "\n"
      << "jobs = " << cfg.jobs << "\n";
}

std::array<dfw::TaskSet, 3> load_tasks_dir(const std::string& dir) {
  std::array<dfw::TaskSet, 3> tasks;
  for (int k = 1; k <= 3; ++k) {
    const fs::path path = fs::path(dir) / ("task" + std::to_string(k) + ".jsonl");
    if (!fs::exists(path))
      throw CliError{kExitIo, "missing task file " + path.string()};
    tasks[k - 1] = dfw::load_taskset(path.string());
  }
  return tasks;
}

void write_history(const std::vector<dfw::EpochRecord>& history,
                   const fs::path& path) {
  std::ofstream out(path);
  out << "epoch,task,train_loss,val_mse_spacing,val_mse_speed\n";
  for (const auto& rec : history)
    out << rec.epoch << ',' << rec.task_id << ','
        << dfw::format_double(rec.train_loss) << ','
        << dfw::format_double(rec.val_mse_spacing) << ','
        << dfw::format_double(rec.val_mse_speed) << '\n';
}

int cmd_generate(int count, const std::string& regimes, double dt,
                 std::uint64_t seed, const std::string& out_path,
                 const dfw::GeneratorConstants& constants) {
  std::vector<std::pair<std::string, dfw::Regime>> selected;
  std::stringstream ss(regimes);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name == "low") selected.emplace_back(name, dfw::Regime::low);
    else if (name == "mid") selected.emplace_back(name, dfw::Regime::mid);
    else if (name == "high") selected.emplace_back(name, dfw::Regime::high);
    else throw CliError{kExitUsage, "unknown regime '" + name + "'"};
  }
  if (selected.empty()) throw CliError{kExitUsage, "no regimes selected"};
  if (count < static_cast<int>(selected.size()))
    throw CliError{kExitUsage, "--count must be >= number of regimes"};

  std::vector<dfw::Event> events;
  const int base = count / static_cast<int>(selected.size());
  int remainder = count % static_cast<int>(selected.size());
  for (const auto& [rname, regime] : selected) {
    const int n = base + (remainder-- > 0 ? 1 : 0);
    auto regime_events = dfw::generate_events(regime, n, dt, seed, constants);
    double mean_sum = 0.0;
    for (const auto& ev : regime_events) mean_sum += dfw::mean_fv_speed(ev);
    std::cout << rname << ": " << n << " events, mean FV speed "
              << dfw::format_double(mean_sum / n) << " m/s\n";
    events.insert(events.end(), regime_events.begin(), regime_events.end());
  }
  try {
    dfw::save_events(events, out_path);
  } catch (const std::runtime_error& e) {
    throw CliError{kExitIo, e.what()};
  }
  std::cout << "wrote " << events.size() << " events to " << out_path << "\n";
  return 0;
}

int cmd_split(const std::string& in_path, std::uint64_t seed,
              const std::string& out_dir) {
  std::vector<dfw::Event> events;
  try {
    events = dfw::load_events(in_path);
  } catch (const std::runtime_error& e) {
    throw CliError{kExitIo, e.what()};
  }
  if (events.size() < 9)
    throw CliError{kExitUsage, "need >= 9 events to split (got " +
                                   std::to_string(events.size()) + ")"};
  const dfw::SplitResult result = dfw::split_tasks(events, seed);

  fs::create_directories(out_dir);
  json manifest{{"seed", seed},
                {"n_events", events.size()},
                {"p33_3", result.p33},
                {"p66_7", result.p67}};
  for (const auto& task : result.tasks) {
    const fs::path path =
        fs::path(out_dir) / ("task" + std::to_string(task.task_id) + ".jsonl");
    dfw::save_taskset(task, path.string());
    manifest["tasks"].push_back(
        {{"task_id", task.task_id},
         {"speed_low", task.speed_low},
         {"speed_high", std::isinf(task.speed_high) ? -1.0 : task.speed_high},
         {"n_train", task.train.size()},
         {"n_val", task.val.size()},
         {"n_test", task.test.size()}});
    std::cout << "task " << task.task_id << ": " << task.train.size() << "/"
              << task.val.size() << "/" << task.test.size()
              << " train/val/test events\n";
  }
  std::ofstream(fs::path(out_dir) / "split_manifest.json") << manifest.dump(2) << "\n";
  std::cout << "split points: " << dfw::format_double(result.p33) << " and "
            << dfw::format_double(result.p67) << " m/s\n";
  return 0;
}

int cmd_train(const std::string& tasks_dir, const dfw::TrainConfig& cfg,
              const std::string& out_dir) {
  const auto tasks = load_tasks_dir(tasks_dir);
  fs::create_directories(out_dir);
  write_effective_config(cfg, fs::path(out_dir) / "run_config.txt");

  dfw::CurriculumResult result;
  try {
    result = dfw::run_curriculum(tasks, cfg);
  } catch (const std::runtime_error& e) {
    throw CliError{kExitNumeric, e.what()};
  }
  for (const auto& cp : result.checkpoints) {
    const fs::path path = fs::path(out_dir) / (dfw::method_name(cfg.method) +
                                               "_stage" + std::to_string(cp.stage) +
                                               ".dfw");
    dfw::save_checkpoint(cp, path.string());
    std::cout << "wrote " << path.string() << "\n";
  }
  write_history(result.history,
                fs::path(out_dir) /
                    (dfw::method_name(cfg.method) + "_history.csv"));
  return 0;
}

int cmd_evaluate(const std::string& tasks_dir, const std::string& ckpt_dir,
                 const std::string& out_dir, double dt, std::uint64_t seed,
                 int jobs) {
  const auto tasks = load_tasks_dir(tasks_dir);
  std::vector<dfw::Checkpoint> checkpoints;
  for (const char* m : {"joint", "baseline", "ewc", "mas"})
    for (int stage = 1; stage <= 3; ++stage) {
      const fs::path path = fs::path(ckpt_dir) / (std::string(m) + "_stage" +
                                                  std::to_string(stage) + ".dfw");
      if (fs::exists(path)) checkpoints.push_back(dfw::load_checkpoint(path.string()));
    }
  if (checkpoints.empty())
    throw CliError{kExitMissing, "no checkpoints found in " + ckpt_dir};

  const dfw::StageMatrix matrix =
      dfw::build_stage_matrix(checkpoints, tasks, dt, jobs);
  dfw::render_report(matrix, checkpoints, tasks, out_dir, dt, seed);
  std::cout << "wrote report to " << out_dir << "\n";
  return 0;
}

int cmd_repro(std::uint64_t seed, const std::string& out_dir, int count,
              int jobs, const dfw::GeneratorConstants& constants) {
  fs::create_directories(out_dir);
  const fs::path events_path = fs::path(out_dir) / "events.jsonl";
  const std::string tasks_dir = (fs::path(out_dir) / "tasks").string();
  const std::string ckpt_dir = (fs::path(out_dir) / "checkpoints").string();

  cmd_generate(count, "low,mid,high", 0.1, seed, events_path.string(), constants);
  cmd_split(events_path.string(), seed, tasks_dir);

  for (const char* m : {"joint", "baseline", "ewc", "mas"}) {
    dfw::TrainConfig cfg;
    cfg.seed = seed;
    cfg.jobs = jobs;
    cfg.method = dfw::method_from_name(m);
    std::cout << "training " << m << "...\n";
    cmd_train(tasks_dir, cfg, ckpt_dir);
  }
  cmd_evaluate(tasks_dir, ckpt_dir, out_dir, 0.1, seed, jobs);

  json manifest{{"seed", seed},
                {"n_events", count},
                {"dt", 0.1},
                {"generator_constants",
                 {{"low", {constants.low_min, constants.low_max}},
                  {"mid", {constants.mid_min, constants.mid_max}},
                  {"high", {constants.high_min, constants.high_max}},
                  {"stopgo_floor", constants.stopgo_floor}}}};
  std::ofstream(fs::path(out_dir) / "manifest.json") << manifest.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"driftfollow: continual-learning car-following toolkit"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate synthetic car-following events");
  int gen_count = 300;
  std::string gen_regimes = "low,mid,high";
  double gen_dt = 0.1;
  std::uint64_t gen_seed = default_seed();
  std::string gen_out;
  gen->add_option("--count", gen_count, "Total number of events (default 300)");
  gen->add_option("--regimes", gen_regimes, "Comma-separated regimes (default low,mid,high)");
  gen->add_option("--dt", gen_dt, "Sample period in seconds (default 0.1)");
  gen->add_option("--seed", gen_seed, "Random seed (default 42 or DRIFTFOLLOW_SEED)");
  gen->add_option("--out", gen_out, "Output JSONL path")->required();

  // split
  auto* split = app.add_subcommand("split", "Split events into three speed-regime task sets");
  std::string split_in, split_out_dir = ".";
  std::uint64_t split_seed = default_seed();
  split->add_option("--in", split_in, "Input event file (JSONL or CSV)")->required();
  split->add_option("--seed", split_seed, "Shuffle seed (default 42 or DRIFTFOLLOW_SEED)");
  split->add_option("--out-dir", split_out_dir, "Output directory (default .)");

  // train
  auto* train = app.add_subcommand("train", "Train a curriculum for one method");
  std::string train_tasks_dir = ".", train_method = "baseline", train_config,
              train_out_dir = ".";
  dfw::TrainConfig tc;
  std::uint64_t train_seed = default_seed();
  double train_lambda = -1.0;
  int train_epochs = 5, train_jobs = 1, train_hidden = 64;
  train->add_option("--tasks-dir", train_tasks_dir, "Directory with task<k>.jsonl files");
  train->add_option("--method", train_method, "joint|baseline|ewc|mas (default baseline)");
  train->add_option("--config", train_config, "Flat key=value config file");
  train->add_option("--out-dir", train_out_dir, "Output directory (default .)");
  auto* opt_seed = train->add_option("--seed", train_seed, "Random seed");
  auto* opt_lambda = train->add_option("--lambda", train_lambda,
                                       "Regularization strength (default: 1e4)");
  auto* opt_epochs = train->add_option("--epochs", train_epochs, "Epochs per task (default 5)");
  auto* opt_hidden = train->add_option("--hidden-size", train_hidden, "LSTM hidden size (default 64)");
  auto* opt_jobs = train->add_option("--jobs", train_jobs, "Worker threads (default 1)");

  // evaluate / report
  std::string eval_tasks_dir = ".", eval_ckpt_dir = ".", eval_out_dir = ".";
  double eval_dt = 0.1;
  std::uint64_t eval_seed = default_seed();
  int eval_jobs = 1;
  auto add_eval_opts = [&](CLI::App* cmd) {
    cmd->add_option("--tasks-dir", eval_tasks_dir, "Directory with task<k>.jsonl files");
    cmd->add_option("--checkpoints-dir", eval_ckpt_dir, "Directory with .dfw checkpoints");
    cmd->add_option("--out-dir", eval_out_dir, "Output directory (default .)");
    cmd->add_option("--dt", eval_dt, "Simulation step in seconds (default 0.1)");
    cmd->add_option("--seed", eval_seed, "Seed for trajectory event selection");
    cmd->add_option("--jobs", eval_jobs, "Worker threads (default 1)");
  };
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate checkpoints into a stage matrix");
  add_eval_opts(evaluate);
  auto* report = app.add_subcommand("report", "Alias of evaluate: stage matrix + report files");
  add_eval_opts(report);

  // repro
  auto* repro = app.add_subcommand("repro", "Full pipeline: generate, split, train all methods, report");
  std::uint64_t repro_seed = default_seed();
  std::string repro_out_dir = "repro_out";
  int repro_count = 600, repro_jobs = 1;
  repro->add_option("--seed", repro_seed, "Random seed (default 42 or DRIFTFOLLOW_SEED)");
  repro->add_option("--out-dir", repro_out_dir, "Output directory (default repro_out)");
  repro->add_option("--count", repro_count, "Number of synthetic events (default 600)");
  repro->add_option("--jobs", repro_jobs, "Worker threads (default 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed())
      return cmd_generate(gen_count, gen_regimes, gen_dt, gen_seed, gen_out, {});
    if (split->parsed()) return cmd_split(split_in, split_seed, split_out_dir);
    if (train->parsed()) {
      if (!train_config.empty()) apply_config_file(tc, train_config);
      tc.method = dfw::method_from_name(train_method);
      if (*opt_seed) tc.seed = train_seed;
      else if (train_config.empty()) tc.seed = default_seed();
      if (*opt_lambda) tc.lambda = train_lambda;
      if (*opt_epochs) tc.epochs = train_epochs;
      if (*opt_hidden) tc.hidden_size = train_hidden;
      if (*opt_jobs) tc.jobs = train_jobs;
      return cmd_train(train_tasks_dir, tc, train_out_dir);
    }
    if (evaluate->parsed() || report->parsed())
      return cmd_evaluate(eval_tasks_dir, eval_ckpt_dir, eval_out_dir, eval_dt,
                          eval_seed, eval_jobs);
    if (repro->parsed())
      return cmd_repro(repro_seed, repro_out_dir, repro_count, repro_jobs, {});
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}
