#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dfw {

// One car-following episode at a fixed sample rate.
struct Event {
  std::string event_id;
  double dt = 0.1;
  std::vector<double> lv_speed;
  std::vector<double> fv_speed;
  std::vector<double> spacing;

  std::size_t size() const { return lv_speed.size(); }
};

// Throws std::invalid_argument naming the event on violation.
void validate_event(const Event& event, int horizon);

double mean_fv_speed(const Event& event);

struct TaskSet {
  int task_id = 0;                 // 1 = fastest regime
  double speed_low = 0.0;          // range (speed_low, speed_high]
  double speed_high = 0.0;
  std::vector<Event> train, val, test;
};

// Linear-interpolation percentile of unsorted values, p in [0, 100].
double percentile(std::vector<double> values, double p);

struct SplitResult {
  std::array<TaskSet, 3> tasks;  // [0] = task 1 (fast) .. [2] = task 3 (slow)
  double p33 = 0.0;              // lower boundary (33.3rd pct of mean FV speed)
  double p67 = 0.0;
};

SplitResult split_tasks(const std::vector<Event>& events, std::uint64_t seed);

struct IdmParams {
  double desired_speed = 30.0;   // v0
  double time_headway = 1.5;     // T
  double min_gap = 2.0;          // s0
  double max_accel = 1.5;        // a
  double comfort_decel = 2.0;    // b
  double exponent = 4.0;         // delta
};

double idm_accel(double v, double dv, double s, const IdmParams& p);

// Spacing at which idm_accel(v, 0, s) == 0; requires v < desired_speed.
double idm_equilibrium_spacing(double v, const IdmParams& p);

enum class Regime { low, mid, high };

// Leader base-speed draw ranges per regime (m/s). Tuned so follower mean
// speeds land in well-separated bands; recorded in the run manifest.
struct GeneratorConstants {
  double low_min = 3.0, low_max = 7.0;
  double mid_min = 10.2, mid_max = 12.0;
  double high_min = 16.0, high_max = 24.0;
  // slow phase of the stop-and-go profile, as a fraction of the base speed;
  // kept high enough that regime mean speeds stay in disjoint bands
  double stopgo_floor = 0.75;
};

std::vector<Event> generate_events(Regime regime, int count, double dt,
                                   std::uint64_t seed,
                                   const GeneratorConstants& constants = {});

// JSONL (one event per line) or long-format CSV when path ends in .csv.
std::vector<Event> load_events(const std::string& path);
void save_events(const std::vector<Event>& events, const std::string& path);

// Task files carry a per-event "split" tag (train/val/test).
void save_taskset(const TaskSet& task, const std::string& path);
TaskSet load_taskset(const std::string& path);

}  // namespace dfw
