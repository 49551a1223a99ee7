#include "driftfollow/events.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dfw {
namespace {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ stream);
}

}  // namespace

void validate_event(const Event& event, int horizon) {
  const std::size_t n = event.size();
  if (event.fv_speed.size() != n || event.spacing.size() != n)
    throw std::invalid_argument("event '" + event.event_id + "': series lengths differ");
  if (n < static_cast<std::size_t>(horizon) + 2)
    throw std::invalid_argument("event '" + event.event_id + "': too short");
  if (!(event.dt > 0.0))
    throw std::invalid_argument("event '" + event.event_id + "': dt must be positive");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(event.lv_speed[i]) || !std::isfinite(event.fv_speed[i]) ||
        !std::isfinite(event.spacing[i]))
      throw std::invalid_argument("event '" + event.event_id + "': non-finite value");
    if (event.lv_speed[i] < 0.0 || event.fv_speed[i] < 0.0)
      throw std::invalid_argument("event '" + event.event_id + "': negative speed");
    if (event.spacing[i] <= 0.0)
      throw std::invalid_argument("event '" + event.event_id + "': nonpositive spacing");
  }
}

double mean_fv_speed(const Event& event) {
  double sum = 0.0;
  for (double v : event.fv_speed) sum += v;
  return sum / static_cast<double>(event.size());
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of empty set");
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = static_cast<std::size_t>(std::ceil(rank));
  if (lo == hi) return values[lo];
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

SplitResult split_tasks(const std::vector<Event>& events, std::uint64_t seed) {
  if (events.size() < 9) throw std::invalid_argument("need >= 9 events to split");

  std::vector<double> means(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) means[i] = mean_fv_speed(events[i]);

  SplitResult result;
  result.p33 = percentile(means, 33.3);
  result.p67 = percentile(means, 66.7);

  const double inf = std::numeric_limits<double>::infinity();
  result.tasks[0] = TaskSet{1, result.p67, inf, {}, {}, {}};
  result.tasks[1] = TaskSet{2, result.p33, result.p67, {}, {}, {}};
  result.tasks[2] = TaskSet{3, 0.0, result.p33, {}, {}, {}};

  std::array<std::vector<Event>, 3> members;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (means[i] > result.p67)
      members[0].push_back(events[i]);
    else if (means[i] > result.p33)
      members[1].push_back(events[i]);
    else
      members[2].push_back(events[i]);
  }

  for (int k = 0; k < 3; ++k) {
    auto& evs = members[k];
    if (evs.empty())
      throw std::invalid_argument("task " + std::to_string(k + 1) +
                                  " is empty (degenerate speed distribution)");
    std::mt19937_64 rng(derive_seed(seed, 100 + k));
    std::shuffle(evs.begin(), evs.end(), rng);
    const auto n = evs.size();
    const auto n_train = static_cast<std::size_t>(std::llround(0.70 * n));
    const auto n_val = static_cast<std::size_t>(std::llround(0.15 * n));
    auto& task = result.tasks[k];
    task.train.assign(evs.begin(), evs.begin() + n_train);
    task.val.assign(evs.begin() + n_train,
                    evs.begin() + std::min(n, n_train + n_val));
    task.test.assign(evs.begin() + std::min(n, n_train + n_val), evs.end());
  }
  return result;
}

double idm_accel(double v, double dv, double s, const IdmParams& p) {
  if (!(s > 0.0)) throw std::invalid_argument("idm_accel requires spacing > 0");
  const double s_star = p.min_gap + v * p.time_headway +
                        v * dv / (2.0 * std::sqrt(p.max_accel * p.comfort_decel));
  const double free_term = std::pow(v / p.desired_speed, p.exponent);
  return p.max_accel * (1.0 - free_term - (s_star / s) * (s_star / s));
}

double idm_equilibrium_spacing(double v, const IdmParams& p) {
  const double free_term = std::pow(v / p.desired_speed, p.exponent);
  if (!(free_term < 1.0))
    throw std::invalid_argument("equilibrium requires v < desired_speed");
  return (p.min_gap + v * p.time_headway) / std::sqrt(1.0 - free_term);
}

namespace {

// Leader speed profile over the whole event; always nonnegative.
std::vector<double> leader_profile(std::mt19937_64& rng, int steps, double dt,
                                   double base, double stopgo_floor) {
  std::uniform_int_distribution<int> kind_dist(0, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> lv(steps);
  switch (kind_dist(rng)) {
    case 0: {  // constant cruise
      for (int i = 0; i < steps; ++i) lv[i] = base;
      break;
    }
    case 1: {  // sinusoidal speed
      const double amp = std::min(0.25 * base, 2.5);
      const double period = 20.0 + 20.0 * unit(rng);
      const double phase = 2.0 * M_PI * unit(rng);
      for (int i = 0; i < steps; ++i) {
        const double t = i * dt;
        lv[i] = std::max(0.2, base + amp * std::sin(2.0 * M_PI * t / period + phase));
      }
      break;
    }
    default: {  // stop-and-go ramps between base and a slower cruise
      const double lo = stopgo_floor * base;
      const double ramp_accel = 0.8 + 0.7 * unit(rng);  // m/s^2
      double hold_hi = 5.0 + 5.0 * unit(rng);
      double hold_lo = 5.0 + 5.0 * unit(rng);
      double v = base;
      double target = base;
      double hold = hold_hi * unit(rng);  // start partway through a phase
      bool going_down = true;
      for (int i = 0; i < steps; ++i) {
        lv[i] = v;
        if (std::abs(v - target) < 1e-9) {
          hold -= dt;
          if (hold <= 0.0) {
            going_down = !going_down;
            target = going_down ? lo : base;
            hold = going_down ? hold_lo : hold_hi;
          }
        } else {
          const double step_dv = ramp_accel * dt;
          if (v > target)
            v = std::max(target, v - step_dv);
          else
            v = std::min(target, v + step_dv);
        }
      }
      break;
    }
  }
  return lv;
}

}  // namespace

std::vector<Event> generate_events(Regime regime, int count, double dt,
                                   std::uint64_t seed,
                                   const GeneratorConstants& constants) {
  if (count < 1) throw std::invalid_argument("count must be >= 1");
  double lo = 0.0, hi = 0.0;
  const char* tag = nullptr;
  switch (regime) {
    case Regime::low: lo = constants.low_min; hi = constants.low_max; tag = "low"; break;
    case Regime::mid: lo = constants.mid_min; hi = constants.mid_max; tag = "mid"; break;
    case Regime::high: lo = constants.high_min; hi = constants.high_max; tag = "high"; break;
  }

  std::vector<Event> events;
  events.reserve(count);
  for (int idx = 0; idx < count; ++idx) {
    std::mt19937_64 rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(idx) * 3 +
                                              static_cast<std::uint64_t>(regime)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double base = lo + (hi - lo) * unit(rng);
    const int steps = 300 + static_cast<int>(std::floor(301.0 * unit(rng)));

    IdmParams p;
    p.desired_speed = base * (1.15 + 0.20 * unit(rng));
    p.time_headway = 1.3 + 0.6 * unit(rng);
    p.min_gap = 1.5 + 1.0 * unit(rng);
    p.max_accel = 1.0 + 0.8 * unit(rng);
    p.comfort_decel = 1.5 + 1.0 * unit(rng);

    Event ev;
    ev.event_id = std::string(tag) + "-" + std::to_string(seed) + "-" + std::to_string(idx);
    ev.dt = dt;
    ev.lv_speed = leader_profile(rng, steps, dt, base, constants.stopgo_floor);
    ev.fv_speed.resize(steps);
    ev.spacing.resize(steps);

    // seed the follower at (or just under) its equilibrium point; the cap
    // matters when a sinusoidal leader starts above the follower's v0
    double v = std::min(ev.lv_speed[0], 0.9 * p.desired_speed);
    double s = idm_equilibrium_spacing(v, p) * (1.0 + 0.2 * unit(rng));
    for (int i = 0; i < steps; ++i) {
      ev.fv_speed[i] = v;
      ev.spacing[i] = s;
      const double a = idm_accel(v, v - ev.lv_speed[i], s, p);
      // same Euler rule as the simulator so recorded events replay exactly
      s = s + (ev.lv_speed[i] - v) * dt;
      v = std::max(0.0, v + a * dt);
    }
    events.push_back(std::move(ev));
  }
  return events;
}

namespace {

json event_to_json(const Event& ev) {
  return json{{"event_id", ev.event_id},
              {"dt", ev.dt},
              {"lv_speed", ev.lv_speed},
              {"fv_speed", ev.fv_speed},
              {"spacing", ev.spacing}};
}

Event event_from_json(const json& j, const std::string& path, std::size_t line) {
  try {
    Event ev;
    ev.event_id = j.at("event_id").get<std::string>();
    ev.dt = j.at("dt").get<double>();
    ev.lv_speed = j.at("lv_speed").get<std::vector<double>>();
    ev.fv_speed = j.at("fv_speed").get<std::vector<double>>();
    ev.spacing = j.at("spacing").get<std::vector<double>>();
    validate_event(ev, 0);
    return ev;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + e.what());
  }
}

std::vector<Event> load_events_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<Event> events;
  Event* current = nullptr;
  double prev_t = 0.0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("event_id", 0) == 0) continue;  // header
    std::istringstream ss(line);
    std::string id, t_s, lv_s, fv_s, sp_s;
    if (!std::getline(ss, id, ',') || !std::getline(ss, t_s, ',') ||
        !std::getline(ss, lv_s, ',') || !std::getline(ss, fv_s, ',') ||
        !std::getline(ss, sp_s))
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed row");
    double t, lv, fv, sp;
    try {
      t = std::stod(t_s);
      lv = std::stod(lv_s);
      fv = std::stod(fv_s);
      sp = std::stod(sp_s);
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": malformed number in event '" + id + "'");
    }
    if (sp <= 0.0)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": nonpositive spacing in event '" + id + "'");
    if (!current || current->event_id != id) {
      events.push_back(Event{id, 0.0, {}, {}, {}});
      current = &events.back();
    } else {
      const double dt = t - prev_t;
      if (current->dt == 0.0)
        current->dt = dt;
      else if (std::abs(dt - current->dt) > 1e-9)
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": inconsistent dt in event '" + id + "'");
    }
    current->lv_speed.push_back(lv);
    current->fv_speed.push_back(fv);
    current->spacing.push_back(sp);
    prev_t = t;
  }
  for (const auto& ev : events) validate_event(ev, 0);
  return events;
}

}  // namespace

std::vector<Event> load_events(const std::string& path) {
  if (path.size() > 4 && path.compare(path.size() - 4, 4, ".csv") == 0)
    return load_events_csv(path);
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<Event> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": invalid JSON");
    events.push_back(event_from_json(j, path, line_no));
  }
  return events;
}

void save_events(const std::vector<Event>& events, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& ev : events) out << event_to_json(ev).dump() << '\n';
}

void save_taskset(const TaskSet& task, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  json header{{"task_id", task.task_id},
              {"speed_low", task.speed_low},
              {"speed_high", std::isinf(task.speed_high) ? -1.0 : task.speed_high}};
  out << header.dump() << '\n';
  auto dump_split = [&](const std::vector<Event>& evs, const char* tag) {
    for (const auto& ev : evs) {
      json j = event_to_json(ev);
      j["split"] = tag;
      out << j.dump() << '\n';
    }
  };
  dump_split(task.train, "train");
  dump_split(task.val, "val");
  dump_split(task.test, "test");
}

TaskSet load_taskset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  TaskSet task;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": invalid JSON");
    if (line_no == 1) {
      task.task_id = j.at("task_id").get<int>();
      task.speed_low = j.at("speed_low").get<double>();
      const double hi = j.at("speed_high").get<double>();
      task.speed_high = hi < 0.0 ? std::numeric_limits<double>::infinity() : hi;
      continue;
    }
    Event ev = event_from_json(j, path, line_no);
    const std::string split = j.at("split").get<std::string>();
    if (split == "train")
      task.train.push_back(std::move(ev));
    else if (split == "val")
      task.val.push_back(std::move(ev));
    else if (split == "test")
      task.test.push_back(std::move(ev));
    else
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": unknown split tag '" + split + "'");
  }
  return task;
}

}  // namespace dfw
