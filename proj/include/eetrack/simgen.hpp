#pragma once

// Seeded synthetic data: day schedules expanded to per-minute traces,
// parametric IMU signals per physical activity, and observation corruption
// through a physical-activity confusion channel.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eetrack/activity.hpp"
#include "eetrack/dailypomdp.hpp"
#include "eetrack/detail/random.hpp"
#include "eetrack/energy.hpp"
#include "eetrack/error.hpp"
#include "eetrack/signal.hpp"

namespace eetrack::simgen {

inline constexpr double kDefaultJitter = 0.1;

struct ScheduleEntry {
  std::string activity;
  double mean_minutes = 1.0;
  double jitter = kDefaultJitter;  // standard deviation as a fraction of the mean
  PhysicalActivity phys_activity = PhysicalActivity::sit;
  double speed_kmh = 0.0;
  int code = 0;
};

struct ScheduleTemplate {
  int start_minute = 8 * 60;
  std::vector<ScheduleEntry> entries;

  void validate() const {
    if (start_minute < 0 || start_minute >= pomdp::kMinutesPerDay) throw InvalidParameter("start_minute outside the day");
    if (entries.empty()) throw InvalidParameter("schedule template has no entries");
    for (const auto& e : entries) {
      if (!(e.mean_minutes > 0.0)) throw InvalidParameter("duration of '" + e.activity + "' must be > 0");
      if (!(e.jitter >= 0.0)) throw InvalidParameter("jitter of '" + e.activity + "' must be >= 0");
      if (!(e.speed_kmh >= 0.0)) throw InvalidParameter("speed of '" + e.activity + "' must be >= 0");
      if (e.activity.empty()) throw InvalidParameter("schedule entry without an activity name");
    }
  }
};

inline ScheduleTemplate with_jitter(ScheduleTemplate t, double jitter) {
  for (auto& e : t.entries) e.jitter = jitter;
  return t;
}

/// The morning commute sequence starting at 8 a.m.
inline ScheduleTemplate morning_template() {
  using PA = PhysicalActivity;
  ScheduleTemplate t;
  t.start_minute = 8 * 60;
  t.entries = {
      {"eat breakfast", 10, kDefaultJitter, PA::sit, 0.0, 13030},
      {"wash self", 30, kDefaultJitter, PA::stand, 0.0, 13040},
      {"get ready", 10, kDefaultJitter, PA::stand, 0.0, 9070},
      {"go to the bus", 9, kDefaultJitter, PA::walk, 4.5, 17190},
      {"take the bus", 8, kDefaultJitter, PA::sit, 40.0, 16016},
      {"walk to work", 2, kDefaultJitter, PA::walk, 3.0, 17190},
      {"go upstairs", 1, kDefaultJitter, PA::stairsup, 1.0, 17133},
      {"go to the toilets", 3, kDefaultJitter, PA::walk, 2.5, 17151},
      {"work", 120, kDefaultJitter, PA::sit, 0.0, 11580},
  };
  return t;
}

/// A full day: the morning sequence, the working day and the trip home,
/// then evening activities at home with the phone left behind.
inline ScheduleTemplate default_day_template() {
  using PA = PhysicalActivity;
  ScheduleTemplate t = morning_template();
  const std::vector<ScheduleEntry> rest = {
      {"go to the toilets", 3, kDefaultJitter, PA::walk, 2.5, 17151},
      {"work", 120, kDefaultJitter, PA::sit, 0.0, 11580},
      {"go to the toilets", 3, kDefaultJitter, PA::walk, 2.5, 17151},
      {"work", 120, kDefaultJitter, PA::sit, 0.0, 11580},
      {"go downstairs", 1, kDefaultJitter, PA::stairsdown, 1.0, 17070},
      {"go to the bus", 9, kDefaultJitter, PA::walk, 4.5, 17190},
      {"wait for the bus", 5, kDefaultJitter, PA::stand, 0.0, 7040},
      {"take the bus", 8, kDefaultJitter, PA::sit, 40.0, 16016},
      {"walk to work", 2, kDefaultJitter, PA::walk, 3.0, 17190},
      {"eat dinner", 30, kDefaultJitter, PA::missing, 0.0, 13030},
      {"wash dishes", 20, kDefaultJitter, PA::missing, 0.0, 5035},
      {"play guitar", 40, kDefaultJitter, PA::missing, 0.0, 10074},
      {"play computer games", 60, kDefaultJitter, PA::missing, 0.0, 9045},
      {"watch movie", 90, kDefaultJitter, PA::missing, 0.0, 7025},
      {"wash self", 15, kDefaultJitter, PA::stand, 0.0, 13040},
      {"sleep", 120, kDefaultJitter, PA::missing, 0.0, 7030},
  };
  t.entries.insert(t.entries.end(), rest.begin(), rest.end());
  return t;
}

/// The seventeen daily activities (hidden states) of the default corpus,
/// in first-appearance order.
inline std::vector<pomdp::DailyActivity> states_of(const ScheduleTemplate& t) {
  std::vector<pomdp::DailyActivity> out;
  for (const auto& e : t.entries) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& s) { return s.name == e.activity; });
    if (it == out.end()) {
      out.push_back({e.activity, e.code});
    } else if (it->compendium_code != e.code) {
      throw InvalidParameter("activity '" + e.activity + "' appears with two compendium codes");
    }
  }
  return out;
}

inline std::vector<pomdp::DailyActivity> default_daily_activities() { return states_of(default_day_template()); }

struct GeneratedDay {
  pomdp::DayTrace trace;                     // true physical activities
  std::vector<energy::EnergySegment> segments;  // realized durations
  energy::EnergyTimeline energy;             // ground-truth cumulative kcal
};

struct DayOptions {
  double weight_kg = 70.0;
  energy::Compendium compendium = energy::bundled_compendium();
};

/// Expands a template to one labeled minute per step. Each duration is
/// mean + jitter*mean*N(0,1), rounded, floored at one minute; the day is cut
/// at 23:59 and the last bout shortened accordingly.
inline GeneratedDay generate_day(const ScheduleTemplate& tmpl, std::uint64_t seed, const DayOptions& opts = {}) {
  tmpl.validate();
  std::mt19937_64 rng(seed);
  GeneratedDay day;
  int minute = tmpl.start_minute;
  std::vector<int> minute_index, codes;
  std::vector<std::string> names;
  for (const auto& e : tmpl.entries) {
    double d = e.mean_minutes;
    if (e.jitter > 0.0) d += e.jitter * e.mean_minutes * detail::standard_normal(rng);
    long long n = std::max<long long>(1, std::llround(d));
    n = std::min<long long>(n, pomdp::kMinutesPerDay - minute);
    if (n <= 0) break;
    for (long long i = 0; i < n; ++i) {
      day.trace.steps.push_back({minute, e.activity, e.phys_activity, e.speed_kmh});
      minute_index.push_back(minute);
      codes.push_back(e.code);
      names.push_back(e.activity);
      ++minute;
    }
    energy::EnergySegment seg;
    seg.code = e.code;
    seg.minutes = static_cast<double>(n);
    seg.speed_kmh = e.speed_kmh;
    seg.phys_activity = e.phys_activity;
    seg.activity = e.activity;
    day.segments.push_back(seg);
  }
  day.energy = energy::timeline_from_codes(minute_index, codes, names, opts.weight_kg, opts.compendium);
  return day;
}

// ---------------------------------------------------------------------------
// Observation corruption
// ---------------------------------------------------------------------------

/// Row-stochastic corruption matrix: row = true activity, column = reported.
struct NoiseChannel {
  std::array<std::array<double, kNumPhysicalActivities>, kNumPhysicalActivities> rows{};

  static NoiseChannel identity() {
    NoiseChannel c;
    for (std::size_t i = 0; i < kNumPhysicalActivities; ++i) c.rows[i][i] = 1.0;
    return c;
  }

  void validate() const {
    for (std::size_t r = 0; r < kNumPhysicalActivities; ++r) {
      double s = 0.0;
      for (double p : rows[r]) {
        if (!(p >= 0.0)) throw InvalidParameter("noise channel entries must be >= 0");
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-9) {
        throw InvalidParameter("noise channel row '" + std::string(kPhysicalActivityNames[r]) + "' does not sum to 1");
      }
    }
  }
};

/// Recognition rates of the reference phone classifier, used as the default
/// corruption channel. Order: lie, missing, sit, stairsdown, stairsup,
/// stand, run, walk.
inline NoiseChannel reference_noise_channel() {
  NoiseChannel c;
  c.rows = {{
      {0.75, 0.06, 0.09, 0.00, 0.00, 0.10, 0.00, 0.00},
      {0.10, 0.83, 0.07, 0.00, 0.00, 0.00, 0.00, 0.00},
      {0.09, 0.00, 0.78, 0.00, 0.00, 0.13, 0.00, 0.00},
      {0.00, 0.00, 0.00, 0.96, 0.04, 0.00, 0.00, 0.00},
      {0.00, 0.00, 0.00, 0.01, 0.99, 0.00, 0.00, 0.00},
      {0.03, 0.04, 0.02, 0.00, 0.00, 0.91, 0.00, 0.00},
      {0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 1.00, 0.00},
      {0.00, 0.00, 0.00, 0.01, 0.00, 0.00, 0.00, 0.99},
  }};
  return c;
}

/// Replaces each minute's physical activity by a draw from its channel row;
/// minute, activity and speed pass through.
inline pomdp::DayTrace corrupt_trace(const pomdp::DayTrace& truth, const NoiseChannel& channel, std::uint64_t seed) {
  channel.validate();
  std::mt19937_64 rng(seed);
  pomdp::DayTrace out = truth;
  for (auto& s : out.steps) {
    s.phys_activity = activity_from_index(detail::sample_discrete(channel.rows[index_of(s.phys_activity)], rng));
  }
  return out;
}

inline std::vector<pomdp::Observation> corrupt_observations(const pomdp::DayTrace& truth, const NoiseChannel& channel,
                                                            std::uint64_t seed, const pomdp::SpeedBins& bins = {}) {
  return corrupt_trace(truth, channel, seed).observations(bins);
}

// ---------------------------------------------------------------------------
// Synthetic IMU signals
// ---------------------------------------------------------------------------

struct Tone {
  double freq_hz = 0.0;
  double amplitude = 0.0;
};

struct ChannelRecipe {
  double offset = 0.0;
  std::vector<Tone> tones;
  double noise_sd = 0.0;
};

/// Per physical activity, one ChannelRecipe per channel of `channels`.
struct SignalRecipe {
  std::vector<std::string> channels = signal::default_channels();
  std::map<PhysicalActivity, std::vector<ChannelRecipe>> activities;
  double amplitude_spread = 0.1;  // per-session amplitude scale drawn from 1 +- spread (uniform)

  void validate(double sample_rate) const {
    for (const auto& [a, chans] : activities) {
      if (chans.size() != channels.size()) {
        throw InvalidParameter("recipe for '" + std::string(to_string(a)) + "' has the wrong channel count");
      }
      for (const auto& c : chans) {
        if (!(c.noise_sd >= 0.0)) throw InvalidParameter("noise_sd must be >= 0");
        for (const auto& t : c.tones) {
          if (!(t.freq_hz >= 0.0) || !(t.freq_hz < sample_rate / 2.0)) {
            throw InvalidParameter("tone frequency must lie below Nyquist");
          }
        }
      }
    }
  }
};

/// Parametric recipes. Dynamic activities carry gait-rate tones of distinct
/// frequency and strength; static ones differ in noise level, postural
/// sway and gravity direction. "missing" is sensor noise only.
inline SignalRecipe default_signal_recipe() {
  using PA = PhysicalActivity;
  constexpr double g = 9.81;
  auto sensor = [](double off_x, double off_y, double off_z, std::vector<Tone> tx, std::vector<Tone> ty,
                   std::vector<Tone> tz, double sd) {
    return std::vector<ChannelRecipe>{{off_x, std::move(tx), sd}, {off_y, std::move(ty), sd}, {off_z, std::move(tz), sd}};
  };
  auto join = [](std::vector<ChannelRecipe> a, const std::vector<ChannelRecipe>& b, const std::vector<ChannelRecipe>& c) {
    a.insert(a.end(), b.begin(), b.end());
    a.insert(a.end(), c.begin(), c.end());
    return a;
  };
  SignalRecipe r;
  // accelerometer m/s^2, gyroscope rad/s, magnetometer uT
  r.activities[PA::run] = join(sensor(0, g, 0, {{2.6, 5.0}, {5.2, 1.5}}, {{2.6, 8.0}, {5.2, 3.0}}, {{2.6, 4.0}}, 0.6),
                               sensor(0, 0, 0, {{2.6, 2.5}}, {{1.3, 1.5}}, {{2.6, 1.8}}, 0.15),
                               sensor(20, -5, 40, {{2.6, 6.0}}, {{2.6, 4.0}}, {{1.3, 3.0}}, 0.4));
  r.activities[PA::walk] = join(sensor(0, g, 0, {{1.8, 1.6}, {3.6, 0.5}}, {{1.8, 2.5}, {3.6, 0.8}}, {{1.8, 1.2}}, 0.25),
                                sensor(0, 0, 0, {{1.8, 0.8}}, {{0.9, 0.5}}, {{1.8, 0.6}}, 0.06),
                                sensor(20, -5, 40, {{1.8, 3.0}}, {{1.8, 2.0}}, {{0.9, 1.5}}, 0.3));
  r.activities[PA::stairsup] = join(sensor(0, g, 0, {{1.5, 1.2}}, {{1.5, 3.2}, {3.0, 0.4}}, {{1.5, 2.0}}, 0.3),
                                    sensor(0, 0, 0, {{1.5, 0.5}}, {{0.75, 0.3}}, {{1.5, 0.9}}, 0.08),
                                    sensor(20, -5, 40, {{1.5, 2.0}}, {{1.5, 1.5}}, {{0.75, 1.0}}, 0.3));
  r.activities[PA::stairsdown] = join(sensor(0, g, 0, {{2.1, 2.2}}, {{2.1, 3.0}, {4.2, 2.0}}, {{2.1, 1.0}}, 0.45),
                                      sensor(0, 0, 0, {{2.1, 1.0}}, {{1.05, 0.6}}, {{2.1, 0.4}}, 0.1),
                                      sensor(20, -5, 40, {{2.1, 2.5}}, {{2.1, 1.0}}, {{1.05, 2.0}}, 0.3));
  r.activities[PA::stand] = join(sensor(0, g, 0, {{0.6, 0.15}}, {}, {{0.6, 0.1}}, 0.08),
                                 sensor(0, 0, 0, {{0.6, 0.05}}, {}, {}, 0.03),
                                 sensor(20, -5, 40, {{0.6, 0.4}}, {}, {}, 0.15));
  r.activities[PA::sit] = join(sensor(g * 0.7, g * 0.7, 0, {}, {{1.1, 0.04}}, {}, 0.035),
                               sensor(0, 0, 0, {}, {}, {{1.1, 0.03}}, 0.012),
                               sensor(-10, 25, 30, {}, {{1.1, 0.1}}, {}, 0.1));
  r.activities[PA::lie] = join(sensor(0, 0, g, {}, {}, {{0.4, 0.05}}, 0.015),
                               sensor(0, 0, 0, {{0.4, 0.02}}, {}, {}, 0.006),
                               sensor(-30, 10, 20, {}, {}, {{0.4, 0.2}}, 0.06));
  r.activities[PA::missing] = join(sensor(0, 0, g, {}, {}, {}, 0.004), sensor(0, 0, 0, {}, {}, {}, 0.002),
                                   sensor(5, 30, -20, {}, {}, {}, 0.03));
  return r;
}

/// A labeled 9-channel stream: per channel offset + tones (random phase,
/// per-session amplitude scale) + Gaussian noise.
inline signal::SensorStream synthesize_signals(PhysicalActivity activity, double minutes, const SignalRecipe& recipe,
                                               std::uint64_t seed, double sample_rate = signal::kDefaultSampleRate) {
  recipe.validate(sample_rate);
  auto it = recipe.activities.find(activity);
  if (it == recipe.activities.end()) {
    throw InvalidParameter("signal recipe does not cover activity '" + std::string(to_string(activity)) + "'");
  }
  if (!(minutes >= 0.0)) throw InvalidParameter("minutes must be >= 0");
  std::mt19937_64 rng(seed);
  const auto& chans = it->second;
  const std::size_t nc = chans.size();
  std::vector<std::vector<double>> phase(nc);
  std::vector<double> scale(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    scale[c] = 1.0 + recipe.amplitude_spread * (2.0 * detail::uniform01(rng) - 1.0);
    for (std::size_t k = 0; k < chans[c].tones.size(); ++k) phase[c].push_back(2.0 * std::numbers::pi * detail::uniform01(rng));
  }
  const auto n = static_cast<std::size_t>(std::llround(minutes * 60.0 * sample_rate));
  signal::SensorStream s;
  s.sample_rate = sample_rate;
  s.channels = recipe.channels;
  s.label = activity;
  s.source = "synthetic:" + std::string(to_string(activity));
  s.timestamps.resize(n);
  s.values.resize(n * nc);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    s.timestamps[i] = t;
    for (std::size_t c = 0; c < nc; ++c) {
      const auto& cr = chans[c];
      double v = cr.offset;
      for (std::size_t k = 0; k < cr.tones.size(); ++k) {
        v += scale[c] * cr.tones[k].amplitude * std::sin(2.0 * std::numbers::pi * cr.tones[k].freq_hz * t + phase[c][k]);
      }
      if (cr.noise_sd > 0.0) v += cr.noise_sd * detail::standard_normal(rng);
      s.values[i * nc + c] = v;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Corpora
// ---------------------------------------------------------------------------

struct Corpus {
  std::vector<GeneratedDay> days;
  std::vector<pomdp::DayTrace> observed;  // physical activity corrupted
};

/// `num_days` days from one template; day d uses seeds derived from (seed, d).
inline Corpus generate_corpus(const ScheduleTemplate& tmpl, std::size_t num_days, std::uint64_t seed,
                              const NoiseChannel& channel = reference_noise_channel(), const DayOptions& opts = {}) {
  Corpus c;
  for (std::size_t d = 0; d < num_days; ++d) {
    c.days.push_back(generate_day(tmpl, detail::derive_seed(seed, 2 * d), opts));
    c.observed.push_back(corrupt_trace(c.days.back().trace, channel, detail::derive_seed(seed, 2 * d + 1)));
  }
  return c;
}

/// One labeled session per physical activity (and per repeat).
inline std::vector<signal::SensorStream> generate_sessions(const SignalRecipe& recipe, double minutes, std::size_t repeats,
                                                           std::uint64_t seed) {
  std::vector<signal::SensorStream> out;
  for (std::size_t r = 0; r < repeats; ++r) {
    for (std::size_t a = 0; a < kNumPhysicalActivities; ++a) {
      const auto act = activity_from_index(a);
      if (!recipe.activities.count(act)) continue;
      out.push_back(synthesize_signals(act, minutes, recipe, detail::derive_seed(seed, r * kNumPhysicalActivities + a)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Template file
// ---------------------------------------------------------------------------

inline nlohmann::json template_to_json(const ScheduleTemplate& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : t.entries) {
    rows.push_back({{"activity", e.activity},
                    {"length_min", e.mean_minutes},
                    {"jitter", e.jitter},
                    {"phys_activity", to_string(e.phys_activity)},
                    {"speed_kmh", e.speed_kmh},
                    {"code", e.code}});
  }
  return {{"start_minute", t.start_minute}, {"entries", rows}};
}

inline ScheduleTemplate template_from_json(const nlohmann::json& j) {
  ScheduleTemplate t;
  t.start_minute = j.value("start_minute", t.start_minute);
  for (const auto& r : j.at("entries")) {
    ScheduleEntry e;
    e.activity = r.at("activity").get<std::string>();
    e.mean_minutes = r.at("length_min").get<double>();
    e.jitter = r.value("jitter", kDefaultJitter);
    e.phys_activity = physical_activity_or_throw(r.at("phys_activity").get<std::string>());
    e.speed_kmh = r.value("speed_kmh", 0.0);
    e.code = r.at("code").get<int>();
    t.entries.push_back(std::move(e));
  }
  t.validate();
  return t;
}

}  // namespace eetrack::simgen
