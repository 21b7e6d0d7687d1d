#pragma once

// Daily-activity inference: a POMDP whose hidden states are daily
// activities and whose observations are (minute of day, physical activity,
// speed bin). Transition and observation models are estimated from labeled
// day traces; sparse observation counts are smoothed with a Gaussian along
// the time axis. Decoding is greedy: one belief update and one
// immediate-reward action per minute.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eetrack/activity.hpp"
#include "eetrack/detail/csv.hpp"
#include "eetrack/error.hpp"

namespace eetrack::pomdp {

inline constexpr int kMinutesPerDay = 1440;

struct DailyActivity {
  std::string name;
  int compendium_code = 0;

  friend bool operator==(const DailyActivity&, const DailyActivity&) = default;
};

/// Speed partition in km/h. With upper edges e_0 < e_1 < ... the bins are
/// [0, e_0], (e_0, e_1], ..., (e_last, inf); the default gives
/// {0}, (0,1], (1,3.2], (3.2,5.5], (5.5,20], (20,inf).
struct SpeedBins {
  std::vector<double> upper_edges{0.0, 1.0, 3.2, 5.5, 20.0};

  std::size_t size() const noexcept { return upper_edges.size() + 1; }

  std::size_t bin(double speed_kmh) const {
    if (!(speed_kmh >= 0.0)) throw InvalidParameter("speed must be a non-negative number");
    for (std::size_t i = 0; i < upper_edges.size(); ++i) {
      if (speed_kmh <= upper_edges[i]) return i;
    }
    return upper_edges.size();
  }

  void validate() const {
    for (std::size_t i = 1; i < upper_edges.size(); ++i) {
      if (!(upper_edges[i] > upper_edges[i - 1])) throw InvalidParameter("speed bin edges must be strictly increasing");
    }
  }

  friend bool operator==(const SpeedBins&, const SpeedBins&) = default;
};

struct Observation {
  int time_bin = 0;
  PhysicalActivity activity = PhysicalActivity::missing;
  std::size_t speed_bin = 0;

  friend bool operator==(const Observation&, const Observation&) = default;
};

/// One minute of a labeled day. `phys_activity` is what the phone reported.
struct DayStep {
  int minute = 0;
  std::string activity;
  PhysicalActivity phys_activity = PhysicalActivity::missing;
  double speed_kmh = 0.0;

  friend bool operator==(const DayStep&, const DayStep&) = default;
};

struct DayTrace {
  std::vector<DayStep> steps;

  std::size_t size() const noexcept { return steps.size(); }

  void validate() const {
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (steps[i].minute < 0 || steps[i].minute >= kMinutesPerDay) {
        throw InvalidParameter("trace minute " + std::to_string(steps[i].minute) + " outside 0..1439");
      }
      if (i > 0 && steps[i].minute != steps[i - 1].minute + 1) {
        throw InvalidParameter("trace minutes must increase by exactly 1 (at step " + std::to_string(i) + ")");
      }
    }
  }

  std::vector<Observation> observations(const SpeedBins& bins) const {
    std::vector<Observation> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back({s.minute, s.phys_activity, bins.bin(s.speed_kmh)});
    return out;
  }

  std::vector<std::string> activities() const {
    std::vector<std::string> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.activity);
    return out;
  }

  friend bool operator==(const DayTrace&, const DayTrace&) = default;
};

/// Dense row-major real matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Per-state tensor over (time bin x physical activity x speed bin). Time is
/// the fastest-varying axis so each (activity, speed) slice is contiguous.
struct ObservationTensor {
  std::size_t num_states = 0;
  std::size_t time_bins = kMinutesPerDay;
  std::size_t activities = kNumPhysicalActivities;
  std::size_t speed_bins = 0;
  std::vector<double> data;

  ObservationTensor() = default;
  ObservationTensor(std::size_t states, std::size_t speeds)
      : num_states(states), speed_bins(speeds), data(states * speeds * kNumPhysicalActivities * kMinutesPerDay, 0.0) {}

  std::size_t cells_per_state() const noexcept { return time_bins * activities * speed_bins; }

  std::size_t index(std::size_t s, std::size_t t, std::size_t a, std::size_t v) const noexcept {
    return s * cells_per_state() + (a * speed_bins + v) * time_bins + t;
  }

  double& at(std::size_t s, std::size_t t, std::size_t a, std::size_t v) { return data[index(s, t, a, v)]; }
  double at(std::size_t s, std::size_t t, std::size_t a, std::size_t v) const { return data[index(s, t, a, v)]; }

  double at(std::size_t s, const Observation& o) const {
    return at(s, static_cast<std::size_t>(o.time_bin), index_of(o.activity), o.speed_bin);
  }

  std::span<const double> state(std::size_t s) const {
    return {data.data() + s * cells_per_state(), cells_per_state()};
  }
  std::span<double> state(std::size_t s) { return {data.data() + s * cells_per_state(), cells_per_state()}; }

  double state_sum(std::size_t s) const {
    const auto v = state(s);
    return std::accumulate(v.begin(), v.end(), 0.0);
  }
};

struct SmoothingParams {
  bool enabled = true;
  double sigma_minutes = 30.0;
  double amplitude = 0.1;
  double floor_epsilon = 1e-6;

  void validate() const {
    if (enabled) {
      if (!(sigma_minutes > 0.0)) throw InvalidParameter("sigma_minutes must be > 0");
      if (!(amplitude > 0.0)) throw InvalidParameter("amplitude must be > 0");
    }
    if (!(floor_epsilon >= 0.0)) throw InvalidParameter("floor_epsilon must be >= 0");
  }

  friend bool operator==(const SmoothingParams&, const SmoothingParams&) = default;
};

inline void to_json(nlohmann::json& j, const SmoothingParams& p) {
  j = {{"enabled", p.enabled},
       {"sigma_minutes", p.sigma_minutes},
       {"amplitude", p.amplitude},
       {"floor_epsilon", p.floor_epsilon}};
}

inline void from_json(const nlohmann::json& j, SmoothingParams& p) {
  p.enabled = j.value("enabled", p.enabled);
  p.sigma_minutes = j.value("sigma_minutes", p.sigma_minutes);
  p.amplitude = j.value("amplitude", p.amplitude);
  p.floor_epsilon = j.value("floor_epsilon", p.floor_epsilon);
}

/// The tuple (S, A, T, R, Omega, O) with A = S (one prediction per state).
/// T and O carry no action axis: predictions do not affect the world.
struct PomdpModel {
  std::vector<DailyActivity> states;
  SpeedBins bins;
  Matrix transition;                 // |S| x |S|, row-stochastic
  ObservationTensor raw_counts;      // empirical counts, unsmoothed
  ObservationTensor observation;     // smoothed, per-state normalised
  Matrix rewards;                    // |S| x |A|
  SmoothingParams smoothing;

  std::size_t num_states() const noexcept { return states.size(); }

  std::optional<std::size_t> state_index(const std::string& name) const {
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (states[i].name == name) return i;
    }
    return std::nullopt;
  }
};

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

namespace model_detail {

inline std::map<std::string, std::size_t> index_states(const std::vector<DailyActivity>& states) {
  std::map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!idx.emplace(states[i].name, i).second) throw InvalidParameter("duplicate daily activity '" + states[i].name + "'");
  }
  return idx;
}

inline std::size_t lookup(const std::map<std::string, std::size_t>& idx, const std::string& name) {
  auto it = idx.find(name);
  if (it == idx.end()) throw InvalidParameter("trace activity '" + name + "' is not a model state");
  return it->second;
}

}  // namespace model_detail

/// T[s][s'] = #(s at m, s' at m+1) / #(s followed by anything); rows never
/// seen as a source become uniform.
inline Matrix estimate_transition(const std::vector<DayTrace>& traces, const std::vector<DailyActivity>& states) {
  if (traces.empty()) throw InvalidParameter("need at least one trace");
  const auto idx = model_detail::index_states(states);
  const std::size_t n = states.size();
  Matrix counts(n, n);
  for (const auto& tr : traces) {
    tr.validate();
    for (std::size_t i = 0; i < tr.steps.size(); ++i) {
      const auto s = model_detail::lookup(idx, tr.steps[i].activity);
      if (i + 1 < tr.steps.size()) counts(s, model_detail::lookup(idx, tr.steps[i + 1].activity)) += 1.0;
    }
  }
  for (std::size_t r = 0; r < n; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) total += counts(r, c);
    if (total == 0.0) {
      for (std::size_t c = 0; c < n; ++c) counts(r, c) = 1.0 / static_cast<double>(n);
    } else {
      for (std::size_t c = 0; c < n; ++c) counts(r, c) /= total;
    }
  }
  return counts;
}

/// Raw per-state counts of each observed (minute, physical activity, speed bin).
inline ObservationTensor estimate_observation(const std::vector<DayTrace>& traces, const std::vector<DailyActivity>& states,
                                              const SpeedBins& bins) {
  if (traces.empty()) throw InvalidParameter("need at least one trace");
  bins.validate();
  const auto idx = model_detail::index_states(states);
  ObservationTensor raw(states.size(), bins.size());
  for (const auto& tr : traces) {
    tr.validate();
    for (const auto& st : tr.steps) {
      const auto s = model_detail::lookup(idx, st.activity);
      raw.at(s, static_cast<std::size_t>(st.minute), index_of(st.phys_activity), bins.bin(st.speed_kmh)) += 1.0;
    }
  }
  return raw;
}

/// Gaussian pseudo-counts only: every raw occurrence at (t, a, v) with count
/// c contributes c * amplitude * exp(-(t' - t)^2 / (2 sigma^2)) to every time
/// bin t' of the same (a, v) slice. Time is not wrapped around midnight.
inline ObservationTensor gaussian_pseudo_counts(const ObservationTensor& raw, double sigma_minutes, double amplitude) {
  if (!(sigma_minutes > 0.0)) throw InvalidParameter("sigma_minutes must be > 0");
  if (!(amplitude >= 0.0)) throw InvalidParameter("amplitude must be >= 0");
  ObservationTensor out = raw;
  std::fill(out.data.begin(), out.data.end(), 0.0);
  const std::size_t tb = raw.time_bins;
  std::vector<double> kernel(tb);
  for (std::size_t d = 0; d < tb; ++d) {
    const double dd = static_cast<double>(d);
    kernel[d] = amplitude * std::exp(-(dd * dd) / (2.0 * sigma_minutes * sigma_minutes));
  }
  const std::size_t slices = raw.activities * raw.speed_bins;
  for (std::size_t s = 0; s < raw.num_states; ++s) {
    for (std::size_t sl = 0; sl < slices; ++sl) {
      const std::size_t base = s * raw.cells_per_state() + sl * tb;
      for (std::size_t t = 0; t < tb; ++t) {
        const double c = raw.data[base + t];
        if (c == 0.0) continue;
        for (std::size_t t2 = 0; t2 < tb; ++t2) out.data[base + t2] += c * kernel[t2 > t ? t2 - t : t - t2];
      }
    }
  }
  return out;
}

/// Smoothed, floored, per-state normalised observation model.
///
/// Raw counts plus Gaussian pseudo-counts (skipped when smoothing is
/// disabled) are normalised per state, then mixed with the floor:
/// p = (1 - N eps) q + eps over the N cells of a state, so every cell is
/// >= eps and each state still sums to 1. A state with no mass becomes
/// uniform.
inline ObservationTensor smooth_observation(const ObservationTensor& raw, const SmoothingParams& params) {
  params.validate();
  const double n = static_cast<double>(raw.cells_per_state());
  if (params.floor_epsilon * n >= 1.0) throw InvalidParameter("floor_epsilon too large for the observation space");
  ObservationTensor out = raw;
  if (params.enabled) {
    const auto pseudo = gaussian_pseudo_counts(raw, params.sigma_minutes, params.amplitude);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += pseudo.data[i];
  }
  const double eps = params.floor_epsilon;
  for (std::size_t s = 0; s < out.num_states; ++s) {
    auto cells = out.state(s);
    const double total = std::accumulate(cells.begin(), cells.end(), 0.0);
    if (!(total > 0.0)) {
      std::fill(cells.begin(), cells.end(), 1.0 / n);
      continue;
    }
    const double scale = (1.0 - n * eps) / total;
    for (double& c : cells) c = c * scale + eps;
  }
  return out;
}

inline ObservationTensor smooth_observation(const ObservationTensor& raw, double sigma_minutes, double amplitude,
                                            double floor_epsilon) {
  return smooth_observation(raw, SmoothingParams{true, sigma_minutes, amplitude, floor_epsilon});
}

/// Per-state positive multipliers on R(s, s), the reward for predicting the
/// true state.
using RewardTweaks = std::map<std::string, double>;

inline Matrix default_rewards(std::size_t n) { return Matrix::identity(n); }

inline void apply_reward_tweaks(PomdpModel& model, const RewardTweaks& tweaks) {
  for (const auto& [name, factor] : tweaks) {
    if (!(factor > 0.0)) throw InvalidParameter("reward multiplier for '" + name + "' must be > 0");
    const auto s = model.state_index(name);
    if (!s) throw InvalidParameter("reward tweak names unknown activity '" + name + "'");
    model.rewards(*s, *s) *= factor;
  }
}

struct TrainOptions {
  SpeedBins bins;
  SmoothingParams smoothing;
  RewardTweaks reward_tweaks;
};

inline PomdpModel train_pomdp(const std::vector<DayTrace>& traces, const std::vector<DailyActivity>& states,
                              const TrainOptions& opts = {}) {
  PomdpModel m;
  m.states = states;
  m.bins = opts.bins;
  m.smoothing = opts.smoothing;
  m.transition = estimate_transition(traces, states);
  m.raw_counts = estimate_observation(traces, states, opts.bins);
  m.observation = smooth_observation(m.raw_counts, opts.smoothing);
  m.rewards = default_rewards(states.size());
  apply_reward_tweaks(m, opts.reward_tweaks);
  return m;
}

// ---------------------------------------------------------------------------
// Belief tracking and decoding
// ---------------------------------------------------------------------------

using Belief = std::vector<double>;

inline Belief uniform_belief(std::size_t n) { return Belief(n, n ? 1.0 / static_cast<double>(n) : 0.0); }

struct BeliefUpdate {
  Belief belief;
  double normalizer = 0.0;  // Pr(o | a, b)
  bool reset = false;       // the observation had zero probability
};

/// b'(s') = O(s', o) sum_s T(s, s') b(s) / Pr(o | b). A zero normaliser
/// resets the belief to uniform and flags it.
template <class Likelihood>
BeliefUpdate belief_update_with(const Belief& b, const Matrix& transition, Likelihood&& likelihood) {
  const std::size_t n = b.size();
  if (transition.rows != n || transition.cols != n) throw InvalidParameter("belief and transition sizes differ");
  BeliefUpdate out;
  out.belief.assign(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    if (b[s] == 0.0) continue;
    for (std::size_t s2 = 0; s2 < n; ++s2) out.belief[s2] += transition(s, s2) * b[s];
  }
  for (std::size_t s2 = 0; s2 < n; ++s2) out.belief[s2] *= likelihood(s2);
  out.normalizer = std::accumulate(out.belief.begin(), out.belief.end(), 0.0);
  if (!(out.normalizer > 0.0) || !std::isfinite(out.normalizer)) {
    out.belief = uniform_belief(n);
    out.reset = true;
    return out;
  }
  for (double& p : out.belief) p /= out.normalizer;
  return out;
}

inline BeliefUpdate belief_update(const Belief& b, const Observation& o, const PomdpModel& model) {
  if (o.time_bin < 0 || o.time_bin >= kMinutesPerDay) throw InvalidParameter("observation time bin out of range");
  if (o.speed_bin >= model.bins.size()) throw InvalidParameter("observation speed bin out of range");
  return belief_update_with(b, model.transition, [&](std::size_t s) { return model.observation.at(s, o); });
}

/// argmax_a sum_s R(s, a) b(s); ties go to the lowest action index.
inline std::size_t select_action(const Belief& b, const Matrix& rewards) {
  if (rewards.rows != b.size() || rewards.cols == 0) throw InvalidParameter("reward matrix does not match belief");
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < rewards.cols; ++a) {
    double v = 0.0;
    for (std::size_t s = 0; s < b.size(); ++s) v += rewards(s, a) * b[s];
    if (v > best_value) {
      best_value = v;
      best = a;
    }
  }
  return best;
}

struct DayInference {
  std::vector<std::size_t> actions;
  std::vector<double> top_probability;  // max belief after each update
  std::size_t resets = 0;
};

/// Uniform initial belief, then per minute: update, then act.
inline DayInference infer_day(const std::vector<Observation>& observations, const PomdpModel& model) {
  DayInference out;
  Belief b = uniform_belief(model.num_states());
  for (const auto& o : observations) {
    auto u = belief_update(b, o, model);
    out.resets += u.reset ? 1 : 0;
    b = std::move(u.belief);
    out.actions.push_back(select_action(b, model.rewards));
    out.top_probability.push_back(*std::max_element(b.begin(), b.end()));
  }
  return out;
}

inline std::vector<std::string> action_names(const PomdpModel& model, const std::vector<std::size_t>& actions) {
  std::vector<std::string> out;
  out.reserve(actions.size());
  for (auto a : actions) out.push_back(model.states.at(a).name);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct ActivityRecall {
  std::string activity;
  std::size_t minutes = 0;
  std::size_t correct = 0;

  double recall() const { return minutes ? static_cast<double>(correct) / static_cast<double>(minutes) : 0.0; }
};

struct DailyMetrics {
  std::vector<ActivityRecall> per_activity;  // first-appearance order
  double mean = 0.0;
  double weighed_mean = 0.0;
  double min = 0.0;
  double max = 0.0;

  const ActivityRecall* find(const std::string& name) const {
    for (const auto& r : per_activity) {
      if (r.activity == name) return &r;
    }
    return nullptr;
  }
};

/// Accumulates per-activity minute counts over one or more days.
class RecallAccumulator {
 public:
  void add(const std::vector<std::string>& predicted, const DayTrace& truth) {
    if (predicted.size() != truth.size()) {
      throw InvalidParameter("prediction length " + std::to_string(predicted.size()) + " differs from truth length " +
                             std::to_string(truth.size()));
    }
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      auto& r = slot(truth.steps[i].activity);
      ++r.minutes;
      r.correct += predicted[i] == truth.steps[i].activity ? 1 : 0;
    }
  }

  DailyMetrics metrics() const {
    DailyMetrics m;
    m.per_activity = rows_;
    if (rows_.empty()) return m;
    std::size_t minutes = 0, correct = 0;
    m.min = 1.0;
    m.max = 0.0;
    for (const auto& r : rows_) {
      m.mean += r.recall();
      minutes += r.minutes;
      correct += r.correct;
      m.min = std::min(m.min, r.recall());
      m.max = std::max(m.max, r.recall());
    }
    m.mean /= static_cast<double>(rows_.size());
    m.weighed_mean = static_cast<double>(correct) / static_cast<double>(minutes);
    return m;
  }

 private:
  ActivityRecall& slot(const std::string& name) {
    for (auto& r : rows_) {
      if (r.activity == name) return r;
    }
    rows_.push_back({name, 0, 0});
    return rows_.back();
  }

  std::vector<ActivityRecall> rows_;
};

/// Per-activity recall, their unweighted mean, the minute-weighted mean
/// (= per-minute accuracy), and the extremes.
inline DailyMetrics evaluate_day(const std::vector<std::string>& predicted, const DayTrace& truth) {
  RecallAccumulator acc;
  acc.add(predicted, truth);
  return acc.metrics();
}

inline std::string daily_metrics_table(const DailyMetrics& m, const std::string& label = "Result") {
  std::string out = "Experiment Type | Mean | Weighed Mean | Min | Max\n";
  out += label + " | " + detail::format_fixed(m.mean, 3) + " | " + detail::format_fixed(m.weighed_mean, 3) + " | " +
         detail::format_fixed(m.min, 3) + " | " + detail::format_fixed(m.max, 3) + "\n";
  return out;
}

inline std::string daily_metrics_csv_string(const DailyMetrics& m) {
  std::string out = "activity,minutes,correct,recall\n";
  for (const auto& r : m.per_activity) {
    out += detail::quote_csv(r.activity) + "," + std::to_string(r.minutes) + "," + std::to_string(r.correct) + "," +
           detail::format_double(r.recall()) + "\n";
  }
  out += "#mean," + detail::format_double(m.mean) + "\n";
  out += "#weighed_mean," + detail::format_double(m.weighed_mean) + "\n";
  out += "#min," + detail::format_double(m.min) + "\n";
  out += "#max," + detail::format_double(m.max) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

inline std::string trace_csv_string(const DayTrace& tr) {
  std::string out = "minute,true_activity,phys_activity,speed_kmh\n";
  for (const auto& s : tr.steps) {
    out += std::to_string(s.minute) + "," + detail::quote_csv(s.activity) + "," + std::string(to_string(s.phys_activity)) +
           "," + detail::format_double(s.speed_kmh) + "\n";
  }
  return out;
}

inline void write_trace_csv(const std::string& path, const DayTrace& tr) { detail::write_file(path, trace_csv_string(tr)); }

inline DayTrace parse_trace_csv(detail::CsvReader reader) {
  std::vector<std::string> f;
  if (!reader.next(f)) reader.fail("empty trace file");
  if (f.size() != 4 || detail::trim(f[0]) != "minute" || detail::trim(f[1]) != "true_activity" ||
      detail::trim(f[2]) != "phys_activity" || detail::trim(f[3]) != "speed_kmh") {
    reader.fail("header must be 'minute,true_activity,phys_activity,speed_kmh'");
  }
  DayTrace tr;
  while (reader.next(f)) {
    if (f.size() != 4) reader.fail("expected 4 fields, got " + std::to_string(f.size()));
    DayStep s;
    const auto minute = detail::parse_long(f[0], reader.source(), reader.line());
    if (minute < 0 || minute >= kMinutesPerDay) reader.fail("minute outside 0..1439");
    if (!tr.steps.empty() && minute != tr.steps.back().minute + 1) reader.fail("minutes must increase by exactly 1");
    s.minute = static_cast<int>(minute);
    s.activity = std::string(detail::trim(f[1]));
    if (s.activity.empty()) reader.fail("empty activity name");
    const auto pa = parse_physical_activity(detail::trim(f[2]));
    if (!pa) reader.fail("unknown physical activity '" + f[2] + "'");
    s.phys_activity = *pa;
    s.speed_kmh = detail::parse_double(f[3], reader.source(), reader.line());
    if (s.speed_kmh < 0.0) reader.fail("negative speed");
    tr.steps.push_back(std::move(s));
  }
  return tr;
}

inline DayTrace read_trace_csv(const std::string& path) { return parse_trace_csv(detail::CsvReader::from_file(path)); }

inline std::string predictions_csv_string(const PomdpModel& model, const std::vector<Observation>& obs,
                                          const DayInference& inf) {
  std::string out = "minute,predicted_activity,belief_top1_prob\n";
  for (std::size_t i = 0; i < inf.actions.size(); ++i) {
    out += std::to_string(obs[i].time_bin) + "," + detail::quote_csv(model.states[inf.actions[i]].name) + "," +
           detail::format_double(inf.top_probability[i]) + "\n";
  }
  return out;
}

struct PredictedMinute {
  int minute = 0;
  std::string activity;
  double top_probability = 0.0;
};

inline std::vector<PredictedMinute> read_predictions_csv(const std::string& path) {
  auto reader = detail::CsvReader::from_file(path);
  std::vector<std::string> f;
  if (!reader.next(f)) reader.fail("empty predictions file");
  if (f.size() != 3 || detail::trim(f[0]) != "minute" || detail::trim(f[1]) != "predicted_activity") {
    reader.fail("header must be 'minute,predicted_activity,belief_top1_prob'");
  }
  std::vector<PredictedMinute> out;
  while (reader.next(f)) {
    if (f.size() != 3) reader.fail("expected 3 fields");
    PredictedMinute p;
    p.minute = static_cast<int>(detail::parse_long(f[0], path, reader.line()));
    p.activity = std::string(detail::trim(f[1]));
    p.top_probability = detail::parse_double(f[2], path, reader.line());
    out.push_back(std::move(p));
  }
  return out;
}

inline constexpr int kPomdpFormatVersion = 1;

/// Stores the sparse raw counts and smoothing parameters; the smoothed
/// tensor is rebuilt on load.
inline nlohmann::json model_to_json(const PomdpModel& m) {
  nlohmann::json states = nlohmann::json::array();
  for (const auto& s : m.states) states.push_back({{"name", s.name}, {"code", s.compendium_code}});
  const std::size_t n = m.num_states();
  auto matrix_json = [](const Matrix& mat) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < mat.rows; ++r) {
      rows.push_back(std::vector<double>(mat.data.begin() + static_cast<std::ptrdiff_t>(r * mat.cols),
                                         mat.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * mat.cols)));
    }
    return rows;
  };
  nlohmann::json cells = nlohmann::json::array();
  const auto& raw = m.raw_counts;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t a = 0; a < raw.activities; ++a) {
      for (std::size_t v = 0; v < raw.speed_bins; ++v) {
        for (std::size_t t = 0; t < raw.time_bins; ++t) {
          const double c = raw.at(s, t, a, v);
          if (c != 0.0) cells.push_back({s, t, kPhysicalActivityNames[a], v, c});
        }
      }
    }
  }
  return {{"format", "eetrack.pomdp"},
          {"version", kPomdpFormatVersion},
          {"states", states},
          {"time_bins", kMinutesPerDay},
          {"speed_bin_edges", m.bins.upper_edges},
          {"transition", matrix_json(m.transition)},
          {"observation",
           {{"smoothing", m.smoothing},
            {"cell_layout", {"state", "minute", "phys_activity", "speed_bin", "count"}},
            {"cells", cells}}},
          {"rewards", matrix_json(m.rewards)}};
}

inline PomdpModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "eetrack.pomdp") throw SchemaError("not a POMDP model file");
  if (j.value("version", 0) != kPomdpFormatVersion) throw SchemaError("unsupported POMDP model version");
  if (j.value("time_bins", 0) != kMinutesPerDay) throw SchemaError("model time bins must be 1440");
  PomdpModel m;
  for (const auto& s : j.at("states")) m.states.push_back({s.at("name").get<std::string>(), s.at("code").get<int>()});
  model_detail::index_states(m.states);
  m.bins.upper_edges = j.at("speed_bin_edges").get<std::vector<double>>();
  m.bins.validate();
  const std::size_t n = m.num_states();
  auto read_matrix = [n](const nlohmann::json& rows, const char* what) {
    Matrix mat(n, n);
    if (rows.size() != n) throw SchemaError(std::string(what) + " must have one row per state");
    for (std::size_t r = 0; r < n; ++r) {
      const auto row = rows[r].get<std::vector<double>>();
      if (row.size() != n) throw SchemaError(std::string(what) + " must be square");
      std::copy(row.begin(), row.end(), mat.data.begin() + static_cast<std::ptrdiff_t>(r * n));
    }
    return mat;
  };
  m.transition = read_matrix(j.at("transition"), "transition");
  for (std::size_t r = 0; r < n; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (m.transition(r, c) < 0.0) throw SchemaError("negative transition probability");
      sum += m.transition(r, c);
    }
    if (std::abs(sum - 1.0) > 1e-9) throw SchemaError("transition row " + std::to_string(r) + " does not sum to 1");
  }
  m.rewards = read_matrix(j.at("rewards"), "rewards");
  for (double r : m.rewards.data) {
    if (!std::isfinite(r)) throw SchemaError("rewards must be finite");
  }
  const auto& obs = j.at("observation");
  m.smoothing = obs.at("smoothing").get<SmoothingParams>();
  m.raw_counts = ObservationTensor(n, m.bins.size());
  for (const auto& c : obs.at("cells")) {
    const auto s = c.at(0).get<std::size_t>();
    const auto t = c.at(1).get<std::size_t>();
    const auto a = physical_activity_or_throw(c.at(2).get<std::string>());
    const auto v = c.at(3).get<std::size_t>();
    const auto count = c.at(4).get<double>();
    if (s >= n || t >= static_cast<std::size_t>(kMinutesPerDay) || v >= m.bins.size() || count < 0.0) {
      throw SchemaError("observation cell out of range");
    }
    m.raw_counts.at(s, t, index_of(a), v) = count;
  }
  m.observation = smooth_observation(m.raw_counts, m.smoothing);
  return m;
}

}  // namespace eetrack::pomdp
