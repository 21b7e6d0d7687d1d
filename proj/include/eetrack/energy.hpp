#pragma once

// Energy expenditure from daily activities via MET values:
// kcal = weight_kg * MET * hours, since 1 MET = 1 kcal / kg / h.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eetrack/activity.hpp"
#include "eetrack/detail/csv.hpp"
#include "eetrack/error.hpp"

namespace eetrack::energy {

struct CompendiumEntry {
  std::string description;
  double met = 0.0;

  double kcal_per_kg_hour() const noexcept { return met; }
};

class Compendium {
 public:
  void add(int code, CompendiumEntry entry) {
    if (!(entry.met > 0.0)) throw InvalidParameter("MET must be > 0 for code " + std::to_string(code));
    if (!entries_.emplace(code, std::move(entry)).second) {
      throw InvalidParameter("duplicate compendium code " + std::to_string(code));
    }
  }

  bool contains(int code) const { return entries_.count(code) != 0; }

  const CompendiumEntry& at(int code) const {
    auto it = entries_.find(code);
    if (it == entries_.end()) throw InvalidParameter("unknown compendium code " + std::to_string(code));
    return it->second;
  }

  double met(int code) const { return at(code).met; }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::map<int, CompendiumEntry>& entries() const noexcept { return entries_; }

 private:
  std::map<int, CompendiumEntry> entries_;
};

/// The seventeen compendium rows used by the default activity catalogue.
inline constexpr const char* kBundledCompendiumCsv =
    "code,description,met\n"
    "5035,\"kitchen activity, general, (e.g. cooking, washing dishes, cleaning up), moderate effort\",3.3\n"
    "7025,\"sitting, listening to music (not talking or reading) or watching a movie in a theater\",1.5\n"
    "7030,sleeping,1.0\n"
    "7040,\"standing quietly, standing in a line\",1.3\n"
    "9045,\"sitting, playing traditional video game, computer game\",1.0\n"
    "9055,\"sitting, talking in person, on the phone, computer, or text messaging, light effort\",1.5\n"
    "9070,\"standing, reading\",1.8\n"
    "10074,\"playing musical instruments, general\",2.0\n"
    "11580,\"sitting tasks, light effort (e.g., office work, chemistry lab work, computer work, ...)\",1.5\n"
    "13030,\"eating, sitting\",1.5\n"
    "13040,\"grooming, washing hands, shaving, brushing teeth, putting on make-up, sitting or standing\",2.0\n"
    "16016,riding in a bus or train,1.3\n"
    "17070,descending stairs,3.5\n"
    "17133,\"stair climbing, slow pace\",4.0\n"
    "17151,\"walking, less than 3.2 km/h, level, strolling, very slow\",2.0\n"
    "17152,\"walking, 3.2 km/h, level, slow pace, firm surface\",2.0\n"
    "17190,\"walking, 4.5 to 5.1 km/h, level, moderate pace, firm surface\",3.5\n";

/// CSV with header `code,description,met`. Errors carry the line number.
inline Compendium parse_compendium(detail::CsvReader reader) {
  std::vector<std::string> f;
  if (!reader.next(f)) reader.fail("empty compendium");
  if (f.size() != 3 || detail::trim(f[0]) != "code" || detail::trim(f[1]) != "description" || detail::trim(f[2]) != "met") {
    reader.fail("header must be 'code,description,met'");
  }
  Compendium c;
  while (reader.next(f)) {
    if (f.size() != 3) reader.fail("expected 3 fields, got " + std::to_string(f.size()));
    long long code = 0;
    if (!detail::try_parse_long(f[0], code)) reader.fail("bad activity code '" + f[0] + "'");
    double met = 0.0;
    if (!detail::try_parse_double(f[2], met) || !std::isfinite(met)) reader.fail("bad MET value '" + f[2] + "'");
    if (!(met > 0.0)) reader.fail("MET must be > 0");
    if (c.contains(static_cast<int>(code))) reader.fail("duplicate code " + std::to_string(code));
    c.add(static_cast<int>(code), {std::string(detail::trim(f[1])), met});
  }
  return c;
}

inline Compendium load_compendium(const std::string& path) { return parse_compendium(detail::CsvReader::from_file(path)); }

inline Compendium bundled_compendium() { return parse_compendium(detail::CsvReader("<bundled>", kBundledCompendiumCsv)); }

struct MinuteEnergy {
  int minute = 0;
  int code = 0;
  double met = 0.0;
  std::string activity;  // optional; delimits segments in ee_error
};

struct EnergyTimeline {
  std::vector<MinuteEnergy> minutes;
  std::vector<double> cumulative_kcal;
  double weight_kg = 0.0;

  double total_kcal() const { return cumulative_kcal.empty() ? 0.0 : cumulative_kcal.back(); }
  std::size_t size() const noexcept { return minutes.size(); }
};

/// cumulative[m] = weight * (sum of MET over minutes <= m) / 60. The MET sum
/// is accumulated independently of the weight, so scaling the weight by a
/// power of two scales every value exactly.
inline EnergyTimeline make_timeline(std::vector<MinuteEnergy> minutes, double weight_kg) {
  if (!(weight_kg > 0.0)) throw InvalidParameter("subject weight must be > 0");
  EnergyTimeline tl;
  tl.weight_kg = weight_kg;
  tl.minutes = std::move(minutes);
  tl.cumulative_kcal.reserve(tl.minutes.size());
  double met_minutes = 0.0;
  for (const auto& m : tl.minutes) {
    met_minutes += m.met;
    tl.cumulative_kcal.push_back(weight_kg * met_minutes / 60.0);
  }
  return tl;
}

/// One activity bout. `phys_activity` and `speed_kmh` only matter for the
/// speed-as-multiplier arithmetic.
struct EnergySegment {
  int code = 0;
  double minutes = 0.0;
  double speed_kmh = 0.0;
  std::optional<PhysicalActivity> phys_activity;
  std::string activity;
};

struct EeOptions {
  /// Use the walking speed in km/h in place of the MET value for walking
  /// bouts, reproducing the shortcut arithmetic some MET worked examples use.
  bool met_from_speed = false;
  int start_minute = 0;
};

struct EnergyEstimate {
  double total_kcal = 0.0;
  EnergyTimeline timeline;
};

/// Whole minutes a bout occupies on the 1-minute grid: fractional durations
/// round up, zero stays zero.
inline long long grid_minutes(double minutes) {
  if (!(minutes >= 0.0) || !std::isfinite(minutes)) throw InvalidParameter("segment duration must be >= 0");
  return static_cast<long long>(std::ceil(minutes - 1e-9));
}

inline double segment_met(const EnergySegment& seg, const Compendium& compendium, const EeOptions& opts) {
  const double met = compendium.met(seg.code);
  if (opts.met_from_speed && seg.phys_activity == PhysicalActivity::walk && seg.speed_kmh > 0.0) return seg.speed_kmh;
  return met;
}

/// total = weight * sum(MET * minutes) / 60, plus the per-minute cumulative
/// series.
inline EnergyEstimate estimate_ee(const std::vector<EnergySegment>& segments, double weight_kg, const Compendium& compendium,
                                  const EeOptions& opts = {}) {
  if (!(weight_kg > 0.0)) throw InvalidParameter("subject weight must be > 0");
  std::vector<MinuteEnergy> minutes;
  double met_minutes = 0.0;
  int minute = opts.start_minute;
  for (const auto& seg : segments) {
    if (!compendium.contains(seg.code)) throw InvalidParameter("unknown compendium code " + std::to_string(seg.code));
    const double met = segment_met(seg, compendium, opts);
    const auto n = grid_minutes(seg.minutes);
    met_minutes += met * static_cast<double>(n);
    for (long long i = 0; i < n; ++i) minutes.push_back({minute++, seg.code, met, seg.activity});
  }
  EnergyEstimate est;
  est.total_kcal = weight_kg * met_minutes / 60.0;
  est.timeline = make_timeline(std::move(minutes), weight_kg);
  return est;
}

/// Per-minute timeline from per-minute activity codes.
inline EnergyTimeline timeline_from_codes(const std::vector<int>& minute_index, const std::vector<int>& codes,
                                          const std::vector<std::string>& activities, double weight_kg,
                                          const Compendium& compendium) {
  if (minute_index.size() != codes.size() || (!activities.empty() && activities.size() != codes.size())) {
    throw InvalidParameter("timeline columns differ in length");
  }
  std::vector<MinuteEnergy> minutes;
  minutes.reserve(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    minutes.push_back({minute_index[i], codes[i], compendium.met(codes[i]), activities.empty() ? "" : activities[i]});
  }
  return make_timeline(std::move(minutes), weight_kg);
}

struct EEMetrics {
  double mean_absolute_pct = 0.0;
  double end_of_day_pct = 0.0;
  double min_pct = 0.0;
  double max_pct = 0.0;
  std::size_t segments_compared = 0;
  std::size_t segments_excluded = 0;
};

/// Percentage differences of predicted vs expected energy.
///
/// The expected timeline is cut into contiguous segments (a new segment
/// starts whenever the expected activity name or code changes). For each,
/// 100 * (predicted - expected) / expected over the segment's minutes gives
/// one signed difference; mean_absolute_pct averages their magnitudes and
/// min/max are the signed extremes. end_of_day_pct compares the final
/// cumulative values. Segments whose expected energy is 0 are skipped and
/// counted in segments_excluded.
inline EEMetrics ee_error(const EnergyTimeline& predicted, const EnergyTimeline& expected) {
  if (predicted.size() != expected.size()) throw InvalidParameter("timelines cover different minute counts");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (predicted.minutes[i].minute != expected.minutes[i].minute) {
      throw InvalidParameter("timelines cover different minutes (index " + std::to_string(i) + ")");
    }
  }
  EEMetrics m;
  if (expected.size() == 0) return m;
  auto minute_kcal = [](const EnergyTimeline& tl, std::size_t i) { return tl.weight_kg * tl.minutes[i].met / 60.0; };
  bool first = true;
  double abs_sum = 0.0;
  std::size_t i = 0;
  while (i < expected.size()) {
    std::size_t j = i;
    double exp_kcal = 0.0, pred_kcal = 0.0;
    while (j < expected.size() && expected.minutes[j].code == expected.minutes[i].code &&
           expected.minutes[j].activity == expected.minutes[i].activity) {
      exp_kcal += minute_kcal(expected, j);
      pred_kcal += minute_kcal(predicted, j);
      ++j;
    }
    if (exp_kcal == 0.0) {
      ++m.segments_excluded;
    } else {
      const double pct = 100.0 * (pred_kcal - exp_kcal) / exp_kcal;
      abs_sum += std::abs(pct);
      m.min_pct = first ? pct : std::min(m.min_pct, pct);
      m.max_pct = first ? pct : std::max(m.max_pct, pct);
      first = false;
      ++m.segments_compared;
    }
    i = j;
  }
  if (m.segments_compared) m.mean_absolute_pct = abs_sum / static_cast<double>(m.segments_compared);
  const double exp_total = expected.total_kcal();
  if (exp_total != 0.0) m.end_of_day_pct = 100.0 * (predicted.total_kcal() - exp_total) / exp_total;
  return m;
}

inline std::string ee_metrics_table(const EEMetrics& m) {
  auto pct = [](double v, bool sign) {
    std::string s = detail::format_fixed(v, 1) + "%";
    if (sign && v > 0.0) s.insert(0, "+");
    return s;
  };
  return "Mean Absolute | Mean At the End of the Day | Min | Max\n" + pct(m.mean_absolute_pct, false) + " | " +
         pct(m.end_of_day_pct, true) + " | " + pct(m.min_pct, true) + " | " + pct(m.max_pct, true) + "\n";
}

inline std::string timeline_csv_string(const EnergyTimeline& tl) {
  std::string out = "minute,code,met,cumulative_kcal\n";
  for (std::size_t i = 0; i < tl.size(); ++i) {
    out += std::to_string(tl.minutes[i].minute) + "," + std::to_string(tl.minutes[i].code) + "," +
           detail::format_double(tl.minutes[i].met) + "," + detail::format_double(tl.cumulative_kcal[i]) + "\n";
  }
  return out;
}

/// Expected vs predicted cumulative curves, one row per minute.
inline std::string plot_data_csv_string(const EnergyTimeline& expected, const EnergyTimeline& predicted) {
  if (expected.size() != predicted.size()) throw InvalidParameter("timelines cover different minute counts");
  std::string out = "minute,expected_kcal,predicted_kcal\n";
  for (std::size_t i = 0; i < expected.size(); ++i) {
    out += std::to_string(expected.minutes[i].minute) + "," + detail::format_double(expected.cumulative_kcal[i]) + "," +
           detail::format_double(predicted.cumulative_kcal[i]) + "\n";
  }
  return out;
}

/// Line chart of both cumulative curves (expected blue, predicted orange).
inline std::string plot_svg_string(const EnergyTimeline& expected, const EnergyTimeline& predicted) {
  if (expected.size() != predicted.size()) throw InvalidParameter("timelines cover different minute counts");
  const double w = 800, h = 400, pad = 50;
  double ymax = std::max(expected.total_kcal(), predicted.total_kcal());
  if (!(ymax > 0.0)) ymax = 1.0;
  const double xmin = expected.size() ? expected.minutes.front().minute : 0;
  double xmax = expected.size() ? expected.minutes.back().minute : 1;
  if (!(xmax > xmin)) xmax = xmin + 1;
  auto px = [&](double x) { return detail::format_fixed(pad + (x - xmin) / (xmax - xmin) * (w - 2 * pad), 2); };
  auto py = [&](double y) { return detail::format_fixed(h - pad - y / ymax * (h - 2 * pad), 2); };
  auto polyline = [&](const EnergyTimeline& tl, const char* colour) {
    std::string pts;
    for (std::size_t i = 0; i < tl.size(); ++i) {
      if (i) pts += ' ';
      pts += px(tl.minutes[i].minute) + "," + py(tl.cumulative_kcal[i]);
    }
    return std::string("<polyline fill=\"none\" stroke=\"") + colour + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
  };
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"400\">\n";
  out += "<rect width=\"800\" height=\"400\" fill=\"white\"/>\n";
  out += "<line x1=\"50\" y1=\"350\" x2=\"750\" y2=\"350\" stroke=\"black\"/>\n";
  out += "<line x1=\"50\" y1=\"50\" x2=\"50\" y2=\"350\" stroke=\"black\"/>\n";
  out += "<text x=\"400\" y=\"390\" text-anchor=\"middle\" font-size=\"14\">minute of day</text>\n";
  out += "<text x=\"15\" y=\"200\" font-size=\"14\" transform=\"rotate(-90 15 200)\" text-anchor=\"middle\">cumulative kcal</text>\n";
  out += "<text x=\"45\" y=\"55\" text-anchor=\"end\" font-size=\"12\">" + detail::format_fixed(ymax, 0) + "</text>\n";
  out += polyline(expected, "#1f77b4");
  out += polyline(predicted, "#ff7f0e");
  out += "<text x=\"600\" y=\"70\" font-size=\"12\" fill=\"#1f77b4\">expected</text>\n";
  out += "<text x=\"600\" y=\"88\" font-size=\"12\" fill=\"#ff7f0e\">predicted</text>\n";
  out += "</svg>\n";
  return out;
}

inline std::vector<EnergySegment> read_segments_csv(const std::string& path) {
  auto reader = detail::CsvReader::from_file(path);
  std::vector<std::string> f;
  if (!reader.next(f)) reader.fail("empty segment file");
  if (f.size() < 2 || detail::trim(f[0]) != "code" || detail::trim(f[1]) != "minutes") {
    reader.fail("header must start with 'code,minutes' (optional: speed_kmh,phys_activity)");
  }
  const std::size_t width = f.size();
  std::vector<EnergySegment> out;
  while (reader.next(f)) {
    if (f.size() != width) reader.fail("row width differs from header");
    EnergySegment s;
    s.code = static_cast<int>(detail::parse_long(f[0], path, reader.line()));
    s.minutes = detail::parse_double(f[1], path, reader.line());
    if (width > 2) s.speed_kmh = detail::parse_double(f[2], path, reader.line());
    if (width > 3 && !detail::trim(f[3]).empty()) {
      s.phys_activity = parse_physical_activity(detail::trim(f[3]));
      if (!s.phys_activity) reader.fail("unknown physical activity '" + f[3] + "'");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace eetrack::energy
