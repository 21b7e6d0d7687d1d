#pragma once

// Inertial signal pre-processing: band-pass filtering, sliding-window
// segmentation and per-window time/frequency feature extraction.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eetrack/activity.hpp"
#include "eetrack/detail/csv.hpp"
#include "eetrack/detail/fft.hpp"
#include "eetrack/detail/hash.hpp"
#include "eetrack/error.hpp"

namespace eetrack::signal {

inline constexpr double kDefaultSampleRate = 50.0;

/// Channel ids in the order of the sensor CSV header:
/// accelerometer, gyroscope, magnetometer, three axes each.
inline const std::vector<std::string>& default_channels() {
  static const std::vector<std::string> ids = {"ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz"};
  return ids;
}

/// Timestamped multi-channel samples at a fixed rate. Values are stored
/// row-major: sample i, channel c is `values[i * channels.size() + c]`.
struct SensorStream {
  double sample_rate = kDefaultSampleRate;
  std::vector<std::string> channels;
  std::vector<double> timestamps;
  std::vector<double> values;
  std::optional<PhysicalActivity> label;
  std::string source;  // file name or generator tag, used in error messages

  std::size_t num_samples() const noexcept { return timestamps.size(); }
  std::size_t num_channels() const noexcept { return channels.size(); }
  double at(std::size_t i, std::size_t c) const { return values[i * channels.size() + c]; }

  std::vector<double> channel(std::size_t c) const {
    std::vector<double> out(num_samples());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i, c);
    return out;
  }

  void validate() const {
    if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) throw InvalidParameter("sample_rate must be > 0");
    if (values.size() != timestamps.size() * channels.size()) {
      throw SchemaError("stream '" + source + "': every sample needs exactly one value per channel");
    }
    for (std::size_t i = 1; i < timestamps.size(); ++i) {
      if (!(timestamps[i] > timestamps[i - 1])) {
        throw SchemaError("stream '" + source + "': timestamps not strictly increasing at sample " + std::to_string(i));
      }
    }
  }
};

/// A fixed-length slice of a filtered stream.
struct Window {
  std::size_t start_index = 0;
  std::size_t length = 0;
  std::vector<std::string> channels;
  std::vector<double> values;  // length x channels, row-major
  std::optional<PhysicalActivity> label;

  std::size_t num_channels() const noexcept { return channels.size(); }
  double at(std::size_t i, std::size_t c) const { return values[i * channels.size() + c]; }

  std::vector<double> channel(std::size_t c) const {
    std::vector<double> out(length);
    for (std::size_t i = 0; i < length; ++i) out[i] = at(i, c);
    return out;
  }
};

/// Names one feature column. `channel` is a channel id ("ax"), a sensor id
/// ("a") or a channel pair ("ax:ay").
struct FeatureDescriptor {
  std::string feature;
  std::string channel;

  std::string name() const { return channel + "." + feature; }
  friend bool operator==(const FeatureDescriptor&, const FeatureDescriptor&) = default;
};

using FeatureSchema = std::vector<FeatureDescriptor>;

inline std::uint64_t schema_hash(const FeatureSchema& schema) {
  std::uint64_t h = detail::fnv1a64("");
  for (const auto& d : schema) h = detail::fnv1a64(d.name() + "\n", h);
  return h;
}

struct FeatureVector {
  std::vector<double> values;
  FeatureSchema schema;

  void append(const FeatureVector& other) {
    values.insert(values.end(), other.values.begin(), other.values.end());
    schema.insert(schema.end(), other.schema.begin(), other.schema.end());
  }
};

struct FeatureMatrix {
  FeatureSchema schema;
  std::vector<std::vector<double>> rows;
  std::vector<PhysicalActivity> labels;  // empty, or one per row

  std::size_t num_rows() const noexcept { return rows.size(); }
  std::size_t num_features() const noexcept { return schema.size(); }

  void validate() const {
    if (!labels.empty() && labels.size() != rows.size()) throw SchemaError("feature matrix: label count differs from row count");
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != schema.size()) {
        throw SchemaError("feature matrix: row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) +
                          " values, schema has " + std::to_string(schema.size()));
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

/// One second-order section, transposed direct form II, a0 normalised to 1.
/// First-order sections have b2 = a2 = 0.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }

  std::complex<double> response(double omega) const {
    const std::complex<double> z1 = std::polar(1.0, -omega);
    const std::complex<double> z2 = z1 * z1;
    return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
  }
};

enum class FilterKind { lowpass, highpass };

/// Digital Butterworth filter of the given order as a cascade of sections.
///
/// The analog prototype has poles on the unit circle at angles
/// theta_k = (2k-1)pi/(2n) from the imaginary axis; conjugate pairs become
/// second-order sections with Q = 1 / (2 sin theta_k) and an odd order adds
/// one first-order section.
/// Each section is mapped with the bilinear transform after pre-warping the
/// cutoff, K = tan(pi fc / fs), so the -3 dB point lands exactly on fc.
inline std::vector<Biquad> butterworth_sections(FilterKind kind, int order, double cutoff_hz, double sample_rate) {
  if (order < 1) throw InvalidParameter("filter order must be >= 1");
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < sample_rate / 2.0)) {
    throw InvalidParameter("cutoff must lie in (0, Nyquist)");
  }
  const double k = std::tan(std::numbers::pi * cutoff_hz / sample_rate);
  const double k2 = k * k;
  std::vector<Biquad> sections;
  for (int i = 1; i <= order / 2; ++i) {
    const double theta = (2.0 * i - 1.0) * std::numbers::pi / (2.0 * order);
    const double q = 1.0 / (2.0 * std::sin(theta));
    const double norm = 1.0 / (1.0 + k / q + k2);
    Biquad s;
    if (kind == FilterKind::lowpass) {
      s.b0 = k2 * norm;
      s.b1 = 2.0 * s.b0;
      s.b2 = s.b0;
    } else {
      s.b0 = norm;
      s.b1 = -2.0 * norm;
      s.b2 = norm;
    }
    s.a1 = 2.0 * (k2 - 1.0) * norm;
    s.a2 = (1.0 - k / q + k2) * norm;
    sections.push_back(s);
  }
  if (order % 2 == 1) {
    Biquad s;
    const double norm = 1.0 / (1.0 + k);
    if (kind == FilterKind::lowpass) {
      s.b0 = k * norm;
      s.b1 = k * norm;
    } else {
      s.b0 = norm;
      s.b1 = -norm;
    }
    s.a1 = (k - 1.0) * norm;
    sections.push_back(s);
  }
  return sections;
}

/// High-pass at `low_hz` followed by low-pass at `high_hz`.
inline std::vector<Biquad> design_bandpass(double low_hz, double high_hz, double sample_rate, int order = 3) {
  if (!(low_hz > 0.0) || !(low_hz < high_hz) || !(high_hz < sample_rate / 2.0)) {
    throw InvalidParameter("band-pass requires 0 < low_hz < high_hz < sample_rate/2");
  }
  auto sections = butterworth_sections(FilterKind::highpass, order, low_hz, sample_rate);
  auto lp = butterworth_sections(FilterKind::lowpass, order, high_hz, sample_rate);
  sections.insert(sections.end(), lp.begin(), lp.end());
  return sections;
}

inline double magnitude_response(std::span<const Biquad> sections, double freq_hz, double sample_rate) {
  const double omega = 2.0 * std::numbers::pi * freq_hz / sample_rate;
  std::complex<double> h = 1.0;
  for (const auto& s : sections) h *= s.response(omega);
  return std::abs(h);
}

/// Causal cascade filter. State starts at the steady state for a constant
/// input equal to the first sample, which suppresses the start-up transient
/// of the gravity offset and keeps the map linear in the input.
inline std::vector<double> filter_sos(std::span<const Biquad> sections, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  if (y.empty()) return y;
  for (const auto& s : sections) {
    const double x0 = y.front();
    const double y0 = s.dc_gain() * x0;
    double z1 = y0 - s.b0 * x0;
    double z2 = s.b2 * x0 - s.a2 * y0;
    for (double& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return y;
}

inline SensorStream bandpass_filter(const SensorStream& stream, double low_hz, double high_hz, int order = 3) {
  const auto sections = design_bandpass(low_hz, high_hz, stream.sample_rate, order);
  SensorStream out = stream;
  const std::size_t nc = stream.num_channels();
  for (std::size_t c = 0; c < nc; ++c) {
    const auto filtered = filter_sos(sections, stream.channel(c));
    for (std::size_t i = 0; i < filtered.size(); ++i) out.values[i * nc + c] = filtered[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

inline std::size_t window_step(std::size_t window_len, double overlap) {
  const double raw = std::floor(static_cast<double>(window_len) * (1.0 - overlap) + 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(raw));
}

inline std::size_t window_count(std::size_t num_samples, std::size_t window_len, double overlap) {
  if (num_samples < window_len) return 0;
  return (num_samples - window_len) / window_step(window_len, overlap) + 1;
}

/// Window i starts at i * step with step = floor(window_len * (1 - overlap));
/// a trailing partial window is dropped.
inline std::vector<Window> segment_windows(const SensorStream& stream, std::size_t window_len, double overlap) {
  if (window_len < 2) throw InvalidParameter("window_len must be >= 2");
  if (!(overlap >= 0.0) || !(overlap < 1.0)) throw InvalidParameter("overlap must lie in [0, 1)");
  const std::size_t nc = stream.num_channels();
  const std::size_t step = window_step(window_len, overlap);
  const std::size_t count = window_count(stream.num_samples(), window_len, overlap);
  std::vector<Window> windows;
  windows.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    Window win;
    win.start_index = w * step;
    win.length = window_len;
    win.channels = stream.channels;
    win.label = stream.label;
    const auto first = stream.values.begin() + static_cast<std::ptrdiff_t>(win.start_index * nc);
    win.values.assign(first, first + static_cast<std::ptrdiff_t>(window_len * nc));
    windows.push_back(std::move(win));
  }
  return windows;
}

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

/// Channels grouped by sensor: the sensor id is the channel id without its
/// trailing axis letter ("ax" -> "a"). Groups keep first-appearance order.
struct SensorGroup {
  std::string sensor;
  std::vector<std::size_t> channel_indices;
};

inline std::vector<SensorGroup> group_sensors(const std::vector<std::string>& channels) {
  std::vector<SensorGroup> groups;
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const std::string sensor = channels[c].size() > 1 ? channels[c].substr(0, channels[c].size() - 1) : channels[c];
    auto it = std::find_if(groups.begin(), groups.end(), [&](const SensorGroup& g) { return g.sensor == sensor; });
    if (it == groups.end()) {
      groups.push_back({sensor, {c}});
    } else {
      it->channel_indices.push_back(c);
    }
  }
  return groups;
}

struct FeatureOptions {
  int ar_order = 4;
  bool hamming = true;
};

inline double mean_of(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double population_stddev(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size()));
}

inline double mean_square(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return s / static_cast<double>(x.size());
}

/// Pearson correlation; 0 when either side has zero variance.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Burg estimate of the prediction polynomial 1 + a1 z^-1 + ... + ap z^-p
/// on the mean-removed signal. Returns a1..ap; a constant signal gives zeros.
inline std::vector<double> burg_ar(std::span<const double> x, int order) {
  const std::size_t n = x.size();
  const double m = mean_of(x);
  std::vector<double> f(n), b(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = b[i] = x[i] - m;
  std::vector<double> a{1.0};
  for (int k = 0; k < order; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    double num = 0.0, den = 0.0;
    for (std::size_t i = kk + 1; i < n; ++i) {
      num += f[i] * b[i - 1];
      den += f[i] * f[i] + b[i - 1] * b[i - 1];
    }
    const double mu = den > 0.0 ? -2.0 * num / den : 0.0;
    std::vector<double> next(a.size() + 1, 0.0);
    next[0] = 1.0;
    for (std::size_t i = 1; i < a.size(); ++i) next[i] = a[i] + mu * a[a.size() - i];
    next[a.size()] = mu;
    a = std::move(next);
    for (std::size_t i = n; i-- > kk + 1;) {
      const double fi = f[i] + mu * b[i - 1];
      const double bi = b[i - 1] + mu * f[i];
      f[i] = fi;
      b[i] = bi;
    }
  }
  return {a.begin() + 1, a.end()};
}

/// Time-domain block: per channel mean, std, energy and AR coefficients,
/// then per sensor SMA, total energy and axis-pair correlations.
inline FeatureVector extract_time_features(const Window& window, const FeatureOptions& opts = {}) {
  FeatureVector fv;
  const std::size_t nc = window.num_channels();
  std::vector<std::vector<double>> cols(nc);
  std::vector<double> energy(nc);
  for (std::size_t c = 0; c < nc; ++c) cols[c] = window.channel(c);

  for (std::size_t c = 0; c < nc; ++c) {
    const auto& id = window.channels[c];
    energy[c] = mean_square(cols[c]);
    fv.values.push_back(mean_of(cols[c]));
    fv.schema.push_back({"mean", id});
    fv.values.push_back(population_stddev(cols[c]));
    fv.schema.push_back({"std", id});
    fv.values.push_back(energy[c]);
    fv.schema.push_back({"energy", id});
    const auto ar = burg_ar(cols[c], opts.ar_order);
    for (std::size_t k = 0; k < ar.size(); ++k) {
      fv.values.push_back(ar[k]);
      fv.schema.push_back({"ar" + std::to_string(k + 1), id});
    }
  }

  for (const auto& g : group_sensors(window.channels)) {
    double sma = 0.0;
    for (std::size_t i = 0; i < window.length; ++i) {
      for (std::size_t c : g.channel_indices) sma += std::abs(cols[c][i]);
    }
    sma = window.length ? sma / static_cast<double>(window.length) : 0.0;
    double total = 0.0;
    for (std::size_t c : g.channel_indices) total += energy[c];
    fv.values.push_back(sma);
    fv.schema.push_back({"sma", g.sensor});
    fv.values.push_back(total);
    fv.schema.push_back({"total_energy", g.sensor});
    for (std::size_t i = 0; i < g.channel_indices.size(); ++i) {
      for (std::size_t j = i + 1; j < g.channel_indices.size(); ++j) {
        const auto ci = g.channel_indices[i], cj = g.channel_indices[j];
        fv.values.push_back(pearson(cols[ci], cols[cj]));
        fv.schema.push_back({"corr", window.channels[ci] + ":" + window.channels[cj]});
      }
    }
  }
  return fv;
}

inline std::vector<double> hamming_window(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return w;
}

struct SpectralStats {
  double skewness = 0.0;
  double entropy = 0.0;
  double energy = 0.0;
};

/// Spectral statistics of one channel.
///
/// The signal is optionally Hamming-tapered, then transformed. Skewness and
/// entropy treat the one-sided magnitudes |X_k|, k = 0..N/2, normalised to
/// sum to 1, as a distribution over bin frequency. Energy is
/// sum_k |X_k|^2 / N^2 over the full spectrum, which by Parseval equals the
/// mean square of the (tapered) time signal.
inline SpectralStats spectral_stats(std::span<const double> x, bool hamming) {
  const std::size_t n = x.size();
  if (!detail::is_power_of_two(n)) throw InvalidParameter("spectral features need a power-of-two window length");
  std::vector<double> xs(x.begin(), x.end());
  if (hamming) {
    const auto w = hamming_window(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] *= w[i];
  }
  const auto spec = detail::fft_real(xs);
  SpectralStats st;
  double power = 0.0;
  for (const auto& c : spec) power += std::norm(c);
  st.energy = power / (static_cast<double>(n) * static_cast<double>(n));

  const std::size_t half = n / 2 + 1;
  std::vector<double> mag(half);
  double total = 0.0;
  for (std::size_t k = 0; k < half; ++k) {
    mag[k] = std::abs(spec[k]);
    total += mag[k];
  }
  if (!(total > 0.0)) return st;
  double mu = 0.0;
  for (std::size_t k = 0; k < half; ++k) {
    const double p = mag[k] / total;
    mu += p * static_cast<double>(k);
    if (p > 0.0) st.entropy -= p * std::log(p);
  }
  double m2 = 0.0, m3 = 0.0;
  for (std::size_t k = 0; k < half; ++k) {
    const double p = mag[k] / total;
    const double d = static_cast<double>(k) - mu;
    m2 += p * d * d;
    m3 += p * d * d * d;
  }
  st.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  return st;
}

/// Frequency-domain block: per channel skewness, entropy and energy, then
/// per sensor total spectral energy.
inline FeatureVector extract_freq_features(const Window& window, const FeatureOptions& opts = {}) {
  FeatureVector fv;
  const std::size_t nc = window.num_channels();
  std::vector<double> energy(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    const auto& id = window.channels[c];
    const auto st = spectral_stats(window.channel(c), opts.hamming);
    energy[c] = st.energy;
    fv.values.push_back(st.skewness);
    fv.schema.push_back({"spec_skewness", id});
    fv.values.push_back(st.entropy);
    fv.schema.push_back({"spec_entropy", id});
    fv.values.push_back(st.energy);
    fv.schema.push_back({"spec_energy", id});
  }
  for (const auto& g : group_sensors(window.channels)) {
    double total = 0.0;
    for (std::size_t c : g.channel_indices) total += energy[c];
    fv.values.push_back(total);
    fv.schema.push_back({"spec_total_energy", g.sensor});
  }
  return fv;
}

inline FeatureVector extract_features(const Window& window, const FeatureOptions& opts = {}) {
  FeatureVector fv = extract_time_features(window, opts);
  fv.append(extract_freq_features(window, opts));
  return fv;
}

// ---------------------------------------------------------------------------
// Matrix construction
// ---------------------------------------------------------------------------

struct FeatureConfig {
  double sample_rate = kDefaultSampleRate;
  std::vector<std::string> channels = default_channels();  // subset to keep, in this order
  double low_hz = 0.3;
  double high_hz = 20.0;
  int filter_order = 3;
  std::size_t window_len = 128;
  double overlap = 0.5;
  FeatureOptions features;

  void validate() const {
    if (!(sample_rate > 0.0)) throw InvalidParameter("sample_rate must be > 0");
    if (channels.empty()) throw InvalidParameter("channel selection is empty");
    if (!(low_hz > 0.0) || !(low_hz < high_hz) || !(high_hz < sample_rate / 2.0)) {
      throw InvalidParameter("filter band must satisfy 0 < low_hz < high_hz < sample_rate/2");
    }
    if (filter_order < 1) throw InvalidParameter("filter_order must be >= 1");
    if (!detail::is_power_of_two(window_len) || window_len < 2) {
      throw InvalidParameter("window_len must be a power of two >= 2");
    }
    if (!(overlap >= 0.0) || !(overlap < 1.0)) throw InvalidParameter("overlap must lie in [0, 1)");
    if (features.ar_order < 0) throw InvalidParameter("ar_order must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const FeatureConfig& c) {
  j = {{"sample_rate", c.sample_rate}, {"channels", c.channels},     {"low_hz", c.low_hz},
       {"high_hz", c.high_hz},         {"filter_order", c.filter_order}, {"window_len", c.window_len},
       {"overlap", c.overlap},         {"ar_order", c.features.ar_order}, {"hamming", c.features.hamming}};
}

inline void from_json(const nlohmann::json& j, FeatureConfig& c) {
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.channels = j.value("channels", c.channels);
  c.low_hz = j.value("low_hz", c.low_hz);
  c.high_hz = j.value("high_hz", c.high_hz);
  c.filter_order = j.value("filter_order", c.filter_order);
  c.window_len = j.value("window_len", c.window_len);
  c.overlap = j.value("overlap", c.overlap);
  c.features.ar_order = j.value("ar_order", c.features.ar_order);
  c.features.hamming = j.value("hamming", c.features.hamming);
}

/// Keeps the configured channels, in configured order.
inline SensorStream select_channels(const SensorStream& s, const std::vector<std::string>& wanted) {
  std::vector<std::size_t> idx;
  for (const auto& w : wanted) {
    auto it = std::find(s.channels.begin(), s.channels.end(), w);
    if (it == s.channels.end()) throw SchemaError("session '" + s.source + "' lacks channel '" + w + "'");
    idx.push_back(static_cast<std::size_t>(it - s.channels.begin()));
  }
  SensorStream out;
  out.sample_rate = s.sample_rate;
  out.channels = wanted;
  out.timestamps = s.timestamps;
  out.label = s.label;
  out.source = s.source;
  out.values.resize(s.num_samples() * wanted.size());
  for (std::size_t i = 0; i < s.num_samples(); ++i) {
    for (std::size_t k = 0; k < idx.size(); ++k) out.values[i * wanted.size() + k] = s.at(i, idx[k]);
  }
  return out;
}

/// filter -> segment -> extract for every session, rows concatenated in order.
inline FeatureMatrix build_feature_matrix(const std::vector<SensorStream>& sessions, const FeatureConfig& config = {}) {
  config.validate();
  FeatureMatrix m;
  if (sessions.empty()) return m;
  const auto& reference = sessions.front().channels;
  bool any_label = false, all_label = true;
  for (std::size_t s = 0; s < sessions.size(); ++s) {
    const auto& sess = sessions[s];
    const std::string name = "session " + std::to_string(s) + (sess.source.empty() ? "" : " ('" + sess.source + "')");
    if (sess.channels != reference) throw SchemaError(name + ": channel layout differs from session 0");
    if (sess.sample_rate != config.sample_rate) {
      throw SchemaError(name + ": sample rate " + detail::format_double(sess.sample_rate) + " differs from configured " +
                        detail::format_double(config.sample_rate));
    }
    sess.validate();
    any_label = any_label || sess.label.has_value();
    all_label = all_label && sess.label.has_value();
  }
  if (any_label && !all_label) throw SchemaError("either every session or none must carry a label");

  for (const auto& sess : sessions) {
    const auto filtered = bandpass_filter(select_channels(sess, config.channels), config.low_hz, config.high_hz,
                                          config.filter_order);
    for (const auto& w : segment_windows(filtered, config.window_len, config.overlap)) {
      auto fv = extract_features(w, config.features);
      if (m.schema.empty()) m.schema = fv.schema;
      m.rows.push_back(std::move(fv.values));
      if (w.label) m.labels.push_back(*w.label);
    }
  }
  if (m.schema.empty()) {
    // No session was long enough for a window; still record the schema.
    Window probe;
    probe.length = config.window_len;
    probe.channels = config.channels;
    probe.values.assign(config.window_len * config.channels.size(), 0.0);
    m.schema = extract_features(probe, config.features).schema;
  }
  return m;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Label encoded in the file name: "<label>.csv" or "<label>_<anything>.csv".
inline std::optional<PhysicalActivity> label_from_filename(const std::string& path) {
  const std::string stem = std::filesystem::path(path).stem().string();
  const auto cut = stem.find_first_of("_-");
  return parse_physical_activity(stem.substr(0, cut));
}

/// Reads `t,<channel>,...`. Channel ids are taken from the header.
inline SensorStream read_sensor_csv(const std::string& path, double sample_rate = kDefaultSampleRate,
                                    std::optional<PhysicalActivity> label = std::nullopt) {
  auto reader = detail::CsvReader::from_file(path);
  std::vector<std::string> fields;
  if (!reader.next(fields)) reader.fail("empty sensor file");
  if (fields.empty() || detail::trim(fields[0]) != "t") reader.fail("header must start with 't'");
  SensorStream s;
  s.sample_rate = sample_rate;
  s.source = path;
  s.label = label ? label : label_from_filename(path);
  for (std::size_t i = 1; i < fields.size(); ++i) s.channels.emplace_back(detail::trim(fields[i]));
  if (s.channels.empty()) reader.fail("no channels in header");
  while (reader.next(fields)) {
    if (fields.size() != s.channels.size() + 1) {
      reader.fail("expected " + std::to_string(s.channels.size() + 1) + " fields, got " + std::to_string(fields.size()));
    }
    const double t = detail::parse_double(fields[0], path, reader.line());
    if (!s.timestamps.empty() && !(t > s.timestamps.back())) reader.fail("timestamps must be strictly increasing");
    s.timestamps.push_back(t);
    for (std::size_t i = 1; i < fields.size(); ++i) s.values.push_back(detail::parse_double(fields[i], path, reader.line()));
  }
  return s;
}

inline std::string sensor_csv_string(const SensorStream& s) {
  std::string out = "t";
  for (const auto& c : s.channels) out += "," + c;
  out += '\n';
  for (std::size_t i = 0; i < s.num_samples(); ++i) {
    out += detail::format_double(s.timestamps[i]);
    for (std::size_t c = 0; c < s.num_channels(); ++c) out += "," + detail::format_double(s.at(i, c));
    out += '\n';
  }
  return out;
}

inline void write_sensor_csv(const std::string& path, const SensorStream& s) {
  detail::write_file(path, sensor_csv_string(s));
}

struct ManifestEntry {
  std::string file;
  std::optional<PhysicalActivity> label;
  double sample_rate = kDefaultSampleRate;
};

/// Manifest JSON: one object `{"file", "label", "sample_rate"}` or an array
/// of them. Relative paths resolve against the manifest's directory.
inline std::vector<ManifestEntry> read_sensor_manifest(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path, 0, e.what());
  }
  if (j.is_object()) j = nlohmann::json::array({j});
  if (!j.is_array()) throw ParseError(path, 0, "manifest must be an object or an array of objects");
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<ManifestEntry> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    if (!e.contains("file") || !e["file"].is_string()) {
      throw ParseError(path, 0, "entry " + std::to_string(i) + " lacks a string 'file'");
    }
    ManifestEntry m;
    std::filesystem::path f = e["file"].get<std::string>();
    m.file = (f.is_relative() ? base / f : f).string();
    if (e.contains("label") && !e["label"].is_null()) {
      const auto name = e["label"].get<std::string>();
      m.label = parse_physical_activity(name);
      if (!m.label) throw ParseError(path, 0, "entry " + std::to_string(i) + ": unknown label '" + name + "'");
    }
    m.sample_rate = e.value("sample_rate", kDefaultSampleRate);
    out.push_back(std::move(m));
  }
  return out;
}

inline std::vector<SensorStream> load_manifest_sessions(const std::string& path) {
  std::vector<SensorStream> sessions;
  for (const auto& e : read_sensor_manifest(path)) sessions.push_back(read_sensor_csv(e.file, e.sample_rate, e.label));
  return sessions;
}

inline std::string feature_matrix_csv_string(const FeatureMatrix& m) {
  std::string out;
  for (std::size_t f = 0; f < m.schema.size(); ++f) {
    if (f) out += ',';
    out += m.schema[f].name();
  }
  const bool labels = !m.labels.empty();
  if (labels) out += m.schema.empty() ? "label" : ",label";
  out += '\n';
  for (std::size_t r = 0; r < m.rows.size(); ++r) {
    for (std::size_t f = 0; f < m.rows[r].size(); ++f) {
      if (f) out += ',';
      out += detail::format_double(m.rows[r][f]);
    }
    if (labels) out += "," + std::string(to_string(m.labels[r]));
    out += '\n';
  }
  return out;
}

inline void write_feature_matrix_csv(const std::string& path, const FeatureMatrix& m) {
  detail::write_file(path, feature_matrix_csv_string(m));
}

inline FeatureDescriptor parse_feature_name(const std::string& name) {
  const auto dot = name.rfind('.');
  if (dot == std::string::npos) return {name, ""};
  return {name.substr(dot + 1), name.substr(0, dot)};
}

inline FeatureMatrix read_feature_matrix_csv(const std::string& path) {
  auto reader = detail::CsvReader::from_file(path);
  std::vector<std::string> fields;
  FeatureMatrix m;
  if (!reader.next(fields)) return m;
  bool labels = !fields.empty() && detail::trim(fields.back()) == "label";
  const std::size_t nf = fields.size() - (labels ? 1 : 0);
  for (std::size_t f = 0; f < nf; ++f) m.schema.push_back(parse_feature_name(std::string(detail::trim(fields[f]))));
  while (reader.next(fields)) {
    if (fields.size() != nf + (labels ? 1 : 0)) reader.fail("row width differs from header");
    std::vector<double> row(nf);
    for (std::size_t f = 0; f < nf; ++f) row[f] = detail::parse_double(fields[f], path, reader.line());
    m.rows.push_back(std::move(row));
    if (labels) {
      auto a = parse_physical_activity(detail::trim(fields.back()));
      if (!a) reader.fail("unknown label '" + fields.back() + "'");
      m.labels.push_back(*a);
    }
  }
  return m;
}

inline constexpr char kFeatureCacheMagic[4] = {'E', 'E', 'T', 'F'};
inline constexpr std::uint32_t kFeatureCacheVersion = 1;

namespace cache_detail {
template <class T>
void put(std::string& out, const T& v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}
template <class T>
T get(std::string_view data, std::size_t& pos, const std::string& source) {
  if (pos + sizeof(T) > data.size()) throw ParseError(source, 0, "truncated feature cache");
  T v;
  std::memcpy(&v, data.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}
}  // namespace cache_detail

/// Binary cache: magic "EETF", u32 version, u32 feature count, per feature
/// a u32-length-prefixed name, u64 row count, u8 has-labels, row-major f64
/// values, then one u8 label per row. Host byte order (little-endian).
inline std::string feature_cache_bytes(const FeatureMatrix& m) {
  using cache_detail::put;
  std::string out(kFeatureCacheMagic, 4);
  put(out, kFeatureCacheVersion);
  put(out, static_cast<std::uint32_t>(m.schema.size()));
  for (const auto& d : m.schema) {
    const auto name = d.name();
    put(out, static_cast<std::uint32_t>(name.size()));
    out += name;
  }
  put(out, static_cast<std::uint64_t>(m.rows.size()));
  put(out, static_cast<std::uint8_t>(m.labels.empty() ? 0 : 1));
  for (const auto& row : m.rows) {
    for (double v : row) put(out, v);
  }
  for (auto l : m.labels) put(out, static_cast<std::uint8_t>(index_of(l)));
  return out;
}

inline FeatureMatrix parse_feature_cache(std::string_view data, const std::string& source = "<cache>") {
  using cache_detail::get;
  if (data.size() < 4 || std::memcmp(data.data(), kFeatureCacheMagic, 4) != 0) {
    throw ParseError(source, 0, "not a feature cache (bad magic)");
  }
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(data, pos, source);
  if (version != kFeatureCacheVersion) throw ParseError(source, 0, "unsupported feature cache version " + std::to_string(version));
  FeatureMatrix m;
  const auto nf = get<std::uint32_t>(data, pos, source);
  for (std::uint32_t f = 0; f < nf; ++f) {
    const auto len = get<std::uint32_t>(data, pos, source);
    if (pos + len > data.size()) throw ParseError(source, 0, "truncated feature cache");
    m.schema.push_back(parse_feature_name(std::string(data.substr(pos, len))));
    pos += len;
  }
  const auto nrows = get<std::uint64_t>(data, pos, source);
  const bool labels = get<std::uint8_t>(data, pos, source) != 0;
  m.rows.assign(nrows, std::vector<double>(nf));
  for (auto& row : m.rows) {
    for (auto& v : row) v = get<double>(data, pos, source);
  }
  if (labels) {
    for (std::uint64_t r = 0; r < nrows; ++r) m.labels.push_back(activity_from_index(get<std::uint8_t>(data, pos, source)));
  }
  if (pos != data.size()) throw ParseError(source, 0, "trailing bytes in feature cache");
  return m;
}

inline void write_feature_cache(const std::string& path, const FeatureMatrix& m) {
  detail::write_file(path, feature_cache_bytes(m));
}

inline FeatureMatrix read_feature_cache(const std::string& path) {
  return parse_feature_cache(detail::read_file(path), path);
}

/// Dispatches on the magic bytes: binary cache or CSV.
inline FeatureMatrix read_feature_matrix(const std::string& path) {
  const auto bytes = detail::read_file(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kFeatureCacheMagic, 4) == 0) return parse_feature_cache(bytes, path);
  return read_feature_matrix_csv(path);
}

}  // namespace eetrack::signal
