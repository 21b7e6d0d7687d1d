#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <random>

#include "eetrack/detail/random.hpp"
#include "eetrack/signal.hpp"
#include "oracles.hpp"

using namespace eetrack;
using namespace eetrack::signal;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SensorStream single_channel(std::vector<double> values, double fs = 50.0) {
  SensorStream s;
  s.sample_rate = fs;
  s.channels = {"ax"};
  s.values = std::move(values);
  s.timestamps.resize(s.values.size());
  for (std::size_t i = 0; i < s.timestamps.size(); ++i) s.timestamps[i] = static_cast<double>(i) / fs;
  return s;
}

std::vector<double> tone(std::size_t n, double f, double amp, double fs = 50.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / fs);
  return x;
}

Window window_of(const std::vector<std::vector<double>>& cols, std::vector<std::string> names) {
  Window w;
  w.length = cols.front().size();
  w.channels = std::move(names);
  w.values.resize(w.length * cols.size());
  for (std::size_t i = 0; i < w.length; ++i) {
    for (std::size_t c = 0; c < cols.size(); ++c) w.values[i * cols.size() + c] = cols[c][i];
  }
  return w;
}

double feature(const FeatureVector& fv, const std::string& name) {
  for (std::size_t i = 0; i < fv.schema.size(); ++i) {
    if (fv.schema[i].name() == name) return fv.values[i];
  }
  FAIL("no feature " << name);
  return 0.0;
}

std::vector<double> white_noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = detail::standard_normal(rng);
  return x;
}

SensorStream nine_channel(std::size_t n, std::uint64_t seed, std::optional<PhysicalActivity> label = {}) {
  SensorStream s;
  s.channels = default_channels();
  s.label = label;
  s.timestamps.resize(n);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    s.timestamps[i] = static_cast<double>(i) / 50.0;
    for (std::size_t c = 0; c < 9; ++c) s.values.push_back(detail::standard_normal(rng));
  }
  return s;
}

}  // namespace

TEST_CASE("bandpass: constant input is rejected", "[signal][filter]") {
  const auto out = bandpass_filter(single_channel(std::vector<double>(2000, 9.81)), 0.3, 20.0);
  for (std::size_t i = 250; i < out.values.size(); ++i) REQUIRE(std::abs(out.values[i]) < 0.1);
}

TEST_CASE("bandpass: steady-state gain matches the analytic Butterworth response", "[signal][filter]") {
  // 5000 samples hold whole periods of both tones; the first 2500 are settling.
  SECTION("5 Hz passes") {
    const auto y = bandpass_filter(single_channel(tone(5000, 5.0, 1.0)), 0.3, 20.0).values;
    const double amp = oracle::tone_amplitude(y, 2500, 5.0, 50.0);
    const double expected = oracle::bandpass_gain(5.0, 0.3, 20.0, 50.0, 3);
    CHECK(amp >= 0.9);
    CHECK(amp <= 1.0);
    CHECK_THAT(amp, WithinAbs(expected, 1e-6));
  }
  SECTION("24 Hz is suppressed") {
    const auto y = bandpass_filter(single_channel(tone(5000, 24.0, 1.0)), 0.3, 20.0).values;
    const double amp = oracle::tone_amplitude(y, 2500, 24.0, 50.0);
    CHECK(amp < 0.2);
    CHECK_THAT(amp, WithinAbs(oracle::bandpass_gain(24.0, 0.3, 20.0, 50.0, 3), 1e-6));
  }
}

TEST_CASE("bandpass: designed sections reproduce the analytic magnitude", "[signal][filter]") {
  const auto sections = design_bandpass(0.3, 20.0, 50.0, 3);
  REQUIRE(sections.size() == 4);
  for (double f : {0.1, 0.3, 1.0, 2.6, 10.0, 20.0, 22.0, 24.9}) {
    CHECK_THAT(magnitude_response(sections, f, 50.0), WithinAbs(oracle::bandpass_gain(f, 0.3, 20.0, 50.0, 3), 1e-9));
  }
  // -3 dB at each cutoff, from the pre-warped design.
  const auto hp = butterworth_sections(FilterKind::highpass, 3, 0.3, 50.0);
  CHECK_THAT(magnitude_response(hp, 0.3, 50.0), WithinAbs(1.0 / std::sqrt(2.0), 1e-12));
}

TEST_CASE("bandpass: rejects cutoffs outside (0, Nyquist)", "[signal][filter]") {
  const auto s = single_channel(std::vector<double>(10, 0.0));
  CHECK_THROWS_AS(bandpass_filter(s, 0.0, 20.0), InvalidParameter);
  CHECK_THROWS_AS(bandpass_filter(s, 0.3, 25.0), InvalidParameter);
  CHECK_THROWS_AS(bandpass_filter(s, 5.0, 1.0), InvalidParameter);
  CHECK_THROWS_AS(bandpass_filter(s, -1.0, 20.0), InvalidParameter);
}

TEST_CASE("bandpass: filtering is linear", "[signal][filter][property]") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = white_noise(600, rng());
    const auto y = white_noise(600, rng());
    const double a = 4.0 * detail::uniform01(rng) - 2.0;
    const double b = 4.0 * detail::uniform01(rng) - 2.0;
    std::vector<double> mix(600);
    for (std::size_t i = 0; i < 600; ++i) mix[i] = a * x[i] + b * y[i] + 9.81 * (a + b);
    std::vector<double> xo(x), yo(y);
    for (auto& v : xo) v += 9.81;
    for (auto& v : yo) v += 9.81;
    const auto fm = bandpass_filter(single_channel(mix), 0.3, 20.0).values;
    const auto fx = bandpass_filter(single_channel(xo), 0.3, 20.0).values;
    const auto fy = bandpass_filter(single_channel(yo), 0.3, 20.0).values;
    double scale = 0.0;
    for (double v : fm) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < 600; ++i) REQUIRE(std::abs(fm[i] - (a * fx[i] + b * fy[i])) <= 1e-9 * scale);
  }
}

TEST_CASE("segment_windows: reference counts", "[signal][segment]") {
  CHECK(segment_windows(single_channel(std::vector<double>(128, 0.0)), 128, 0.5).size() == 1);
  CHECK(segment_windows(single_channel(std::vector<double>(127, 0.0)), 128, 0.5).empty());
  const auto w = segment_windows(single_channel(std::vector<double>(7500, 0.0)), 128, 0.5);
  CHECK(w.size() == oracle::enumerate_window_starts(7500, 128, 64).size());
  CHECK(w.size() == 116);
}

TEST_CASE("segment_windows: starts match a brute-force enumeration for every length", "[signal][segment][property]") {
  std::vector<double> base(10000);
  for (std::size_t i = 0; i < base.size(); ++i) base[i] = static_cast<double>(i);
  for (auto [len, overlap, step] : {std::tuple{128ul, 0.5, 64ul}, std::tuple{100ul, 0.0, 100ul}, std::tuple{64ul, 0.75, 16ul}}) {
    for (std::size_t n = 0; n <= 10000; n += (len == 128 ? 1 : 7)) {
      const auto stream = single_channel(std::vector<double>(base.begin(), base.begin() + static_cast<std::ptrdiff_t>(n)));
      const auto wins = segment_windows(stream, len, overlap);
      const auto starts = oracle::enumerate_window_starts(n, len, step);
      REQUIRE(wins.size() == starts.size());
      for (std::size_t i = 0; i < wins.size(); ++i) {
        REQUIRE(wins[i].start_index == starts[i]);
        REQUIRE(wins[i].values.front() == static_cast<double>(starts[i]));
        REQUIRE(wins[i].values.back() == static_cast<double>(starts[i] + len - 1));
      }
    }
  }
}

TEST_CASE("segment_windows: windows inherit the label; bad parameters throw", "[signal][segment]") {
  auto s = single_channel(std::vector<double>(300, 1.0));
  s.label = PhysicalActivity::walk;
  for (const auto& w : segment_windows(s, 128, 0.5)) CHECK(w.label == PhysicalActivity::walk);
  CHECK_THROWS_AS(segment_windows(s, 1, 0.5), InvalidParameter);
  CHECK_THROWS_AS(segment_windows(s, 128, 1.0), InvalidParameter);
  CHECK_THROWS_AS(segment_windows(s, 128, -0.1), InvalidParameter);
}

TEST_CASE("time features: degenerate and textbook windows", "[signal][features]") {
  SECTION("constant window") {
    const auto fv = extract_time_features(window_of({std::vector<double>(128, 3.5)}, {"ax"}));
    CHECK(feature(fv, "ax.mean") == 3.5);
    CHECK(feature(fv, "ax.std") == 0.0);
    CHECK(feature(fv, "ax.ar1") == 0.0);
  }
  SECTION("alternating +-1") {
    std::vector<double> x(128);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = i % 2 ? -1.0 : 1.0;
    const auto fv = extract_time_features(window_of({x}, {"ax"}));
    CHECK(feature(fv, "ax.mean") == 0.0);
    CHECK(feature(fv, "ax.energy") == 1.0);
    CHECK(feature(fv, "ax.std") == 1.0);
  }
  SECTION("identical channels correlate perfectly; a constant channel gives 0") {
    const auto x = white_noise(128, 3);
    const auto fv = extract_time_features(window_of({x, x, std::vector<double>(128, 2.0)}, {"ax", "ay", "az"}));
    CHECK_THAT(feature(fv, "ax:ay.corr"), WithinAbs(1.0, 1e-12));
    CHECK(feature(fv, "ax:az.corr") == 0.0);
    CHECK(feature(fv, "ay:az.corr") == 0.0);
  }
  SECTION("signal magnitude area and total energy per sensor") {
    const auto fv = extract_time_features(
        window_of({std::vector<double>(128, 1.0), std::vector<double>(128, -2.0), std::vector<double>(128, 0.5)},
                  {"ax", "ay", "az"}));
    CHECK_THAT(feature(fv, "a.sma"), WithinAbs(3.5, 1e-12));
    CHECK_THAT(feature(fv, "a.total_energy"), WithinAbs(1.0 + 4.0 + 0.25, 1e-12));
  }
}

TEST_CASE("burg: recovers the coefficient of an AR(1) process", "[signal][features]") {
  std::mt19937_64 rng(11);
  std::vector<double> x(8192);
  double prev = 0.0;
  for (auto& v : x) {
    v = 0.8 * prev + detail::standard_normal(rng);
    prev = v;
  }
  const auto a = burg_ar(x, 4);
  REQUIRE(a.size() == 4);
  CHECK_THAT(a[0], WithinAbs(-0.8, 0.03));
  for (std::size_t k = 1; k < 4; ++k) CHECK(std::abs(a[k]) < 0.05);
}

TEST_CASE("frequency features: degenerate and ordering cases", "[signal][features]") {
  SECTION("all-zero window") {
    const auto fv = extract_freq_features(window_of({std::vector<double>(128, 0.0)}, {"ax"}));
    CHECK(feature(fv, "ax.spec_entropy") == 0.0);
    CHECK(feature(fv, "ax.spec_skewness") == 0.0);
    CHECK(feature(fv, "ax.spec_energy") == 0.0);
  }
  SECTION("a tone is spectrally more ordered than white noise of equal power") {
    const auto t = tone(128, 6.25, std::sqrt(2.0));  // bin 16 exactly, power 1
    const auto noise = white_noise(128, 5);
    const auto st_tone = spectral_stats(t, true);
    const auto st_noise = spectral_stats(noise, true);
    CHECK(st_tone.entropy < st_noise.entropy);
  }
  SECTION("non power-of-two length throws") {
    CHECK_THROWS_AS(spectral_stats(std::vector<double>(100, 1.0), true), InvalidParameter);
  }
}

TEST_CASE("frequency features: Parseval identity", "[signal][features][property]") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = white_noise(128, seed);
    // Without the taper, spectral energy equals the time-domain energy feature.
    const auto untapered = spectral_stats(x, false);
    CHECK_THAT(untapered.energy, WithinRel(mean_square(x), 1e-9));
    // With the taper, it equals the mean square of the tapered signal.
    const auto w = hamming_window(128);
    double ms = 0.0;
    for (std::size_t i = 0; i < 128; ++i) ms += (w[i] * x[i]) * (w[i] * x[i]);
    CHECK_THAT(spectral_stats(x, true).energy, WithinRel(ms / 128.0, 1e-9));
  }
}

TEST_CASE("feature vector: schema length and determinism", "[signal][features]") {
  const auto stream = nine_channel(128, 9);
  const auto windows = segment_windows(stream, 128, 0.5);
  REQUIRE(windows.size() == 1);
  const auto a = extract_features(windows[0]);
  const auto b = extract_features(windows[0]);
  // 9 channels x (mean, std, energy, 4 AR, 3 spectral) = 90
  // 3 sensors x (sma, total energy, spectral total energy) = 9
  // 3 sensors x 3 axis pairs = 9
  CHECK(a.values.size() == 108);
  CHECK(a.schema.size() == 108);
  REQUIRE(a.values.size() == b.values.size());
  CHECK(std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) == 0);
  for (double v : a.values) CHECK(std::isfinite(v));
}

TEST_CASE("build_feature_matrix", "[signal][matrix]") {
  SECTION("empty session list") {
    const auto m = build_feature_matrix({});
    CHECK(m.num_rows() == 0);
    CHECK(m.schema.empty());
  }
  SECTION("one labeled 7500-sample session gives 116 labeled rows") {
    const auto m = build_feature_matrix({nine_channel(7500, 1, PhysicalActivity::run)});
    CHECK(m.num_rows() == 116);
    CHECK(m.labels.size() == 116);
    for (auto l : m.labels) CHECK(l == PhysicalActivity::run);
    CHECK(m.num_features() == 108);
  }
  SECTION("channel order mismatch names the session") {
    auto a = nine_channel(200, 1);
    auto b = nine_channel(200, 2);
    std::swap(b.channels[0], b.channels[1]);
    b.source = "second.csv";
    try {
      build_feature_matrix({a, b});
      FAIL("expected a schema error");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("second.csv") != std::string::npos);
      CHECK(std::string(e.what()).find("session 1") != std::string::npos);
    }
  }
  SECTION("other sample rates are rejected") {
    auto a = nine_channel(200, 1);
    a.sample_rate = 100.0;
    CHECK_THROWS_AS(build_feature_matrix({a}), SchemaError);
  }
  SECTION("channel selection shrinks the schema") {
    FeatureConfig cfg;
    cfg.channels = {"ax", "ay", "az", "gx", "gy", "gz"};
    const auto m = build_feature_matrix({nine_channel(300, 1)}, cfg);
    CHECK(m.num_features() == 6 * 10 + 2 * 3 + 2 * 3);
  }
}

TEST_CASE("sensor and feature files", "[signal][io]") {
  const auto dir = std::filesystem::temp_directory_path() / "eetrack_signal_io";
  std::filesystem::create_directories(dir);

  SECTION("sensor CSV round trip and label from file name") {
    auto s = nine_channel(300, 4);
    const auto path = (dir / "walk_01.csv").string();
    write_sensor_csv(path, s);
    const auto back = read_sensor_csv(path);
    CHECK(back.label == PhysicalActivity::walk);
    CHECK(back.channels == s.channels);
    CHECK(back.values == s.values);
    CHECK(back.timestamps == s.timestamps);
  }
  SECTION("non-increasing timestamps are reported with a line number") {
    const auto path = (dir / "bad.csv").string();
    detail::write_file(path, "t,ax\n0,1\n0.02,1\n0.02,1\n");
    try {
      read_sensor_csv(path);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 4);
    }
  }
  SECTION("manifest entries resolve relative to the manifest") {
    write_sensor_csv((dir / "session.csv").string(), nine_channel(130, 2));
    detail::write_file((dir / "m.json").string(), R"({"file": "session.csv", "label": "sit", "sample_rate": 50})");
    const auto sessions = load_manifest_sessions((dir / "m.json").string());
    REQUIRE(sessions.size() == 1);
    CHECK(sessions[0].label == PhysicalActivity::sit);
    CHECK(sessions[0].num_samples() == 130);
  }
  SECTION("feature matrix survives CSV and binary cache") {
    const auto m = build_feature_matrix({nine_channel(400, 3, PhysicalActivity::lie)});
    write_feature_matrix_csv((dir / "f.csv").string(), m);
    write_feature_cache((dir / "f.bin").string(), m);
    for (const auto& p : {dir / "f.csv", dir / "f.bin"}) {
      const auto back = read_feature_matrix(p.string());
      CHECK(back.schema == m.schema);
      CHECK(back.rows == m.rows);
      CHECK(back.labels == m.labels);
    }
    auto bytes = detail::read_file((dir / "f.bin").string());
    bytes[0] = 'X';
    CHECK_THROWS_AS(parse_feature_cache(bytes), ParseError);
  }
}
