#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <random>

#include "eetrack/dailypomdp.hpp"
#include "eetrack/detail/random.hpp"
#include "eetrack/simgen.hpp"
#include "oracles.hpp"

using namespace eetrack;
using namespace eetrack::pomdp;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

DayTrace trace_of(const std::vector<std::string>& names, int start = 0,
                  PhysicalActivity pa = PhysicalActivity::sit, double speed = 0.0) {
  DayTrace tr;
  for (std::size_t i = 0; i < names.size(); ++i) tr.steps.push_back({start + static_cast<int>(i), names[i], pa, speed});
  return tr;
}

std::vector<DailyActivity> states(std::initializer_list<const char*> names) {
  std::vector<DailyActivity> out;
  for (auto n : names) out.push_back({n, 0});
  return out;
}

std::vector<DayTrace> truth_traces(const simgen::Corpus& c) {
  std::vector<DayTrace> out;
  for (const auto& d : c.days) out.push_back(d.trace);
  return out;
}

std::vector<double> random_belief(std::size_t n, std::mt19937_64& rng) {
  std::vector<double> b(n);
  double s = 0.0;
  for (auto& v : b) s += (v = detail::uniform01(rng));
  for (auto& v : b) v /= s;
  return b;
}

}  // namespace

TEST_CASE("speed bins follow the default edges", "[pomdp]") {
  SpeedBins bins;
  CHECK(bins.size() == 6);
  CHECK(bins.bin(0.0) == 0);
  CHECK(bins.bin(0.5) == 1);
  CHECK(bins.bin(1.0) == 1);
  CHECK(bins.bin(3.0) == 2);
  CHECK(bins.bin(4.5) == 3);
  CHECK(bins.bin(20.0) == 4);
  CHECK(bins.bin(40.0) == 5);
  CHECK_THROWS_AS(bins.bin(-1.0), InvalidParameter);
}

TEST_CASE("estimate_transition: counts consecutive minutes", "[pomdp][transition]") {
  const auto st = states({"A", "B", "C"});
  const auto t = estimate_transition({trace_of({"A", "A", "A", "B"})}, st);
  CHECK_THAT(t(0, 0), WithinAbs(2.0 / 3.0, 1e-15));
  CHECK_THAT(t(0, 1), WithinAbs(1.0 / 3.0, 1e-15));
  CHECK(t(0, 2) == 0.0);
  // B and C never precede anything: uniform rows.
  for (std::size_t r : {1u, 2u}) {
    for (std::size_t c = 0; c < 3; ++c) CHECK_THAT(t(r, c), WithinAbs(1.0 / 3.0, 1e-15));
  }
}

TEST_CASE("estimate_transition: a 10-minute breakfast stays put 9 times in 10", "[pomdp][transition]") {
  const auto tmpl = simgen::with_jitter(simgen::morning_template(), 0.0);
  const auto day = simgen::generate_day(tmpl, 1);
  const auto st = simgen::states_of(tmpl);
  const auto t = estimate_transition({day.trace}, st);
  const std::size_t breakfast = 0, wash = 1;
  REQUIRE(st[breakfast].name == "eat breakfast");
  CHECK_THAT(t(breakfast, breakfast), WithinAbs(0.9, 1e-15));
  CHECK_THAT(t(breakfast, wash), WithinAbs(0.1, 1e-15));
}

TEST_CASE("estimate_transition: rows are stochastic; unknown names are reported", "[pomdp][transition][property]") {
  const auto tmpl = simgen::default_day_template();
  const auto corpus = simgen::generate_corpus(tmpl, 3, 5, simgen::NoiseChannel::identity());
  const auto st = simgen::states_of(tmpl);
  const auto t = estimate_transition(truth_traces(corpus), st);
  for (std::size_t r = 0; r < t.rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < t.cols; ++c) {
      CHECK(t(r, c) >= 0.0);
      s += t(r, c);
    }
    CHECK_THAT(s, WithinAbs(1.0, 1e-12));
  }
  try {
    estimate_transition({trace_of({"A", "zzz"})}, states({"A"}));
    FAIL("expected an error");
  } catch (const InvalidParameter& e) {
    CHECK(std::string(e.what()).find("zzz") != std::string::npos);
  }
}

TEST_CASE("estimate_observation: raw counts per minute, activity and speed bin", "[pomdp][observation]") {
  const auto st = states({"A", "B"});
  auto tr = trace_of({"A", "A", "B"}, 100, PhysicalActivity::walk, 4.5);
  tr.steps[1].phys_activity = PhysicalActivity::stand;
  const auto raw = estimate_observation({tr, tr}, st, SpeedBins{});
  CHECK(raw.at(0, 100, index_of(PhysicalActivity::walk), 3) == 2.0);
  CHECK(raw.at(0, 101, index_of(PhysicalActivity::stand), 3) == 2.0);
  CHECK(raw.at(1, 102, index_of(PhysicalActivity::walk), 3) == 2.0);
  CHECK(raw.state_sum(0) == 4.0);
  CHECK(raw.state_sum(1) == 2.0);
}

TEST_CASE("smoothing: Gaussian pseudo-counts", "[pomdp][smoothing]") {
  const auto st = states({"A"});
  const auto raw = estimate_observation({trace_of({"A"}, 480)}, st, SpeedBins{});
  const auto a = index_of(PhysicalActivity::sit);
  const auto pseudo = gaussian_pseudo_counts(raw, 30.0, 0.1);

  SECTION("peak at the observed minute, one-sigma ratio exp(-1/2)") {
    CHECK_THAT(pseudo.at(0, 480, a, 0), WithinAbs(0.1, 1e-15));
    for (std::size_t t = 0; t < 1440; ++t) CHECK(pseudo.at(0, t, a, 0) <= pseudo.at(0, 480, a, 0));
    CHECK_THAT(pseudo.at(0, 510, a, 0) / pseudo.at(0, 480, a, 0), WithinRel(std::exp(-0.5), 1e-12));
    CHECK_THAT(pseudo.at(0, 450, a, 0) / pseudo.at(0, 480, a, 0), WithinRel(std::exp(-0.5), 1e-12));
  }
  SECTION("other slices are untouched") {
    CHECK(pseudo.at(0, 480, index_of(PhysicalActivity::walk), 0) == 0.0);
    CHECK(pseudo.at(0, 480, a, 1) == 0.0);
  }
  SECTION("locality beyond six sigma") {
    CHECK(pseudo.at(0, 480 + 181, a, 0) < 0.1 * std::exp(-18.0) * 1.0001);
    CHECK(pseudo.at(0, 0, a, 0) < 1e-50);
  }
  SECTION("amplitude -> 0 recovers the normalised raw counts") {
    const auto s = smooth_observation(raw, 30.0, 1e-12, 0.0);
    CHECK_THAT(s.at(0, 480, a, 0), WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("smoothing: symmetric kernel", "[pomdp][smoothing][property]") {
  const auto st = states({"A"});
  const auto raw = estimate_observation({trace_of({"A"}, 150)}, st, SpeedBins{});
  const auto pseudo = gaussian_pseudo_counts(raw, 30.0, 0.1);
  const auto a = index_of(PhysicalActivity::sit);
  for (std::size_t d = 0; d <= 150; ++d) CHECK(pseudo.at(0, 150 + d, a, 0) == pseudo.at(0, 150 - d, a, 0));
}

TEST_CASE("smoothing: normalised and floored", "[pomdp][smoothing][property]") {
  const auto tmpl = simgen::default_day_template();
  const auto corpus = simgen::generate_corpus(tmpl, 2, 9, simgen::reference_noise_channel());
  const auto st = simgen::states_of(tmpl);
  auto with_unseen = st;
  with_unseen.push_back({"never happens", 0});
  const auto raw = estimate_observation(corpus.observed, with_unseen, SpeedBins{});
  const SmoothingParams params;
  const auto o = smooth_observation(raw, params);
  for (std::size_t s = 0; s < o.num_states; ++s) {
    CHECK_THAT(o.state_sum(s), WithinAbs(1.0, 1e-9));
    const auto cells = o.state(s);
    CHECK(*std::min_element(cells.begin(), cells.end()) >= params.floor_epsilon * (1.0 - 1e-12));
  }
  SmoothingParams too_big;
  too_big.floor_epsilon = 1.0;
  CHECK_THROWS_AS(smooth_observation(raw, too_big), InvalidParameter);
}

TEST_CASE("belief_update: reference cases", "[pomdp][belief]") {
  SECTION("identity transition and flat likelihood is a fixed point") {
    const Belief b{0.2, 0.3, 0.5};
    const auto u = belief_update_with(b, Matrix::identity(3), [](std::size_t) { return 0.25; });
    for (std::size_t i = 0; i < 3; ++i) CHECK_THAT(u.belief[i], WithinAbs(b[i], 1e-15));
    CHECK_THAT(u.normalizer, WithinAbs(0.25, 1e-15));
  }
  SECTION("two states") {
    Matrix t(2, 2);
    t(0, 0) = 0.9;
    t(0, 1) = 0.1;
    t(1, 0) = 0.5;
    t(1, 1) = 0.5;
    const std::vector<double> lik{0.5, 0.25};
    const auto u = belief_update_with({1.0, 0.0}, t, [&](std::size_t s) { return lik[s]; });
    CHECK_THAT(u.normalizer, WithinAbs(0.475, 1e-15));
    CHECK_THAT(u.belief[0], WithinAbs(0.45 / 0.475, 1e-15));
    CHECK_THAT(u.belief[1], WithinAbs(0.025 / 0.475, 1e-15));
    CHECK_FALSE(u.reset);
  }
  SECTION("an impossible observation resets to uniform") {
    const auto u = belief_update_with({0.5, 0.5}, Matrix::identity(2), [](std::size_t) { return 0.0; });
    CHECK(u.reset);
    CHECK(u.belief == Belief{0.5, 0.5});
  }
}

TEST_CASE("belief_update: output is a distribution", "[pomdp][belief][property]") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + detail::uniform_index(rng, 16);
    Matrix t(n, n);
    for (std::size_t r = 0; r < n; ++r) {
      const auto row = random_belief(n, rng);
      for (std::size_t c = 0; c < n; ++c) t(r, c) = row[c];
    }
    const auto lik = random_belief(n, rng);
    const auto u = belief_update_with(random_belief(n, rng), t, [&](std::size_t s) { return lik[s]; });
    double s = 0.0;
    for (double p : u.belief) {
      CHECK(p >= 0.0);
      s += p;
    }
    CHECK_THAT(s, WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("select_action: reference cases", "[pomdp][action]") {
  CHECK(select_action({0.1, 0.6, 0.3}, Matrix::identity(3)) == 1);
  auto r = Matrix::identity(3);
  r(2, 2) = 2.0;
  CHECK(select_action({0.1, 0.5, 0.4}, r) == 2);
  CHECK(select_action({0.5, 0.5}, Matrix::identity(2)) == 0);
}

TEST_CASE("select_action: agrees with exhaustive search and ignores reward scale", "[pomdp][action][property]") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 17;
    const auto b = random_belief(n, rng);
    Matrix r(n, n);
    std::vector<std::vector<double>> rr(n, std::vector<double>(n));
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t a = 0; a < n; ++a) rr[s][a] = r(s, a) = detail::uniform01(rng) * 3.0 - 1.0;
    }
    const auto a = select_action(b, r);
    REQUIRE(a == oracle::argmax_expected_reward(b, rr));
    Matrix scaled = r;
    for (auto& v : scaled.data) v *= 4.0;
    REQUIRE(select_action(b, scaled) == a);
  }
}

TEST_CASE("reward tweaks: raising R(s,s) never makes s less likely to be chosen", "[pomdp][action][property]") {
  std::mt19937_64 rng(23);
  PomdpModel m;
  m.states = states({"A", "B", "C", "D"});
  for (int trial = 0; trial < 500; ++trial) {
    const auto b = random_belief(4, rng);
    m.rewards = default_rewards(4);
    const bool before = select_action(b, m.rewards) == 2;
    apply_reward_tweaks(m, {{"C", 1.0 + 3.0 * detail::uniform01(rng)}});
    if (before) CHECK(select_action(b, m.rewards) == 2);
  }
  CHECK_THROWS_AS(apply_reward_tweaks(m, {{"nope", 2.0}}), InvalidParameter);
  CHECK_THROWS_AS(apply_reward_tweaks(m, {{"A", 0.0}}), InvalidParameter);
}

TEST_CASE("infer_day: trained and decoded on a noise-free day", "[pomdp][inference]") {
  const auto tmpl = simgen::default_day_template();
  const auto corpus = simgen::generate_corpus(tmpl, 4, 31, simgen::NoiseChannel::identity());
  const auto model = train_pomdp(truth_traces(corpus), simgen::states_of(tmpl));
  const auto& day = corpus.days.front().trace;
  const auto obs = day.observations(model.bins);

  const auto a = infer_day(obs, model);
  const auto b = infer_day(obs, model);
  CHECK(a.actions == b.actions);
  CHECK(a.top_probability == b.top_probability);
  REQUIRE(a.actions.size() == day.size());
  for (double p : a.top_probability) {
    CHECK(p > 0.0);
    CHECK(p <= 1.0 + 1e-12);
  }
  const auto metrics = evaluate_day(action_names(model, a.actions), day);
  CHECK(metrics.weighed_mean > 0.8);

  CHECK(infer_day({}, model).actions.empty());
}

TEST_CASE("evaluate_day: per-activity recall", "[pomdp][metrics]") {
  const auto truth = trace_of({"A", "A", "B", "B", "B", "B", "B", "B", "B", "B", "B", "B"});
  SECTION("perfect") {
    const auto m = evaluate_day(truth.activities(), truth);
    CHECK(m.mean == 1.0);
    CHECK(m.weighed_mean == 1.0);
    CHECK(m.min == 1.0);
  }
  SECTION("half of A, nine tenths of B") {
    auto pred = truth.activities();
    pred[1] = "B";
    pred[11] = "A";
    const auto m = evaluate_day(pred, truth);
    CHECK_THAT(m.find("A")->recall(), WithinAbs(0.5, 1e-15));
    CHECK_THAT(m.find("B")->recall(), WithinAbs(0.9, 1e-15));
    CHECK_THAT(m.mean, WithinAbs(0.7, 1e-15));
    CHECK_THAT(m.weighed_mean, WithinAbs(10.0 / 12.0, 1e-15));
    CHECK(m.min == 0.5);
    CHECK(m.max == 0.9);
  }
  CHECK_THROWS_AS(evaluate_day({"A"}, truth), InvalidParameter);
}

TEST_CASE("model JSON round trip reproduces inference", "[pomdp][io]") {
  const auto tmpl = simgen::default_day_template();
  const auto corpus = simgen::generate_corpus(tmpl, 2, 3, simgen::reference_noise_channel());
  TrainOptions opts;
  opts.reward_tweaks = {{"wash dishes", 2.0}};
  const auto model = train_pomdp(corpus.observed, simgen::states_of(tmpl), opts);
  const auto back = model_from_json(nlohmann::json::parse(model_to_json(model).dump()));
  CHECK(back.states == model.states);
  CHECK(back.transition == model.transition);
  CHECK(back.rewards == model.rewards);
  CHECK(back.observation.data == model.observation.data);
  const auto obs = corpus.observed.front().observations(model.bins);
  CHECK(infer_day(obs, back).actions == infer_day(obs, model).actions);
}

TEST_CASE("trace CSV", "[pomdp][io]") {
  const auto dir = std::filesystem::temp_directory_path() / "eetrack_trace_io";
  std::filesystem::create_directories(dir);
  const auto tr = trace_of({"eat breakfast", "eat breakfast", "wash, then dry"}, 480, PhysicalActivity::stand, 1.5);
  const auto path = (dir / "day.csv").string();
  write_trace_csv(path, tr);
  CHECK(read_trace_csv(path) == tr);

  auto bad = [&](const std::string& body, std::size_t line) {
    detail::write_file(path, "minute,true_activity,phys_activity,speed_kmh\n" + body);
    try {
      read_trace_csv(path);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == line);
    }
  };
  bad("0,a,sit,0\n2,a,sit,0\n", 3);
  bad("0,a,dance,0\n", 2);
  bad("1440,a,sit,0\n", 2);
  bad("0,a,sit,-1\n", 2);
  bad("0,a,sit\n", 2);
}
