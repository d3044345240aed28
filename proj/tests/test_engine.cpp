#include <algorithm>
#include <array>
#include <cmath>

#include "doctest.h"
#include "vera/compiler.hpp"
#include "vera/engine.hpp"
#include "vera/model.hpp"

using namespace vera;

namespace {

SimulationSpec sir_spec(double n, double i0, double beta, double gamma, int horizon = 120) {
  SimulationSpec s;
  s.populations = {{"susceptible", n - i0}, {"infected", i0}, {"recovered", 0}};
  s.beta = beta;
  s.contact_structure = {16, beta / 16, 0};
  s.gamma = gamma;
  s.recovery_time = gamma > 0 ? 1 / gamma : 0;
  s.capacity = 3000;
  s.horizon = horizon;
  return s;
}

// Closed-form SIR peak: I_max = I0 + S0 - (N / R0) (1 + ln(R0 S0 / N)).
double analytic_peak(double n, double i0, double r0) {
  const double s0 = n - i0;
  return i0 + s0 - (n / r0) * (1 + std::log(r0 * s0 / n));
}

// Forward Euler at a tiny step; independent of the engine's integrator.
struct DenseOracle {
  double peak = 0, peak_t = 0;
  std::optional<double> crossing;
};
DenseOracle dense_oracle(double n, double i0, double beta, double gamma, double capacity,
                         double horizon, double h = 1e-4) {
  double s = n - i0, i = i0;
  DenseOracle o{i, 0, {}};
  for (double t = 0; t < horizon; t += h) {
    const double inf = beta * s * i / n, rec = gamma * i;
    s -= h * inf;
    i += h * (inf - rec);
    if (i > o.peak) o = {i, t + h, o.crossing};
    if (!o.crossing && i > capacity) o.crossing = t + h;
  }
  return o;
}

void check_conservation(const Trajectory& t, double tol) {
  const auto& s = t.at("susceptible");
  const auto& i = t.at("infected");
  const auto& r = t.at("recovered");
  for (std::size_t k = 0; k < t.size(); ++k) {
    REQUIRE(std::abs(s[k] + i[k] + r[k] - t.population) <= tol);
    if (k) {
      REQUIRE(s[k] <= s[k - 1]);
      REQUIRE(r[k] >= r[k - 1]);
    }
  }
}

}  // namespace

TEST_CASE("analytic peak oracle agrees with the reduced fraction") {
  // With I0 -> 0 the peak fraction tends to 1 - (1 + ln R0) / R0.
  const double r0 = 5.6;
  const double fraction = 1 - (1 + std::log(r0)) / r0;
  CHECK(fraction == doctest::Approx(0.51379).epsilon(1e-5));
  CHECK(analytic_peak(1e9, 1, r0) / 1e9 == doctest::Approx(fraction).epsilon(1e-6));
}

TEST_CASE("ODE peak matches the closed form and the dense oracle") {
  const auto spec = sir_spec(10000, 10, 0.4, 1.0 / 14);
  const auto traj = run_ode(spec);
  const auto m = metrics(traj, spec.capacity, basic_reproduction(spec));
  const double exact = analytic_peak(10000, 10, 5.6);
  CHECK(m.peak_infected == doctest::Approx(exact).epsilon(1e-4));
  const auto dense = dense_oracle(10000, 10, 0.4, 1.0 / 14, 3000, 120);
  CHECK(m.peak_day == doctest::Approx(dense.peak_t).epsilon(0.01));
  REQUIRE(m.capacity_crossing_day);
  REQUIRE(dense.crossing);
  // First grid point after the true first passage.
  CHECK(*m.capacity_crossing_day >= *dense.crossing - 0.01);
  CHECK(*m.capacity_crossing_day <= *dense.crossing + spec.dt_ode + 0.01);
  CHECK(*m.r0_basic == doctest::Approx(5.6));
}

TEST_CASE("ODE final size satisfies the final-size relation") {
  // R_inf = 1 - (S0/N) exp(-R0 R_inf)
  const auto spec = sir_spec(10000, 10, 0.4, 1.0 / 14, 400);
  const auto m = metrics(run_ode(spec), spec.capacity);
  double x = 0.9;
  for (int k = 0; k < 200; ++k) x = 1 - 0.999 * std::exp(-5.6 * x);
  CHECK(m.attack_rate == doctest::Approx(x).epsilon(1e-4));
}

TEST_CASE("ODE invariants") {
  SUBCASE("conservation and monotone compartments") {
    check_conservation(run_ode(sir_spec(10000, 10, 0.4, 1.0 / 14)), 1e-9 * 10000);
  }
  SUBCASE("disease-free equilibrium") {
    const auto t = run_ode(sir_spec(5000, 0, 0.9, 0.1));
    for (double v : t.at("infected")) CHECK(v == 0);
    for (double v : t.at("susceptible")) CHECK(v == 5000);
  }
  SUBCASE("subcritical decay") {
    for (double beta : {0.02, 0.05, 1.0 / 14}) {
      const auto i = run_ode(sir_spec(10000, 50, beta, 1.0 / 14)).at("infected");
      for (std::size_t k = 1; k < i.size(); ++k) REQUIRE(i[k] <= i[k - 1]);
    }
  }
  SUBCASE("independent of seed") {
    auto a = sir_spec(10000, 10, 0.4, 1.0 / 14);
    auto b = a;
    b.seed = 12345;
    CHECK(run_ode(a).series == run_ode(b).series);
  }
  SUBCASE("time grid") {
    const auto t = run_ode(sir_spec(100, 1, 0.3, 0.1, 10));
    CHECK(t.size() == 101);
    CHECK(t.times.back() == doctest::Approx(10));
    CHECK(t.kind == EngineKind::ODE);
  }
}

TEST_CASE("ODE flattening is monotone in beta") {
  double prev_peak = 0, prev_day = 1e9;
  for (double beta = 0.1; beta <= 1.0 + 1e-9; beta += 0.05) {
    const auto m = metrics(run_ode(sir_spec(10000, 10, beta, 1.0 / 14, 400)), std::nullopt);
    CHECK(m.peak_infected > prev_peak);
    CHECK(m.peak_day < prev_day);
    prev_peak = m.peak_infected;
    prev_day = m.peak_day;
  }
}

TEST_CASE("ODE blow-up names the step") {
  auto spec = sir_spec(10000, 10, 1e308, 0.1);
  try {
    run_ode(spec);
    FAIL("expected an integration error");
  } catch (const IntegrationError& e) {
    CHECK(std::string(e.what()).find(std::to_string(e.step())) != std::string::npos);
  }
}

TEST_CASE("ABM conservation, integrality and determinism") {
  const auto spec = sir_spec(2000, 5, 0.5, 0.1, 80);
  const auto a = run_abm(spec);
  check_conservation(a, 0);
  for (const auto& s : a.series)
    for (double v : s.values) REQUIRE(v == std::floor(v));
  CHECK(a.size() == 81);
  CHECK(run_abm(spec) == a);
  auto other = spec;
  other.seed = 2;
  CHECK_FALSE(run_abm(other).series == a.series);
}

TEST_CASE("ABM with no infected stays flat") {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto spec = sir_spec(1000, 0, 0.8, 0.1, 30);
    spec.seed = seed;
    const auto t = run_abm(spec);
    for (double v : t.at("infected")) CHECK(v == 0);
    for (double v : t.at("susceptible")) CHECK(v == 1000);
  }
}

TEST_CASE("ABM respects the agent cap") {
  AbmOptions o;
  o.agent_cap = 1000;
  CHECK_THROWS_AS(run_abm(sir_spec(1001, 1, 0.3, 0.1), o), ResourceError);
  CHECK_NOTHROW(run_abm(sir_spec(1000, 1, 0.3, 0.1, 5), o));
  try {
    run_abm(sir_spec(2e6, 1, 0.3, 0.1));
    FAIL("expected a resource error");
  } catch (const ResourceError& e) {
    CHECK(std::string(e.what()).find("ODE") != std::string::npos);
  }
}

TEST_CASE("ABM daily transition probabilities") {
  // One day from a known state: new infections ~ Binomial(S, 1 - (1 - p I/(N-1))^c).
  auto spec = sir_spec(100000, 20000, 0.4, 0.2, 1);
  const double n = 100000, i = 20000, s = 80000;
  const double p_inf = 1 - std::pow(1 - 0.025 * i / (n - 1), 16);
  const double p_rec = 1 - std::exp(-0.2);
  double inf_sum = 0, rec_sum = 0;
  const int reps = 20;
  for (int k = 0; k < reps; ++k) {
    spec.seed = 100 + k;
    const auto t = run_abm(spec);
    inf_sum += s - t.at("susceptible")[1];
    rec_sum += t.at("recovered")[1];
  }
  const double inf_sd = std::sqrt(s * p_inf * (1 - p_inf) / reps);
  const double rec_sd = std::sqrt(i * p_rec * (1 - p_rec) / reps);
  CHECK(std::abs(inf_sum / reps - s * p_inf) < 5 * inf_sd);
  CHECK(std::abs(rec_sum / reps - i * p_rec) < 5 * rec_sd);
}

TEST_CASE("ABM subcritical outbreak is bounded") {
  // E[total infections] <= I0 / (1 - R0); checked with slack factor 2.
  const double i0 = 20, r0 = 0.5;
  const auto spec = sir_spec(10000, i0, r0 * 0.1, 0.1, 300);
  const auto e = ensemble(spec, 32, EngineKind::ABM);
  const double total = e.mean.population - e.mean.at("susceptible").back();
  CHECK(total <= 2 * i0 / (1 - r0));
  CHECK(total >= i0);
}

TEST_CASE("ABM fixed-duration recovery") {
  auto spec = sir_spec(100, 10, 0, 0.2, 10);
  spec.recovery_mode = RecoveryMode::FixedDuration;
  spec.recovery_time = 5;
  const auto t = run_abm(spec);
  const auto& i = t.at("infected");
  for (int d = 0; d < 5; ++d) CHECK(i[d] == 10);
  for (int d = 5; d <= 10; ++d) CHECK(i[d] == 0);
  check_conservation(t, 0);
}

TEST_CASE("phenomenon engine") {
  auto spec = compile(phenomenon_template(DistancingLevel::Light));
  SUBCASE("deterministic with nondecreasing cumulative") {
    const auto a = run_phenomenon(spec);
    CHECK(a == run_phenomenon(spec));
    const auto& c = a.at("cumulative");
    for (std::size_t k = 1; k < c.size(); ++k) REQUIRE(c[k] >= c[k - 1]);
    for (std::size_t k = 0; k < c.size(); ++k) REQUIRE(a.at("active")[k] <= c[k]);
    CHECK(c.back() <= a.population);
  }
  SUBCASE("no transmission: cases clear within duration") {
    spec.phenomenon_rules->transmission_count = 0;
    const auto a = run_phenomenon(spec);
    const auto d = static_cast<std::size_t>(spec.phenomenon_rules->duration);
    CHECK(a.at("active")[0] == spec.count("infected"));
    for (std::size_t k = d; k < a.size(); ++k) CHECK(a.at("active")[k] == 0);
  }
  SUBCASE("full suppression: no new cases") {
    spec.phenomenon_rules->block_probability = 1.0;
    const auto a = run_phenomenon(spec);
    for (double v : a.at("cumulative")) CHECK(v == spec.count("infected"));
  }
  SUBCASE("ODE refuses phenomenon models") { CHECK_THROWS_AS(run_ode(spec), EngineError); }
  SUBCASE("run_engine routes to the phenomenon engine") {
    CHECK(run_engine(spec, EngineKind::ABM).has("active"));
  }
}

TEST_CASE("phenomenon transmission schedule") {
  // One case, certain transmission into an effectively unlimited pool: new
  // cases appear exactly at ages onset, onset + interval, ... below duration.
  SimulationSpec spec;
  spec.populations = {{"susceptible", 999999}, {"infected", 1}, {"recovered", 0}};
  spec.horizon = 12;
  spec.phenomenon_rules = PhenomenonRules{10, 1, 2, 3, 0};
  const auto t = run_phenomenon(spec);
  const auto& c = t.at("cumulative");
  // Index case transmits on days 2, 5, 8; the day-2 case on days 4, 7, 10.
  CHECK(c[1] == 1);
  CHECK(c[2] == 2);
  CHECK(c[3] == 2);
  CHECK(c[4] == 3);
  CHECK(c[5] == 4);
}

TEST_CASE("metrics on hand-computed series") {
  Trajectory t;
  t.times = {0, 1, 2, 3};
  t.population = 10;
  t.series = {{"susceptible", {9, 5, 3, 3}}, {"infected", {1, 5, 5, 2}}, {"recovered", {0, 0, 2, 5}}};
  const auto m = metrics(t, 4);
  CHECK(m.peak_infected == 5);
  CHECK(m.peak_day == 1);
  REQUIRE(m.capacity_crossing_day);
  CHECK(*m.capacity_crossing_day == 1);
  CHECK(m.exceedance_duration == 2);
  CHECK(m.attack_rate == 0.5);

  const auto at_capacity = metrics(t, 5);  // strict inequality
  CHECK_FALSE(at_capacity.capacity_crossing_day);
  CHECK(at_capacity.exceedance_duration == 0);

  t.at("infected") = {0, 0, 0, 0};
  const auto flat = metrics(t, 4);
  CHECK(flat.peak_infected == 0);
  CHECK(flat.peak_day == 0);
  CHECK_FALSE(flat.capacity_crossing_day);
}

TEST_CASE("ensemble") {
  const auto spec = sir_spec(3000, 5, 0.4, 1.0 / 14, 60);
  SUBCASE("single member equals the run") {
    const auto e = ensemble(spec, 1, EngineKind::ABM);
    CHECK(e.mean.series == run_abm(spec).series);
    CHECK(e.seeds == std::vector<std::uint64_t>{spec.seed});
  }
  SUBCASE("no infected: bands collapse to initial values") {
    const auto e = ensemble(sir_spec(3000, 0, 0.4, 0.1, 20), 32, EngineKind::ABM);
    for (const auto* t : {&e.mean, &e.p05, &e.p95}) {
      for (double v : t->at("susceptible")) CHECK(v == 3000);
      for (double v : t->at("infected")) CHECK(v == 0);
    }
  }
  SUBCASE("schedule independent") {
    EnsembleOptions one, four;
    one.threads = 1;
    four.threads = 4;
    const auto a = ensemble(spec, 9, EngineKind::ABM, one);
    const auto b = ensemble(spec, 9, EngineKind::ABM, four);
    CHECK(a.mean == b.mean);
    CHECK(a.per_seed == b.per_seed);
  }
  SUBCASE("mean conserves N and bands bracket it") {
    const auto e = ensemble(spec, 16, EngineKind::ABM);
    for (std::size_t k = 0; k < e.mean.size(); ++k) {
      const double sum = e.mean.at("susceptible")[k] + e.mean.at("infected")[k] + e.mean.at("recovered")[k];
      REQUIRE(sum == doctest::Approx(3000).epsilon(1e-12));
      REQUIRE(e.p05.at("infected")[k] <= e.p95.at("infected")[k]);
    }
    CHECK(e.per_seed.size() == 16);
  }
  SUBCASE("32 and 64 members agree on the mean peak") {
    const auto desk = sir_spec(10000, 10, 0.4, 1.0 / 14);
    const double p32 = ensemble(desk, 32, EngineKind::ABM).mean_metrics.peak_infected;
    const double p64 = ensemble(desk, 64, EngineKind::ABM).mean_metrics.peak_infected;
    CHECK(std::abs(p32 - p64) / p64 < 0.02);
  }
}

TEST_CASE("percentile interpolates between order statistics") {
  CHECK(percentile({1, 2, 3, 4, 5}, 0.5) == 3);
  CHECK(percentile({5, 1, 4, 2, 3}, 0.0) == 1);
  CHECK(percentile({1, 2, 3, 4, 5}, 1.0) == 5);
  CHECK(percentile({0, 10}, 0.05) == doctest::Approx(0.5));
  CHECK(percentile({7}, 0.95) == 7);
}

TEST_CASE("trajectory export") {
  const auto t = run_abm(sir_spec(100, 1, 0.3, 0.1, 3));
  const std::string csv = trajectory_csv(t);
  CHECK(csv.rfind("day,susceptible,infected,recovered\n0,99,1,0\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  const auto p = run_phenomenon(compile(phenomenon_template(DistancingLevel::Intense)));
  CHECK(trajectory_csv(p).rfind("day,active,cumulative\n", 0) == 0);
  CHECK(trajectory_from_json(to_json(t)) == t);
  const auto m = metrics(t, 50);
  CHECK(metrics_from_json(to_json(m)) == m);
}

TEST_CASE("number formatting round trips") {
  CHECK(format_number(3) == "3");
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(0.1) == "0.1");
  for (double v : {1.0 / 3, 5139.698299309017, 1e-7, 2.5e20})
    CHECK(std::stod(format_number(v)) == v);
}
