#include "vera/engine.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "vera/kernels.hpp"
#include "vera/rng.hpp"

namespace vera {

using nlohmann::json;

std::string_view to_string(EngineKind kind) { return kind == EngineKind::ABM ? "abm" : "ode"; }

std::optional<EngineKind> parse_engine(std::string_view s) {
  if (s == "abm" || s == "ABM") return EngineKind::ABM;
  if (s == "ode" || s == "ODE") return EngineKind::ODE;
  return std::nullopt;
}

const std::vector<double>& Trajectory::at(std::string_view name) const {
  for (const auto& s : series)
    if (s.name == name) return s.values;
  throw std::out_of_range("trajectory has no series '" + std::string(name) + "'");
}

std::vector<double>& Trajectory::at(std::string_view name) {
  return const_cast<std::vector<double>&>(std::as_const(*this).at(name));
}

bool Trajectory::has(std::string_view name) const {
  return std::any_of(series.begin(), series.end(), [&](const Series& s) { return s.name == name; });
}

std::optional<double> basic_reproduction(const SimulationSpec& spec) {
  if (spec.gamma > 0) return spec.beta / spec.gamma;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Mean-field oracle

Trajectory run_ode(const SimulationSpec& spec) {
  if (spec.phenomenon_rules)
    throw EngineError("the ODE engine runs SIR dynamics only; phenomenon models need the ABM engine");
  const double n = spec.population();
  if (!(n > 0)) throw EngineError("the ODE engine requires a population N > 0");
  if (!(spec.dt_ode > 0)) throw EngineError("dt_ode must be > 0");

  const double beta = spec.beta;
  const double gamma = spec.gamma;
  using State = std::array<double, 3>;
  auto deriv = [&](const State& y) -> State {
    const double infection = beta * y[0] * y[1] / n;
    const double recovery = gamma * y[1];
    return {-infection, infection - recovery, recovery};
  };

  const auto steps = static_cast<std::size_t>(std::llround(spec.horizon / spec.dt_ode));
  const double dt = spec.dt_ode;

  Trajectory traj;
  traj.kind = EngineKind::ODE;
  traj.spec_ref = spec.fingerprint();
  traj.population = n;
  traj.times.reserve(steps + 1);
  std::array<std::vector<double>, 3> cols;
  for (auto& c : cols) c.reserve(steps + 1);

  State y{spec.count("susceptible"), spec.count("infected"), spec.count("recovered")};
  auto record = [&](std::size_t k) {
    traj.times.push_back(static_cast<double>(k) * dt);
    for (std::size_t j = 0; j < 3; ++j) cols[j].push_back(y[j]);
  };
  record(0);
  for (std::size_t k = 1; k <= steps; ++k) {
    const State k1 = deriv(y);
    State tmp;
    for (std::size_t j = 0; j < 3; ++j) tmp[j] = y[j] + 0.5 * dt * k1[j];
    const State k2 = deriv(tmp);
    for (std::size_t j = 0; j < 3; ++j) tmp[j] = y[j] + 0.5 * dt * k2[j];
    const State k3 = deriv(tmp);
    for (std::size_t j = 0; j < 3; ++j) tmp[j] = y[j] + dt * k3[j];
    const State k4 = deriv(tmp);
    for (std::size_t j = 0; j < 3; ++j) {
      y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
      if (!std::isfinite(y[j])) throw IntegrationError(k, "state became non-finite");
    }
    record(k);
  }
  traj.series = {{"susceptible", std::move(cols[0])},
                 {"infected", std::move(cols[1])},
                 {"recovered", std::move(cols[2])}};
  return traj;
}

// ---------------------------------------------------------------------------
// Agent engines

namespace {

std::int64_t whole_count(double v, const char* what) {
  if (!(v >= 0) || v != std::floor(v) || v > 9.0e15)
    throw EngineError(std::string("agent engines need a whole, non-negative ") + what + " count");
  return static_cast<std::int64_t>(v);
}

void check_cap(double n, const AbmOptions& options) {
  if (n > options.agent_cap)
    throw ResourceError("population " + format_number(n) + " exceeds the agent cap of " +
                        format_number(options.agent_cap) + "; use the ODE engine instead");
}

}  // namespace

Trajectory run_abm(const SimulationSpec& spec, const AbmOptions& options) {
  if (spec.phenomenon_rules) return run_phenomenon(spec, options);
  const std::int64_t s0 = whole_count(spec.count("susceptible"), "susceptible");
  const std::int64_t i0 = whole_count(spec.count("infected"), "infected");
  const std::int64_t r0 = whole_count(spec.count("recovered"), "recovered");
  const std::int64_t n = s0 + i0 + r0;
  check_cap(static_cast<double>(n), options);

  std::vector<std::uint8_t> states(static_cast<std::size_t>(n), kernels::kSusceptible);
  std::fill(states.begin() + s0, states.begin() + s0 + i0, kernels::kInfected);
  std::fill(states.begin() + s0 + i0, states.end(), kernels::kRecovered);

  const bool fixed = spec.recovery_mode == RecoveryMode::FixedDuration;
  const std::int64_t fixed_days =
      spec.recovery_time > 0 ? std::max<std::int64_t>(1, std::llround(spec.recovery_time)) : 0;
  std::vector<std::int32_t> infected_on;
  if (fixed) infected_on.assign(static_cast<std::size_t>(n), 0);

  const auto& cs = spec.contact_structure;
  const double per_contact = cs.transmission_likelihood * (1.0 - cs.block_probability);
  const std::uint64_t recover_threshold =
      fixed ? 0 : rng::probability_threshold(1.0 - std::exp(-spec.gamma));
  const std::uint64_t key = rng::stream_key(spec.seed);

  Trajectory traj;
  traj.kind = EngineKind::ABM;
  traj.spec_ref = spec.fingerprint();
  traj.population = static_cast<double>(n);
  const auto points = static_cast<std::size_t>(spec.horizon) + 1;
  traj.times.reserve(points);
  std::vector<double> s_col, i_col, r_col;
  s_col.reserve(points);
  i_col.reserve(points);
  r_col.reserve(points);

  std::int64_t s = s0, i = i0, r = r0;
  auto record = [&](int day) {
    traj.times.push_back(day);
    s_col.push_back(static_cast<double>(s));
    i_col.push_back(static_cast<double>(i));
    r_col.push_back(static_cast<double>(r));
  };
  record(0);

  for (int day = 1; day <= spec.horizon; ++day) {
    if (i == 0) {
      record(day);
      continue;
    }
    double infect_p = 0.0;
    if (n > 1) {
      const double x = std::clamp(per_contact * static_cast<double>(i) / static_cast<double>(n - 1), 0.0, 1.0);
      infect_p = 1.0 - std::pow(1.0 - x, cs.contacts_per_day);
    }
    const kernels::TransitionThresholds thr{rng::probability_threshold(infect_p), recover_threshold};
    const std::uint64_t base =
        key + static_cast<std::uint64_t>(day - 1) * static_cast<std::uint64_t>(n) * rng::kGolden;

    if (!fixed) {
      const auto moved = kernels::sir_step(states, base, thr);
      s -= moved.infected;
      i += moved.infected - moved.recovered;
      r += moved.recovered;
    } else {
      // Same draws as the kernel; recovery is by elapsed days instead.
      std::uint64_t counter = base;
      for (std::size_t a = 0; a < states.size(); ++a) {
        counter += rng::kGolden;
        std::uint8_t& st = states[a];
        if (st == kernels::kSusceptible) {
          if ((rng::mix64(counter) >> 11) < thr.infect) {
            st = kernels::kInfected;
            infected_on[a] = day;
            --s;
            ++i;
          }
        } else if (st == kernels::kInfected && fixed_days > 0 && infected_on[a] != day &&
                   day - infected_on[a] >= fixed_days) {
          st = kernels::kRecovered;
          --i;
          ++r;
        }
      }
    }
    record(day);
  }
  traj.series = {{"susceptible", std::move(s_col)},
                 {"infected", std::move(i_col)},
                 {"recovered", std::move(r_col)}};
  return traj;
}

Trajectory run_phenomenon(const SimulationSpec& spec, const AbmOptions& options) {
  if (!spec.phenomenon_rules) throw EngineError("spec has no phenomenon rules");
  const PhenomenonRules& rules = *spec.phenomenon_rules;
  const std::int64_t pool = whole_count(spec.count("susceptible"), "susceptible");
  const std::int64_t start = whole_count(spec.count("infected"), "infected");
  const std::int64_t immune = whole_count(spec.count("recovered"), "recovered");
  const std::int64_t n = pool + start + immune;
  check_cap(static_cast<double>(n), options);

  const std::int64_t duration = std::max<std::int64_t>(1, std::llround(rules.duration));
  const std::int64_t attempts = std::llround(rules.transmission_count);
  const std::int64_t onset = std::llround(rules.onset);
  const std::int64_t interval = std::max<std::int64_t>(1, std::llround(rules.interval));
  const std::uint64_t pass_threshold = rng::probability_threshold(1.0 - rules.block_probability);

  // Agent layout: [0, start) starting cases, then the susceptible pool, then
  // immune agents. Only "ever infected" matters per agent.
  std::vector<std::uint8_t> infected(static_cast<std::size_t>(n), 0);
  std::fill(infected.begin(), infected.begin() + start, 1);
  std::fill(infected.begin() + start + pool, infected.end(), 1);

  const auto points = static_cast<std::size_t>(spec.horizon) + 1;
  std::vector<std::int64_t> new_cases(points, 0);
  new_cases[0] = start;

  Trajectory traj;
  traj.kind = EngineKind::ABM;
  traj.spec_ref = spec.fingerprint();
  traj.population = static_cast<double>(n);
  std::vector<double> active_col, cumulative_col;
  traj.times.push_back(0);
  active_col.push_back(static_cast<double>(start));
  cumulative_col.push_back(static_cast<double>(start));

  rng::SplitMix64 gen(rng::stream_key(spec.seed));
  std::int64_t active = start;
  std::int64_t cumulative = start;
  for (std::int64_t day = 1; day <= spec.horizon; ++day) {
    // A case infected on day s transmits on day d when its age a = d - s
    // satisfies a >= onset, a < duration and (a - onset) % interval == 0.
    // Cases infected today first transmit on a later day.
    const std::int64_t first_age = onset >= 1 ? onset : interval;
    for (std::int64_t age = first_age; age < duration && age <= day; age += interval) {
      const std::int64_t cases = new_cases[static_cast<std::size_t>(day - age)];
      for (std::int64_t c = 0; c < cases; ++c) {
        for (std::int64_t k = 0; k < attempts; ++k) {
          const bool passes = gen.bernoulli(pass_threshold);
          const std::uint64_t target = gen.below(static_cast<std::uint64_t>(n));
          if (passes && !infected[target]) {
            infected[target] = 1;
            ++new_cases[static_cast<std::size_t>(day)];
          }
        }
      }
    }
    const std::int64_t today = new_cases[static_cast<std::size_t>(day)];
    active += today;
    if (day - duration >= 0) active -= new_cases[static_cast<std::size_t>(day - duration)];
    cumulative += today;
    traj.times.push_back(static_cast<double>(day));
    active_col.push_back(static_cast<double>(active));
    cumulative_col.push_back(static_cast<double>(cumulative));
  }
  traj.series = {{"active", std::move(active_col)}, {"cumulative", std::move(cumulative_col)}};
  return traj;
}

Trajectory run_engine(const SimulationSpec& spec, EngineKind engine, const AbmOptions& options) {
  if (engine == EngineKind::ODE) return run_ode(spec);
  return spec.phenomenon_rules ? run_phenomenon(spec, options) : run_abm(spec, options);
}

// ---------------------------------------------------------------------------
// Metrics

RunMetrics metrics(const Trajectory& trajectory, std::optional<double> capacity,
                   std::optional<double> r0_basic) {
  RunMetrics m;
  m.r0_basic = r0_basic;
  if (trajectory.times.empty()) return m;

  const auto& infected =
      trajectory.has("infected") ? trajectory.at("infected") : trajectory.at("active");
  const auto peak = std::max_element(infected.begin(), infected.end());  // first maximizer
  const auto peak_index = static_cast<std::size_t>(peak - infected.begin());
  m.peak_infected = *peak;
  m.peak_day = trajectory.times[peak_index];

  if (capacity) {
    const double step =
        trajectory.times.size() > 1 ? trajectory.times[1] - trajectory.times[0] : 1.0;
    std::size_t above = 0;
    for (std::size_t k = 0; k < infected.size(); ++k) {
      if (infected[k] > *capacity) {
        if (!m.capacity_crossing_day) m.capacity_crossing_day = trajectory.times[k];
        ++above;
      }
    }
    m.exceedance_duration = static_cast<double>(above) * step;
  }

  if (trajectory.population > 0) {
    double ever = 0.0;
    if (trajectory.has("recovered"))
      ever = trajectory.at("recovered").back();
    else if (trajectory.has("cumulative"))
      ever = trajectory.at("cumulative").back();
    m.attack_rate = std::clamp(ever / trajectory.population, 0.0, 1.0);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Ensembles

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

EnsembleResult ensemble(const SimulationSpec& spec, std::size_t n_seeds, EngineKind engine,
                        const EnsembleOptions& options) {
  if (n_seeds == 0) throw std::invalid_argument("an ensemble needs at least one seed");

  EnsembleResult out;
  std::vector<Trajectory> runs(n_seeds);
  for (std::size_t k = 0; k < n_seeds; ++k) out.seeds.push_back(rng::member_seed(spec.seed, k));

  unsigned workers = options.threads ? options.threads : std::thread::hardware_concurrency();
  workers = std::clamp<unsigned>(workers, 1, static_cast<unsigned>(n_seeds));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t k = next++; k < n_seeds; k = next++) {
      try {
        SimulationSpec member = spec;
        member.seed = out.seeds[k];
        runs[k] = run_engine(member, engine, options.abm);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  const auto r0 = basic_reproduction(spec);
  for (const auto& run : runs) out.per_seed.push_back(metrics(run, spec.capacity, r0));

  out.mean = runs.front();
  out.mean.spec_ref = spec.fingerprint();
  out.p05 = out.mean;
  out.p95 = out.mean;
  std::vector<double> sample(n_seeds);
  for (std::size_t c = 0; c < out.mean.series.size(); ++c) {
    for (std::size_t t = 0; t < out.mean.times.size(); ++t) {
      double sum = 0.0;
      for (std::size_t k = 0; k < n_seeds; ++k) {
        sample[k] = runs[k].series[c].values[t];
        sum += sample[k];
      }
      out.mean.series[c].values[t] = sum / static_cast<double>(n_seeds);
      out.p05.series[c].values[t] = percentile(sample, 0.05);
      out.p95.series[c].values[t] = percentile(sample, 0.95);
    }
  }
  out.mean_metrics = metrics(out.mean, spec.capacity, r0);
  return out;
}

// ---------------------------------------------------------------------------
// Export

std::string format_number(double v) {
  if (v == std::floor(v) && std::fabs(v) < 9.0e15) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, static_cast<long long>(v));
    return std::string(buf, res.ptr);
  }
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trajectory_csv(const Trajectory& trajectory) {
  std::string out = "day";
  for (const auto& s : trajectory.series) out += "," + s.name;
  out += "\n";
  for (std::size_t t = 0; t < trajectory.times.size(); ++t) {
    out += format_number(trajectory.times[t]);
    for (const auto& s : trajectory.series) {
      out += ',';
      out += format_number(s.values[t]);
    }
    out += '\n';
  }
  return out;
}

json to_json(const Trajectory& trajectory) {
  json series = json::array();
  for (const auto& s : trajectory.series) series.push_back({{"name", s.name}, {"values", s.values}});
  return {{"kind", to_string(trajectory.kind)},
          {"spec_ref", trajectory.spec_ref},
          {"population", trajectory.population},
          {"times", trajectory.times},
          {"series", series}};
}

Trajectory trajectory_from_json(const json& doc) {
  Trajectory t;
  t.kind = parse_engine(doc.at("kind").get<std::string>()).value_or(EngineKind::ODE);
  t.spec_ref = doc.at("spec_ref").get<std::string>();
  t.population = doc.at("population").get<double>();
  t.times = doc.at("times").get<std::vector<double>>();
  for (const auto& s : doc.at("series"))
    t.series.push_back({s.at("name").get<std::string>(), s.at("values").get<std::vector<double>>()});
  return t;
}

json to_json(const RunMetrics& m) {
  return {{"peak_infected", m.peak_infected},
          {"peak_day", m.peak_day},
          {"capacity_crossing_day",
           m.capacity_crossing_day ? json(*m.capacity_crossing_day) : json(nullptr)},
          {"exceedance_duration", m.exceedance_duration},
          {"attack_rate", m.attack_rate},
          {"r0_basic", m.r0_basic ? json(*m.r0_basic) : json(nullptr)}};
}

RunMetrics metrics_from_json(const json& doc) {
  RunMetrics m;
  m.peak_infected = doc.at("peak_infected").get<double>();
  m.peak_day = doc.at("peak_day").get<double>();
  if (!doc.at("capacity_crossing_day").is_null())
    m.capacity_crossing_day = doc.at("capacity_crossing_day").get<double>();
  m.exceedance_duration = doc.at("exceedance_duration").get<double>();
  m.attack_rate = doc.at("attack_rate").get<double>();
  if (!doc.at("r0_basic").is_null()) m.r0_basic = doc.at("r0_basic").get<double>();
  return m;
}

}  // namespace vera
