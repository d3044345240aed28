#include "vera/data_fit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "vera/compiler.hpp"
#include "vera/engine.hpp"

namespace vera {

using nlohmann::json;
namespace chr = std::chrono;

namespace {

constexpr std::string_view kHeader[] = {"Province/State", "Country/Region", "Lat", "Long"};

// RFC 4180 field splitting for one logical record. Quoted fields may hold
// commas and doubled quotes; embedded newlines are not supported.
std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

chr::year_month_day parse_date(std::string_view text) {
  text = trim(text);
  unsigned parts[3] = {0, 0, 0};
  int part = 0;
  int digits = 0;
  int year_digits = 0;
  for (char c : text) {
    if (c == '/') {
      if (digits == 0 || ++part > 2) throw FormatError("bad date '" + std::string(text) + "'");
      digits = 0;
    } else if (c >= '0' && c <= '9') {
      parts[part] = parts[part] * 10 + static_cast<unsigned>(c - '0');
      ++digits;
      if (part == 2) ++year_digits;
    } else {
      throw FormatError("bad date '" + std::string(text) + "'");
    }
  }
  if (part != 2 || digits == 0 || (year_digits != 2 && year_digits != 4))
    throw FormatError("bad date '" + std::string(text) + "' (expected M/D/YY)");
  const int year = year_digits == 2 ? 2000 + static_cast<int>(parts[2]) : static_cast<int>(parts[2]);
  const chr::year_month_day d{chr::year{year}, chr::month{parts[0]}, chr::day{parts[1]}};
  if (!d.ok()) throw FormatError("bad date '" + std::string(text) + "'");
  return d;
}

std::string format_date(chr::year_month_day d) {
  return std::to_string(static_cast<unsigned>(d.month())) + "/" +
         std::to_string(static_cast<unsigned>(d.day())) + "/" +
         std::to_string(static_cast<int>(d.year()) % 100);
}

ParsedCsv parse_time_series_csv(std::string_view bytes, std::string source) {
  if (bytes.size() >= 3 && bytes.substr(0, 3) == "\xEF\xBB\xBF") bytes.remove_prefix(3);
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos < bytes.size();) {
    std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) nl = bytes.size();
    lines.push_back(bytes.substr(pos, nl - pos));
    pos = nl + 1;
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw FormatError("empty file");

  const auto header = split_record(trim(lines[0]));
  for (std::size_t c = 0; c < 4; ++c) {
    if (c >= header.size() || trim(header[c]) != kHeader[c])
      throw FormatError("missing header: expected columns Province/State,Country/Region,Lat,Long");
  }
  std::vector<chr::year_month_day> dates;
  for (std::size_t c = 4; c < header.size(); ++c) {
    try {
      dates.push_back(parse_date(header[c]));
    } catch (const FormatError& e) {
      throw FormatError("header column " + std::to_string(c + 1) + ": " + e.what());
    }
    if (dates.size() > 1 &&
        chr::sys_days{dates.back()} - chr::sys_days{dates[dates.size() - 2]} != chr::days{1})
      throw FormatError("header column " + std::to_string(c + 1) +
                        ": date columns must be consecutive days");
  }
  if (dates.empty()) throw FormatError("header has no date columns");

  ParsedCsv out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t row = li + 1;
    if (trim(lines[li]).empty()) continue;
    const auto fields = split_record(trim(lines[li]));
    if (fields.size() != header.size()) {
      out.errors.push_back({row, std::min(fields.size(), header.size()) + 1,
                            "expected " + std::to_string(header.size()) + " columns, found " +
                                std::to_string(fields.size())});
      continue;
    }
    Dataset d;
    d.source = source;
    const auto province = trim(fields[0]);
    if (!province.empty()) d.region.province = std::string(province);
    d.region.country = std::string(trim(fields[1]));
    d.dates = dates;
    bool ok = true;
    for (std::size_t c = 2; c < 4 && ok; ++c) {
      if (trim(fields[c]).empty()) continue;  // coordinates are optional
      auto v = parse_number(fields[c]);
      if (!v) {
        out.errors.push_back({row, c + 1, "non-numeric coordinate '" + fields[c] + "'"});
        ok = false;
      } else {
        (c == 2 ? d.lat : d.lon) = *v;
      }
    }
    for (std::size_t c = 4; c < fields.size() && ok; ++c) {
      auto v = parse_number(fields[c]);
      if (!v || *v < 0) {
        out.errors.push_back({row, c + 1,
                              fields[c].empty() ? "blank case count"
                                                : "invalid case count '" + fields[c] + "'"});
        ok = false;
      } else {
        d.cumulative.push_back(*v);
      }
    }
    if (ok) out.datasets.push_back(std::move(d));
  }
  return out;
}

std::string emit_time_series_csv(const std::vector<Dataset>& datasets) {
  std::string out = "Province/State,Country/Region,Lat,Long";
  if (datasets.empty()) return out + "\n";
  for (const auto& d : datasets.front().dates) out += "," + format_date(d);
  out += "\n";
  for (const auto& d : datasets) {
    if (d.dates != datasets.front().dates)
      throw std::invalid_argument("datasets must share the same dates to be written together");
    out += quote_if_needed(d.region.province.value_or("")) + "," +
           quote_if_needed(d.region.country) + "," + format_number(d.lat) + "," +
           format_number(d.lon);
    for (double v : d.cumulative) out += "," + format_number(v);
    out += "\n";
  }
  return out;
}

DailyCounts to_daily(const Dataset& dataset) {
  DailyCounts out;
  const auto& c = dataset.cumulative;
  out.daily.reserve(c.size());
  for (std::size_t t = 0; t < c.size(); ++t) {
    if (t == 0) {
      out.daily.push_back(std::max(0.0, c[0]));
      continue;
    }
    const double diff = c[t] - c[t - 1];
    if (diff < 0) {
      const std::string date = t < dataset.dates.size() ? format_date(dataset.dates[t])
                                                        : "index " + std::to_string(t);
      out.warnings.push_back("cumulative count decreased on " + date + " (" +
                             format_number(c[t - 1]) + " -> " + format_number(c[t]) +
                             "); daily count clamped to 0");
    }
    out.daily.push_back(std::max(0.0, diff));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Estimation

namespace {

struct Window {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
};

Window select_window(const Dataset& d, const FitOptions& options) {
  const auto& c = d.cumulative;
  const double floor = std::max(options.min_cases, std::numeric_limits<double>::min());
  std::size_t start = 0;
  while (start < c.size() && !(c[start] >= floor)) ++start;
  if (start == c.size())
    throw FitError("insufficient points: found 0 days with cumulative >= " +
                   format_number(options.min_cases) + ", required " +
                   std::to_string(kMinWindowPoints));
  const double ceiling = options.ceiling_factor * options.min_cases;
  const auto max_points = static_cast<std::size_t>(std::max(1, options.max_window));
  std::size_t end = start;
  while (end + 1 < c.size() && c[end + 1] <= ceiling && end + 1 - start + 1 <= max_points) ++end;
  const std::size_t found = end - start + 1;
  if (found < kMinWindowPoints)
    throw FitError("insufficient points: found " + std::to_string(found) +
                   " in the growth window, required " + std::to_string(kMinWindowPoints));
  return {start, end};
}

struct LineFit {
  double slope = 0.0;
  double r2 = 0.0;
};

// OLS of y on x = 0..n-1. The response is shifted by y[0] so a flat series
// yields an exact zero slope.
LineFit ols(const std::vector<double>& y) {
  const auto n = static_cast<double>(y.size());
  const double x_mean = (n - 1.0) / 2.0;
  double y_mean = 0.0;
  for (double v : y) y_mean += v - y[0];
  y_mean /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double dx = static_cast<double>(i) - x_mean;
    const double dy = (y[i] - y[0]) - y_mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  LineFit f;
  f.slope = sxy / sxx;
  if (syy == 0.0) {
    f.r2 = 1.0;
  } else {
    const double ss_res = std::max(0.0, syy - f.slope * sxy);
    f.r2 = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  }
  return f;
}

void finish(FitResult& fit, const Dataset& d) {
  if (fit.window_start < d.dates.size()) fit.window_start_date = format_date(d.dates[fit.window_start]);
  if (fit.window_end < d.dates.size()) fit.window_end_date = format_date(d.dates[fit.window_end]);
  if (fit.growth_rate <= 0.0) fit.warnings.push_back("no growth detected");
  if (fit.beta_hat < 0.0) {
    fit.warnings.push_back("estimated beta was negative and is clamped to 0");
    fit.beta_hat = 0.0;
  }
  fit.r0_hat = fit.gamma_assumed > 0 ? fit.beta_hat / fit.gamma_assumed : 0.0;
}

}  // namespace

FitResult fit_growth(const Dataset& dataset, const FitOptions& options) {
  if (!(options.gamma_assumed > 0)) throw FitError("gamma_assumed must be > 0");
  const Window w = select_window(dataset, options);
  std::vector<double> logs;
  for (std::size_t t = w.start; t <= w.end; ++t) logs.push_back(std::log(dataset.cumulative[t]));
  const LineFit line = ols(logs);

  FitResult fit;
  fit.estimator = "log-linear";
  fit.growth_rate = line.slope;
  fit.window_start = w.start;
  fit.window_end = w.end;
  fit.gamma_assumed = options.gamma_assumed;
  fit.beta_hat = line.slope + options.gamma_assumed;
  fit.goodness = line.r2;
  finish(fit, dataset);
  return fit;
}

FitResult fit_sir_grid(const Dataset& dataset, const SirGridOptions& grid,
                       const FitOptions& options) {
  if (!(grid.population > 0)) throw FitError("the SIR grid estimator needs a population > 0");
  if (grid.steps < 2) throw FitError("the SIR grid needs at least 2 steps per axis");
  const Window w = select_window(dataset, options);
  const std::size_t days = w.end - w.start;
  const double c0 = dataset.cumulative[w.start];
  if (c0 >= grid.population) throw FitError("population must exceed the cumulative case count");

  std::vector<double> observed;
  for (std::size_t t = w.start; t <= w.end; ++t) observed.push_back(std::log(dataset.cumulative[t]));
  double obs_mean = 0.0;
  for (double v : observed) obs_mean += v;
  obs_mean /= static_cast<double>(observed.size());
  double ss_tot = 0.0;
  for (double v : observed) ss_tot += (v - obs_mean) * (v - obs_mean);

  SimulationSpec spec;
  spec.horizon = static_cast<int>(days);
  spec.dt_ode = 0.1;
  // Cases at the window start are treated as currently infectious.
  spec.populations = {{"susceptible", grid.population - c0}, {"infected", c0}, {"recovered", 0.0}};
  const std::size_t per_day = static_cast<std::size_t>(std::llround(1.0 / spec.dt_ode));

  double best_sse = std::numeric_limits<double>::infinity();
  double best_beta = 0.0, best_gamma = 0.0;
  const double n = static_cast<double>(grid.steps - 1);
  for (std::size_t bi = 0; bi < grid.steps; ++bi) {
    for (std::size_t gi = 0; gi < grid.steps; ++gi) {
      spec.beta = grid.beta_min + (grid.beta_max - grid.beta_min) * static_cast<double>(bi) / n;
      spec.gamma = grid.gamma_min + (grid.gamma_max - grid.gamma_min) * static_cast<double>(gi) / n;
      const Trajectory traj = run_ode(spec);
      const auto& s = traj.at("susceptible");
      double sse = 0.0;
      for (std::size_t t = 0; t <= days; ++t) {
        const double diff = std::log(grid.population - s[t * per_day]) - observed[t];
        sse += diff * diff;
      }
      if (sse < best_sse) {
        best_sse = sse;
        best_beta = spec.beta;
        best_gamma = spec.gamma;
      }
    }
  }

  FitResult fit;
  fit.estimator = "sir-grid";
  fit.growth_rate = best_beta - best_gamma;
  fit.window_start = w.start;
  fit.window_end = w.end;
  fit.beta_hat = best_beta;
  fit.gamma_assumed = best_gamma;
  fit.goodness = ss_tot > 0 ? std::clamp(1.0 - best_sse / ss_tot, 0.0, 1.0) : 1.0;
  finish(fit, dataset);
  return fit;
}

SpecInputs derive_spec_inputs(const FitResult& fit, double contacts_assumed) {
  if (!(contacts_assumed > 0)) throw std::invalid_argument("contacts_assumed must be > 0");
  SpecInputs out;
  out.gamma = fit.gamma_assumed;
  out.beta = fit.growth_rate + fit.gamma_assumed;
  if (out.beta < 0) {
    out.warnings.push_back("beta = r + gamma is negative; clamped to 0");
    out.beta = 0;
  }
  out.transmission_likelihood = out.beta / contacts_assumed;
  if (out.transmission_likelihood > 1.0) {
    out.warnings.push_back("beta " + format_number(out.beta) + " exceeds contacts_per_day " +
                           format_number(contacts_assumed) +
                           "; transmission_likelihood clamped to 1");
    out.transmission_likelihood = 1.0;
    out.beta = contacts_assumed;
  }
  return out;
}

json to_json(const Dataset& d) {
  std::vector<std::string> dates;
  for (const auto& x : d.dates) dates.push_back(format_date(x));
  return {{"id", d.id},
          {"region",
           {{"province", d.region.province ? json(*d.region.province) : json(nullptr)},
            {"country", d.region.country}}},
          {"lat", d.lat},
          {"lon", d.lon},
          {"dates", dates},
          {"cumulative", d.cumulative},
          {"source", d.source}};
}

Dataset dataset_from_json(const json& doc) {
  Dataset d;
  d.id = doc.at("id").get<std::string>();
  const json& region = doc.at("region");
  if (!region.at("province").is_null()) d.region.province = region.at("province").get<std::string>();
  d.region.country = region.at("country").get<std::string>();
  d.lat = doc.at("lat").get<double>();
  d.lon = doc.at("lon").get<double>();
  for (const auto& s : doc.at("dates")) d.dates.push_back(parse_date(s.get<std::string>()));
  d.cumulative = doc.at("cumulative").get<std::vector<double>>();
  d.source = doc.at("source").get<std::string>();
  return d;
}

json to_json(const FitResult& f) {
  return {{"estimator", f.estimator},
          {"growth_rate", f.growth_rate},
          {"window", {f.window_start_date, f.window_end_date}},
          {"window_indices", {f.window_start, f.window_end}},
          {"beta_hat", f.beta_hat},
          {"gamma_assumed", f.gamma_assumed},
          {"r0_hat", f.r0_hat},
          {"goodness", f.goodness},
          {"warnings", f.warnings}};
}

json to_json(const SpecInputs& s) {
  return {{"transmission_likelihood", s.transmission_likelihood},
          {"beta", s.beta},
          {"gamma", s.gamma},
          {"warnings", s.warnings}};
}

double parse_rate(std::string_view text) {
  text = trim(text);
  auto num = [&](std::string_view s) {
    auto v = parse_number(s);
    if (!v) throw std::invalid_argument("not a rate: '" + std::string(text) + "'");
    return *v;
  };
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    const double den = num(text.substr(slash + 1));
    if (den == 0) throw std::invalid_argument("rate has a zero denominator");
    return num(text.substr(0, slash)) / den;
  }
  return num(text);
}

}  // namespace vera
