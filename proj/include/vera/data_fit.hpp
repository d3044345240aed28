#pragma once

#include <chrono>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace vera {

struct Region {
  std::optional<std::string> province;
  std::string country;

  bool operator==(const Region&) const = default;
};

// One region's cumulative confirmed-case series.
struct Dataset {
  std::string id;  // assigned by the store; empty for freshly parsed data
  Region region;
  double lat = 0.0;  // parsed, unused by fitting
  double lon = 0.0;
  std::vector<std::chrono::year_month_day> dates;
  std::vector<double> cumulative;
  std::string source;

  bool operator==(const Dataset&) const = default;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RowError {
  std::size_t row = 0;     // 1-based line number in the file (header is line 1)
  std::size_t column = 0;  // 1-based column index
  std::string message;
};

struct ParsedCsv {
  std::vector<Dataset> datasets;
  std::vector<RowError> errors;
};

// JHU CSSE time-series layout: header `Province/State,Country/Region,Lat,Long`
// followed by M/D/YY date columns; one dataset per row. Malformed rows are
// reported and skipped.
ParsedCsv parse_time_series_csv(std::string_view bytes, std::string source = "upload");

std::string emit_time_series_csv(const std::vector<Dataset>& datasets);

std::string format_date(std::chrono::year_month_day d);        // M/D/YY
std::chrono::year_month_day parse_date(std::string_view text);  // M/D/YY or M/D/YYYY

struct DailyCounts {
  std::vector<double> daily;
  std::vector<std::string> warnings;
};

// daily[t] = max(0, cumulative[t] - cumulative[t-1]) with daily[0] =
// cumulative[0]; each clamped decrease produces a warning naming the date.
DailyCounts to_daily(const Dataset& dataset);

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultMinCases = 50;
inline constexpr int kDefaultMaxWindow = 30;
inline constexpr std::size_t kMinWindowPoints = 5;

struct FitOptions {
  double min_cases = kDefaultMinCases;
  int max_window = kDefaultMaxWindow;
  double gamma_assumed = 1.0 / 14.0;
  double ceiling_factor = 10.0;  // window ends once cumulative exceeds factor * min_cases
};

struct FitResult {
  std::string estimator;  // "log-linear" or "sir-grid"
  double growth_rate = 0.0;
  std::size_t window_start = 0;  // index into the dataset
  std::size_t window_end = 0;    // inclusive
  std::string window_start_date;
  std::string window_end_date;
  double beta_hat = 0.0;
  double gamma_assumed = 0.0;
  double r0_hat = 0.0;
  double goodness = 0.0;  // R^2 in [0, 1]
  std::vector<std::string> warnings;
};

// Ordinary least squares of ln(cumulative) on day index over the early
// exponential window; the slope is the growth rate r and beta_hat = r + gamma.
FitResult fit_growth(const Dataset& dataset, const FitOptions& options = {});

struct SirGridOptions {
  double population = 0.0;  // required
  double beta_min = 0.05, beta_max = 1.5;
  double gamma_min = 1.0 / 28.0, gamma_max = 1.0 / 3.0;
  std::size_t steps = 40;
};

// Least squares of log cumulative infections against the mean-field SIR over a
// (beta, gamma) grid, on the same window as fit_growth. growth_rate reports
// beta - gamma of the best grid point.
FitResult fit_sir_grid(const Dataset& dataset, const SirGridOptions& grid,
                       const FitOptions& options = {});

struct SpecInputs {
  double transmission_likelihood = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  std::vector<std::string> warnings;
};

// beta = r + gamma; likelihood = beta / contacts clamped to [0, 1]. When
// clamped, beta is reduced to what the clamped likelihood yields.
SpecInputs derive_spec_inputs(const FitResult& fit, double contacts_assumed);

nlohmann::json to_json(const Dataset& d);
Dataset dataset_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const FitResult& f);
nlohmann::json to_json(const SpecInputs& s);

// Parses a decimal ("0.0714") or a fraction ("1/14").
double parse_rate(std::string_view text);

}  // namespace vera
