#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace estgcn {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

// Daily T x N panel. values[t][i] is station i on dates[t]; NaN marks missing.
struct SeriesPanel {
  std::vector<std::string> dates;  // ISO yyyy-mm-dd, strictly increasing, consecutive days
  std::vector<std::string> station_ids;
  std::vector<std::vector<double>> values;

  std::size_t t() const { return dates.size(); }
  std::size_t n() const { return station_ids.size(); }
  std::vector<double> column(std::size_t station, std::size_t begin, std::size_t end) const;
  std::vector<double> column(std::size_t station) const { return column(station, 0, t()); }
  std::size_t station_index(const std::string& id) const;  // throws InputError if absent
  void validate() const;
};

struct CleaningOptions {
  std::size_t max_gap = 3;     // longest run forward-filled
  double missing_frac = 0.2;   // drop stations at or above this missing share
};

struct CleaningReport {
  std::vector<std::string> dropped;          // stations removed for missingness
  std::vector<double> dropped_missing_frac;
  std::size_t forward_filled = 0;
  std::size_t interpolated = 0;              // longer gaps filled linearly
};

// Reads long-format `date,station_id,value` rows (empty or NA value =
// missing) and pivots onto the full daily date range. Stations in `roster`
// order when given, otherwise in order of first appearance.
SeriesPanel read_panel_csv(const std::filesystem::path& path, const std::vector<std::string>& roster = {});

// Forward-fills gaps up to max_gap, drops stations with too much missing
// data, and fills any longer interior gaps by linear interpolation (leading
// gaps take the first observed value).
CleaningReport clean_panel(SeriesPanel& panel, const CleaningOptions& options = {});

// read_panel_csv followed by clean_panel.
SeriesPanel load_panel_csv(const std::filesystem::path& path, const std::vector<std::string>& roster,
                           const CleaningOptions& options, CleaningReport* report = nullptr);

void write_panel_csv(const std::filesystem::path& path, const SeriesPanel& panel);

// Day arithmetic on ISO dates (proleptic Gregorian).
long days_from_civil(int y, unsigned m, unsigned d);
long parse_iso_date(const std::string& s);  // days since 1970-01-01; throws InputError
std::string format_iso_date(long days);

}  // namespace estgcn
