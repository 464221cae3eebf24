#include "estgcn/panel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <unordered_map>

#include "estgcn/csv.hpp"
#include "estgcn/errors.hpp"

namespace estgcn {

std::vector<double> SeriesPanel::column(std::size_t station, std::size_t begin, std::size_t end) const {
  if (station >= n() || begin > end || end > t()) throw InputError("panel column range out of bounds");
  std::vector<double> out;
  out.reserve(end - begin);
  for (std::size_t r = begin; r < end; ++r) out.push_back(values[r][station]);
  return out;
}

std::size_t SeriesPanel::station_index(const std::string& id) const {
  auto it = std::find(station_ids.begin(), station_ids.end(), id);
  if (it == station_ids.end()) throw InputError("unknown station '" + id + "'");
  return static_cast<std::size_t>(it - station_ids.begin());
}

void SeriesPanel::validate() const {
  if (values.size() != dates.size()) throw InputError("panel row count does not match date count");
  for (const auto& row : values) {
    if (row.size() != station_ids.size()) throw InputError("panel row width does not match station count");
  }
  for (std::size_t r = 1; r < dates.size(); ++r) {
    if (parse_iso_date(dates[r]) != parse_iso_date(dates[r - 1]) + 1) {
      throw InputError("panel dates are not consecutive days at " + dates[r]);
    }
  }
}

// Howard Hinnant's civil-date algorithms.
long days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

long parse_iso_date(const std::string& s) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3 || m < 1 || m > 12 ||
      d < 1 || d > 31) {
    throw InputError("bad date '" + s + "' (expected yyyy-mm-dd)");
  }
  const long days = days_from_civil(y, m, d);
  if (format_iso_date(days) != s) throw InputError("bad date '" + s + "'");
  return days;
}

std::string format_iso_date(long z) {
  z += 719468;
  const long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long y = static_cast<long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04ld-%02u-%02u", y + (m <= 2), m, d);
  return buf;
}

SeriesPanel read_panel_csv(const std::filesystem::path& path, const std::vector<std::string>& roster) {
  const auto lines = csv::read_lines(path);
  if (lines.empty() || csv::trim(lines[0]) != "date,station_id,value") {
    throw InputError(path.string() + ": expected header 'date,station_id,value'");
  }
  std::vector<std::string> ids = roster;
  std::unordered_map<std::string, std::size_t> id_index;
  for (std::size_t i = 0; i < ids.size(); ++i) id_index[ids[i]] = i;

  struct Obs {
    long day;
    std::size_t station;
    double value;
  };
  std::vector<Obs> obs;
  std::map<std::pair<long, std::size_t>, std::size_t> seen;
  long first = 0, last = 0;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::string where = path.string() + ":" + std::to_string(ln + 1);
    const auto f = csv::split(lines[ln]);
    if (f.size() != 3) throw InputError(where + ": expected 3 fields, got " + std::to_string(f.size()));
    long day = 0;
    try {
      day = parse_iso_date(csv::trim(f[0]));
    } catch (const InputError& e) {
      throw InputError(where + ": " + e.what());
    }
    const std::string id = csv::trim(f[1]);
    if (id.empty()) throw InputError(where + ": empty station_id");
    auto it = id_index.find(id);
    if (it == id_index.end()) {
      if (!roster.empty()) throw InputError(where + ": station '" + id + "' is not in the roster");
      it = id_index.emplace(id, ids.size()).first;
      ids.push_back(id);
    }
    const std::string v = csv::trim(f[2]);
    const double value = (v.empty() || v == "NA" || v == "NaN") ? kMissing : csv::parse_double(v, where);
    if (!seen.emplace(std::make_pair(day, it->second), ln + 1).second) {
      throw InputError(where + ": duplicate row for date " + csv::trim(f[0]) + ", station " + id);
    }
    if (obs.empty()) first = last = day;
    first = std::min(first, day);
    last = std::max(last, day);
    obs.push_back({day, it->second, value});
  }
  if (obs.empty()) throw InputError(path.string() + ": no data rows");

  SeriesPanel panel;
  panel.station_ids = ids;
  const auto t = static_cast<std::size_t>(last - first + 1);
  panel.dates.reserve(t);
  for (long d = first; d <= last; ++d) panel.dates.push_back(format_iso_date(d));
  panel.values.assign(t, std::vector<double>(ids.size(), kMissing));
  for (const auto& o : obs) panel.values[static_cast<std::size_t>(o.day - first)][o.station] = o.value;
  return panel;
}

CleaningReport clean_panel(SeriesPanel& panel, const CleaningOptions& options) {
  if (!(options.missing_frac > 0.0 && options.missing_frac <= 1.0)) {
    throw ConfigError("missing_frac must lie in (0, 1]");
  }
  CleaningReport report;
  const std::size_t t = panel.t();

  // Missing share is judged on the raw data, before any filling.
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < panel.n(); ++i) {
    std::size_t missing = 0;
    for (std::size_t r = 0; r < t; ++r) missing += std::isnan(panel.values[r][i]) ? 1 : 0;
    const double frac = t ? static_cast<double>(missing) / static_cast<double>(t) : 1.0;
    if (frac >= options.missing_frac) {
      report.dropped.push_back(panel.station_ids[i]);
      report.dropped_missing_frac.push_back(frac);
    } else {
      keep.push_back(i);
    }
  }
  if (keep.empty()) throw InputError("every station exceeds the missing-data limit");
  if (keep.size() != panel.n()) {
    std::vector<std::string> ids;
    for (std::size_t i : keep) ids.push_back(panel.station_ids[i]);
    for (auto& row : panel.values) {
      std::vector<double> kept;
      for (std::size_t i : keep) kept.push_back(row[i]);
      row = std::move(kept);
    }
    panel.station_ids = std::move(ids);
  }

  for (std::size_t i = 0; i < panel.n(); ++i) {
    std::size_t r = 0;
    while (r < t) {
      if (!std::isnan(panel.values[r][i])) {
        ++r;
        continue;
      }
      std::size_t end = r;
      while (end < t && std::isnan(panel.values[end][i])) ++end;
      const std::size_t len = end - r;
      if (r == 0) {
        // Leading gap: nothing to carry forward; take the first observation.
        for (std::size_t k = 0; k < end; ++k) panel.values[k][i] = panel.values[end][i];
        report.interpolated += len;
      } else if (len <= options.max_gap || end == t) {
        for (std::size_t k = r; k < end; ++k) panel.values[k][i] = panel.values[r - 1][i];
        report.forward_filled += len;
      } else {
        const double a = panel.values[r - 1][i];
        const double b = panel.values[end][i];
        for (std::size_t k = r; k < end; ++k) {
          const double w = static_cast<double>(k - r + 1) / static_cast<double>(len + 1);
          panel.values[k][i] = a + w * (b - a);
        }
        report.interpolated += len;
      }
      r = end;
    }
  }
  return report;
}

SeriesPanel load_panel_csv(const std::filesystem::path& path, const std::vector<std::string>& roster,
                           const CleaningOptions& options, CleaningReport* report) {
  SeriesPanel panel = read_panel_csv(path, roster);
  CleaningReport r = clean_panel(panel, options);
  if (report) *report = std::move(r);
  return panel;
}

void write_panel_csv(const std::filesystem::path& path, const SeriesPanel& panel) {
  auto out = csv::open_for_write(path);
  out << "date,station_id,value\n";
  for (std::size_t r = 0; r < panel.t(); ++r) {
    for (std::size_t i = 0; i < panel.n(); ++i) {
      out << panel.dates[r] << ',' << panel.station_ids[i] << ',' << csv::format_double(panel.values[r][i]) << '\n';
    }
  }
  if (!out) throw InputError("failed writing " + path.string());
}

}  // namespace estgcn
