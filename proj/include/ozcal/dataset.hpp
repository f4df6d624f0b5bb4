#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ozcal/rfm.hpp"
#include "ozcal/spatial.hpp"

namespace ozcal {

struct MonitorSite {
  std::int64_t id = 0;  // external identifier from the input file
  double x_km = 0.0;
  double y_km = 0.0;
  int cell = 0;  // containing grid cell in the sensitivity field
};

struct MonitorRecord {
  int day = 0;
  int site = 0;  // index into MonitorDataset::sites
  double value = 0.0;  // MD8 ozone, ppb
};

/// Point monitor observations linked to grid cells. Records are kept sorted
/// by (site, day); per-site ranges are rebuilt by reindex().
struct MonitorDataset {
  std::vector<MonitorSite> sites;
  std::vector<MonitorRecord> records;
  std::vector<std::pair<std::size_t, std::size_t>> site_ranges;

  std::size_t size() const { return records.size(); }
  int n_sites() const { return static_cast<int>(sites.size()); }

  /// Sorts records and rebuilds site ranges; rejects duplicate (day, site)
  /// pairs and out-of-range site indices.
  void reindex();

  /// Checks record days, cell links, and nonnegative values against the
  /// sensitivity field; throws data_error on violation.
  void link_to_field(const rfm::SensitivityField& field) const;

  std::vector<spatial::Point> site_points() const;
};

/// Concentration at each record's (day, cell) for a given perturbation.
std::vector<double> record_concentrations(const rfm::SensitivityField& field,
                                          const MonitorDataset& data,
                                          std::span<const double> alpha);

}  // namespace ozcal
