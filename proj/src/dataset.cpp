#include "ozcal/dataset.hpp"

#include <algorithm>
#include <string>

namespace ozcal {

void MonitorDataset::reindex() {
  std::sort(records.begin(), records.end(),
            [](const MonitorRecord& a, const MonitorRecord& b) {
              return a.site != b.site ? a.site < b.site : a.day < b.day;
            });
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.site < 0 || r.site >= n_sites()) {
      throw data_error("record references unknown site index " +
                       std::to_string(r.site));
    }
    if (i > 0 && records[i - 1].site == r.site &&
        records[i - 1].day == r.day) {
      throw data_error("duplicate (day, site) record: day " +
                       std::to_string(r.day) + ", site index " +
                       std::to_string(r.site));
    }
  }
  site_ranges.assign(sites.size(), {0, 0});
  std::size_t begin = 0;
  while (begin < records.size()) {
    std::size_t end = begin;
    while (end < records.size() && records[end].site == records[begin].site) {
      ++end;
    }
    site_ranges[records[begin].site] = {begin, end};
    begin = end;
  }
}

void MonitorDataset::link_to_field(const rfm::SensitivityField& field) const {
  for (const auto& s : sites) {
    if (s.cell < 0 || s.cell >= field.n_cells()) {
      throw data_error("site " + std::to_string(s.id) +
                       " maps to unknown cell " + std::to_string(s.cell));
    }
  }
  for (const auto& r : records) {
    if (r.day < 0 || r.day >= field.n_days) {
      throw data_error("record day " + std::to_string(r.day) +
                       " outside the sensitivity field day range");
    }
    if (!(r.value >= 0.0)) {
      throw data_error("negative monitor value at day " +
                       std::to_string(r.day));
    }
  }
}

std::vector<spatial::Point> MonitorDataset::site_points() const {
  std::vector<spatial::Point> pts(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    pts[i] = {sites[i].x_km, sites[i].y_km};
  }
  return pts;
}

std::vector<double> record_concentrations(const rfm::SensitivityField& field,
                                          const MonitorDataset& data,
                                          std::span<const double> alpha) {
  if (alpha.size() != static_cast<std::size_t>(field.n_inputs)) {
    throw input_error("perturbation length does not match field inputs");
  }
  const int n_terms = field.n_terms();
  std::vector<double> w(n_terms);
  rfm::rfm_weights(alpha, w);
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data.records[i];
    const std::size_t idx = field.index(r.day, data.sites[r.site].cell);
    double acc = field.base[idx];
    for (int k = 0; k < n_terms; ++k) acc += w[k] * field.term(k)[idx];
    out[i] = acc;
  }
  return out;
}

}  // namespace ozcal
