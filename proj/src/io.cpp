#include "ozcal/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <system_error>

namespace ozcal::io {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_file_atomic(const fs::path& path,
                       const std::function<void(std::ostream&)>& writer) {
  const fs::path tmp = path.string() + ".tmp";
  try {
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) {
        throw data_error("cannot open " + tmp.string() + " for writing");
      }
      writer(out);
      out.flush();
      if (!out) throw data_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
}

namespace {

class CsvReader {
 public:
  explicit CsvReader(const fs::path& path)
      : path_(path.string()), in_(path) {
    if (!in_) throw data_error("cannot open " + path_);
    if (!read_row(header_)) throw data_error(path_ + ": missing header row");
  }

  const std::vector<std::string>& header() const { return header_; }
  long line() const { return line_; }
  const std::string& path() const { return path_; }

  bool read_row(std::vector<std::string>& fields) {
    std::string line;
    if (!std::getline(in_, line)) return false;
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    fields.clear();
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    return true;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw data_error(path_ + ":" + std::to_string(line_) + ": " + msg);
  }

  double parse_double(const std::string& s) const {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      fail("malformed number '" + s + "'");
    }
    return v;
  }

  long long parse_int(const std::string& s) const {
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      fail("malformed integer '" + s + "'");
    }
    return v;
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::vector<std::string> header_;
  long line_ = 0;  // read_row increments; header is line 1
};

void write_header(std::ostream& out, const std::vector<std::string>& cols) {
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i > 0) out << ',';
    out << cols[i];
  }
  out << '\n';
}

}  // namespace

// ---------------------------------------------------------------------------
// Sensitivity field

void save_sensitivity(const fs::path& path,
                      const rfm::SensitivityField& field) {
  field.validate();
  const int d = field.n_inputs;
  write_file_atomic(path, [&](std::ostream& out) {
    std::vector<std::string> cols{"day", "cell_id", "x_km", "y_km", "c0"};
    for (int j = 1; j <= d; ++j) cols.push_back("s1_" + std::to_string(j));
    for (int j = 1; j <= d; ++j) {
      cols.push_back("s2_" + std::to_string(j) + std::to_string(j));
    }
    for (int l = 1; l <= d; ++l) {
      for (int j = l + 1; j <= d; ++j) {
        cols.push_back("s2_" + std::to_string(l) + std::to_string(j));
      }
    }
    write_header(out, cols);
    for (int t = 0; t < field.n_days; ++t) {
      for (int c = 0; c < field.n_cells(); ++c) {
        const std::size_t i = field.index(t, c);
        out << t << ',' << c << ',' << format_double(field.cells[c].x_km)
            << ',' << format_double(field.cells[c].y_km) << ','
            << format_double(field.base[i]);
        for (int k = 0; k < field.n_terms(); ++k) {
          out << ',' << format_double(field.term(k)[i]);
        }
        out << '\n';
      }
    }
  });
}

rfm::SensitivityField load_sensitivity(const fs::path& path) {
  CsvReader csv(path);
  const auto& h = csv.header();
  if (h.size() < 6 || h[0] != "day" || h[1] != "cell_id" || h[2] != "x_km" ||
      h[3] != "y_km" || h[4] != "c0") {
    throw data_error(path.string() +
                     ": header must start with day,cell_id,x_km,y_km,c0");
  }
  int d = 0;
  while (5 + d < static_cast<int>(h.size()) &&
         h[5 + d] == "s1_" + std::to_string(d + 1)) {
    ++d;
  }
  if (d < 1) throw data_error(path.string() + ": no s1_* columns found");
  const int n_terms = d * (d + 3) / 2;
  if (static_cast<int>(h.size()) != 5 + n_terms) {
    throw data_error(path.string() + ": unexpected column count for d=" +
                     std::to_string(d));
  }
  {
    int col = 5 + d;
    for (int j = 1; j <= d; ++j, ++col) {
      const std::string want = "s2_" + std::to_string(j) + std::to_string(j);
      if (h[col] != want) {
        throw data_error(path.string() + ": expected column " + want);
      }
    }
    for (int l = 1; l <= d; ++l) {
      for (int j = l + 1; j <= d; ++j, ++col) {
        const std::string want = "s2_" + std::to_string(l) + std::to_string(j);
        if (h[col] != want) {
          throw data_error(path.string() + ": expected column " + want);
        }
      }
    }
  }

  struct Row {
    int day, cell;
    double x, y;
    std::vector<double> values;  // c0 + terms
  };
  std::vector<Row> rows;
  std::vector<std::string> f;
  int max_day = -1, max_cell = -1;
  while (csv.read_row(f)) {
    if (f.size() != h.size()) csv.fail("wrong field count");
    Row r;
    r.day = static_cast<int>(csv.parse_int(f[0]));
    r.cell = static_cast<int>(csv.parse_int(f[1]));
    r.x = csv.parse_double(f[2]);
    r.y = csv.parse_double(f[3]);
    if (r.day < 0 || r.cell < 0) csv.fail("negative day or cell id");
    r.values.resize(1 + n_terms);
    for (int k = 0; k <= n_terms; ++k) r.values[k] = csv.parse_double(f[4 + k]);
    max_day = std::max(max_day, r.day);
    max_cell = std::max(max_cell, r.cell);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw data_error(path.string() + ": no data rows");
  const int n_days = max_day + 1;
  const int n_cells = max_cell + 1;
  if (rows.size() != static_cast<std::size_t>(n_days) * n_cells) {
    throw data_error(path.string() + ": incomplete (day, cell) coverage");
  }

  rfm::SensitivityField field;
  field.n_days = n_days;
  field.n_inputs = d;
  field.cells.assign(n_cells, {});
  for (int j = 1; j <= d; ++j) field.input_names.push_back("p" + std::to_string(j));
  const std::size_t n = rows.size();
  field.base.assign(n, 0.0);
  field.first_order.assign(d, std::vector<double>(n));
  field.second_diag.assign(d, std::vector<double>(n));
  field.second_cross.assign(d * (d - 1) / 2, std::vector<double>(n));
  std::vector<bool> seen(n, false);
  std::vector<bool> cell_seen(n_cells, false);
  for (const auto& r : rows) {
    const std::size_t i = field.index(r.day, r.cell);
    if (seen[i]) {
      throw data_error(path.string() + ": duplicate (day, cell) row: day " +
                       std::to_string(r.day) + ", cell " +
                       std::to_string(r.cell));
    }
    seen[i] = true;
    if (cell_seen[r.cell]) {
      const auto& c = field.cells[r.cell];
      if (c.x_km != r.x || c.y_km != r.y) {
        throw data_error(path.string() + ": inconsistent coordinates for cell " +
                         std::to_string(r.cell));
      }
    } else {
      field.cells[r.cell] = {r.x, r.y};
      cell_seen[r.cell] = true;
    }
    field.base[i] = r.values[0];
    int k = 1;
    for (int j = 0; j < d; ++j) field.first_order[j][i] = r.values[k++];
    for (int j = 0; j < d; ++j) field.second_diag[j][i] = r.values[k++];
    for (int p = 0; p < d * (d - 1) / 2; ++p) {
      field.second_cross[p][i] = r.values[k++];
    }
  }
  field.validate();
  return field;
}

// ---------------------------------------------------------------------------
// Monitors

void save_monitors(const fs::path& path, const MonitorDataset& data) {
  write_file_atomic(path, [&](std::ostream& out) {
    write_header(out, {"day", "site_id", "x_km", "y_km", "cell_id", "o3_ppb"});
    for (const auto& r : data.records) {
      const auto& s = data.sites[r.site];
      out << r.day << ',' << s.id << ',' << format_double(s.x_km) << ','
          << format_double(s.y_km) << ',' << s.cell << ','
          << format_double(r.value) << '\n';
    }
  });
}

MonitorDataset load_monitors(const fs::path& path) {
  CsvReader csv(path);
  const std::vector<std::string> want{"day",     "site_id", "x_km",
                                      "y_km",    "cell_id", "o3_ppb"};
  if (csv.header() != want) {
    throw data_error(path.string() +
                     ": header must be day,site_id,x_km,y_km,cell_id,o3_ppb");
  }
  struct Raw {
    int day;
    std::int64_t site_id;
    double x, y, value;
    int cell;
    long line;
  };
  std::vector<Raw> raws;
  std::vector<std::string> f;
  while (csv.read_row(f)) {
    if (f.size() != want.size()) csv.fail("wrong field count");
    Raw r;
    r.day = static_cast<int>(csv.parse_int(f[0]));
    r.site_id = csv.parse_int(f[1]);
    r.x = csv.parse_double(f[2]);
    r.y = csv.parse_double(f[3]);
    r.cell = static_cast<int>(csv.parse_int(f[4]));
    r.value = csv.parse_double(f[5]);
    r.line = csv.line();
    if (r.day < 0) csv.fail("negative day");
    if (r.cell < 0) csv.fail("negative cell id");
    if (!(r.value >= 0.0)) csv.fail("negative o3_ppb value");
    raws.push_back(r);
  }
  MonitorDataset data;
  std::map<std::int64_t, int> site_index;
  for (const auto& r : raws) {
    auto [it, inserted] = site_index.try_emplace(
        r.site_id, static_cast<int>(data.sites.size()));
    if (inserted) {
      data.sites.push_back({r.site_id, r.x, r.y, r.cell});
    } else {
      const auto& s = data.sites[it->second];
      if (s.x_km != r.x || s.y_km != r.y || s.cell != r.cell) {
        throw data_error(path.string() + ":" + std::to_string(r.line) +
                         ": inconsistent metadata for site " +
                         std::to_string(r.site_id));
      }
    }
  }
  for (const auto& r : raws) {
    data.records.push_back({r.day, site_index.at(r.site_id), r.value});
  }
  data.reindex();
  return data;
}

// ---------------------------------------------------------------------------
// Manifest and sites

void save_manifest(const fs::path& path, const FitManifest& m) {
  write_file_atomic(path, [&](std::ostream& out) {
    out << "n_inputs=" << m.n_inputs << '\n'
        << "n_sites=" << m.n_sites << '\n'
        << "basis_count=" << m.settings.basis_count << '\n'
        << "poly_order=" << m.settings.poly_order << '\n'
        << "use_gpd=" << (m.settings.use_gpd ? 1 : 0) << '\n'
        << "iterations=" << m.iterations << '\n'
        << "burn_in=" << m.burn_in << '\n'
        << "seed=" << m.seed << '\n'
        << "train_fraction=" << format_double(m.train_fraction) << '\n';
  });
}

FitManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw data_error(path.string() + ":" + std::to_string(line_no) +
                       ": expected key=value");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) {
      throw data_error(path.string() + ": missing key " + key);
    }
    return it->second;
  };
  FitManifest m;
  m.n_inputs = std::stoi(get("n_inputs"));
  m.n_sites = std::stoi(get("n_sites"));
  m.settings.basis_count = std::stoi(get("basis_count"));
  m.settings.poly_order = std::stoi(get("poly_order"));
  m.settings.use_gpd = std::stoi(get("use_gpd")) != 0;
  m.iterations = std::stoi(get("iterations"));
  m.burn_in = std::stoi(get("burn_in"));
  m.seed = std::stoull(get("seed"));
  m.train_fraction = std::stod(get("train_fraction"));
  return m;
}

void save_sites(const fs::path& path, const std::vector<MonitorSite>& sites) {
  write_file_atomic(path, [&](std::ostream& out) {
    write_header(out, {"site_id", "x_km", "y_km", "cell_id"});
    for (const auto& s : sites) {
      out << s.id << ',' << format_double(s.x_km) << ','
          << format_double(s.y_km) << ',' << s.cell << '\n';
    }
  });
}

std::vector<MonitorSite> load_sites(const fs::path& path) {
  CsvReader csv(path);
  const std::vector<std::string> want{"site_id", "x_km", "y_km", "cell_id"};
  if (csv.header() != want) {
    throw data_error(path.string() + ": bad sites header");
  }
  std::vector<MonitorSite> sites;
  std::vector<std::string> f;
  while (csv.read_row(f)) {
    if (f.size() != want.size()) csv.fail("wrong field count");
    sites.push_back({csv.parse_int(f[0]), csv.parse_double(f[1]),
                     csv.parse_double(f[2]),
                     static_cast<int>(csv.parse_int(f[3]))});
  }
  return sites;
}

// ---------------------------------------------------------------------------
// Posterior, truth, diagnostics

void save_posterior(const fs::path& path,
                    const std::vector<std::string>& names,
                    const std::vector<double>& rows, std::size_t n_rows) {
  write_file_atomic(path, [&](std::ostream& out) {
    write_header(out, names);
    const std::size_t w = names.size();
    for (std::size_t i = 0; i < n_rows; ++i) {
      for (std::size_t c = 0; c < w; ++c) {
        if (c > 0) out << ',';
        out << format_double(rows[i * w + c]);
      }
      out << '\n';
    }
  });
}

inference::PosteriorDraws load_posterior(
    const fs::path& path, const inference::ParameterLayout& layout) {
  CsvReader csv(path);
  if (csv.header() != layout.names()) {
    throw data_error(path.string() +
                     ": posterior columns do not match the expected layout");
  }
  std::vector<double> rows;
  std::vector<std::string> f;
  std::size_t n_rows = 0;
  while (csv.read_row(f)) {
    if (f.size() != layout.size()) csv.fail("wrong field count");
    for (const auto& s : f) rows.push_back(csv.parse_double(s));
    ++n_rows;
  }
  return inference::PosteriorDraws(layout, std::move(rows), n_rows);
}

void save_state(const fs::path& path,
                const inference::ParameterLayout& layout,
                const inference::PosteriorState& state) {
  std::vector<double> row(layout.size());
  layout.pack(state, row);
  save_posterior(path, layout.names(), row, 1);
}

inference::PosteriorState load_state(const fs::path& path,
                                     const inference::ParameterLayout& layout) {
  const auto draws = load_posterior(path, layout);
  if (draws.size() != 1) {
    throw data_error(path.string() + ": expected exactly one row");
  }
  inference::PosteriorState st = layout.make_state();
  draws.state_at(0, st);
  return st;
}

void save_diagnostics(const fs::path& path,
                      const std::vector<inference::BlockStats>& blocks) {
  write_file_atomic(path, [&](std::ostream& out) {
    write_header(out, {"block", "proposals", "accepts", "accept_rate",
                       "proposal_sd"});
    for (const auto& b : blocks) {
      out << b.name << ',' << b.proposals << ',' << b.accepts << ','
          << format_double(b.rate()) << ',' << format_double(b.proposal_sd)
          << '\n';
    }
  });
}

void save_trace(const fs::path& path, const inference::ChainResult& chain,
                int burn_in) {
  write_file_atomic(path, [&](std::ostream& out) {
    std::vector<std::string> cols{"iteration", "phase"};
    cols.insert(cols.end(), chain.trace_names.begin(),
                chain.trace_names.end());
    write_header(out, cols);
    const std::size_t w = chain.trace_names.size();
    const std::size_t n = w > 0 ? chain.traces.size() / w : 0;
    for (std::size_t i = 0; i < n; ++i) {
      out << i << ',' << (static_cast<int>(i) < burn_in ? "burn" : "sample");
      for (std::size_t c = 0; c < w; ++c) {
        out << ',' << format_double(chain.traces[i * w + c]);
      }
      out << '\n';
    }
  });
}

void save_copula(const fs::path& path, const inference::CopulaFit& fit) {
  write_file_atomic(path, [&](std::ostream& out) {
    write_header(out, {"phi", "lag1_corr", "n_pairs", "independence_fallback"});
    out << format_double(fit.params.phi) << ','
        << format_double(fit.lag1_corr) << ',' << fit.n_pairs << ','
        << (fit.independence_fallback ? 1 : 0) << '\n';
  });
}

inference::CopulaFit load_copula(const fs::path& path) {
  CsvReader csv(path);
  const std::vector<std::string> want{"phi", "lag1_corr", "n_pairs",
                                      "independence_fallback"};
  if (csv.header() != want) {
    throw data_error(path.string() + ": bad copula header");
  }
  std::vector<std::string> f;
  if (!csv.read_row(f) || f.size() != want.size()) {
    throw data_error(path.string() + ": missing copula row");
  }
  inference::CopulaFit fit;
  fit.params.phi = csv.parse_double(f[0]);
  fit.lag1_corr = csv.parse_double(f[1]);
  fit.n_pairs = csv.parse_int(f[2]);
  fit.independence_fallback = csv.parse_int(f[3]) != 0;
  return fit;
}

// ---------------------------------------------------------------------------
// Scenario and score outputs

void save_scenario_summary(const fs::path& path,
                           const predict::ScenarioSummary& summary,
                           const rfm::SensitivityField& field) {
  write_file_atomic(path, [&](std::ostream& out) {
    std::vector<std::string> cols{"cell_id", "x_km", "y_km", "mean_kth"};
    for (const double t : summary.thresholds) {
      cols.push_back("p_exceed_" + format_double(t));
    }
    write_header(out, cols);
    for (int c = 0; c < field.n_cells(); ++c) {
      out << c << ',' << format_double(field.cells[c].x_km) << ','
          << format_double(field.cells[c].y_km) << ','
          << format_double(summary.mean_kth[c]);
      for (std::size_t h = 0; h < summary.thresholds.size(); ++h) {
        out << ',' << format_double(summary.p_exceed[h][c]);
      }
      out << '\n';
    }
  });
}

void save_scenario_diff(const fs::path& path,
                        const predict::ScenarioSummary& a,
                        const predict::ScenarioSummary& b,
                        const rfm::SensitivityField& field) {
  if (a.thresholds != b.thresholds ||
      a.mean_kth.size() != b.mean_kth.size()) {
    throw input_error("scenario summaries are not comparable");
  }
  write_file_atomic(path, [&](std::ostream& out) {
    std::vector<std::string> cols{"cell_id", "x_km", "y_km", "d_mean_kth"};
    for (const double t : a.thresholds) {
      cols.push_back("d_p_exceed_" + format_double(t));
    }
    write_header(out, cols);
    for (int c = 0; c < field.n_cells(); ++c) {
      out << c << ',' << format_double(field.cells[c].x_km) << ','
          << format_double(field.cells[c].y_km) << ','
          << format_double(a.mean_kth[c] - b.mean_kth[c]);
      for (std::size_t h = 0; h < a.thresholds.size(); ++h) {
        out << ',' << format_double(a.p_exceed[h][c] - b.p_exceed[h][c]);
      }
      out << '\n';
    }
  });
}

void save_scenario_draws(const fs::path& path,
                         const predict::ScenarioSummary& summary) {
  if (summary.raw_kth.empty()) {
    throw input_error("no retained draws to write; rerun with retention on");
  }
  const std::size_t n_cells = summary.raw_kth.size() /
                              static_cast<std::size_t>(summary.replicates);
  write_file_atomic(path, [&](std::ostream& out) {
    write_header(out, {"replicate", "cell_id", "kth_value"});
    std::size_t i = 0;
    for (int rep = 0; rep < summary.replicates; ++rep) {
      for (std::size_t cell = 0; cell < n_cells; ++cell, ++i) {
        out << rep << ',' << cell << ','
            << format_double(summary.raw_kth[i]) << '\n';
      }
    }
  });
}

void save_scores(const fs::path& path,
                 const std::vector<scoring::ScoreReport>& reports) {
  if (reports.empty()) throw input_error("no score reports to write");
  for (const auto& r : reports) {
    if (r.levels != reports[0].levels ||
        r.thresholds != reports[0].thresholds) {
      throw input_error("score reports use different levels or thresholds");
    }
  }
  write_file_atomic(path, [&](std::ostream& out) {
    std::vector<std::string> cols{"metric", "level"};
    for (const auto& r : reports) cols.push_back(r.label);
    write_header(out, cols);
    const auto& first = reports[0];
    for (std::size_t q = 0; q < first.levels.size(); ++q) {
      out << "quantile," << format_double(first.levels[q]);
      for (const auto& r : reports) {
        out << ',' << format_double(r.quantile_scores[q]);
      }
      out << '\n';
    }
    for (std::size_t h = 0; h < first.thresholds.size(); ++h) {
      out << "brier100," << format_double(first.thresholds[h]);
      for (const auto& r : reports) {
        out << ',' << format_double(r.brier_scores_x100[h]);
      }
      out << '\n';
    }
  });
}

void save_residual_pairs(const fs::path& path,
                         const inference::CopulaFit& fit,
                         const std::vector<MonitorSite>& sites) {
  write_file_atomic(path, [&](std::ostream& out) {
    write_header(out, {"site_id", "day_prev", "day", "z_prev", "z", "zf_prev",
                       "zf"});
    for (std::size_t i = 1; i < fit.residuals.size(); ++i) {
      const auto& a = fit.residuals[i - 1];
      const auto& b = fit.residuals[i];
      if (a.site != b.site || b.day != a.day + 1) continue;
      out << sites[b.site].id << ',' << a.day << ',' << b.day << ','
          << format_double(a.z) << ',' << format_double(b.z) << ','
          << format_double(inference::frechet_transform(a.z)) << ','
          << format_double(inference::frechet_transform(b.z)) << '\n';
    }
  });
}

}  // namespace ozcal::io
