#include "ozcal/inference.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ozcal/kernels.hpp"
#include "ozcal/normal.hpp"

namespace ozcal::inference {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

int process_count(const ModelSettings& s) {
  return s.basis_count + 1 + (s.use_gpd ? 1 : 0);
}

std::string process_name(int k, const ModelSettings& s) {
  if (k == 0) return "beta";
  if (k <= s.basis_count) return "theta" + std::to_string(k);
  return "sigma";
}

/// Reference to coefficient j of process k at one site.
double& coeff_ref(evt::SiteCoeffs& sc, int k, int j, const ModelSettings& s) {
  if (k == 0) return sc.a_beta[j];
  if (k <= s.basis_count) return sc.a_theta[k - 1][j];
  return sc.a_sigma[j];
}

double gaussian_log_prior(double x, double sd) {
  const double z = x / sd;
  return -0.5 * z * z;
}

}  // namespace

// ---------------------------------------------------------------------------
// ParameterLayout

ParameterLayout::ParameterLayout(int n_inputs, int n_sites,
                                 ModelSettings settings)
    : d_(n_inputs), n_sites_(n_sites), settings_(settings) {
  if (d_ < 1 || n_sites_ < 1) {
    throw input_error("layout needs at least one input and one site");
  }
  n_processes_ = process_count(settings_);
  const int M = settings_.poly_order;
  for (int j = 1; j <= d_; ++j) {
    names_.push_back("alpha_" + std::to_string(j));
  }
  for (int k = 0; k < n_processes_; ++k) {
    const std::string p = process_name(k, settings_);
    for (int j = 0; j <= M; ++j) {
      for (int s = 0; s < n_sites_; ++s) {
        names_.push_back("a_" + p + "_j" + std::to_string(j) + "_s" +
                         std::to_string(s));
      }
    }
  }
  if (settings_.use_gpd) {
    for (int j = 0; j <= M; ++j) names_.push_back("a_xi_j" + std::to_string(j));
    for (int j = 0; j <= M; ++j) names_.push_back("a_d_j" + std::to_string(j));
    names_.push_back("thr_l");
    names_.push_back("thr_u");
  }
  for (int k = 0; k < n_processes_; ++k) {
    const std::string p = process_name(k, settings_);
    for (int j = 0; j <= M; ++j) {
      names_.push_back("abar_" + p + "_j" + std::to_string(j));
      names_.push_back("tau_" + p + "_j" + std::to_string(j));
    }
  }
  names_.push_back("rho");
}

namespace {

/// Enumerates every scalar of a state in layout order.
template <typename F>
void visit_state(PosteriorState& st, const ModelSettings& settings, int d,
                 int n_sites, F&& f) {
  const int M = settings.poly_order;
  const int P = process_count(settings);
  for (int j = 0; j < d; ++j) f(st.alpha.values[j]);
  for (int k = 0; k < P; ++k) {
    for (int j = 0; j <= M; ++j) {
      for (int s = 0; s < n_sites; ++s) {
        f(coeff_ref(st.site[s], k, j, settings));
      }
    }
  }
  if (settings.use_gpd) {
    for (int j = 0; j <= M; ++j) f(st.global.a_xi[j]);
    for (int j = 0; j <= M; ++j) f(st.global.a_d[j]);
    f(st.global.thr_lower);
    f(st.global.thr_upper);
  }
  for (int k = 0; k < P; ++k) {
    for (int j = 0; j <= M; ++j) {
      f(st.hyper.mean[k][j]);
      f(st.hyper.variance[k][j]);
    }
  }
  f(st.hyper.range);
}

}  // namespace

void ParameterLayout::pack(const PosteriorState& state,
                           std::span<double> out) const {
  if (out.size() != size()) throw input_error("pack: span size mismatch");
  std::size_t i = 0;
  visit_state(const_cast<PosteriorState&>(state), settings_, d_, n_sites_,
              [&](double& v) { out[i++] = v; });
}

void ParameterLayout::unpack(std::span<const double> row,
                             PosteriorState& state) const {
  if (row.size() != size()) throw input_error("unpack: row size mismatch");
  std::size_t i = 0;
  visit_state(state, settings_, d_, n_sites_,
              [&](double& v) { v = row[i++]; });
}

PosteriorState ParameterLayout::make_state() const {
  const int M = settings_.poly_order;
  const int L = settings_.basis_count;
  const int P = n_processes_;
  PosteriorState st;
  st.alpha.values.assign(d_, 0.0);
  st.site.resize(n_sites_);
  for (auto& sc : st.site) {
    sc.a_beta.assign(M + 1, 0.0);
    sc.a_theta.assign(L, std::vector<double>(M + 1, 0.0));
    sc.a_sigma.assign(M + 1, 0.0);
  }
  st.global.a_xi.assign(M + 1, 0.0);
  st.global.a_d.assign(M + 1, 0.0);
  if (!settings_.use_gpd) {
    st.global.thr_lower = 1.0;
    st.global.thr_upper = 1.0;
  } else {
    st.global.thr_lower = 0.85;
    st.global.thr_upper = 0.95;
  }
  st.hyper.mean.assign(P, std::vector<double>(M + 1, 0.0));
  st.hyper.variance.assign(P, std::vector<double>(M + 1, 1.0));
  st.hyper.range = 50.0;
  return st;
}

std::size_t ParameterLayout::index_of(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw input_error("unknown parameter name: " + name);
  return static_cast<std::size_t>(it - names_.begin());
}

// ---------------------------------------------------------------------------
// Likelihood

namespace {

/// Per-record view of the data with gathered sensitivity terms, so a new
/// perturbation turns into one weighted-sum kernel pass.
class LikelihoodEvaluator {
 public:
  LikelihoodEvaluator(const MonitorDataset& data,
                      const rfm::SensitivityField& field,
                      const ModelSettings& settings)
      : data_(&data), basis_(settings.basis_count) {
    field.validate();
    data.link_to_field(field);
    const std::size_t n = data.size();
    const int n_terms = field.n_terms();
    rec_base_.resize(n);
    rec_terms_.assign(n_terms, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = data.records[i];
      const std::size_t idx = field.index(r.day, data.sites[r.site].cell);
      rec_base_[i] = field.base[idx];
      for (int k = 0; k < n_terms; ++k) {
        rec_terms_[k][i] = field.term(k)[idx];
      }
    }
    term_ptrs_.resize(n_terms);
    for (int k = 0; k < n_terms; ++k) term_ptrs_[k] = rec_terms_[k].data();
    n_inputs_ = field.n_inputs;
  }

  std::size_t n_records() const { return data_->size(); }
  const evt::QuantileBasis& basis() const { return basis_; }

  void concentrations(std::span<const double> alpha,
                      std::vector<double>& out) const {
    std::vector<double> w(term_ptrs_.size());
    rfm::rfm_weights(alpha, w);
    out.resize(rec_base_.size());
    kernels::weighted_sum(out.data(), rec_base_.data(), out.size(),
                          term_ptrs_.data(), w.data(), w.size());
  }

  double site_loglik(const PosteriorState& state, int site,
                     std::span<const double> c) const {
    const auto [begin, end] = data_->site_ranges[site];
    double ll = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const auto dist =
          evt::resolve(state.site[site], state.global, basis_, c[i]);
      ll += dist.log_density(data_->records[i].value);
      if (ll == kNegInf) return kNegInf;
    }
    return ll;
  }

  void all_site_logliks(const PosteriorState& state,
                        std::span<const double> c,
                        std::vector<double>& out) const {
    out.resize(data_->sites.size());
    for (int s = 0; s < data_->n_sites(); ++s) {
      out[s] = site_loglik(state, s, c);
    }
  }

  int n_inputs() const { return n_inputs_; }

 private:
  const MonitorDataset* data_;
  evt::QuantileBasis basis_;
  std::vector<double> rec_base_;
  std::vector<std::vector<double>> rec_terms_;
  std::vector<const double*> term_ptrs_;
  int n_inputs_ = 0;
};

double sum_finite(std::span<const double> v) {
  double s = 0.0;
  for (const double x : v) {
    s += x;
    if (s == kNegInf) return kNegInf;
  }
  return s;
}

}  // namespace

double log_likelihood(const PosteriorState& state, const MonitorDataset& data,
                      const rfm::SensitivityField& field,
                      const ModelSettings& settings) {
  LikelihoodEvaluator eval(data, field, settings);
  std::vector<double> c;
  eval.concentrations(state.alpha.values, c);
  std::vector<double> site_ll;
  eval.all_site_logliks(state, c, site_ll);
  return sum_finite(site_ll);
}

// ---------------------------------------------------------------------------
// Metropolis step

MhStep mh_step(double current, double current_log_target, double proposal_sd,
               const std::function<double(double)>& cand_log_target,
               Rng& rng) {
  if (!(proposal_sd >= 0.0)) {
    throw input_error("proposal sd must be nonnegative");
  }
  const double cand = current + proposal_sd * rng.normal();
  const double lt = cand_log_target(cand);
  MhStep out;
  out.value = current;
  out.log_target = current_log_target;
  if (std::isnan(lt) || lt == kNegInf) {
    out.accept_prob = 0.0;
    return out;
  }
  const double log_ratio = lt - current_log_target;
  out.accept_prob = std::min(1.0, std::exp(log_ratio));
  const bool accept =
      log_ratio >= 0.0 || std::log(rng.uniform01()) < log_ratio;
  if (accept) {
    out.accepted = true;
    out.value = cand;
    out.log_target = lt;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Chain driver

namespace {

struct Block {
  std::string name;
  double log_sd = std::log(0.1);
  long proposals = 0;
  long accepts = 0;
  // Batched multiplicative adaptation state.
  long batch_count = 0;
  double batch_sum = 0.0;
  int batch_n = 0;
};

class Driver {
 public:
  Driver(const ModelSettings& settings, const McmcConfig& config,
         const MonitorDataset& data, const rfm::SensitivityField& field)
      : s_(settings),
        cfg_(config),
        data_(&data),
        eval_(data, field, settings),
        layout_(field.n_inputs, data.n_sites(), settings),
        prior_cur_(data.site_points()),
        prior_cand_(data.site_points()),
        rng_(derive_seed(config.seed, "chain")) {
    if (cfg_.burn_in < 0 || cfg_.burn_in >= cfg_.iterations) {
      throw input_error("burn_in must be in [0, iterations)");
    }
    state_ = layout_.make_state();
    initialize_state();
    prior_cur_.set_range(state_.hyper.range);
    prior_cand_.set_range(state_.hyper.range);
    eval_.concentrations(state_.alpha.values, c_cur_);
    c_cand_ = c_cur_;
    eval_.all_site_logliks(state_, c_cur_, site_ll_);
    if (sum_finite(site_ll_) == kNegInf) {
      throw numerical_error(
          "non-finite likelihood at the initial state; check that monitor "
          "values are consistent with the field and model settings");
    }
    build_blocks();
  }

  ChainResult run();

 private:
  void initialize_state();
  void build_blocks();
  double total_ll() const { return sum_finite(site_ll_); }

  void adapt(Block& b, double accept_prob, int iter) {
    b.proposals += 1;
    if (iter >= cfg_.burn_in) return;
    b.batch_sum += accept_prob;
    if (++b.batch_n < cfg_.adapt_window) return;
    b.batch_count += 1;
    const double rate = b.batch_sum / b.batch_n;
    b.batch_sum = 0.0;
    b.batch_n = 0;
    // Early batches may move the scale by whole e-folds; the cap shrinks so
    // late burn-in only nudges it.
    const double bound =
        std::min(0.08, 1.5 / std::sqrt(static_cast<double>(b.batch_count)));
    const double step = cfg_.adapt_rate *
                        std::log((rate + 0.02) / (cfg_.target_accept + 0.02));
    b.log_sd = std::clamp(b.log_sd + std::clamp(step, -bound, bound), -12.0,
                          6.0);
  }

  void update_alpha(int j, int iter);
  void update_global_coeff(std::vector<double>& vec, int j, Block& b,
                           int iter);
  void update_thr_lower(int iter);
  void update_thr_upper(int iter);
  void update_site_coeff(int k, int j, int site, int iter);
  void update_hyper_mean(int k, int j, int iter);
  void update_hyper_variance(int k, int j, int iter);
  void update_range(int iter);

  void gather_process(int k, int j, std::vector<double>& out) {
    out.resize(state_.site.size());
    for (std::size_t s = 0; s < state_.site.size(); ++s) {
      out[s] = coeff(k, j, static_cast<int>(s));
    }
  }
  double& coeff(int k, int j, int site) {
    return coeff_ref(state_.site[site], k, j, s_);
  }

  ModelSettings s_;
  McmcConfig cfg_;
  const MonitorDataset* data_;
  LikelihoodEvaluator eval_;
  ParameterLayout layout_;
  spatial::SitePrior prior_cur_;
  spatial::SitePrior prior_cand_;
  Rng rng_;

  PosteriorState state_;
  std::vector<double> c_cur_, c_cand_;
  std::vector<double> site_ll_, site_ll_cand_;
  std::vector<double> scratch_vec_, scratch_vec2_;
  double cand_site_ll_ = 0.0;

  std::vector<Block> blocks_;
  // Block index bases in the fixed scan order.
  int b_alpha_ = 0, b_xi_ = 0, b_d_ = 0, b_thr_ = 0, b_site_ = 0,
      b_hyper_ = 0, b_range_ = 0;
};

void Driver::initialize_state() {
  const int M = s_.poly_order;
  const int L = s_.basis_count;
  // Per-site least squares of y on the covariate row at alpha = 0 gives the
  // location start; residual spread seeds the scale processes.
  std::vector<double> c0;
  eval_.concentrations(state_.alpha.values, c0);
  double global_mean = 50.0;
  if (!data_->records.empty()) {
    double sum = 0.0;
    for (const auto& r : data_->records) sum += r.value;
    global_mean = sum / static_cast<double>(data_->records.size());
  }
  for (int site = 0; site < data_->n_sites(); ++site) {
    auto& sc = state_.site[site];
    const auto [begin, end] = data_->site_ranges[site];
    const long n = static_cast<long>(end - begin);
    double resid_sd = 5.0;
    if (n >= M + 2) {
      Eigen::MatrixXd x(n, M + 1);
      Eigen::VectorXd y(n);
      std::vector<double> row(M + 1);
      for (long i = 0; i < n; ++i) {
        evt::covariate_row(c0[begin + i], M, state_.global.center,
                           state_.global.scale, row);
        for (int m = 0; m <= M; ++m) x(i, m) = row[m];
        y(i) = data_->records[begin + i].value;
      }
      const Eigen::VectorXd b = x.colPivHouseholderQr().solve(y);
      for (int m = 0; m <= M; ++m) sc.a_beta[m] = b(m);
      const double rss = (y - x * b).squaredNorm();
      resid_sd = std::sqrt(rss / std::max<long>(n - (M + 1), 1));
    } else if (n >= 1) {
      double sum = 0.0;
      for (long i = 0; i < n; ++i) sum += data_->records[begin + i].value;
      sc.a_beta[0] = sum / n;
    } else {
      sc.a_beta[0] = global_mean;
    }
    resid_sd = std::max(resid_sd, 0.5);
    for (int l = 0; l < L; ++l) sc.a_theta[l][0] = std::log(resid_sd);
    sc.a_sigma[0] = std::log(0.5 * resid_sd);
  }
  // Hyper starts: moments of the initialized coefficient fields and half the
  // median pairwise distance for the range. Higher-order coefficients start
  // identical across sites, so the variance needs a floor or the Gamma(c2,c3)
  // spike at zero pins the whole process before burn-in can spread it.
  const int P = process_count(s_);
  for (int k = 0; k < P; ++k) {
    for (int j = 0; j <= M; ++j) {
      std::vector<double> v;
      gather_process(k, j, v);
      const double mean =
          std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      double var = 0.0;
      for (const double x : v) var += (x - mean) * (x - mean);
      var = v.size() > 1 ? var / (v.size() - 1) : 1.0;
      state_.hyper.mean[k][j] = mean;
      state_.hyper.variance[k][j] = std::max(var, j == 0 ? 0.05 : 0.01);
    }
  }
  std::vector<double> dists;
  const auto pts = data_->site_points();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      dists.push_back(spatial::distance(pts[i], pts[j]));
    }
  }
  if (!dists.empty()) {
    std::nth_element(dists.begin(), dists.begin() + dists.size() / 2,
                     dists.end());
    state_.hyper.range = std::max(0.5 * dists[dists.size() / 2], 1.0);
  }
}

void Driver::build_blocks() {
  const int M = s_.poly_order;
  const int P = process_count(s_);
  const int d = eval_.n_inputs();
  b_alpha_ = 0;
  for (int j = 1; j <= d; ++j) {
    blocks_.push_back({"alpha_" + std::to_string(j), std::log(0.02), 0, 0, 0});
  }
  if (s_.use_gpd) {
    b_xi_ = static_cast<int>(blocks_.size());
    for (int j = 0; j <= M; ++j) {
      blocks_.push_back({"a_xi_j" + std::to_string(j), std::log(0.05), 0, 0, 0});
    }
    b_d_ = static_cast<int>(blocks_.size());
    for (int j = 0; j <= M; ++j) {
      blocks_.push_back({"a_d_j" + std::to_string(j), std::log(0.1), 0, 0, 0});
    }
    b_thr_ = static_cast<int>(blocks_.size());
    blocks_.push_back({"thr_l", std::log(0.3), 0, 0, 0});
    blocks_.push_back({"thr_u", std::log(0.3), 0, 0, 0});
  }
  b_site_ = static_cast<int>(blocks_.size());
  for (int k = 0; k < P; ++k) {
    for (int j = 0; j <= M; ++j) {
      for (int site = 0; site < data_->n_sites(); ++site) {
        blocks_.push_back({"a_" + process_name(k, s_) + "_j" +
                               std::to_string(j) + "_s" + std::to_string(site),
                           std::log(0.1), 0, 0, 0});
      }
    }
  }
  b_hyper_ = static_cast<int>(blocks_.size());
  for (int k = 0; k < P; ++k) {
    for (int j = 0; j <= M; ++j) {
      blocks_.push_back({"abar_" + process_name(k, s_) + "_j" +
                             std::to_string(j),
                         std::log(0.2), 0, 0, 0});
      blocks_.push_back({"tau_" + process_name(k, s_) + "_j" +
                             std::to_string(j),
                         std::log(0.5), 0, 0, 0});
    }
  }
  b_range_ = static_cast<int>(blocks_.size());
  blocks_.push_back({"rho", std::log(0.3), 0, 0, 0});
}

void Driver::update_alpha(int j, int iter) {
  Block& b = blocks_[b_alpha_ + j];
  const double sd = std::exp(b.log_sd);
  const double cur = state_.alpha.values[j];
  const double cur_target =
      total_ll() + gaussian_log_prior(cur, cfg_.alpha_prior_sd);
  const auto st = mh_step(
      cur, cur_target, sd,
      [&](double cand) {
        if (!(cand > -1.0)) return kNegInf;  // truncated prior support
        state_.alpha.values[j] = cand;
        eval_.concentrations(state_.alpha.values, c_cand_);
        eval_.all_site_logliks(state_, c_cand_, site_ll_cand_);
        state_.alpha.values[j] = cur;
        const double ll = sum_finite(site_ll_cand_);
        if (ll == kNegInf) return kNegInf;
        return ll + gaussian_log_prior(cand, cfg_.alpha_prior_sd);
      },
      rng_);
  if (st.accepted) {
    state_.alpha.values[j] = st.value;
    std::swap(c_cur_, c_cand_);
    site_ll_ = site_ll_cand_;
    b.accepts += 1;
  }
  adapt(b, st.accept_prob, iter);
}

void Driver::update_global_coeff(std::vector<double>& vec, int j, Block& b,
                                 int iter) {
  const double sd = std::exp(b.log_sd);
  const double cur = vec[j];
  const double cur_target =
      total_ll() + gaussian_log_prior(cur, cfg_.coef_prior_sd);
  const auto st = mh_step(
      cur, cur_target, sd,
      [&](double cand) {
        vec[j] = cand;
        eval_.all_site_logliks(state_, c_cur_, site_ll_cand_);
        vec[j] = cur;
        const double ll = sum_finite(site_ll_cand_);
        if (ll == kNegInf) return kNegInf;
        return ll + gaussian_log_prior(cand, cfg_.coef_prior_sd);
      },
      rng_);
  if (st.accepted) {
    vec[j] = st.value;
    site_ll_ = site_ll_cand_;
    b.accepts += 1;
  }
  adapt(b, st.accept_prob, iter);
}

namespace {

// Logistic reparameterization p -> logit(p) for bounded scalars; the MH
// ratio needs log|dp/dpsi| = log(p (1-p)) (constant width factors cancel).
double logit(double p) { return std::log(p / (1.0 - p)); }
double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double log_logit_jacobian(double p) { return std::log(p) + std::log1p(-p); }

}  // namespace

void Driver::update_thr_lower(int iter) {
  Block& b = blocks_[b_thr_];
  const double lmin = cfg_.thr_lower_min;
  const double cur = state_.global.thr_lower;
  const double u = state_.global.thr_upper;
  const double p_cur = (cur - lmin) / (1.0 - lmin);
  // Target in psi space: loglik + u|l prior density + transform Jacobian.
  const double cur_target = total_ll() - std::log1p(-cur) +
                            log_logit_jacobian(p_cur);
  const auto st = mh_step(
      logit(p_cur), cur_target, std::exp(b.log_sd),
      [&](double psi) {
        const double p = expit(psi);
        const double cand = lmin + (1.0 - lmin) * p;
        if (!(cand < u)) return kNegInf;  // keep lower <= upper
        state_.global.thr_lower = cand;
        eval_.all_site_logliks(state_, c_cur_, site_ll_cand_);
        state_.global.thr_lower = cur;
        const double ll = sum_finite(site_ll_cand_);
        if (ll == kNegInf) return kNegInf;
        return ll - std::log1p(-cand) + log_logit_jacobian(p);
      },
      rng_);
  if (st.accepted) {
    state_.global.thr_lower = lmin + (1.0 - lmin) * expit(st.value);
    site_ll_ = site_ll_cand_;
    b.accepts += 1;
  }
  adapt(b, st.accept_prob, iter);
}

void Driver::update_thr_upper(int iter) {
  Block& b = blocks_[b_thr_ + 1];
  const double l = state_.global.thr_lower;
  const double cur = state_.global.thr_upper;
  const double p_cur = (cur - l) / (1.0 - l);
  const double cur_target = total_ll() + log_logit_jacobian(p_cur);
  const auto st = mh_step(
      logit(p_cur), cur_target, std::exp(b.log_sd),
      [&](double psi) {
        const double p = expit(psi);
        const double cand = l + (1.0 - l) * p;
        if (!(cand > l && cand < 1.0)) return kNegInf;
        state_.global.thr_upper = cand;
        eval_.all_site_logliks(state_, c_cur_, site_ll_cand_);
        state_.global.thr_upper = cur;
        const double ll = sum_finite(site_ll_cand_);
        if (ll == kNegInf) return kNegInf;
        return ll + log_logit_jacobian(p);
      },
      rng_);
  if (st.accepted) {
    state_.global.thr_upper = l + (1.0 - l) * expit(st.value);
    site_ll_ = site_ll_cand_;
    b.accepts += 1;
  }
  adapt(b, st.accept_prob, iter);
}

void Driver::update_site_coeff(int k, int j, int site, int iter) {
  const int M = s_.poly_order;
  const int idx =
      b_site_ + (k * (M + 1) + j) * data_->n_sites() + site;
  Block& b = blocks_[idx];
  const double cur = coeff(k, j, site);
  gather_process(k, j, scratch_vec_);
  const double mean = state_.hyper.mean[k][j];
  const double var = state_.hyper.variance[k][j];
  const double prior_cur = prior_cur_.log_density(scratch_vec_, mean, var);
  const double ll_cur = site_ll_[site];
  const auto st = mh_step(
      cur, ll_cur + prior_cur, std::exp(b.log_sd),
      [&](double cand) {
        coeff(k, j, site) = cand;
        const double ll = eval_.site_loglik(state_, site, c_cur_);
        coeff(k, j, site) = cur;
        if (ll == kNegInf) return kNegInf;
        scratch_vec2_ = scratch_vec_;
        scratch_vec2_[site] = cand;
        cand_site_ll_ = ll;
        return ll + prior_cur_.log_density(scratch_vec2_, mean, var);
      },
      rng_);
  if (st.accepted) {
    coeff(k, j, site) = st.value;
    site_ll_[site] = cand_site_ll_;
    b.accepts += 1;
  }
  adapt(b, st.accept_prob, iter);
}

void Driver::update_hyper_mean(int k, int j, int iter) {
  const int M = s_.poly_order;
  Block& b = blocks_[b_hyper_ + 2 * (k * (M + 1) + j)];
  const double cur = state_.hyper.mean[k][j];
  const double var = state_.hyper.variance[k][j];
  gather_process(k, j, scratch_vec_);
  const double cur_target = prior_cur_.log_density(scratch_vec_, cur, var) +
                            gaussian_log_prior(cur, cfg_.coef_prior_sd);
  const auto st = mh_step(
      cur, cur_target, std::exp(b.log_sd),
      [&](double cand) {
        return prior_cur_.log_density(scratch_vec_, cand, var) +
               gaussian_log_prior(cand, cfg_.coef_prior_sd);
      },
      rng_);
  if (st.accepted) {
    state_.hyper.mean[k][j] = st.value;
    b.accepts += 1;
  }
  adapt(b, st.accept_prob, iter);
}

void Driver::update_hyper_variance(int k, int j, int iter) {
  const int M = s_.poly_order;
  Block& b = blocks_[b_hyper_ + 2 * (k * (M + 1) + j) + 1];
  const double cur = state_.hyper.variance[k][j];
  const double mean = state_.hyper.mean[k][j];
  gather_process(k, j, scratch_vec_);
  const auto log_target = [&](double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) return kNegInf;
    // Gamma(shape, rate) prior on the variance plus the log-scale Jacobian.
    return prior_cur_.log_density(scratch_vec_, mean, tau) +
           (cfg_.hyper_var_shape - 1.0) * std::log(tau) -
           cfg_.hyper_var_rate * tau + std::log(tau);
  };
  const auto st = mh_step(
      std::log(cur), log_target(cur), std::exp(b.log_sd),
      [&](double log_cand) { return log_target(std::exp(log_cand)); },
      rng_);
  if (st.accepted) {
    state_.hyper.variance[k][j] = std::exp(st.value);
    b.accepts += 1;
  }
  adapt(b, st.accept_prob, iter);
}

void Driver::update_range(int iter) {
  Block& b = blocks_[b_range_];
  const int M = s_.poly_order;
  const int P = process_count(s_);
  const auto sum_gp = [&](const spatial::SitePrior& prior) {
    double s = 0.0;
    for (int k = 0; k < P; ++k) {
      for (int j = 0; j <= M; ++j) {
        gather_process(k, j, scratch_vec_);
        s += prior.log_density(scratch_vec_, state_.hyper.mean[k][j],
                               state_.hyper.variance[k][j]);
      }
    }
    return s;
  };
  const double cur_log_range = std::log(state_.hyper.range);
  const double cur_target =
      sum_gp(prior_cur_) -
      0.5 * cur_log_range * cur_log_range / cfg_.log_range_prior_var;
  const auto st = mh_step(
      cur_log_range, cur_target, std::exp(b.log_sd),
      [&](double cand_log) {
        const double cand = std::exp(cand_log);
        if (!(cand > 0.0) || !std::isfinite(cand)) return kNegInf;
        try {
          prior_cand_.set_range(cand);
        } catch (const numerical_error&) {
          return kNegInf;
        }
        return sum_gp(prior_cand_) -
               0.5 * cand_log * cand_log / cfg_.log_range_prior_var;
      },
      rng_);
  if (st.accepted) {
    state_.hyper.range = std::exp(st.value);
    std::swap(prior_cur_, prior_cand_);
    b.accepts += 1;
  }
  adapt(b, st.accept_prob, iter);
}

ChainResult Driver::run() {
  const int M = s_.poly_order;
  const int P = process_count(s_);
  const int d = eval_.n_inputs();

  ChainResult out;
  out.settings = s_;
  out.names = layout_.names();
  out.n_draws = static_cast<std::size_t>(cfg_.iterations - cfg_.burn_in);
  out.draws.resize(out.n_draws * out.names.size());

  for (int j = 1; j <= d; ++j) out.trace_names.push_back("alpha_" + std::to_string(j));
  if (s_.use_gpd) {
    out.trace_names.push_back("thr_l");
    out.trace_names.push_back("thr_u");
  }
  out.trace_names.push_back("rho");
  out.trace_names.push_back("loglik");
  out.traces.reserve(static_cast<std::size_t>(cfg_.iterations) *
                     out.trace_names.size());

  std::size_t draw_row = 0;
  for (int iter = 0; iter < cfg_.iterations; ++iter) {
    if (iter == cfg_.burn_in) {
      // Freeze adaptation and restart acceptance accounting.
      for (auto& b : blocks_) {
        b.proposals = 0;
        b.accepts = 0;
      }
    }
    // Fixed scan order: alpha, global tail coefficients, site-varying
    // processes, GP hyperparameters (incl. range), threshold bounds.
    for (int j = 0; j < d; ++j) update_alpha(j, iter);
    if (s_.use_gpd) {
      for (int j = 0; j <= M; ++j) {
        update_global_coeff(state_.global.a_xi, j, blocks_[b_xi_ + j], iter);
      }
      for (int j = 0; j <= M; ++j) {
        update_global_coeff(state_.global.a_d, j, blocks_[b_d_ + j], iter);
      }
    }
    for (int k = 0; k < P; ++k) {
      for (int j = 0; j <= M; ++j) {
        for (int site = 0; site < data_->n_sites(); ++site) {
          update_site_coeff(k, j, site, iter);
        }
      }
    }
    for (int k = 0; k < P; ++k) {
      for (int j = 0; j <= M; ++j) {
        update_hyper_mean(k, j, iter);
        update_hyper_variance(k, j, iter);
      }
    }
    update_range(iter);
    if (s_.use_gpd) {
      update_thr_lower(iter);
      update_thr_upper(iter);
    }

    for (int j = 0; j < d; ++j) out.traces.push_back(state_.alpha.values[j]);
    if (s_.use_gpd) {
      out.traces.push_back(state_.global.thr_lower);
      out.traces.push_back(state_.global.thr_upper);
    }
    out.traces.push_back(state_.hyper.range);
    out.traces.push_back(total_ll());

    if (iter >= cfg_.burn_in) {
      layout_.pack(state_, std::span<double>(
                               out.draws.data() + draw_row * out.names.size(),
                               out.names.size()));
      ++draw_row;
    }
  }

  out.blocks.reserve(blocks_.size());
  for (const auto& b : blocks_) {
    out.blocks.push_back(
        {b.name, b.proposals, b.accepts, std::exp(b.log_sd)});
  }
  return out;
}

}  // namespace

ChainResult run_chain(const ModelSettings& settings, const McmcConfig& config,
                      const MonitorDataset& data,
                      const rfm::SensitivityField& field) {
  Driver driver(settings, config, data, field);
  return driver.run();
}

// ---------------------------------------------------------------------------
// Posterior draws

PosteriorDraws::PosteriorDraws(ParameterLayout layout,
                               std::vector<double> rows, std::size_t n_rows)
    : layout_(std::move(layout)), rows_(std::move(rows)), n_rows_(n_rows) {
  if (rows_.size() != n_rows_ * layout_.size()) {
    throw input_error("posterior rows do not match layout size");
  }
  if (n_rows_ == 0) throw input_error("posterior draws must be nonempty");
}

PosteriorState PosteriorDraws::mean_state() const {
  std::vector<double> mean(layout_.size(), 0.0);
  for (std::size_t i = 0; i < n_rows_; ++i) {
    const auto r = row(i);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += r[c];
  }
  for (double& m : mean) m /= static_cast<double>(n_rows_);
  PosteriorState st = layout_.make_state();
  layout_.unpack(mean, st);
  return st;
}

// ---------------------------------------------------------------------------
// Stage two: copula

double phi_from_lag1(double corr) {
  if (!(corr > 0.0 && corr < 1.0)) {
    throw input_error("lag-1 correlation must lie in (0,1)");
  }
  return -1.0 / std::log(corr);
}

CopulaFit fit_copula(const PosteriorState& mean_state,
                     const MonitorDataset& data,
                     const rfm::SensitivityField& field,
                     const ModelSettings& settings) {
  const evt::QuantileBasis basis(settings.basis_count);
  const std::vector<double> c =
      record_concentrations(field, data, mean_state.alpha.values);
  CopulaFit fit;
  fit.residuals.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data.records[i];
    const auto dist =
        evt::resolve(mean_state.site[r.site], mean_state.global, basis, c[i]);
    const double f = std::clamp(dist.cdf(r.value), evt::kTauClamp,
                                1.0 - evt::kTauClamp);
    fit.residuals.push_back({r.site, r.day, norm_quantile(f)});
  }
  // Records are sorted by (site, day); consecutive-day pairs at a site.
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  long n = 0;
  for (std::size_t i = 1; i < fit.residuals.size(); ++i) {
    const auto& a = fit.residuals[i - 1];
    const auto& b = fit.residuals[i];
    if (a.site == b.site && b.day == a.day + 1) {
      sx += a.z;
      sy += b.z;
      sxx += a.z * a.z;
      syy += b.z * b.z;
      sxy += a.z * b.z;
      ++n;
    }
  }
  fit.n_pairs = n;
  if (n >= 2) {
    const double cov = sxy - sx * sy / n;
    const double vx = sxx - sx * sx / n;
    const double vy = syy - sy * sy / n;
    if (vx > 0.0 && vy > 0.0) {
      fit.lag1_corr = cov / std::sqrt(vx * vy);
    }
  }
  if (fit.lag1_corr > 0.0 && fit.lag1_corr < 1.0) {
    fit.params.phi = phi_from_lag1(fit.lag1_corr);
  } else {
    // Nonpositive (or degenerate) correlation: fall back to independence.
    fit.params.phi = 0.0;
    fit.independence_fallback = true;
  }
  return fit;
}

double frechet_transform(double z) {
  const double f =
      std::clamp(norm_cdf(z), std::numeric_limits<double>::min(), 1.0 - 1e-16);
  return -1.0 / std::log(f);
}

}  // namespace ozcal::inference
