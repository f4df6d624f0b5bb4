#include "ozcal/rfm.hpp"

#include <cmath>

#include "ozcal/kernels.hpp"

namespace ozcal::rfm {

PerturbationVector::PerturbationVector(std::vector<double> v)
    : values(std::move(v)) {
  for (const double a : values) {
    if (!(a > -1.0)) {
      throw input_error("perturbation component must be > -1");
    }
  }
}

int SensitivityField::cross_index(int l, int j, int d) {
  if (l == j || l < 0 || j < 0 || l >= d || j >= d) {
    throw input_error("cross_index: need distinct inputs in [0, d)");
  }
  if (l > j) std::swap(l, j);
  // Row-major upper triangle: (0,1),(0,2),...,(0,d-1),(1,2),...
  return l * d - l * (l + 1) / 2 + (j - l - 1);
}

const std::vector<double>& SensitivityField::term(int k) const {
  const int d = n_inputs;
  if (k < d) return first_order[k];
  if (k < 2 * d) return second_diag[k - d];
  return second_cross[k - 2 * d];
}

void SensitivityField::validate() const {
  const int d = n_inputs;
  if (d < 1) throw data_error("sensitivity field needs at least one input");
  if (n_days < 1 || cells.empty()) {
    throw data_error("sensitivity field needs at least one day and one cell");
  }
  const std::size_t n = static_cast<std::size_t>(n_days) * cells.size();
  if (base.size() != n) throw data_error("base array shape mismatch");
  if (first_order.size() != static_cast<std::size_t>(d) ||
      second_diag.size() != static_cast<std::size_t>(d) ||
      second_cross.size() != static_cast<std::size_t>(d * (d - 1) / 2)) {
    throw data_error("sensitivity term count mismatch");
  }
  for (const auto& a : first_order) {
    if (a.size() != n) throw data_error("first-order array shape mismatch");
  }
  for (const auto& a : second_diag) {
    if (a.size() != n) throw data_error("second-order array shape mismatch");
  }
  for (const auto& a : second_cross) {
    if (a.size() != n) throw data_error("cross-term array shape mismatch");
  }
  if (input_names.size() != static_cast<std::size_t>(d)) {
    throw data_error("input name count mismatch");
  }
}

void rfm_weights(std::span<const double> alpha, std::span<double> out) {
  const std::size_t d = alpha.size();
  if (out.size() != d * (d + 3) / 2) {
    throw input_error("rfm_weights: output span has wrong length");
  }
  std::size_t k = 0;
  for (std::size_t j = 0; j < d; ++j) out[k++] = alpha[j];
  for (std::size_t j = 0; j < d; ++j) out[k++] = 0.5 * alpha[j] * alpha[j];
  for (std::size_t l = 0; l < d; ++l) {
    for (std::size_t j = l + 1; j < d; ++j) out[k++] = alpha[l] * alpha[j];
  }
}

namespace {

void check_alpha(const SensitivityField& field, std::size_t alpha_size) {
  if (alpha_size != static_cast<std::size_t>(field.n_inputs)) {
    throw input_error("perturbation length does not match field inputs");
  }
}

}  // namespace

double evaluate_rfm(const SensitivityField& field, int day, int cell,
                    const PerturbationVector& alpha) {
  check_alpha(field, alpha.size());
  if (day < 0 || day >= field.n_days || cell < 0 || cell >= field.n_cells()) {
    throw input_error("evaluate_rfm: day or cell out of range");
  }
  const std::size_t i = field.index(day, cell);
  const int n_terms = field.n_terms();
  std::vector<double> w(n_terms);
  rfm_weights(alpha.values, w);
  // Same accumulation order as the field kernel: bit-identical results.
  double acc = field.base[i];
  for (int k = 0; k < n_terms; ++k) {
    acc += w[k] * field.term(k)[i];
  }
  return acc;
}

void evaluate_rfm_field(const SensitivityField& field,
                        std::span<const double> alpha, std::span<double> out) {
  check_alpha(field, alpha.size());
  if (out.size() != field.n_values()) {
    throw input_error("evaluate_rfm_field: output span has wrong length");
  }
  const int n_terms = field.n_terms();
  std::vector<double> w(n_terms);
  rfm_weights(alpha, w);
  std::vector<const double*> terms(n_terms);
  for (int k = 0; k < n_terms; ++k) terms[k] = field.term(k).data();
  kernels::weighted_sum(out.data(), field.base.data(), out.size(),
                        terms.data(), w.data(), terms.size());
}

std::vector<double> evaluate_rfm_field(const SensitivityField& field,
                                       const PerturbationVector& alpha) {
  std::vector<double> out(field.n_values());
  evaluate_rfm_field(field, alpha.values, out);
  return out;
}

PerturbationVector compose_perturbation(const PerturbationVector& alpha,
                                        std::span<const double> eta) {
  if (eta.size() != alpha.size()) {
    throw input_error("compose_perturbation: vector length mismatch");
  }
  std::vector<double> out(alpha.size());
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    if (!(eta[j] > -1.0)) {
      throw input_error("control component must be > -1");
    }
    // eta_j = 0 must be an exact identity, not (1+a)-1 round-tripped.
    out[j] = (eta[j] == 0.0) ? alpha[j]
                             : (1.0 + alpha[j]) * (1.0 + eta[j]) - 1.0;
  }
  return PerturbationVector(std::move(out));
}

}  // namespace ozcal::rfm
