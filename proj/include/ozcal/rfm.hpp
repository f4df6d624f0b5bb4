#pragma once

#include <span>
#include <string>
#include <vector>

#include "ozcal/errors.hpp"

namespace ozcal::rfm {

struct GridCell {
  double x_km = 0.0;
  double y_km = 0.0;
};

/// Fractional emission changes, one per model input; each component > -1
/// (an input cannot drop below -100%).
struct PerturbationVector {
  std::vector<double> values;

  PerturbationVector() = default;
  explicit PerturbationVector(std::vector<double> v);

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t j) const { return values[j]; }
};

/// Gridded base concentrations plus first- and second-order sensitivity
/// coefficients for d inputs. All arrays are day-major (index t*n_cells+cell).
/// Cross sensitivities are stored once per unordered pair (l < j); symmetry
/// is an invariant by construction.
struct SensitivityField {
  std::vector<GridCell> cells;
  int n_days = 0;
  int n_inputs = 0;
  std::vector<std::string> input_names;

  std::vector<double> base;                        // C0
  std::vector<std::vector<double>> first_order;    // d arrays
  std::vector<std::vector<double>> second_diag;    // d arrays
  std::vector<std::vector<double>> second_cross;   // d(d-1)/2 arrays

  int n_cells() const { return static_cast<int>(cells.size()); }
  std::size_t n_values() const { return base.size(); }
  std::size_t index(int day, int cell) const {
    return static_cast<std::size_t>(day) * cells.size() +
           static_cast<std::size_t>(cell);
  }

  /// Storage slot of the unordered pair {l, j}, l != j, in second_cross.
  static int cross_index(int l, int j, int d);

  /// Number of polynomial terms: d first-order + d diagonal + d(d-1)/2 cross.
  int n_terms() const { return n_inputs * (n_inputs + 3) / 2; }

  /// Term array k in the fixed order (first_order, second_diag, second_cross).
  const std::vector<double>& term(int k) const;

  /// Checks array shapes and index ranges; throws data_error on violation.
  void validate() const;
};

/// Polynomial weights matching SensitivityField::term order:
/// alpha_j, then alpha_j^2 / 2, then alpha_l * alpha_j per unordered pair.
void rfm_weights(std::span<const double> alpha, std::span<double> out);

/// Second-order surrogate at one (day, cell):
/// C0 + sum_j S1_j a_j + 1/2 sum_j S2_jj a_j^2 + sum_{l<j} S2_lj a_l a_j.
double evaluate_rfm(const SensitivityField& field, int day, int cell,
                    const PerturbationVector& alpha);

/// Same polynomial over the whole field; bit-identical to evaluate_rfm at
/// every (day, cell).
std::vector<double> evaluate_rfm_field(const SensitivityField& field,
                                       const PerturbationVector& alpha);
void evaluate_rfm_field(const SensitivityField& field,
                        std::span<const double> alpha, std::span<double> out);

/// Applies a control strategy eta on top of a calibration alpha:
/// a*_j = (1 + a_j) (1 + eta_j) - 1. eta_j == 0 leaves a_j untouched exactly.
PerturbationVector compose_perturbation(const PerturbationVector& alpha,
                                        std::span<const double> eta);

}  // namespace ozcal::rfm
