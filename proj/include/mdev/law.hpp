#pragma once

#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

namespace mdev {

struct Atom {
  double value;
  double prob;

  friend bool operator==(const Atom&, const Atom&) = default;
};

/// Finite-support law of one martingale difference given the history.
///
/// Atoms are kept sorted by value. Construction enforces the martingale
/// difference invariants: at least two distinct atoms, probabilities in
/// (0, 1] summing to one and zero mean (both within 1e-12).
class ConditionalLaw {
 public:
  static constexpr double kTolerance = 1e-12;

  explicit ConditionalLaw(std::vector<Atom> atoms);
  ConditionalLaw(std::initializer_list<Atom> atoms) : ConditionalLaw(std::vector<Atom>(atoms)) {}

  std::span<const Atom> atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }

  double mean() const;
  double second_moment() const;
  double min_value() const { return atoms_.front().value; }
  double max_value() const { return atoms_.back().value; }

  /// Exact expectation of h over the atoms.
  double expect(const std::function<double(double)>& h) const;

  /// Same law for c * value, c > 0.
  ConditionalLaw scaled(double c) const;

  /// Index of the atom selected by a uniform draw u in (0, 1) (inverse CDF).
  std::size_t pick(double u) const;

  friend bool operator==(const ConditionalLaw&, const ConditionalLaw&) = default;

 private:
  std::vector<Atom> atoms_;
  std::vector<double> cdf_;
};

/// Two-point law with P(+a) = P(-a) = 1/2.
ConditionalLaw symmetric_two_point(double a);

}  // namespace mdev
