#include "mdev/law.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mdev {

ConditionalLaw::ConditionalLaw(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
  if (atoms_.size() < 2) throw std::invalid_argument("ConditionalLaw: need at least two atoms");
  std::sort(atoms_.begin(), atoms_.end(), [](const Atom& a, const Atom& b) { return a.value < b.value; });
  double total = 0.0;
  double mean = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    const Atom& a = atoms_[i];
    if (!std::isfinite(a.value) || !(a.prob > 0.0 && a.prob <= 1.0))
      throw std::invalid_argument("ConditionalLaw: atom probability must lie in (0, 1] with a finite value");
    if (i > 0 && !(a.value > atoms_[i - 1].value))
      throw std::invalid_argument("ConditionalLaw: atom values must be distinct");
    total += a.prob;
    mean += a.prob * a.value;
    scale = std::max(scale, a.prob * std::abs(a.value));
  }
  if (std::abs(total - 1.0) > kTolerance)
    throw std::invalid_argument("ConditionalLaw: probabilities sum to " + std::to_string(total));
  if (std::abs(mean) > kTolerance * std::max(1.0, scale))
    throw std::invalid_argument("ConditionalLaw: mean is not zero (" + std::to_string(mean) + ")");

  cdf_.reserve(atoms_.size());
  double run = 0.0;
  for (const Atom& a : atoms_) cdf_.push_back(run += a.prob / total);
  cdf_.back() = 1.0;
}

double ConditionalLaw::mean() const {
  double s = 0.0;
  for (const Atom& a : atoms_) s += a.prob * a.value;
  return s;
}

double ConditionalLaw::second_moment() const {
  double s = 0.0;
  for (const Atom& a : atoms_) s += a.prob * a.value * a.value;
  return s;
}

double ConditionalLaw::expect(const std::function<double(double)>& h) const {
  double s = 0.0;
  for (const Atom& a : atoms_) s += a.prob * h(a.value);
  return s;
}

ConditionalLaw ConditionalLaw::scaled(double c) const {
  if (!(c > 0.0)) throw std::invalid_argument("ConditionalLaw::scaled: factor must be positive");
  std::vector<Atom> out(atoms_);
  for (Atom& a : out) a.value *= c;
  return ConditionalLaw(std::move(out));
}

std::size_t ConditionalLaw::pick(double u) const {
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), atoms_.size() - 1);
}

ConditionalLaw symmetric_two_point(double a) { return ConditionalLaw{{-a, 0.5}, {a, 0.5}}; }

}  // namespace mdev
