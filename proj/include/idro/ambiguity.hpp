#pragma once

#include <optional>
#include <string>

#include "idro/solver.hpp"
#include "idro/types.hpp"

namespace idro {

/// Historical realizations of the m-dimensional random vector plus the
/// coordinate-wise support box. Immutable after construction.
struct SampleSet {
  Matrix samples;      // one realization per row
  Vector lower_bound;  // support lower corner
  Vector upper_bound;  // support upper corner
  std::optional<unsigned long long> seed;  // generator seed, when known

  Index num_samples() const { return samples.rows(); }
  Index dimension() const { return samples.cols(); }

  /// Throws std::invalid_argument when a sample escapes the support box,
  /// the box is degenerate, or the set is empty.
  void validate() const;
};

/// Finitely supported distribution: one location per row of `locations`.
/// Duplicate locations are kept as separate atoms.
struct DiscreteDistribution {
  Matrix locations;
  Vector weights;

  Index num_atoms() const { return locations.rows(); }
  Index dimension() const { return locations.cols(); }
  void validate() const;  // weights >= 0 and sum to 1 within 1e-12
};

struct WassersteinBall {
  DiscreteDistribution center;
  double radius = 0.0;  // must be >= 0

  void validate() const;
};

/// Empirical distribution of the samples: one atom per sample, each with
/// weight 1/N. Duplicates stay separate.
DiscreteDistribution empirical_from_samples(const SampleSet& s);

/// Dirac distribution at a single point.
DiscreteDistribution dirac(const Vector& point);

/// Wasserstein distance (L1 ground metric) from a discrete distribution to
/// a Dirac. Every transport plan moves all mass to the point, so the
/// distance is the weighted mean L1 distance of the atoms.
double wasserstein_to_dirac(const DiscreteDistribution& p, const Vector& point);

/// Wasserstein distance between two discrete distributions via the finite
/// transport linear program over the atom grid (L1 ground metric). Serves
/// as the independent oracle for the closed-form specializations.
double wasserstein_discrete(const DiscreteDistribution& p, const DiscreteDistribution& q,
                            const SolverConfig& cfg = {});

/// Critical radius: the larger of the two Dirac distances to the support
/// corners. Every distribution supported on the box lies within this radius
/// of the empirical distribution.
double epsilon_max(const SampleSet& s);

/// CSV with header xi_1,...,xi_m plus a bounds sidecar JSON next to it
/// (path with extension replaced by .bounds.json).
void save_sample_set(const SampleSet& s, const std::string& csv_path);
SampleSet load_sample_set(const std::string& csv_path);

/// Sidecar path convention used by save/load.
std::string bounds_sidecar_path(const std::string& csv_path);

}  // namespace idro
