#include "idro/ambiguity.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace idro {

namespace {
using nlohmann::json;

Vector to_vector(const json& arr) {
  Vector v(static_cast<Index>(arr.size()));
  Index i = 0;
  for (const auto& x : arr) v[i++] = x.get<double>();
  return v;
}

json to_json_array(const Vector& v) {
  json arr = json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}
}  // namespace

void SampleSet::validate() const {
  if (num_samples() < 1 || dimension() < 1) {
    throw std::invalid_argument("SampleSet: need at least one sample and one coordinate");
  }
  if (lower_bound.size() != dimension() || upper_bound.size() != dimension()) {
    throw std::invalid_argument("SampleSet: bound dimension mismatch");
  }
  for (Index j = 0; j < dimension(); ++j) {
    if (!(lower_bound[j] < upper_bound[j])) {
      throw std::invalid_argument("SampleSet: degenerate support in coordinate " +
                                  std::to_string(j));
    }
  }
  for (Index i = 0; i < num_samples(); ++i) {
    for (Index j = 0; j < dimension(); ++j) {
      const double v = samples(i, j);
      if (!std::isfinite(v) || v < lower_bound[j] - 1e-12 || v > upper_bound[j] + 1e-12) {
        throw std::invalid_argument("SampleSet: sample (" + std::to_string(i) + "," +
                                    std::to_string(j) + ") outside the support box");
      }
    }
  }
}

void DiscreteDistribution::validate() const {
  if (num_atoms() < 1) throw std::invalid_argument("DiscreteDistribution: no atoms");
  if (weights.size() != num_atoms()) {
    throw std::invalid_argument("DiscreteDistribution: weight count mismatch");
  }
  double sum = 0.0;
  for (Index i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0) {
      throw std::invalid_argument("DiscreteDistribution: negative weight");
    }
    sum += weights[i];
  }
  if (std::abs(sum - 1.0) > 1e-12 * std::max<double>(1, num_atoms())) {
    throw std::invalid_argument("DiscreteDistribution: weights sum to " +
                                std::to_string(sum));
  }
}

void WassersteinBall::validate() const {
  center.validate();
  if (!(radius >= 0.0)) throw std::invalid_argument("WassersteinBall: negative radius");
}

DiscreteDistribution empirical_from_samples(const SampleSet& s) {
  s.validate();
  DiscreteDistribution d;
  d.locations = s.samples;
  d.weights = Vector::Constant(s.num_samples(), 1.0 / static_cast<double>(s.num_samples()));
  return d;
}

DiscreteDistribution dirac(const Vector& point) {
  DiscreteDistribution d;
  d.locations = point.transpose();
  d.weights = Vector::Ones(1);
  return d;
}

double wasserstein_to_dirac(const DiscreteDistribution& p, const Vector& point) {
  p.validate();
  if (point.size() != p.dimension()) {
    throw std::invalid_argument("wasserstein_to_dirac: dimension mismatch");
  }
  double total = 0.0;
  for (Index i = 0; i < p.num_atoms(); ++i) {
    total += p.weights[i] * (p.locations.row(i).transpose() - point).cwiseAbs().sum();
  }
  return total;
}

double wasserstein_discrete(const DiscreteDistribution& p, const DiscreteDistribution& q,
                            const SolverConfig& cfg) {
  p.validate();
  q.validate();
  if (p.dimension() != q.dimension()) {
    throw std::invalid_argument("wasserstein_discrete: dimension mismatch");
  }
  const Index np = p.num_atoms();
  const Index nq = q.num_atoms();

  // Transport plan pi_ij >= 0 with prescribed marginals; cost is the L1
  // ground distance between atom locations.
  Vector cost(np * nq);
  for (Index i = 0; i < np; ++i) {
    for (Index j = 0; j < nq; ++j) {
      cost[i * nq + j] = (p.locations.row(i) - q.locations.row(j)).cwiseAbs().sum();
    }
  }
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(2 * np * nq));
  for (Index i = 0; i < np; ++i) {
    for (Index j = 0; j < nq; ++j) {
      trips.emplace_back(i, i * nq + j, 1.0);           // row marginal
      trips.emplace_back(np + j, i * nq + j, 1.0);      // column marginal
    }
  }
  SparseMatrix eq(np + nq, np * nq);
  eq.setFromTriplets(trips.begin(), trips.end());
  Vector eq_rhs(np + nq);
  eq_rhs.head(np) = p.weights;
  eq_rhs.tail(nq) = q.weights;

  StandardLp lp;
  lp.objective = cost;
  lp.ineq_matrix = SparseMatrix(0, np * nq);
  lp.ineq_rhs = Vector(0);
  lp.eq_matrix = eq;
  lp.eq_rhs = eq_rhs;
  lp.lower = Vector::Zero(np * nq);
  lp.upper = Vector::Constant(np * nq, kInfinity);

  const LpSolution sol = solve_lp(lp, cfg);
  if (sol.status != LpStatus::Optimal) {
    throw SolverError("transport LP did not solve to optimality");
  }
  return sol.objective_value;
}

double epsilon_max(const SampleSet& s) {
  const DiscreteDistribution emp = empirical_from_samples(s);
  const double to_upper = wasserstein_to_dirac(emp, s.upper_bound);
  const double to_lower = wasserstein_to_dirac(emp, s.lower_bound);
  return std::max(to_upper, to_lower);
}

std::string bounds_sidecar_path(const std::string& csv_path) {
  const auto dot = csv_path.find_last_of('.');
  const std::string stem =
      dot == std::string::npos ? csv_path : csv_path.substr(0, dot);
  return stem + ".bounds.json";
}

void save_sample_set(const SampleSet& s, const std::string& csv_path) {
  s.validate();
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot open " + csv_path + " for writing");
  for (Index j = 0; j < s.dimension(); ++j) {
    csv << (j ? "," : "") << "xi_" << (j + 1);
  }
  csv << "\n";
  csv.precision(17);
  for (Index i = 0; i < s.num_samples(); ++i) {
    for (Index j = 0; j < s.dimension(); ++j) {
      csv << (j ? "," : "") << s.samples(i, j);
    }
    csv << "\n";
  }

  json sidecar;
  sidecar["lower"] = to_json_array(s.lower_bound);
  sidecar["upper"] = to_json_array(s.upper_bound);
  if (s.seed) sidecar["seed"] = *s.seed;
  std::ofstream side(bounds_sidecar_path(csv_path));
  if (!side) throw std::runtime_error("cannot write bounds sidecar for " + csv_path);
  side << sidecar.dump(2) << "\n";
}

SampleSet load_sample_set(const std::string& csv_path) {
  std::ifstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot open " + csv_path);
  std::string line;
  if (!std::getline(csv, line)) throw std::runtime_error(csv_path + ": empty file");

  // Header gives the dimension.
  Index m = 0;
  {
    std::stringstream header(line);
    std::string field;
    while (std::getline(header, field, ',')) ++m;
  }
  if (m < 1) throw std::runtime_error(csv_path + ": no columns in header");

  std::vector<double> data;
  Index rows = 0;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    Index cols = 0;
    while (std::getline(ss, field, ',')) {
      data.push_back(std::stod(field));
      ++cols;
    }
    if (cols != m) {
      throw std::runtime_error(csv_path + ": row " + std::to_string(rows + 1) +
                               " has " + std::to_string(cols) + " fields, expected " +
                               std::to_string(m));
    }
    ++rows;
  }
  if (rows == 0) throw std::runtime_error(csv_path + ": no sample rows");

  SampleSet s;
  s.samples.resize(rows, m);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < m; ++j) s.samples(i, j) = data[static_cast<size_t>(i * m + j)];
  }

  std::ifstream side(bounds_sidecar_path(csv_path));
  if (!side) {
    throw std::runtime_error("missing bounds sidecar " + bounds_sidecar_path(csv_path));
  }
  json sidecar = json::parse(side);
  s.lower_bound = to_vector(sidecar.at("lower"));
  s.upper_bound = to_vector(sidecar.at("upper"));
  if (sidecar.contains("seed") && !sidecar["seed"].is_null()) {
    s.seed = sidecar["seed"].get<unsigned long long>();
  }
  s.validate();
  return s;
}

}  // namespace idro
