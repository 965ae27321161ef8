#include "idro/dcopf.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace idro {

namespace {
using nlohmann::json;

[[noreturn]] void schema_error(const std::string& field, const std::string& what) {
  throw std::runtime_error("system schema: field '" + field + "': " + what);
}

double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}
}  // namespace

void PowerSystem::validate() const {
  const Index nb = num_buses();
  const Index ng = num_generators();
  const Index nl = num_lines();
  if (nb < 1 || ng < 1 || nl < 1) {
    throw std::invalid_argument("PowerSystem: empty system");
  }
  if (gen_bus_map.rows() != nb) {
    throw std::invalid_argument("PowerSystem: gen_bus_map has " +
                                std::to_string(gen_bus_map.rows()) + " bus rows, ptdf " +
                                std::to_string(nb) + " bus columns");
  }
  for (Index g = 0; g < ng; ++g) {
    double col = 0.0;
    for (Index b = 0; b < nb; ++b) {
      const double v = gen_bus_map(b, g);
      if (v != 0.0 && v != 1.0) {
        throw std::invalid_argument("PowerSystem: gen_bus_map entries must be 0/1");
      }
      col += v;
    }
    if (col != 1.0) {
      throw std::invalid_argument("PowerSystem: generator " + std::to_string(g) +
                                  " must map to exactly one bus");
    }
  }
  if (cost.size() != ng || x_min.size() != ng || x_max.size() != ng) {
    throw std::invalid_argument("PowerSystem: generator vector sizes disagree");
  }
  if (f_max.size() != nl || net_load.size() != nb) {
    throw std::invalid_argument("PowerSystem: f_max/net_load sizes disagree");
  }
  for (Index g = 0; g < ng; ++g) {
    if (!(0.0 <= x_min[g] && x_min[g] <= x_max[g])) {
      throw std::invalid_argument("PowerSystem: need 0 <= x_min <= x_max at generator " +
                                  std::to_string(g));
    }
  }
  if (f_max.minCoeff() <= 0.0) {
    throw std::invalid_argument("PowerSystem: line limits must be positive");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("PowerSystem: gamma out of (0,1)");
  }
  if (reserve_fraction < 0.0) {
    throw std::invalid_argument("PowerSystem: negative reserve fraction");
  }
  const double requirement = (1.0 + reserve_fraction) * total_load();
  if (x_max.sum() < requirement) {
    throw std::invalid_argument(
        "PowerSystem: generation capacity " + std::to_string(x_max.sum()) +
        " cannot cover load plus reserve " + std::to_string(requirement));
  }
}

DcopfMapping to_cc_lp(const PowerSystem& sys) {
  sys.validate();
  const Index ng = sys.num_generators();
  const Index nl = sys.num_lines();
  const Index n = 2 * ng;

  DcopfMapping map;
  map.n_gen = ng;
  map.dispatch_begin = 0;
  map.reserve_begin = ng;

  const double load = sys.total_load();
  const double reserve_req = sys.reserve_fraction * load;
  const Index n_oc = 2 + 2 * ng + 1 + 2 * ng;

  CcLinearProgram& m = map.model;
  m.cost = Vector::Zero(n);
  m.cost.head(ng) = sys.cost;
  m.a = Matrix::Zero(n_oc, n);
  m.h = Vector::Zero(n_oc);

  Index r = 0;
  map.row_balance_le = r;
  m.a.row(r).head(ng).setOnes();
  m.h[r] = load;
  ++r;
  map.row_balance_ge = r;
  m.a.row(r).head(ng).setConstant(-1.0);
  m.h[r] = -load;
  ++r;
  map.row_capacity_upper = r;
  for (Index g = 0; g < ng; ++g, ++r) {
    m.a(r, g) = 1.0;
    m.a(r, ng + g) = 1.0;
    m.h[r] = sys.x_max[g];
  }
  map.row_capacity_lower = r;
  for (Index g = 0; g < ng; ++g, ++r) {
    m.a(r, g) = -1.0;
    m.a(r, ng + g) = -1.0;
    m.h[r] = -sys.x_min[g];
  }
  map.row_reserve = r;
  m.a.row(r).tail(ng).setConstant(-1.0);
  m.h[r] = -reserve_req;
  ++r;
  map.row_dispatch_sign = r;
  for (Index g = 0; g < ng; ++g, ++r) m.a(r, g) = -1.0;
  map.row_reserve_sign = r;
  for (Index g = 0; g < ng; ++g, ++r) m.a(r, ng + g) = -1.0;

  // Chance rows: +-Phi(Sx - e) - df <= f_max, one +/- pair per line; the
  // random vector is the flow-limit perturbation df.
  const Matrix flow_of_gen = sys.ptdf * sys.gen_bus_map;  // N_l x N_g
  const Vector flow_of_load = sys.ptdf * sys.net_load;
  m.b = Matrix::Zero(2 * nl, n);
  m.b.topLeftCorner(nl, ng) = -flow_of_gen;
  m.b.bottomLeftCorner(nl, ng) = flow_of_gen;
  m.d_mat = Matrix::Zero(2 * nl, nl);
  m.d_mat.topRows(nl) = -Matrix::Identity(nl, nl);
  m.d_mat.bottomRows(nl) = -Matrix::Identity(nl, nl);
  m.d = Vector::Zero(2 * nl);
  m.d.head(nl) = sys.f_max - flow_of_load;
  m.d.tail(nl) = sys.f_max + flow_of_load;
  map.chance_flow_upper = 0;
  map.chance_flow_lower = nl;
  m.gamma = sys.gamma;
  return map;
}

SampleSet generate_samples(const PowerSystem& sys, Index n_samples,
                           unsigned long long seed) {
  sys.validate();
  if (n_samples < 1) {
    throw std::invalid_argument("generate_samples: need at least one sample");
  }
  const Index nl = sys.num_lines();
  SampleSet s;
  s.samples.resize(n_samples, nl);
  std::mt19937_64 rng(seed);
  for (Index i = 0; i < n_samples; ++i) {
    for (Index j = 0; j < nl; ++j) {
      const double w = 0.1 * sys.f_max[j];
      s.samples(i, j) = -w + 2.0 * w * u01(rng);
    }
  }
  s.lower_bound = -0.1 * sys.f_max;
  s.upper_bound = 0.1 * sys.f_max;
  s.seed = seed;
  s.validate();
  return s;
}

StandardLp deterministic_dcopf_lp(const PowerSystem& sys) {
  sys.validate();
  const DcopfMapping map = to_cc_lp(sys);
  const CcLinearProgram& m = map.model;
  const Index n = m.num_vars();
  const Index n_oc = m.num_ordinary();
  const Index n_cc = m.num_chance();

  Matrix g(n_oc + n_cc, n);
  Vector h(n_oc + n_cc);
  g.topRows(n_oc) = m.a;
  h.head(n_oc) = m.h;
  g.bottomRows(n_cc) = m.b;
  h.tail(n_cc) = m.d;  // df = 0 in the deterministic counterpart
  return StandardLp::from_dense(m.cost, g, h);
}

Matrix ptdf_from_reactances(const std::vector<std::pair<Index, Index>>& branches,
                            const Vector& reactance, Index n_bus, Index slack_bus) {
  const Index nl = static_cast<Index>(branches.size());
  if (reactance.size() != nl) {
    throw std::invalid_argument("ptdf_from_reactances: one reactance per branch");
  }
  if (slack_bus < 0 || slack_bus >= n_bus) {
    throw std::invalid_argument("ptdf_from_reactances: slack bus out of range");
  }
  Matrix incidence = Matrix::Zero(nl, n_bus);
  for (Index l = 0; l < nl; ++l) {
    const auto [from, to] = branches[static_cast<size_t>(l)];
    if (from < 0 || from >= n_bus || to < 0 || to >= n_bus || from == to) {
      throw std::invalid_argument("ptdf_from_reactances: bad branch endpoints");
    }
    if (reactance[l] <= 0.0) {
      throw std::invalid_argument("ptdf_from_reactances: reactances must be positive");
    }
    incidence(l, from) = 1.0;
    incidence(l, to) = -1.0;
  }
  const Vector susceptance = reactance.cwiseInverse();
  const Matrix b_bus =
      incidence.transpose() * susceptance.asDiagonal() * incidence;

  // Remove the slack row/column, invert, and re-insert a zero column.
  Matrix b_red(n_bus - 1, n_bus - 1);
  for (Index i = 0, ri = 0; i < n_bus; ++i) {
    if (i == slack_bus) continue;
    for (Index j = 0, rj = 0; j < n_bus; ++j) {
      if (j == slack_bus) continue;
      b_red(ri, rj) = b_bus(i, j);
      ++rj;
    }
    ++ri;
  }
  Eigen::FullPivLU<Matrix> lu(b_red);
  if (!lu.isInvertible()) {
    throw std::invalid_argument(
        "ptdf_from_reactances: network is disconnected (singular reduced matrix)");
  }
  const Matrix b_inv = lu.inverse();

  Matrix incidence_red(nl, n_bus - 1);
  for (Index j = 0, rj = 0; j < n_bus; ++j) {
    if (j == slack_bus) continue;
    incidence_red.col(rj++) = incidence.col(j);
  }
  const Matrix ptdf_red = susceptance.asDiagonal() * incidence_red * b_inv;
  Matrix ptdf = Matrix::Zero(nl, n_bus);
  for (Index j = 0, rj = 0; j < n_bus; ++j) {
    if (j == slack_bus) continue;
    ptdf.col(j) = ptdf_red.col(rj++);
  }
  return ptdf;
}

PowerSystem system_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("system schema: unparsable JSON: ") + e.what());
  }

  PowerSystem sys;
  if (!j.contains("buses") || !j["buses"].is_array() || j["buses"].empty()) {
    schema_error("buses", "required non-empty array of bus ids");
  }
  std::vector<long> bus_ids;
  for (const auto& b : j["buses"]) bus_ids.push_back(b.get<long>());
  const Index nb = static_cast<Index>(bus_ids.size());
  const auto bus_index = [&](long id, const char* field) {
    for (Index i = 0; i < nb; ++i) {
      if (bus_ids[static_cast<size_t>(i)] == id) return i;
    }
    schema_error(field, "unknown bus id " + std::to_string(id));
  };

  if (!j.contains("lines") || !j["lines"].is_array() || j["lines"].empty()) {
    schema_error("lines", "required non-empty array");
  }
  const Index nl = static_cast<Index>(j["lines"].size());
  sys.f_max.resize(nl);
  std::vector<std::pair<Index, Index>> branches;
  Vector reactance(nl);
  bool have_reactances = true;
  Index l = 0;
  for (const auto& line : j["lines"]) {
    if (!line.contains("f_max")) schema_error("lines", "line missing f_max");
    sys.f_max[l] = line["f_max"].get<double>();
    if (line.contains("from") && line.contains("to")) {
      branches.emplace_back(bus_index(line["from"].get<long>(), "lines"),
                            bus_index(line["to"].get<long>(), "lines"));
    } else {
      have_reactances = false;
    }
    if (line.contains("reactance")) {
      reactance[l] = line["reactance"].get<double>();
    } else {
      have_reactances = false;
    }
    ++l;
  }

  if (j.contains("ptdf")) {
    const auto& rows = j["ptdf"];
    if (static_cast<Index>(rows.size()) != nl) {
      schema_error("ptdf", "expected one row per line");
    }
    sys.ptdf.resize(nl, nb);
    for (Index i = 0; i < nl; ++i) {
      const auto& row = rows.at(static_cast<size_t>(i));
      if (static_cast<Index>(row.size()) != nb) {
        schema_error("ptdf", "row " + std::to_string(i) + " has wrong width");
      }
      for (Index b = 0; b < nb; ++b) sys.ptdf(i, b) = row.at(static_cast<size_t>(b));
    }
  } else if (have_reactances) {
    if (!j.contains("slack_bus")) {
      schema_error("slack_bus", "required when PTDF is built from reactances");
    }
    const Index slack = bus_index(j["slack_bus"].get<long>(), "slack_bus");
    sys.ptdf = ptdf_from_reactances(branches, reactance, nb, slack);
  } else {
    schema_error("lines", "need either a ptdf matrix or from/to/reactance per line");
  }

  if (!j.contains("generators") || j["generators"].empty()) {
    schema_error("generators", "required non-empty array");
  }
  const Index ng = static_cast<Index>(j["generators"].size());
  sys.gen_bus_map = Matrix::Zero(nb, ng);
  sys.cost.resize(ng);
  sys.x_min.resize(ng);
  sys.x_max.resize(ng);
  Index g = 0;
  for (const auto& gen : j["generators"]) {
    for (const char* key : {"bus", "cost", "x_max"}) {
      if (!gen.contains(key)) {
        schema_error("generators", "generator " + std::to_string(g) + " missing " + key);
      }
    }
    sys.gen_bus_map(bus_index(gen["bus"].get<long>(), "generators"), g) = 1.0;
    sys.cost[g] = gen["cost"].get<double>();
    sys.x_min[g] = gen.value("x_min", 0.0);
    sys.x_max[g] = gen["x_max"].get<double>();
    ++g;
  }

  sys.net_load = Vector::Zero(nb);
  if (j.contains("loads")) {
    for (const auto& load : j["loads"]) {
      if (!load.contains("bus") || !load.contains("value")) {
        schema_error("loads", "each load needs bus and value");
      }
      sys.net_load[bus_index(load["bus"].get<long>(), "loads")] +=
          load["value"].get<double>();
    }
  }

  sys.gamma = j.value("gamma", 0.05);
  sys.reserve_fraction = j.value("reserve_fraction", 0.05);
  sys.name = j.value("name", "");
  try {
    sys.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("system schema: ") + e.what());
  }
  return sys;
}

PowerSystem load_system(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return system_from_json(ss.str());
}

}  // namespace idro
