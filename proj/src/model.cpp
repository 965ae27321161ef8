#include "idro/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace idro {

namespace {
using nlohmann::json;

bool all_finite(const Matrix& m) { return m.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Matrix matrix_from_json(const json& rows) {
  const Index r = static_cast<Index>(rows.size());
  const Index c = r > 0 ? static_cast<Index>(rows.at(0).size()) : 0;
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i) {
    const auto& row = rows.at(static_cast<size_t>(i));
    if (static_cast<Index>(row.size()) != c) {
      throw std::runtime_error("model JSON: ragged matrix rows");
    }
    for (Index j = 0; j < c; ++j) m(i, j) = row.at(static_cast<size_t>(j)).get<double>();
  }
  return m;
}

Vector vector_from_json(const json& arr) {
  Vector v(static_cast<Index>(arr.size()));
  Index i = 0;
  for (const auto& x : arr) v[i++] = x.get<double>();
  return v;
}
}  // namespace

std::vector<Diagnostic> validate(const CcLinearProgram& model) {
  std::vector<Diagnostic> out;
  const Index n = model.num_vars();
  const Index m = model.uncertainty_dim();

  if (n < 1) out.push_back({"c", "no decision variables"});
  if (model.num_ordinary() < 1) out.push_back({"A/h", "no ordinary constraints"});
  if (model.num_chance() < 1) out.push_back({"B/d", "no chance constraint rows"});
  if (m < 1) out.push_back({"D", "no uncertainty coordinates"});

  if (model.a.rows() != model.h.size() || model.a.cols() != n) {
    out.push_back({"A", "expected " + std::to_string(model.h.size()) + "x" +
                            std::to_string(n) + ", got " +
                            std::to_string(model.a.rows()) + "x" +
                            std::to_string(model.a.cols())});
  }
  if (model.b.rows() != model.d.size() || (model.b.cols() != n && model.b.rows() > 0)) {
    out.push_back({"B/d", "B is " + std::to_string(model.b.rows()) + "x" +
                              std::to_string(model.b.cols()) + " but d has " +
                              std::to_string(model.d.size()) + " rows"});
  }
  if (model.d_mat.rows() != model.d.size()) {
    out.push_back({"D/d", "D has " + std::to_string(model.d_mat.rows()) +
                              " rows but d has " + std::to_string(model.d.size())});
  }
  if (!(model.gamma > 0.0 && model.gamma < 1.0)) {
    out.push_back({"gamma", "gamma out of (0,1): " + std::to_string(model.gamma)});
  }
  if (!all_finite(model.cost)) out.push_back({"c", "non-finite entry"});
  if (!all_finite(model.a) || !all_finite(model.h)) {
    out.push_back({"A/h", "non-finite entry"});
  }
  if (!all_finite(model.b) || !all_finite(model.d_mat) || !all_finite(model.d)) {
    out.push_back({"B/D/d", "non-finite entry"});
  }
  if (model.variable_lower && model.variable_lower->size() != n) {
    out.push_back({"lb", "length mismatch"});
  }
  if (model.variable_upper && model.variable_upper->size() != n) {
    out.push_back({"ub", "length mismatch"});
  }
  if (model.variable_lower && model.variable_upper &&
      model.variable_lower->size() == n && model.variable_upper->size() == n) {
    for (Index j = 0; j < n; ++j) {
      if ((*model.variable_lower)[j] > (*model.variable_upper)[j]) {
        out.push_back({"lb/ub", "lb > ub at variable " + std::to_string(j)});
      }
    }
  }
  return out;
}

void require_valid(const CcLinearProgram& model) {
  const auto diags = validate(model);
  if (diags.empty()) return;
  std::ostringstream msg;
  msg << "invalid model:";
  for (const auto& d : diags) msg << " [" << d.field << "] " << d.message << ";";
  throw std::invalid_argument(msg.str());
}

std::string to_json(const CcLinearProgram& model) {
  json j;
  j["c"] = vector_to_json(model.cost);
  j["A"] = matrix_to_json(model.a);
  j["h"] = vector_to_json(model.h);
  j["B"] = matrix_to_json(model.b);
  j["D"] = matrix_to_json(model.d_mat);
  j["d"] = vector_to_json(model.d);
  j["gamma"] = model.gamma;
  if (model.variable_lower) j["lb"] = vector_to_json(*model.variable_lower);
  if (model.variable_upper) j["ub"] = vector_to_json(*model.variable_upper);
  return j.dump(2);
}

CcLinearProgram model_from_json(const std::string& text) {
  json j = json::parse(text);
  CcLinearProgram m;
  m.cost = vector_from_json(j.at("c"));
  m.a = matrix_from_json(j.at("A"));
  m.h = vector_from_json(j.at("h"));
  m.b = matrix_from_json(j.at("B"));
  m.d_mat = matrix_from_json(j.at("D"));
  m.d = vector_from_json(j.at("d"));
  m.gamma = j.at("gamma").get<double>();
  if (j.contains("lb") && !j["lb"].is_null()) m.variable_lower = vector_from_json(j["lb"]);
  if (j.contains("ub") && !j["ub"].is_null()) m.variable_upper = vector_from_json(j["ub"]);
  return m;
}

void save_model(const CcLinearProgram& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << to_json(model) << "\n";
}

CcLinearProgram load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace idro
