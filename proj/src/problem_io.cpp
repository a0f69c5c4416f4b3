#include "lpm/problem_io.hpp"

#include "lpm/error.hpp"

#include <fstream>
#include <set>

namespace lpm {
namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw Error(ErrorCode::ConfigError, "unknown key '" + it.key() + "' in " + where);
}

double num(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorCode::ConfigError, std::string("missing key '") + key + "'");
  if (!j.at(key).is_number()) throw Error(ErrorCode::ConfigError, std::string("key '") + key + "' must be a number");
  return j.at(key).get<double>();
}

double num_or(const json& j, const char* key, double dflt) { return j.contains(key) ? num(j, key) : dflt; }

Eigen::VectorXd vec(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::ConfigError, "expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(ErrorCode::ConfigError, "expected an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

}  // namespace

ProblemConfig problem_config_from_json(const json& jin) {
  const json& j = jin.contains("problem") ? jin.at("problem") : jin;
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "problem must be an object");
  reject_unknown(j,
                 {"eigenvalues", "unstable_modes", "alpha", "beta", "gamma", "zeta", "K", "basis", "ladder",
                  "nonlinearity", "noise"},
                 "problem");
  ProblemConfig c;
  try {
    if (!j.contains("eigenvalues")) throw Error(ErrorCode::ConfigError, "missing key 'eigenvalues'");
    Eigen::VectorXd ev = vec(j.at("eigenvalues"));
    c.eigenvalues.assign(ev.data(), ev.data() + ev.size());
    if (j.contains("unstable_modes")) c.unstable_modes = j.at("unstable_modes").get<std::vector<std::size_t>>();
    c.alpha = num(j, "alpha");
    c.beta = num(j, "beta");
    c.gamma = num(j, "gamma");
    c.zeta = num(j, "zeta");
    c.bound_K = num_or(j, "K", 1.0);
    if (j.contains("basis")) c.basis = j.at("basis").get<std::string>();
    if (j.contains("ladder")) {
      Eigen::VectorXd l = vec(j.at("ladder"));
      c.ladder.assign(l.data(), l.data() + l.size());
    }
    const std::size_t m = c.eigenvalues.size();
    if (j.contains("nonlinearity")) {
      const json& n = j.at("nonlinearity");
      const std::string kind = n.value("kind", std::string("zero"));
      if (kind == "zero") {
        reject_unknown(n, {"kind"}, "nonlinearity");
      } else if (kind == "linear") {
        reject_unknown(n, {"kind", "matrix"}, "nonlinearity");
        const json& rows = n.at("matrix");
        Eigen::MatrixXd B(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m));
        if (rows.size() != m) throw Error(ErrorCode::ConfigError, "linear matrix must be m x m");
        for (std::size_t i = 0; i < m; ++i) {
          Eigen::VectorXd r = vec(rows[i]);
          if (static_cast<std::size_t>(r.size()) != m) throw Error(ErrorCode::ConfigError, "linear matrix must be m x m");
          B.row(static_cast<Eigen::Index>(i)) = r.transpose();
        }
        c.nonlinearity = NonlinearityModel::linear(B);
      } else if (kind == "saturated_polynomial") {
        reject_unknown(n, {"kind", "radius", "terms"}, "nonlinearity");
        std::vector<PolynomialTerm> terms;
        for (const json& t : n.at("terms")) {
          reject_unknown(t, {"target", "source", "power", "coefficient"}, "polynomial term");
          PolynomialTerm pt;
          pt.target = t.at("target").get<std::size_t>();
          pt.source = t.at("source").get<std::size_t>();
          pt.power = t.at("power").get<int>();
          pt.coefficient = num(t, "coefficient");
          terms.push_back(pt);
        }
        c.nonlinearity = NonlinearityModel::saturated_polynomial(terms, num(n, "radius"));
      } else if (kind == "boundary_example") {
        reject_unknown(n, {"kind", "g0", "g1", "g2", "radius"}, "nonlinearity");
        c.nonlinearity = NonlinearityModel::boundary_example(num_or(n, "g0", 0.0), num_or(n, "g1", 0.0),
                                                             num_or(n, "g2", 0.0), num_or(n, "radius", 1.0));
      } else {
        throw Error(ErrorCode::ConfigError, "unknown nonlinearity kind '" + kind + "'");
      }
    }
    if (j.contains("noise")) {
      const json& n = j.at("noise");
      const std::string kind = n.value("kind", std::string("zero"));
      reject_unknown(n, {"kind", "slopes", "weights", "radius"}, "noise");
      Eigen::VectorXd s = n.contains("slopes") ? vec(n.at("slopes")) : Eigen::VectorXd();
      Eigen::VectorXd q = n.contains("weights") ? vec(n.at("weights")) : Eigen::VectorXd();
      if (kind == "zero") {
        c.noise = NoiseModel::zero();
        c.noise.weights = q;
      } else if (kind == "diagonal_linear") {
        c.noise = NoiseModel::diagonal_linear(s, q);
      } else if (kind == "saturated") {
        c.noise = NoiseModel::saturated(s, q, num_or(n, "radius", 1.0));
      } else {
        throw Error(ErrorCode::ConfigError, "unknown noise kind '" + kind + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("malformed problem: ") + e.what());
  }
  return c;
}

json problem_config_to_json(const ProblemConfig& c) {
  json j;
  j["eigenvalues"] = c.eigenvalues;
  if (c.unstable_modes) j["unstable_modes"] = *c.unstable_modes;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["gamma"] = c.gamma;
  j["zeta"] = c.zeta;
  j["K"] = c.bound_K;
  j["basis"] = c.basis;
  j["ladder"] = c.ladder;
  json n;
  n["kind"] = to_string(c.nonlinearity.kind);
  switch (c.nonlinearity.kind) {
    case NonlinearityKind::Linear: {
      json rows = json::array();
      for (Eigen::Index i = 0; i < c.nonlinearity.matrix.rows(); ++i)
        rows.push_back(vec_json(c.nonlinearity.matrix.row(i).transpose()));
      n["matrix"] = rows;
      break;
    }
    case NonlinearityKind::SaturatedPolynomial: {
      n["radius"] = c.nonlinearity.radius;
      json terms = json::array();
      for (const auto& t : c.nonlinearity.terms)
        terms.push_back({{"target", t.target}, {"source", t.source}, {"power", t.power}, {"coefficient", t.coefficient}});
      n["terms"] = terms;
      break;
    }
    case NonlinearityKind::BoundaryExample:
      n["g0"] = c.nonlinearity.g0;
      n["g1"] = c.nonlinearity.g1;
      n["g2"] = c.nonlinearity.g2;
      n["radius"] = c.nonlinearity.radius;
      break;
    default:
      break;
  }
  j["nonlinearity"] = n;
  json z;
  z["kind"] = to_string(c.noise.kind);
  if (c.noise.slopes.size()) z["slopes"] = vec_json(c.noise.slopes);
  if (c.noise.weights.size()) z["weights"] = vec_json(c.noise.weights);
  if (c.noise.kind == NoiseKind::Saturated) z["radius"] = c.noise.radius;
  j["noise"] = z;
  return j;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, "cannot parse '" + path + "': " + e.what());
  }
}

}  // namespace lpm
