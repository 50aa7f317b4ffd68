#include "ssmctrl/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json_util.hpp"
#include "ssmctrl/errors.hpp"

namespace ssmctrl::io {
namespace {

using detail::Json;
using detail::matrix_from;
using detail::matrix_json;
using detail::number;
using detail::vector_from;
using detail::vector_json;

constexpr const char* kModelFormat = "ssmctrl.model";
constexpr const char* kGainFormat = "ssmctrl.gains";

std::string fmt(const char* spec, double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

Json scaffold_json(const ssm::Scaffolding& s) {
  Json j;
  j["kind"] = s.kind == ssm::ScaffoldKind::kAffine ? "affine" : "mlp_scalar";
  j["W1"] = matrix_json(s.W1);
  j["b1"] = vector_json(s.b1);
  if (s.kind == ssm::ScaffoldKind::kMlpScalar) {
    j["W2"] = matrix_json(s.W2);
    j["b2"] = vector_json(s.b2);
    j["negative_slope"] = s.negative_slope;
    j["zero_anchored"] = s.zero_anchored;
  }
  return j;
}

ssm::Scaffolding scaffold_from(const Json& j, const char* where) {
  ssm::Scaffolding s;
  const Json& kind = detail::field(j, "kind", where);
  if (kind == "affine") {
    s.kind = ssm::ScaffoldKind::kAffine;
  } else if (kind == "mlp_scalar") {
    s.kind = ssm::ScaffoldKind::kMlpScalar;
  } else {
    throw IntegrityError(std::string(where) + ": unknown scaffolding kind");
  }
  s.W1 = matrix_from(detail::field(j, "W1", where), where);
  s.b1 = vector_from(detail::field(j, "b1", where), where);
  if (s.kind == ssm::ScaffoldKind::kMlpScalar) {
    s.W2 = matrix_from(detail::field(j, "W2", where), where);
    s.b2 = vector_from(detail::field(j, "b2", where), where);
    s.negative_slope = number(j, "negative_slope", where);
    const Json& za = detail::field(j, "zero_anchored", where);
    if (!za.is_boolean()) {
      throw IntegrityError(std::string(where) + ": zero_anchored must be bool");
    }
    s.zero_anchored = za.get<bool>();
  }
  return s;
}

Json bounds_json(const ssm::BiLipBounds& b) {
  return Json{{"mu", b.mu}, {"nu", b.nu}, {"method", ssm::to_string(b.method)}};
}

Json parse(const std::string& text, const char* where) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw IntegrityError(std::string(where) + ": " + e.what());
  }
}

bool close(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace

std::string format_double(double v) { return fmt("%.17g", v); }
std::string format_time(double t) { return fmt("%.9g", t); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string model_to_json(const ssm::SsmModel& m) {
  m.validate();
  Json j;
  j["format"] = kModelFormat;
  j["version"] = 1;
  j["n_x"] = m.n_x();
  j["n_u"] = m.n_u();
  j["n_y"] = m.n_y();
  j["dt_sample"] = m.dt_sample;
  Json lru;
  lru["A"] = matrix_json(m.lru.A);
  lru["B"] = matrix_json(m.lru.B);
  lru["C"] = matrix_json(m.lru.C);
  lru["D"] = matrix_json(m.lru.D);
  lru["nu_log"] = vector_json(m.lru.nu_log);
  lru["theta"] = vector_json(m.lru.theta);
  j["lru"] = lru;
  j["s_u"] = scaffold_json(m.s_u);
  j["s_y"] = scaffold_json(m.s_y);
  j["bilip"] = Json{{"u", bounds_json(ssm::bilip_bounds(m.s_u))},
                    {"y", bounds_json(ssm::bilip_bounds(m.s_y))}};
  return j.dump(2) + "\n";
}

ssm::SsmModel model_from_json(const std::string& text) {
  constexpr const char* where = "model";
  const Json j = parse(text, where);
  if (!j.is_object() || j.value("format", "") != kModelFormat) {
    throw IntegrityError("model: not an ssmctrl model document");
  }
  ssm::SsmModel m;
  const Json& lru = detail::field(j, "lru", where);
  const Matrix A = matrix_from(detail::field(lru, "A", where), where);
  const Matrix B = matrix_from(detail::field(lru, "B", where), where);
  const Matrix C = matrix_from(detail::field(lru, "C", where), where);
  const Matrix D = matrix_from(detail::field(lru, "D", where), where);
  const Vector nu_log = vector_from(detail::field(lru, "nu_log", where), where);
  const Vector theta = vector_from(detail::field(lru, "theta", where), where);
  try {
    if (nu_log.size() > 0) {
      m.lru = ssm::LruParams::from_parameterization(nu_log, theta, B, C, D);
      if (m.lru.A.rows() != A.rows() || m.lru.A.cols() != A.cols() ||
          (m.lru.A - A).cwiseAbs().maxCoeff() > 1e-12) {
        throw IntegrityError("model: A disagrees with its parameterization");
      }
    } else {
      m.lru = ssm::LruParams::from_matrices(A, B, C, D);
    }
    m.s_u = scaffold_from(detail::field(j, "s_u", where), "model.s_u");
    m.s_y = scaffold_from(detail::field(j, "s_y", where), "model.s_y");
    m.dt_sample = number(j, "dt_sample", where);
    m.validate();
  } catch (const IntegrityError&) {
    throw;
  } catch (const Error& e) {
    throw IntegrityError(std::string("model: ") + e.what());
  }
  if (number(j, "n_x", where) != m.n_x() || number(j, "n_u", where) != m.n_u() ||
      number(j, "n_y", where) != m.n_y()) {
    throw IntegrityError("model: stored dimensions disagree with the weights");
  }
  if (j.contains("bilip")) {
    const Json& bl = j["bilip"];
    auto check = [&](const char* key, const ssm::Scaffolding& s) {
      if (!bl.contains(key)) return;
      ssm::BiLipBounds b;
      try {
        b = ssm::bilip_bounds(s);
      } catch (const NotBiLipschitz& e) {
        throw IntegrityError(std::string("model: stored bounds for a map that "
                                         "is not bi-Lipschitz: ") + e.what());
      }
      if (!close(number(bl[key], "mu", where), b.mu) ||
          !close(number(bl[key], "nu", where), b.nu)) {
        throw IntegrityError(std::string("model: stored bi-Lipschitz bounds "
                                         "for s_") + key +
                             " disagree with the weights");
      }
    };
    check("u", m.s_u);
    check("y", m.s_y);
  }
  return m;
}

std::string gains_to_json(const synthesis::GainSet& g) {
  g.validate();
  Json j;
  j["format"] = kGainFormat;
  j["version"] = 1;
  j["K"] = matrix_json(g.K);
  j["L"] = matrix_json(g.L);
  j["P"] = matrix_json(g.P);
  j["Q"] = matrix_json(g.Q);
  j["X"] = matrix_json(g.X);
  j["Y"] = matrix_json(g.Y);
  j["U"] = matrix_json(g.U);
  j["V"] = matrix_json(g.V);
  j["rho_c"] = g.rho_c;
  j["rho_o"] = g.rho_o;
  j["sigma"] = g.sigma;
  j["eta"] = g.eta;
  j["mu_u"] = g.mu_u;
  j["nu_u"] = g.nu_u;
  j["mu_y"] = g.mu_y;
  j["nu_y"] = g.nu_y;
  j["cond_Y"] = g.cond_Y;
  j["cond_U"] = g.cond_U;
  return j.dump(2) + "\n";
}

synthesis::GainSet gains_from_json(const std::string& text) {
  constexpr const char* where = "gains";
  const Json j = parse(text, where);
  if (!j.is_object() || j.value("format", "") != kGainFormat) {
    throw IntegrityError("gains: not an ssmctrl gain document");
  }
  synthesis::GainSet g;
  g.K = matrix_from(detail::field(j, "K", where), where);
  g.L = matrix_from(detail::field(j, "L", where), where);
  g.P = matrix_from(detail::field(j, "P", where), where);
  g.Q = matrix_from(detail::field(j, "Q", where), where);
  g.X = matrix_from(detail::field(j, "X", where), where);
  g.Y = matrix_from(detail::field(j, "Y", where), where);
  g.U = matrix_from(detail::field(j, "U", where), where);
  g.V = matrix_from(detail::field(j, "V", where), where);
  g.rho_c = number(j, "rho_c", where);
  g.rho_o = number(j, "rho_o", where);
  g.sigma = number(j, "sigma", where);
  g.eta = number(j, "eta", where);
  g.mu_u = number(j, "mu_u", where);
  g.nu_u = number(j, "nu_u", where);
  g.mu_y = number(j, "mu_y", where);
  g.nu_y = number(j, "nu_y", where);
  g.cond_Y = number(j, "cond_Y", where);
  g.cond_U = number(j, "cond_U", where);
  try {
    g.validate();
  } catch (const Error& e) {
    throw IntegrityError(std::string("gains: ") + e.what());
  }
  return g;
}

std::string trajectory_csv(const plant::Trajectory& traj) {
  traj.validate();
  std::string out = "t,u,y,y_clean\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    out += format_time(static_cast<double>(k) * traj.dt_sample);
    out += ',';
    out += format_double(traj.inputs[k]);
    out += ',';
    out += format_double(traj.outputs[k]);
    out += ',';
    out += format_double(traj.outputs_clean[k]);
    out += '\n';
  }
  return out;
}

plant::Trajectory trajectory_from_csv(const std::string& text,
                                      double dt_sample) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "t,u,y,y_clean") {
    throw IntegrityError("trajectory CSV: expected header t,u,y,y_clean");
  }
  plant::Trajectory traj;
  traj.dt_sample = dt_sample;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    double v[4];
    std::istringstream ls(line);
    std::string cell;
    for (int c = 0; c < 4; ++c) {
      if (!std::getline(ls, cell, ',')) {
        throw IntegrityError("trajectory CSV: row " + std::to_string(row) +
                             " has fewer than 4 fields");
      }
      char* end = nullptr;
      v[c] = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0') {
        throw IntegrityError("trajectory CSV: row " + std::to_string(row) +
                             " has a non-numeric field");
      }
    }
    traj.inputs.push_back(v[1]);
    traj.outputs.push_back(v[2]);
    traj.outputs_clean.push_back(v[3]);
  }
  try {
    traj.validate();
  } catch (const Error& e) {
    throw IntegrityError(std::string("trajectory CSV: ") + e.what());
  }
  return traj;
}

std::string closedloop_csv(const closedloop::ClosedLoopTrace& trace) {
  trace.validate();
  std::string out = "t,u,y,yhat,xnorm,xhatnorm,d\n";
  for (std::size_t k = 0; k < trace.size(); ++k) {
    out += format_time(trace.t[k]);
    out += ',' + format_double(trace.u[k]);
    out += ',' + format_double(trace.y[k]);
    out += ',' + format_double(trace.yhat[k]);
    out += ',' + format_double(trace.x[k].norm());
    out += ',' + format_double(trace.xhat[k].norm());
    out += ',';
    if (!trace.d.empty()) out += format_double(trace.d[k]);
    out += '\n';
  }
  return out;
}

}  // namespace ssmctrl::io
