#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssmctrl/errors.hpp"
#include "ssmctrl/linalg.hpp"

namespace ssmctrl::io::detail {

using Json = nlohmann::json;

// {"rows": r, "cols": c, "data": [row-major]}
inline Json matrix_json(const Matrix& m) {
  Json data = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline const Json& field(const Json& j, const char* key, const char* where) {
  if (!j.is_object() || !j.contains(key)) {
    throw IntegrityError(std::string(where) + ": missing field '" + key + "'");
  }
  return j.at(key);
}

inline double number(const Json& j, const char* key, const char* where) {
  const Json& v = field(j, key, where);
  if (!v.is_number()) {
    throw IntegrityError(std::string(where) + ": field '" + key +
                         "' must be a number");
  }
  return v.get<double>();
}

inline Matrix matrix_from(const Json& j, const char* where) {
  if (!j.is_object()) throw IntegrityError(std::string(where) + ": not a matrix");
  const auto rows = j.value("rows", -1L);
  const auto cols = j.value("cols", -1L);
  if (rows < 0 || cols < 0 || !j.contains("data") || !j["data"].is_array() ||
      static_cast<long>(j["data"].size()) != rows * cols) {
    throw IntegrityError(std::string(where) + ": malformed matrix");
  }
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (long i = 0; i < rows; ++i) {
    for (long jj = 0; jj < cols; ++jj) {
      const Json& v = j["data"][k++];
      if (!v.is_number()) {
        throw IntegrityError(std::string(where) + ": non-numeric entry");
      }
      m(i, jj) = v.get<double>();
    }
  }
  return m;
}

inline Vector vector_from(const Json& j, const char* where) {
  if (!j.is_array()) throw IntegrityError(std::string(where) + ": not an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw IntegrityError(std::string(where) + ": non-numeric entry");
    }
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

}  // namespace ssmctrl::io::detail
