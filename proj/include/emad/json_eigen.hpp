#pragma once

#include <vector>

#include <json.hpp>

#include "emad/common.hpp"

namespace emad {

/// Named-tensor encoding: {"shape": [rows, cols], "data": row-major values}.
inline nlohmann::json tensor_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

inline Matrix tensor_from_json(const nlohmann::json& j) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  if (shape.size() != 2) throw DataError("tensor shape must have two entries");
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != shape[0] * shape[1]) throw DataError("tensor data size mismatch");
  Matrix m(shape[0], shape[1]);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = data[static_cast<std::size_t>(r * m.cols() + c)];
  return m;
}

inline nlohmann::json row_to_json(const RowVector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline RowVector row_from_json(const nlohmann::json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const RowVector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

}  // namespace emad
