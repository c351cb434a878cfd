#ifndef QAFFDE_IO_HPP
#define QAFFDE_IO_HPP

#include <Eigen/Dense>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qaffde/density_matrix.hpp"
#include "qaffde/metrics.hpp"
#include "qaffde/synthgen.hpp"

namespace qaffde {

constexpr int kModelFormatVersion = 1;

namespace detail {

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace detail

/// Writes a dataset CSV: header x1..xd[,true_density][,label], LF line ends.
inline void write_dataset_csv(const std::string& path, const Dataset& ds,
                              const std::vector<int>* labels = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_dataset_csv: cannot open " + path);
  const int d = ds.dim();
  for (int j = 0; j < d; ++j) out << (j ? "," : "") << "x" << (j + 1);
  if (ds.has_density()) out << ",true_density";
  if (labels) out << ",label";
  out << "\n";
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (int j = 0; j < d; ++j)
      out << (j ? "," : "") << detail::format_double(ds.points(i, j));
    if (ds.has_density()) out << "," << detail::format_double(ds.true_density(i));
    if (labels) out << "," << (*labels)[static_cast<std::size_t>(i)];
    out << "\n";
  }
}

struct LabeledDataset {
  Dataset data;
  std::vector<int> labels;  // empty when the file has no label column
};

inline LabeledDataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_dataset_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_dataset_csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);

  int d = 0;
  int density_col = -1, label_col = -1;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == "true_density")
      density_col = static_cast<int>(j);
    else if (header[j] == "label")
      label_col = static_cast<int>(j);
    else if (header[j] == "x" + std::to_string(d + 1))
      ++d;
    else
      throw std::runtime_error("read_dataset_csv: unexpected column " + header[j]);
  }
  if (d == 0) throw std::runtime_error("read_dataset_csv: no coordinate columns in " + path);

  std::vector<std::vector<double>> rows;
  std::vector<double> densities;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("read_dataset_csv: ragged row in " + path);
    std::vector<double> row(d);
    for (int j = 0; j < d; ++j) row[j] = std::stod(fields[j]);
    rows.push_back(std::move(row));
    if (density_col >= 0) densities.push_back(std::stod(fields[density_col]));
    if (label_col >= 0) labels.push_back(std::stoi(fields[label_col]));
  }

  LabeledDataset out;
  out.data.name = path;
  out.data.points.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < d; ++j) out.data.points(static_cast<Eigen::Index>(i), j) = rows[i][j];
  if (density_col >= 0) {
    out.data.true_density.resize(static_cast<Eigen::Index>(densities.size()));
    for (std::size_t i = 0; i < densities.size(); ++i)
      out.data.true_density(static_cast<Eigen::Index>(i)) = densities[i];
  }
  out.labels = std::move(labels);
  return out;
}

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::Ref<const Matrix>& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) flat.push_back(m(i, j));  // row-major
  return flat;
}

inline Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
  const auto flat = j.get<std::vector<double>>();
  if (flat.size() != static_cast<std::size_t>(rows * cols))
    throw std::runtime_error("model file: matrix size mismatch");
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index jj = 0; jj < cols; ++jj) m(i, jj) = flat[k++];
  return m;
}

}  // namespace detail

inline void save_model(const std::string& path, const DensityMatrixModel& model) {
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  const auto& fm = model.feature_map;
  j["feature_map"] = {{"d", fm.dim()},
                      {"D", fm.num_features()},
                      {"gamma_target", fm.gamma_target},
                      {"normalize", fm.normalize},
                      {"W", detail::matrix_to_json(fm.W)},
                      {"b", std::vector<double>(fm.b.data(), fm.b.data() + fm.b.size())}};
  j["rank"] = model.rank;
  j["V"] = detail::matrix_to_json(model.V);
  j["lambda"] =
      std::vector<double>(model.Lambda.data(), model.Lambda.data() + model.Lambda.size());
  j["norm_const"] = model.norm_const;
  j["gamma"] = 2.0 * fm.gamma_target;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out << j.dump(2) << "\n";
}

inline DensityMatrixModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (j.at("format_version").get<int>() != kModelFormatVersion)
    throw std::runtime_error("load_model: unsupported format version");
  DensityMatrixModel model;
  const auto& fm = j.at("feature_map");
  const auto d = fm.at("d").get<Eigen::Index>();
  const auto D = fm.at("D").get<Eigen::Index>();
  model.feature_map.W = detail::matrix_from_json(fm.at("W"), D, d);
  const auto b = fm.at("b").get<std::vector<double>>();
  model.feature_map.b = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
  model.feature_map.gamma_target = fm.at("gamma_target").get<double>();
  model.feature_map.normalize = fm.at("normalize").get<bool>();
  model.rank = j.at("rank").get<int>();
  model.V = detail::matrix_from_json(j.at("V"), model.rank, D);
  const auto lambda = j.at("lambda").get<std::vector<double>>();
  model.Lambda =
      Eigen::Map<const Vector>(lambda.data(), static_cast<Eigen::Index>(lambda.size()));
  model.norm_const = j.at("norm_const").get<double>();
  return model;
}

inline void write_reports_csv(const std::string& path, const std::vector<DensityReport>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_reports_csv: cannot open " + path);
  out << "dataset,method,seed,mae,spearman,n_eval,wall_time_ms\n";
  for (const auto& r : rows)
    out << r.dataset << "," << r.method << "," << r.seed << "," << detail::format_double(r.mae)
        << "," << detail::format_double(r.spearman) << "," << r.n_eval << ","
        << detail::format_double(r.wall_time_ms) << "\n";
}

}  // namespace qaffde

#endif  // QAFFDE_IO_HPP
