#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "augscat/scattering.hpp"

namespace augscat {

using Json = nlohmann::ordered_json;

// Complex numbers as [re, im]; matrices row-major as a list of rows.
Json to_json(Complex z);
Json to_json(const Eigen::VectorXcd& v);
Json to_json(const Eigen::MatrixXcd& m);
Json to_json(const ScatteringMatrix& m);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

// Collects written files so the manifest can list them with checksums.
class OutputDir {
 public:
  explicit OutputDir(std::string dir);

  const std::string& path() const { return dir_; }
  std::string file(const std::string& name) const;

  void write_json(const std::string& name, const Json& j);
  void write_csv(const std::string& name, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);
  // Registers a file written by other code.
  void record(const std::string& name);

  Json listing() const;

 private:
  std::string dir_;
  std::vector<std::string> files_;
};

// Fixed-format number for CSV cells (17 significant digits, nan as "nan").
std::string csv_number(double x);

}  // namespace augscat
