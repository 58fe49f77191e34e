#include "augscat/output.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "augscat/error.hpp"

namespace augscat {

namespace fs = std::filesystem;

Json to_json(Complex z) { return Json::array({z.real(), z.imag()}); }

Json to_json(const Eigen::VectorXcd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(to_json(v(i)));
  return a;
}

Json to_json(const Eigen::MatrixXcd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(to_json(m(r, c)));
    rows.push_back(row);
  }
  return rows;
}

Json to_json(const ScatteringMatrix& m) {
  Json j;
  j["kind"] = m.kind == MatrixKind::TMatrix ? "T_matrix" : "S_matrix";
  j["metadata"] = {{"k", m.k},
                   {"gamma", m.gamma},
                   {"beta", m.beta},
                   {"M", m.M},
                   {"M_prime", m.M_prime},
                   {"h", m.h},
                   {"unitarity_defect", m.unitarity_defect},
                   {"inverse_defect", m.inverse_defect}};
  j["entries"] = to_json(m.entries);
  return j;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("SHA-256 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string sha256_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return sha256_hex(ss.str());
}

OutputDir::OutputDir(std::string dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error("cannot create output directory " + dir_ + ": " + ec.message());
}

std::string OutputDir::file(const std::string& name) const { return (fs::path(dir_) / name).string(); }

void OutputDir::write_json(const std::string& name, const Json& j) {
  std::ofstream os(file(name));
  if (!os) throw Error("cannot write " + file(name));
  os << j.dump(2) << '\n';
  record(name);
}

void OutputDir::write_csv(const std::string& name, const std::vector<std::string>& header,
                          const std::vector<std::vector<std::string>>& rows) {
  std::ofstream os(file(name));
  if (!os) throw Error("cannot write " + file(name));
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << '\n';
  }
  record(name);
}

void OutputDir::record(const std::string& name) {
  for (const auto& f : files_) {
    if (f == name) return;
  }
  files_.push_back(name);
}

Json OutputDir::listing() const {
  Json a = Json::array();
  for (const auto& f : files_) a.push_back({{"file", f}, {"sha256", sha256_file(file(f))}});
  return a;
}

std::string csv_number(double x) {
  if (std::isnan(x)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace augscat
