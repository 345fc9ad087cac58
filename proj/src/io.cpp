#include "klsplit/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "klsplit/errors.hpp"

namespace klsplit {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string chomp(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ')) s.pop_back();
  return s;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* begin = s.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end == begin + s.size();
}

std::optional<double> optional_field(const std::string& s, std::size_t line, const char* column) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  if (!parse_double(s, v))
    throw SchemaError("trace line " + std::to_string(line) + ": column " + column + " is not numeric");
  return v;
}

void put(std::ostream& os, const std::optional<double>& v) {
  if (v) os << format_double(*v);
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::vector<double> parse_row(const std::string& line, std::size_t lineno, const std::string& what) {
  std::vector<double> row;
  for (const auto& f : split_csv(chomp(line))) {
    double v = 0.0;
    if (!parse_double(chomp(f), v))
      throw DataError(what + " line " + std::to_string(lineno) + ": '" + f + "' is not a number");
    row.push_back(v);
  }
  return row;
}

void write_rows(std::ostream& os, const Matrix& M) {
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j) os << ',';
      os << format_double(M(i, j));
    }
    os << '\n';
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trace_csv(std::ostream& os, const IterateTrace& trace) {
  for (std::size_t c = 0; c < kTraceColumns.size(); ++c) os << (c ? "," : "") << kTraceColumns[c];
  os << '\n';
  for (const auto& r : trace.records) {
    os << r.k << ',' << format_double(r.f_val) << ',';
    put(os, r.step_norm);
    os << ',';
    put(os, r.slope_norm);
    os << ',';
    put(os, r.a);
    os << ',';
    put(os, r.b);
    os << ',';
    put(os, r.eps);
    os << ',';
    put(os, r.alpha);
    os << ',';
    put(os, r.beta);
    os << ',';
    if (r.region_flag) os << (*r.region_flag ? 1 : 0);
    os << '\n';
  }
}

void write_trace_csv(const std::filesystem::path& path, const IterateTrace& trace) {
  auto out = open_out(path);
  write_trace_csv(out, trace);
}

IterateTrace read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw SchemaError("trace: missing header row");
  const auto header = split_csv(chomp(line));
  if (header != kTraceColumns) throw SchemaError("trace: header does not match the expected columns");

  IterateTrace trace;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    line = chomp(line);
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != kTraceColumns.size())
      throw SchemaError("trace line " + std::to_string(lineno) + ": expected " +
                        std::to_string(kTraceColumns.size()) + " fields");
    IterateRecord r;
    double k = 0.0;
    if (!parse_double(f[0], k) || k < 0 || k != std::floor(k))
      throw SchemaError("trace line " + std::to_string(lineno) + ": k is not a nonnegative integer");
    r.k = static_cast<std::size_t>(k);
    if (!trace.records.empty() && r.k <= trace.records.back().k)
      throw SchemaError("trace line " + std::to_string(lineno) + ": k is not strictly increasing");
    // +inf is allowed on the first record only (infeasible start)
    const bool ok_val = parse_double(f[1], r.f_val) &&
                        (std::isfinite(r.f_val) || (trace.records.empty() && r.f_val > 0.0 && std::isinf(r.f_val)));
    if (!ok_val) throw SchemaError("trace line " + std::to_string(lineno) + ": f_val must be finite");
    r.step_norm = optional_field(f[2], lineno, "step_norm");
    r.slope_norm = optional_field(f[3], lineno, "slope_norm");
    r.a = optional_field(f[4], lineno, "a_k");
    r.b = optional_field(f[5], lineno, "b_k");
    r.eps = optional_field(f[6], lineno, "eps_k");
    r.alpha = optional_field(f[7], lineno, "alpha_k");
    r.beta = optional_field(f[8], lineno, "beta_k");
    if (const auto flag = optional_field(f[9], lineno, "region_flag")) {
      if (*flag != 0.0 && *flag != 1.0)
        throw SchemaError("trace line " + std::to_string(lineno) + ": region_flag must be 0 or 1");
      r.region_flag = *flag == 1.0;
    }
    trace.records.push_back(std::move(r));
  }
  return trace;
}

IterateTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open trace " + path.string());
  return read_trace_csv(in);
}

void write_iterates_csv(const std::filesystem::path& path, const IterateTrace& trace) {
  auto out = open_out(path);
  for (const auto& r : trace.records) {
    if (!r.x) continue;
    out << r.k;
    const Vector v = r.x->flatten();
    for (Eigen::Index i = 0; i < v.size(); ++i) out << ',' << format_double(v[i]);
    out << '\n';
  }
}

void read_iterates_csv(const std::filesystem::path& path, IterateTrace& trace) {
  auto in = open_in(path);
  std::map<std::size_t, Vector> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (chomp(line).empty()) continue;
    const auto row = parse_row(line, lineno, "iterates");
    if (row.size() < 2) throw DataError("iterates line " + std::to_string(lineno) + ": no coordinates");
    Vector v(static_cast<Eigen::Index>(row.size() - 1));
    for (std::size_t i = 1; i < row.size(); ++i) v[static_cast<Eigen::Index>(i - 1)] = row[i];
    rows[static_cast<std::size_t>(row[0])] = v;
  }
  for (auto& r : trace.records) {
    auto it = rows.find(r.k);
    if (it != rows.end()) r.x = BlockVector{it->second};
  }
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& M) {
  auto out = open_out(path);
  write_rows(out, M);
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (chomp(line).empty()) continue;
    rows.push_back(parse_row(line, lineno, path.string()));
    if (rows.back().size() != rows.front().size()) throw DataError(path.string() + ": ragged rows");
  }
  if (rows.empty()) return Matrix(0, 0);
  Matrix M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return M;
}

void write_instance(const std::filesystem::path& path, const DecompositionInstance& inst) {
  auto out = open_out(path);
  out << inst.rows() << ',' << inst.cols() << ',' << inst.r << ',' << inst.s << ',' << inst.seed << '\n';
  write_rows(out, inst.A);
  if (inst.X_true && inst.Y_true) {
    write_rows(out, *inst.X_true);
    write_rows(out, *inst.Y_true);
  }
}

DecompositionInstance read_instance(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  const auto head = parse_row(line, 1, path.string());
  if (head.size() != 5) throw DataError(path.string() + ": header must be m,n,r,s,seed");
  for (double v : head)
    if (v < 0 || v != std::floor(v)) throw DataError(path.string() + ": header entries must be nonnegative integers");
  const auto m = static_cast<Eigen::Index>(head[0]);
  const auto n = static_cast<Eigen::Index>(head[1]);
  if (m <= 0 || n <= 0) throw DataError(path.string() + ": matrix shape must be positive");

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (chomp(line).empty()) continue;
    rows.push_back(parse_row(line, lineno, path.string()));
    if (static_cast<Eigen::Index>(rows.back().size()) != n)
      throw DataError(path.string() + " line " + std::to_string(lineno) + ": expected " + std::to_string(n) + " columns");
  }
  const auto nrows = static_cast<Eigen::Index>(rows.size());
  if (nrows != m && nrows != 3 * m)
    throw DataError(path.string() + ": expected " + std::to_string(m) + " or " + std::to_string(3 * m) + " rows");

  auto block = [&](Eigen::Index offset) {
    Matrix M(m, n);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < n; ++j) M(i, j) = rows[static_cast<std::size_t>(offset + i)][static_cast<std::size_t>(j)];
    return M;
  };
  DecompositionInstance inst;
  inst.A = block(0);
  inst.r = static_cast<Eigen::Index>(head[2]);
  inst.s = static_cast<std::size_t>(head[3]);
  inst.seed = static_cast<std::uint64_t>(head[4]);
  if (inst.r > std::min(m, n) || inst.s > static_cast<std::size_t>(m * n))
    throw DataError(path.string() + ": rank or sparsity bound out of range");
  if (nrows == 3 * m) {
    inst.X_true = block(m);
    inst.Y_true = block(2 * m);
  }
  return inst;
}

}  // namespace klsplit
