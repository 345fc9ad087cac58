#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "klsplit/block_vector.hpp"
#include "klsplit/problems.hpp"
#include "klsplit/trace.hpp"

namespace klsplit {

/// Fixed trace column order; missing values are empty fields.
inline const std::vector<std::string> kTraceColumns = {"k",    "f_val", "step_norm", "slope_norm", "a_k",
                                                        "b_k", "eps_k", "alpha_k",   "beta_k",     "region_flag"};

/// %.17g, so values round-trip exactly.
std::string format_double(double v);

void write_trace_csv(std::ostream& os, const IterateTrace& trace);
void write_trace_csv(const std::filesystem::path& path, const IterateTrace& trace);

/// SchemaError on a wrong header, field count, non-numeric field, non-increasing
/// k or non-finite f_val.
IterateTrace read_trace_csv(std::istream& is);
IterateTrace read_trace_csv(const std::filesystem::path& path);

/// One row per record: k followed by the flattened monitored iterate.
void write_iterates_csv(const std::filesystem::path& path, const IterateTrace& trace);
/// Fills x on the records of `trace` (matched by k) as single-block points.
void read_iterates_csv(const std::filesystem::path& path, IterateTrace& trace);

void write_matrix_csv(const std::filesystem::path& path, const Matrix& M);
Matrix read_matrix_csv(const std::filesystem::path& path);

/// Header line "m,n,r,s,seed", then m rows of A, optionally followed by m rows of
/// X_true and m rows of Y_true. DataError on malformed input.
void write_instance(const std::filesystem::path& path, const DecompositionInstance& inst);
DecompositionInstance read_instance(const std::filesystem::path& path);

}  // namespace klsplit
