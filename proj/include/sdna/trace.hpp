#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "sdna/types.hpp"

namespace sdna {

// One solver checkpoint. `epoch` is iteration * E[|S|] / n, i.e. expected
// passes over the data; `seconds` covers stepping time only (checkpoint
// evaluation and serialization excluded) and is non-decreasing within a run.
template <typename Scalar>
struct TraceRecord {
  long iteration = 0;
  double epoch = 0;
  double seconds = 0;
  Scalar objective = 0;  // f, F, or the primal value P
  Scalar dual = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar gap = 0;  // residual against the optimum, or P - D
};

namespace internal {

inline std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace internal

// iteration,epoch_equivalent,residual
template <typename Scalar>
std::string smooth_trace_csv(const std::vector<TraceRecord<Scalar>>& records) {
  std::ostringstream os;
  os << "iteration,epoch_equivalent,residual\n";
  for (const auto& r : records) {
    os << r.iteration << ',' << internal::format_number(r.epoch) << ','
       << internal::format_number(static_cast<double>(r.gap)) << '\n';
  }
  return os.str();
}

// solver,tau,seed,iter,epoch,seconds,primal,dual,gap
template <typename Scalar>
std::string erm_trace_csv(const std::string& solver, Index tau,
                          std::uint64_t seed,
                          const std::vector<TraceRecord<Scalar>>& records) {
  std::ostringstream os;
  os << "solver,tau,seed,iter,epoch,seconds,primal,dual,gap\n";
  for (const auto& r : records) {
    os << solver << ',' << tau << ',' << seed << ',' << r.iteration << ','
       << internal::format_number(r.epoch) << ','
       << internal::format_number(r.seconds) << ','
       << internal::format_number(static_cast<double>(r.objective)) << ','
       << internal::format_number(static_cast<double>(r.dual)) << ','
       << internal::format_number(static_cast<double>(r.gap)) << '\n';
  }
  return os.str();
}

// Write-temp-then-rename so concurrent readers never observe partial files.
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace sdna
