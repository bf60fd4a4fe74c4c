#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace ptctr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitNotConverged = 1;
inline constexpr int kExitUsage = 2;

/// Entry point shared by the executable and the tests.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "ex1..ex10", "ex1,ex3" or a mix; throws InvalidInput on bad ids or an empty list.
std::vector<int> parse_problem_list(const std::string& spec);

/// Comma-separated tokens with surrounding blanks removed; empty tokens are dropped.
std::vector<std::string> split_list(const std::string& text);

/// min(requested, jobs, PTCTR_MAX_WORKERS), at least 1. requested = 0 means
/// the hardware concurrency.
unsigned worker_count(unsigned requested, std::size_t jobs);

}  // namespace ptctr::cli
