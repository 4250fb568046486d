#pragma once

#include <string>

namespace qcurv::cli {

/// Exit codes shared by every subcommand: 0 success, 2 module/audit failure,
/// 3 rejected configuration.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 2;
inline constexpr int kBadConfig = 3;

int run_spectrum(const std::string& config_path, const std::string& out_dir, unsigned seed);
int run_audit(const std::string& config_path, const std::string& out_dir, unsigned seed);
int run_bubble(const std::string& config_path, const std::string& out_dir, unsigned seed);
int run_project(const std::string& config_path, const std::string& out_dir, unsigned seed);
int run_solve(const std::string& config_path, const std::string& out_dir, unsigned seed);

} // namespace qcurv::cli
