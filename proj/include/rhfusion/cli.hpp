#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace rhf::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kInvalid = 1;
inline constexpr int kUsage = 2;

int cmd_validate(const std::filesystem::path& scenario, const std::vector<std::string>& overrides, std::ostream& out,
                 std::ostream& err);

int cmd_run(const std::filesystem::path& scenario, const std::filesystem::path& out_dir,
            const std::vector<std::string>& overrides, bool quiet, std::ostream& out, std::ostream& err);

int cmd_oracle(const std::filesystem::path& scenario, int sensor_i, int sensor_j, std::size_t runs, double t,
               const std::filesystem::path& out_dir, const std::vector<std::string>& overrides, bool quiet,
               std::ostream& out, std::ostream& err);

/// Full command line, args[0] being the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rhf::cli
