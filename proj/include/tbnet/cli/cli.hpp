#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace tbnet::cli {

/// Stable process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;    // usage, config, data or checkpoint problems
inline constexpr int kExitNumeric = 3;  // non-finite loss or outputs

/// Relative paths are resolved under this variable when it is set.
inline constexpr const char* kOutputRootEnv = "TBNET_OUTPUT_ROOT";

/// Overlay colors by class id: background, crack, cornerfracture, seambroken,
/// patch, repair, slab, track, light. Ids past the table wrap around.
inline constexpr std::array<std::array<std::uint8_t, 3>, 9> kPalette{{
    {0, 0, 0},
    {230, 25, 75},
    {245, 130, 48},
    {255, 225, 25},
    {60, 180, 75},
    {0, 130, 200},
    {145, 30, 180},
    {70, 240, 240},
    {240, 50, 230},
}};

/// Runs one command: generate | train | eval | predict. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

/// FNV-1a over the relative paths and bytes of every regular file under
/// root, in sorted path order.
std::uint64_t fingerprint_directory(const std::filesystem::path& root);

}  // namespace tbnet::cli
