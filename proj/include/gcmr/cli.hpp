#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "gcmr/data_io.hpp"
#include "gcmr/error.hpp"
#include "gcmr/trainer.hpp"

namespace gcmr::cli {

enum ExitCode : int {
    kOk = 0,
    kCheckFailed = 1,
    kConfigError = 2,
    kDataError = 3,
    kNumericalError = 4,
};

struct ConfigError : Error {
    using Error::Error;
};

inline constexpr int kConfigVersion = 1;

// Everything a run needs, loaded from one versioned JSON document.
struct RunConfig {
    std::string name = "gcmr";
    TrainConfig train;
    ProtocolSpec protocol;
    SyntheticSpec synthetic;
    // Optional defaults for `run`; --data and --out win when given.
    std::string data_path;
    std::string out_dir;
};

// Strict parse: unknown keys, wrong types and out-of-range values raise ConfigError naming the field.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const RunConfig& cfg);

// Entry point shared by the gcmr executable and the tests.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gcmr::cli
