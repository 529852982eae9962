#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "angio/segmentor.hpp"
#include "angio/vesselness.hpp"

namespace angio {

// Small TOML subset: [section] headers, key = value pairs, # comments,
// strings in double quotes (\\ and \" escapes), integers, floats, booleans,
// single-line arrays. Errors carry the file name and line number.
struct TomlValue {
    enum class Kind { string, integer, floating, boolean, array };
    Kind kind = Kind::string;
    std::string s;
    long long i = 0;
    double d = 0.0;
    bool b = false;
    std::vector<TomlValue> arr;
    int line = 0;
};

using TomlDoc = std::map<std::string, std::map<std::string, TomlValue>>;

TomlDoc parse_toml_text(const std::string& text, const std::string& name);
TomlDoc parse_toml_file(const std::string& path);

// One run's worth of settings, defaults matching the desk-scale recipe.
struct RunConfig {
    std::string train_dir;
    std::string out_dir = "out";
    std::string segmentor_path;
    FrangiConfig frangi;
    int patch_size = 8;
    double gamma = 0.5;
    double beta0 = 0.0;
    double betaE = 0.5;
    int embed_dim = 32;
    int hidden_dim = 64;
    int epochs = 200;
    double lr = 0.01;
    int batch_size = 8;
    std::uint64_t seed = 0;
    int workers = 1;
    bool cons = true;
    bool wrec = false;
    bool joint = false;  // accepted as a key, rejected when true
    ConsMetric metric = ConsMetric::cross_entropy;
};

// Parses and maps the file onto RunConfig. Unknown sections or keys and type
// mismatches are all collected and reported together in one config_error.
// Relative paths are resolved against $ANGIO_ROOT when that variable is set.
RunConfig load_run_config(const std::string& path);

// Range/consistency validation; collects every violated constraint into a
// single config_error instead of stopping at the first.
void validate_run_config(const RunConfig& cfg);

// Canonical one-line-per-field rendering (stable across platforms) and its
// FNV-1a 64-bit hash, recorded in run manifests.
std::string run_config_canonical(const RunConfig& cfg);
std::string run_config_hash(const RunConfig& cfg);

const char* cons_metric_name(ConsMetric m);

}  // namespace angio
