#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "meterfl/data.hpp"
#include "meterfl/fl.hpp"

namespace meterfl {

// One experiment, fully described. Parsed from a flat key = value text file;
// absent keys fall back to the defaults below.
struct RunManifest {
    std::filesystem::path dataset_path;
    std::optional<std::size_t> row_limit; // ingest only the first N raw rows
    PartitionSpec partition{PartitionSpec::Mode::NonIid,
                            {0.2, 0.2, 0.2, 0.1, 0.25},
                            {128, 128, 128, 64, 256}};
    FLConfig fl;
    std::filesystem::path output_dir; // empty: $METERFL_OUTPUT_DIR, else "meterfl_out"
    int emit_trace_hours = 120;

    void validate() const; // throws ConfigError
};

RunManifest load_manifest(const std::filesystem::path& path);
RunManifest parse_manifest(std::istream& in);

// Canonical text form; feeding it back through load_manifest reproduces the
// same run.
std::string serialize_manifest(const RunManifest& manifest);

// Shortest decimal that round-trips the exact double.
std::string format_double(double v);

} // namespace meterfl
