#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "meterfl/fl.hpp"
#include "meterfl/manifest.hpp"

namespace meterfl {

// Output of the data pipeline up to the train/test split; partitioning
// happens per run so a sweep can reuse one pipeline pass.
struct PipelineData {
    HourlySeries hourly;
    Scaler scaler;
    SequenceSet train;
    SequenceSet test;
};

// parse -> clean/resample -> fit scaler on the training prefix -> window ->
// chronological split.
PipelineData prepare_sequences(const RunManifest& manifest);

// Writes metrics.csv, trace.csv, manifest.echo and model.ckpt into out_dir.
void emit_outputs(const History& history, const SequenceSet& test, const Scaler& scaler,
                  const RunManifest& manifest, const std::filesystem::path& out_dir);

// One experiment end to end; outputs land in manifest.output_dir.
History run_single(const RunManifest& manifest, std::ostream& log);

// One named run of a sweep.
struct SweepRun {
    std::string name;
    RunManifest manifest;
};

// The client-count matrix (iid standalone / 2 / 3 / 5 clients / centralized)
// plus the learning-rate matrix (meta vs each fixed candidate) derived from
// one base manifest.
std::vector<SweepRun> sweep_plan(const RunManifest& base);

// Executes the plan; per-run outputs in subdirectories of output_dir plus a
// sweep_summary.csv.
void run_sweep(const RunManifest& base, std::ostream& log);

} // namespace meterfl
