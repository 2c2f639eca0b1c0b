#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace meterfl {

// Minute-cadence household load as read from the meter export. A NaN value
// marks a missing reading (the "?" sentinel in the file).
struct RawSeries {
    std::vector<std::int64_t> minutes; // minutes since the Unix epoch, strictly increasing
    std::vector<double> kw;            // active power; NaN == missing, else finite and >= 0

    std::size_t size() const { return minutes.size(); }
    std::size_t missing_count() const;
};

// Gap-free hourly means. Timestamps are implicit: values[i] covers the
// calendar hour start_hour + i.
struct HourlySeries {
    std::int64_t start_hour = 0; // hours since the Unix epoch
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
};

// Min-max normalizer fitted on a training range.
struct Scaler {
    double min = 0.0;
    double max = 1.0;

    // (v - min) / (max - min), clamped to [0, 1].
    double transform(double v) const {
        double t = (v - min) / (max - min);
        if (t < 0.0) return 0.0;
        if (t > 1.0) return 1.0;
        return t;
    }

    double inverse(double t) const { return t * (max - min) + min; }
};

// Windowed supervised pairs: `window` normalized hours in, next hour out.
struct SequenceSet {
    int window = 24;
    std::vector<double> inputs;  // count x window, row-major
    std::vector<double> targets; // count

    std::size_t count() const { return targets.size(); }
    std::span<const double> input(std::size_t i) const {
        return {inputs.data() + i * static_cast<std::size_t>(window),
                static_cast<std::size_t>(window)};
    }
    void push_back(std::span<const double> in, double target);
};

// One smart meter's local data: the training split plus the held-out probe
// split used only for learning-rate scoring.
struct ClientDataset {
    int id = 0;
    SequenceSet train;
    SequenceSet probe;
    int batch_size = 128;
};

struct PartitionSpec {
    enum class Mode { Iid, NonIid };

    Mode mode = Mode::NonIid;
    std::vector<double> fractions;  // per-client data share, values in (0, 1], sum <= 1
    std::vector<int> batch_sizes;   // same length as fractions

    std::size_t client_count() const { return fractions.size(); }
    void validate() const; // throws PartitionError
};

// Reads the semicolon-delimited meter export. Keeps Date, Time and
// Global_active_power; all other columns are ignored. "?" readings are kept
// as missing. row_limit == 0 reads everything.
RawSeries parse_dataset(const std::filesystem::path& path, std::size_t row_limit = 0);

// Fills missing minutes by linear interpolation (nearest value at the
// boundaries), averages into calendar-hour buckets, and interpolates hours
// that received no source minutes at all.
HourlySeries clean_and_resample(const RawSeries& raw);

// Extrema over `values`; callers pass the training range only.
Scaler fit_scaler(std::span<const double> values);

// Slides a window of `window` hours over the series; element i pairs
// normalized hours [i, i+window) with normalized hour i+window.
SequenceSet make_windows(const HourlySeries& series, const Scaler& scaler, int window = 24);

// Chronological 80/20 split, floor on the train side.
std::pair<SequenceSet, SequenceSet> split_train_test(const SequenceSet& all);

// Deals the training sequences across clients. Iid: seeded shuffle, equal
// shares, batch_sizes[0] everywhere. NonIid: contiguous chronological blocks
// sized by fractions with per-client batch sizes. Within each client the
// last 20% of its share becomes the probe set.
std::vector<ClientDataset> partition_clients(const SequenceSet& train,
                                             const PartitionSpec& spec,
                                             std::uint64_t seed);

// Calendar helpers (proleptic Gregorian, no time zone).
std::int64_t days_from_civil(int year, int month, int day);

} // namespace meterfl
