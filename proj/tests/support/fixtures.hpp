#pragma once

// Shared test fixtures: synthetic data generators, meter-export file
// writers, and a scratch-directory guard.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "meterfl/data.hpp"
#include "meterfl/rng.hpp"

namespace fixtures {

// Unique scratch directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        dir_ = std::filesystem::temp_directory_path() /
               ("meterfl_" + tag + "_" + std::to_string(++counter) + "_" +
                std::to_string(static_cast<std::uint64_t>(::getpid())));
        std::filesystem::create_directories(dir_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(dir_, ec);
    }
    const std::filesystem::path& path() const { return dir_; }

private:
    std::filesystem::path dir_;
};

// Minute-cadence household load model: a small always-on base with fridge
// cycling, occupancy-driven appliance spikes (kettle, oven, washer) and an
// AR(1) noise term. Deliberately spiky and heavy-tailed like a real meter
// trace, so the forecasting task carries genuine irreducible noise.
class LoadModel {
public:
    explicit LoadModel(meterfl::Rng& rng) : rng_(rng) {}

    double at(std::int64_t minute) {
        const double tod = static_cast<double>(minute % 1440) / 1440.0; // time of day
        const int dow = static_cast<int>((minute / 1440) % 7);

        // Occupancy: morning and evening humps, damped on workday daytimes.
        const double morning = std::exp(-std::pow((tod - 0.30) * 9.0, 2.0));
        const double evening = std::exp(-std::pow((tod - 0.82) * 6.0, 2.0));
        const double weekend = dow >= 5 ? 0.35 : 0.0;
        const double occupancy = 0.12 + 0.55 * morning + 0.95 * evening +
                                 weekend * std::exp(-std::pow((tod - 0.55) * 4.0, 2.0));

        // Fridge: ~0.12 kW square wave, 14 minutes on / 26 off.
        const double fridge = (minute % 40) < 14 ? 0.12 : 0.02;

        // Appliance events arrive more often when someone is home.
        if (spike_left_ == 0 && rng_.uniform() < 0.004 + 0.02 * occupancy) {
            spike_left_ = 5 + static_cast<int>(rng_.below(80));
            spike_kw_ = rng_.uniform(0.6, 5.5);
        }
        double spike = 0.0;
        if (spike_left_ > 0) {
            --spike_left_;
            spike = spike_kw_;
        }

        ar_ = 0.92 * ar_ + 0.08 * rng_.uniform(-1.0, 1.0);
        const double kw = 0.24 + 0.5 * occupancy + fridge + spike + 0.35 * ar_;
        return kw < 0.05 ? 0.05 : kw;
    }

private:
    meterfl::Rng& rng_;
    int spike_left_ = 0;
    double spike_kw_ = 0.0;
    double ar_ = 0.0;
};

// Inverse of days_from_civil.
inline void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t year = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
    y = static_cast<int>(year + (m <= 2));
}

// Writes `rows` minute-cadence records in the meter-export layout
// (semicolon-separated, dd/mm/yyyy, "?" for missing readings).
inline void write_synthetic_export(const std::filesystem::path& path, std::size_t rows,
                                   std::uint64_t seed, double missing_rate = 0.002) {
    std::ofstream out(path, std::ios::binary);
    out << "Date;Time;Global_active_power;Global_reactive_power;Voltage;"
           "Global_intensity;Sub_metering_1;Sub_metering_2;Sub_metering_3\n";

    meterfl::Rng rng(seed);
    LoadModel load(rng);
    // Start at 2006-12-16 17:24, stepping one minute per row.
    std::int64_t minute = meterfl::days_from_civil(2006, 12, 16) * 1440 + 17 * 60 + 24;
    char line[160];
    std::string buf;
    for (std::size_t r = 0; r < rows; ++r, ++minute) {
        int cy = 0, cm = 0, cd = 0;
        civil_from_days(minute / 1440, cy, cm, cd);
        const int h = static_cast<int>((minute % 1440) / 60);
        const int mi = static_cast<int>(minute % 60);

        const double kw = load.at(minute); // advance the model even when missing
        if (rng.uniform() < missing_rate) {
            std::snprintf(line, sizeof(line), "%d/%d/%d;%02d:%02d:00;?;?;?;?;?;?;?\n", cd,
                          cm, cy, h, mi);
        } else {
            std::snprintf(line, sizeof(line),
                          "%d/%d/%d;%02d:%02d:00;%.3f;0.100;241.5;1.4;0;1;17\n", cd, cm, cy,
                          h, mi, kw);
        }
        buf += line;
        if (buf.size() > (1u << 20)) {
            out << buf;
            buf.clear();
        }
    }
    out << buf;
}

// Windowed sine sequences directly in normalized units; handy when a test
// does not care about the raw pipeline.
inline meterfl::SequenceSet sine_sequences(int window, std::size_t count,
                                           std::uint64_t seed, double noise_amp = 0.02) {
    meterfl::Rng rng(seed);
    meterfl::SequenceSet set;
    set.window = window;
    const double phase = rng.uniform(0.0, 6.28);
    for (std::size_t s = 0; s < count; ++s) {
        std::vector<double> in(static_cast<std::size_t>(window));
        for (int t = 0; t < window; ++t)
            in[static_cast<std::size_t>(t)] =
                0.5 + 0.35 * std::sin(phase + 0.26 * (static_cast<double>(s) + t)) +
                noise_amp * rng.uniform(-1.0, 1.0);
        const double target =
            0.5 + 0.35 * std::sin(phase + 0.26 * (static_cast<double>(s) + window));
        set.push_back(in, target);
    }
    return set;
}

inline meterfl::ClientDataset sine_client(int id, int window, std::size_t train_count,
                                          std::size_t probe_count, int batch_size,
                                          std::uint64_t seed) {
    meterfl::ClientDataset client;
    client.id = id;
    client.batch_size = batch_size;
    client.train = sine_sequences(window, train_count, seed);
    client.probe = sine_sequences(window, probe_count, seed ^ 0x5a5a);
    return client;
}

} // namespace fixtures
