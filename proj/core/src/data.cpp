#include "meterfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "meterfl/errors.hpp"
#include "meterfl/rng.hpp"

namespace meterfl {

namespace {

std::vector<std::string> split_fields(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

// Parses "dd/mm/yyyy" (no zero padding required) and "hh:mm:ss" into minutes
// since the epoch. Returns false on anything malformed.
bool parse_minute_stamp(const std::string& date, const std::string& time, std::int64_t& out) {
    int d = 0, mo = 0, y = 0, h = 0, mi = 0, s = 0;
    char c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    {
        std::istringstream ss(date);
        ss >> d >> c1 >> mo >> c2 >> y;
        if (!ss || c1 != '/' || c2 != '/' || !ss.eof()) return false;
    }
    {
        std::istringstream ss(time);
        ss >> h >> c3 >> mi >> c4 >> s;
        if (!ss || c3 != ':' || c4 != ':' || !ss.eof()) return false;
    }
    if (d < 1 || d > 31 || mo < 1 || mo > 12 || y < 1900 || y > 9999) return false;
    if (h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 59) return false;
    out = days_from_civil(y, mo, d) * 1440 + h * 60 + mi;
    return true;
}

// Linear interpolation over NaN gaps. `pos[i]` gives the coordinate used for
// the interpolation weight. Boundary gaps copy the nearest present value.
void fill_gaps_linear(std::vector<double>& v, std::span<const std::int64_t> pos) {
    const std::size_t n = v.size();
    std::size_t first = n, last = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isnan(v[i])) {
            if (first == n) first = i;
            last = i;
        }
    }
    if (first == n) throw DataError("cannot interpolate: all values missing");

    for (std::size_t i = 0; i < first; ++i) v[i] = v[first];
    for (std::size_t i = last + 1; i < n; ++i) v[i] = v[last];

    std::size_t prev = first;
    for (std::size_t i = first + 1; i <= last; ++i) {
        if (std::isnan(v[i])) continue;
        if (i > prev + 1) {
            const double span = static_cast<double>(pos[i] - pos[prev]);
            for (std::size_t j = prev + 1; j < i; ++j) {
                const double w = static_cast<double>(pos[j] - pos[prev]) / span;
                v[j] = v[prev] + w * (v[i] - v[prev]);
            }
        }
        prev = i;
    }
}

} // namespace

std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::size_t RawSeries::missing_count() const {
    return static_cast<std::size_t>(
        std::count_if(kw.begin(), kw.end(), [](double v) { return std::isnan(v); }));
}

void SequenceSet::push_back(std::span<const double> in, double target) {
    inputs.insert(inputs.end(), in.begin(), in.end());
    targets.push_back(target);
}

RawSeries parse_dataset(const std::filesystem::path& path, std::size_t row_limit) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file: " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw FormatError("dataset file has no header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = split_fields(line, ';');
    auto column = [&](const char* name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw FormatError(std::string("dataset header is missing column '") + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t date_col = column("Date");
    const std::size_t time_col = column("Time");
    const std::size_t power_col = column("Global_active_power");
    const std::size_t min_fields = std::max({date_col, time_col, power_col}) + 1;

    RawSeries out;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;

        const auto fields = split_fields(line, ';');
        if (fields.size() < min_fields)
            throw FormatError("row " + std::to_string(row) + ": expected at least " +
                              std::to_string(min_fields) + " fields, got " +
                              std::to_string(fields.size()));

        std::int64_t minute = 0;
        if (!parse_minute_stamp(fields[date_col], fields[time_col], minute))
            throw FormatError("row " + std::to_string(row) + ": unparseable datetime '" +
                              fields[date_col] + " " + fields[time_col] + "'");
        if (!out.minutes.empty() && minute <= out.minutes.back())
            throw FormatError("row " + std::to_string(row) + ": timestamps not strictly increasing");

        double value = std::numeric_limits<double>::quiet_NaN();
        const std::string& raw = fields[power_col];
        if (raw != "?") {
            char* end = nullptr;
            value = std::strtod(raw.c_str(), &end);
            if (end == raw.c_str() || *end != '\0' || !std::isfinite(value))
                throw FormatError("row " + std::to_string(row) +
                                  ": unparseable Global_active_power '" + raw + "'");
            if (value < 0.0)
                throw FormatError("row " + std::to_string(row) +
                                  ": negative Global_active_power");
        }

        out.minutes.push_back(minute);
        out.kw.push_back(value);
        if (row_limit != 0 && row >= row_limit) break;
    }
    return out;
}

HourlySeries clean_and_resample(const RawSeries& raw) {
    if (raw.size() == 0) throw DataError("empty raw series");
    if (raw.missing_count() == raw.size()) throw DataError("all power readings are missing");

    std::vector<double> filled = raw.kw;
    fill_gaps_linear(filled, raw.minutes);

    const std::int64_t first_hour = raw.minutes.front() / 60;
    const std::int64_t last_hour = raw.minutes.back() / 60;
    const std::size_t n_hours = static_cast<std::size_t>(last_hour - first_hour + 1);

    std::vector<double> sums(n_hours, 0.0);
    std::vector<std::size_t> counts(n_hours, 0);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const std::size_t bucket = static_cast<std::size_t>(raw.minutes[i] / 60 - first_hour);
        sums[bucket] += filled[i];
        counts[bucket] += 1;
    }

    HourlySeries out;
    out.start_hour = first_hour;
    out.values.resize(n_hours);
    std::vector<std::int64_t> hour_pos(n_hours);
    for (std::size_t i = 0; i < n_hours; ++i) {
        hour_pos[i] = static_cast<std::int64_t>(i);
        out.values[i] = counts[i] > 0 ? sums[i] / static_cast<double>(counts[i])
                                      : std::numeric_limits<double>::quiet_NaN();
    }
    fill_gaps_linear(out.values, hour_pos);
    return out;
}

Scaler fit_scaler(std::span<const double> values) {
    if (values.size() < 2) throw DataError("scaler needs at least 2 values");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (*lo == *hi) throw DataError("degenerate scaler: series is constant");
    return Scaler{*lo, *hi};
}

SequenceSet make_windows(const HourlySeries& series, const Scaler& scaler, int window) {
    if (window < 1) throw ConfigError("window must be >= 1");
    const std::size_t len = series.size();
    if (len < static_cast<std::size_t>(window) + 1)
        throw DataError("insufficient data: need at least " + std::to_string(window + 1) +
                        " hours, have " + std::to_string(len));

    SequenceSet out;
    out.window = window;
    const std::size_t count = len - static_cast<std::size_t>(window);
    out.inputs.reserve(count * static_cast<std::size_t>(window));
    out.targets.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        for (int t = 0; t < window; ++t)
            out.inputs.push_back(scaler.transform(series.values[i + static_cast<std::size_t>(t)]));
        out.targets.push_back(scaler.transform(series.values[i + static_cast<std::size_t>(window)]));
    }
    return out;
}

std::pair<SequenceSet, SequenceSet> split_train_test(const SequenceSet& all) {
    if (all.count() < 5) throw DataError("need at least 5 sequences to split");
    const std::size_t n_train = all.count() * 8 / 10;

    SequenceSet train, test;
    train.window = test.window = all.window;
    for (std::size_t i = 0; i < all.count(); ++i) {
        (i < n_train ? train : test).push_back(all.input(i), all.targets[i]);
    }
    return {std::move(train), std::move(test)};
}

void PartitionSpec::validate() const {
    if (fractions.empty()) throw PartitionError("partition needs at least one client");
    if (fractions.size() != batch_sizes.size())
        throw PartitionError("fractions and batch_sizes must have equal length");
    double sum = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0) || f > 1.0) throw PartitionError("fractions must lie in (0, 1]");
        sum += f;
    }
    if (sum > 1.0 + 1e-12) throw PartitionError("fractions sum to more than 1.0");
    for (int b : batch_sizes) {
        if (b < 1) throw PartitionError("batch sizes must be positive");
    }
}

std::vector<ClientDataset> partition_clients(const SequenceSet& train,
                                             const PartitionSpec& spec,
                                             std::uint64_t seed) {
    spec.validate();
    const std::size_t n = train.count();
    const std::size_t m = spec.client_count();

    // Per-client ordered index lists into `train`.
    std::vector<std::vector<std::size_t>> shares(m);
    if (spec.mode == PartitionSpec::Mode::Iid) {
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        Rng rng(derive_seed(seed, Stream::Partition));
        rng.shuffle(perm);
        const std::size_t share = n / m;
        if (share < 10)
            throw PartitionError("each client would receive fewer than 10 sequences");
        for (std::size_t c = 0; c < m; ++c)
            shares[c].assign(perm.begin() + static_cast<std::ptrdiff_t>(c * share),
                             perm.begin() + static_cast<std::ptrdiff_t>((c + 1) * share));
    } else {
        std::size_t offset = 0;
        for (std::size_t c = 0; c < m; ++c) {
            const std::size_t share =
                static_cast<std::size_t>(spec.fractions[c] * static_cast<double>(n));
            if (share < 10)
                throw PartitionError("client " + std::to_string(c) +
                                     " would receive fewer than 10 sequences");
            if (offset + share > n)
                throw PartitionError("fractions exceed the available sequences");
            shares[c].resize(share);
            std::iota(shares[c].begin(), shares[c].end(), offset);
            offset += share;
        }
    }

    std::vector<ClientDataset> out(m);
    for (std::size_t c = 0; c < m; ++c) {
        const auto& idx = shares[c];
        const std::size_t probe_count = idx.size() / 5; // last 20% of the share
        const std::size_t train_count = idx.size() - probe_count;

        ClientDataset& client = out[c];
        client.id = static_cast<int>(c);
        client.batch_size =
            spec.mode == PartitionSpec::Mode::Iid ? spec.batch_sizes[0] : spec.batch_sizes[c];
        client.train.window = client.probe.window = train.window;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            SequenceSet& dst = i < train_count ? client.train : client.probe;
            dst.push_back(train.input(idx[i]), train.targets[idx[i]]);
        }
    }
    return out;
}

} // namespace meterfl
