#include "meterfl/manifest.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "meterfl/errors.hpp"

namespace meterfl {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

[[noreturn]] void bad_value(int line, const std::string& key, const char* want,
                            const std::string& got) {
    throw ConfigError("line " + std::to_string(line) + ": expected " + want + " for key '" +
                      key + "', got '" + got + "'");
}

double parse_double_or(int line, const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
        bad_value(line, key, "a number", v);
    return out;
}

long long parse_int_or(int line, const std::string& key, const std::string& v) {
    long long out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
        bad_value(line, key, "an integer", v);
    return out;
}

std::uint64_t parse_uint_or(int line, const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
        bad_value(line, key, "an unsigned integer", v);
    return out;
}

bool parse_bool_or(int line, const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    bad_value(line, key, "true or false", v);
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

std::string join_doubles(std::span<const double> values) {
    std::string out;
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (k) out += ',';
        out += format_double(values[k]);
    }
    return out;
}

std::string join_ints(std::span<const int> values) {
    std::string out;
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (k) out += ',';
        out += std::to_string(values[k]);
    }
    return out;
}

} // namespace

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void RunManifest::validate() const {
    if (dataset_path.empty()) throw ConfigError("missing required key 'dataset_path'");
    if (row_limit && *row_limit < 1000) throw ConfigError("row_limit must be >= 1000");
    if (emit_trace_hours < 1) throw ConfigError("emit_trace_hours must be >= 1");
    try {
        partition.validate();
    } catch (const PartitionError& e) {
        throw ConfigError(std::string("invalid partition: ") + e.what());
    }
    fl.validate();
}

RunManifest parse_manifest(std::istream& in) {
    RunManifest m;
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    bool have_dataset = false;

    while (std::getline(in, line)) {
        ++lineno;
        const std::string text = trim(line);
        if (text.empty() || text[0] == '#') continue;

        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        if (key.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (!seen.insert(key).second)
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");

        if (key == "dataset_path") {
            m.dataset_path = value;
            have_dataset = !value.empty();
        } else if (key == "row_limit") {
            const long long v = parse_int_or(lineno, key, value);
            if (v < 1) bad_value(lineno, key, "a positive integer", value);
            m.row_limit = static_cast<std::size_t>(v);
        } else if (key == "output_dir") {
            m.output_dir = value;
        } else if (key == "emit_trace_hours") {
            m.emit_trace_hours = static_cast<int>(parse_int_or(lineno, key, value));
        } else if (key == "partition.mode") {
            if (value == "iid")
                m.partition.mode = PartitionSpec::Mode::Iid;
            else if (value == "non_iid")
                m.partition.mode = PartitionSpec::Mode::NonIid;
            else
                bad_value(lineno, key, "iid or non_iid", value);
        } else if (key == "partition.fractions") {
            m.partition.fractions.clear();
            for (const std::string& item : split_list(value))
                m.partition.fractions.push_back(parse_double_or(lineno, key, item));
        } else if (key == "partition.batch_sizes") {
            m.partition.batch_sizes.clear();
            for (const std::string& item : split_list(value))
                m.partition.batch_sizes.push_back(
                    static_cast<int>(parse_int_or(lineno, key, item)));
        } else if (key == "model.hidden_size") {
            m.fl.model.hidden_size = static_cast<int>(parse_int_or(lineno, key, value));
        } else if (key == "model.window") {
            m.fl.model.window = static_cast<int>(parse_int_or(lineno, key, value));
        } else if (key == "model.dropout") {
            m.fl.model.dropout_rate = parse_double_or(lineno, key, value);
        } else if (key == "model.layers") {
            m.fl.model.num_layers = static_cast<int>(parse_int_or(lineno, key, value));
        } else if (key == "fl.mode") {
            m.fl.mode = parse_run_mode(value);
        } else if (key == "fl.rounds") {
            m.fl.global_rounds = static_cast<int>(parse_int_or(lineno, key, value));
        } else if (key == "fl.local_epochs") {
            m.fl.local_epochs = static_cast<int>(parse_int_or(lineno, key, value));
        } else if (key == "fl.probe_epochs") {
            m.fl.probe_epochs = static_cast<int>(parse_int_or(lineno, key, value));
        } else if (key == "fl.candidate_lrs") {
            m.fl.candidate_lrs.clear();
            for (const std::string& item : split_list(value))
                m.fl.candidate_lrs.push_back(parse_double_or(lineno, key, item));
        } else if (key == "fl.fixed_lr") {
            m.fl.fixed_lr = parse_double_or(lineno, key, value);
        } else if (key == "fl.seed") {
            m.fl.seed = parse_uint_or(lineno, key, value);
        } else if (key == "fl.weighted_fedavg") {
            m.fl.weighted_fedavg = parse_bool_or(lineno, key, value);
        } else if (key == "fl.clip_norm") {
            m.fl.clip_norm = parse_double_or(lineno, key, value);
        } else {
            throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }

    if (!have_dataset) throw ConfigError("missing required key 'dataset_path'");
    if (m.output_dir.empty()) {
        const char* env = std::getenv("METERFL_OUTPUT_DIR");
        m.output_dir = env != nullptr && *env != '\0' ? env : "meterfl_out";
    }
    m.validate();
    return m;
}

RunManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open manifest: " + path.string());
    return parse_manifest(in);
}

std::string serialize_manifest(const RunManifest& m) {
    std::string out;
    auto put = [&out](const std::string& key, const std::string& value) {
        out += key;
        out += " = ";
        out += value;
        out += '\n';
    };
    put("dataset_path", m.dataset_path.string());
    if (m.row_limit) put("row_limit", std::to_string(*m.row_limit));
    put("output_dir", m.output_dir.string());
    put("emit_trace_hours", std::to_string(m.emit_trace_hours));
    put("partition.mode",
        m.partition.mode == PartitionSpec::Mode::Iid ? "iid" : "non_iid");
    put("partition.fractions", join_doubles(m.partition.fractions));
    put("partition.batch_sizes", join_ints(m.partition.batch_sizes));
    put("model.hidden_size", std::to_string(m.fl.model.hidden_size));
    put("model.window", std::to_string(m.fl.model.window));
    put("model.dropout", format_double(m.fl.model.dropout_rate));
    put("model.layers", std::to_string(m.fl.model.num_layers));
    put("fl.mode", to_string(m.fl.mode));
    put("fl.rounds", std::to_string(m.fl.global_rounds));
    put("fl.local_epochs", std::to_string(m.fl.local_epochs));
    put("fl.probe_epochs", std::to_string(m.fl.probe_epochs));
    put("fl.candidate_lrs", join_doubles(m.fl.candidate_lrs));
    put("fl.fixed_lr", format_double(m.fl.fixed_lr));
    put("fl.seed", std::to_string(m.fl.seed));
    put("fl.weighted_fedavg", m.fl.weighted_fedavg ? "true" : "false");
    put("fl.clip_norm", format_double(m.fl.clip_norm));
    return out;
}

} // namespace meterfl
