#include "meterfl/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "meterfl/errors.hpp"

namespace meterfl {

namespace {

constexpr char kMagic[4] = {'M', 'F', 'L', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int k = 0; k < 4; ++k) b[k] = static_cast<unsigned char>(v >> (8 * k));
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated checkpoint");
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(b[k]) << (8 * k);
    return v;
}

double get_f64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw FormatError("truncated checkpoint");
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    return std::bit_cast<double>(bits);
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());

    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(params.config.input_size));
    put_u32(out, static_cast<std::uint32_t>(params.config.hidden_size));
    put_u32(out, static_cast<std::uint32_t>(params.config.window));
    put_u32(out, static_cast<std::uint32_t>(params.config.num_layers));
    put_f64(out, params.config.dropout_rate);

    for_each_tensor(params, [&](const double* data, std::size_t n) {
        for (std::size_t k = 0; k < n; ++k) put_f64(out, data[k]);
    });
    if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());

    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("not a model checkpoint: " + path.string());
    const std::uint32_t version = get_u32(in);
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));

    ModelConfig cfg;
    cfg.input_size = static_cast<int>(get_u32(in));
    cfg.hidden_size = static_cast<int>(get_u32(in));
    cfg.window = static_cast<int>(get_u32(in));
    cfg.num_layers = static_cast<int>(get_u32(in));
    cfg.dropout_rate = get_f64(in);
    cfg.validate();

    // Build the right shapes, then overwrite every value from the stream.
    ModelParams params = init_params(cfg, 0);
    for_each_tensor(params, [&](double* data, std::size_t n) {
        for (std::size_t k = 0; k < n; ++k) data[k] = get_f64(in);
    });

    char extra;
    if (in.read(&extra, 1)) throw FormatError("trailing bytes in checkpoint");
    return params;
}

} // namespace meterfl
