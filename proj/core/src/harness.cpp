#include "meterfl/harness.hpp"

#include <fstream>
#include <ostream>

#include "meterfl/checkpoint.hpp"
#include "meterfl/errors.hpp"

namespace meterfl {

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

std::string metrics_csv(const History& history) {
    std::string out = "round,client_lrs,train_mae,test_mae,test_rmse\n";
    for (const RoundRecord& rec : history.records) {
        out += std::to_string(rec.round);
        out += ',';
        for (std::size_t k = 0; k < rec.per_client_lr.size(); ++k) {
            if (k) out += ';';
            out += format_double(rec.per_client_lr[k]);
        }
        out += ',';
        out += format_double(rec.train_loss_mae);
        out += ',';
        out += format_double(rec.test_mae);
        out += ',';
        out += format_double(rec.test_rmse);
        out += '\n';
    }
    return out;
}

std::string trace_csv(const History& history, const SequenceSet& test, const Scaler& scaler,
                      int trace_hours) {
    std::string out = "hour,actual_kw,predicted_kw\n";
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(trace_hours),
                                                test.count());
    PredictWorkspace ws;
    for (std::size_t k = 0; k < n; ++k) {
        const double predicted = predict(history.final_params, test.input(k), ws);
        out += std::to_string(k);
        out += ',';
        out += format_double(scaler.inverse(test.targets[k]));
        out += ',';
        out += format_double(scaler.inverse(predicted));
        out += '\n';
    }
    return out;
}

} // namespace

PipelineData prepare_sequences(const RunManifest& manifest) {
    manifest.validate();

    PipelineData data;
    const RawSeries raw =
        parse_dataset(manifest.dataset_path, manifest.row_limit.value_or(0));
    data.hourly = clean_and_resample(raw);

    const int window = manifest.fl.model.window;
    const std::size_t hours = data.hourly.size();
    if (hours < static_cast<std::size_t>(window) + 5)
        throw DataError("dataset too short: " + std::to_string(hours) + " hours");

    // The scaler sees only hours that the training windows touch.
    const std::size_t total = hours - static_cast<std::size_t>(window);
    const std::size_t train_count = total * 8 / 10;
    const std::size_t prefix = train_count + static_cast<std::size_t>(window);
    data.scaler = fit_scaler(std::span<const double>(data.hourly.values).first(prefix));

    const SequenceSet all = make_windows(data.hourly, data.scaler, window);
    auto [train, test] = split_train_test(all);
    data.train = std::move(train);
    data.test = std::move(test);
    return data;
}

void emit_outputs(const History& history, const SequenceSet& test, const Scaler& scaler,
                  const RunManifest& manifest, const std::filesystem::path& out_dir) {
    if (history.records.empty()) throw Error("cannot emit outputs for an empty history");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir.string());

    write_file(out_dir / "metrics.csv", metrics_csv(history));
    write_file(out_dir / "trace.csv",
               trace_csv(history, test, scaler, manifest.emit_trace_hours));
    write_file(out_dir / "manifest.echo", serialize_manifest(manifest));
    save_checkpoint(out_dir / "model.ckpt", history.final_params);
}

History run_single(const RunManifest& manifest, std::ostream& log) {
    const PipelineData data = prepare_sequences(manifest);
    const std::vector<ClientDataset> clients =
        partition_clients(data.train, manifest.partition, manifest.fl.seed);

    log << "dataset: " << data.hourly.size() << " hours, " << data.train.count()
        << " train / " << data.test.count() << " test sequences, " << clients.size()
        << " clients\n";

    const History history = run_experiment(manifest.fl, clients, data.test);
    emit_outputs(history, data.test, data.scaler, manifest, manifest.output_dir);

    const RoundRecord& last = history.records.back();
    double mean_train = 0.0;
    for (const RoundRecord& rec : history.records) mean_train += rec.train_loss_mae;
    mean_train /= static_cast<double>(history.records.size());
    const double kw = data.scaler.max - data.scaler.min;

    log << "mode " << to_string(manifest.fl.mode) << ", " << history.records.size()
        << " rounds; round-averaged train MAE " << format_double(mean_train) << "\n";
    log << "final test MAE " << format_double(last.test_mae) << " ("
        << format_double(last.test_mae * kw) << " kW), RMSE "
        << format_double(last.test_rmse) << " (" << format_double(last.test_rmse * kw)
        << " kW)\n";
    log << "outputs in " << manifest.output_dir.string() << "\n";
    return history;
}

std::vector<SweepRun> sweep_plan(const RunManifest& base) {
    std::vector<SweepRun> plan;
    const std::size_t base_clients = base.partition.client_count();

    auto iid_spec = [&](std::size_t m) {
        PartitionSpec spec;
        spec.mode = PartitionSpec::Mode::Iid;
        spec.fractions.assign(m, 1.0 / static_cast<double>(m));
        spec.batch_sizes.assign(m, base.partition.batch_sizes.at(0));
        return spec;
    };
    auto add = [&](const std::string& name, const PartitionSpec& spec, RunMode mode,
                   double fixed_lr) {
        RunManifest m = base;
        m.partition = spec;
        m.fl.mode = mode;
        m.fl.fixed_lr = fixed_lr;
        m.output_dir = base.output_dir / name;
        plan.push_back({name, std::move(m)});
    };

    // Client-count matrix on iid shares.
    add("iid_standalone", iid_spec(base_clients), RunMode::Standalone, base.fl.fixed_lr);
    for (std::size_t m : {std::size_t{2}, std::size_t{3}, std::size_t{5}})
        add("iid_meta_" + std::to_string(m) + "c", iid_spec(m), RunMode::MetaPfl,
            base.fl.fixed_lr);
    add("iid_centralized", iid_spec(base_clients), RunMode::Centralized, base.fl.fixed_lr);

    // Learning-rate matrix on the base partition.
    add("lr_meta", base.partition, RunMode::MetaPfl, base.fl.fixed_lr);
    for (double lr : base.fl.candidate_lrs)
        add("lr_fixed_" + format_double(lr), base.partition, RunMode::FedAvgFixed, lr);
    return plan;
}

void run_sweep(const RunManifest& base, std::ostream& log) {
    const PipelineData data = prepare_sequences(base);
    log << "dataset: " << data.hourly.size() << " hours, " << data.train.count()
        << " train / " << data.test.count() << " test sequences\n";

    std::string summary = "run,mode,clients,final_test_mae,final_test_rmse\n";
    for (const SweepRun& run : sweep_plan(base)) {
        log << "--- " << run.name << "\n";
        const std::vector<ClientDataset> clients =
            partition_clients(data.train, run.manifest.partition, run.manifest.fl.seed);
        const History history = run_experiment(run.manifest.fl, clients, data.test);
        emit_outputs(history, data.test, data.scaler, run.manifest,
                     run.manifest.output_dir);

        const RoundRecord& last = history.records.back();
        log << "    final test MAE " << format_double(last.test_mae) << ", RMSE "
            << format_double(last.test_rmse) << "\n";
        summary += run.name;
        summary += ',';
        summary += to_string(run.manifest.fl.mode);
        summary += ',';
        summary += std::to_string(clients.size());
        summary += ',';
        summary += format_double(last.test_mae);
        summary += ',';
        summary += format_double(last.test_rmse);
        summary += '\n';
    }

    std::error_code ec;
    std::filesystem::create_directories(base.output_dir, ec);
    if (ec) throw IoError("cannot create output directory " + base.output_dir.string());
    write_file(base.output_dir / "sweep_summary.csv", summary);
    log << "sweep summary in " << (base.output_dir / "sweep_summary.csv").string() << "\n";
}

} // namespace meterfl
