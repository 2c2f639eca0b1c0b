#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "meterfl/errors.hpp"
#include "meterfl/harness.hpp"
#include "meterfl/manifest.hpp"
#include "support/fixtures.hpp"

using namespace meterfl;

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(bool(in), "missing file " << path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

// A desk-scale manifest over a synthetic export; small enough for tests.
RunManifest desk_manifest(const fixtures::TempDir& tmp, const std::string& out_name) {
    static int file_no = 0;
    const auto dataset = tmp.path() / ("meter_" + std::to_string(++file_no) + ".txt");
    fixtures::write_synthetic_export(dataset, 20000, 11);

    std::ostringstream text;
    text << "dataset_path = " << dataset.string() << "\n"
         << "output_dir = " << (tmp.path() / out_name).string() << "\n"
         << "partition.mode = non_iid\n"
         << "partition.fractions = 0.3,0.3,0.2\n"
         << "partition.batch_sizes = 16,16,8\n"
         << "model.hidden_size = 8\n"
         << "model.window = 24\n"
         << "model.dropout = 0.2\n"
         << "fl.mode = meta_pfl\n"
         << "fl.rounds = 2\n"
         << "fl.local_epochs = 1\n"
         << "fl.probe_epochs = 1\n"
         << "fl.candidate_lrs = 0.05,0.01\n"
         << "fl.seed = 3\n";
    const auto manifest_path = tmp.path() / "manifest.txt";
    write_text(manifest_path, text.str());
    return load_manifest(manifest_path);
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(METERFL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

} // namespace

TEST_SUITE("manifest") {
    TEST_CASE("minimal manifest applies the reference defaults") {
        std::istringstream in("dataset_path = data/meter.txt\n");
        const RunManifest m = parse_manifest(in);
        CHECK(m.fl.global_rounds == 100);
        CHECK(m.fl.local_epochs == 50);
        CHECK(m.fl.probe_epochs == 10);
        CHECK(m.fl.candidate_lrs == std::vector<double>{0.05, 0.001, 0.0001});
        CHECK(m.fl.mode == RunMode::MetaPfl);
        CHECK(m.fl.model.hidden_size == 50);
        CHECK(m.fl.model.window == 24);
        CHECK(m.fl.model.dropout_rate == 0.2);
        CHECK(m.partition.mode == PartitionSpec::Mode::NonIid);
        CHECK(m.partition.fractions == std::vector<double>{0.2, 0.2, 0.2, 0.1, 0.25});
        CHECK(m.partition.batch_sizes == std::vector<int>{128, 128, 128, 64, 256});
        CHECK(m.emit_trace_hours == 120);
    }

    TEST_CASE("unknown keys are named") {
        std::istringstream in("dataset_path = x\nfoo = 1\n");
        CHECK_THROWS_WITH_AS(parse_manifest(in), doctest::Contains("foo"), ConfigError);
    }

    TEST_CASE("missing dataset_path is named") {
        std::istringstream in("fl.rounds = 5\n");
        CHECK_THROWS_WITH_AS(parse_manifest(in), doctest::Contains("dataset_path"),
                             ConfigError);
    }

    TEST_CASE("zero rounds fail validation") {
        std::istringstream in("dataset_path = x\nfl.rounds = 0\n");
        CHECK_THROWS_AS(parse_manifest(in), ConfigError);
    }

    TEST_CASE("type mismatches carry the line number") {
        std::istringstream in("dataset_path = x\n\nfl.rounds = soon\n");
        CHECK_THROWS_WITH_AS(parse_manifest(in), doctest::Contains("line 3"), ConfigError);
    }

    TEST_CASE("row_limit below 1000 is rejected") {
        std::istringstream in("dataset_path = x\nrow_limit = 10\n");
        CHECK_THROWS_AS(parse_manifest(in), ConfigError);
    }

    TEST_CASE("serialized form parses back to the same manifest") {
        std::istringstream in(
            "dataset_path = data/meter.txt\n"
            "row_limit = 50000\n"
            "output_dir = out/x\n"
            "fl.mode = fedavg_fixed\n"
            "fl.fixed_lr = 0.05\n"
            "fl.seed = 9\n"
            "partition.mode = iid\n"
            "partition.fractions = 0.5,0.5\n"
            "partition.batch_sizes = 64,64\n");
        const RunManifest a = parse_manifest(in);
        const std::string echo = serialize_manifest(a);
        std::istringstream echo_in(echo);
        const RunManifest b = parse_manifest(echo_in);
        CHECK(serialize_manifest(b) == echo);
        CHECK(b.fl.mode == RunMode::FedAvgFixed);
        CHECK(b.fl.fixed_lr == 0.05);
        CHECK(b.row_limit == a.row_limit);
    }

    TEST_CASE("environment variable supplies the default output dir") {
        setenv("METERFL_OUTPUT_DIR", "/tmp/meterfl_env_out", 1);
        std::istringstream in("dataset_path = x\n");
        const RunManifest m = parse_manifest(in);
        CHECK(m.output_dir == std::filesystem::path("/tmp/meterfl_env_out"));
        unsetenv("METERFL_OUTPUT_DIR");
    }
}

TEST_SUITE("run and outputs") {
    TEST_CASE("run writes the expected files with the expected shapes") {
        fixtures::TempDir tmp("run");
        const RunManifest m = desk_manifest(tmp, "out");
        std::ostringstream log;
        const History h = run_single(m, log);
        REQUIRE(h.records.size() == 2);

        const std::string metrics = read_file(m.output_dir / "metrics.csv");
        std::istringstream lines(metrics);
        std::string line;
        std::getline(lines, line);
        CHECK(line == "round,client_lrs,train_mae,test_mae,test_rmse");
        std::size_t rows = 0;
        while (std::getline(lines, line)) {
            ++rows;
            CHECK(std::count(line.begin(), line.end(), ',') == 4);
        }
        CHECK(rows == 2);

        const std::string trace = read_file(m.output_dir / "trace.csv");
        std::istringstream trace_lines(trace);
        std::getline(trace_lines, line);
        CHECK(line == "hour,actual_kw,predicted_kw");
        rows = 0;
        while (std::getline(trace_lines, line)) ++rows;
        const PipelineData data = prepare_sequences(m);
        CHECK(rows == std::min<std::size_t>(static_cast<std::size_t>(m.emit_trace_hours),
                                            data.test.count()));

        CHECK(std::filesystem::exists(m.output_dir / "manifest.echo"));
        CHECK(std::filesystem::exists(m.output_dir / "model.ckpt"));
    }

    TEST_CASE("trace actuals equal the denormalized targets recomputed from the source") {
        fixtures::TempDir tmp("trace");
        RunManifest m = desk_manifest(tmp, "out");
        m.emit_trace_hours = 40;
        std::ostringstream log;
        run_single(m, log);

        // Rebuild the pipeline independently and compare actual_kw.
        const PipelineData data = prepare_sequences(m);
        const std::string trace = read_file(m.output_dir / "trace.csv");
        std::istringstream lines(trace);
        std::string line;
        std::getline(lines, line); // header
        std::size_t row = 0;
        while (std::getline(lines, line)) {
            const auto c1 = line.find(',');
            const auto c2 = line.find(',', c1 + 1);
            const double actual = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
            const double want = data.scaler.inverse(data.test.targets[row]);
            CHECK(actual == doctest::Approx(want).epsilon(1e-12));
            ++row;
        }
        CHECK(row == 40);
    }

    TEST_CASE("trace rows cap at the test count") {
        fixtures::TempDir tmp("cap");
        RunManifest m = desk_manifest(tmp, "out");
        m.emit_trace_hours = 1000000;
        std::ostringstream log;
        const History h = run_single(m, log);
        (void)h;
        const PipelineData data = prepare_sequences(m);
        const std::string trace = read_file(m.output_dir / "trace.csv");
        const std::size_t rows =
            static_cast<std::size_t>(std::count(trace.begin(), trace.end(), '\n')) - 1;
        CHECK(rows == data.test.count());
    }

    TEST_CASE("identical manifests produce byte-identical outputs") {
        fixtures::TempDir tmp("det");
        RunManifest m = desk_manifest(tmp, "out_a");
        std::ostringstream log;
        run_single(m, log);
        const std::string a_metrics = read_file(m.output_dir / "metrics.csv");
        const std::string a_trace = read_file(m.output_dir / "trace.csv");

        RunManifest again = m;
        again.output_dir = tmp.path() / "out_b";
        run_single(again, log);
        CHECK(read_file(again.output_dir / "metrics.csv") == a_metrics);
        CHECK(read_file(again.output_dir / "trace.csv") == a_trace);
    }

    TEST_CASE("the manifest echo reproduces the run") {
        fixtures::TempDir tmp("echo");
        RunManifest m = desk_manifest(tmp, "out_a");
        std::ostringstream log;
        run_single(m, log);
        const std::string metrics_a = read_file(m.output_dir / "metrics.csv");

        // Re-feed the echoed manifest, redirected to a fresh directory.
        RunManifest echoed = load_manifest(m.output_dir / "manifest.echo");
        echoed.output_dir = tmp.path() / "out_b";
        run_single(echoed, log);
        CHECK(read_file(echoed.output_dir / "metrics.csv") == metrics_a);
    }

    TEST_CASE("numeric fields in the metrics parse back to finite values") {
        fixtures::TempDir tmp("csv");
        const RunManifest m = desk_manifest(tmp, "out");
        std::ostringstream log;
        run_single(m, log);
        const std::string metrics = read_file(m.output_dir / "metrics.csv");
        std::istringstream lines(metrics);
        std::string line;
        std::getline(lines, line);
        while (std::getline(lines, line)) {
            std::stringstream fields(line);
            std::string field;
            int idx = 0;
            while (std::getline(fields, field, ',')) {
                if (idx >= 2) CHECK(std::isfinite(std::stod(field)));
                ++idx;
            }
            CHECK(idx == 5);
        }
    }
}

TEST_SUITE("sweep") {
    TEST_CASE("tiny sweep runs all cells and writes the summary") {
        fixtures::TempDir tmp("sweep");
        const auto dataset = tmp.path() / "meter.txt";
        fixtures::write_synthetic_export(dataset, 15000, 8);

        std::ostringstream text;
        text << "dataset_path = " << dataset.string() << "\n"
             << "output_dir = " << (tmp.path() / "sweep_out").string() << "\n"
             << "partition.mode = non_iid\n"
             << "partition.fractions = 0.2,0.2,0.2,0.1,0.25\n"
             << "partition.batch_sizes = 16,16,16,8,32\n"
             << "model.hidden_size = 5\n"
             << "fl.rounds = 1\n"
             << "fl.local_epochs = 1\n"
             << "fl.probe_epochs = 1\n"
             << "fl.candidate_lrs = 0.05,0.01\n"
             << "fl.fixed_lr = 0.05\n";
        const auto path = tmp.path() / "m.txt";
        write_text(path, text.str());

        std::ostringstream log;
        run_sweep(load_manifest(path), log);

        const std::string summary =
            read_file(tmp.path() / "sweep_out" / "sweep_summary.csv");
        CHECK(std::count(summary.begin(), summary.end(), '\n') == 9); // header + 8 runs
        for (const char* name : {"iid_standalone", "iid_meta_2c", "iid_meta_3c",
                                 "iid_meta_5c", "iid_centralized", "lr_meta"}) {
            CHECK(summary.find(name) != std::string::npos);
            CHECK(std::filesystem::exists(tmp.path() / "sweep_out" / name / "metrics.csv"));
        }
    }

    TEST_CASE("plan covers the client-count and learning-rate matrices") {
        std::istringstream in(
            "dataset_path = x\n"
            "output_dir = out\n"
            "fl.candidate_lrs = 0.05,0.001,0.0001\n");
        const RunManifest base = parse_manifest(in);
        const auto plan = sweep_plan(base);
        REQUIRE(plan.size() == 9);
        CHECK(plan[0].name == "iid_standalone");
        CHECK(plan[0].manifest.fl.mode == RunMode::Standalone);
        CHECK(plan[1].manifest.partition.client_count() == 2);
        CHECK(plan[2].manifest.partition.client_count() == 3);
        CHECK(plan[3].manifest.partition.client_count() == 5);
        CHECK(plan[4].manifest.fl.mode == RunMode::Centralized);
        CHECK(plan[5].name == "lr_meta");
        CHECK(plan[6].manifest.fl.mode == RunMode::FedAvgFixed);
        CHECK(plan[6].manifest.fl.fixed_lr == 0.05);
        for (const auto& run : plan)
            CHECK(run.manifest.output_dir == base.output_dir / run.name);
    }
}

TEST_SUITE("cli binary") {
    TEST_CASE("exit codes follow the error families") {
        fixtures::TempDir tmp("exit");

        // Config error: manifest with an unknown key.
        const auto bad_manifest = tmp.path() / "bad.txt";
        write_text(bad_manifest, "dataset_path = x\nbogus = 1\n");
        CHECK(run_cli("run --manifest " + bad_manifest.string()) == 1);

        // Data error: dataset file that does not exist.
        const auto missing_data = tmp.path() / "missing_data.txt";
        write_text(missing_data, "dataset_path = " + (tmp.path() / "nope.txt").string() +
                                     "\noutput_dir = " + (tmp.path() / "o").string() + "\n");
        CHECK(run_cli("run --manifest " + missing_data.string()) == 2);

        // Unknown option: config error from the argument parser.
        CHECK(run_cli("run --manifest") == 1);

        // check subcommand passes.
        CHECK(run_cli("check") == 0);
    }

    TEST_CASE("run succeeds end to end and is rerun-stable") {
        fixtures::TempDir tmp("e2e");
        const auto dataset = tmp.path() / "meter.txt";
        fixtures::write_synthetic_export(dataset, 15000, 4);
        const auto out_dir = tmp.path() / "out";
        const auto manifest = tmp.path() / "m.txt";
        write_text(manifest, "dataset_path = " + dataset.string() +
                                 "\noutput_dir = " + out_dir.string() +
                                 "\npartition.mode = iid\n"
                                 "partition.fractions = 0.5,0.5\n"
                                 "partition.batch_sizes = 16,16\n"
                                 "model.hidden_size = 6\n"
                                 "fl.mode = fedavg_fixed\n"
                                 "fl.rounds = 1\n"
                                 "fl.local_epochs = 1\n"
                                 "fl.fixed_lr = 0.01\n");
        CHECK(run_cli("run --manifest " + manifest.string()) == 0);
        const std::string first = read_file(out_dir / "metrics.csv");
        CHECK(run_cli("run --manifest " + manifest.string()) == 0);
        CHECK(read_file(out_dir / "metrics.csv") == first);
    }
}
