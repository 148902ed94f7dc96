// vinepr: vineyard LiDAR place-recognition pipeline.
// Subcommands: synth | describe | train | evaluate | report.
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>
#include <iostream>
#include <sstream>

#include "vinepr/vinepr.hpp"

namespace {

using namespace vinepr;

unsigned default_threads() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
}

void log_resolved_config(const CLI::App* sub) {
    std::cerr << "[vinepr] resolved config for '" << sub->get_name() << "':\n";
    std::istringstream config(sub->config_to_str(true, false));
    std::string line;
    while (std::getline(config, line))
        if (!line.empty()) std::cerr << "[vinepr]   " << line << "\n";
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(static_cast<int>(parse_double(item, "integer list")));
    return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(item, "number list"));
    return out;
}

// ---------------------------------------------------------------- synth ----

struct SynthArgs {
    VineyardSpec spec;
    std::string out_dir;
    std::string name = "synthetic_vineyard";
    double step = 1.0;
    int runs = 2;  // run2, run4, ... traverse in reverse (revisit idiom)
    double sampling_distance = 0.0;
    double match_threshold = 5.0;
};

void add_synth(CLI::App& app, SynthArgs& args, int& rc) {
    auto* sub = app.add_subcommand("synth", "Generate a synthetic vineyard dataset");
    sub->set_config("--config", "", "Key-value spec file; flags override");
    sub->add_option("--out", args.out_dir, "Output directory")->required();
    sub->add_option("--name", args.name, "Dataset name for the manifest");
    sub->add_option("--rows", args.spec.num_rows, "Number of vine rows");
    sub->add_option("--row-length", args.spec.row_length, "Row length in meters");
    sub->add_option("--row-spacing", args.spec.row_spacing, "Row spacing in meters");
    sub->add_option("--plant-spacing", args.spec.plant_spacing, "Plant spacing in meters");
    sub->add_option("--canopy-density", args.spec.canopy_density, "Canopy points per plant");
    sub->add_option("--season", args.spec.season, "Season in [0,1]: 0 bare, 1 full canopy");
    sub->add_option("--grass-height", args.spec.grass_height, "Grass height in meters");
    sub->add_option("--grass-density", args.spec.grass_density, "Grass returns per m^2");
    sub->add_option("--noise-sigma", args.spec.noise_sigma, "Position noise sigma in meters");
    sub->add_option("--sensor-range", args.spec.sensor_range, "Sensor range in meters");
    sub->add_option("--seed", args.spec.seed, "Generator seed");
    sub->add_option("--step", args.step, "Traversal step in meters");
    sub->add_option("--runs", args.runs, "Traversal count (even runs reversed)");
    sub->add_option("--sampling-distance", args.sampling_distance,
                    "Manifest sampling distance (0 keeps every scan)");
    sub->add_option("--match-threshold", args.match_threshold, "Manifest match threshold");
    sub->callback([&args, &rc, sub]() {
        log_resolved_config(sub);
        args.spec.validate();
        if (args.runs < 1) throw ConfigError("synth: --runs must be >= 1");
        std::vector<int> rows(static_cast<std::size_t>(args.spec.num_rows));
        for (int r = 0; r < args.spec.num_rows; ++r) rows[static_cast<std::size_t>(r)] = r;
        DatasetManifest manifest;
        manifest.name = args.name;
        manifest.sampling_distance = args.sampling_distance;
        manifest.match_threshold = args.match_threshold;
        double start_time = 0.0;
        for (int run = 0; run < args.runs; ++run) {
            const std::string seq = "run" + std::to_string(run + 1);
            const bool reversed = run % 2 == 1;
            auto records =
                generate_traversal(args.spec, rows, args.step, reversed, seq, start_time);
            start_time = records.back().timestamp + 60.0;  // gap between runs
            manifest.sequences.push_back(write_traversal_files(args.out_dir, records));
            std::cerr << "[vinepr] " << seq << ": " << records.size() << " scans written\n";
        }
        write_file(std::filesystem::path(args.out_dir) / "manifest.cfg",
                   write_manifest(manifest));
        std::cout << "wrote " << args.runs << " runs under " << args.out_dir << "\n";
        rc = 0;
    });
}

// ------------------------------------------------------------- describe ----

struct DescribeArgs {
    std::string manifest_path, method = "scan_context", checkpoint_path, out_path;
    DescribeOptions options;
    unsigned threads = default_threads();
};

void add_describe(CLI::App& app, DescribeArgs& args, int& rc) {
    auto* sub = app.add_subcommand("describe", "Extract global descriptors for a dataset");
    sub->set_config("--config", "", "Key-value config file; flags override");
    sub->add_option("--manifest", args.manifest_path, "Dataset manifest")->required();
    sub->add_option("--method", args.method, "scan_context | fpfh | learned")->required();
    sub->add_option("--checkpoint", args.checkpoint_path, "Head checkpoint (learned)");
    sub->add_option("--out", args.out_path, "Output descriptor store")->required();
    sub->add_option("--threads", args.threads, "Worker thread cap");
    sub->add_option("--sc-rings", args.options.scan_context.num_rings, "Scan Context rings");
    sub->add_option("--sc-sectors", args.options.scan_context.num_sectors, "Scan Context sectors");
    sub->add_option("--sc-voxel", args.options.scan_context.voxel_size, "Scan Context voxel size");
    sub->add_option("--sc-range", args.options.scan_context.max_range, "Scan Context max range");
    sub->add_option("--fpfh-voxel", args.options.fpfh.voxel_size, "FPFH voxel size");
    sub->add_option("--fpfh-normal-radius", args.options.fpfh.normal_radius, "FPFH normal radius");
    sub->add_option("--fpfh-bins", args.options.fpfh.bins_per_feature, "FPFH bins per feature");
    sub->add_option("--quantization-size", args.options.quantization_size,
                    "Learned-pipeline voxel size on normalized coordinates");
    sub->callback([&args, &rc, sub]() {
        log_resolved_config(sub);
        const DescribeMethod method = parse_describe_method(args.method);
        const auto manifest_path = std::filesystem::path(args.manifest_path);
        const DatasetManifest manifest = parse_manifest(read_file(manifest_path));
        const LoadReport loaded = load_dataset(manifest, manifest_path.parent_path());
        std::cerr << "[vinepr] loaded " << loaded.records.size() << " records ("
                  << loaded.skipped_scans << " scans skipped without poses)\n";
        if (loaded.records.empty()) throw DataError("describe: dataset is empty");
        HeadWeights weights;
        if (method == DescribeMethod::learned) {
            if (args.checkpoint_path.empty())
                throw ConfigError("describe: --checkpoint required for learned method");
            weights = load_checkpoint(read_file(args.checkpoint_path));
        }
        const DescriptorStore store = describe_all(
            loaded.records, method, args.options,
            method == DescribeMethod::learned ? &weights : nullptr, args.threads);
        write_file(args.out_path, save_store(store));
        std::cout << "wrote " << store.entries.size() << " descriptors of dim "
                  << store.descriptor_dim << " to " << args.out_path << "\n";
        rc = 0;
    });
}

// ---------------------------------------------------------------- train ----

struct TrainArgs {
    std::string manifest_path, split = "interleaved", out_path, loss_csv_path;
    std::vector<std::string> zone_centers;
    double zone_radius = 13.0;
    std::vector<std::string> test_runs;
    TrainConfig config;
    std::string encoder_dims = "32,64,128";
    std::string dims = "64,128,192";
    std::string weights_csv = "1.0,0.5,0.25";
    int output_dim = 192;
    double gem_p = 3.0;
    bool use_intensity = false;
    unsigned threads = default_threads();

    TrainArgs() {
        config.epochs = 50;
        config.batch_size = 8;
    }
};

SplitSpec resolve_split(const std::vector<ScanRecord>& records, const std::string& split,
                        const std::vector<std::string>& zone_centers, double zone_radius,
                        const std::vector<std::string>& test_runs) {
    if (split == "interleaved") return make_interleaved_split(records);
    if (split == "zone") {
        std::vector<Vec3> centers;
        for (const auto& c : zone_centers) {
            const auto xy = parse_double_list(c);
            if (xy.size() != 2) throw ConfigError("zone center must be 'x,y'");
            centers.push_back({xy[0], xy[1], 0.0});
        }
        return make_zone_split(records, centers, zone_radius);
    }
    if (split == "run") return make_run_split(records, test_runs);
    throw ConfigError("unknown split '" + split + "' (interleaved | zone | run)");
}

void add_train(CLI::App& app, TrainArgs& args, int& rc) {
    auto* sub = app.add_subcommand("train", "Train the Matryoshka descriptor head");
    sub->set_config("--config", "", "Key-value config file; flags override");
    sub->add_option("--manifest", args.manifest_path, "Dataset manifest")->required();
    sub->add_option("--split", args.split, "interleaved | zone | run");
    sub->add_option("--zone-center", args.zone_centers, "Zone center 'x,y' (repeatable)");
    sub->add_option("--zone-radius", args.zone_radius, "Zone radius in meters");
    sub->add_option("--test-runs", args.test_runs, "Test sequence ids (run split)");
    sub->add_option("--epochs", args.config.epochs, "Training epochs");
    sub->add_option("--batch-size", args.config.batch_size, "Batch size");
    sub->add_option("--lr", args.config.learning_rate, "Learning rate");
    sub->add_option("--momentum", args.config.momentum, "SGD momentum");
    sub->add_option("--seed", args.config.seed, "Training and init seed");
    sub->add_option("--positives-radius", args.config.positives_radius,
                    "Positive pair radius in meters");
    sub->add_option("--negatives-min-radius", args.config.negatives_min_radius,
                    "Ambiguity buffer outer radius in meters");
    sub->add_option("--tau", args.config.loss.tau, "Sigmoid temperature");
    sub->add_option("--steps-per-epoch", args.config.steps_per_epoch,
                    "Batches per epoch (0 = train size / batch)");
    sub->add_option("--validate-every", args.config.validate_every,
                    "Validate and checkpoint every N epochs (0 = off)");
    sub->add_option("--quantization-size", args.config.quantization_size,
                    "Voxel size on normalized coordinates");
    sub->add_option("--encoder-dims", args.encoder_dims, "Encoder layer widths, csv");
    sub->add_option("--dims", args.dims, "Nested descriptor dims, csv");
    sub->add_option("--mrl-weights", args.weights_csv, "Per-dim loss weights, csv");
    sub->add_option("--output-dim", args.output_dim, "Descriptor output dim");
    sub->add_option("--gem-p", args.gem_p, "GeM pooling exponent init");
    sub->add_flag("--use-intensity", args.use_intensity, "Feed intensity as a 4th channel");
    sub->add_option("--out", args.out_path, "Checkpoint output path")->required();
    sub->add_option("--loss-csv", args.loss_csv_path, "Loss curve CSV output path");
    sub->add_option("--threads", args.threads, "Worker thread cap");
    sub->callback([&args, &rc, sub]() {
        log_resolved_config(sub);
        const auto manifest_path = std::filesystem::path(args.manifest_path);
        const DatasetManifest manifest = parse_manifest(read_file(manifest_path));
        const LoadReport loaded = load_dataset(manifest, manifest_path.parent_path());
        std::cerr << "[vinepr] loaded " << loaded.records.size() << " records\n";
        const SplitSpec split = resolve_split(loaded.records, args.split, args.zone_centers,
                                              args.zone_radius, args.test_runs);
        std::cerr << "[vinepr] split: " << split.train_indices.size() << " train / "
                  << split.test_indices.size() << " test\n";

        DescriptorHeadParams head;
        head.output_dim = args.output_dim;
        head.nested_dims = parse_int_list(args.dims);
        head.seed = args.config.seed;
        head.use_intensity = args.use_intensity;
        head.gem_p_init = args.gem_p;
        head.encoder_layers.clear();
        int in_dim = head.input_dim();
        for (int width : parse_int_list(args.encoder_dims)) {
            head.encoder_layers.push_back({in_dim, width});
            in_dim = width;
        }
        args.config.loss.mrl_dims = head.nested_dims;
        args.config.loss.mrl_weights = parse_double_list(args.weights_csv);

        const TrainResult result =
            train(loaded.records, split, args.config, head, args.threads);
        write_file(args.out_path, save_checkpoint(result.weights));
        if (!args.loss_csv_path.empty())
            write_file(args.loss_csv_path,
                       loss_curve_csv(result.curve, args.config.loss.mrl_dims));
        if (result.best_weights) {
            const std::string best_path = args.out_path + ".best";
            write_file(best_path, save_checkpoint(*result.best_weights));
            std::cerr << "[vinepr] best validation Recall@1 "
                      << format_double(result.best_recall_at_1) << " at epoch "
                      << result.best_epoch << " -> " << best_path << "\n";
        }
        std::cout << "epoch 1 mean loss " << format_double(result.curve.front().mean_loss)
                  << ", epoch " << result.curve.size() << " mean loss "
                  << format_double(result.curve.back().mean_loss) << "\n";
        std::cout << "wrote checkpoint " << args.out_path << "\n";
        rc = 0;
    });
}

// ------------------------------------------------------------- evaluate ----

struct EvaluateArgs {
    std::string db_path, query_path, report_path, csv_path;
    std::string metric = "auto";
    std::string dims_csv;
    std::string label = "test";
    std::string dataset = "", split = "";
    double threshold = 5.0;
    unsigned threads = default_threads();
};

void add_evaluate(CLI::App& app, EvaluateArgs& args, int& rc) {
    auto* sub = app.add_subcommand("evaluate", "Rank queries against a database store");
    sub->set_config("--config", "", "Key-value config file; flags override");
    sub->add_option("--db", args.db_path, "Database descriptor store")->required();
    sub->add_option("--queries", args.query_path, "Query descriptor store")->required();
    sub->add_option("--threshold", args.threshold, "Correct-match radius in meters");
    sub->add_option("--dims", args.dims_csv, "Prefix dims csv (learned stores)");
    sub->add_option("--metric", args.metric, "auto | euclidean | cosine");
    sub->add_option("--label", args.label, "Result label");
    sub->add_option("--dataset", args.dataset, "Dataset name for the report meta");
    sub->add_option("--split", args.split, "Split name for the report meta");
    sub->add_option("--report", args.report_path, "Report JSON output path");
    sub->add_option("--csv", args.csv_path, "Report CSV output path");
    sub->add_option("--threads", args.threads, "Worker thread cap");
    sub->callback([&args, &rc, sub]() {
        log_resolved_config(sub);
        const DescriptorStore db = load_store(read_file(args.db_path));
        const DescriptorStore queries = load_store(read_file(args.query_path));
        RankingMetric metric;
        if (args.metric == "euclidean") {
            metric = RankingMetric::euclidean_prefix;
        } else if (args.metric == "cosine") {
            metric = RankingMetric::cosine_full;
        } else if (args.metric == "auto") {
            metric = db.method_label == "learned" ? RankingMetric::euclidean_prefix
                                                  : RankingMetric::cosine_full;
        } else {
            throw ConfigError("unknown metric '" + args.metric + "'");
        }
        std::vector<int> dims;
        if (!args.dims_csv.empty()) dims = parse_int_list(args.dims_csv);
        RecallReport::Meta meta{args.dataset, args.split, db.method_label, args.threshold};
        const RecallReport report =
            evaluate(db, queries, dims, args.threshold, metric, meta, args.label, args.threads);
        for (const auto& r : report.results)
            std::cout << r.test_label << " dim " << r.dim << ": Recall@1 "
                      << format_double(r.recall_at_1) << ", Recall@1% "
                      << format_double(r.recall_at_1pct) << " (N1% = " << r.n_1pct << ", "
                      << r.excluded_queries << " excluded)\n";
        if (!args.report_path.empty())
            write_file(args.report_path, report_emit(report, ReportFormat::json));
        if (!args.csv_path.empty())
            write_file(args.csv_path, report_emit(report, ReportFormat::csv));
        rc = 0;
    });
}

// --------------------------------------------------------------- report ----

struct ReportArgs {
    std::string in_path, format = "csv", out_path = "-";
};

void add_report(CLI::App& app, ReportArgs& args, int& rc) {
    auto* sub = app.add_subcommand("report", "Re-render a recall report");
    sub->add_option("--in", args.in_path, "Report JSON path")->required();
    sub->add_option("--format", args.format, "csv | json");
    sub->add_option("--out", args.out_path, "Output path ('-' for stdout)");
    sub->callback([&args, &rc, sub]() {
        const RecallReport report = report_from_json(read_file(args.in_path));
        ReportFormat format;
        if (args.format == "csv")
            format = ReportFormat::csv;
        else if (args.format == "json")
            format = ReportFormat::json;
        else
            throw ConfigError("unknown report format '" + args.format + "'");
        const std::string rendered = report_emit(report, format);
        if (args.out_path == "-")
            std::cout << rendered;
        else
            write_file(args.out_path, rendered);
        rc = 0;
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vineyard LiDAR place-recognition pipeline"};
    app.require_subcommand(1);

    int rc = 0;
    SynthArgs synth_args;
    DescribeArgs describe_args;
    TrainArgs train_args;
    EvaluateArgs evaluate_args;
    ReportArgs report_args;
    add_synth(app, synth_args, rc);
    add_describe(app, describe_args, rc);
    add_train(app, train_args, rc);
    add_evaluate(app, evaluate_args, rc);
    add_report(app, report_args, rc);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return rc;
}
