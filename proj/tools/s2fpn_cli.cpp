// s2fpn: mesh export, operator export, training, evaluation, ablation and
// benchmarks. Exit codes: 0 ok, 1 usage, 2 runtime/IO, 3 divergence.

#include "s2fpn/errors.hpp"
#include "s2fpn/icomesh.hpp"
#include "s2fpn/io.hpp"
#include "s2fpn/model.hpp"
#include "s2fpn/nn.hpp"
#include "s2fpn/operators.hpp"
#include "s2fpn/resample.hpp"
#include "s2fpn/sphops.hpp"
#include "s2fpn/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace s2fpn;

namespace {

/// Bad flags or flag combinations, reported with exit code 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void check_level(int level)
{
    if (level < 0 || level > kMaxMeshLevel) {
        throw UsageError("level must be in [0, " + std::to_string(kMaxMeshLevel) + "]");
    }
}

// ------------------------------------------------------------------ mesh

struct MeshArgs {
    int level = 0;
    std::string out;
    std::string format = "obj";
};

void run_mesh(const MeshArgs& a)
{
    check_level(a.level);
    const IcoMesh mesh = build_mesh(a.level);
    if (!a.out.empty()) {
        const fs::path out(a.out);
        if (out.has_parent_path()) fs::create_directories(out.parent_path());
        if (a.format == "obj") {
            export_mesh(mesh, out);
        } else {
            write_tensor_container(mesh_container(mesh), out);
        }
    }
    std::printf("vertices: %zu\nfaces: %zu\nedges: %zu\n", mesh.num_vertices(), mesh.num_faces(), mesh.num_edges());
}

// ----------------------------------------------------------- export-ops

struct ExportArgs {
    int level = 0;
    std::string which;
    std::string out;
};

SparseOperator build_operator(int level, const std::string& which)
{
    check_level(level);
    const bool transition = which.rfind("up-", 0) == 0 || which.rfind("down-", 0) == 0;
    if (transition && level == 0) throw UsageError(which + " needs a fine level of at least 1");
    const IcoMesh mesh = build_mesh(level);
    if (which == "lap") return assemble_laplacian(mesh, compute_geometry(mesh));
    if (which == "gx" || which == "gy") {
        GradientOperators g = assemble_gradients(mesh, compute_geometry(mesh), tangent_frames(mesh));
        return which == "gx" ? std::move(g.gx) : std::move(g.gy);
    }
    if (which == "up-bilinear") return assemble_upsample(mesh, UpMode::bilinear);
    if (which == "up-zeropad") return assemble_upsample(mesh, UpMode::zeropad);
    if (which == "down-drop") return assemble_downsample(mesh, DownMode::drop);
    if (which == "down-average") return assemble_downsample(mesh, DownMode::average);
    throw UsageError("unknown operator '" + which + "'");
}

void run_export(const ExportArgs& a)
{
    const SparseOperator op = build_operator(a.level, a.which);
    if (!a.out.empty()) {
        const fs::path out(a.out);
        if (out.has_parent_path()) fs::create_directories(out.parent_path());
        write_sparse_container(op, out);
    }
    std::printf("rows: %zu\ncols: %zu\nnnz: %zu\n", op.rows(), op.cols(), op.nnz());
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    int level = 5;
    int classes = 3;
    int channels = 4;
    int n_train = 200;
    int n_val = 50;
    std::uint64_t seed = 0;
    std::string out;
};

void run_synth(const SynthArgs& a)
{
    check_level(a.level);
    if (a.n_train < 0 || a.n_val < 0) throw UsageError("sample counts must be non-negative");
    const IcoMesh mesh = build_mesh(a.level);
    SynthOptions opt;
    opt.in_channels = a.channels;
    const SynthSplits s = synth_caps_splits(mesh, a.n_train, a.n_val, a.classes, a.seed, opt);
    const fs::path dir(a.out);
    DatasetManifest m;
    m.level = a.level;
    m.n_classes = a.classes;
    for (int c = 0; c < a.channels; ++c) m.channel_names.push_back("c" + std::to_string(c));
    if (a.classes == static_cast<int>(stanford_class_names().size())) m.class_names = stanford_class_names();
    for (const auto& [name, data] : {std::pair{"train", &s.train}, std::pair{"val", &s.val}}) {
        auto paths = write_samples(*data, dir / "samples", name);
        for (auto& p : paths) p = fs::path("samples") / p;
        m.splits[name] = std::move(paths);
    }
    write_manifest(m, dir / "manifest.json");
    std::printf("train: %d\nval: %d\nmanifest: %s\n", a.n_train, a.n_val, (dir / "manifest.json").string().c_str());
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string config;
    std::string manifest;
    bool synthetic = false;
    std::string out;
    std::optional<int> epochs;
    std::optional<int> min_level;
    std::optional<int> batch;
    std::optional<double> lr;
    std::optional<std::uint64_t> seed;
    std::optional<double> target_accuracy;
    int n_train = 200;
    int n_val = 50;
    std::string train_split = "train";
    std::string val_split = "val";
    bool print_config = false;
    bool f32 = false;
};

std::vector<std::string> class_names_for(const DatasetManifest* m, int n_classes)
{
    if (m && !m->class_names.empty()) return m->class_names;
    if (n_classes == static_cast<int>(stanford_class_names().size())) return stanford_class_names();
    return {};
}

int run_train(const TrainArgs& a)
{
    if (a.synthetic == !a.manifest.empty()) throw UsageError("train needs exactly one of --synthetic or --manifest");
    ExperimentConfig exp = a.config.empty() ? desk_experiment() : experiment_from_json(read_json(a.config));
    if (a.epochs) exp.train.epochs = *a.epochs;
    if (a.min_level) exp.model.min_level = *a.min_level;
    if (a.batch) exp.train.batch_size = *a.batch;
    if (a.lr) exp.train.lr0 = *a.lr;
    if (a.seed) {
        exp.train.seed = *a.seed;
        exp.model.init_seed = *a.seed;
    }

    std::optional<DatasetManifest> manifest;
    if (!a.manifest.empty()) {
        manifest = read_manifest(a.manifest);
        exp.model.max_level = manifest->level;
        exp.model.n_classes = manifest->n_classes;
        if (!manifest->channel_names.empty()) exp.model.in_channels = static_cast<int>(manifest->channel_names.size());
        if (exp.train.class_weights.empty()) exp.train.class_weights = manifest->class_weights;
    }
    exp.model.validate();
    exp.train.validate();
    if (a.n_train < 1 || a.n_val < 1) throw UsageError("sample counts must be positive");

    if (a.print_config) {
        std::cout << to_json(exp).dump(2) << "\n";
        return 0;
    }

    SynthSplits data;
    if (manifest) {
        data.train = load_split(*manifest, a.train_split);
        data.val = load_split(*manifest, a.val_split);
        if (data.train.samples.empty() || data.val.samples.empty()) throw UsageError("empty split");
        if (data.train.in_channels != exp.model.in_channels) {
            throw UsageError("samples carry " + std::to_string(data.train.in_channels) + " channels, model expects " +
                             std::to_string(exp.model.in_channels));
        }
    } else {
        SynthOptions opt;
        opt.in_channels = exp.model.in_channels;
        data = synth_caps_splits(build_mesh(exp.model.max_level), a.n_train, a.n_val, exp.model.n_classes,
                                 exp.train.seed, opt);
    }

    const fs::path out(a.out);
    fs::create_directories(out);
    write_text(out / "config.json", to_json(exp).dump(2) + "\n");

    auto bank = std::make_shared<const OperatorBank>(exp.model.max_level);
    Model model(exp.model, bank);
    std::ofstream log(out / "log.jsonl", std::ios::binary);
    if (!log) throw IoError("cannot open " + (out / "log.jsonl").string());

    FitOptions fo;
    fo.target_accuracy = a.target_accuracy;
    const auto t0 = std::chrono::steady_clock::now();
    fo.on_epoch = [&](const EpochRecord& r) {
        log << to_json(r).dump() << "\n";
        log.flush();
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::fprintf(stderr, "epoch %d  lr %.6g  loss %.5f  val acc %.4f  mIoU %.4f  (%.1fs)\n", r.epoch, r.lr,
                     r.train_loss, r.val.pixel_accuracy, r.val.miou, s);
    };
    const TrainLog tl = fit(model, data.train, data.val, exp.train, fo);

    save_checkpoint(model, out / "model.s2tn", a.f32 ? DType::f32 : DType::f64);
    const MetricReport final_val = evaluate_dataset(model, data.val, exp.train.batch_size, exp.train.ignore_index);
    json metrics = to_json(final_val, class_names_for(manifest ? &*manifest : nullptr, exp.model.n_classes));
    metrics["best_epoch"] = tl.best_epoch;
    metrics["epochs_run"] = tl.epochs.size();
    metrics["parameters"] = model.parameter_count();
    write_text(out / "metrics.json", metrics.dump(2) + "\n");
    std::printf("best epoch: %d\nval pixel accuracy: %.4f\nval mIoU: %.4f\n", tl.best_epoch, final_val.pixel_accuracy,
                final_val.miou);
    return 0;
}

// ----------------------------------------------------------------- eval

struct EvalArgs {
    std::string checkpoint;
    std::string manifest;
    std::string split = "val";
    std::string out;
    int batch = 8;
};

void run_eval(const EvalArgs& a)
{
    if (a.batch < 1) throw UsageError("batch must be positive");
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const DatasetManifest m = read_manifest(a.manifest);
    if (m.n_classes != ck.spec.n_classes) {
        throw UsageError("manifest has " + std::to_string(m.n_classes) + " classes, checkpoint predicts " +
                         std::to_string(ck.spec.n_classes));
    }
    if (m.level != ck.spec.max_level) throw UsageError("manifest level does not match the checkpoint");
    const Dataset data = load_split(m, a.split);
    if (data.samples.empty()) throw UsageError("split '" + a.split + "' is empty");
    if (data.in_channels != ck.spec.in_channels) throw UsageError("channel count does not match the checkpoint");

    auto bank = std::make_shared<const OperatorBank>(ck.spec.max_level);
    Model model(ck.spec, bank);
    restore_state(model, ck.state);
    const MetricReport r = evaluate_dataset(model, data, a.batch);
    json j = to_json(r, class_names_for(&m, m.n_classes));
    j["split"] = a.split;
    j["samples"] = data.samples.size();
    const std::string text = j.dump(2) + "\n";
    if (a.out.empty()) {
        std::cout << text;
    } else {
        write_text(a.out, text);
    }
}

// --------------------------------------------------------------- ablate

struct AblateArgs {
    std::string out;
    int epochs = 5;
    int n_train = 200;
    int n_val = 50;
    std::uint64_t seed = 0;
    bool rings_only = false;
};

struct AblationRow {
    bool swapped;
    UpMode up;
    DownMode down;
};

// Ablation rows in reporting order.
constexpr AblationRow kAblationRows[] = {
    {false, UpMode::zeropad, DownMode::drop},     {true, UpMode::zeropad, DownMode::drop},
    {true, UpMode::bilinear, DownMode::drop},     {true, UpMode::zeropad, DownMode::average},
    {false, UpMode::bilinear, DownMode::average}, {true, UpMode::bilinear, DownMode::average},
};

/// Largest impulse-support ring of a linearized level-(fine -> fine-1) down
/// block over a few probe vertices.
int measure_ring(const OperatorBank& bank, int fine, const ResampleSpec& spec, StencilUnits units)
{
    Rng rng(0);
    DownBlock block(2, 2, 2, spec, bank, fine, "ring", rng, units);
    const MeshSignal probe(fine, 1, 2);
    int ring = -1;
    for (std::size_t v : {std::size_t{0}, std::size_t{5}, std::size_t{40}, std::size_t{150}}) {
        ring = std::max(ring, support_ring(block, probe, bank.mesh(fine), v));
    }
    return ring;
}

int run_ablate(const AblateArgs& a)
{
    if (a.epochs < 1 || a.n_train < 1 || a.n_val < 1) throw UsageError("epochs and sample counts must be positive");
    ExperimentConfig exp = desk_experiment();
    exp.train.epochs = a.epochs;
    exp.train.seed = a.seed;
    exp.model.init_seed = a.seed;
    const int fine = exp.model.max_level;
    auto bank = std::make_shared<const OperatorBank>(fine);

    SynthSplits data;
    if (!a.rings_only) {
        data = synth_caps_splits(bank->mesh(fine), a.n_train, a.n_val, exp.model.n_classes, exp.train.seed);
    }

    const fs::path out(a.out);
    fs::create_directories(out);
    json rows = json::array();
    std::printf("%-8s %-8s %-9s %-8s %-9s %-7s\n", "ring", "swapped", "up", "down", "acc", "mIoU");
    for (const AblationRow& r : kAblationRows) {
        ExperimentConfig e = exp;
        e.model.resample = ResampleSpec{r.down, r.up, r.swapped};
        const int ring = measure_ring(*bank, fine, e.model.resample, e.model.stencil_units);
        json row = {{"receptive_field_ring", ring},
                    {"swapped", r.swapped},
                    {"up_mode", std::string(to_string(r.up))},
                    {"down_mode", std::string(to_string(r.down))}};
        double acc = 0.0, miou = 0.0;
        if (!a.rings_only) {
            Model model(e.model, bank);
            fit(model, data.train, data.val, e.train);
            const MetricReport m = evaluate_dataset(model, data.val, e.train.batch_size);
            acc = m.pixel_accuracy;
            miou = m.miou;
            row["pixel_accuracy"] = acc;
            row["miou"] = miou;
        }
        rows.push_back(row);
        char acc_s[32] = "-", miou_s[32] = "-";
        if (!a.rings_only) {
            std::snprintf(acc_s, sizeof acc_s, "%.4f", acc);
            std::snprintf(miou_s, sizeof miou_s, "%.4f", miou);
        }
        std::printf("%d-ring   %-8s %-9s %-8s %-9s %-7s\n", ring, r.swapped ? "yes" : "no",
                    std::string(to_string(r.up)).c_str(), std::string(to_string(r.down)).c_str(), acc_s, miou_s);
        std::fflush(stdout);
    }
    json report = {{"config", to_json(exp)},
                   {"train_samples", a.n_train},
                   {"val_samples", a.n_val},
                   {"trained", !a.rings_only},
                   {"rows", rows}};
    write_text(out / "ablation.json", report.dump(2) + "\n");
    return 0;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
    int level = 5;
    std::string ops = "lap,grad,up,down";
    int repetitions = 20;
    std::string out;
};

json timing_stats(std::vector<double> ms)
{
    std::sort(ms.begin(), ms.end());
    auto pct = [&](double q) {
        const double pos = q * static_cast<double>(ms.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, ms.size() - 1);
        return ms[lo] + (pos - static_cast<double>(lo)) * (ms[hi] - ms[lo]);
    };
    return {{"median_ms", pct(0.5)}, {"p10_ms", pct(0.1)}, {"p90_ms", pct(0.9)}, {"min_ms", ms.front()}};
}

template <class F>
std::vector<double> time_reps(int reps, F&& f)
{
    std::vector<double> ms;
    for (int i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    return ms;
}

MeshSignal bench_signal(int level, std::size_t channels)
{
    MeshSignal s(level, 1, channels);
    const IcoMesh mesh = build_mesh(level);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t v = 0; v < s.num_vertices(); ++v) {
            const Vec3& p = mesh.vertex(v);
            s.at(0, c, v) = p.x() * (1.0 + static_cast<double>(c)) + p.y() * p.z();
        }
    }
    return s;
}

void run_bench(const BenchArgs& a)
{
    check_level(a.level);
    if (a.repetitions < 1) throw UsageError("repetitions must be positive");
    std::vector<std::string> ops;
    std::stringstream ss(a.ops);
    for (std::string op; std::getline(ss, op, ',');) {
        if (op != "lap" && op != "grad" && op != "up" && op != "down") throw UsageError("unknown op set '" + op + "'");
        if ((op == "up" || op == "down") && a.level == 0) throw UsageError(op + " needs level >= 1");
        ops.push_back(op);
    }
    const IcoMesh mesh = build_mesh(a.level);
    json results = json::object();
    for (const std::string& name : ops) {
        std::vector<SparseOperator> built;
        auto assemble = [&] {
            built.clear();
            if (name == "lap") {
                built.push_back(assemble_laplacian(mesh, compute_geometry(mesh)));
            } else if (name == "grad") {
                GradientOperators g = assemble_gradients(mesh, compute_geometry(mesh), tangent_frames(mesh));
                built.push_back(std::move(g.gx));
                built.push_back(std::move(g.gy));
            } else if (name == "up") {
                built.push_back(assemble_upsample(mesh, UpMode::bilinear));
            } else {
                built.push_back(assemble_downsample(mesh, DownMode::average));
            }
        };
        json entry = {{"assembly", timing_stats(time_reps(a.repetitions, assemble))}};
        const int in_level = name == "up" ? a.level - 1 : a.level;
        const int out_level = name == "down" ? a.level - 1 : a.level;
        for (std::size_t channels : {std::size_t{1}, std::size_t{32}}) {
            const MeshSignal x = bench_signal(in_level, channels);
            std::vector<MeshSignal> ys(built.size());
            const auto ms = time_reps(a.repetitions, [&] {
                for (std::size_t k = 0; k < built.size(); ++k) ys[k] = apply(built[k], x, out_level);
            });
            double checksum = 0.0;
            for (const MeshSignal& y : ys) {
                for (double v : y.values()) checksum += v;
            }
            json ch = timing_stats(ms);
            ch["checksum"] = checksum;
            entry["apply_" + std::to_string(channels) + "ch"] = ch;
        }
        std::size_t nnz = 0;
        for (const SparseOperator& op : built) nnz += op.nnz();
        entry["nnz"] = nnz;
        results[name] = entry;
    }
    json report = {{"level", a.level},
                   {"vertices", mesh.num_vertices()},
                   {"repetitions", a.repetitions},
                   {"ops", results}};
    const std::string text = report.dump(2) + "\n";
    if (a.out.empty()) {
        std::cout << text;
    } else {
        write_text(a.out, text);
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Spherical feature pyramid networks on icosahedral meshes"};
    app.require_subcommand(1);

    MeshArgs mesh;
    auto* c_mesh = app.add_subcommand("mesh", "Build a mesh and write it as OBJ or a tensor container");
    c_mesh->add_option("--level", mesh.level, "Subdivision level")->required();
    c_mesh->add_option("--out", mesh.out, "Output path");
    c_mesh->add_option("--format", mesh.format, "obj or container")->check(CLI::IsMember({"obj", "container"}));

    ExportArgs ex;
    auto* c_export = app.add_subcommand("export-ops", "Write one operator as a sparse container");
    c_export->add_option("--level", ex.level, "Level (the fine level for transitions)")->required();
    c_export->add_option("--which", ex.which, "gx|gy|lap|up-bilinear|up-zeropad|down-drop|down-average")
        ->required()
        ->check(CLI::IsMember({"gx", "gy", "lap", "up-bilinear", "up-zeropad", "down-drop", "down-average"}));
    c_export->add_option("--out", ex.out, "Output path");

    SynthArgs sy;
    auto* c_synth = app.add_subcommand("synth", "Write the synthetic cap task as a dataset manifest");
    c_synth->add_option("--level", sy.level, "Mesh level");
    c_synth->add_option("--classes", sy.classes, "Number of classes");
    c_synth->add_option("--channels", sy.channels, "Input channels");
    c_synth->add_option("--train-samples", sy.n_train, "Training samples");
    c_synth->add_option("--val-samples", sy.n_val, "Validation samples");
    c_synth->add_option("--seed", sy.seed, "Seed");
    c_synth->add_option("--out", sy.out, "Output directory")->required();

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Train a model");
    c_train->add_option("--config", tr.config, "Experiment JSON (model, train, resample)");
    c_train->add_option("--manifest", tr.manifest, "Dataset manifest");
    c_train->add_flag("--synthetic", tr.synthetic, "Use the synthetic cap task");
    c_train->add_option("--out", tr.out, "Output directory");
    c_train->add_option("--epochs", tr.epochs);
    c_train->add_option("--min-level", tr.min_level);
    c_train->add_option("--batch", tr.batch);
    c_train->add_option("--lr", tr.lr);
    c_train->add_option("--seed", tr.seed, "Seeds both initialisation and data order");
    c_train->add_option("--target-accuracy", tr.target_accuracy, "Stop once validation accuracy reaches this");
    c_train->add_option("--train-samples", tr.n_train, "Synthetic training samples");
    c_train->add_option("--val-samples", tr.n_val, "Synthetic validation samples");
    c_train->add_option("--train-split", tr.train_split);
    c_train->add_option("--val-split", tr.val_split);
    c_train->add_flag("--print-config", tr.print_config, "Print the effective configuration and exit");
    c_train->add_flag("--f32", tr.f32, "Store the checkpoint in 32-bit floats");

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
    c_eval->add_option("--checkpoint", ev.checkpoint)->required();
    c_eval->add_option("--manifest", ev.manifest)->required();
    c_eval->add_option("--split", ev.split);
    c_eval->add_option("--batch", ev.batch);
    c_eval->add_option("--out", ev.out, "Write the report here instead of stdout");

    AblateArgs ab;
    auto* c_ablate = app.add_subcommand("ablate", "Up/down-sampling ablation on the synthetic task");
    c_ablate->add_option("--out", ab.out)->required();
    c_ablate->add_option("--epochs", ab.epochs);
    c_ablate->add_option("--train-samples", ab.n_train);
    c_ablate->add_option("--val-samples", ab.n_val);
    c_ablate->add_option("--seed", ab.seed);
    c_ablate->add_flag("--rings-only", ab.rings_only, "Skip training");

    BenchArgs be;
    auto* c_bench = app.add_subcommand("bench", "Time operator assembly and application");
    c_bench->add_option("--level", be.level);
    c_bench->add_option("--ops", be.ops, "Comma list of lap, grad, up, down");
    c_bench->add_option("--repetitions", be.repetitions);
    c_bench->add_option("--out", be.out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*c_mesh) run_mesh(mesh);
        if (*c_export) run_export(ex);
        if (*c_synth) run_synth(sy);
        if (*c_train) {
            if (tr.out.empty() && !tr.print_config) throw UsageError("train needs --out");
            return run_train(tr);
        }
        if (*c_eval) run_eval(ev);
        if (*c_ablate) return run_ablate(ab);
        if (*c_bench) run_bench(be);
        return 0;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 1;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "diverged at epoch %d step %d: %s\n", e.epoch(), e.step(), e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
