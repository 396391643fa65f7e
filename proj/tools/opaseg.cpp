// opaseg: command-line front end for the opacity segmentation toolkit.
//
// Subcommands cover the whole desk-scale workflow:
//   phantom  synthesize a labelled CT slab and simulated annotators
//   fuse     per-pixel soft labels (mean/std) from annotator masks
//   agree    inter-annotator agreement matrix as CSV
//   train    fit the segmentation network on fused phantom scans
//   predict  per-pixel group probabilities and argmax mask for a volume
//   report   IOU / opacity IOU / relative volume / %WAL for a prediction
//
// Every command writes its payload files atomically into --out and finishes
// with a manifest.json recording command, inputs, config hash and seed. The
// payloads are deterministic: re-running a command with the same inputs
// reproduces them byte for byte (only the manifest timestamp moves).
//
// Exit codes: 0 ok, 1 validation, 2 io, 3 numerical. Errors print a single
// "error: <category>: <message>" line on stderr.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "opaseg/adam.hpp"
#include "opaseg/csv.hpp"
#include "opaseg/errors.hpp"
#include "opaseg/loss.hpp"
#include "opaseg/manifest.hpp"
#include "opaseg/metrics.hpp"
#include "opaseg/phantom.hpp"
#include "opaseg/png_io.hpp"
#include "opaseg/preprocess.hpp"
#include "opaseg/rng.hpp"
#include "opaseg/segnet.hpp"
#include "opaseg/soft_label.hpp"
#include "opaseg/taxonomy.hpp"
#include "opaseg/train.hpp"
#include "opaseg/volume_io.hpp"

namespace fs = std::filesystem;

namespace {

using namespace opaseg;

// The network predicts group IDs; every mask-consuming command works at
// group level unless told otherwise.
const std::vector<int> kGroupClasses{0, 1, 2, 3, 4};

std::string single_line(std::string s) {
    for (char& c : s)
        if (c == '\n' || c == '\r') c = ';';
    return s;
}

std::vector<std::string> split_commas(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
    std::vector<int> out;
    for (const std::string& item : split_commas(text)) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw ValidationError(what + ": '" + item + "' is not an integer");
        }
    }
    if (out.empty()) throw ValidationError(what + " must name at least one value");
    return out;
}

std::vector<int> parse_group_list(const std::string& text, const std::string& what) {
    std::vector<int> groups = parse_int_list(text, what);
    for (int g : groups)
        if (g < 0 || g > 10)
            throw ValidationError(what + ": group " + std::to_string(g) +
                                  " outside the valid range 0..10");
    return groups;
}

std::array<int, 3> parse_shape(const std::string& text) {
    const std::vector<int> v = parse_int_list(text, "--shape");
    if (v.size() != 3) throw ValidationError("--shape needs exactly three values: Z,Y,X");
    return {v[0], v[1], v[2]};
}

std::string join_plus(const std::vector<int>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += '+';
        out += std::to_string(values[i]);
    }
    return out;
}

fs::path ensure_out_dir(const std::string& out) {
    const fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

// A directory argument stands for its annotator masks (ann_*.msk, sorted);
// file arguments pass through.
std::vector<fs::path> expand_mask_inputs(const std::vector<std::string>& inputs) {
    std::vector<fs::path> paths;
    for (const std::string& input : inputs) {
        const fs::path p(input);
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& entry : fs::directory_iterator(p)) {
                const std::string name = entry.path().filename().string();
                if (entry.is_regular_file() && name.size() > 8 && name.rfind("ann_", 0) == 0 &&
                    name.substr(name.size() - 4) == ".msk")
                    found.push_back(entry.path());
            }
            if (found.empty())
                throw ValidationError("no ann_*.msk files in directory " + p.string());
            std::sort(found.begin(), found.end());
            paths.insert(paths.end(), found.begin(), found.end());
        } else {
            paths.push_back(p);
        }
    }
    return paths;
}

std::vector<LabelMask> load_masks(const std::vector<fs::path>& paths) {
    std::vector<LabelMask> masks;
    masks.reserve(paths.size());
    for (const fs::path& p : paths) masks.push_back(load_mask(p));
    return masks;
}

void finish_manifest(const std::string& command, std::vector<std::string> inputs,
                     const std::string& config_bytes, std::uint64_t seed, const fs::path& out) {
    RunManifest m;
    m.command = command;
    m.inputs = std::move(inputs);
    m.config_hash = config_hash_hex(config_bytes);
    m.seed = seed;
    write_manifest(std::move(m), out);
}

void write_overlay(const fs::path& path, const CtVolume& windowed, const LabelMask& labels,
                   int z) {
    const Image2<double> hu = slice_to_image(windowed, z);
    const std::vector<Rgb> pixels = overlay_slice(hu, labels.labels.slice(z));
    write_png_rgb(path, pixels, hu.height, hu.width);
}

// ---------------------------------------------------------------- phantom

struct PhantomOpts {
    std::string config_path;
    std::string out_dir;
    std::string shape_text = "16,64,64";
    int blobs = 3;
    int annotators = 0;
    double jitter = 0.0;
    double omission = 0.0;
    double confusion = 0.0;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int run_phantom(const PhantomOpts& o) {
    if (o.annotators < 0) throw ValidationError("--annotators must be >= 0");
    if (o.jitter < 0.0) throw ValidationError("--jitter must be >= 0");
    if (o.omission < 0.0 || o.omission > 1.0)
        throw ValidationError("--omission must be in [0, 1]");
    if (o.confusion < 0.0 || o.confusion > 1.0)
        throw ValidationError("--confusion must be in [0, 1]");

    PhantomSpec spec;
    if (!o.config_path.empty())
        spec = phantom_spec_from_json(read_file(o.config_path));
    else
        spec = random_phantom_spec(parse_shape(o.shape_text), o.blobs, o.seed);
    if (o.seed_set) spec.seed = o.seed;
    spec.validate();

    const fs::path out = ensure_out_dir(o.out_dir);
    const PhantomResult result = generate(spec);
    save_volume(result.volume, out / "volume.ctv");
    save_mask(result.truth, out / "truth.msk");

    // Annotator seeds come from a dedicated stream so adding annotators
    // never perturbs the volume.
    Rng ann_seeds = Rng(spec.seed).fork(2);
    for (int k = 0; k < o.annotators; ++k) {
        AnnotatorModel model;
        model.boundary_jitter_px = o.jitter;
        model.omission_rate = o.omission;
        if (o.confusion > 0.0) {
            // Keep 1-c on the true group, split c over the two others.
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    model.class_confusion[r][c] = (r == c) ? 1.0 - o.confusion
                                                           : o.confusion / 2.0;
        }
        model.seed = ann_seeds.next_u64();
        model.validate();
        const LabelMask ann = simulate_annotator(result.truth, model);
        char name[16];
        std::snprintf(name, sizeof name, "ann_%03d.msk", k);
        save_mask(ann, out / name);
    }

    const CtVolume windowed =
        apply_lung_window(result.volume, kLungWindowLowHu, kLungWindowHighHu);
    write_overlay(out / "overlay_truth.png", windowed, result.truth,
                  result.volume.hu.depth() / 2);

    const std::string spec_json = phantom_spec_to_json(spec);
    write_file_atomic(out / "spec.json", spec_json);
    finish_manifest("phantom",
                    {o.config_path.empty() ? std::string("<randomized>") : o.config_path},
                    spec_json, spec.seed, out);
    return 0;
}

// ------------------------------------------------------------------- fuse

struct FuseOpts {
    std::vector<std::string> inputs;
    std::string out_dir;
    std::string classes_text = "0,1,2,3,4";
    std::string opacity_text = "2,3,4";
};

int run_fuse(const FuseOpts& o) {
    const std::vector<int> classes = parse_group_list(o.classes_text, "--classes");
    const std::vector<int> opacity = parse_group_list(o.opacity_text, "--opacity-groups");
    const std::vector<fs::path> paths = expand_mask_inputs(o.inputs);
    const std::vector<LabelMask> masks = load_masks(paths);

    const fs::path out = ensure_out_dir(o.out_dir);
    const SoftLabel soft = fuse(masks, classes);
    save_soft_label(soft, out / "soft.sfl");
    if (masks.size() >= 2)
        save_mask(average_annotation(masks, opacity), out / "average.msk");

    std::vector<std::string> inputs;
    for (const fs::path& p : paths) inputs.push_back(p.string());
    finish_manifest("fuse", inputs, "classes=" + o.classes_text + ";opacity=" + o.opacity_text,
                    0, out);
    return 0;
}

// ------------------------------------------------------------------ agree

struct AgreeOpts {
    std::vector<std::string> inputs;
    std::string out_dir;
    std::string opacity_text = "2,3,4";
};

int run_agree(const AgreeOpts& o) {
    const std::vector<int> opacity = parse_group_list(o.opacity_text, "--opacity-groups");
    const std::vector<fs::path> paths = expand_mask_inputs(o.inputs);
    const std::vector<LabelMask> masks = load_masks(paths);

    const fs::path out = ensure_out_dir(o.out_dir);
    const AgreementMatrix mat = agreement(masks, opacity);

    std::vector<std::string> header{"annotator"};
    header.insert(header.end(), mat.annotator_ids.begin(), mat.annotator_ids.end());
    header.push_back("vs_average");
    CsvWriter csv(header);
    for (std::size_t i = 0; i < mat.annotator_ids.size(); ++i) {
        std::vector<std::string> row{mat.annotator_ids[i]};
        for (std::size_t j = 0; j < mat.annotator_ids.size(); ++j)
            row.push_back(format_double(mat.pair(i, j)));
        row.push_back(format_double(mat.vs_average[i]));
        csv.add_row(row);
    }
    write_file_atomic(out / "agreement.csv", csv.str());

    std::vector<std::string> inputs;
    for (const fs::path& p : paths) inputs.push_back(p.string());
    finish_manifest("agree", inputs, "opacity=" + o.opacity_text, 0, out);
    return 0;
}

// ------------------------------------------------------------------ train

struct TrainOpts {
    std::string data_dir;
    std::string out_dir;
    std::string config_path;
    std::string opacity_text = "2,3,4";
    std::string test_scans_text;
    double val_fraction = 0.25;
    double label_epsilon = 1e-2;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

// One scan directory: the CT volume plus its annotator masks; truth.msk is
// used as the validation reference when present, otherwise the per-pixel
// majority group of the fused annotations stands in.
struct ScanBundle {
    CtVolume windowed;
    SoftLabel soft;
    GaussianTarget target;
    std::vector<LabelMask> annotations;
    LabelMask reference;
};

ScanBundle load_scan_bundle(const fs::path& dir, double label_epsilon) {
    ScanBundle b;
    b.windowed =
        apply_lung_window(load_volume(dir / "volume.ctv"), kLungWindowLowHu, kLungWindowHighHu);
    b.annotations = load_masks(expand_mask_inputs({dir.string()}));
    b.soft = fuse(b.annotations, kGroupClasses);
    b.target = gaussian_target(b.soft, label_epsilon);

    if (fs::exists(dir / "truth.msk.json")) {
        b.reference = load_mask(dir / "truth.msk");
    } else {
        const auto& s = b.soft;
        Grid3<std::int8_t> majority(s.shape[0], s.shape[1], s.shape[2],
                                    static_cast<std::int8_t>(-1));
        for (int z = 0; z < s.shape[0]; ++z)
            for (int y = 0; y < s.shape[1]; ++y)
                for (int x = 0; x < s.shape[2]; ++x) {
                    if (s.support[s.pixel_idx(z, y, x)] == 0) continue;
                    std::size_t best = 0;
                    for (std::size_t c = 1; c < s.classes.size(); ++c)
                        if (s.mean[s.idx(z, static_cast<int>(c), y, x)] >
                            s.mean[s.idx(z, static_cast<int>(best), y, x)])
                            best = c;
                    majority.at(z, y, x) = static_cast<std::int8_t>(s.classes[best]);
                }
        b.reference = LabelMask(std::move(majority), "majority");
    }
    if (b.reference.labels.shape != b.windowed.hu.shape)
        throw ValidationError("reference mask shape does not match volume in " + dir.string());
    return b;
}

int run_train(const TrainOpts& o) {
    TrainConfig config = o.config_path.empty()
                             ? TrainConfig::desk_defaults()
                             : train_config_from_json(read_file(o.config_path));
    if (o.seed_set) config.seed = o.seed;
    config.validate();
    const std::vector<int> opacity = parse_group_list(o.opacity_text, "--opacity-groups");
    if (!(o.label_epsilon > 0.0)) throw ValidationError("--label-epsilon must be > 0");
    if (!(o.val_fraction > 0.0 && o.val_fraction < 1.0))
        throw ValidationError("--val-fraction must be in (0, 1)");
    if (!fs::is_directory(o.data_dir))
        throw IoError("--data is not a directory: " + o.data_dir);

    std::vector<std::string> scan_ids;
    for (const auto& entry : fs::directory_iterator(o.data_dir))
        if (entry.is_directory()) scan_ids.push_back(entry.path().filename().string());
    std::sort(scan_ids.begin(), scan_ids.end());
    if (scan_ids.size() < 2)
        throw ValidationError("--data must hold at least two scan directories "
                              "(one train, one validation)");

    std::vector<std::string> test_ids;
    if (!o.test_scans_text.empty()) test_ids = split_commas(o.test_scans_text);
    const ScanSplit split = split_scans(scan_ids, test_ids, o.val_fraction, config.seed);

    std::vector<TrainSample> train_set;
    std::vector<ValSample> val_set;
    std::vector<LabelMask> weight_masks;

    for (const std::string& id : split.train) {
        ScanBundle b = load_scan_bundle(fs::path(o.data_dir) / id, o.label_epsilon);
        const std::size_t plane = b.soft.plane_size();
        const std::size_t planes_per_slice = b.soft.classes.size() * plane;
        for (int z = 0; z < b.windowed.hu.depth(); ++z) {
            const double* w = b.target.weight.data() + b.soft.pixel_idx(z, 0, 0);
            bool any = false;
            for (std::size_t i = 0; i < plane && !any; ++i) any = w[i] > 0.0;
            if (!any) continue; // nobody labelled this slice
            TrainSample s;
            s.input = normalize(slice_to_image(b.windowed, z), kNormMeanHu, kNormStdHu).values;
            const double* t = b.target.target.data() + static_cast<std::size_t>(z) * planes_per_slice;
            s.target.assign(t, t + planes_per_slice);
            s.pixel_weight.assign(w, w + plane);
            train_set.push_back(std::move(s));
        }
        for (LabelMask& m : b.annotations) weight_masks.push_back(std::move(m));
    }
    for (const std::string& id : split.val) {
        const ScanBundle b = load_scan_bundle(fs::path(o.data_dir) / id, o.label_epsilon);
        for (int z = 0; z < b.windowed.hu.depth(); ++z) {
            const std::int8_t* g = b.reference.labels.slice(z);
            const std::size_t plane = b.reference.labels.slice_size();
            bool any = false;
            for (std::size_t i = 0; i < plane && !any; ++i) any = g[i] != kUnlabelled;
            if (!any) continue;
            ValSample s;
            s.input = normalize(slice_to_image(b.windowed, z), kNormMeanHu, kNormStdHu).values;
            s.gt.assign(g, g + plane);
            val_set.push_back(std::move(s));
        }
    }
    if (train_set.empty()) throw ValidationError("no labelled training slices in " + o.data_dir);
    if (val_set.empty()) throw ValidationError("no labelled validation slices in " + o.data_dir);

    const ClassWeights weights = compute_class_weights(weight_masks, kGroupClasses);
    weight_masks.clear();

    SegNet net;
    Rng init_rng(config.seed);
    net.init_params(init_rng);
    const TrainResult result = train(net, train_set, val_set, weights, config, opacity);

    const fs::path out = ensure_out_dir(o.out_dir);
    Checkpoint ckpt;
    ckpt.epoch = result.best_epoch;
    ckpt.val_opacity_iou = result.best_val_iou;
    ckpt.params = result.best_params;
    save_checkpoint(ckpt, out / "checkpoint.ckpt");

    CsvWriter epochs({"epoch", "lr", "train_loss", "val_opacity_iou"});
    for (const EpochStats& e : result.log)
        epochs.add_row({std::to_string(e.epoch), format_double(e.lr),
                        format_double(e.train_loss), format_double(e.val_opacity_iou)});
    write_file_atomic(out / "epochs.csv", epochs.str());

    CsvWriter roles({"scan", "role"});
    for (const std::string& id : split.train) roles.add_row({id, "train"});
    for (const std::string& id : split.val) roles.add_row({id, "val"});
    for (const std::string& id : split.test) roles.add_row({id, "test"});
    write_file_atomic(out / "split.csv", roles.str());

    const std::string config_bytes =
        o.config_path.empty() ? train_config_to_json(config) : read_file(o.config_path);
    std::vector<std::string> inputs{o.data_dir};
    if (!o.config_path.empty()) inputs.push_back(o.config_path);
    finish_manifest("train", inputs, config_bytes, config.seed, out);

    if (result.aborted)
        throw NumericalError("training aborted on a non-finite loss; the last stable "
                             "checkpoint was kept");
    return 0;
}

// ---------------------------------------------------------------- predict

struct PredictOpts {
    std::string checkpoint_path;
    std::string volume_path;
    std::string out_dir;
};

int run_predict(const PredictOpts& o) {
    const Checkpoint ckpt = load_checkpoint(o.checkpoint_path);
    SegNet net(ckpt.base_channels, ckpt.n_classes, ckpt.in_channels);
    net.params() = ckpt.params;

    const CtVolume windowed =
        apply_lung_window(load_volume(o.volume_path), kLungWindowLowHu, kLungWindowHighHu);
    const int depth = windowed.hu.depth();
    const int h = windowed.hu.height();
    const int w = windowed.hu.width();

    Workspace ws;
    ws.resize(net, h, w);

    SoftLabel probs;
    probs.shape = {depth, h, w};
    for (int c = 0; c < ckpt.n_classes; ++c) probs.classes.push_back(c);
    probs.n_annotators = 1;
    probs.mean.resize(static_cast<std::size_t>(depth) * ckpt.n_classes * h * w, 0.0);
    probs.stddev.assign(probs.mean.size(), 0.0);
    probs.support.assign(static_cast<std::size_t>(depth) * h * w, 1);

    Grid3<std::int8_t> argmax(depth, h, w, static_cast<std::int8_t>(-1));
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int z = 0; z < depth; ++z) {
        const NormalizedSlice slice =
            normalize(slice_to_image(windowed, z), kNormMeanHu, kNormStdHu);
        forward(net, slice.values, ws);
        const std::vector<double>& p = ws.probs();
        std::copy(p.begin(), p.end(), probs.mean.begin() + probs.idx(z, 0, 0, 0));
        std::int8_t* out_slice = argmax.slice(z);
        for (std::size_t i = 0; i < plane; ++i) {
            int best = 0;
            for (int c = 1; c < ckpt.n_classes; ++c)
                if (p[static_cast<std::size_t>(c) * plane + i] >
                    p[static_cast<std::size_t>(best) * plane + i])
                    best = c;
            out_slice[i] = static_cast<std::int8_t>(best);
        }
    }

    const fs::path out = ensure_out_dir(o.out_dir);
    const LabelMask pred(std::move(argmax), "pred");
    save_mask(pred, out / "pred.msk");
    save_soft_label(probs, out / "probs.sfl");
    write_overlay(out / "overlay_pred.png", windowed, pred, depth / 2);

    finish_manifest("predict", {o.checkpoint_path, o.volume_path},
                    read_file(o.checkpoint_path + ".json"), 0, out);
    return 0;
}

// ----------------------------------------------------------------- report

struct ReportOpts {
    std::string pred_path;
    std::string gt_path;
    std::string out_dir;
    std::string opacity_text = "2,3,4";
};

int run_report(const ReportOpts& o) {
    const std::vector<int> opacity = parse_group_list(o.opacity_text, "--opacity-groups");
    const LabelMask pred = load_mask(o.pred_path);
    const LabelMask gt = load_mask(o.gt_path);

    ConfusionAccumulator acc(kGroupClasses);
    acc.accumulate(pred, gt);
    ConfusionAccumulator bin = make_binary_accumulator();
    accumulate_opacity_mask(bin, pred.labels.data.data(), gt.labels.data.data(),
                            pred.labels.size(), opacity);

    const std::string scan = fs::path(o.pred_path).stem().string();
    CsvWriter csv({"scan", "metric", "label", "value"});
    auto put = [&](const std::string& metric, const std::string& label,
                   std::optional<double> value) {
        csv.add_row({scan, metric, label, value ? format_double(*value) : std::string()});
    };

    for (int g : kGroupClasses) put("iou", std::to_string(g), iou(acc, g));
    put("mean_iou", "", mean_iou(acc));
    const std::string oplabel = join_plus(opacity);
    put("opacity_iou", oplabel, iou(bin, 1));
    try {
        put("relative_volume", oplabel, relative_volume(bin));
    } catch (const ValidationError&) {
        put("relative_volume", oplabel, std::nullopt);
    }
    try {
        put("percent_wal", "", percent_wal(pred, opacity));
    } catch (const ValidationError&) {
        put("percent_wal", "", std::nullopt);
    }
    csv.add_row({scan, "evaluated_pixels", "", std::to_string(acc.evaluated_pixels())});

    const fs::path out = ensure_out_dir(o.out_dir);
    write_file_atomic(out / "report.csv", csv.str());
    finish_manifest("report", {o.pred_path, o.gt_path}, "opacity=" + o.opacity_text, 0, out);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pulmonary opacity segmentation toolkit"};
    app.require_subcommand(1);

    PhantomOpts po;
    CLI::App* phantom_cmd =
        app.add_subcommand("phantom", "synthesize a labelled CT slab with annotators");
    phantom_cmd->add_option("--config", po.config_path,
                            "phantom spec JSON (omit for a randomized spec)");
    phantom_cmd->add_option("--out", po.out_dir, "output directory")->required();
    phantom_cmd->add_option("--shape", po.shape_text, "Z,Y,X voxels (randomized specs only)");
    phantom_cmd->add_option("--blobs", po.blobs, "opacity blob count (randomized specs only)");
    phantom_cmd->add_option("--annotators", po.annotators, "simulated annotator count");
    phantom_cmd->add_option("--jitter", po.jitter, "annotator boundary jitter in pixels");
    phantom_cmd->add_option("--omission", po.omission, "per-region omission probability");
    phantom_cmd->add_option("--confusion", po.confusion,
                            "per-region probability of relabelling to another opacity group");
    CLI::Option* phantom_seed = phantom_cmd->add_option("--seed", po.seed, "overrides spec seed");

    FuseOpts fo;
    CLI::App* fuse_cmd = app.add_subcommand("fuse", "fuse annotator masks into soft labels");
    fuse_cmd->add_option("masks", fo.inputs, "mask files or scan directories")->required();
    fuse_cmd->add_option("--out", fo.out_dir, "output directory")->required();
    fuse_cmd->add_option("--classes", fo.classes_text, "label values to fuse over");
    fuse_cmd->add_option("--opacity-groups", fo.opacity_text, "groups counted as opacity");

    AgreeOpts ao;
    CLI::App* agree_cmd = app.add_subcommand("agree", "inter-annotator agreement matrix");
    agree_cmd->add_option("masks", ao.inputs, "mask files or scan directories")->required();
    agree_cmd->add_option("--out", ao.out_dir, "output directory")->required();
    agree_cmd->add_option("--opacity-groups", ao.opacity_text, "groups counted as opacity");

    TrainOpts to;
    CLI::App* train_cmd = app.add_subcommand("train", "fit the segmentation network");
    train_cmd->add_option("--data", to.data_dir, "directory of scan subdirectories")->required();
    train_cmd->add_option("--out", to.out_dir, "output directory")->required();
    train_cmd->add_option("--config", to.config_path, "training config JSON");
    train_cmd->add_option("--opacity-groups", to.opacity_text, "groups counted as opacity");
    train_cmd->add_option("--test-scans", to.test_scans_text,
                          "comma-separated scan ids held out entirely");
    train_cmd->add_option("--val-fraction", to.val_fraction,
                          "fraction of non-test scans used for validation");
    train_cmd->add_option("--label-epsilon", to.label_epsilon,
                          "variance floor for soft-label confidence weights");
    CLI::Option* train_seed =
        train_cmd->add_option("--seed", to.seed, "overrides the config seed");

    PredictOpts pr;
    CLI::App* predict_cmd = app.add_subcommand("predict", "per-pixel group probabilities");
    predict_cmd->add_option("--checkpoint", pr.checkpoint_path, "trained checkpoint")->required();
    predict_cmd->add_option("--volume", pr.volume_path, "CT volume (.ctv)")->required();
    predict_cmd->add_option("--out", pr.out_dir, "output directory")->required();

    ReportOpts ro;
    CLI::App* report_cmd = app.add_subcommand("report", "segmentation quality metrics");
    report_cmd->add_option("--pred", ro.pred_path, "predicted group mask (.msk)")->required();
    report_cmd->add_option("--gt", ro.gt_path, "reference group mask (.msk)")->required();
    report_cmd->add_option("--out", ro.out_dir, "output directory")->required();
    report_cmd->add_option("--opacity-groups", ro.opacity_text, "groups counted as opacity");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: validation: " << single_line(e.what()) << "\n";
        return 1;
    }

    po.seed_set = phantom_seed->count() > 0;
    to.seed_set = train_seed->count() > 0;

    try {
        if (phantom_cmd->parsed()) return run_phantom(po);
        if (fuse_cmd->parsed()) return run_fuse(fo);
        if (agree_cmd->parsed()) return run_agree(ao);
        if (train_cmd->parsed()) return run_train(to);
        if (predict_cmd->parsed()) return run_predict(pr);
        if (report_cmd->parsed()) return run_report(ro);
    } catch (const ValidationError& e) {
        std::cerr << "error: validation: " << single_line(e.what()) << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: io: " << single_line(e.what()) << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "error: numerical: " << single_line(e.what()) << "\n";
        return 3;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: io: " << single_line(e.what()) << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << single_line(e.what()) << "\n";
        return 1;
    }
    return 0;
}
