#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "opaseg/loss.hpp"
#include "opaseg/segnet.hpp"
#include "opaseg/volume.hpp"

namespace opaseg {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 64;
    double initial_lr = 0.1;
    double decay_factor = 10.0;
    int decay_every_epochs = 10;
    std::uint64_t seed = 0;
    double epsilon_kl = 1e-7;

    // Reference recipe: 30 epochs, batch 64, lr 0.1 decayed 10x every 10.
    static TrainConfig reference_defaults() { return TrainConfig{}; }
    // CPU desk scale: 64x64 slices train stably at batch 8 with a smaller lr.
    static TrainConfig desk_defaults() {
        TrainConfig c;
        c.batch_size = 8;
        c.initial_lr = 1e-2;
        return c;
    }

    void validate() const;
};

// Step-decayed rate for a 1-based epoch: the initial rate divided by
// decay_factor once per completed decay_every_epochs block. Computed by
// repeated division so logged rates hit the conventional decimal values
// exactly.
double lr_for_epoch(const TrainConfig& config, int epoch);

// One training slice: normalized input, fused soft target and per-pixel
// confidence weights (0 where no annotator labelled the pixel).
struct TrainSample {
    Image2<double> input;
    std::vector<double> target;       // [class][y][x]
    std::vector<double> pixel_weight; // [y][x]
};

// One validation slice with its reference group labels.
struct ValSample {
    Image2<double> input;
    std::vector<std::int8_t> gt; // [y][x] group ids, -1 unlabelled
};

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_opacity_iou = 0.0;
};

struct TrainResult {
    std::vector<double> best_params;
    int best_epoch = 0; // 1-based; 0 means no epoch ran
    double best_val_iou = 0.0;
    std::vector<EpochStats> log;
    bool aborted = false; // non-finite loss cut training short
};

// Index into the log of the checkpointed epoch: the first maximum of the
// validation opacity IOU column.
std::size_t select_best_epoch(const std::vector<EpochStats>& log);

// Runs the full loop: shuffled mini-batches, KL loss, ADAM, step-decayed lr,
// per-epoch validation. The caller initializes the parameters. The net is
// left holding the best-validation-epoch parameters (also returned). A
// non-finite training loss aborts, keeping the last good checkpoint.
TrainResult train(SegNet& net, const std::vector<TrainSample>& train_set,
                  const std::vector<ValSample>& val_set, const ClassWeights& weights,
                  const TrainConfig& config, const std::vector<int>& opacity_groups);

// Binary opacity IOU of net predictions against reference labels; 0 when
// undefined (no opacity anywhere in predictions or references).
double validation_opacity_iou(const SegNet& net, const std::vector<ValSample>& val_set,
                              const std::vector<int>& opacity_groups);

// Checkpoint: flat float64 little-endian payload, JSON sidecar at
// "<path>.json" with the architecture config, epoch and validation score.
struct Checkpoint {
    int base_channels = 8;
    int n_classes = 5;
    int in_channels = 1;
    int epoch = 0;
    double val_opacity_iou = 0.0;
    std::vector<double> params;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// JSON round-trip mirroring the TrainConfig field names.
std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);

} // namespace opaseg
