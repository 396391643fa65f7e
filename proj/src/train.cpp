#include "opaseg/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include "json.hpp"

#include "opaseg/adam.hpp"
#include "opaseg/errors.hpp"
#include "opaseg/metrics.hpp"
#include "opaseg/rng.hpp"
#include "opaseg/volume_io.hpp"

using nlohmann::json;

namespace opaseg {

void TrainConfig::validate() const {
    if (epochs < 0) throw ValidationError("epochs must be >= 0");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (!(initial_lr > 0.0)) throw ValidationError("initial_lr must be > 0");
    if (!(decay_factor > 0.0)) throw ValidationError("decay_factor must be > 0");
    if (decay_every_epochs < 1) throw ValidationError("decay_every_epochs must be >= 1");
    if (!(epsilon_kl > 0.0)) throw ValidationError("epsilon_kl must be > 0");
}

double lr_for_epoch(const TrainConfig& config, int epoch) {
    if (epoch < 1) throw ValidationError("epoch numbering starts at 1");
    const int steps = (epoch - 1) / config.decay_every_epochs;
    double lr = config.initial_lr;
    for (int i = 0; i < steps; ++i) lr /= config.decay_factor;
    return lr;
}

std::size_t select_best_epoch(const std::vector<EpochStats>& log) {
    if (log.empty()) throw ValidationError("cannot select an epoch from an empty log");
    std::size_t best = 0;
    for (std::size_t i = 1; i < log.size(); ++i)
        if (log[i].val_opacity_iou > log[best].val_opacity_iou) best = i;
    return best;
}

double validation_opacity_iou(const SegNet& net, const std::vector<ValSample>& val_set,
                              const std::vector<int>& opacity_groups) {
    std::vector<int> prob_groups(static_cast<std::size_t>(net.n_classes()));
    std::iota(prob_groups.begin(), prob_groups.end(), 0);
    auto acc = make_binary_accumulator();
    Workspace ws;
    for (const auto& sample : val_set) {
        forward(net, sample.input, ws);
        const std::size_t pixels =
            static_cast<std::size_t>(sample.input.height) * sample.input.width;
        if (sample.gt.size() != pixels)
            throw ValidationError("validation labels do not match the slice size");
        accumulate_opacity_probs(acc, ws.probs().data(), prob_groups, sample.gt.data(), pixels,
                                 opacity_groups);
    }
    return iou(acc, 1).value_or(0.0);
}

TrainResult train(SegNet& net, const std::vector<TrainSample>& train_set,
                  const std::vector<ValSample>& val_set, const ClassWeights& weights,
                  const TrainConfig& config, const std::vector<int>& opacity_groups) {
    config.validate();
    if (static_cast<int>(weights.weight.size()) != net.n_classes())
        throw ValidationError("class weight count does not match the network outputs");

    TrainResult result;
    result.best_params = net.params();
    if (config.epochs == 0) return result;

    if (train_set.empty()) throw ValidationError("training set is empty");
    if (val_set.empty()) throw ValidationError("validation set is empty");

    Rng rng(config.seed);
    AdamState adam(net.param_count());
    Workspace ws;
    std::vector<double> grad(net.param_count());
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    double best_iou = -1.0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const double lr = lr_for_epoch(config, epoch);
        rng.shuffle(order);

        double loss_sum = 0.0;
        int n_batches = 0;
        bool blew_up = false;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const double inv_batch = 1.0 / static_cast<double>(end - start);

            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            try {
                for (std::size_t i = start; i < end; ++i) {
                    const auto& sample = train_set[order[i]];
                    forward(net, sample.input, ws);
                    auto lg = kl_loss(ws.probs(), sample.target, sample.pixel_weight, weights,
                                      config.epsilon_kl);
                    batch_loss += lg.loss;
                    backward(net, ws, lg.dlogits, grad);
                }
                batch_loss *= inv_batch;
                for (double& g : grad) g *= inv_batch;

                if (!std::isfinite(batch_loss)) {
                    blew_up = true;
                    break;
                }
                adam_step(net.params(), grad, adam, lr);
            } catch (const NumericalError&) {
                blew_up = true;
                break;
            }
            loss_sum += batch_loss;
            ++n_batches;
        }
        if (blew_up) {
            result.aborted = true;
            break;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.train_loss = loss_sum / static_cast<double>(n_batches);
        stats.val_opacity_iou = validation_opacity_iou(net, val_set, opacity_groups);
        result.log.push_back(stats);

        if (stats.val_opacity_iou > best_iou) { // strict: ties keep the earliest epoch
            best_iou = stats.val_opacity_iou;
            result.best_params = net.params();
            result.best_epoch = epoch;
            result.best_val_iou = stats.val_opacity_iou;
        }
    }

    net.params() = result.best_params;
    return result;
}

namespace {

std::string pack_f64_le(const std::vector<double>& values) {
    std::string out(values.size() * 8, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(values[i]);
        for (int b = 0; b < 8; ++b)
            out[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
    return out;
}

std::vector<double> unpack_f64_le(const std::string& bytes) {
    std::vector<double> out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b]))
                    << (8 * b);
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    json header;
    header["base_channels"] = ckpt.base_channels;
    header["n_classes"] = ckpt.n_classes;
    header["in_channels"] = ckpt.in_channels;
    header["epoch"] = ckpt.epoch;
    header["val_opacity_iou"] = ckpt.val_opacity_iou;
    header["n_params"] = ckpt.params.size();
    write_file_atomic(path, pack_f64_le(ckpt.params));
    write_file_atomic(path.string() + ".json", header.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    json header;
    try {
        header = json::parse(read_file(path.string() + ".json"));
    } catch (const json::exception& e) {
        throw IoError("checkpoint sidecar is not valid JSON: " + std::string(e.what()));
    }
    Checkpoint ckpt;
    try {
        ckpt.base_channels = header.at("base_channels").get<int>();
        ckpt.n_classes = header.at("n_classes").get<int>();
        ckpt.in_channels = header.at("in_channels").get<int>();
        ckpt.epoch = header.at("epoch").get<int>();
        ckpt.val_opacity_iou = header.at("val_opacity_iou").get<double>();
        const auto n = header.at("n_params").get<std::size_t>();
        const std::string payload = read_file(path);
        if (payload.size() != n * 8)
            throw IoError("checkpoint payload holds " + std::to_string(payload.size() / 8) +
                          " parameters, header says " + std::to_string(n));
        ckpt.params = unpack_f64_le(payload);
    } catch (const json::exception& e) {
        throw IoError("checkpoint sidecar is missing fields: " + std::string(e.what()));
    }
    // Cross-check against the architecture the header describes.
    SegNet probe(ckpt.base_channels, ckpt.n_classes, ckpt.in_channels);
    if (probe.param_count() != ckpt.params.size())
        throw IoError("checkpoint parameter count does not match its architecture header");
    return ckpt;
}

std::string train_config_to_json(const TrainConfig& config) {
    json j;
    j["epochs"] = config.epochs;
    j["batch_size"] = config.batch_size;
    j["initial_lr"] = config.initial_lr;
    j["decay_factor"] = config.decay_factor;
    j["decay_every_epochs"] = config.decay_every_epochs;
    j["seed"] = config.seed;
    j["epsilon_kl"] = config.epsilon_kl;
    return j.dump(2) + "\n";
}

TrainConfig train_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError("train config is not valid JSON: " + std::string(e.what()));
    }
    TrainConfig config;
    try {
        if (j.contains("epochs")) config.epochs = j.at("epochs").get<int>();
        if (j.contains("batch_size")) config.batch_size = j.at("batch_size").get<int>();
        if (j.contains("initial_lr")) config.initial_lr = j.at("initial_lr").get<double>();
        if (j.contains("decay_factor"))
            config.decay_factor = j.at("decay_factor").get<double>();
        if (j.contains("decay_every_epochs"))
            config.decay_every_epochs = j.at("decay_every_epochs").get<int>();
        if (j.contains("seed")) config.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("epsilon_kl")) config.epsilon_kl = j.at("epsilon_kl").get<double>();
    } catch (const json::exception& e) {
        throw ValidationError("train config field has the wrong type: " +
                              std::string(e.what()));
    }
    config.validate();
    return config;
}

} // namespace opaseg
