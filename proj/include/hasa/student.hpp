#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hasa/losses.hpp"
#include "hasa/pipeline.hpp"
#include "hasa/unet.hpp"
#include "hasa/volume.hpp"

namespace hasa {

struct StudentConfig {
    std::string preset = "default";
    int in_channels = 2;
    int depth = 3;
    int base_filters = 16;
    std::size_t param_budget = 3'000'000;  // 0 disables the budget check
    int patch_size = 32;
    int epochs = 20;
    double learning_rate = 1e-3;
    int batch_size = 2;
    int patches_per_sample = 1;       // crops drawn from every sample per epoch
    double foreground_fraction = 0.5;  // probability a crop is centred on foreground
    double loss_band = 10.0;           // clip of the label distance in the boundary loss
    DynamicLossConfig loss;
    uint64_t seed = 0;

    /// ~3M-parameter student for real data.
    static StudentConfig default_preset();
    /// ~100k-parameter student for desk-scale phantoms.
    static StudentConfig desk_preset();
    static StudentConfig from_preset(const std::string& name);

    UNetArchitecture architecture() const;
    void validate() const;
    /// Fields that must agree for a checkpoint to resume under this config.
    nlohmann::json resume_key() const;
};

void to_json(nlohmann::json& j, const StudentConfig& c);
/// Missing fields fall back to the preset named by "preset".
void from_json(const nlohmann::json& j, StudentConfig& c);

/// Checks the config (and the parameter budget, within 2x) and builds the network.
UNet3D build_student(const StudentConfig& config);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double train_dice = 0.0;
    double train_vol_acc = 0.0;
    double val_loss = 0.0;
    double val_dice = 0.0;
    double val_vol_acc = 0.0;
};

struct TrainingHistory {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;
    double best_val_dice = 0.0;
};

std::string history_csv(const TrainingHistory& h);
void write_history_csv(const TrainingHistory& h, const std::filesystem::path& path);

/// First and second moment state of the adaptive-moment optimizer.
struct AdamState {
    std::vector<float> m;
    std::vector<float> v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    void apply(std::span<float> params, std::span<const float> grads, double lr);
};

struct Checkpoint {
    StudentConfig config;
    std::vector<float> weights;       // best validation
    std::vector<float> last_weights;  // end of the last finished epoch, for resuming
    std::optional<AdamState> adam;
    TrainingHistory history;
    int epochs_done = 0;
    std::string tag;  // free-form, e.g. the channel policy
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Network of the checkpoint's config with its weights loaded.
UNet3D restore_student(const Checkpoint& ck);

struct TrainOptions {
    std::optional<std::filesystem::path> checkpoint_path;  // best-validation model goes here
    std::optional<std::filesystem::path> history_path;
    std::optional<std::filesystem::path> resume_from;
    std::string tag;  // stored in the checkpoint
    std::function<void(const EpochStats&)> on_epoch;
};

/// Trains on random crops of `train` with the dynamic DICE/boundary loss and
/// validates on full volumes after every epoch. On return `model` holds the
/// weights of the best validation DICE (the last epoch when `val` is empty).
TrainingHistory train(UNet3D& model, const std::vector<TrainingSample>& train_set,
                      const std::vector<TrainingSample>& val_set, const StudentConfig& config,
                      const TrainOptions& options = {});

struct Prediction {
    Volume3D prob;
    LabelVolume mask;  // prob >= 0.5
};

/// Full-volume probabilities from overlapping windows of `patch` voxels,
/// averaged where windows overlap. The volume is zero-padded to a multiple
/// of 2^depth. patch <= 0 processes the whole (padded) volume at once.
Prediction predict(UNet3D& model, const std::vector<Volume3D>& channels, int patch = 0, int overlap = 8);

}  // namespace hasa
