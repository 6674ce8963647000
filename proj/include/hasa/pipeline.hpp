#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hasa/backends.hpp"
#include "hasa/prompts.hpp"
#include "hasa/sdm.hpp"
#include "hasa/volume.hpp"

namespace hasa {

/// What goes into the second input channel.
enum class ChannelPolicy { guess_sdm, guess_raw, t2, blank, t1_only };

std::string to_string(ChannelPolicy p);
ChannelPolicy channel_policy_from_string(const std::string& s);
/// Number of input channels a student needs for this policy.
int channel_count(ChannelPolicy p);

/// Post-processing applied to every slice guess.
struct GuessFilters {
    bool contour_filter = true;
    BoxEligibility eligibility = BoxEligibility::centroid;
    double attention_threshold = 0.5;
};

struct GuessVolumes {
    LabelVolume raw;
    Volume3D sdm;
    std::vector<std::optional<SlicePrompt>> prompts;
};

/// Per slice: prompt from the prior, backend guess, highest-confidence
/// candidate, largest contour in the prompt box; then stacked and smoothed.
GuessVolumes build_guess_volume(const Volume3D& t1, const LabelVolume& prior, const GuessBackend& backend,
                                const JitterSpec& jitter, const SdmSpec& sdm, const GuessFilters& filters = {},
                                uint64_t stream_id = 0);

struct TrainingSample {
    std::vector<Volume3D> channels;  // channel 0 is the normalized T1
    LabelVolume label;
    std::string subject_id;
    std::string augmentation_tag = "orig";
};

/// Stacks T1 with the policy's second channel. Guess volumes are already in
/// [0,1] and pass through; a T2 volume is min-max normalized.
TrainingSample assemble_sample(const Volume3D& t1, const Volume3D* second, const LabelVolume& label,
                               ChannelPolicy policy, std::string subject_id = {});

struct AugmentSpec {
    int copies = 4;  // total per subject, including the unaugmented original
    std::array<double, 2> gamma_range{0.7, 1.5};
    double noise_std_max = 0.05;  // fraction of the intensity range
    double rotate_max_deg = 5.0;
    std::array<double, 2> scale_range{0.95, 1.05};
    double translate_max = 5.0;
    uint64_t seed = 0;
    void validate() const;
};

void to_json(nlohmann::json& j, const AugmentSpec& s);
void from_json(const nlohmann::json& j, AugmentSpec& s);

/// Source coordinate of an output voxel: src = linear * (p - c) + c + shift,
/// with c the volume centre.
struct AffineMap {
    std::array<double, 9> linear{1, 0, 0, 0, 1, 0, 0, 0, 1};
    std::array<double, 3> shift{0, 0, 0};
    std::array<double, 3> center{0, 0, 0};
    std::array<double, 3> source(double x, double y, double z) const;
};

struct AugmentParams {
    AffineMap affine;
    double gamma = 1.0;
    double noise_std = 0.0;
    uint64_t noise_seed = 0;
};

/// Draws the augmentation of (subject_id, copy); deterministic.
AugmentParams draw_augment_params(const AugmentSpec& spec, const Shape3& shape, const std::string& subject_id,
                                  int copy);

/// Applies draw_augment_params(...): one affine map for all channels
/// (trilinear) and the label (nearest), then gamma and noise on channel 0.
TrainingSample augment(const TrainingSample& sample, const AugmentSpec& spec, int copy);
TrainingSample apply_augment(const TrainingSample& sample, const AugmentParams& params, const std::string& tag);

/// The original plus spec.copies - 1 augmented copies of every sample.
std::vector<TrainingSample> expand_augmented(const std::vector<TrainingSample>& samples, const AugmentSpec& spec);

struct SubjectFiles {
    std::string id;
    std::string t1;
    std::string t2;
    std::string label;
    std::string guess;
    std::string guess_sdm;
};

struct Manifest {
    std::vector<SubjectFiles> subjects;
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
    std::array<double, 3> fractions{0.6, 0.2, 0.2};
    std::vector<ChannelPolicy> policies;
    AugmentSpec augment;
    uint64_t seed = 0;

    const SubjectFiles& subject(const std::string& id) const;
};

/// Subject-level split. Train and validation counts are round(f * n); the
/// test split takes the rest.
Manifest build_manifest(std::vector<SubjectFiles> subjects, std::array<double, 3> fractions, uint64_t seed,
                        const AugmentSpec& augment = {}, std::vector<ChannelPolicy> policies = {});

nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);
void save_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest load_manifest(const std::filesystem::path& path);

}  // namespace hasa
