#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "hasa/prompts.hpp"
#include "hasa/rng.hpp"
#include "hasa/volume.hpp"

namespace hasa {

/// A candidate mask emitted by a guess backend.
struct GuessCandidate {
    Mask2D mask;
    double confidence = 0.0;
};

/// Prompt-less saliency map, values in [0,1].
struct AttentionMap {
    Image2D values;
};

using BackendOutput = std::variant<std::vector<GuessCandidate>, AttentionMap>;

enum class BackendKind { oracle, file, attention };

std::string to_string(BackendKind k);
BackendKind backend_kind_from_string(const std::string& s);
/// Prompted kinds need a prompt for a non-empty guess.
bool is_prompted(BackendKind k);

/// Parameters of the simulated noisy foundation model.
struct CorruptionSpec {
    double dilation_radius = 0.0;
    int blob_noise_count = 0;
    double blob_radius = 3.0;
    double drop_slice_prob = 0.0;
    uint64_t seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const CorruptionSpec& s);
void from_json(const nlohmann::json& j, CorruptionSpec& s);

/// truth dilated by a disk, plus random disks, with the whole slice dropped at random.
Mask2D corrupt_mask(const Mask2D& truth, const CorruptionSpec& spec, Rng& rng);

/// Highest confidence; ties resolve to the lowest index.
const GuessCandidate& select_candidate(std::span<const GuessCandidate> candidates);

enum class BoxEligibility { centroid, intersection };

/// Keeps the largest 8-connected component whose centroid lies in `box`
/// (or that intersects it, per `rule`); falls back to the globally largest.
Mask2D largest_contour_filter(const Mask2D& mask, const BoundingBox& box,
                              BoxEligibility rule = BoxEligibility::centroid);

/// map >= threshold, threshold in (0,1).
Mask2D attention_to_guess(const AttentionMap& map, double threshold);

/// Source of 2D guesses for one volume. Implementations are read-only after construction.
class GuessBackend {
public:
    virtual ~GuessBackend() = default;
    virtual BackendKind kind() const = 0;
    /// Guess for axial slice z.
    virtual BackendOutput generate(const Image2D& slice, const std::optional<SlicePrompt>& prompt, int z) const = 0;
};

/// Returns the (corrupted) ground truth with confidence 1.
class OracleBackend final : public GuessBackend {
public:
    OracleBackend(LabelVolume truth, CorruptionSpec spec, uint64_t stream_id = 0);
    BackendKind kind() const override { return BackendKind::oracle; }
    BackendOutput generate(const Image2D& slice, const std::optional<SlicePrompt>& prompt, int z) const override;

private:
    LabelVolume truth_;
    CorruptionSpec spec_;
    uint64_t stream_id_;
};

/// Reads candidates written by an external model into the mask-exchange directory:
///   <root>/<volume_id>/z<k>_cand<j>.png   8-bit, 0 = background, 255 = foreground
///   <root>/<volume_id>/confidences.json   {"<k>": [c0, c1, ...], ...}
class FileBackend final : public GuessBackend {
public:
    FileBackend(std::filesystem::path root, std::string volume_id);
    BackendKind kind() const override { return BackendKind::file; }
    BackendOutput generate(const Image2D& slice, const std::optional<SlicePrompt>& prompt, int z) const override;

private:
    std::filesystem::path dir_;
    std::string volume_id_;
    std::map<int, std::vector<double>> confidences_;
};

/// Reads <root>/<volume_id>/z<k>_attention.png (16-bit gray), min-max normalized.
class AttentionBackend final : public GuessBackend {
public:
    AttentionBackend(std::filesystem::path root, std::string volume_id);
    BackendKind kind() const override { return BackendKind::attention; }
    BackendOutput generate(const Image2D& slice, const std::optional<SlicePrompt>& prompt, int z) const override;

private:
    std::filesystem::path dir_;
    std::string volume_id_;
};

std::filesystem::path candidate_path(const std::filesystem::path& root, const std::string& volume_id, int z, int j);
std::filesystem::path attention_path(const std::filesystem::path& root, const std::string& volume_id, int z);

/// Writes candidates for one slice in the mask-exchange layout, merging confidences.json.
void write_exchange_candidates(const std::filesystem::path& root, const std::string& volume_id, int z,
                               std::span<const GuessCandidate> candidates);

}  // namespace hasa
