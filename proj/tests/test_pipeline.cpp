#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "hasa/backends.hpp"
#include "hasa/phantom.hpp"
#include "hasa/pipeline.hpp"
#include "oracles.hpp"

using namespace hasa;
namespace fs = std::filesystem;

namespace {

std::pair<Volume3D, LabelVolume> small_phantom(uint64_t seed = 1) {
    PhantomSpec s;
    s.shape = {24, 24, 12};
    s.structure = {{12.0, 11.0, 6.0}, {6.0, 5.0, 4.0}};
    s.seed = seed;
    return generate_phantom(s);
}

// Reference trilinear sample with clamp-to-edge, written from scratch.
double ref_trilinear(const Volume3D& v, std::array<double, 3> p) {
    const int n[3] = {v.shape().nx, v.shape().ny, v.shape().nz};
    int lo[3], hi[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
        const double c = std::min(std::max(p[a], 0.0), n[a] - 1.0);
        lo[a] = static_cast<int>(std::floor(c));
        hi[a] = std::min(lo[a] + 1, n[a] - 1);
        f[a] = c - lo[a];
    }
    double acc = 0.0;
    for (int corner = 0; corner < 8; ++corner) {
        double w = 1.0;
        int q[3];
        for (int a = 0; a < 3; ++a) {
            const bool up = (corner >> a) & 1;
            q[a] = up ? hi[a] : lo[a];
            w *= up ? f[a] : 1.0 - f[a];
        }
        acc += w * v.at(q[0], q[1], q[2]);
    }
    return acc;
}

}  // namespace

TEST(Policy, NamesAndChannelCounts) {
    for (auto p : {ChannelPolicy::guess_sdm, ChannelPolicy::guess_raw, ChannelPolicy::t2, ChannelPolicy::blank,
                   ChannelPolicy::t1_only}) {
        EXPECT_EQ(channel_policy_from_string(to_string(p)), p);
        EXPECT_EQ(channel_count(p), p == ChannelPolicy::t1_only ? 1 : 2);
    }
    EXPECT_THROW(channel_policy_from_string("sdm"), std::invalid_argument);
}

TEST(GuessVolume, IdentityPathReproducesTruth) {
    const auto [t1, label] = small_phantom();
    const OracleBackend backend(label, CorruptionSpec{});
    const auto g = build_guess_volume(t1, label, backend, JitterSpec{3, 0}, SdmSpec{});
    EXPECT_EQ(g.raw.values(), label.values());
    EXPECT_EQ(g.raw.shape(), label.shape());
    for (int z = 0; z < label.shape().nz; ++z)
        EXPECT_EQ(g.prompts[static_cast<std::size_t>(z)].has_value(), count_foreground(extract_slice(label, z)) > 0);
    for (float v : g.sdm.values()) {
        EXPECT_GE(v, 0.f);
        EXPECT_LE(v, 1.f);
    }
}

TEST(GuessVolume, DilatedGuessIsSupersetWithinRadius) {
    const auto [t1, label] = small_phantom(2);
    CorruptionSpec c;
    c.dilation_radius = 2.0;
    const OracleBackend backend(label, c);
    const auto g = build_guess_volume(t1, label, backend, JitterSpec{0, 0}, SdmSpec{});
    for (int z = 0; z < label.shape().nz; ++z) {
        const Mask2D truth = extract_slice(label, z), guess = extract_slice(g.raw, z);
        const auto d2 = oracle::squared_distance(truth.values(), truth.nx(), truth.ny());
        for (std::size_t i = 0; i < truth.size(); ++i) {
            if (truth[i]) {
                EXPECT_EQ(guess[i], 1);
            }
            if (guess[i]) {
                EXPECT_LE(d2[i], 4.0);
            }
        }
    }
    EXPECT_GT(g.raw.foreground_count(), label.foreground_count());
}

TEST(GuessVolume, ContourFilterRemovesBlobNoise) {
    const auto [t1, label] = small_phantom(3);
    CorruptionSpec c;
    c.blob_noise_count = 4;
    c.blob_radius = 1.5;
    c.seed = 9;
    const OracleBackend backend(label, c);
    GuessFilters on, off;
    off.contour_filter = false;
    const auto a = build_guess_volume(t1, label, backend, JitterSpec{0, 0}, SdmSpec{}, on);
    const auto b = build_guess_volume(t1, label, backend, JitterSpec{0, 0}, SdmSpec{}, off);
    EXPECT_LE(a.raw.foreground_count(), b.raw.foreground_count());
    for (int z = 0; z < label.shape().nz; ++z) {
        const Mask2D s = extract_slice(a.raw, z);
        EXPECT_LE(oracle::components8(s.values(), s.nx(), s.ny()).size(), 1u);
    }
}

TEST(GuessVolume, ShapeMismatchRejected) {
    const auto [t1, label] = small_phantom();
    const OracleBackend backend(label, CorruptionSpec{});
    const LabelVolume other({24, 24, 11}, {});
    EXPECT_THROW(build_guess_volume(t1, other, backend, JitterSpec{}, SdmSpec{}), std::invalid_argument);
}

TEST(Assemble, PoliciesProduceExpectedChannels) {
    const auto [t1, label] = small_phantom();
    const Volume3D guess = to_volume(label);
    const auto s = assemble_sample(t1, &guess, label, ChannelPolicy::guess_raw, "a");
    ASSERT_EQ(s.channels.size(), 2u);
    EXPECT_EQ(s.channels[0].values(), normalize_intensity(t1).values());
    EXPECT_EQ(s.channels[1].values(), guess.values());
    const auto blank = assemble_sample(t1, nullptr, label, ChannelPolicy::blank);
    for (float v : blank.channels[1].values()) EXPECT_EQ(v, 0.f);
    EXPECT_EQ(assemble_sample(t1, nullptr, label, ChannelPolicy::t1_only).channels.size(), 1u);
    EXPECT_THROW(assemble_sample(t1, nullptr, label, ChannelPolicy::guess_sdm), std::invalid_argument);
    Volume3D bad = guess;
    bad[0] = 2.f;
    EXPECT_THROW(assemble_sample(t1, &bad, label, ChannelPolicy::guess_sdm), std::invalid_argument);
    Volume3D t2 = t1;
    for (auto& v : t2.values()) v = 3.f * v + 7.f;
    const auto st2 = assemble_sample(t1, &t2, label, ChannelPolicy::t2);
    const auto [lo, hi] = st2.channels[1].intensity_range();
    EXPECT_FLOAT_EQ(lo, 0.f);
    EXPECT_FLOAT_EQ(hi, 1.f);
}

TEST(Augment, IdentityParametersReturnTheInput) {
    const auto [t1, label] = small_phantom();
    const Volume3D guess = to_volume(label);
    const auto s = assemble_sample(t1, &guess, label, ChannelPolicy::guess_raw, "a");
    AugmentParams id;
    id.affine.center = {11.5, 11.5, 5.5};
    const auto out = apply_augment(s, id, "aug1");
    EXPECT_EQ(out.label.values(), s.label.values());
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < out.channels[c].size(); ++i)
            EXPECT_NEAR(out.channels[c][i], s.channels[c][i], 1e-6);
    EXPECT_EQ(out.augmentation_tag, "aug1");
}

TEST(Augment, DeterministicPerSubjectAndCopy) {
    const auto [t1, label] = small_phantom();
    const Volume3D guess = to_volume(label);
    const auto s = assemble_sample(t1, &guess, label, ChannelPolicy::guess_sdm, "subj");
    AugmentSpec spec;
    spec.seed = 5;
    const auto a = augment(s, spec, 1), b = augment(s, spec, 1), c = augment(s, spec, 2);
    EXPECT_EQ(a.channels[0].values(), b.channels[0].values());
    EXPECT_EQ(a.label.values(), b.label.values());
    EXPECT_NE(a.channels[0].values(), c.channels[0].values());
}

TEST(Augment, MatchesIndependentResampling) {
    const auto [t1, label] = small_phantom(4);
    Volume3D guess = to_volume(label);
    const auto s = assemble_sample(t1, &guess, label, ChannelPolicy::guess_raw, "ref");
    AugmentSpec spec;
    spec.seed = 3;
    spec.rotate_max_deg = 10;
    const AugmentParams p = draw_augment_params(spec, label.shape(), "ref", 1);
    const auto out = apply_augment(s, p, "x");
    std::size_t label_mismatch = 0;
    for (int z = 0; z < 12; ++z)
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 24; ++x) {
                const auto src = p.affine.source(x, y, z);
                ASSERT_NEAR(out.channels[1].at(x, y, z), ref_trilinear(s.channels[1], src), 1e-5);
                const int q[3] = {std::clamp(static_cast<int>(std::lround(src[0])), 0, 23),
                                  std::clamp(static_cast<int>(std::lround(src[1])), 0, 23),
                                  std::clamp(static_cast<int>(std::lround(src[2])), 0, 11)};
                label_mismatch += out.label.at(x, y, z) != label.at(q[0], q[1], q[2]);
            }
    EXPECT_EQ(label_mismatch, 0u);

    // gamma without noise on channel 0
    AugmentParams g = p;
    g.noise_std = 0.0;
    const auto out_g = apply_augment(s, g, "g");
    for (int z = 0; z < 12; z += 3)
        for (int y = 0; y < 24; y += 5)
            for (int x = 0; x < 24; x += 5) {
                const double v = std::clamp(ref_trilinear(s.channels[0], p.affine.source(x, y, z)), 0.0, 1.0);
                EXPECT_NEAR(out_g.channels[0].at(x, y, z), std::pow(v, p.gamma), 1e-5);
            }
}

TEST(Augment, DrawnParametersStayInRange) {
    AugmentSpec spec;
    for (int c = 1; c < 50; ++c) {
        const auto p = draw_augment_params(spec, {48, 48, 48}, "s", c);
        EXPECT_GE(p.gamma, 0.7);
        EXPECT_LE(p.gamma, 1.5);
        EXPECT_GE(p.noise_std, 0.0);
        EXPECT_LE(p.noise_std, 0.05);
        for (double t : p.affine.shift) EXPECT_LE(std::abs(t), 5.0);
        // determinant = product of scales since rotations have unit determinant
        const auto& m = p.affine.linear;
        const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                           m[2] * (m[3] * m[7] - m[4] * m[6]);
        EXPECT_GE(det, std::pow(0.95, 3) - 1e-9);
        EXPECT_LE(det, std::pow(1.05, 3) + 1e-9);
    }
}

TEST(Augment, ExpandGivesOriginalPlusCopies) {
    const auto [t1, label] = small_phantom();
    std::vector<TrainingSample> in{assemble_sample(t1, nullptr, label, ChannelPolicy::t1_only, "a"),
                                   assemble_sample(t1, nullptr, label, ChannelPolicy::t1_only, "b")};
    AugmentSpec spec;
    const auto out = expand_augmented(in, spec);
    ASSERT_EQ(out.size(), 8u);
    EXPECT_EQ(out[0].augmentation_tag, "orig");
    EXPECT_EQ(out[1].augmentation_tag, "aug1");
    EXPECT_EQ(out[4].subject_id, "b");
    spec.copies = 0;
    EXPECT_THROW(spec.validate(), std::invalid_argument);
}

TEST(Manifest, SplitSizesDisjointAndDeterministic) {
    std::vector<SubjectFiles> subjects;
    for (int i = 0; i < 10; ++i) subjects.push_back({"s" + std::to_string(i), "", "", "", "", ""});
    const Manifest m = build_manifest(subjects, {0.6, 0.2, 0.2}, 7);
    EXPECT_EQ(m.train.size(), 6u);
    EXPECT_EQ(m.val.size(), 2u);
    EXPECT_EQ(m.test.size(), 2u);
    std::set<std::string> all(m.train.begin(), m.train.end());
    all.insert(m.val.begin(), m.val.end());
    all.insert(m.test.begin(), m.test.end());
    EXPECT_EQ(all.size(), 10u);
    auto reversed = subjects;
    std::reverse(reversed.begin(), reversed.end());
    const Manifest again = build_manifest(reversed, {0.6, 0.2, 0.2}, 7);
    EXPECT_EQ(again.train, m.train);
    EXPECT_EQ(again.test, m.test);
    EXPECT_THROW(build_manifest({}, {0.6, 0.2, 0.2}, 0), std::invalid_argument);
    EXPECT_THROW(build_manifest(subjects, {0.6, 0.2, 0.3}, 0), std::invalid_argument);
    subjects.push_back(subjects.front());
    EXPECT_THROW(build_manifest(subjects, {0.6, 0.2, 0.2}, 0), std::invalid_argument);
}

TEST(Manifest, JsonRoundTrip) {
    std::vector<SubjectFiles> subjects;
    for (int i = 0; i < 5; ++i) subjects.push_back({"p" + std::to_string(i), "t1", "t2", "lab", "g", "gs"});
    const Manifest m = build_manifest(subjects, {0.6, 0.2, 0.2}, 1, AugmentSpec{}, {ChannelPolicy::guess_sdm});
    const fs::path p = fs::temp_directory_path() / "hasa_test_manifest.json";
    save_manifest(m, p);
    const Manifest back = load_manifest(p);
    EXPECT_EQ(back.train, m.train);
    EXPECT_EQ(back.val, m.val);
    EXPECT_EQ(back.test, m.test);
    EXPECT_EQ(back.subject("p3").guess_sdm, "gs");
    EXPECT_EQ(back.policies, m.policies);
    EXPECT_THROW(back.subject("zz"), std::out_of_range);
}
