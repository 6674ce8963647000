#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "hasa/losses.hpp"
#include "hasa/metrics.hpp"
#include "hasa/phantom.hpp"
#include "hasa/pipeline.hpp"
#include "hasa/sdm.hpp"
#include "hasa/student.hpp"
#include "oracles.hpp"

using namespace hasa;
namespace fs = std::filesystem;

namespace {

struct Case8 {
    std::vector<float> prob;
    std::vector<uint8_t> label;
    std::vector<float> dist;
};

Case8 random_case(unsigned seed, std::size_t n = 512) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<float> u(0.02f, 0.98f), d(-1.f, 1.f);
    Case8 c;
    for (std::size_t i = 0; i < n; ++i) {
        c.prob.push_back(u(gen));
        c.label.push_back((gen() % 3) == 0);
        c.dist.push_back(d(gen));
    }
    return c;
}

// 16^3 subject with a single ellipsoid, no distractors.
TrainingSample tiny_sample(uint64_t seed, ChannelPolicy policy = ChannelPolicy::guess_sdm, int n = 16) {
    PhantomSpec s;
    s.shape = {n, n, n};
    s.structure = {{n / 2.0, n / 2.0, n / 2.0}, {n / 4.0, n / 3.5, n / 4.5}};
    s.contrast_gap = 0.3;
    s.seed = seed;
    const auto [t1, label] = generate_phantom(s);
    const Volume3D guess = sdm_volume(label);
    return assemble_sample(t1, policy == ChannelPolicy::t1_only ? nullptr : &guess, label, policy,
                           "tiny" + std::to_string(seed));
}

StudentConfig tiny_config(int epochs) {
    StudentConfig c = StudentConfig::desk_preset();
    c.patch_size = 16;
    c.epochs = epochs;
    c.seed = 3;
    return c;
}

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("hasa_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(Losses, DiceLossAnalyticValues) {
    const std::vector<float> p{1, 1, 0, 0};
    const std::vector<uint8_t> g{1, 1, 0, 0};
    EXPECT_NEAR(dice_loss(p, g), 0.0, 1e-9);
    const std::vector<uint8_t> none{0, 0, 1, 1};
    EXPECT_NEAR(dice_loss(p, none), 1.0 - 1e-5 / (4 + 1e-5), 1e-12);
}

TEST(Losses, DiceGradientMatchesFiniteDifferences) {
    for (unsigned s = 0; s < 3; ++s) {
        const Case8 c = random_case(s);
        std::vector<double> grad(c.prob.size());
        dice_loss_grad(c.prob, c.label, grad);
        auto f = [&](const std::vector<float>& p) { return dice_loss(p, c.label); };
        for (std::size_t i = 0; i < c.prob.size(); i += 37) {
            const double fd = oracle::central_difference(f, c.prob, i, 1e-3);
            EXPECT_NEAR(grad[i], fd, 1e-3 * std::abs(fd) + 1e-9) << "voxel " << i;
        }
    }
}

TEST(Losses, BoundaryLossValueAndGradient) {
    const Case8 c = random_case(7);
    double ref = 0.0;
    for (std::size_t i = 0; i < c.prob.size(); ++i) ref += c.prob[i] * -c.dist[i];
    ref /= static_cast<double>(c.prob.size());
    EXPECT_NEAR(boundary_loss(c.prob, c.dist), ref, 1e-9);
    std::vector<double> grad(c.prob.size());
    boundary_loss_grad(c.dist, grad);
    auto f = [&](const std::vector<float>& p) { return boundary_loss(p, c.dist); };
    for (std::size_t i = 0; i < c.prob.size(); i += 41) {
        const double fd = oracle::central_difference(f, c.prob, i, 1e-3);
        EXPECT_NEAR(grad[i], fd, 1e-3 * std::abs(fd) + 1e-9);
    }
}

TEST(DynamicLoss, WorkedExamples) {
    EXPECT_DOUBLE_EQ(dynamic_loss(0.5, 0.1).value, 0.30);
    const double s = oracle::logistic(0.5);
    EXPECT_NEAR(dynamic_loss(1.0, 0.0).value, s, 1e-12);
    EXPECT_NEAR(dynamic_loss(0.0, 1.0).value, 1.0 - oracle::logistic(-0.5), 1e-12);
    EXPECT_NEAR(s, 0.6225, 5e-5);
}

TEST(DynamicLoss, WeightsSumToOneAndDiagonalIsIdentity) {
    for (double a = 0.0; a <= 1.0; a += 0.05)
        for (double b = 0.0; b <= 1.0; b += 0.05) {
            const auto v = dynamic_loss(a, b);
            EXPECT_NEAR(v.weight_dice + v.weight_boundary, 1.0, 1e-12);
            EXPECT_NEAR(v.value, v.weight_dice * a + v.weight_boundary * b, 1e-12);
        }
    for (double x = -1.0; x <= 1.0; x += 0.01) EXPECT_NEAR(dynamic_loss(x, x).value, x, 1e-12);
}

TEST(DynamicLoss, PartialDerivativesMatchFiniteDifferences) {
    for (double a : {0.1, 0.5, 0.93})
        for (double b : {-0.4, 0.2, 0.7}) {
            const auto v = dynamic_loss(a, b);
            const double h = 1e-6;
            const double da = (dynamic_loss(a + h, b).value - dynamic_loss(a - h, b).value) / (2 * h);
            const double db = (dynamic_loss(a, b + h).value - dynamic_loss(a, b - h).value) / (2 * h);
            EXPECT_NEAR(v.d_loss1, da, 1e-3 * std::abs(da) + 1e-9);
            EXPECT_NEAR(v.d_loss2, db, 1e-3 * std::abs(db) + 1e-9);
        }
}

TEST(DynamicLoss, HardSwitchSelectsOneTerm) {
    DynamicLossConfig hard;
    hard.hard_switch = true;
    EXPECT_DOUBLE_EQ(dynamic_loss(0.8, 0.1, hard).value, 0.8);
    EXPECT_DOUBLE_EQ(dynamic_loss(0.2, 0.1, hard).value, 0.1);
}

TEST(DynamicLoss, FullGradientOn8CubeMatchesFiniteDifferences) {
    for (unsigned s = 0; s < 3; ++s) {
        const Case8 c = random_case(100 + s);
        const auto ev = evaluate_dynamic_loss(c.prob, c.label, c.dist);
        auto f = [&](const std::vector<float>& p) {
            return evaluate_dynamic_loss(p, c.label, c.dist, {}, false).total;
        };
        double worst = 0.0;
        for (std::size_t i = 0; i < c.prob.size(); i += 13) {
            const double fd = oracle::central_difference(f, c.prob, i, 1e-3);
            worst = std::max(worst, std::abs(ev.grad[i] - fd) / std::abs(fd));
        }
        EXPECT_LT(worst, 1e-3) << "case " << s;
    }
}

TEST(Architecture, ParameterCounts) {
    const auto def = StudentConfig::default_preset();
    const std::size_t n = unet_parameter_count(def.architecture());
    EXPECT_GT(n, 1'500'000u);
    EXPECT_LT(n, 6'000'000u);
    const auto desk = StudentConfig::desk_preset();
    EXPECT_LT(unet_parameter_count(desk.architecture()), 200'000u);

    UNetArchitecture one = def.architecture(), two = def.architecture();
    one.in_channels = 1;
    two.in_channels = 2;
    UNet3D a(one, 0), b(two, 0);
    EXPECT_EQ(a.parameter_count(), unet_parameter_count(one));
    // only the first convolution sees the extra channel: 27 weights per output filter
    EXPECT_EQ(b.parameter_count() - a.parameter_count(), b.first_conv_parameter_count() - a.first_conv_parameter_count());
    EXPECT_EQ(b.first_conv_parameter_count() - a.first_conv_parameter_count(),
              static_cast<std::size_t>(27 * def.base_filters));
}

TEST(Architecture, BudgetAndPresetValidation) {
    StudentConfig c = StudentConfig::desk_preset();
    c.base_filters = 32;  // far over the 100k budget
    EXPECT_THROW(build_student(c), std::invalid_argument);
    c = StudentConfig::desk_preset();
    c.patch_size = 18;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    EXPECT_THROW(StudentConfig::from_preset("huge"), std::invalid_argument);
}

TEST(UNet, GradientMatchesFiniteDifferences) {
    UNetArchitecture arch{2, 1, 2, 0.01f};
    UNet3D net(arch, 5);
    std::mt19937 gen(1);
    std::normal_distribution<float> n01(0.f, 1.f);
    Tensor x(2, 4, 4, 4);
    for (auto& v : x.data) v = n01(gen);
    std::vector<float> w(64);
    for (auto& v : w) v = n01(gen);
    auto loss = [&](UNet3D& m) {
        const Tensor y = m.forward(x);
        double s = 0.0;
        for (std::size_t i = 0; i < y.data.size(); ++i) s += w[i] * y.data[i];
        return s;
    };
    net.zero_grad();
    loss(net);
    Tensor dy(1, 4, 4, 4);
    dy.data = w;
    net.backward(dy);
    const std::vector<float> analytic(net.gradients().begin(), net.gradients().end());
    const std::vector<float> base(net.parameters().begin(), net.parameters().end());

    // Leaky ReLU and max pooling are piecewise linear; a parameter whose step
    // crosses a kink shows unequal one-sided slopes and is skipped.
    auto f = [&](std::size_t i, float v) {
        std::vector<float> p = base;
        p[i] = v;
        std::copy(p.begin(), p.end(), net.parameters().begin());
        return loss(net);
    };
    const double h = 1e-2;
    double dot = 0.0, na = 0.0, nf = 0.0;
    std::size_t compared = 0, kinks = 0, bad = 0;
    for (std::size_t i = 0; i < base.size(); i += 3) {
        const float up = static_cast<float>(base[i] + h), down = static_cast<float>(base[i] - h);
        const double f0 = f(i, base[i]), fu = f(i, up), fd_ = f(i, down);
        const double fwd = (fu - f0) / (static_cast<double>(up) - base[i]);
        const double bwd = (f0 - fd_) / (base[i] - static_cast<double>(down));
        const double central = (fu - fd_) / (static_cast<double>(up) - down);
        if (std::abs(fwd - bwd) > 1e-2 * std::max(1.0, std::abs(central))) {
            ++kinks;
            continue;
        }
        dot += central * analytic[i];
        na += analytic[i] * static_cast<double>(analytic[i]);
        nf += central * central;
        bad += std::abs(central - analytic[i]) > 1e-2 * std::max(1.0, std::abs(central));
        ++compared;
    }
    EXPECT_GT(compared, 4 * kinks);
    EXPECT_EQ(bad, 0u) << "of " << compared;
    EXPECT_GT(dot / std::sqrt(na * nf), 0.9999);
}

TEST(UNet, ForwardShapeAndDivisibility) {
    UNet3D net(UNetArchitecture{1, 2, 2}, 0);
    const Tensor y = net.forward(Tensor(1, 8, 4, 12));
    EXPECT_EQ(y.c, 1);
    EXPECT_EQ(y.d, 8);
    EXPECT_EQ(y.h, 4);
    EXPECT_EQ(y.w, 12);
    EXPECT_THROW(net.forward(Tensor(1, 6, 4, 4)), std::invalid_argument);
    EXPECT_THROW(net.forward(Tensor(2, 8, 8, 8)), std::invalid_argument);
}

TEST(Training, OverfitsASinglePhantom) {
    const TrainingSample s = tiny_sample(1);
    StudentConfig c = tiny_config(200);
    UNet3D net = build_student(c);
    double best_train = 0.0;
    TrainOptions opt;
    opt.on_epoch = [&](const EpochStats& e) { best_train = std::max(best_train, e.train_dice); };
    train(net, {s}, {}, c, opt);
    EXPECT_GE(best_train, 0.95);
    const auto pred = predict(net, s.channels);
    EXPECT_GE(dice(pred.mask, s.label), 0.95);
}

TEST(Training, SameSeedSameResult) {
    const std::vector<TrainingSample> tr{tiny_sample(1), tiny_sample(2)};
    const std::vector<TrainingSample> va{tiny_sample(3)};
    const StudentConfig c = tiny_config(3);
    UNet3D a = build_student(c), b = build_student(c);
    const auto ha = train(a, tr, va, c);
    const auto hb = train(b, tr, va, c);
    EXPECT_LT(std::abs(ha.epochs.back().val_dice - hb.epochs.back().val_dice), 1e-3);
    EXPECT_EQ(std::vector<float>(a.parameters().begin(), a.parameters().end()),
              std::vector<float>(b.parameters().begin(), b.parameters().end()));
}

TEST(Training, RejectsMismatchedInputs) {
    const StudentConfig c = tiny_config(1);
    UNet3D net = build_student(c);
    EXPECT_THROW(train(net, {}, {}, c), std::invalid_argument);
    EXPECT_THROW(train(net, {tiny_sample(1, ChannelPolicy::t1_only)}, {}, c), std::invalid_argument);
}

TEST(Predict, WholeVolumePatchEqualsDirectForward) {
    const TrainingSample s = tiny_sample(4);
    UNet3D net = build_student(tiny_config(1));
    const auto pred = predict(net, s.channels, 16);
    Tensor x(2, 16, 16, 16);
    for (int c = 0; c < 2; ++c) std::copy(s.channels[c].values().begin(), s.channels[c].values().end(), x.channel(c));
    const Tensor y = net.forward(x);
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        EXPECT_NEAR(pred.prob[i], oracle::logistic(y.data[i]), 1e-5);
        EXPECT_EQ(pred.mask[i], pred.prob[i] >= 0.5f ? 1 : 0);
    }
    const auto whole = predict(net, s.channels, 0);
    EXPECT_EQ(whole.prob.values(), pred.prob.values());
}

TEST(Predict, SlidingWindowsCoverOddShapes) {
    UNet3D net = build_student(tiny_config(1));
    std::vector<Volume3D> ch{Volume3D({21, 19, 17}, {}, 0.f), Volume3D({21, 19, 17}, {}, 0.f)};
    const auto a = predict(net, ch, 8, 4);
    const auto b = predict(net, ch, 8, 4);
    EXPECT_EQ(a.prob.shape(), ch[0].shape());
    EXPECT_EQ(a.prob.values(), b.prob.values());
    for (std::size_t i = 0; i < a.prob.size(); ++i) {
        ASSERT_TRUE(std::isfinite(a.prob[i]));
        EXPECT_EQ(a.mask[i], a.prob[i] >= 0.5f ? 1 : 0);
    }
    EXPECT_THROW(predict(net, {ch[0]}), std::invalid_argument);
}

TEST(Checkpoint, RoundTripAndResume) {
    const auto dir = temp_dir("ckpt");
    const std::vector<TrainingSample> tr{tiny_sample(1), tiny_sample(2)};
    const std::vector<TrainingSample> va{tiny_sample(3)};
    StudentConfig c = tiny_config(2);
    UNet3D net = build_student(c);
    TrainOptions opt;
    opt.checkpoint_path = dir / "s.ckpt";
    opt.tag = "guess_sdm";
    train(net, tr, va, c, opt);

    const Checkpoint ck = load_checkpoint(dir / "s.ckpt");
    EXPECT_EQ(ck.epochs_done, 2);
    EXPECT_EQ(ck.tag, "guess_sdm");
    UNet3D back = restore_student(ck);
    EXPECT_EQ(predict(back, va[0].channels).prob.values(), predict(net, va[0].channels).prob.values());

    // continuing to 4 epochs matches a fresh 4-epoch run
    StudentConfig c4 = c;
    c4.epochs = 4;
    TrainOptions resume;
    resume.resume_from = dir / "s.ckpt";
    UNet3D cont = build_student(c4);
    const auto hc = train(cont, tr, va, c4, resume);
    UNet3D fresh = build_student(c4);
    const auto hf = train(fresh, tr, va, c4);
    ASSERT_EQ(hc.epochs.size(), 4u);
    EXPECT_DOUBLE_EQ(hc.epochs.back().val_dice, hf.epochs.back().val_dice);

    StudentConfig other = c4;
    other.learning_rate = 5e-4;
    UNet3D net2 = build_student(other);
    try {
        train(net2, tr, va, other, resume);
        FAIL() << "expected resume to be refused";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("checkpoint config differs"), std::string::npos);
    }

    std::ofstream(dir / "bad.ckpt") << "garbage";
    EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), std::runtime_error);
}

TEST(Config, JsonRoundTripKeepsPresetDefaults) {
    StudentConfig c = StudentConfig::desk_preset();
    c.epochs = 7;
    c.loss.temperature = 0.5;
    const nlohmann::json j = c;
    const StudentConfig back = j.get<StudentConfig>();
    EXPECT_EQ(back.epochs, 7);
    EXPECT_EQ(back.base_filters, c.base_filters);
    EXPECT_DOUBLE_EQ(back.loss.temperature, 0.5);
    const StudentConfig partial = nlohmann::json{{"preset", "desk"}, {"epochs", 2}}.get<StudentConfig>();
    EXPECT_EQ(partial.depth, StudentConfig::desk_preset().depth);
    EXPECT_EQ(partial.epochs, 2);
}
