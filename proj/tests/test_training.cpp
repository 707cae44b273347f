#include <gtest/gtest.h>

#include <filesystem>

#include "dnmt/config.hpp"
#include "dnmt/training.hpp"
#include "test_util.hpp"

using namespace dnmt;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "dnmt_train_test" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

TrainConfig quick_cfg(std::size_t steps, std::uint64_t seed = 5) {
    TrainConfig cfg;
    cfg.max_steps = steps;
    cfg.checkpoint_every = steps;
    cfg.warmup_steps = 100;
    cfg.lr_scale = 1.0;
    cfg.batch_tokens = 200;
    cfg.seed = seed;
    cfg.label_smoothing = 0.0;
    return cfg;
}

ModelConfig toy_model_cfg(const testutil::ToyTask& task, Variant variant = Variant::baseline) {
    ModelConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 16;
    cfg.d_ff = 32;
    cfg.n_heads = 2;
    cfg.vocab_size = task.vocab.size();
    cfg.variant = variant;
    cfg.max_positions = 64;
    return cfg;
}

} // namespace

TEST(NoamSchedule, CrossoverIdentityAtWarmup) {
    double at_warmup = noam_lr(4000, 4000, 512, 1.0);
    double expect = 1.0 * std::pow(512.0, -0.5) * std::pow(4000.0, -0.5);
    EXPECT_DOUBLE_EQ(at_warmup, expect);
}

TEST(NoamSchedule, PaperConfigurationValue) {
    // d=512, warmup=4000, scale=1, step=4000
    EXPECT_NEAR(noam_lr(4000, 4000, 512, 1.0), 6.98771243e-4, 1e-10);
    EXPECT_NEAR(noam_lr(4000, 4000, 512, 1.0), 6.988e-4, 5e-7);
}

TEST(NoamSchedule, MonotoneUpThenDown) {
    double prev = 0;
    for (std::size_t s = 1; s <= 400; ++s) {
        double lr = noam_lr(s, 400, 64, 2.0);
        EXPECT_GE(lr, prev);
        prev = lr;
    }
    for (std::size_t s = 401; s <= 1200; ++s) {
        double lr = noam_lr(s, 400, 64, 2.0);
        EXPECT_LE(lr, prev);
        prev = lr;
    }
}

TEST(NoamSchedule, StepZeroRejected) {
    EXPECT_THROW(noam_lr(0, 400, 64, 1.0), Error);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    auto p = std::make_shared<Parameter<float>>("p", Tensor<float>(Shape{3}, {1, 2, 3}));
    AdamOptimizer<float> opt({p});
    opt.step(0.1);
    EXPECT_EQ(p->value.values(), (std::vector<float>{1, 2, 3}));
}

TEST(Adam, HandEvaluatedFirstStep) {
    // g=1, betas=(0.9,0.999), eps=1e-8: m_hat=1, v_hat=1, so the update is
    // lr/(1+1e-8) — the parameter decreases by almost exactly lr.
    auto p = std::make_shared<Parameter<double>>("p", Tensor<double>(Shape{1}, {0.5}));
    p->grad.at(0) = 1.0;
    AdamOptimizer<double> opt({p});
    opt.step(0.01);
    EXPECT_NEAR(p->value.at(0), 0.5 - 0.01 / (1.0 + 1e-8), 1e-12);
    // Gradient zeroed afterwards.
    EXPECT_DOUBLE_EQ(p->grad.at(0), 0.0);
}

TEST(Adam, NanGradientAbortsWithParameterName) {
    auto p = std::make_shared<Parameter<float>>("layer.weight", Tensor<float>(Shape{1}, {0.5f}));
    p->grad.at(0) = std::numeric_limits<float>::quiet_NaN();
    AdamOptimizer<float> opt({p});
    try {
        opt.step(0.01);
        FAIL() << "expected error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("layer.weight"), std::string::npos);
    }
}

TEST(Train, OverfitsToyCorpus) {
    testutil::ToyTask task = testutil::make_toy_task(30, 11);
    Model<float> model(toy_model_cfg(task), 1);
    TrainResult res = train_model(model, task.samples(), {}, quick_cfg(1600), fresh_dir("overfit"),
                                  task.vocab.hash());
    EXPECT_LT(res.final_train_loss, 0.1);
}

TEST(Train, SameSeedRunsAreBitIdentical) {
    testutil::ToyTask task = testutil::make_toy_task(12, 13);
    auto run = [&](const std::string& tag) {
        Model<float> model(toy_model_cfg(task), 2);
        train_model(model, task.samples(), {}, quick_cfg(40), fresh_dir(tag), task.vocab.hash());
        std::vector<float> flat;
        for (const auto& p : model.params().ordered())
            flat.insert(flat.end(), p->value.values().begin(), p->value.values().end());
        return flat;
    };
    EXPECT_EQ(run("det-a"), run("det-b"));
}

TEST(Train, ResumeContinuesBitIdentically) {
    testutil::ToyTask task = testutil::make_toy_task(12, 17);
    auto dir_full = fresh_dir("resume-full");
    auto dir_part = fresh_dir("resume-part");

    // Uninterrupted run: 60 steps.
    Model<float> full(toy_model_cfg(task), 3);
    TrainConfig cfg = quick_cfg(60);
    cfg.checkpoint_every = 30;
    TrainResult full_res = train_model(full, task.samples(), task.samples(), cfg, dir_full,
                                       task.vocab.hash());

    // Interrupted run: 30 steps, then resume from the checkpoint.
    Model<float> part(toy_model_cfg(task), 3);
    TrainConfig cfg30 = cfg;
    cfg30.max_steps = 30;
    train_model(part, task.samples(), task.samples(), cfg30, dir_part, task.vocab.hash());

    auto loaded = ckpt::load_model<float>(dir_part / "ckpt-30.dnmt");
    ASSERT_TRUE(loaded.train_state.has_value());
    TrainConfig cfg_resume = cfg;
    TrainResult resumed = train_model(loaded.model, task.samples(), task.samples(), cfg_resume,
                                      fresh_dir("resume-cont"), task.vocab.hash(),
                                      &*loaded.train_state);

    for (std::size_t i = 0; i < full.params().ordered().size(); ++i) {
        EXPECT_EQ(full.params().ordered()[i]->value.values(),
                  loaded.model.params().ordered()[i]->value.values())
            << full.params().ordered()[i]->name;
    }
    // The loss curve continues exactly: resumed log holds steps 31..60.
    ASSERT_EQ(full_res.log.size(), 60u);
    ASSERT_EQ(resumed.log.size(), 30u);
    for (std::size_t i = 0; i < 30; ++i) {
        EXPECT_EQ(full_res.log[30 + i].loss, resumed.log[i].loss);
    }
}

TEST(Train, VariantKindMismatchFailsBeforeStepOne) {
    testutil::ToyTask task = testutil::make_toy_task(6, 19);
    ModelConfig cfg = toy_model_cfg(task, Variant::multi_in_par);
    Model<float> model(cfg, 4);
    EXPECT_THROW(train_model(model, task.samples(SampleKind::sent), {}, quick_cfg(5),
                             fresh_dir("mismatch"), task.vocab.hash()),
                 Error);
}

TEST(Train, BatchTokensSmallerThanSampleRejected) {
    testutil::ToyTask task = testutil::make_toy_task(6, 23);
    Model<float> model(toy_model_cfg(task), 5);
    TrainConfig cfg = quick_cfg(5);
    cfg.batch_tokens = 2;
    EXPECT_THROW(train_model(model, task.samples(), {}, cfg, fresh_dir("tiny-batch"),
                             task.vocab.hash()),
                 Error);
}

TEST(Train, LogWrittenAsJsonl) {
    testutil::ToyTask task = testutil::make_toy_task(6, 29);
    Model<float> model(toy_model_cfg(task), 6);
    auto dir = fresh_dir("log");
    train_model(model, task.samples(), task.samples(), quick_cfg(10), dir, task.vocab.hash());
    auto records = read_jsonl(dir / "train_log.jsonl");
    ASSERT_EQ(records.size(), 10u);
    EXPECT_TRUE(records[0].contains("step"));
    EXPECT_TRUE(records[0].contains("lr"));
    EXPECT_TRUE(records[0].contains("loss"));
    EXPECT_TRUE(records[9].contains("val_loss"));
}

TEST(WarmStart, SaturatedContextModelMatchesBaselineValidationLoss) {
    testutil::ToyTask task = testutil::make_toy_task(16, 31);
    Model<float> baseline(toy_model_cfg(task), 7);
    train_model(baseline, task.samples(), {}, quick_cfg(80), fresh_dir("ws-base"),
                task.vocab.hash());

    double base_loss = validation_loss(baseline, task.samples());
    for (Variant v : {Variant::multi_out, Variant::multi_in_seq, Variant::multi_in_par,
                      Variant::wordemb_in_par}) {
        Model<float> ctx_model(toy_model_cfg(task, v), 8);
        warm_start_from_baseline(ctx_model, baseline);
        ASSERT_TRUE(ctx_model.saturate_context_path());
        double ctx_loss = validation_loss(ctx_model, task.samples(SampleKind::two_to_one));
        EXPECT_NEAR(ctx_loss, base_loss, 1e-3 * std::max(1.0, std::abs(base_loss)))
            << variant_name(v);
        EXPECT_LE(ctx_loss, base_loss + 1e-3);
    }
}

TEST(WarmStart, FreshParameterListForMultiInPar) {
    testutil::ToyTask task = testutil::make_toy_task(6, 37);
    Model<float> baseline(toy_model_cfg(task), 9);
    Model<float> ctx_model(toy_model_cfg(task, Variant::multi_in_par), 10);
    WarmStartReport report = warm_start_from_baseline(ctx_model, baseline);
    EXPECT_FALSE(report.fresh.empty());
    for (const std::string& name : report.fresh) {
        bool is_ctx_attn = name.find(".ctxattn.") != std::string::npos;
        bool is_gate = name.find(".gate.") != std::string::npos;
        EXPECT_TRUE(is_ctx_attn || is_gate) << name;
    }
    // The context encoder is a copy of the baseline encoder, not fresh.
    EXPECT_FALSE(report.copied_to_context.empty());
    for (const std::string& name : report.copied_to_context) {
        EXPECT_EQ(name.rfind("ctxenc.", 0), 0u) << name;
    }
}

TEST(WarmStart, ConfigMismatchListsOffendingFields) {
    testutil::ToyTask task = testutil::make_toy_task(6, 41);
    Model<float> baseline(toy_model_cfg(task), 11);
    ModelConfig other = toy_model_cfg(task, Variant::multi_in_par);
    other.d_model = 32;
    other.n_heads = 4;
    Model<float> ctx_model(other, 12);
    try {
        warm_start_from_baseline(ctx_model, baseline);
        FAIL() << "expected error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("d_model"), std::string::npos);
    }
}

TEST(KvConfig, ParsesPairsCommentsAndOverrides) {
    auto dir = fresh_dir("kv");
    atomic_write_text(dir / "c.cfg",
                      "# a comment\nmax_steps = 123\nlr_scale=0.5\n\nseed = 9 # trailing\n");
    KvConfig kv = KvConfig::load(dir / "c.cfg");
    TrainConfig cfg = train_config_from_kv(kv);
    EXPECT_EQ(cfg.max_steps, 123u);
    EXPECT_DOUBLE_EQ(cfg.lr_scale, 0.5);
    EXPECT_EQ(cfg.seed, 9u);
    kv.set("max_steps", "7"); // command-line style override wins
    EXPECT_EQ(train_config_from_kv(kv).max_steps, 7u);

    atomic_write_text(dir / "bad.cfg", "not-a-pair\n");
    EXPECT_THROW(KvConfig::load(dir / "bad.cfg"), Error);
}
