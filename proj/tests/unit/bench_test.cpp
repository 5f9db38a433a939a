#include <gtest/gtest.h>

#include <set>

#include "dataset_fixture.hpp"
#include "test_support.hpp"
#include "oracles.hpp"
#include "vcod/bench/eval.hpp"
#include "vcod/bench/manifest.hpp"
#include "vcod/bench/pseudo.hpp"
#include "vcod/bench/report.hpp"
#include "vcod/bench/toydemo.hpp"

using namespace vcod;
using namespace vcod::bench;
using vcod::test::FixtureSequence;
using vcod::test::ScratchDir;

namespace {

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

TEST(ScanDataset, TwoSequenceFixture) {
    ScratchDir dir("scan");
    std::mt19937_64 rng(1);
    test::write_sequence(dir.path(), {"bear", 11, 5}, rng);
    test::write_sequence(dir.path(), {"crab", 7, 3}, rng);
    const auto m = scan_dataset(dir.path());
    ASSERT_EQ(m.sequences.size(), 2u);
    EXPECT_EQ(m.sequences[0].name, "bear");
    EXPECT_EQ(m.sequences[0].frames.size(), 11u);
    EXPECT_EQ(m.sequences[0].gt.size(), 3u);
    EXPECT_EQ(m.sequences[0].gt_stride, 5);
    EXPECT_EQ(m.sequences[1].frames.size(), 7u);
    EXPECT_EQ(m.sequences[1].gt.size(), 3u);
    EXPECT_EQ(m.frame_count(), 18u);
    EXPECT_EQ(m.gt_count(), 6u);
    EXPECT_TRUE(m.issues.empty());
    EXPECT_FALSE(m.sequences[0].flow_dir);
    const auto j = manifest_summary(m);
    EXPECT_EQ(j["sequences"], 2);
    EXPECT_EQ(j["annotated"], 6);
}

TEST(ScanDataset, OrderIndependentAndIdempotent) {
    ScratchDir a("scan_a"), b("scan_b");
    std::mt19937_64 r1(2), r2(2);
    // same content, created in opposite order
    const FixtureSequence s1{"zebra", 6, 5}, s2{"ant", 6, 5};
    test::write_sequence(a.path(), s1, r1);
    test::write_sequence(a.path(), s2, r1);
    std::mt19937_64 r3(3);
    test::write_sequence(b.path(), s2, r3);
    test::write_sequence(b.path(), s1, r3);
    auto strip = [](nlohmann::json j) {
        j.erase("root");
        return j;
    };
    EXPECT_EQ(strip(manifest_summary(scan_dataset(a.path()))), strip(manifest_summary(scan_dataset(b.path()))));
    EXPECT_EQ(manifest_summary(scan_dataset(a.path())), manifest_summary(scan_dataset(a.path())));
}

TEST(ScanDataset, SplitParents) {
    ScratchDir dir("split");
    std::mt19937_64 rng(4);
    test::write_sequence(dir.path() / "TrainDataset_per_sq", {"owl", 6, 5}, rng);
    test::write_sequence(dir.path() / "TestDataset_per_sq", {"moth", 6, 5}, rng);
    const auto m = scan_dataset(dir.path());
    ASSERT_EQ(m.sequences.size(), 2u);
    EXPECT_EQ(m.sequences[0].name, "owl");
    EXPECT_EQ(m.sequences[0].split, Split::train);
    EXPECT_EQ(m.sequences[1].split, Split::test);
}

TEST(ScanDataset, ImgsDirectoryAndJpegFrames) {
    ScratchDir dir("imgs");
    const auto seq = dir.path() / "fish";
    fs::create_directories(seq / "Imgs");
    fs::create_directories(seq / "GT");
    for (int i = 0; i < 3; ++i) std::ofstream(seq / "Imgs" / (test::frame_stem(i) + ".jpg")) << "x";
    write_mask_png(seq / "GT" / "00000.png", MaskImage(4, 4, MaskKind::binary));
    const auto m = scan_dataset(dir.path());
    EXPECT_EQ(m.sequences[0].frames.size(), 3u);
    EXPECT_EQ(m.sequences[0].gt.size(), 1u);
}

TEST(ScanDataset, EmptyRootIsAnError) {
    ScratchDir dir("empty");
    EXPECT_THROW(scan_dataset(dir.path()), ManifestError);
    EXPECT_THROW(scan_dataset(dir.path() / "missing"), ManifestError);
}

TEST(ScanDataset, GtWithoutFrameNamesTheFile) {
    ScratchDir dir("orphan");
    std::mt19937_64 rng(5);
    test::write_sequence(dir.path(), {"frog", 6, 5}, rng);
    write_mask_png(dir.path() / "frog" / "GT" / "00042.png", MaskImage(16, 16, MaskKind::binary));
    EXPECT_THROW(scan_dataset(dir.path()), ManifestError);
    EXPECT_NE(error_of([&] { scan_dataset(dir.path()); }).find("00042.png"), std::string::npos);
}

TEST(ScanDataset, MissingGtDirectory) {
    ScratchDir dir("nogt");
    fs::create_directories(dir.path() / "seq" / "Frame");
    std::ofstream(dir.path() / "seq" / "Frame" / "00000.png") << "x";
    EXPECT_THROW(scan_dataset(dir.path()), ManifestError);
}

TEST(ScanDataset, NonMonotonicNumbering) {
    ScratchDir dir("mono");
    std::mt19937_64 rng(6);
    test::write_sequence(dir.path(), {"snake", 6, 5}, rng);
    // "9.png" sorts after "00005.png" but also after the padded name of 10
    std::ofstream(dir.path() / "snake" / "Frame" / "00010.png") << "x";
    std::ofstream(dir.path() / "snake" / "Frame" / "9.png") << "x";
    EXPECT_THROW(scan_dataset(dir.path()), ManifestError);
}

TEST(ScanDataset, NonNumericStem) {
    ScratchDir dir("stem");
    std::mt19937_64 rng(7);
    test::write_sequence(dir.path(), {"gecko", 6, 5}, rng);
    std::ofstream(dir.path() / "gecko" / "Frame" / "cover.png") << "x";
    EXPECT_THROW(scan_dataset(dir.path()), ManifestError);
}

TEST(ScanDataset, UnevenStrideIsRecorded) {
    ScratchDir dir("stride");
    std::mt19937_64 rng(8);
    test::write_sequence(dir.path(), {"hare", 11, 5}, rng);
    write_mask_png(dir.path() / "hare" / "GT" / "00007.png", MaskImage(16, 16, MaskKind::binary));
    const auto m = scan_dataset(dir.path());
    EXPECT_FALSE(m.sequences[0].gt_stride);
    ASSERT_EQ(m.issues.size(), 1u);
    EXPECT_EQ(m.issues[0].sequence, "hare");
}

// ---------------------------------------------------------------------------
// Pseudo labels

TEST(RunPseudo, ZeroFlowReproducesGtBytes) {
    ScratchDir dir("pseudo0");
    std::mt19937_64 rng(9);
    const FixtureSequence seq{"seal", 11, 5};
    test::write_sequence(dir.path(), seq, rng);
    test::write_constant_flows(dir.path() / "seal", seq, 0, 0);
    const auto summary = run_pseudo(scan_dataset(dir.path()), {});
    // frames 0 and 5 get four targets each; frame 10 is last
    EXPECT_EQ(summary.written_count(), 8u);
    EXPECT_TRUE(summary.skips.empty());
    EXPECT_DOUBLE_EQ(summary.per_sequence.at("seal").valid_ratio, 1.0);
    for (long s : {0L, 5L}) {
        const auto gt_bytes = test::read_bytes(dir.path() / "seal" / "GT" / (test::frame_stem(s) + ".png"));
        for (long n = 1; n <= 4; ++n) {
            const auto p = dir.path() / "seal" / kPseudoDir / pseudo_name(test::frame_stem(s + n), test::frame_stem(s));
            EXPECT_EQ(test::read_bytes(p), gt_bytes) << p;
        }
    }
}

TEST(RunPseudo, ConstantTranslationMatchesShiftOracle) {
    ScratchDir dir("pseudo_shift");
    std::mt19937_64 rng(10);
    const FixtureSequence seq{"lynx", 6, 5, 20, 24};
    const auto gts = test::write_sequence(dir.path(), seq, rng);
    test::write_constant_flows(dir.path() / "lynx", seq, 2, -1);
    RunConfig cfg;
    cfg.threads = 2;
    const auto summary = run_pseudo(scan_dataset(dir.path()), cfg);
    EXPECT_EQ(summary.written_count(), 4u);
    const auto expected = oracle::shift(gts[0].second.values(), 2, -1);
    for (long n = 1; n <= 4; ++n) {
        const auto got = read_mask_png(dir.path() / "lynx" / kPseudoDir / pseudo_name(test::frame_stem(n), "00000"));
        EXPECT_EQ(got.values(), expected);
    }
}

TEST(RunPseudo, MissingFlowIsOneSkip) {
    ScratchDir dir("pseudo_skip");
    std::mt19937_64 rng(11);
    const FixtureSequence seq{"mole", 11, 5};
    test::write_sequence(dir.path(), seq, rng);
    test::write_constant_flows(dir.path() / "mole", seq, 0, 0);
    fs::remove(dir.path() / "mole" / "Flow" / "00007_00005.flo");
    const auto summary = run_pseudo(scan_dataset(dir.path()), {});
    ASSERT_EQ(summary.skips.size(), 1u);
    EXPECT_EQ(summary.skips[0].source, "00005");
    EXPECT_EQ(summary.skips[0].target, "00007");
    EXPECT_EQ(summary.written_count(), 7u);
    EXPECT_EQ(pseudo_summary_json(summary)["skipped"], 1);
}

TEST(RunPseudo, NoFlowDirectorySkipsEverything) {
    ScratchDir dir("pseudo_none");
    std::mt19937_64 rng(12);
    test::write_sequence(dir.path(), {"newt", 6, 5}, rng);
    const auto summary = run_pseudo(scan_dataset(dir.path()), {});
    EXPECT_EQ(summary.written_count(), 0u);
    EXPECT_EQ(summary.skips.size(), 4u);
}

TEST(RunConfigTest, Validation) {
    RunConfig c;
    EXPECT_NO_THROW(c.validate());
    c.threshold = 1.0;
    EXPECT_THROW(c.validate(), InputError);
    c.threshold = 0.5;
    c.consistency.beta = -1;
    EXPECT_THROW(c.validate(), InputError);
    c.consistency.beta = 0.5;
    c.threads = 0;
    EXPECT_THROW(c.validate(), InputError);
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {
struct EvalFixture {
    ScratchDir dir{"eval"};
    fs::path data = dir.path() / "data";
    fs::path preds = dir.path() / "preds";

    EvalFixture() {
        std::mt19937_64 rng(13);
        test::write_sequence(data, {"bat", 11, 5, 24, 24}, rng);
        test::write_sequence(data, {"cod", 6, 5, 24, 24}, rng);
        test::write_gt_as_predictions(data / "bat", preds);
        test::write_gt_as_predictions(data / "cod", preds);
    }
};
}  // namespace

TEST(RunEval, GtAsPrediction) {
    EvalFixture f;
    const auto r = run_eval(scan_dataset(f.data), f.preds, {});
    EXPECT_EQ(r.frames.size(), 5u);
    const auto& o = r.report.overall;
    EXPECT_NEAR(o.s_alpha, 1.0, 1e-9);
    EXPECT_NEAR(o.f_beta_w, 1.0, 1e-12);
    EXPECT_EQ(o.mae, 0.0);
    EXPECT_NEAR(o.m_dice, 255.0 / 256.0, 1e-12);
    EXPECT_NEAR(o.m_iou, 255.0 / 256.0, 1e-12);
    EXPECT_EQ(r.report.per_group.size(), 2u);
    EXPECT_EQ(r.report.per_group.at("bat").frame_count, 3u);
}

TEST(RunEval, AllZeroPrediction) {
    EvalFixture f;
    for (const auto& e : fs::recursive_directory_iterator(f.preds)) {
        if (e.is_regular_file()) write_mask_png(e.path(), MaskImage(24, 24, MaskKind::binary));
    }
    const auto r = run_eval(scan_dataset(f.data), f.preds, {});
    EXPECT_EQ(r.report.overall.f_beta_w, 0.0);
    EXPECT_EQ(r.report.overall.m_dice, 0.0);
}

TEST(RunEval, AnnotatedOnlyTouchesExactlyGtFrames) {
    EvalFixture f;
    // predictions for every frame, annotated or not
    for (const char* seq : {"bat", "cod"}) {
        for (const auto& e : fs::directory_iterator(f.data / seq / "Frame")) {
            const auto dst = f.preds / seq / e.path().filename();
            if (!fs::exists(dst)) write_mask_png(dst, MaskImage(24, 24, MaskKind::binary));
        }
    }
    const auto m = scan_dataset(f.data);
    const auto r = run_eval(m, f.preds, {});
    std::set<fs::path> expected;
    for (const auto& s : m.sequences)
        for (const auto& g : s.gt) {
            expected.insert(g.path);
            expected.insert(f.preds / s.name / (g.stem + ".png"));
        }
    EXPECT_EQ(std::set<fs::path>(r.access_log.begin(), r.access_log.end()), expected);
    EXPECT_EQ(r.access_log.size(), expected.size());
}

TEST(RunEval, MissingPredictionsAreListed) {
    EvalFixture f;
    fs::remove(f.preds / "bat" / "00005.png");
    fs::remove(f.preds / "cod" / "00000.png");
    const auto msg = error_of([&] { run_eval(scan_dataset(f.data), f.preds, {}); });
    EXPECT_NE(msg.find("bat/00005"), std::string::npos) << msg;
    EXPECT_NE(msg.find("cod/00000"), std::string::npos) << msg;
    EXPECT_THROW(run_eval(scan_dataset(f.data), f.preds, {}), EvaluationError);
}

TEST(RunEval, AmbiguousPredictionIsAnError) {
    EvalFixture f;
    std::ofstream(f.preds / "bat" / "00005.jpg") << "x";
    EXPECT_THROW(run_eval(scan_dataset(f.data), f.preds, {}), EvaluationError);
}

TEST(RunEval, ThreadsDoNotChangeResults) {
    EvalFixture f;
    for (const auto& e : fs::recursive_directory_iterator(f.preds)) {
        if (!e.is_regular_file()) continue;
        std::mt19937_64 rng(std::hash<std::string>{}(e.path().string()));
        write_mask_png(e.path(), MaskImage(test::random_array(rng, {24, 24}, 0.0, 1.0), MaskKind::probability));
    }
    const auto m = scan_dataset(f.data);
    RunConfig c1, c4;
    c4.threads = 4;
    const auto a = run_eval(m, f.preds, c1), b = run_eval(m, f.preds, c4);
    EXPECT_EQ(csv_table(a.report), csv_table(b.report));
    EXPECT_EQ(a.access_log, b.access_log);
}

TEST(RunEval, PseudoModeAddsPseudoFrames) {
    EvalFixture f;
    test::write_constant_flows(f.data / "cod", {"cod", 6, 5, 24, 24}, 0, 0);
    auto m = scan_dataset(f.data);
    run_pseudo(m, {});
    // pseudo frames of cod need predictions: use the pseudo masks themselves
    for (long n = 1; n <= 4; ++n) {
        fs::copy_file(f.data / "cod" / kPseudoDir / pseudo_name(test::frame_stem(n), "00000"),
                      f.preds / "cod" / (test::frame_stem(n) + ".png"));
    }
    RunConfig cfg;
    cfg.mode = EvalMode::with_pseudo;
    const auto r = run_eval(m, f.preds, cfg);
    EXPECT_EQ(r.frames.size(), 9u);
    EXPECT_EQ(std::count_if(r.frames.begin(), r.frames.end(), [](const EvaluatedFrame& e) { return e.pseudo; }), 4);
    EXPECT_NEAR(r.report.per_group.at("cod").s_alpha, 1.0, 1e-9);
}

TEST(RunEval, PredictionsAreMinMaxNormalised) {
    ScratchDir dir("norm");
    const auto p = dir.path() / "p.png";
    write_png_gray(p, {1, 3, {50, 100, 150}});
    const auto m = bench::detail::normalized_prediction(p);
    EXPECT_EQ(m.values()[0], 0.0);
    EXPECT_EQ(m.values()[1], 0.5);
    EXPECT_EQ(m.values()[2], 1.0);
    write_png_gray(p, {1, 2, {51, 51}});
    EXPECT_DOUBLE_EQ(bench::detail::normalized_prediction(p).values()[0], 0.2);
}

// ---------------------------------------------------------------------------
// Reports

TEST(Report, MarkdownRowFromTableValues) {
    const auto r = report_from_values({0.656, 0.357, 0.785, 0.021, 0.397, 0.310});
    EXPECT_EQ(markdown_row("SLT-Net", r), "| SLT-Net | 0.656 | 0.357 | 0.785 | 0.021 | 0.397 | 0.310 |");
}

TEST(Report, MarkdownHeaderOrder) {
    EXPECT_EQ(markdown_header("Model"), "| Model | S_α ↑ | F_β^w ↑ | E_φ ↑ | M ↓ | mDic | mIoU |\n|---|---|---|---|---|---|---|\n");
}

TEST(Report, CsvLayoutAndPurity) {
    GroupedReport g;
    g.per_group["a"] = report_from_values({0.5, 0.25, 0.125, 0.0625, 1.0 / 3.0, 2.0 / 3.0}, 2);
    g.per_group["b"] = report_from_values({1, 1, 1, 0, 1, 1}, 1);
    g.overall = report_from_values({0.123456, 0, 0, 0, 0, 0}, 3);
    const auto csv = csv_table(g);
    EXPECT_EQ(csv,
              "sequence,frames,s_alpha,f_beta_w,e_phi,mae,m_dice,m_iou\n"
              "a,2,0.5000,0.2500,0.1250,0.0625,0.3333,0.6667\n"
              "b,1,1.0000,1.0000,1.0000,0.0000,1.0000,1.0000\n"
              "Overall,3,0.1235,0.0000,0.0000,0.0000,0.0000,0.0000\n");
    EXPECT_EQ(csv_table(g), csv);
    EXPECT_EQ(markdown_table(g), markdown_table(g));
    EXPECT_NE(markdown_table(g).find("| Overall | 0.123 |"), std::string::npos);
}

TEST(Report, FixedNeverPrintsNegativeZero) {
    EXPECT_EQ(fixed(-1e-9, 3), "0.000");
    EXPECT_EQ(fixed(0.0005, 3), "0.001");
}

// ---------------------------------------------------------------------------
// Toy demo

TEST(ToyDemo, ZeroSteps) {
    ToyDemoConfig cfg;
    cfg.steps = 0;
    const auto r = run_toydemo(cfg);
    ASSERT_EQ(r.trace.size(), 1u);
    EXPECT_EQ(r.ratio(), 1.0);
}

TEST(ToyDemo, SameSeedSameBytes) {
    ToyDemoConfig cfg;
    cfg.steps = 5;
    const auto a = run_toydemo(cfg), b = run_toydemo(cfg);
    EXPECT_EQ(toydemo_trace_csv(a), toydemo_trace_csv(b));
    EXPECT_EQ(toydemo_summary(cfg, a).dump(), toydemo_summary(cfg, b).dump());
    cfg.seed = 1;
    EXPECT_NE(toydemo_trace_csv(run_toydemo(cfg)), toydemo_trace_csv(a));
}
