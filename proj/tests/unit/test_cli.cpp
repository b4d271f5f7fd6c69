#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "snn/cli/commands.hpp"
#include "snn/core/error.hpp"

using namespace snn;
using namespace snn::cli;
namespace fs = std::filesystem;

namespace {

const fs::path kSmoke = fs::path(SNN_CONFIG_DIR) / "smoke.cfg";

fs::path temp_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("snn_test_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream is(p);
    std::vector<std::string> out;
    for (std::string line; std::getline(is, line);) out.push_back(line);
    return out;
}

std::vector<std::string> split(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, sep);) out.push_back(item);
    return out;
}

int run_cli(std::vector<std::string> args, std::string* err = nullptr) {
    args.insert(args.begin(), "snn");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    ::testing::internal::CaptureStdout();
    ::testing::internal::CaptureStderr();
    const int code = run(static_cast<int>(argv.size()), argv.data());
    ::testing::internal::GetCapturedStdout();
    const std::string e = ::testing::internal::GetCapturedStderr();
    if (err) *err = e;
    return code;
}

/// One short training run shared by the eval and analyze tests.
class TrainedRun : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = temp_dir("run");
        TrainArgs a;
        a.config = kSmoke;
        a.overrides.out = dir_;
        a.overrides.epochs = 2;
        std::ostringstream log;
        state_ = cmd_train(a, log);
    }
    static void TearDownTestSuite() { fs::remove_all(dir_); }

    static inline fs::path dir_;
    static inline train::TrainState state_;
};

}  // namespace

TEST(Synth, HashIsRepeatableAndSeedSensitive) {
    const auto root = temp_dir("synth");
    SynthArgs a;
    a.spec.classes = 2;
    a.spec.per_class = 3;
    a.spec.height = a.spec.width = 16;
    a.spec.events_per_sample = 64;
    std::ostringstream log;
    a.out = root / "a";
    const auto h1 = cmd_synth(a, log);
    a.out = root / "b";
    const auto h2 = cmd_synth(a, log);
    a.out = root / "c";
    a.spec.seed += 1;
    const auto h3 = cmd_synth(a, log);
    EXPECT_EQ(h1, h2);
    EXPECT_NE(h1, h3);
    EXPECT_EQ(hash_dataset(root / "a"), h1);
    EXPECT_EQ(h1.size(), 16u);
    fs::remove_all(root);
}

TEST_F(TrainedRun, WritesRunArtifacts) {
    EXPECT_TRUE(fs::exists(dir_ / "resolved.cfg"));
    EXPECT_TRUE(fs::exists(dir_ / "checkpoints" / "best" / "params.snnp"));
    EXPECT_TRUE(fs::exists(dir_ / "checkpoints" / "last" / "state.json"));
    EXPECT_EQ(read_lines(dir_ / "metrics.csv").size(), 5u);
    EXPECT_EQ(state_.history.size(), 2u);
}

TEST_F(TrainedRun, EvalReproducesBestAccuracy) {
    EvalArgs e;
    e.run = dir_;
    e.out = temp_dir("eval");
    std::ostringstream log;
    const auto r = cmd_eval(e, log);
    EXPECT_EQ(r.accuracy, state_.best_accuracy);
    const auto rows = read_lines(e.out / "eval.csv");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].rfind("split,samples,loss,accuracy,total_spikes", 0), 0u);
    EXPECT_EQ(read_lines(e.out / "spike_counts.csv").size(), r.predictions.size() + 1);
    fs::remove_all(e.out);
}

TEST_F(TrainedRun, EvalThroughDispatcher) {
    const auto out = temp_dir("eval_cli");
    EXPECT_EQ(run_cli({"eval", "--run", dir_.string(), "--checkpoint", "last", "--out", out.string()}), kExitOk);
    EXPECT_TRUE(fs::exists(out / "eval.csv"));
    fs::remove_all(out);
}

TEST_F(TrainedRun, HeatmapsAreValidPgm) {
    AnalyzeArgs a;
    a.run = dir_;
    a.outputs = {"sfr-heatmap"};
    a.out = temp_dir("heat");
    std::ostringstream log;
    cmd_analyze(a, log);
    const auto rows = read_lines(a.out / "sfr_block1_lif.csv");
    ASSERT_GE(rows.size(), 2u);
    std::size_t pgms = 0;
    for (const auto& entry : fs::directory_iterator(a.out)) {
        if (entry.path().extension() != ".pgm") continue;
        ++pgms;
        std::ifstream is(entry.path(), std::ios::binary);
        std::string magic;
        std::size_t w = 0, h = 0, maxval = 0;
        is >> magic >> w >> h >> maxval;
        is.get();
        EXPECT_EQ(magic, "P5");
        EXPECT_EQ(maxval, 255u);
        std::string pixels((std::istreambuf_iterator<char>(is)), {});
        EXPECT_EQ(pixels.size(), w * h);
    }
    EXPECT_EQ(pgms, rows.size() - 1);
    fs::remove_all(a.out);
}

TEST_F(TrainedRun, ScaleImportanceRowsSumToOne) {
    AnalyzeArgs a;
    a.run = dir_;
    a.outputs = {"scale-importance"};
    a.out = temp_dir("importance");
    std::ostringstream log;
    cmd_analyze(a, log);
    const auto rows = read_lines(a.out / "scale_importance.csv");
    ASSERT_GE(rows.size(), 2u);
    EXPECT_EQ(rows[0], "module,class,scale,kernel,importance,samples");
    std::map<std::string, double> sums;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto f = split(rows[i]);
        ASSERT_EQ(f.size(), 6u);
        sums[f[0] + "/" + f[1]] += std::stod(f[4]);
    }
    for (const auto& [key, s] : sums) EXPECT_NEAR(s, 1.0, 1e-9) << key;
    EXPECT_TRUE(fs::exists(a.out / "sma_alpha_block1_sma.csv"));
    fs::remove_all(a.out);
}

TEST_F(TrainedRun, AzoReportAndSpikeCounts) {
    AnalyzeArgs a;
    a.run = dir_;
    a.outputs = {"azo-report", "spike-counts"};
    a.out = temp_dir("azo");
    std::ostringstream log;
    cmd_analyze(a, log);
    EXPECT_EQ(read_lines(a.out / "azo_block1_sma.csv").at(0), "sample,t,channels");
    EXPECT_TRUE(fs::exists(a.out / "spike_counts.csv"));
    fs::remove_all(a.out);
}

TEST_F(TrainedRun, UnknownLayerIsConfigError) {
    AnalyzeArgs a;
    a.run = dir_;
    a.outputs = {"sfr-heatmap"};
    a.layer = "block9.lif";
    a.out = temp_dir("badlayer");
    std::ostringstream log;
    try {
        cmd_analyze(a, log);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("block0.lif"), std::string::npos) << e.what();
    }
    a.layer.clear();
    a.outputs = {"histogram"};
    EXPECT_THROW(cmd_analyze(a, log), ConfigError);
    fs::remove_all(a.out);
}

TEST(Pgm, GrayMapping) {
    EXPECT_EQ(to_gray({0.0, 0.0}, 0.0), (std::vector<std::uint8_t>{0, 0}));
    EXPECT_EQ(to_gray({0.0, 0.5, 1.0, 2.0}, 1.0), (std::vector<std::uint8_t>{0, 128, 255, 255}));
    const auto p = temp_dir("pgm") / "x.pgm";
    write_pgm(p, 2, 3, to_gray(std::vector<double>(6, 0.0), 0.0));
    std::ifstream is(p, std::ios::binary);
    const std::string all((std::istreambuf_iterator<char>(is)), {});
    EXPECT_EQ(all, std::string("P5\n3 2\n255\n") + std::string(6, '\0'));
    EXPECT_THROW(write_pgm(p, 2, 2, {0}), std::invalid_argument);
    fs::remove_all(p.parent_path());
}

TEST(Ablate, CellsChangeParameterCounts) {
    const auto out = temp_dir("ablate");
    std::ostringstream log;
    AblateArgs a;
    a.config = kSmoke;
    a.overrides.out = out;
    a.overrides.epochs = 1;

    a.axis = AblateAxis::Scales;
    a.grid = {"2", "3"};
    auto rows = cmd_ablate(a, log);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_GT(rows[1].params, rows[0].params);

    a.axis = AblateAxis::Placement;
    a.grid = {"T1", "T3"};
    rows = cmd_ablate(a, log);
    EXPECT_GT(rows[1].params, rows[0].params);
    EXPECT_EQ(read_lines(out / "ablate_placement.csv").size(), 3u);

    a.axis = AblateAxis::RtrRcr;
    a.grid = {"1x100", "2x2"};
    rows = cmd_ablate(a, log);
    EXPECT_NE(rows[0].note.find("azo no-op"), std::string::npos) << rows[0].note;
    EXPECT_EQ(rows[1].note, "");

    a.axis = AblateAxis::CrTr;
    a.grid = {"3x2"};
    rows = cmd_ablate(a, log);
    EXPECT_EQ(rows[0].status, "skipped");
    fs::remove_all(out);
}

TEST(Ablate, ParseAxis) {
    EXPECT_EQ(parse_axis("cr-tr"), AblateAxis::CrTr);
    EXPECT_THROW(parse_axis("depth"), ConfigError);
}

TEST(Dispatcher, ExitCodes) {
    std::string err;
    EXPECT_EQ(run_cli({"train", "--config", "/nonexistent/path/run.cfg"}, &err), kExitIo);
    EXPECT_NE(err.find("/nonexistent/path/run.cfg"), std::string::npos) << err;

    const auto dir = temp_dir("codes");
    {
        std::ofstream os(dir / "bad.cfg");
        os << "[model]\nplacement = T7\n";
    }
    EXPECT_EQ(run_cli({"train", "--config", (dir / "bad.cfg").string()}, &err), kExitConfig);
    EXPECT_NE(err.find("T7"), std::string::npos) << err;

    EXPECT_EQ(run_cli({"eval", "--run", (dir / "missing").string()}, &err), kExitIo);
    EXPECT_EQ(run_cli({"ablate", "--axis", "depth", "--grid", "1", "--config", kSmoke.string()}), kExitConfig);
    EXPECT_NE(run_cli({"frobnicate"}), kExitOk);
    fs::remove_all(dir);
}

TEST(Checkpoint, ResolveMissing) { EXPECT_THROW(resolve_checkpoint("best", "/nonexistent"), IoError); }
