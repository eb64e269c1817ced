#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "hazeprop/model_io.hpp"

using namespace hazeprop;
namespace fs = std::filesystem;

namespace {

const char* cli = HAZEPROP_CLI_PATH;

fs::path work_dir() {
    const fs::path dir = fs::temp_directory_path() / "hazeprop-cli-tests";
    fs::create_directories(dir);
    return dir;
}

int run(const std::string& args) {
    const std::string cmd = std::string(cli) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth writes a reproducible dataset") {
    const fs::path out = work_dir() / "ds";
    fs::remove_all(out);
    REQUIRE(run("synth --out " + out.string() +
                " --pairs 2 --seed 7 --crop 24 --source-size 32 --source-count 2") == 0);
    CHECK(fs::exists(out / "manifest.txt"));
    CHECK(fs::exists(out / "obs_0000.png"));
    CHECK(fs::exists(out / "t_0001.png"));

    const std::string obs0 = slurp(out / "obs_0000.png");
    REQUIRE(run("synth --out " + out.string() +
                " --pairs 2 --seed 7 --crop 24 --source-size 32 --source-count 2") == 0);
    CHECK(slurp(out / "obs_0000.png") == obs0);
}

TEST_CASE("usage errors exit with 2") {
    CHECK(run("synth --pairs 0 --out " + (work_dir() / "bad").string()) == 2);
    CHECK(run("definitely-not-a-command") == 2);
    CHECK(run("dehaze --model missing.txt") == 2);  // missing required --input
}

TEST_CASE("train, dehaze, audit round trip") {
    const fs::path ds = work_dir() / "train-ds";
    fs::remove_all(ds);
    REQUIRE(run("synth --out " + ds.string() +
                " --pairs 3 --seed 3 --crop 24 --source-size 32 --source-count 2") == 0);

    const fs::path model_dir = work_dir() / "model";
    fs::remove_all(model_dir);
    REQUIRE(run("train --manifest " + (ds / "manifest.txt").string() + " --out " +
                model_dir.string() +
                " --stages 1 --filters 2 --kernel 3 --control-points 9 --iters 8"
                " --mode joint") == 0);
    const fs::path model = model_dir / "model.txt";
    REQUIRE(fs::exists(model));
    CHECK(fs::exists(model_dir / "fit_report.txt"));
    CHECK_NOTHROW(load_model(model.string()));

    const fs::path restored = work_dir() / "restored";
    fs::remove_all(restored);
    REQUIRE(run("dehaze --model " + model.string() + " --input " +
                (ds / "obs_0000.png").string() + " --out " + restored.string()) == 0);
    CHECK(fs::exists(restored / "radiance.png"));
    CHECK(fs::exists(restored / "transmission.png"));

    // Metrics appear when ground truth is supplied (the transmission target
    // is not the clean image; any same-size reference exercises the path).
    const fs::path restored2 = work_dir() / "restored2";
    fs::remove_all(restored2);
    REQUIRE(run("dehaze --model " + model.string() + " --input " +
                (ds / "obs_0000.png").string() + " --gt " + (ds / "obs_0001.png").string() +
                " --out " + restored2.string()) == 0);
    CHECK(fs::exists(restored2 / "metrics.txt"));

    CHECK(run("audit --model " + model.string() + " --coord-samples 40") == 0);

    SUBCASE("missing and corrupted model files exit with 2") {
        CHECK(run("dehaze --model " + (work_dir() / "missing.txt").string() + " --input " +
                  (ds / "obs_0000.png").string() + " --out " +
                  (work_dir() / "x1").string()) == 2);
        const fs::path bad = work_dir() / "corrupt.txt";
        std::ofstream(bad) << "hazeprop-model v1\nstages nonsense\n";
        CHECK(run("audit --model " + bad.string()) == 2);
    }
}

TEST_CASE("eval prints metrics and honors --out") {
    const fs::path ds = work_dir() / "eval-ds";
    fs::remove_all(ds);
    REQUIRE(run("synth --out " + ds.string() +
                " --pairs 1 --seed 5 --crop 24 --source-size 32 --source-count 1") == 0);
    const fs::path report = work_dir() / "eval.txt";
    REQUIRE(run("eval --a " + (ds / "obs_0000.png").string() + " --b " +
                (ds / "obs_0000.png").string() + " --out " + report.string()) == 0);
    const std::string content = slurp(report);
    CHECK(content.find("psnr 99") != std::string::npos);
    CHECK(content.find("ssim 1") != std::string::npos);
}

TEST_CASE("config files feed flags and reject unknown keys") {
    const fs::path cfg = work_dir() / "cfg.json";
    const fs::path out = work_dir() / "cfg-ds";
    fs::remove_all(out);
    std::ofstream(cfg) << R"({"pairs": 2, "crop": 24, "source-size": 32, "source-count": 1, "seed": 9})";
    REQUIRE(run("synth --config " + cfg.string() + " --out " + out.string()) == 0);
    CHECK(fs::exists(out / "obs_0001.png"));

    // Explicit flags win over config values.
    const fs::path out2 = work_dir() / "cfg-ds2";
    fs::remove_all(out2);
    REQUIRE(run("synth --config " + cfg.string() + " --out " + out2.string() + " --pairs 1") ==
            0);
    CHECK(fs::exists(out2 / "obs_0000.png"));
    CHECK(!fs::exists(out2 / "obs_0001.png"));

    const fs::path bad = work_dir() / "bad.json";
    std::ofstream(bad) << R"({"not-a-real-flag": 1})";
    CHECK(run("synth --config " + bad.string() + " --out " + (work_dir() / "cfg-ds3").string()) ==
          2);
}

}  // TEST_SUITE
