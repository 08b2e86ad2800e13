#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "helpers.hpp"

#include "hmore/io.hpp"
#include "hmore/report.hpp"

using namespace hmore;
namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "hmore_test_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

// Runs the CLI with stdout to `out` (relative to the work dir); returns the exit code.
int run(const std::string& args, const std::string& out = "stdout.txt") {
    const std::string cmd = "cd '" + work_dir().string() + "' && '" + HMORE_CLI + "' " + args + " > '" + out +
                            "' 2> stderr.txt";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Json output(const std::string& name = "stdout.txt") { return Json::parse(read_text(work_dir() / name)); }

void ensure_scene() {
    if (fs::exists(work_dir() / "scene" / "gt_world.flo")) return;
    REQUIRE(run(std::string("synth --spec '") + HMORE_DATA + "/reference_scene.json' --out-dir scene") == 0);
}

}  // namespace

TEST_CASE("synth writes the scene files") {
    ensure_scene();
    for (const char* f : {"frame_t.pgm", "frame_t1.pgm", "mask_t.pgm", "keypoints.json", "gt_world.flo",
                          "gt_local.flo", "gt_subject.flo", "boundary.json"}) {
        CHECK(fs::exists(work_dir() / "scene" / f));
    }
    const auto world = read_flo(work_dir() / "scene" / "gt_world.flo");
    const auto local = read_flo(work_dir() / "scene" / "gt_local.flo");
    const auto subject = read_flo(work_dir() / "scene" / "gt_subject.flo");
    for (std::size_t i = 0; i < world.size(); ++i) {
        CHECK(static_cast<float>(local[i].dx) + static_cast<float>(subject[i].dx) == static_cast<float>(world[i].dx));
        CHECK(static_cast<float>(local[i].dy) + static_cast<float>(subject[i].dy) == static_cast<float>(world[i].dy));
    }
}

TEST_CASE("metrics of a flow against itself") {
    ensure_scene();
    CHECK(run("metrics --pred scene/gt_world.flo --gt scene/gt_world.flo") == 0);
    const auto r = output();
    CHECK(r["command"] == "metrics");
    CHECK(r["metrics"]["mean_epe"] == 0.0);
    CHECK(r["metrics"]["max_epe"] == 0.0);
    CHECK(r["inputs"].size() == 2);
    CHECK(run("metrics --pred scene/gt_world.flo --gt scene/gt_world.flo --mask scene/mask_t.pgm") == 0);
    CHECK(output()["masked"] == true);
}

TEST_CASE("decompose then recombine") {
    ensure_scene();
    for (const char* method : {"head", "mask-mean", "homography"}) {
        CAPTURE(method);
        REQUIRE(run(std::string("decompose --world scene/gt_world.flo --mask scene/mask_t.pgm --keypoints "
                                "scene/keypoints.json --method ") +
                    method + " --out-local l.flo --out-subject s.flo --out-world w.flo") == 0);
        const auto l = read_flo(work_dir() / "l.flo");
        const auto s = read_flo(work_dir() / "s.flo");
        const auto w = read_flo(work_dir() / "w.flo");
        bool exact = true;
        for (std::size_t i = 0; i < w.size(); ++i) {
            exact = exact && static_cast<float>(l[i].dx) + static_cast<float>(s[i].dx) == static_cast<float>(w[i].dx);
            exact = exact && static_cast<float>(l[i].dy) + static_cast<float>(s[i].dy) == static_cast<float>(w[i].dy);
        }
        CHECK(exact);
        const auto r = output();
        CHECK(r["reconstruction_error"] == 0.0);
        CHECK(r["world_snap_max"].get<double>() <= 1e-5);
    }
}

TEST_CASE("eval reports the objective breakdown") {
    ensure_scene();
    const std::string common = "--flow scene/gt_world.flo --keypoints scene/keypoints.json --mask scene/mask_t.pgm "
                               "--boundary scene/boundary.json";
    REQUIRE(run("eval " + common, "a.json") == 0);
    const auto a = output("a.json");
    CHECK(a["metrics"]["f"].get<double>() <= 0.02);
    CHECK(a["metrics"]["g"].get<double>() <= 1.5);
    REQUIRE(run("eval " + common, "b.json") == 0);
    auto b = output("b.json");
    auto a2 = a;
    a2.erase("wall_time_s");
    b.erase("wall_time_s");
    CHECK(a2 == b);

    REQUIRE(run("eval --local --align head --flow scene/gt_local.flo --keypoints scene/keypoints.json "
                "--mask scene/mask_t.pgm --boundary scene/boundary.json") == 0);
    CHECK(output()["metrics"]["f"].get<double>() <= 0.05);

    write_text(work_dir() / "hp.json", "{\"alpha\": 0}");
    REQUIRE(run("eval " + common + " --config hp.json") == 0);
    const auto c = output();
    CHECK(c["metrics"]["total"] == c["metrics"]["f"]);
}

TEST_CASE("chamfer, edges and render") {
    write_text(work_dir() / "s.json", "{\"points\": [[0, 0]]}");
    write_text(work_dir() / "e.json", "{\"points\": [[3, 4]]}");
    REQUIRE(run("chamfer --s s.json --e e.json --exact") == 0);
    CHECK(output()["exact"] == 5.0);
    REQUIRE(run("chamfer --s s.json --e e.json --patch --scales 8,16") == 0);
    CHECK(output()["patch"]["per_scale"].size() == 2);

    ensure_scene();
    REQUIRE(run("edges --flow scene/gt_world.flo --auto --overlay edges.ppm") == 0);
    const auto r = output();
    CHECK(r["edges"].size() > 0);
    CHECK(fs::exists(work_dir() / "edges.ppm"));

    REQUIRE(run("render --flow scene/gt_world.flo --out flow.ppm") == 0);
    const auto img = read_file(work_dir() / "flow.ppm");
    CHECK(std::string(img.begin(), img.begin() + 2) == "P6");
}

TEST_CASE("exit codes") {
    ensure_scene();
    CHECK(run("metrics --pred missing.flo --gt scene/gt_world.flo") == 2);
    CHECK(run("metrics --pred scene/mask_t.pgm --gt scene/gt_world.flo") == 1);
    CHECK(run("metrics --pred scene/gt_world.flo") == 1);
    CHECK(run("frobnicate") == 1);
    CHECK(run("") == 1);
    write_text(work_dir() / "bad_kp.json", "{\"frames\": []");
    CHECK(run("eval --flow scene/gt_world.flo --keypoints bad_kp.json --mask scene/mask_t.pgm "
              "--boundary scene/boundary.json") == 1);
    CHECK(run("render --flow scene/gt_world.flo --out no/such/dir/x.ppm") == 2);
    CHECK(run("metrics --pred scene/gt_world.flo --gt scene/gt_world.flo", "out.json") == 0);
    CHECK(read_text(work_dir() / "stderr.txt").empty());
}

TEST_CASE("synth, solve and metrics pipeline") {
    ensure_scene();
    REQUIRE(run("solve --init zero --keypoints scene/keypoints.json --mask scene/mask_t.pgm "
                "--boundary scene/boundary.json --out solved.flo",
                "solve.json") == 0);
    const auto s = output("solve.json");
    CHECK(s["trace"].size() > 0);
    REQUIRE(run("metrics --pred solved.flo --gt scene/gt_world.flo --mask scene/mask_t.pgm", "m1.json") == 0);
    FlowMap zero(128, 128);
    write_flo(work_dir() / "zero.flo", zero);
    REQUIRE(run("metrics --pred zero.flo --gt scene/gt_world.flo --mask scene/mask_t.pgm", "m0.json") == 0);
    const double solved = output("m1.json")["metrics"]["mean_epe"].get<double>();
    const double base = output("m0.json")["metrics"]["mean_epe"].get<double>();
    MESSAGE("masked EPE " << base << " -> " << solved);
    CHECK(solved <= 0.5 * base);
}
