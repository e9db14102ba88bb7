// Copyright 2026 The pimd Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "pimd/detection.hpp"
#include "pimd/image_io.hpp"

namespace fs = std::filesystem;
using namespace pimd;

namespace {

struct TempDir {
    fs::path path;
    TempDir()
    {
        path = fs::temp_directory_path() / ("pimd_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter()
    {
        static int c = 0;
        return c;
    }
};

int run(const std::string& args)
{
    const std::string cmd = std::string(PIMD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

nlohmann::json tiny_config()
{
    return nlohmann::json::parse(R"({
        "seed": 1,
        "manipulator": {"kind": "fixed_conv", "seed": 0},
        "data": {"source": "synthetic", "seed": 2, "train": 8, "test": 4},
        "encoder": {"stem1": 4, "stem2": 4, "width": 4, "blocks": 1},
        "epochs": 1,
        "learning_rate": 0.001
    })");
}

void write_json(const fs::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(2); }

}  // namespace

TEST_CASE("cli train writes artifacts and is bit-reproducible")
{
    TempDir t;
    write_json(t.path / "c.json", tiny_config());
    REQUIRE(run("train " + (t.path / "c.json").string() + " --out " + (t.path / "a").string()) == 0);
    REQUIRE(run("train " + (t.path / "c.json").string() + " --out " + (t.path / "b").string()) == 0);
    for (const char* f : {"templates.pimd", "templates.json", "encoder.pimw", "train_log.jsonl"}) {
        INFO(f);
        REQUIRE(fs::exists(t.path / "a" / f));
        CHECK(slurp(t.path / "a" / f) == slurp(t.path / "b" / f));
    }
    // every log line carries the config hash
    std::ifstream log(t.path / "a" / "train_log.jsonl");
    std::string line;
    const auto hash = nlohmann::json::parse(slurp(t.path / "a" / "summary.json")).at("config_hash").get<std::string>();
    while (std::getline(log, line)) CHECK(nlohmann::json::parse(line).at("config_hash") == hash);
}

TEST_CASE("cli train honours the output root")
{
    TempDir t;
    write_json(t.path / "c.json", tiny_config());
    const std::string cmd = "PIMD_OUTPUT_ROOT=" + t.path.string() + " " + PIMD_CLI_PATH + " train " +
                            (t.path / "c.json").string() + " --out rel >/dev/null 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    CHECK(fs::exists(t.path / "rel" / "templates.pimd"));
}

TEST_CASE("cli config errors exit with 1")
{
    TempDir t;
    auto j = tiny_config();
    j.erase("data");
    write_json(t.path / "missing.json", j);
    CHECK(run("train " + (t.path / "missing.json").string()) == 1);
    const std::string cmd = std::string(PIMD_CLI_PATH) + " train " + (t.path / "missing.json").string() + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    std::string out;
    char buf[256];
    while (fgets(buf, sizeof buf, pipe)) out += buf;
    pclose(pipe);
    CHECK(out.find("data") != std::string::npos);

    auto k = tiny_config();
    k["bogus"] = 1;
    write_json(t.path / "unknown.json", k);
    CHECK(run("train " + (t.path / "unknown.json").string()) == 1);
    std::ofstream(t.path / "broken.json") << "{ not json";
    CHECK(run("train " + (t.path / "broken.json").string()) == 1);
    CHECK(run("frobnicate") == 1);
    CHECK(run("") == 1);
    CHECK(run("ablate no_such_study --config " + (t.path / "unknown.json").string()) == 1);
}

TEST_CASE("cli encrypt and detect")
{
    TempDir t;
    write_json(t.path / "c.json", tiny_config());
    REQUIRE(run("train " + (t.path / "c.json").string() + " --out " + (t.path / "run").string()) == 0);
    REQUIRE(run("generate --count 5 --seed 3 --out " + (t.path / "imgs").string()) == 0);
    const auto set = (t.path / "run" / "templates.pimd").string();

    // strength 0 re-encodes the input bytes exactly
    REQUIRE(run("encrypt --set " + set + " --strength 0 " + (t.path / "imgs").string() + " --out " +
                (t.path / "zero").string()) == 0);
    for (const auto& f : list_images(t.path / "imgs"))
        CHECK(slurp(f) == slurp(t.path / "zero" / f.filename()));

    CHECK(run("encrypt --set " + set + " --index 3 " + (t.path / "imgs").string() + " --out " +
              (t.path / "bad").string()) == 1);

    REQUIRE(run("encrypt --set " + set + " --seed 4 " + (t.path / "imgs").string() + " --out " +
                (t.path / "enc").string()) == 0);
    std::ifstream manifest(t.path / "enc" / "manifest.csv");
    std::string line;
    int rows = -1;
    while (std::getline(manifest, line)) ++rows;
    CHECK(rows == 5);

    REQUIRE(run("manipulate --kind color_warp " + (t.path / "enc").string() + " --out " + (t.path / "fake").string()) ==
            0);
    const auto weights = (t.path / "run" / "encoder.pimw").string();
    const auto stem = (t.path / "report").string();
    REQUIRE(run("detect --set " + set + " --weights " + weights + " --real " + (t.path / "enc").string() +
                " --fake " + (t.path / "fake").string() + " --calibrate-far 0.2 --out " + stem) == 0);
    const auto report = nlohmann::json::parse(slurp(stem + ".json"));
    CHECK(report.contains("ap"));
    std::ifstream csv(stem + ".csv");
    DetectionReport back;
    back.rows = read_report_csv(csv);
    CHECK(back.rows.size() == 10);
    aggregate(back, std::nullopt, 0.2);
    CHECK(*back.ap == report.at("ap").get<double>());
    for (const auto& r : back.rows) CHECK(r.encryption_index >= 0);

    fs::create_directories(t.path / "empty");
    CHECK(run("detect --set " + set + " --weights " + weights + " --input " + (t.path / "empty").string()) != 0);
    CHECK(run("detect --set " + (t.path / "nope.pimd").string() + " --weights " + weights + " --input " +
              (t.path / "enc").string()) == 2);
}
