#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int cli(const std::string& args) {
    const std::string cmd = std::string(MSLIDE_CLI) + " " + args + " >/dev/null 2>&1";
    const int         rc  = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream     in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mslide_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

const char* kTiny = R"([stream]
dim = 6
patches_min = 6
patches_max = 10
tasks = A,B
task.A = a0:4:2,a1:4:2
task.B = b0:4:2,b1:4:2,b2:4:2
[train]
epochs = 2
k = 8
[run]
methods = merge_tcp,merge_naive,zero_shot,seq_finetune,avg_merge,per_task_oracle
folds = 1
eval_k = 8
save_checkpoints = false
)";

} // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 2") {
    CHECK(cli("") == 2);
    CHECK(cli("no-such-command") == 2);
    CHECK(cli("merge --state init") == 2);
    CHECK(cli("--help") == 0);
    const fs::path d = scratch("usage");
    write(d / "bad.ini", "[stream]\nwhat = 1\n");
    CHECK(cli("run-stream --config " + (d / "bad.ini").string() + " --out " + (d / "o").string()) == 2);
}

TEST_CASE("gen, train, merge pipeline") {
    const fs::path d = scratch("pipe");
    write(d / "tiny.ini", kTiny);
    const std::string cfg = " --config " + (d / "tiny.ini").string();
    REQUIRE(cli("gen-stream" + cfg + " --out " + (d / "s").string()) == 0);
    CHECK(fs::exists(d / "s" / "base.msld"));
    for (int t : {0, 1}) {
        const std::string out = (d / ("t" + std::to_string(t) + ".msld")).string();
        REQUIRE(cli("train-task --stream " + (d / "s").string() + " --task " + std::to_string(t) + " --base " +
                    (d / "s" / "base.msld").string() + " --out " + out + cfg) == 0);
    }
    const std::string base = " --base " + (d / "s" / "base.msld").string();
    REQUIRE(cli("merge --state init" + base + " --new " + (d / "t0.msld").string() + " --out " + (d / "m1").string() +
                " --report") == 0);
    REQUIRE(cli("merge --state " + (d / "m1" / "state.msld").string() + base + " --new " + (d / "t1.msld").string() +
                " --out " + (d / "m2").string() + " --report") == 0);
    CHECK(fs::exists(d / "m2" / "merged.msld"));
    const std::string rep = slurp(d / "m2" / "projection.jsonl");
    CHECK(rep.find("\"t\":2") != std::string::npos);
    CHECK(rep.find("residual_inner") != std::string::npos);

    std::string bytes = slurp(d / "t0.msld");
    write(d / "cut.msld", bytes.substr(0, bytes.size() / 2));
    CHECK(cli("merge --state init" + base + " --new " + (d / "cut.msld").string() + " --out " + (d / "m3").string()) ==
          3);
    CHECK(cli("merge --state init" + base + " --new " + (d / "missing.msld").string() + " --out " +
              (d / "m4").string()) == 3);
}

TEST_CASE("run-stream is deterministic and report reads it") {
    const fs::path d = scratch("det");
    write(d / "tiny.ini", kTiny);
    for (const char* o : {"a", "b"}) {
        REQUIRE(cli("run-stream --config " + (d / "tiny.ini").string() + " --out " + (d / o).string()) == 0);
    }
    std::size_t compared = 0;
    for (const auto& e : fs::recursive_directory_iterator(d / "a")) {
        const auto ext = e.path().extension();
        if (!e.is_regular_file() || e.path().filename() == "timings.json" ||
            (ext != ".json" && ext != ".csv" && ext != ".jsonl")) {
            continue;
        }
        const fs::path other = d / "b" / fs::relative(e.path(), d / "a");
        CHECK_MESSAGE(slurp(e.path()) == slurp(other), e.path().string());
        ++compared;
    }
    CHECK(compared > 10);
    CHECK(cli("report " + (d / "a").string()) == 0);
    CHECK(cli("report " + (d / "a").string() + " --json") == 0);
    CHECK(cli("report " + (d / "nothing").string()) == 3);
}

}
