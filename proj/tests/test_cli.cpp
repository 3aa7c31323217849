#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {
const std::string cli = CWREC_CLI_PATH;
const std::string toy = std::string(CWREC_DATA_DIR) + "/toy.tsv";

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch() {
    auto dir = fs::temp_directory_path() / "cwrec_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string base_config(const fs::path& dir, const std::string& out_name) {
    auto cfg = dir / (out_name + ".cfg");
    std::ofstream f(cfg);
    f << "data.path=" << toy << "\n"
      << "data.k_core=2\n"
      << "split.val_frac=0.2\n"
      << "backbone.d=8\n"
      << "loss.kind=CW\n"
      << "sampler.N=20\n"
      << "sampler.M=2\n"
      << "schedule.epochs=8\n"
      << "schedule.batch_size=64\n"
      << "schedule.eval_every=4\n"
      << "output.dir=" << (dir / out_name).string() << "\n";
    return cfg.string();
}

int run(const std::string& args, const fs::path& log) {
    const std::string cmd = cli + " " + args + " >" + log.string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}
}  // namespace

TEST_CASE("run subcommand writes the four artifacts") {
    auto dir = scratch();
    auto cfg = base_config(dir, "a");
    REQUIRE(run("run -c " + cfg, dir / "a.log") == 0);
    for (const char* f : {"config_resolved.txt", "epochs.csv", "report.csv", "checkpoint.txt"})
        CHECK(fs::exists(dir / "a" / f));
    const std::string out = slurp(dir / "a.log");
    CHECK(out.find("ndcg@20=") != std::string::npos);

    // resolved config snapshot holds the effective values
    const std::string snap = slurp(dir / "a" / "config_resolved.txt");
    CHECK(snap.find("loss.kind=CW") != std::string::npos);
    CHECK(snap.find("backbone.d=8") != std::string::npos);

    // epochs.csv has a header plus one row per epoch
    std::istringstream epochs(slurp(dir / "a" / "epochs.csv"));
    std::string line;
    int lines = 0;
    std::getline(epochs, line);
    CHECK(line == "epoch,train_loss,clamp_rate,val_recall@20,val_ndcg@20");
    while (std::getline(epochs, line)) ++lines;
    CHECK(lines == 8);
}

TEST_CASE("identical seeds give byte-identical artifacts") {
    auto dir = scratch();
    REQUIRE(run("run -c " + base_config(dir, "r1"), dir / "r1.log") == 0);
    REQUIRE(run("run -c " + base_config(dir, "r2"), dir / "r2.log") == 0);
    CHECK(slurp(dir / "r1" / "epochs.csv") == slurp(dir / "r2" / "epochs.csv"));
    CHECK(slurp(dir / "r1" / "report.csv") == slurp(dir / "r2" / "report.csv"));
    CHECK(slurp(dir / "r1" / "checkpoint.txt") == slurp(dir / "r2" / "checkpoint.txt"));

    auto d3 = base_config(dir, "r3");
    REQUIRE(run("run -c " + d3 + " -s seed=7", dir / "r3.log") == 0);
    CHECK(slurp(dir / "r1" / "checkpoint.txt") != slurp(dir / "r3" / "checkpoint.txt"));
}

TEST_CASE("overrides beat the config file") {
    auto dir = scratch();
    auto cfg = base_config(dir, "o");
    REQUIRE(run("run -c " + cfg + " -s loss.kind=SL -s schedule.epochs=2", dir / "o.log") == 0);
    const std::string snap = slurp(dir / "o" / "config_resolved.txt");
    CHECK(snap.find("loss.kind=SL") != std::string::npos);
    CHECK(snap.find("schedule.epochs=2") != std::string::npos);
}

TEST_CASE("invalid configuration exits 1 with a parsable tag") {
    auto dir = scratch();
    auto cfg = base_config(dir, "bad");
    CHECK(run("run -c " + cfg + " -s loss.tau=-1", dir / "bad1.log") == 1);
    CHECK(slurp(dir / "bad1.log").find("CONFIG_INVALID") != std::string::npos);

    CHECK(run("run -c " + cfg + " -s no.such.key=1", dir / "bad2.log") == 1);
    CHECK(slurp(dir / "bad2.log").find("CONFIG_INVALID") != std::string::npos);

    // BPR demands exactly one negative
    CHECK(run("run -c " + cfg + " -s loss.kind=BPR", dir / "bad3.log") == 1);
    CHECK(slurp(dir / "bad3.log").find("CONFIG_INVALID") != std::string::npos);

    // k-core too aggressive for the toy data
    CHECK(run("run -c " + cfg + " -s data.k_core=50", dir / "bad4.log") == 1);
    CHECK(slurp(dir / "bad4.log").find("DATA_EMPTY") != std::string::npos);
}

TEST_CASE("eval subcommand reuses a saved checkpoint") {
    auto dir = scratch();
    auto cfg = base_config(dir, "train");
    REQUIRE(run("run -c " + cfg, dir / "t.log") == 0);
    auto ckpt = dir / "train" / "checkpoint.txt";

    auto cfg2 = base_config(dir, "evalout");
    REQUIRE(run("eval -c " + cfg2 + " --checkpoint " + ckpt.string(), dir / "e.log") == 0);
    CHECK(fs::exists(dir / "evalout" / "report.csv"));
    // same split + same checkpoint: the reports agree
    CHECK(slurp(dir / "train" / "report.csv") == slurp(dir / "evalout" / "report.csv"));
}

TEST_CASE("grid subcommand produces a sorted leaderboard") {
    auto dir = scratch();
    auto cfg = base_config(dir, "grid");
    REQUIRE(run("grid -c " + cfg + " -s schedule.epochs=2 --axis loss.tau=0.2,0.5 "
                "--axis loss.beta=0.4,0.8",
                dir / "g.log") == 0);
    auto lb = dir / "grid" / "leaderboard.csv";
    REQUIRE(fs::exists(lb));
    std::istringstream in(slurp(lb));
    std::string line;
    std::getline(in, line);
    CHECK(line == "rank,overrides,val_ndcg@20,test_recall,test_ndcg,status");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 4);
}

TEST_CASE("ablate subcommand runs a named axis") {
    auto dir = scratch();
    auto cfg = base_config(dir, "abl");
    REQUIRE(run("ablate -c " + cfg + " -s schedule.epochs=1 --axis beta", dir / "ab.log") == 0);
    auto csv = dir / "abl" / "ablation.csv";
    REQUIRE(fs::exists(csv));
    std::istringstream in(slurp(csv));
    std::string line;
    std::getline(in, line);
    CHECK(line == "setting,recall@20,ndcg@20");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 5);

    CHECK(run("ablate -c " + cfg + " --axis bogus", dir / "ab2.log") == 1);
}
