#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <gtest/gtest.h>

#include "gfpc/commands.hpp"

namespace {

struct CliRun {
    int status = -1;
    std::string out;
    std::string err;
};

std::filesystem::path scratch_dir() {
    const auto dir = std::filesystem::temp_directory_path() / ("gfpc_cli_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CliRun invoke(const std::string& args, const std::string& env = "") {
    const auto dir = scratch_dir();
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd =
        env + " '" + std::string(GFPC_CLI_PATH) + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
}

std::string cases(const std::string& name) { return std::string(GFPC_CASES_DIR) + "/" + name; }

}  // namespace

TEST(Cli, AnalyzeUnstableCaseExitsZero) {
    const CliRun r = invoke("analyze --config " + cases("case3.cfg"));
    EXPECT_EQ(r.status, 0) << r.err;
    const auto m = gfpc::machine_section(r.out);
    EXPECT_EQ(m["models"]["emt"]["verdict"]["status"], "unstable");
    EXPECT_EQ(m["models"]["rms"]["verdict"]["status"], "stable");
}

TEST(Cli, TuneInfeasibleTargetIsDataNotFailure) {
    const CliRun r = invoke("tune --gm 25 --phase-floor 80");
    EXPECT_EQ(r.status, 0) << r.err;
    EXPECT_FALSE(gfpc::machine_section(r.out)["feasible"].get<bool>());
}

TEST(Cli, TuneDefaultsToLowMarginCase) {
    const CliRun r = invoke("tune");
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_NEAR(gfpc::machine_section(r.out)["k_v"].get<double>(), 0.0658, 5e-4);
}

TEST(Cli, SimulateWritesTimeSeriesCsv) {
    const auto csv = scratch_dir() / "run.csv";
    const CliRun r = invoke("simulate --model rms --config " + cases("case2.cfg") + " --out '" + csv.string() + "'");
    ASSERT_EQ(r.status, 0) << r.err;
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "t_s,p_pu,omega_pu,id_pu,iq_pu,vmag_pu,dtheta_rad");
    EXPECT_EQ(gfpc::machine_section(r.out)["run"]["model"], "rms");
}

TEST(Cli, BodeAndRootLocusRanges) {
    const CliRun b = invoke("bode --which mismatch --omega-range 1e-6:10:100 --config " + cases("case1.cfg"));
    ASSERT_EQ(b.status, 0) << b.err;
    EXPECT_LT(gfpc::machine_section(b.out)["mismatch"]["first_mag"].get<double>(), 1e-6);
    const CliRun l = invoke("rootlocus --model emt --kp-range 0:0.01:5 --config " + cases("case3.cfg"));
    ASSERT_EQ(l.status, 0) << l.err;
    EXPECT_FALSE(gfpc::machine_section(l.out)["emt"]["first_unstable_k_p"].is_null());
}

TEST(Cli, InputErrorsExitNonzeroWithLineNumber) {
    const auto bad = scratch_dir() / "bad.cfg";
    std::ofstream(bad) << "k_v = 0.1\nl_c = -1\n";
    const CliRun r = invoke("analyze --config '" + bad.string() + "'");
    EXPECT_NE(r.status, 0);
    EXPECT_NE(r.err.find("bad.cfg:2:"), std::string::npos) << r.err;
    EXPECT_NE(invoke("").status, 0);
    EXPECT_NE(invoke("tune --phase-floor 60").status, 0);
    EXPECT_NE(invoke("rootlocus --kp-range 1:0:5").status, 0);
}

TEST(Cli, LogLevelFromEnvironment) {
    const CliRun quiet = invoke("analyze");
    EXPECT_EQ(quiet.err, "");
    const CliRun chatty = invoke("analyze", "GFPC_LOG=debug");
    EXPECT_NE(chatty.err.find("defaults"), std::string::npos);
}
