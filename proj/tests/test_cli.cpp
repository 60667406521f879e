#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <algorithm>
#include <string>

#include <sys/wait.h>

namespace {

namespace fs = std::filesystem;

const fs::path kWorkDir = fs::temp_directory_path() / "mlmc_cli_test";

int run_cli(const std::string& args) {
    std::string command = std::string(CLI_PATH) + " " + args + " > /dev/null 2>&1";
    int rc = std::system(command.c_str());
    REQUIRE(rc != -1);
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

struct WorkDirGuard {
    WorkDirGuard() {
        fs::remove_all(kWorkDir);
        fs::create_directories(kWorkDir);
    }
};

} // namespace

TEST_CASE("validate passes on a clean build and fails when perturbed") {
    CHECK(run_cli("validate") == 0);
    CHECK(run_cli("validate --perturb 1.01") == 1);
}

TEST_CASE("config errors exit with code 2") {
    CHECK(run_cli("optimize --preset nonsense") == 2);
    CHECK(run_cli("optimize --preset ex2 --tol 0.01 0.02") == 2); // ascending
    CHECK(run_cli("run --preset ex2 --tol -1") == 2);
    CHECK(run_cli("run --preset ex2 --mode fixed_theta --tol 0.05") == 2); // no theta
    CHECK(run_cli("run --mode unknown --tol 0.05") == 2);
    CHECK(run_cli("bogus-command") == 2);
    CHECK(run_cli("--help") == 0);
}

TEST_CASE("optimize writes a stable table and reruns byte-identically") {
    WorkDirGuard guard;
    fs::path out_a = kWorkDir / "opt_a";
    fs::path out_b = kWorkDir / "opt_b";
    CHECK(run_cli("optimize --preset ex1-gmres --tol 0.1 0.05 0.02 --out " +
                  out_a.string()) == 0);
    CHECK(run_cli("optimize --preset ex1-gmres --tol 0.1 0.05 0.02 --out " +
                  out_b.string()) == 0);

    std::string csv = slurp(out_a / "optimize.csv");
    CHECK(csv.rfind("tol,feasible,L_opt,theta_opt,work_real,work_rounded,L_lo,L_hi,"
                    "beta_geo,h0_geo,L_geo,theta_geo,work_geo\n",
                    0) == 0);
    CHECK(csv == slurp(out_b / "optimize.csv"));
    CHECK(slurp(out_a / "hierarchies.json") == slurp(out_b / "hierarchies.json"));

    // Rounding can only add work: work_rounded >= work_real on every row.
    std::istringstream rows(csv);
    std::string line;
    std::getline(rows, line); // header
    int data_rows = 0;
    while (std::getline(rows, line)) {
        ++data_rows;
        double tol, feasible, l_opt, theta, work_real, work_rounded;
        char c;
        std::istringstream cells(line);
        cells >> tol >> c >> feasible >> c >> l_opt >> c >> theta >> c >> work_real >> c >>
            work_rounded;
        REQUIRE(cells.good());
        CHECK(feasible == 1.0);
        CHECK(work_rounded >= work_real);
    }
    CHECK(data_rows == 3);

    // Tolerances below the h_min bias floor are reported per row and the
    // command still succeeds: qw * h_min^q1 = 1.3653 * 0.0025 > 0.003.
    fs::path out_c = kWorkDir / "opt_c";
    std::ofstream cfg(kWorkDir / "infeasible.json");
    cfg << R"({"preset":"ex1-gmres","problem":{"h_min":0.05},"tolerances":[0.05,0.003]})";
    cfg.close();
    CHECK(run_cli("optimize --config " + (kWorkDir / "infeasible.json").string() +
                  " --out " + out_c.string()) == 0);
    std::istringstream inf_rows(slurp(out_c / "optimize.csv"));
    std::getline(inf_rows, line); // header
    std::getline(inf_rows, line);
    CHECK(line.find(",1,") != std::string::npos); // tol 0.05 feasible
    std::getline(inf_rows, line);
    CHECK(line.find(",0,") != std::string::npos); // tol 0.003 infeasible
    CHECK(line.rfind("0.003", 0) == 0);
}

TEST_CASE("run produces summary and reports, byte-identical across reruns") {
    WorkDirGuard guard;
    fs::path out_a = kWorkDir / "run_a";
    fs::path out_b = kWorkDir / "run_b";
    std::string args = "run --preset ex1-gmres --tol 0.05 --seeds 3 --workers 2 --traces ";
    CHECK(run_cli(args + "--out " + out_a.string()) == 0);
    CHECK(run_cli(args + "--out " + out_b.string()) == 0);

    std::string summary = slurp(out_a / "summary.csv");
    CHECK(summary.rfind("tol,runs,failures,work_median,work_q05,work_q95,"
                        "err_median,err_q05,err_q95,exceed_fraction\n",
                        0) == 0);
    CHECK(summary == slurp(out_b / "summary.csv"));
    CHECK(slurp(out_a / "runs.json") == slurp(out_b / "runs.json"));
    CHECK(fs::exists(out_a / "trace-0.05-0.csv"));
    std::string trace = slurp(out_a / "trace-0.05-0.csv");
    CHECK(trace.rfind("iteration,tol,L,theta,bias,stat,work\n", 0) == 0);
}

TEST_CASE("config file values apply and flags override them") {
    WorkDirGuard guard;
    fs::path cfg_path = kWorkDir / "experiment.json";
    std::ofstream cfg(cfg_path);
    cfg << R"({
  "preset": "ex1-mumps",
  "mode": "geometric",
  "tolerances": [0.05, 0.02],
  "seeds": 2,
  "continuation": {"tol_max": 0.25, "calib_levels": 4},
  "output_dir": ")" << (kWorkDir / "cfg_out").string() << R"("
})";
    cfg.close();
    CHECK(run_cli("run --config " + cfg_path.string()) == 0);
    std::string summary = slurp(kWorkDir / "cfg_out" / "summary.csv");
    // two tolerance rows plus header
    CHECK(std::count(summary.begin(), summary.end(), '\n') == 3);

    // Flag overrides the config's tolerance list.
    CHECK(run_cli("run --config " + cfg_path.string() + " --tol 0.05 --out " +
                  (kWorkDir / "cfg_out2").string()) == 0);
    std::string summary2 = slurp(kWorkDir / "cfg_out2" / "summary.csv");
    CHECK(std::count(summary2.begin(), summary2.end(), '\n') == 2);
}

TEST_CASE("run output does not depend on the worker count") {
    WorkDirGuard guard;
    std::string base = "run --preset ex1-gmres --tol 0.05 --seeds 2 ";
    CHECK(run_cli(base + "--workers 1 --out " + (kWorkDir / "w1").string()) == 0);
    CHECK(run_cli(base + "--workers 2 --out " + (kWorkDir / "w2").string()) == 0);
    CHECK(slurp(kWorkDir / "w1" / "runs.json") == slurp(kWorkDir / "w2" / "runs.json"));
    CHECK(slurp(kWorkDir / "w1" / "summary.csv") == slurp(kWorkDir / "w2" / "summary.csv"));
}

TEST_CASE("a deterministic sampler yields a zero-spread summary") {
    WorkDirGuard guard;
    std::ofstream cfg(kWorkDir / "quiet.json");
    cfg << R"({
  "preset": "ex2",
  "problem": {"sampler": "gbm", "vol": 0.0},
  "mode": "geometric",
  "tolerances": [0.02],
  "seeds": 1
})";
    cfg.close();
    CHECK(run_cli("run --config " + (kWorkDir / "quiet.json").string() + " --out " +
                  (kWorkDir / "quiet_out").string()) == 0);
    std::string summary = slurp(kWorkDir / "quiet_out" / "summary.csv");
    std::istringstream rows(summary);
    std::string header, line;
    std::getline(rows, header);
    std::getline(rows, line);
    // err quantiles coincide for a single deterministic run
    double tol, runs, failures, wm, w05, w95, em, e05, e95;
    char c;
    std::istringstream cells(line);
    cells >> tol >> c >> runs >> c >> failures >> c >> wm >> c >> w05 >> c >> w95 >> c >> em >>
        c >> e05 >> c >> e95;
    CHECK(runs == 1.0);
    CHECK(failures == 0.0);
    CHECK(em == e05);
    CHECK(em == e95);
    CHECK(wm == w05);
}

TEST_CASE("individual run failures are recorded and exit nonzero") {
    WorkDirGuard guard;
    std::ofstream cfg(kWorkDir / "starved.json");
    cfg << R"({
  "preset": "ex1-gmres",
  "tolerances": [0.002],
  "seeds": 2,
  "continuation": {"max_iterations": 2}
})";
    cfg.close();
    CHECK(run_cli("run --config " + (kWorkDir / "starved.json").string() + " --out " +
                  (kWorkDir / "starved_out").string()) == 1);
    std::string runs = slurp(kWorkDir / "starved_out" / "runs.json");
    CHECK(runs.find("\"failed\": true") != std::string::npos);
    CHECK(runs.find("iteration budget") != std::string::npos);
}

TEST_CASE("sweep fits a slope over the tolerance grid") {
    WorkDirGuard guard;
    CHECK(run_cli("sweep --preset ex1-gmres --tol 0.08 0.04 0.02 --seeds 3 --out " +
                  (kWorkDir / "sweep_out").string()) == 0);
    CHECK(fs::exists(kWorkDir / "sweep_out" / "sweep.csv"));
    CHECK(run_cli("sweep --preset ex2 --tol 0.05 --seeds 2 --out " +
                  (kWorkDir / "sweep_single").string()) == 2);
}
