#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "csf/builtin_scenarios.hpp"
#include "csf/scenario.hpp"

using namespace csf;

namespace {

const char* kSmall = R"({
  "name": "small",
  "charts": {"R3": {"coords": ["x", "y", "z"], "bounds": [[-1, 1], [-1, 1], [-1, 1]]}},
  "forms": {
    "alpha": {"chart": "R3", "form": "dz + x*dy"},
    "flat": {"chart": "R3", "form": "dz"}
  },
  "run": [
    {"task": "verify_contact", "form": "alpha"},
    {"task": "verify_contact", "form": "flat"}
  ]
})";

std::string builtin_text(std::string_view name) {
    for (const auto& b : builtin_scenarios())
        if (b.name == name) return std::string(b.text);
    throw Error("no builtin " + std::string(name));
}

std::string error_of(const std::string& text) {
    try {
        load_scenario_text(text);
    } catch (const ScenarioError& e) {
        return e.what();
    }
    return "";
}

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
    const auto p = std::filesystem::temp_directory_path() / ("csf_test_" + std::to_string(::getpid()) + "_" + name);
    std::ofstream(p) << content;
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const int rc = std::system((std::string(CSFVERIFY_PATH) + " " + args + " 2>/dev/null").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string strip_wall_times(const std::string& report) {
    return std::regex_replace(report, std::regex("\"wall_time_s\": [^,\\n]*"), "\"wall_time_s\": _");
}

}  // namespace

TEST(Loader, EveryBuiltinLoads) {
    ASSERT_EQ(builtin_scenarios().size(), 4u);
    for (const auto& b : builtin_scenarios()) {
        const ScenarioDocument doc = load_scenario_text(b.text, std::string(b.name));
        EXPECT_EQ(doc.name, b.name);
        EXPECT_FALSE(doc.run.empty());
        EXPECT_EQ(doc.digest.size(), 64u);
    }
}

TEST(Loader, DanglingReferenceNamesTheSection) {
    const std::string msg = error_of(R"({"forms": {"a": {"chart": "nowhere", "form": "dz"}}})");
    EXPECT_NE(msg.find("dangling reference to 'nowhere'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("forms.a"), std::string::npos) << msg;
}

TEST(Loader, DuplicateNamesAreRejected) {
    const std::string twice = R"({"charts": {"A": {"coords": ["x"], "bounds": [[0, 1]]}, "A": {"coords": ["y"], "bounds": [[0, 1]]}}})";
    EXPECT_NE(error_of(twice).find("duplicate name 'A'"), std::string::npos) << error_of(twice);
    const std::string across = R"({"charts": {"A": {"coords": ["x"], "bounds": [[0, 1]]}}, "forms": {"A": {"chart": "A", "form": "dx"}}})";
    EXPECT_NE(error_of(across).find("duplicate name"), std::string::npos) << error_of(across);
}

TEST(Loader, SyntaxErrorsCarryLineAndColumn) {
    const std::string msg = error_of("{\n  \"name\": \"x\",\n  \"charts\": {,}\n}");
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column"), std::string::npos) << msg;
    const std::string expr = error_of(R"({"charts": {"R": {"coords": ["x"], "bounds": [[0, 1]]}}, "forms": {"a": {"chart": "R", "form": "x +* dx"}}})");
    EXPECT_NE(expr.find("column 4"), std::string::npos) << expr;
}

TEST(Loader, UnknownTasksAndSectionsAreRejected) {
    EXPECT_NE(error_of(R"({"run": [{"task": "teleport"}]})").find("unknown task"), std::string::npos);
    EXPECT_NE(error_of(R"({"extras": {}})").find("unknown section"), std::string::npos);
    EXPECT_NE(error_of(R"({"run": [{"task": "verify_contact", "form": "nope"}]})").find("dangling"), std::string::npos);
}

TEST(Loader, DigestIgnoresWhitespaceOnly) {
    const std::string a = kSmall;
    std::string b = std::regex_replace(a, std::regex("\n  "), "\n\t\t ");
    b = std::regex_replace(b, std::regex(": "), " :  ");
    EXPECT_NE(a, b);
    EXPECT_EQ(load_scenario_text(a).digest, load_scenario_text(b).digest);
    const std::string c = std::regex_replace(a, std::regex("x\\*dy"), "2*x*dy");
    EXPECT_NE(load_scenario_text(a).digest, load_scenario_text(c).digest);
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Runner, FailureDoesNotStopLaterTasks) {
    const RunReport r = run_suite(load_scenario_text(kSmall));
    ASSERT_EQ(r.tasks.size(), 2u);
    EXPECT_EQ(r.tasks[0].status, TaskStatus::Passed);
    EXPECT_EQ(r.tasks[1].status, TaskStatus::Failed);
    EXPECT_FALSE(r.ok());
    // a failed positivity carries the argmin point
    EXPECT_EQ(r.tasks[1].results["report"]["argmin"].size(), 3u);
}

TEST(Runner, ErrorsAreRecordedPerTask) {
    const std::string text = R"({
      "charts": {"P": {"coords": ["x", "y"], "bounds": [[-1, 1], [-1, 1]]},
                 "R3": {"coords": ["x", "y", "z"], "bounds": [[-1, 1], [-1, 1], [-1, 1]]}},
      "forms": {"b": {"chart": "P", "form": "dx"}, "a": {"chart": "R3", "form": "dz + x*dy"}},
      "run": [{"task": "verify_contact", "form": "b"}, {"task": "verify_contact", "form": "a"}]})";
    const RunReport r = run_suite(load_scenario_text(text));
    EXPECT_EQ(r.tasks[0].status, TaskStatus::Error);
    EXPECT_FALSE(r.tasks[0].message.empty());
    EXPECT_EQ(r.tasks[1].status, TaskStatus::Passed);
}

TEST(Runner, ExpectedFailuresPass) {
    std::string text = kSmall;
    text = std::regex_replace(text, std::regex(R"(\{"task": "verify_contact", "form": "flat"\})"),
                              R"({"task": "verify_contact", "form": "flat", "expect": "fail"})");
    EXPECT_TRUE(run_suite(load_scenario_text(text)).ok());
}

TEST(Runner, OverridesReachTheChecks) {
    RunSettings s;
    s.grid = 5;
    s.threshold = 2.0;  // alpha has normalized density 1 everywhere
    const RunReport r = run_suite(load_scenario_text(kSmall), s);
    EXPECT_EQ(r.tasks[0].status, TaskStatus::Failed);
    EXPECT_EQ(r.tasks[0].results["report"]["grid"]["points"].get<int>(), 125);
}

TEST(Report, EmptyRunIsAValidDocument) {
    const RunReport r = run_suite(load_scenario_text(R"({"name": "empty"})"));
    const Json j = Json::parse(serialize_report(to_json(r)));
    EXPECT_EQ(j["tasks"].size(), 0u);
    EXPECT_EQ(j["summary"]["tasks"], 0);
    EXPECT_TRUE(r.ok());
}

TEST(Report, NumbersRoundTripExactly) {
    Json j;
    j["third"] = 1.0 / 3.0;
    j["tiny"] = 4.9406564584124654e-324;
    j["pi"] = 3.141592653589793;
    j["list"] = {0.1, 0.2, 0.30000000000000004};
    j["inf"] = std::numeric_limits<double>::infinity();
    const std::string text = serialize_report(j);
    EXPECT_NE(text.find("0.33333333333333331"), std::string::npos) << text;
    const Json back = Json::parse(text);
    EXPECT_EQ(back["third"].get<double>(), 1.0 / 3.0);
    EXPECT_EQ(back["tiny"].get<double>(), 4.9406564584124654e-324);
    EXPECT_EQ(back["list"][2].get<double>(), 0.30000000000000004);
    EXPECT_TRUE(back["inf"].is_null());
}

TEST(Report, PassedTaskHasStatusField) {
    const RunReport r = run_suite(load_scenario_text(kSmall));
    const Json j = Json::parse(serialize_report(to_json(r)));
    EXPECT_EQ(j["tasks"][0]["status"], "passed");
    EXPECT_EQ(j["tasks"][1]["status"], "failed");
    EXPECT_EQ(j["settings"]["seed"], 42);
    EXPECT_EQ(j["input_digest"].get<std::string>().rfind("sha256:", 0), 0u);
}

TEST(Report, EmitWritesAndSurfacesIoErrors) {
    const RunReport r = run_suite(load_scenario_text(kSmall));
    const auto p = temp_file("emit.json", "");
    emit_report(r, p.string());
    EXPECT_EQ(Json::parse(slurp(p))["scenario"], "small");
    std::filesystem::remove(p);
    EXPECT_THROW(emit_report(r, "/nonexistent-dir/report.json"), Error);
}

TEST(Explain, KnownAndUnknownTasks) {
    for (const auto& t : task_names()) EXPECT_FALSE(explain_task(t).empty());
    EXPECT_THROW(explain_task("teleport"), Error);
}

TEST(Cli, ExitCodeFollowsTaskOutcomes) {
    const auto failing = temp_file("small.scn", kSmall);
    EXPECT_EQ(run_cli("verify " + failing.string() + " --out /dev/null"), 1);
    const auto passing = temp_file("product.scn", builtin_text("product_lemma"));
    EXPECT_EQ(run_cli("verify " + passing.string() + " --out /dev/null"), 0);
    EXPECT_EQ(run_cli("verify product_lemma --out /dev/null"), 0);
    EXPECT_EQ(run_cli("verify /nonexistent.scn"), 2);
    EXPECT_EQ(run_cli("list-builtins > /dev/null"), 0);
    EXPECT_EQ(run_cli("explain find_K > /dev/null"), 0);
    std::filesystem::remove(failing);
    std::filesystem::remove(passing);
}

TEST(Cli, RepeatedRunsAreByteIdenticalApartFromWallTimes) {
    const auto dir = std::filesystem::temp_directory_path();
    const auto a = dir / ("csf_det_a_" + std::to_string(::getpid()) + ".json");
    const auto b = dir / ("csf_det_b_" + std::to_string(::getpid()) + ".json");
    ASSERT_EQ(run_cli("verify fiber_sum_n1 --seed 42 --out " + a.string()), 0);
    ASSERT_EQ(run_cli("verify fiber_sum_n1 --seed 42 --out " + b.string()), 0);
    EXPECT_EQ(strip_wall_times(slurp(a)), strip_wall_times(slurp(b)));
    std::filesystem::remove(a);
    std::filesystem::remove(b);
}
