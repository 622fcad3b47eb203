#include "checks.hpp"

#include <cstdio>
#include <filesystem>
#include <string>

using namespace geosep::acceptance;

namespace {

int failures = 0;

void report(int id, const char* name, const Outcome& o) {
    std::printf("criterion %d %s  %s: %s\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

}  // namespace

int main(int argc, char** argv) {
    const std::filesystem::path work =
        argc > 1 ? std::filesystem::path(argv[1]) : std::filesystem::temp_directory_path() / "geosep_acceptance";
    std::filesystem::create_directories(work);

    report(1, "metric oracle", metric_oracle());
    report(2, "analytic geometry", analytic_geometry());
    report(3, "holonomy", holonomy());
    report(4, "projector solver", projector_solver());

    const auto desk = run_desk((work / "desk").string());
    report(5, "block diagonality", block_diagonality(desk));
    report(6, "test lines", test_line_reproduction(desk));

    const Outcome parts[] = {accumulator_merge(), transformation_law(), lle_weight_sums(),
                             projector_algebra(desk.report ? &*desk.report : nullptr),
                             identical_reruns((work / "rerun").string())};
    Outcome props{true, ""};
    for (const auto& p : parts) {
        props.pass = props.pass && p.pass;
        props.detail += (props.detail.empty() ? "" : "; ") + std::string(p.pass ? "" : "FAILED ") + p.detail;
    }
    report(7, "property suites", props);

    std::printf("%d of 7 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
