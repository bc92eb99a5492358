#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* TREFOIL = "X[1,4,2,5];X[3,6,4,1];X[5,2,6,3]";

fs::path fixture_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "khtool_cli_fixtures";
        fs::create_directories(d);
        auto put = [&](const char* name, const std::string& bytes) {
            std::ofstream out(d / name, std::ios::binary);
            out << bytes;
        };
        put("unknot.pd", "U\n");
        put("trefoil.pd", std::string(TREFOIL) + "\n");
        put("trefoil_commented.pd",
            "# a trefoil, one crossing per line\nX[1,4,2,5]\nX[3,6,4,1]\n"
            "X[5,2,6,3]\n");
        put("garbage.pd", "this is not a diagram\n");
        put("dangling.pd", "X[1,2,3,4]\n");
        put("empty.movie",
            std::string("{\"start\":\"") + TREFOIL + ";bp=1\"}\n");
        put("badmove.movie", "{\"start\":\"U\"}\n{\"move\":\"death\",\"loop\":99}\n");
        put("death.movie", "{\"start\":\"U\"}\n{\"move\":\"death\",\"loop\":1}\n");
        return d;
    }();
    return dir;
}

std::string data_path(const char* name) {
    return std::string(KH_DATA_DIR) + "/" + name;
}

struct RunResult {
    int exit_code = -1;
    std::vector<json> lines;
    std::string raw;

    // First record line of the given type; a null json if absent.
    json record(const std::string& type) const {
        for (const json& l : lines)
            if (l.contains("record") && l["record"] == type) return l;
        return json();
    }
    std::vector<json> records(const std::string& type) const {
        std::vector<json> out;
        for (const json& l : lines)
            if (l.contains("record") && l["record"] == type) out.push_back(l);
        return out;
    }
    json check(const std::string& name) const {
        for (const json& l : lines)
            if (l.contains("check") && l["check"] == name) return l;
        return json();
    }
    bool all_checks_pass() const {
        bool any = false;
        for (const json& l : lines)
            if (l.contains("check")) {
                any = true;
                if (l["pass"] != true) return false;
            }
        return any;
    }
};

RunResult run_tool(const std::string& args) {
    static int counter = 0;
    fs::path outfile =
        fixture_dir() / ("out_" + std::to_string(counter++) + ".txt");
    std::string cmd = std::string(KH_TOOL_PATH) + " " + args + " > " +
                      outfile.string() + " 2>/dev/null";
    int rc = std::system(cmd.c_str());
    RunResult res;
    res.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    std::ifstream in(outfile, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    res.raw = ss.str();
    std::istringstream li(res.raw);
    std::string line;
    while (std::getline(li, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        REQUIRE(!j.is_discarded());  // payloads parse back losslessly
        res.lines.push_back(std::move(j));
    }
    return res;
}

std::string fx(const char* name) { return (fixture_dir() / name).string(); }

std::map<std::pair<int, int>, int> dims_of(const RunResult& r) {
    std::map<std::pair<int, int>, int> out;
    for (const json& l : r.records("dim"))
        out[{l["i"].get<int>(), l["j"].get<int>()}] = l["n"].get<int>();
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Report text with the timing line removed.
std::string stable_part(const RunResult& r) {
    std::istringstream in(r.raw);
    std::string line, out;
    while (std::getline(in, line))
        if (line.find("\"record\":\"timing\"") == std::string::npos)
            out += line + "\n";
    return out;
}

}  // namespace

TEST_CASE("homology of the unknot over F2") {
    RunResult r = run_tool("kh " + fx("unknot.pd"));
    CHECK(r.exit_code == 0);
    REQUIRE(!r.lines.empty());
    CHECK(r.lines.front()["schema"] == "kh.report.v1");
    CHECK(r.lines.front()["command"] == "kh");
    std::map<std::pair<int, int>, int> expect{{{0, -1}, 1}, {{0, 1}, 1}};
    CHECK(dims_of(r) == expect);
    CHECK(r.record("total")["n"] == 2);
    CHECK(r.record("input")["digest"].get<std::string>().substr(0, 8) ==
          "fnv1a64:");
}

TEST_CASE("homology of the trefoil over F2 has six dimensions") {
    RunResult r = run_tool("kh " + fx("trefoil.pd"));
    CHECK(r.exit_code == 0);
    CHECK(r.record("total")["n"] == 6);
    int sum = 0;
    for (auto& [_, n] : dims_of(r)) sum += n;
    CHECK(sum == 6);
}

TEST_CASE("comment lines and line splits are accepted in diagram files") {
    RunResult a = run_tool("kh " + fx("trefoil.pd"));
    RunResult b = run_tool("kh " + fx("trefoil_commented.pd"));
    CHECK(b.exit_code == 0);
    CHECK(dims_of(a) == dims_of(b));
}

TEST_CASE("integral homology of the trefoil shows one order-two factor") {
    RunResult r = run_tool("kh " + fx("trefoil.pd") + " --ring z");
    CHECK(r.exit_code == 0);
    int twos = 0;
    for (const json& b : r.records("z_block"))
        for (const json& f : b["torsion"])
            if (f == "2") ++twos;
    CHECK(twos == 1);
    CHECK(r.record("total")["torsion"] == 1);
    CHECK(r.record("total")["free"] == 4);
}

TEST_CASE("reduced homology uses the smallest edge of the first component") {
    RunResult r = run_tool("kh " + fx("unknot.pd") + " --reduced");
    CHECK(r.exit_code == 0);
    std::map<std::pair<int, int>, int> expect{{{0, 0}, 1}};
    CHECK(dims_of(r) == expect);

    RunResult t = run_tool("kh " + fx("trefoil.pd") + " --reduced");
    CHECK(t.record("total")["n"] == 3);

    // An explicit --bp on another edge gives the same dimensions.
    RunResult t2 = run_tool("kh " + fx("trefoil.pd") + " --reduced --bp 4");
    CHECK(dims_of(t) == dims_of(t2));
}

TEST_CASE("exit codes separate parse and validation failures") {
    CHECK(run_tool("kh " + fx("garbage.pd")).exit_code == 2);
    CHECK(run_tool("kh " + fx("no_such_file.pd")).exit_code == 2);
    RunResult r = run_tool("kh " + fx("dangling.pd"));
    CHECK(r.exit_code == 3);
    CHECK(r.check("validate")["pass"] == false);
    CHECK(run_tool("kh " + fx("trefoil.pd") + " --bp 99").exit_code == 3);
}

TEST_CASE("an empty movie induces the identity map") {
    RunResult r = run_tool("map " + fx("empty.movie"));
    CHECK(r.exit_code == 0);
    json verdict = r.record("verdict");
    CHECK(verdict["injective"] == true);
    CHECK(verdict["surjective"] == true);
    for (const json& b : r.records("map_block")) {
        REQUIRE(b["rows"] == b["cols"]);
        int rows = b["rows"].get<int>();
        for (int i = 0; i < rows; ++i) {
            std::string row = b["matrix"][size_t(i)].get<std::string>();
            for (int c = 0; c < rows; ++c)
                CHECK(row[size_t(c)] == (c == i ? '1' : '0'));
        }
    }
}

TEST_CASE("the bundled n=2 movie induces an injective map") {
    RunResult r = run_tool("map " + data_path("companion_n2.movie"));
    CHECK(r.exit_code == 0);
    CHECK(r.record("verdict")["injective"] == true);
    CHECK(r.record("movie")["ribbon"] == true);
    CHECK(r.record("movie")["euler"] == 0);
}

TEST_CASE("the reversed bundled movie induces a surjective map") {
    RunResult r =
        run_tool("map " + data_path("companion_n2.movie") + " --reverse");
    CHECK(r.exit_code == 0);
    CHECK(r.record("verdict")["surjective"] == true);
}

TEST_CASE("an invalid move exits with code four and names the move") {
    RunResult r = run_tool("map " + fx("badmove.movie"));
    CHECK(r.exit_code == 4);
    json failed = r.check("movie_valid");
    REQUIRE(!failed.is_null());
    CHECK(failed["pass"] == false);
    CHECK(failed["move_index"] == 0);
}

TEST_CASE("verify shumakovitch passes on the trefoil") {
    RunResult r = run_tool("verify shumakovitch " + fx("trefoil.pd"));
    CHECK(r.exit_code == 0);
    CHECK(r.all_checks_pass());
    CHECK(!r.check("shumakovitch_dims").is_null());
    CHECK(!r.check("x_sequence_exact").is_null());
}

TEST_CASE("verify ribbon passes on the bundled n=2 movie") {
    RunResult r = run_tool("verify ribbon " + data_path("companion_n2.movie"));
    CHECK(r.exit_code == 0);
    CHECK(r.all_checks_pass());
    CHECK(!r.check("kh_injective").is_null());
    CHECK(!r.check("reduced_roundtrip_identity").is_null());
}

TEST_CASE("verify steenrod passes on the bundled n=2 movie") {
    RunResult r =
        run_tool("verify steenrod " + data_path("companion_n2.movie"));
    CHECK(r.exit_code == 0);
    CHECK(r.check("sq1_natural")["pass"] == true);
    CHECK(r.check("sq1_nonzero_start")["pass"] == true);
    CHECK(r.check("sq1_nonzero_end")["pass"] == true);
}

TEST_CASE("verify all passes on the bundled n=1 movie") {
    RunResult r = run_tool("verify all " + data_path("companion_n1.movie"));
    CHECK(r.exit_code == 0);
    CHECK(r.all_checks_pass());
}

TEST_CASE("verify exits with one when a check fails") {
    RunResult r = run_tool("verify ribbon " + fx("death.movie"));
    CHECK(r.exit_code == 1);
    CHECK(r.check("movie_ribbon")["pass"] == false);
    json summary = r.record("summary");
    CHECK(summary["verdict"] == "fail");
    CHECK(summary["failed"].get<int>() > 0);
}

TEST_CASE("verify ribbon refuses a diagram target") {
    RunResult r = run_tool("verify ribbon " + fx("trefoil.pd"));
    CHECK(r.exit_code == 3);
}

TEST_CASE("construct reproduces the bundled movie bytes") {
    fs::path out = fixture_dir() / "constructed";
    RunResult r = run_tool("construct 1 --out " + out.string());
    CHECK(r.exit_code == 0);
    json bundle = r.record("bundle");
    CHECK(bundle["composite_crossings"] == 3);
    CHECK(bundle["companion_crossings"] == 5);
    CHECK(bundle["ribbon"] == true);
    CHECK(bundle["euler"] == 0);
    CHECK(slurp((out / "companion_n1.movie").string()) ==
          slurp(data_path("companion_n1.movie")));
    // The emitted endpoint diagrams feed straight back into the kh command.
    RunResult kh =
        run_tool("kh " + (out / "companion_n1_companion.pd").string());
    CHECK(kh.exit_code == 0);
    CHECK(kh.record("total")["n"] == 6);
}

TEST_CASE("reports are byte-identical apart from the timing line") {
    RunResult a = run_tool("kh " + fx("trefoil.pd") + " --ring z");
    RunResult b = run_tool("kh " + fx("trefoil.pd") + " --ring z");
    CHECK(stable_part(a) == stable_part(b));
}
