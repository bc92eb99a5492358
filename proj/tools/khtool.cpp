// Command-line surface for the library: compute homology tables, movie maps,
// run verification suites, and emit companion bundles.  Output is a stream of
// JSON lines (schema "kh.report.v1"): a header echoing the command, one input
// record per file read (with an FNV-1a-64 content digest), payload records,
// per-check pass/fail lines, a timing line, and a summary.  Identical inputs
// produce byte-identical reports apart from the timing line.
//
// Exit codes: 0 success, 1 failed verification check, 2 unreadable or
// unparseable input, 3 input that parses but fails validation, 4 movie
// validation failure.  KH_THREADS caps internal parallelism.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "kh/constructions.hpp"
#include "kh/khcomplex.hpp"
#include "kh/movie.hpp"
#include "kh/steenrod.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kh;

namespace {

constexpr const char* kSchema = "kh.report.v1";

uint64_t fnv1a64(const std::string& bytes) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string digest_of(const std::string& bytes) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes)));
    return std::string("fnv1a64:") + buf;
}

// Thrown after a failed check has been reported, carrying the exit code.
struct CliExit {
    int code;
};

class Report {
public:
    Report(const std::string& command, const std::vector<std::string>& argv) {
        t0_ = std::chrono::steady_clock::now();
        emit({{"argv", argv}, {"command", command}, {"schema", kSchema}});
    }

    void input(const std::string& path, const std::string& bytes) {
        emit({{"digest", digest_of(bytes)},
              {"input", path},
              {"record", "input"}});
    }

    void record(json j) { emit(j); }

    bool check(const std::string& name, bool pass,
               json extra = json::object()) {
        extra["check"] = name;
        extra["pass"] = pass;
        if (!pass) ++failed_;
        emit(extra);
        return pass;
    }

    // Emits the timing and summary lines; returns the process exit code.
    int finish(int code_on_fail = 1) {
        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0_)
                      .count();
        emit({{"ms", ms}, {"record", "timing"}});
        emit({{"failed", failed_},
              {"record", "summary"},
              {"verdict", failed_ ? "fail" : "pass"}});
        return failed_ ? code_on_fail : 0;
    }

private:
    void emit(const json& j) { std::cout << j.dump() << "\n"; }

    std::chrono::steady_clock::time_point t0_;
    int failed_ = 0;
};

std::optional<std::string> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw KhError("cannot write " + path);
    out << bytes;
}

// Diagram/tangle files: one statement list, possibly split across lines.
// Blank lines and lines starting with '#' are ignored; the rest are joined
// with the grammar's ';' separator.
std::string join_lines(const std::string& bytes) {
    std::istringstream in(bytes);
    std::string line, out;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
            line.pop_back();
        size_t at = line.find_first_not_of(" \t");
        if (at == std::string::npos) continue;
        line = line.substr(at);
        if (line[0] == '#') continue;
        if (!out.empty()) out += ';';
        out += line;
    }
    return out;
}

std::string load_bytes(Report& rep, const std::string& path) {
    auto bytes = read_file(path);
    if (!bytes) {
        rep.check("read", false, {{"error", "cannot read " + path}});
        throw CliExit{2};
    }
    rep.input(path, *bytes);
    return *bytes;
}

Diagram parse_diagram(Report& rep, const std::string& bytes) {
    try {
        return Diagram::parse(join_lines(bytes));
    } catch (const MalformedInput& e) {
        rep.check("parse", false, {{"error", e.what()}});
        throw CliExit{2};
    } catch (const MalformedCrossing& e) {
        rep.check("parse", false, {{"error", e.what()}});
        throw CliExit{2};
    } catch (const KhError& e) {
        rep.check("validate", false, {{"error", e.what()}});
        throw CliExit{3};
    }
}

// The deterministic default marked edge: the smallest edge id on the first
// strand component.
int default_basepoint(const Diagram& d) {
    if (d.components().empty()) throw KhError("diagram has no components");
    const auto& comp = d.components().front();
    return *std::min_element(comp.begin(), comp.end());
}

// Parses and validates a movie, naming the offending line or move index on
// failure (exit 4).
Movie parse_movie(Report& rep, const std::string& bytes) {
    std::istringstream in(bytes);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    if (lines.empty()) {
        rep.check("movie_parse", false, {{"error", "empty movie file"}});
        throw CliExit{4};
    }
    json hdr = json::parse(lines[0], nullptr, false);
    if (hdr.is_discarded() || !hdr.contains("start") ||
        !hdr["start"].is_string()) {
        rep.check("movie_parse", false,
                  {{"error", "first line must be {\"start\": <diagram>}"},
                   {"line", 0}});
        throw CliExit{4};
    }
    Diagram start = [&] {
        try {
            return Diagram::parse(hdr["start"].get<std::string>());
        } catch (const KhError& e) {
            rep.check("movie_parse", false, {{"error", e.what()}, {"line", 0}});
            throw CliExit{4};
        }
    }();
    std::vector<Move> moves;
    for (size_t k = 1; k < lines.size(); ++k) {
        json j = json::parse(lines[k], nullptr, false);
        if (j.is_discarded()) {
            rep.check("movie_parse", false,
                      {{"error", "bad JSON"}, {"move_index", int(k) - 1}});
            throw CliExit{4};
        }
        try {
            moves.push_back(move_from_json(j));
        } catch (const KhError& e) {
            rep.check("movie_parse", false,
                      {{"error", e.what()}, {"move_index", int(k) - 1}});
            throw CliExit{4};
        }
    }
    // Apply progressively so a failing move is named by index.
    for (size_t k = 0; k < moves.size(); ++k) {
        try {
            Movie probe(start,
                        std::vector<Move>(moves.begin(), moves.begin() + k + 1));
        } catch (const KhError& e) {
            rep.check("movie_valid", false,
                      {{"error", e.what()}, {"move_index", int(k)}});
            throw CliExit{4};
        }
    }
    return Movie(start, std::move(moves));
}

Movie load_movie(Report& rep, const std::string& path) {
    return parse_movie(rep, load_bytes(rep, path));
}

bool looks_like_movie(const std::string& bytes) {
    for (char c : bytes) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') continue;
        return c == '{';
    }
    return false;
}

std::string row_string(const MatrixF2& m, int r) {
    std::string s(size_t(m.cols()), '0');
    for (int c = 0; c < m.cols(); ++c)
        if (m.get(r, c)) s[size_t(c)] = '1';
    return s;
}

bool is_zero(const MatrixF2& m) {
    return m == MatrixF2(m.rows(), m.cols());
}

// ---------------------------------------------------------------- kh ------

int cmd_kh(const std::vector<std::string>& argv, const std::string& file,
           const std::string& ring, bool reduced, std::optional<int> bp) {
    Report rep("kh", argv);
    try {
        Diagram d = parse_diagram(rep, load_bytes(rep, file));
        rep.check("parse", true);
        if (bp) {
            if (!d.has_edge(*bp)) {
                rep.check("validate", false,
                          {{"error",
                            "no edge " + std::to_string(*bp) + " in diagram"}});
                throw CliExit{3};
            }
            d = d.with_basepoint(*bp);
        } else if (reduced && !d.basepoint()) {
            d = d.with_basepoint(default_basepoint(d));
        }
        KhCube cube(d);
        if (ring == "f2") {
            HomologyF2 h = reduced ? homology(cube.reduced_f2().complex)
                                   : homology(cube.complex_f2());
            for (auto& [i, j] : h.bidegrees())
                rep.record({{"i", i},
                            {"j", j},
                            {"n", h.dim(i, j)},
                            {"record", "dim"}});
            rep.record({{"n", h.total_dim()}, {"record", "total"}});
        } else {
            HomologyZ h =
                homology(reduced ? cube.reduced_z() : cube.complex_z());
            int free_total = 0, torsion_total = 0;
            for (auto& [ij, b] : h.blocks) {
                if (b.trivial()) continue;
                json tors = json::array();
                for (auto& f : b.torsion) tors.push_back(f.str());
                rep.record({{"free", b.free_rank},
                            {"i", ij.first},
                            {"j", ij.second},
                            {"record", "z_block"},
                            {"torsion", tors}});
                free_total += b.free_rank;
                torsion_total += int(b.torsion.size());
            }
            rep.record({{"free", free_total},
                        {"record", "total"},
                        {"torsion", torsion_total}});
        }
        rep.check("validate", true);
        return rep.finish();
    } catch (const CliExit& x) {
        return rep.finish(x.code);
    } catch (const KhError& e) {
        rep.check("validate", false, {{"error", e.what()}});
        return rep.finish(3);
    }
}

// ---------------------------------------------------------------- map -----

int cmd_map(const std::vector<std::string>& argv, const std::string& file,
            bool reverse) {
    Report rep("map", argv);
    try {
        Movie mv = load_movie(rep, file);
        if (reverse) mv = mv.reversed();
        rep.record({{"euler", mv.euler_char()},
                    {"frames", int(mv.frames().size())},
                    {"moves", int(mv.moves().size())},
                    {"record", "movie"},
                    {"ribbon", mv.is_ribbon()}});
        MovieMaps mm = movie_chain_map(mv);
        const ComplexF2& CA = mm.cubes.front().complex_f2();
        const ComplexF2& CB = mm.cubes.back().complex_f2();
        HomologyF2 hA = homology(CA);
        HomologyF2 hB = homology(CB);
        HomMapF2 hF = on_homology(hA, hB, CA, CB, mm.total);

        bool injective = true;
        for (auto& [i, j] : hA.bidegrees()) {
            MatrixF2 blk = hF.at(hA, hB, i, j);
            json rows = json::array();
            for (int r = 0; r < blk.rows(); ++r)
                rows.push_back(row_string(blk, r));
            rep.record({{"cols", blk.cols()},
                        {"i", i},
                        {"j", j},
                        {"matrix", rows},
                        {"record", "map_block"},
                        {"rows", blk.rows()}});
            if (rank(blk) != blk.cols()) injective = false;
        }
        bool surjective = true;
        for (auto& [i, j] : hB.bidegrees()) {
            MatrixF2 blk = hF.at(hA, hB, i - hF.di, j - hF.dj);
            if (rank(blk) != hB.dim(i, j)) surjective = false;
        }
        rep.record({{"injective", injective},
                    {"record", "verdict"},
                    {"surjective", surjective}});
        rep.check("movie_valid", true);
        return rep.finish();
    } catch (const CliExit& x) {
        return rep.finish(x.code);
    } catch (const KhError& e) {
        rep.check("movie_valid", false, {{"error", e.what()}});
        return rep.finish(4);
    }
}

// ---------------------------------------------------------------- verify --

void run_shumakovitch(Report& rep, Diagram d, const std::string& label,
                      std::optional<int> bp) {
    if (bp)
        d = d.with_basepoint(*bp);
    else if (!d.basepoint())
        d = d.with_basepoint(default_basepoint(d));
    KhCube cube(d);
    const ComplexF2& C = cube.complex_f2();
    HomologyF2 h = homology(C);
    HomologyF2 hr = homology(cube.reduced_f2().complex);

    // dim Kh(i,j) == dim red(i,j-1) + dim red(i,j+1) at every bidegree.
    std::set<Bidegree> bids;
    for (auto& ij : h.bidegrees()) bids.insert(ij);
    for (auto& [i, j] : hr.bidegrees()) {
        bids.insert({i, j - 1});
        bids.insert({i, j + 1});
    }
    bool dims_ok = true;
    json dims_extra = {{"target", label}};
    for (auto& [i, j] : bids) {
        if (h.dim(i, j) != hr.dim(i, j - 1) + hr.dim(i, j + 1)) {
            dims_ok = false;
            dims_extra["bidegree"] = {i, j};
            break;
        }
    }
    rep.check("shumakovitch_dims", dims_ok, dims_extra);

    // X-sequence exactness on homology: the (0,-2) action squares to zero
    // and its kernel equals its image at every bidegree.
    HomMapF2 hX = on_homology(h, h, C, C, cube.x_action());
    bool exact = true;
    json x_extra = {{"target", label}};
    for (auto& [i, j] : h.bidegrees()) {
        MatrixF2 out = hX.at(h, h, i, j);
        MatrixF2 next = hX.at(h, h, i, j - 2);
        if (!is_zero(next * out)) {
            exact = false;
            x_extra["bidegree"] = {i, j};
            break;
        }
        int dim_ker = h.dim(i, j) - rank(out);
        int dim_im = rank(hX.at(h, h, i, j + 2));
        if (dim_ker != dim_im) {
            exact = false;
            x_extra["bidegree"] = {i, j};
            break;
        }
    }
    rep.check("x_sequence_exact", exact, x_extra);
}

void run_ribbon(Report& rep, const Movie& mv) {
    rep.check("movie_ribbon", mv.is_ribbon());
    rep.check("euler_zero", mv.euler_char() == 0);

    MovieMaps fw = movie_chain_map(mv);
    MovieMaps bw = movie_chain_map(mv.reversed());
    const KhCube& cubeA = fw.cubes.front();
    const KhCube& cubeB = fw.cubes.back();
    const ComplexF2& CA = cubeA.complex_f2();
    const ComplexF2& CB = cubeB.complex_f2();
    HomologyF2 hA = homology(CA);
    HomologyF2 hB = homology(CB);

    HomMapF2 hF = on_homology(hA, hB, CA, CB, fw.total);
    bool inj = true;
    json inj_extra = json::object();
    for (auto& [i, j] : hA.bidegrees()) {
        if (rank(hF.at(hA, hB, i, j)) != hA.dim(i, j)) {
            inj = false;
            inj_extra["bidegree"] = {i, j};
            break;
        }
    }
    rep.check("kh_injective", inj, inj_extra);

    ChainMapF2 rt = compose(CA, CB, CA, bw.total, fw.total);
    HomMapF2 hRT = on_homology(hA, hA, CA, CA, rt);
    bool ident = hRT.di == 0 && hRT.dj == 0;
    json id_extra = json::object();
    if (!ident) id_extra["degree"] = {hRT.di, hRT.dj};
    for (auto& [i, j] : hA.bidegrees()) {
        if (!ident) break;
        if (!(hRT.at(hA, hA, i, j) == MatrixF2::identity(hA.dim(i, j)))) {
            ident = false;
            id_extra["bidegree"] = {i, j};
        }
    }
    rep.check("kh_roundtrip_identity", ident, id_extra);

    if (!mv.start().basepoint()) {
        rep.record({{"record", "note"},
                    {"text", "no basepoint; reduced checks skipped"}});
        return;
    }
    HomologyF2 rhA = homology(cubeA.reduced_f2().complex);
    HomologyF2 rhB = homology(cubeB.reduced_f2().complex);
    HomMapF2 rF = reduced_induced(cubeA, cubeB, fw.total);
    bool rinj = true;
    json rinj_extra = json::object();
    for (auto& [i, j] : rhA.bidegrees()) {
        if (rank(rF.at(rhA, rhB, i, j)) != rhA.dim(i, j)) {
            rinj = false;
            rinj_extra["bidegree"] = {i, j};
            break;
        }
    }
    rep.check("reduced_injective", rinj, rinj_extra);

    HomMapF2 rRT = reduced_induced(cubeA, cubeA, rt);
    bool rident = rRT.di == 0 && rRT.dj == 0;
    json rid_extra = json::object();
    if (!rident) rid_extra["degree"] = {rRT.di, rRT.dj};
    for (auto& [i, j] : rhA.bidegrees()) {
        if (!rident) break;
        if (!(rRT.at(rhA, rhA, i, j) == MatrixF2::identity(rhA.dim(i, j)))) {
            rident = false;
            rid_extra["bidegree"] = {i, j};
        }
    }
    rep.check("reduced_roundtrip_identity", rident, rid_extra);
}

bool map_nonzero(const HomMapF2& m, const HomologyF2& hsrc,
                 const HomologyF2& htgt) {
    for (auto& [i, j] : hsrc.bidegrees())
        if (!is_zero(m.at(hsrc, htgt, i, j))) return true;
    return false;
}

void run_steenrod(Report& rep, const Movie& mv) {
    MovieMaps fw = movie_chain_map(mv);
    const KhCube& cubeA = fw.cubes.front();
    const KhCube& cubeB = fw.cubes.back();
    const ComplexF2& CA = cubeA.complex_f2();
    const ComplexF2& CB = cubeB.complex_f2();
    HomologyF2 hA = homology(CA);
    HomologyF2 hB = homology(CB);
    HomMapF2 hF = on_homology(hA, hB, CA, CB, fw.total);
    HomMapF2 sqA = sq1(cubeA, hA);
    HomMapF2 sqB = sq1(cubeB, hB);

    // Naturality square: Sq1 after the map equals the map after Sq1.
    bool natural = true;
    json nat_extra = json::object();
    for (auto& [i, j] : hA.bidegrees()) {
        MatrixF2 lhs = sqB.at(hB, hB, i, j) * hF.at(hA, hB, i, j);
        MatrixF2 rhs = hF.at(hA, hB, i + 1, j) * sqA.at(hA, hA, i, j);
        if (!(lhs == rhs)) {
            natural = false;
            nat_extra["bidegree"] = {i, j};
            break;
        }
    }
    rep.check("sq1_natural", natural, nat_extra);
    rep.check("sq1_nonzero_start", map_nonzero(sqA, hA, hA));
    rep.check("sq1_nonzero_end", map_nonzero(sqB, hB, hB));
}

int cmd_verify(const std::vector<std::string>& argv, const std::string& suite,
               const std::string& file, std::optional<int> bp) {
    Report rep("verify", argv);
    bool movie_target = false;
    try {
        std::string bytes = load_bytes(rep, file);
        movie_target = looks_like_movie(bytes);
        std::optional<Movie> mv;
        std::optional<Diagram> dia;
        if (movie_target)
            mv = parse_movie(rep, bytes);
        else
            dia = parse_diagram(rep, bytes);

        bool needs_movie = suite == "ribbon" || suite == "steenrod";
        if (needs_movie && !mv) {
            rep.check("target_is_movie", false,
                      {{"error", "suite '" + suite + "' needs a movie file"}});
            throw CliExit{3};
        }

        if (suite == "shumakovitch" || suite == "all") {
            if (mv) {
                run_shumakovitch(rep, mv->start(), "start", bp);
                run_shumakovitch(rep, mv->end(), "end", bp);
            } else {
                run_shumakovitch(rep, *dia, "input", bp);
            }
        }
        if (suite == "ribbon" || (suite == "all" && mv)) run_ribbon(rep, *mv);
        if (suite == "steenrod" || (suite == "all" && mv))
            run_steenrod(rep, *mv);
        if (suite == "all" && !mv)
            rep.record({{"record", "note"},
                        {"text",
                         "ribbon and steenrod suites need a movie; skipped"}});
        return rep.finish(1);
    } catch (const CliExit& x) {
        return rep.finish(x.code);
    } catch (const KhError& e) {
        rep.check("validate", false, {{"error", e.what()}});
        return rep.finish(movie_target ? 4 : 3);
    }
}

// ---------------------------------------------------------------- construct

int cmd_construct(const std::vector<std::string>& argv, int n,
                  const std::string& out_dir) {
    Report rep("construct", argv);
    try {
        CompanionBundle b =
            build_companion(std::vector<Tangle>(size_t(n), trefoil_ears()));
        fs::create_directories(out_dir);
        std::string prefix = "companion_n" + std::to_string(n);
        auto emit_file = [&](const std::string& kind, const std::string& name,
                             const std::string& bytes) {
            std::string path = (fs::path(out_dir) / name).string();
            write_file(path, bytes);
            rep.record({{"digest", digest_of(bytes)},
                        {"kind", kind},
                        {"path", path},
                        {"record", "file"}});
        };
        emit_file("composite", prefix + "_composite.pd",
                  b.composite.serialize() + "\n");
        emit_file("companion", prefix + "_companion.pd",
                  b.companion.serialize() + "\n");
        emit_file("movie", prefix + ".movie", b.movie.serialize());
        json bp = b.basepoint ? json(*b.basepoint) : json(nullptr);
        rep.record({{"basepoint", bp},
                    {"companion_crossings", int(b.companion.crossings().size())},
                    {"composite_crossings", int(b.composite.crossings().size())},
                    {"euler", b.movie.euler_char()},
                    {"n", n},
                    {"record", "bundle"},
                    {"ribbon", b.movie.is_ribbon()}});
        rep.check("construct", true);
        return rep.finish();
    } catch (const CliExit& x) {
        return rep.finish(x.code);
    } catch (const KhError& e) {
        rep.check("construct", false, {{"error", e.what()}});
        return rep.finish(3);
    }
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    if (!args.empty()) args[0] = fs::path(args[0]).filename().string();

    CLI::App app{
        "Khovanov homology workbench: homology tables, cobordism movie maps, "
        "verification suites, and companion bundles.  Reports are JSON lines "
        "(schema kh.report.v1).  KH_THREADS caps parallelism."};
    app.require_subcommand(1);

    std::string kh_file, kh_ring = "f2";
    bool kh_reduced = false;
    int kh_bp = 0;
    auto* kh_cmd = app.add_subcommand("kh", "Homology of a diagram file");
    kh_cmd->add_option("file", kh_file, "diagram file (PD text)")->required();
    kh_cmd->add_option("--ring", kh_ring, "coefficients: f2 or z")
        ->check(CLI::IsMember({"f2", "z"}));
    kh_cmd->add_flag("--reduced", kh_reduced, "reduced homology");
    auto* kh_bp_opt = kh_cmd->add_option(
        "--bp", kh_bp,
        "basepoint edge (default: smallest edge on the first component)");

    std::string map_file;
    bool map_reverse = false;
    auto* map_cmd =
        app.add_subcommand("map", "Induced homology map of a movie file");
    map_cmd->add_option("file", map_file, "movie file (JSON lines)")
        ->required();
    map_cmd->add_flag("--reverse", map_reverse,
                      "use the reversed movie instead");

    std::string verify_suite, verify_file;
    int verify_bp = 0;
    auto* verify_cmd =
        app.add_subcommand("verify", "Run a verification suite on a target");
    verify_cmd
        ->add_option("suite", verify_suite,
                     "one of: shumakovitch, ribbon, steenrod, all")
        ->required()
        ->check(CLI::IsMember({"shumakovitch", "ribbon", "steenrod", "all"}));
    verify_cmd->add_option("file", verify_file, "diagram or movie file")
        ->required();
    auto* verify_bp_opt = verify_cmd->add_option(
        "--bp", verify_bp, "basepoint edge for the reduced theory");

    int construct_n = 1;
    std::string construct_out = ".";
    auto* construct_cmd = app.add_subcommand(
        "construct", "Emit companion bundle files for n summands");
    construct_cmd->add_option("n", construct_n, "number of summands")
        ->required()
        ->check(CLI::Range(1, 16));
    construct_cmd->add_option("--out", construct_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    if (kh_cmd->parsed())
        return cmd_kh(args, kh_file, kh_ring, kh_reduced,
                      *kh_bp_opt ? std::optional<int>(kh_bp) : std::nullopt);
    if (map_cmd->parsed()) return cmd_map(args, map_file, map_reverse);
    if (verify_cmd->parsed())
        return cmd_verify(args, verify_suite, verify_file,
                          *verify_bp_opt ? std::optional<int>(verify_bp)
                                         : std::nullopt);
    if (construct_cmd->parsed())
        return cmd_construct(args, construct_n, construct_out);
    return 0;
}
