#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "halox/bench.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace halox;
using namespace halox::bench;
using nlohmann::json;

namespace fs = std::filesystem;

namespace {

json base() { return json{{"schema_version", 1}}; }

fs::path scratch(const std::string& name)
{
    const auto p = fs::temp_directory_path() / ("halox_bench_test_" + name);
    fs::remove_all(p);
    return p;
}

std::vector<std::string> lines_of(const fs::path& p)
{
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);)
        out.push_back(l);
    return out;
}

} // namespace

TEST_CASE("defaults resolve from a minimal document")
{
    const auto c = parse_config(base());
    CHECK(c.ranks == 8);
    CHECK(c.cutoff == 1.0);
    CHECK(!c.schedule);
    CHECK(c.memoryModel == pgas::MemoryMode::WeakAdversary);
    CHECK(c.island_map() == std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1});
    CHECK(!c.seeds.empty());
}

TEST_CASE("config errors")
{
    auto bad = [](json j) { CHECK_THROWS_AS(parse_config(j), ConfigError); };
    bad(json::object());
    bad(json{{"schema_version", 2}});
    bad(json{{"schema_version", 1}, {"cutof", 1.0}});
    bad(json{{"schema_version", 1}, {"exchange", {{"buflength", 4}}}});
    bad(json{{"schema_version", 1}, {"machine", {{"warp_speed", 4}}}});
    bad(json{{"schema_version", 1}, {"machine", {{"net_bandwidth", 0}}}});
    bad(json{{"schema_version", 1}, {"sweep", {{"dims", 4}}}});
    bad(json{{"schema_version", 1}, {"sweep", {{"layouts", {{4, 8}}}}}});
    bad(json{{"schema_version", 1}, {"seeds", json::array()}});
    bad(json{{"schema_version", 1}, {"box", {1.0, 2.0}}});
    bad(json{{"schema_version", 1}, {"cutoff", "big"}});
    bad(json{{"schema_version", 1}, {"schedule", "eager"}});
    bad(json{{"schema_version", 1}, {"memory_model", "tso"}});
    bad(json{{"schema_version", 1}, {"mutation", "nope"}});
    bad(json{{"schema_version", 1}, {"aggressiveness", 1.5}});
    bad(json{{"schema_version", 1}, {"atoms", {{"count", 10}, {"file", "a.txt"}}}});
    bad(json{{"schema_version", 1}, {"ranks", 4}, {"islands", {0, 0, 1}}});
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("resolved config round-trips")
{
    json j = base();
    j["ranks"] = 4;
    j["box"] = {8.0, 9.0, 10.0};
    j["schedule"] = "fused";
    j["machine"] = {{"mpi_overhead", 12.5}};
    j["sweep"] = {{"atoms_per_rank", {1000, 2000}}, {"layouts", {{1, 4}}}};
    const auto c = parse_config(j);
    CHECK(c.machine_model().mpiOverhead == 12.5);
    const auto echoed = to_json(c);
    const auto again = to_json(parse_config(json::parse(echoed.dump())));
    CHECK(echoed.dump() == again.dump());
    CHECK(echoed["schedule"] == "fused");
    CHECK(echoed["machine"]["mpi_overhead"] == 12.5);
}

TEST_CASE("sweep CSV is deterministic and echoes its provenance")
{
    auto c = parse_config(base());
    std::ostringstream a, b;
    write_sweep_csv(c, a);
    write_sweep_csv(c, b);
    CHECK(a.str() == b.str());
    std::istringstream in(a.str());
    std::size_t rows = 0, comments = 0;
    bool header = false;
    for (std::string l; std::getline(in, l);) {
        if (l.rfind("#", 0) == 0)
            ++comments;
        else if (l == sim::kCsvHeader)
            header = true;
        else
            ++rows;
    }
    CHECK(header);
    CHECK(comments >= 3);
    CHECK(rows == 40); // 5 sizes x 4 layouts x 2 schedules
    CHECK(a.str().find("# config ") != std::string::npos);
    CHECK(a.str().find("# seeds ") != std::string::npos);

    c.schedule = ex::Schedule::Fused;
    std::ostringstream f;
    write_sweep_csv(c, f);
    CHECK(f.str().find(",serialized,") == std::string::npos);
}

TEST_CASE("verify writes a report with a config header")
{
    json j = base();
    j["seeds"] = {1, 2};
    j["out"] = scratch("verify").string();
    const auto c = parse_config(j);
    std::ostringstream log;
    CHECK(cmd_verify(c, log) == kOk);
    const auto lines = lines_of(fs::path(c.out) / "verify.jsonl");
    REQUIRE(lines.size() > 2);
    const auto head = json::parse(lines[0]);
    CHECK(head["record"] == "config");
    CHECK(head["seeds"] == json({1, 2}));
    for (std::size_t i = 1; i < lines.size(); ++i)
        CHECK(json::parse(lines[i])["pass"] == true);
}

TEST_CASE("an injected mutation fails litmus and is named in the report")
{
    json j = base();
    j["seeds"] = {1};
    j["litmus_trials"] = 50;
    j["mutation_seeds"] = 40;
    j["mutation"] = "drop-pack-wait";
    j["out"] = scratch("litmus").string();
    const auto c = parse_config(j);
    std::ostringstream log;
    CHECK(cmd_litmus(c, log) == kCheckFailure);
    CHECK(log.str().find("drop-pack-wait") != std::string::npos);
    bool named = false;
    for (const auto& l : lines_of(fs::path(c.out) / "litmus.jsonl")) {
        const auto r = json::parse(l);
        if (r.value("record", "") == "injected") {
            named = r["mutation"] == "drop-pack-wait" && r["caught"] == true;
        }
    }
    CHECK(named);
}

TEST_CASE("litmus passes without an injected mutation")
{
    json j = base();
    j["seeds"] = {1};
    j["litmus_trials"] = 50;
    j["mutation_seeds"] = 60;
    j["out"] = scratch("litmus_ok").string();
    std::ostringstream log;
    CHECK(cmd_litmus(parse_config(j), log) == kOk);
}

TEST_CASE("trace writes timelines and event logs")
{
    json j = base();
    j["ranks"] = 4;
    j["atoms"] = {{"count", 500}};
    j["sweep"] = {{"atoms_per_rank", {11250}}, {"layouts", {{1, 4}, {3, 32}}}};
    j["out"] = scratch("trace").string();
    const auto c = parse_config(j);
    std::ostringstream log;
    CHECK(cmd_trace(c, log) == kOk);
    const auto dir = fs::path(c.out) / "trace";
    const auto t = lines_of(dir / "timeline_11250_32r_3d_fused.csv");
    REQUIRE(!t.empty());
    CHECK(t[0].rfind("# haloxsim trace", 0) == 0);
    CHECK(std::find(t.begin(), t.end(), "stream,kind,pulse,start_us,end_us") != t.end());
    CHECK(fs::exists(dir / "timeline_system_serialized.csv"));
    CHECK(fs::exists(dir / "events_fused.jsonl"));
    CHECK(lines_of(dir / "events_fused.jsonl").size() > 10);
}
