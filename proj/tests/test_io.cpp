#include "helpers.hpp"

#include "mmfit/io.hpp"
#include "mmfit/simulate.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mmfit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("mmfit_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path write(const std::string& file, const std::string& text) const {
        std::ofstream(path / file, std::ios::binary) << text;
        return path / file;
    }
};

std::string ingest_error(const fs::path& data, const std::vector<fs::path>& members, IngestOptions opts = {"y", {}, false}) {
    try {
        ingest(data, members, opts);
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::data);
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("parse_csv") {
    std::istringstream in("\xEF\xBB\xBFunit_id, y ,note\r\ns1,1.5,\"a, b\"\n\ns2,2,\"say \"\"hi\"\"\"\n");
    const auto t = parse_csv(in, "t.csv");
    CHECK(t.header == std::vector<std::string>{"unit_id", "y", "note"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][2] == "a, b");
    CHECK(t.rows[1][2] == "say \"hi\"");
    CHECK(t.line_numbers[1] == 4);
    std::istringstream bad("a,b\n1\n");
    CHECK(testing::error_code([&] { parse_csv(bad, "bad.csv"); }) == Errc::ingest);
}

TEST_CASE("numbers") {
    CHECK(parse_double("1.5") == 1.5);
    CHECK(parse_double("+2e-3") == 2e-3);
    CHECK(!parse_double("1.5x"));
    CHECK(!parse_double("abc"));
    CHECK(is_missing_token("NA"));
    CHECK(is_missing_token(""));
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.123456789}) CHECK(parse_double(format_double(v)) == v);
}

TEST_CASE("ingest") {
    TempDir dir("ingest");
    const auto data = dir.write("data.csv", "unit_id,y,x,name\ns1,1.0,0.5,ann\ns2,2.0,NA,bob\ns3,0.5,1.5,cy\n");
    SUBCASE("s1 is a member of A and B with 0.4 and 0.6") {
        const auto m = dir.write("m.csv", "unit_id,classification,cluster_id,weight\n"
                                          "s1,teacher,A,0.4\ns1,teacher,B,0.6\ns2,teacher,B,1\ns3,teacher,A,1.0\n");
        const auto r = ingest(data, {m}, {"y", {}, false});
        REQUIRE(r.designs.size() == 1);
        const auto& d = r.designs[0];
        CHECK(d.name() == "teacher");
        CHECK(d.row(0).size() == 2);
        CHECK(d.row(0)[0] == MembershipEntry{0, 0.4});
        CHECK(d.row(0)[1] == MembershipEntry{1, 0.6});
        CHECK(d.row(1).size() == 1);
        CHECK(r.data.n_units() == 3);
        CHECK(!r.data.has_column("name"));
    }
    SUBCASE("raw lesson counts with normalize") {
        const auto m = dir.write("m.csv", "unit_id,classification,cluster_id,weight\n"
                                          "s1,teacher,A,2\ns1,teacher,B,3\ns2,teacher,B,1\ns3,teacher,A,4\n");
        CHECK(ingest_error(data, {m}).find("m.csv:2") != std::string::npos);
        const auto r = ingest(data, {m}, {"y", {}, true});
        CHECK(r.designs[0].row(0)[0].weight == 0.4);
        CHECK(r.designs[0].row(0)[1].weight == 0.6);
        CHECK(r.designs[0].row(2)[0].weight == 1.0);
    }
    SUBCASE("complete cases only") {
        const auto m = dir.write("m.csv", "unit_id,classification,cluster_id,weight\ns1,t,A,1\ns2,t,B,1\ns3,t,A,1\n");
        const auto r = ingest(data, {m}, {"y", {"x"}, false});
        CHECK(r.dropped_units == 1);
        CHECK(r.data.unit_ids() == std::vector<std::string>{"s1", "s3"});
        CHECK(r.designs[0].n_clusters() == 1);
        CHECK(!r.warnings.empty());
    }
    SUBCASE("two classifications in separate files") {
        const auto m1 = dir.write("m1.csv", "unit_id,classification,cluster_id,weight\ns1,t,A,1\ns2,t,B,1\ns3,t,A,1\n");
        const auto m2 = dir.write("m2.csv", "unit_id,classification,cluster_id,weight\ns1,h,X,1\ns2,h,X,1\ns3,h,Y,1\n");
        const auto r = ingest(data, {m1, m2}, {"y", {}, false});
        REQUIRE(r.designs.size() == 2);
        CHECK(r.designs[1].name() == "h");
    }
    SUBCASE("errors carry file and line") {
        const auto unknown = dir.write("u.csv", "unit_id,classification,cluster_id,weight\ns1,t,A,1\ns9,t,A,1\n");
        CHECK(ingest_error(data, {unknown}).find("u.csv:3: unknown unit_id 's9'") != std::string::npos);
        const auto badnum = dir.write("b.csv", "unit_id,classification,cluster_id,weight\ns1,t,A,one\n");
        CHECK(ingest_error(data, {badnum}).find("b.csv:2") != std::string::npos);
        const auto missing = dir.write("c.csv", "unit_id,classification,weight\ns1,t,1\n");
        CHECK(ingest_error(data, {missing}).find("cluster_id") != std::string::npos);
        const auto sum = dir.write("s.csv", "unit_id,classification,cluster_id,weight\n"
                                            "s1,t,A,0.4\ns1,t,B,0.5\ns2,t,A,1\ns3,t,A,1\n");
        CHECK(ingest_error(data, {sum}).find("s.csv:2") != std::string::npos);
        const auto dup = dir.write("d.csv", "unit_id,classification,cluster_id,weight\ns1,t,A,0.5\ns1,t,A,0.5\n");
        CHECK(ingest_error(data, {dup}).find("d.csv:3") != std::string::npos);
        const auto neg = dir.write("n.csv", "unit_id,classification,cluster_id,weight\ns1,t,A,-1\n");
        CHECK(ingest_error(data, {neg}).find("n.csv:2") != std::string::npos);
        const auto gap = dir.write("g.csv", "unit_id,classification,cluster_id,weight\ns1,t,A,1\n");
        CHECK(ingest_error(data, {gap}).find("s2") != std::string::npos);
        const auto baddata = dir.write("bad.csv", "unit_id,y\ns1,abc\n");
        CHECK(ingest_error(baddata, {gap}).find("bad.csv:2") != std::string::npos);
    }
}

TEST_CASE("round trip: simulate, write, ingest") {
    TempDir dir("roundtrip");
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SimConfig cfg;
        cfg.n_units = 150;
        cfg.seed = seed;
        cfg.beta = {0.3, -1.0, 2.0};
        cfg.classifications = {
            ClassificationSim{"teacher", 12, Cardinality::uniform(3), SimWeights::random_proportions, 0.3},
            ClassificationSim{"school", 4, Cardinality::fixed(1), SimWeights::equal, 0.1}};
        const auto sim = simulate(cfg);
        write_dataset_csv(dir.path / "data.csv", sim.data);
        std::vector<fs::path> files;
        for (const auto& d : sim.spec.classifications()) {
            files.push_back(dir.path / ("m_" + d.name() + ".csv"));
            write_memberships_csv(files.back(), d, sim.data.unit_ids());
        }
        const auto r = ingest(dir.path / "data.csv", files, {"y", {"x1", "x2"}, false});
        CHECK(r.data == sim.data);
        REQUIRE(r.designs.size() == 2);
        for (std::size_t c = 0; c < 2; ++c) {
            const auto& a = r.designs[c];
            const auto& b = sim.spec.classifications()[c];
            // Labels come back in sorted order, which matches the simulator's
            // zero-padded labels whenever every cluster has a member.
            std::vector<bool> seen(b.n_clusters(), false);
            for (const auto& row : b.rows()) {
                for (const auto& e : row) seen[e.cluster] = true;
            }
            REQUIRE(std::count(seen.begin(), seen.end(), true) == static_cast<long>(b.n_clusters()));
            CHECK(a == b);
        }
    }
}
