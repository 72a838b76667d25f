#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "isac/rng.hpp"
#include "isac/sounding_io.hpp"

using namespace isac;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("isac_io_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

DatasetMeta small_meta(std::size_t n_links, int n_subcarriers) {
    DatasetMeta meta;
    meta.carrier_hz = 3e9;
    meta.bandwidth_hz = 50e6;
    meta.n_subcarriers = n_subcarriers;
    meta.n_links = static_cast<int>(n_links);
    meta.snapshot_rate_hz = 1000.0;
    meta.links.clear();
    for (std::size_t i = 0; i < n_links; ++i)
        meta.links.emplace_back("tx0", "rx" + std::to_string(i));
    meta.node_positions["tx0"] = {0, 0, 10};
    for (std::size_t i = 0; i < n_links; ++i)
        meta.node_positions["rx" + std::to_string(i)] = {50.0 + 10.0 * i, 0, 10};
    return meta;
}

CfrStream random_stream(std::size_t n_snapshots, std::size_t n_links, int n_subcarriers,
                        std::uint64_t seed) {
    SplitMix64 rng(seed);
    CfrStream stream;
    stream.snapshot_rate_hz = 1000.0;
    stream.n_subcarriers = static_cast<std::size_t>(n_subcarriers);
    for (std::size_t n = 0; n < n_snapshots; ++n) {
        CfrSnapshot snap;
        snap.t_s = n / 1000.0;
        snap.links.resize(n_links);
        for (auto& link : snap.links) {
            link.resize(static_cast<std::size_t>(n_subcarriers));
            for (auto& v : link)
                v = Complex32(static_cast<float>(rng.next_normal()),
                              static_cast<float>(rng.next_normal()));
        }
        stream.snapshots.push_back(std::move(snap));
    }
    return stream;
}

}  // namespace

TEST_CASE("empty stream produces a valid container with an empty payload") {
    const auto dir = temp_dir("empty");
    write_dataset(CfrStream{}, {}, small_meta(1, 4), dir);
    CHECK(fs::file_size(dir / "cfr.bin") == 0);

    DatasetReader reader(dir);
    CHECK(reader.meta().n_snapshots == 0);
    CHECK(reader.ground_truth().empty());
}

TEST_CASE("payload size is snapshots x links x subcarriers x 8 bytes") {
    const auto dir = temp_dir("sized");
    write_dataset(random_stream(2, 1, 4, 5), {}, small_meta(1, 4), dir);
    CHECK(fs::file_size(dir / "cfr.bin") == 64);
}

TEST_CASE("write then read returns a bit-identical stream") {
    const auto dir = temp_dir("roundtrip");
    const CfrStream original = random_stream(1000, 3, 16, 42);

    std::vector<GroundTruthRecord> gt;
    for (int i = 0; i < 10; ++i) {
        GroundTruthRecord r;
        r.t_s = i * 0.1;
        r.target_id = "uav";
        r.position = {i * 1.0, i * 2.0, 5.0};
        r.velocity = Vec3{10.0, 20.0, 0.0};
        gt.push_back(r);
    }
    write_dataset(original, gt, small_meta(3, 16), dir);

    const auto [readback, gt_back] = read_dataset(dir);
    REQUIRE(readback.snapshots.size() == original.snapshots.size());
    for (std::size_t n = 0; n < original.snapshots.size(); ++n)
        for (std::size_t li = 0; li < 3; ++li)
            for (std::size_t k = 0; k < 16; ++k)
                CHECK(readback.snapshots[n].links[li][k] == original.snapshots[n].links[li][k]);

    REQUIRE(gt_back.size() == gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) {
        CHECK(gt_back[i].t_s == gt[i].t_s);
        CHECK(gt_back[i].target_id == gt[i].target_id);
        CHECK(gt_back[i].position.x == gt[i].position.x);
        REQUIRE(gt_back[i].velocity.has_value());
        CHECK(gt_back[i].velocity->x == gt[i].velocity->x);
    }

    // Writing the readback again reproduces cfr.bin byte for byte.
    const auto dir2 = temp_dir("roundtrip2");
    write_dataset(readback, gt_back, small_meta(3, 16), dir2);
    std::ifstream a(dir / "cfr.bin", std::ios::binary);
    std::ifstream b(dir2 / "cfr.bin", std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
    const std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
    CHECK(bytes_a == bytes_b);
}

TEST_CASE("truncated payload raises a length mismatch naming both sizes") {
    const auto dir = temp_dir("truncated");
    write_dataset(random_stream(10, 2, 8, 9), {}, small_meta(2, 8), dir);
    fs::resize_file(dir / "cfr.bin", 100);
    try {
        DatasetReader reader(dir);
        FAIL("expected LengthMismatchError");
    } catch (const LengthMismatchError& e) {
        const std::string what = e.what();
        CHECK(what.find("1280") != std::string::npos);  // expected bytes
        CHECK(what.find("100") != std::string::npos);   // actual bytes
    }
}

TEST_CASE("unknown format version raises a version error") {
    const auto dir = temp_dir("version");
    write_dataset(random_stream(2, 1, 4, 1), {}, small_meta(1, 4), dir);
    // Bump the version in meta.json.
    std::ifstream in(dir / "meta.json");
    std::string text((std::istreambuf_iterator<char>(in)), {});
    in.close();
    const auto pos = text.find("\"format_version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 19, "\"format_version\": 2");
    std::ofstream out(dir / "meta.json", std::ios::trunc);
    out << text;
    out.close();
    CHECK_THROWS_AS(DatasetReader{dir}, VersionError);
}

TEST_CASE("missing files raise distinct errors") {
    const auto dir = temp_dir("missing");
    write_dataset(random_stream(2, 1, 4, 1), {}, small_meta(1, 4), dir);

    fs::remove(dir / "gt.csv");
    CHECK_THROWS_AS(DatasetReader{dir}, FileMissingError);

    const auto dir2 = temp_dir("missing2");
    write_dataset(random_stream(2, 1, 4, 1), {}, small_meta(1, 4), dir2);
    fs::remove(dir2 / "cfr.bin");
    CHECK_THROWS_AS(DatasetReader{dir2}, FileMissingError);

    const auto dir3 = temp_dir("missing3");
    CHECK_THROWS_AS(DatasetReader{dir3}, FileMissingError);
}

TEST_CASE("writer enforces snapshot dimensions") {
    const auto dir = temp_dir("dims");
    DatasetWriter writer(dir, small_meta(2, 8));
    CfrSnapshot bad;
    bad.links.resize(1);  // meta says 2 links
    bad.links[0].resize(8);
    CHECK_THROWS_AS(writer.append(bad), SizeError);
}

TEST_CASE("random access snapshots equal sequential ones") {
    const auto dir = temp_dir("seek");
    const CfrStream original = random_stream(50, 2, 8, 77);
    write_dataset(original, {}, small_meta(2, 8), dir);

    DatasetReader reader(dir);
    const CfrSnapshot s40 = reader.snapshot(40);
    const CfrSnapshot s7 = reader.snapshot(7);
    for (std::size_t k = 0; k < 8; ++k) {
        CHECK(s40.links[1][k] == original.snapshots[40].links[1][k]);
        CHECK(s7.links[0][k] == original.snapshots[7].links[0][k]);
    }
    CHECK_THROWS_AS(reader.snapshot(50), DataError);
}

TEST_CASE("ground truth interpolation: records, midpoints, constant velocity") {
    std::vector<GroundTruthRecord> gt;
    for (int i = 0; i <= 4; ++i) {
        GroundTruthRecord r;
        r.t_s = i * 1.0;
        r.target_id = "t";
        r.position = {3.0 * i, -1.0 * i, 2.0 * i};  // constant velocity (3, -1, 2)
        gt.push_back(r);
    }

    // Exactly on a record.
    const auto [p2, v2] = interpolate_ground_truth(gt, 2.0);
    CHECK(p2.x == doctest::Approx(6.0));

    // Midpoint of two records: arithmetic mean.
    const auto [pm, vm] = interpolate_ground_truth(gt, 2.5);
    CHECK(pm.x == doctest::Approx(7.5));
    CHECK(pm.y == doctest::Approx(-2.5));

    // Velocity from the finite difference equals the constant within 1e-9.
    CHECK(std::abs(vm.x - 3.0) < 1e-9);
    CHECK(std::abs(vm.y + 1.0) < 1e-9);
    CHECK(std::abs(vm.z - 2.0) < 1e-9);

    // Clamped outside the span.
    const auto [p_lo, v_lo] = interpolate_ground_truth(gt, -1.0);
    CHECK(p_lo.x == doctest::Approx(0.0));
    const auto [p_hi, v_hi] = interpolate_ground_truth(gt, 99.0);
    CHECK(p_hi.x == doctest::Approx(12.0));

    CHECK_THROWS_AS(interpolate_ground_truth({}, 0.0), DataError);
}

TEST_CASE("records carrying velocity fields win over finite differences") {
    std::vector<GroundTruthRecord> gt(2);
    gt[0] = {0.0, "t", {0, 0, 0}, Vec3{100.0, 0.0, 0.0}};
    gt[1] = {1.0, "t", {1, 0, 0}, Vec3{100.0, 0.0, 0.0}};
    const auto [p, v] = interpolate_ground_truth(gt, 0.5);
    CHECK(v.x == doctest::Approx(100.0));  // recorded, not the FD value 1.0
}

TEST_CASE("mobile nodes round-trip through trajectory files") {
    ScenarioConfig cfg;
    cfg.carrier_hz = 3e9;
    cfg.bandwidth_hz = 50e6;
    cfg.n_subcarriers = 8;
    cfg.snapshot_rate_hz = 1000.0;
    cfg.duration_s = 0.01;
    cfg.noise_power_dbm = -100.0;
    NodeSpec tx;
    tx.id = "tx0";
    tx.role = NodeRole::tx;
    tx.trajectory = TrajectorySpec({{0.0, {0, 0, 0}}, {1.0, {10, 0, 0}}}, Interpolation::linear);
    NodeSpec rx;
    rx.id = "rx0";
    rx.role = NodeRole::rx;
    rx.trajectory = TrajectorySpec::stationary({50, 0, 0});
    cfg.nodes = {tx, rx};
    cfg.links = {{"tx0", "rx0"}};

    const auto dir = temp_dir("mobile");
    DatasetMeta meta = make_meta(cfg);
    CHECK(meta.node_trajectory_files.count("tx0") == 1);
    CHECK(meta.node_positions.count("rx0") == 1);
    write_node_trajectories(cfg, meta, dir);
    write_dataset(CfrStream{}, {}, meta, dir);

    DatasetReader reader(dir);
    const Vec3 p = reader.meta().node_position("tx0", 0.5, dir);
    CHECK(p.x == doctest::Approx(5.0));
    const Vec3 q = reader.meta().node_position("rx0", 0.5, dir);
    CHECK(q.x == doctest::Approx(50.0));
}
