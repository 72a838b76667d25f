#include "isac/sounding_io.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace isac {

using nlohmann::json;

namespace {

constexpr const char* kMetaFile = "meta.json";
constexpr const char* kCfrFile = "cfr.bin";
constexpr const char* kGtFile = "gt.csv";
constexpr const char* kGtHeader = "t_s,target_id,x,y,z,vx,vy,vz";

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json meta_to_json(const DatasetMeta& meta) {
    json j;
    j["format_version"] = meta.format_version;
    j["carrier_hz"] = meta.carrier_hz;
    j["bandwidth_hz"] = meta.bandwidth_hz;
    j["n_subcarriers"] = meta.n_subcarriers;
    j["n_snapshots"] = meta.n_snapshots;
    j["n_links"] = meta.n_links;
    j["snapshot_rate_hz"] = meta.snapshot_rate_hz;
    json links = json::array();
    for (const auto& [tx, rx] : meta.links) links.push_back({{"tx_id", tx}, {"rx_id", rx}});
    j["links"] = links;
    json positions = json::object();
    for (const auto& [id, pos] : meta.node_positions)
        positions[id] = {pos.x, pos.y, pos.z};
    for (const auto& [id, file] : meta.node_trajectory_files)
        positions[id] = {{"trajectory_file", file}};
    j["node_positions"] = positions;
    return j;
}

DatasetMeta meta_from_json(const json& j) {
    DatasetMeta meta;
    meta.format_version = j.at("format_version").get<int>();
    if (meta.format_version != 1)
        throw VersionError("unsupported dataset format_version " +
                           std::to_string(meta.format_version) + " (supported: 1)");
    meta.carrier_hz = j.at("carrier_hz").get<double>();
    meta.bandwidth_hz = j.at("bandwidth_hz").get<double>();
    meta.n_subcarriers = j.at("n_subcarriers").get<int>();
    meta.n_snapshots = j.at("n_snapshots").get<std::size_t>();
    meta.n_links = j.at("n_links").get<int>();
    meta.snapshot_rate_hz = j.at("snapshot_rate_hz").get<double>();
    for (const auto& l : j.at("links"))
        meta.links.emplace_back(l.at("tx_id").get<std::string>(), l.at("rx_id").get<std::string>());
    if (static_cast<int>(meta.links.size()) != meta.n_links)
        throw DataError("meta.json: n_links disagrees with the links list");
    for (const auto& [id, v] : j.at("node_positions").items()) {
        if (v.is_array())
            meta.node_positions[id] = {v.at(0).get<double>(), v.at(1).get<double>(),
                                       v.at(2).get<double>()};
        else
            meta.node_trajectory_files[id] = v.at("trajectory_file").get<std::string>();
    }
    return meta;
}

void write_snapshot_payload(std::ofstream& out, const CfrSnapshot& snap, int n_links,
                            int n_subcarriers) {
    if (static_cast<int>(snap.links.size()) != n_links)
        throw SizeError("snapshot link count " + std::to_string(snap.links.size()) +
                        " does not match meta n_links " + std::to_string(n_links));
    for (const auto& link : snap.links) {
        if (static_cast<int>(link.size()) != n_subcarriers)
            throw SizeError("snapshot subcarrier count " + std::to_string(link.size()) +
                            " does not match meta n_subcarriers " +
                            std::to_string(n_subcarriers));
        out.write(reinterpret_cast<const char*>(link.data()),
                  static_cast<std::streamsize>(link.size() * sizeof(Complex32)));
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

}  // namespace

Vec3 DatasetMeta::node_position(const std::string& id, double t_s,
                                const std::filesystem::path& base_dir) const {
    if (auto it = node_positions.find(id); it != node_positions.end()) return it->second;
    if (auto it = node_trajectory_files.find(id); it != node_trajectory_files.end()) {
        std::ifstream in(base_dir / it->second);
        if (!in)
            throw FileMissingError("node trajectory file missing: " +
                                   (base_dir / it->second).string());
        json j;
        in >> j;
        std::vector<TrajectorySpec::Waypoint> wps;
        for (const auto& w : j.at("waypoints"))
            wps.push_back({w.at("t_s").get<double>(),
                           {w.at("position_m").at(0).get<double>(),
                            w.at("position_m").at(1).get<double>(),
                            w.at("position_m").at(2).get<double>()}});
        const Interpolation interp =
            j.value("interpolation", std::string("linear")) == "cubic" ? Interpolation::cubic
                                                                       : Interpolation::linear;
        return TrajectorySpec(std::move(wps), interp).position_at(t_s);
    }
    throw DataError("meta.json has no position for node '" + id + "'");
}

DatasetWriter::DatasetWriter(const std::filesystem::path& dir, DatasetMeta meta)
    : dir_(dir), meta_(std::move(meta)) {
    std::filesystem::create_directories(dir_);
    cfr_.open(dir_ / kCfrFile, std::ios::binary | std::ios::trunc);
    if (!cfr_) throw DataError("cannot write " + (dir_ / kCfrFile).string());
    gt_.open(dir_ / kGtFile, std::ios::trunc);
    if (!gt_) throw DataError("cannot write " + (dir_ / kGtFile).string());
    gt_ << kGtHeader << "\n";
}

DatasetWriter::~DatasetWriter() {
    try {
        if (!closed_) close();
    } catch (...) {
        // destructor must not throw; close() explicitly to observe errors
    }
}

void DatasetWriter::append(const CfrSnapshot& snapshot) {
    if (closed_) throw DataError("dataset writer already closed");
    write_snapshot_payload(cfr_, snapshot, meta_.n_links, meta_.n_subcarriers);
    ++n_written_;
}

void DatasetWriter::append_ground_truth(const GroundTruthRecord& r) {
    if (closed_) throw DataError("dataset writer already closed");
    gt_ << format_double(r.t_s) << ',' << r.target_id << ',' << format_double(r.position.x) << ','
        << format_double(r.position.y) << ',' << format_double(r.position.z) << ',';
    if (r.velocity) {
        gt_ << format_double(r.velocity->x) << ',' << format_double(r.velocity->y) << ','
            << format_double(r.velocity->z);
    } else {
        gt_ << ",,";
    }
    gt_ << "\n";
}

void DatasetWriter::close() {
    if (closed_) return;
    closed_ = true;
    meta_.n_snapshots = n_written_;
    cfr_.close();
    gt_.close();
    std::ofstream mout(dir_ / kMetaFile, std::ios::trunc);
    if (!mout) throw DataError("cannot write " + (dir_ / kMetaFile).string());
    mout << meta_to_json(meta_).dump(2) << "\n";
    if (!mout) throw DataError("failed writing " + (dir_ / kMetaFile).string());
}

DatasetReader::DatasetReader(const std::filesystem::path& dir) : dir_(dir) {
    const auto meta_path = dir_ / kMetaFile;
    std::ifstream min(meta_path);
    if (!min) throw FileMissingError("dataset meta missing: " + meta_path.string());
    json j;
    try {
        min >> j;
    } catch (const json::exception& e) {
        throw DataError("dataset meta " + meta_path.string() + ": " + e.what());
    }
    meta_ = meta_from_json(j);

    const auto cfr_path = dir_ / kCfrFile;
    cfr_.open(cfr_path, std::ios::binary | std::ios::ate);
    if (!cfr_) throw FileMissingError("dataset payload missing: " + cfr_path.string());
    record_bytes_ = static_cast<std::size_t>(meta_.n_links) *
                    static_cast<std::size_t>(meta_.n_subcarriers) * sizeof(Complex32);
    const std::size_t expected = meta_.n_snapshots * record_bytes_;
    const std::size_t actual = static_cast<std::size_t>(cfr_.tellg());
    if (actual != expected)
        throw LengthMismatchError("cfr.bin length mismatch: expected " + std::to_string(expected) +
                                  " bytes (" + std::to_string(meta_.n_snapshots) +
                                  " snapshots), found " + std::to_string(actual));
    if (!std::filesystem::exists(dir_ / kGtFile))
        throw FileMissingError("dataset ground truth missing: " + (dir_ / kGtFile).string());
}

CfrSnapshot DatasetReader::snapshot(std::size_t index) {
    if (index >= meta_.n_snapshots)
        throw DataError("snapshot index " + std::to_string(index) + " out of range (" +
                        std::to_string(meta_.n_snapshots) + " snapshots)");
    cfr_.seekg(static_cast<std::streamoff>(index * record_bytes_));
    CfrSnapshot snap;
    snap.t_s = static_cast<double>(index) / meta_.snapshot_rate_hz;
    snap.links.resize(static_cast<std::size_t>(meta_.n_links));
    for (auto& link : snap.links) {
        link.resize(static_cast<std::size_t>(meta_.n_subcarriers));
        cfr_.read(reinterpret_cast<char*>(link.data()),
                  static_cast<std::streamsize>(link.size() * sizeof(Complex32)));
    }
    if (!cfr_) throw DataError("cfr.bin read failure at snapshot " + std::to_string(index));
    return snap;
}

std::vector<GroundTruthRecord> DatasetReader::ground_truth() const {
    std::ifstream in(dir_ / kGtFile);
    if (!in) throw FileMissingError("dataset ground truth missing: " + (dir_ / kGtFile).string());
    std::string line;
    if (!std::getline(in, line)) return {};
    std::vector<GroundTruthRecord> records;
    std::map<std::string, double> last_t;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() < 5) throw DataError("gt.csv: malformed row '" + line + "'");
        GroundTruthRecord r;
        r.t_s = std::stod(f[0]);
        r.target_id = f[1];
        r.position = {std::stod(f[2]), std::stod(f[3]), std::stod(f[4])};
        if (f.size() >= 8 && !f[5].empty() && !f[6].empty() && !f[7].empty())
            r.velocity = Vec3{std::stod(f[5]), std::stod(f[6]), std::stod(f[7])};
        if (auto it = last_t.find(r.target_id); it != last_t.end() && r.t_s < it->second)
            throw DataError("gt.csv: timestamps decrease for target '" + r.target_id + "'");
        last_t[r.target_id] = r.t_s;
        records.push_back(std::move(r));
    }
    return records;
}

void write_dataset(const CfrStream& stream, const std::vector<GroundTruthRecord>& gt,
                   const DatasetMeta& meta, const std::filesystem::path& dir) {
    DatasetWriter writer(dir, meta);
    for (const auto& snap : stream.snapshots) writer.append(snap);
    for (const auto& r : gt) writer.append_ground_truth(r);
    writer.close();
}

std::pair<CfrStream, std::vector<GroundTruthRecord>> read_dataset(
    const std::filesystem::path& dir) {
    DatasetReader reader(dir);
    CfrStream stream;
    stream.snapshot_rate_hz = reader.meta().snapshot_rate_hz;
    stream.n_subcarriers = static_cast<std::size_t>(reader.meta().n_subcarriers);
    stream.snapshots.reserve(reader.meta().n_snapshots);
    for (std::size_t i = 0; i < reader.meta().n_snapshots; ++i)
        stream.snapshots.push_back(reader.snapshot(i));
    return {std::move(stream), reader.ground_truth()};
}

DatasetMeta make_meta(const ScenarioConfig& scenario) {
    DatasetMeta meta;
    meta.carrier_hz = scenario.carrier_hz;
    meta.bandwidth_hz = scenario.bandwidth_hz;
    meta.n_subcarriers = scenario.n_subcarriers;
    meta.n_snapshots = scenario.n_snapshots();
    meta.n_links = static_cast<int>(scenario.links.size());
    meta.snapshot_rate_hz = scenario.snapshot_rate_hz;
    for (const auto& l : scenario.links) meta.links.emplace_back(l.tx_id, l.rx_id);
    for (const auto& n : scenario.nodes) {
        if (n.trajectory.is_stationary())
            meta.node_positions[n.id] = n.trajectory.position_at(0.0);
        else
            meta.node_trajectory_files[n.id] = "traj_" + n.id + ".json";
    }
    return meta;
}

void write_node_trajectories(const ScenarioConfig& scenario, const DatasetMeta& meta,
                             const std::filesystem::path& dir) {
    for (const auto& [id, file] : meta.node_trajectory_files) {
        const NodeSpec& node = scenario.node(id);
        json j;
        j["interpolation"] =
            node.trajectory.interpolation() == Interpolation::cubic ? "cubic" : "linear";
        json wps = json::array();
        for (const auto& w : node.trajectory.waypoints())
            wps.push_back({{"t_s", w.t_s},
                           {"position_m", {w.position_m.x, w.position_m.y, w.position_m.z}}});
        j["waypoints"] = wps;
        std::ofstream out(dir / file);
        if (!out) throw DataError("cannot write " + (dir / file).string());
        out << j.dump(2) << "\n";
    }
}

std::pair<Vec3, Vec3> interpolate_ground_truth(const std::vector<GroundTruthRecord>& records,
                                               double t_s) {
    if (records.empty()) throw DataError("ground truth interpolation over empty record list");
    if (records.size() == 1 || t_s <= records.front().t_s) {
        const auto& r = (t_s <= records.front().t_s) ? records.front() : records.back();
        return {r.position, r.velocity.value_or(Vec3{})};
    }
    if (t_s >= records.back().t_s) {
        const auto& r = records.back();
        Vec3 v = r.velocity.value_or(Vec3{});
        if (!r.velocity && records.size() >= 2) {
            const auto& p = records[records.size() - 2];
            v = (r.position - p.position) / (r.t_s - p.t_s);
        }
        return {r.position, v};
    }
    std::size_t i = 0;
    while (i + 2 < records.size() && records[i + 1].t_s <= t_s) ++i;
    const auto& a = records[i];
    const auto& b = records[i + 1];
    const double u = (t_s - a.t_s) / (b.t_s - a.t_s);
    const Vec3 pos = a.position * (1.0 - u) + b.position * u;
    Vec3 vel;
    if (a.velocity && b.velocity)
        vel = *a.velocity * (1.0 - u) + *b.velocity * u;
    else
        vel = (b.position - a.position) / (b.t_s - a.t_s);
    return {pos, vel};
}

}  // namespace isac
