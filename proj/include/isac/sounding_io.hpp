#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "isac/channel.hpp"
#include "isac/scenario.hpp"

namespace isac {

/// On-disk container: meta.json + cfr.bin + gt.csv in one directory.
/// cfr.bin holds little-endian float32 (re, im) pairs, layout
/// [snapshot][link][subcarrier], row-major, no padding.
struct DatasetMeta {
    int format_version = 1;
    double carrier_hz = 0.0;
    double bandwidth_hz = 0.0;
    int n_subcarriers = 0;
    std::size_t n_snapshots = 0;
    int n_links = 0;
    double snapshot_rate_hz = 0.0;
    std::vector<std::pair<std::string, std::string>> links;  // (tx_id, rx_id)
    // Stationary nodes carry a position; mobile nodes a trajectory file name
    // (JSON, relative to the container directory).
    std::map<std::string, Vec3> node_positions;
    std::map<std::string, std::string> node_trajectory_files;

    /// Position of a node at time t (reads the trajectory file on demand).
    Vec3 node_position(const std::string& id, double t_s,
                       const std::filesystem::path& base_dir) const;
};

struct GroundTruthRecord {
    double t_s = 0.0;
    std::string target_id;
    Vec3 position;
    std::optional<Vec3> velocity;
};

/// Streaming writer: one writer per directory; snapshots appended in order.
class DatasetWriter {
public:
    DatasetWriter(const std::filesystem::path& dir, DatasetMeta meta);
    ~DatasetWriter();

    void append(const CfrSnapshot& snapshot);
    void append_ground_truth(const GroundTruthRecord& record);

    /// Writes meta.json with the final snapshot count and flushes everything.
    void close();

    std::size_t snapshots_written() const { return n_written_; }

private:
    std::filesystem::path dir_;
    DatasetMeta meta_;
    std::ofstream cfr_;
    std::ofstream gt_;
    std::size_t n_written_ = 0;
    bool closed_ = false;
};

/// Streaming reader: O(snapshot) memory; snapshots accessible sequentially or
/// by index. Validates payload length against meta.json on open.
class DatasetReader {
public:
    explicit DatasetReader(const std::filesystem::path& dir);

    const DatasetMeta& meta() const { return meta_; }
    CfrSnapshot snapshot(std::size_t index);
    std::vector<GroundTruthRecord> ground_truth() const;
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    DatasetMeta meta_;
    std::ifstream cfr_;
    std::size_t record_bytes_ = 0;
};

void write_dataset(const CfrStream& stream, const std::vector<GroundTruthRecord>& gt,
                   const DatasetMeta& meta, const std::filesystem::path& dir);
std::pair<CfrStream, std::vector<GroundTruthRecord>> read_dataset(const std::filesystem::path& dir);

/// Meta block derived from a scenario (links, node positions, grid).
DatasetMeta make_meta(const ScenarioConfig& scenario);

/// Writes trajectory JSON files for mobile nodes referenced by the meta block.
void write_node_trajectories(const ScenarioConfig& scenario, const DatasetMeta& meta,
                             const std::filesystem::path& dir);

/// Linear position interpolation over one target's records, clamped to the
/// record span; velocity from the records when present, else the segment
/// finite difference.
std::pair<Vec3, Vec3> interpolate_ground_truth(const std::vector<GroundTruthRecord>& records,
                                               double t_s);

}  // namespace isac
