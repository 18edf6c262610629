#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pave/tensor.hpp"

namespace pave {

// Versioned flat binary checkpoint:
//   magic "PAVE" | u32 version | u64 entry count | per entry:
//   u32 name length | name bytes | u32 rank | u64 dims[rank] | f64 payload (LE).
// Round-trips are bit-exact.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
    std::vector<std::int64_t> shape;
    std::vector<double> data;
};

void save_checkpoint(const std::string& path, const std::vector<std::pair<std::string, CheckpointEntry>>& entries);
std::map<std::string, CheckpointEntry> load_checkpoint(const std::string& path);

}  // namespace pave
