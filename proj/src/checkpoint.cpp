#include "pave/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pave {

namespace {

constexpr char kMagic[4] = {'P', 'A', 'V', 'E'};

template <typename T>
void write_pod(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is, const std::string& path) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated read in " + path);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<std::pair<std::string, CheckpointEntry>>& entries) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    write_pod<std::uint32_t>(os, kCheckpointVersion);
    write_pod<std::uint64_t>(os, entries.size());
    for (const auto& [name, e] : entries) {
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape) write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(d));
        os.write(reinterpret_cast<const char*>(e.data.data()),
                 static_cast<std::streamsize>(e.data.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::map<std::string, CheckpointEntry> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("checkpoint: bad magic in " + path);
    const auto version = read_pod<std::uint32_t>(is, path);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version) + " in " + path);
    }
    const auto count = read_pod<std::uint64_t>(is, path);
    std::map<std::string, CheckpointEntry> out;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<std::uint32_t>(is, path);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw std::runtime_error("checkpoint: truncated name in " + path);
        const auto rank = read_pod<std::uint32_t>(is, path);
        CheckpointEntry e;
        std::uint64_t n = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            const auto d = read_pod<std::uint64_t>(is, path);
            e.shape.push_back(static_cast<std::int64_t>(d));
            n *= d;
        }
        e.data.resize(n);
        is.read(reinterpret_cast<char*>(e.data.data()), static_cast<std::streamsize>(n * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated payload for '" + name + "' in " + path);
        out.emplace(std::move(name), std::move(e));
    }
    return out;
}

}  // namespace pave
