#pragma once

#include <string>

#include "factost/config.hpp"
#include "factost/params.hpp"

namespace factost {

// Binary container: magic "FSV2", u32 version (=1), u32 config length and a
// UTF-8 key-value config document in the header region, u32 entry count, then
// per entry: u16 name length, name, u8 rank, u64 dims, little-endian float32
// payload in row-major order. A trailing u64 CRC covers the payload region
// (config block through the last entry).
struct CheckpointContents {
    ParameterStore params;
    KvDoc config;
    bool has_backbone = false;
    bool has_adapter = false;  // any entry under the "adapter/" prefix
};

void save_checkpoint(const std::string& path, const ParameterStore& params, const KvDoc& config);
CheckpointContents load_checkpoint(const std::string& path);

uint64_t crc64(const uint8_t* data, size_t n, uint64_t seed = 0);

}  // namespace factost
