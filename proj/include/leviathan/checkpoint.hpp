#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "leviathan/config.hpp"
#include "leviathan/tensor.hpp"

namespace leviathan {

/// Versioned container: "LVCK", u16 version, u64 metadata length + canonical
/// JSON, u32 tensor count, then per tensor u32 name length, UTF-8 name,
/// u8 dtype (1 = f64), u8 rank, u64 extents, little-endian payload.
struct Checkpoint {
    Json metadata = Json::object();
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor& tensor(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace leviathan
