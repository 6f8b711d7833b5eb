#pragma once

#include <string>
#include <utility>
#include <vector>

#include "autoselect/seqmodel.hpp"
#include "autoselect/tensor.hpp"

namespace autoselect {

/// Named-tensor container, explicitly little-endian on disk:
///   magic "ATSC" | u32 version | u32 block count |
///   per block: u16 name length | name bytes | u32 rank | i64 dims | f64 data
/// Doubles are written bit-for-bit (IEEE-754 payload), so a round trip is
/// bit-exact.
struct Checkpoint {
    std::vector<std::pair<std::string, Tensor>> blocks;

    void add(std::string name, Tensor t);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    static constexpr uint32_t kVersion = 1;
};

Checkpoint checkpoint_of(const ModelParams& model, const Vector& lambda_logits = {});
ModelParams model_from_checkpoint(const Checkpoint& ck);

} // namespace autoselect
