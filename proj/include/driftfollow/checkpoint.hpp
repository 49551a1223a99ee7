#pragma once

#include <string>

#include "driftfollow/train.hpp"

namespace dfw {

// .dfw checkpoint: "DFW1" magic, u32 hidden_size, u32 horizon, u64 parameter
// count, little-endian f64 parameters, then optional tagged sections
// (NRM1 normalization stats, META stage/method, IMP1 importance state).
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dfw
