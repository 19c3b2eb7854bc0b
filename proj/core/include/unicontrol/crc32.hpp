// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

namespace uc {

// Standard CRC-32 (IEEE, reflected polynomial 0xEDB88320).
std::uint32_t crc32(const void* data, std::size_t n, std::uint32_t seed = 0);

}  // namespace uc
