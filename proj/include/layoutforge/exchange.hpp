// SPDX-License-Identifier: Apache-2.0
//
// Tensor exchange file ("XAMT"):
//
//   offset  size        field
//   0       4           magic "XAMT"
//   4       4           format version, u32 = 1
//   8       4           dtype tag, u32 = 1 (f32)
//   12      4           rank, u32
//   16      4 * rank    dims, u32 each
//   ...     4 * prod    payload, f32, row-major
//
// All integers and floats are little-endian.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "layoutforge/tensor.hpp"

namespace layoutforge {

inline constexpr std::uint32_t kExchangeVersion = 1;
inline constexpr std::uint32_t kDtypeF32 = 1;
inline constexpr std::uint32_t kMaxExchangeRank = 8;

struct ExchangeTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t element_count() const;
  bool operator==(const ExchangeTensor&) const = default;
};

std::vector<std::uint8_t> encode_tensor(const ExchangeTensor& tensor);
ExchangeTensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const ExchangeTensor& tensor);
ExchangeTensor read_tensor(const std::filesystem::path& path);

// Attention and gradient stacks travel as P x P x N, latents as C x H x W,
// masks as P x P with values 0 or 1.
ExchangeTensor to_exchange(const TokenStack& stack);
ExchangeTensor to_exchange(const LatentGrid& latent);
ExchangeTensor to_exchange(const BinaryGrid& mask);

TokenStack token_stack_from_exchange(const ExchangeTensor& tensor);
AttentionMaps attention_from_exchange(const ExchangeTensor& tensor);
LatentGrid latent_from_exchange(const ExchangeTensor& tensor);
BinaryGrid mask_from_exchange(const ExchangeTensor& tensor);

}  // namespace layoutforge
