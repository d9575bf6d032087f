// SPDX-License-Identifier: Apache-2.0
#include "layoutforge/exchange.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "layoutforge/errors.hpp"

namespace layoutforge {

namespace {

constexpr char kMagic[4] = {'X', 'A', 'M', 'T'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

std::size_t product(std::span<const std::uint32_t> dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void require_rank(const ExchangeTensor& t, std::size_t rank, const char* what) {
  if (t.dims.size() != rank) {
    throw DimensionError(std::string(what) + " tensor must have rank " + std::to_string(rank) + ", got " +
                         std::to_string(t.dims.size()));
  }
}

}  // namespace

std::size_t ExchangeTensor::element_count() const { return product(dims); }

std::vector<std::uint8_t> encode_tensor(const ExchangeTensor& tensor) {
  if (tensor.dims.empty() || tensor.dims.size() > kMaxExchangeRank) throw FormatError("unsupported tensor rank");
  if (tensor.values.size() != tensor.element_count()) throw FormatError("payload size does not match dims");
  std::vector<std::uint8_t> out;
  out.reserve(16 + 4 * tensor.dims.size() + 4 * tensor.values.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kExchangeVersion);
  put_u32(out, kDtypeF32);
  put_u32(out, static_cast<std::uint32_t>(tensor.dims.size()));
  for (auto d : tensor.dims) put_u32(out, d);
  for (float f : tensor.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

ExchangeTensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw FormatError("tensor file truncated in header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic, expected XAMT");
  if (const auto v = get_u32(bytes, 4); v != kExchangeVersion) {
    throw FormatError("unsupported format version " + std::to_string(v));
  }
  if (const auto d = get_u32(bytes, 8); d != kDtypeF32) throw FormatError("unsupported dtype tag " + std::to_string(d));
  const auto rank = get_u32(bytes, 12);
  if (rank == 0 || rank > kMaxExchangeRank) throw FormatError("unsupported rank " + std::to_string(rank));
  if (bytes.size() < 16 + 4 * static_cast<std::size_t>(rank)) throw FormatError("tensor file truncated in dims");

  ExchangeTensor t;
  for (std::uint32_t i = 0; i < rank; ++i) t.dims.push_back(get_u32(bytes, 16 + 4 * static_cast<std::size_t>(i)));
  const std::size_t count = t.element_count();
  const std::size_t payload_at = 16 + 4 * static_cast<std::size_t>(rank);
  if (bytes.size() != payload_at + 4 * count) {
    throw FormatError("payload is " + std::to_string(bytes.size() - payload_at) + " bytes, expected " +
                      std::to_string(4 * count));
  }
  t.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) t.values[i] = std::bit_cast<float>(get_u32(bytes, payload_at + 4 * i));
  return t;
}

void write_tensor(const std::filesystem::path& path, const ExchangeTensor& tensor) {
  const auto bytes = encode_tensor(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

ExchangeTensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open tensor file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

ExchangeTensor to_exchange(const TokenStack& stack) {
  const auto p = static_cast<std::uint32_t>(stack.side());
  const auto n = static_cast<std::uint32_t>(stack.tokens());
  ExchangeTensor t{{p, p, n}, {}};
  t.values.reserve(t.element_count());
  for (int r = 0; r < stack.side(); ++r) {
    for (int c = 0; c < stack.side(); ++c) {
      for (int k = 0; k < stack.tokens(); ++k) t.values.push_back(static_cast<float>(stack.at(r, c, k)));
    }
  }
  return t;
}

ExchangeTensor to_exchange(const LatentGrid& latent) {
  ExchangeTensor t{{static_cast<std::uint32_t>(latent.channels()), static_cast<std::uint32_t>(latent.height()),
                    static_cast<std::uint32_t>(latent.width())},
                   {}};
  t.values.reserve(t.element_count());
  for (double v : latent.values()) t.values.push_back(static_cast<float>(v));
  return t;
}

ExchangeTensor to_exchange(const BinaryGrid& mask) {
  const auto p = static_cast<std::uint32_t>(mask.side());
  ExchangeTensor t{{p, p}, {}};
  for (auto b : mask.bits()) t.values.push_back(b ? 1.0f : 0.0f);
  return t;
}

TokenStack token_stack_from_exchange(const ExchangeTensor& tensor) {
  require_rank(tensor, 3, "attention");
  if (tensor.dims[0] != tensor.dims[1]) throw DimensionError("attention tensor must be P x P x N");
  const int p = static_cast<int>(tensor.dims[0]);
  const int n = static_cast<int>(tensor.dims[2]);
  TokenStack stack(p, n);
  std::size_t i = 0;
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < p; ++c) {
      for (int k = 0; k < n; ++k) stack.at(r, c, k) = static_cast<double>(tensor.values[i++]);
    }
  }
  return stack;
}

AttentionMaps attention_from_exchange(const ExchangeTensor& tensor) {
  return AttentionMaps(token_stack_from_exchange(tensor));
}

LatentGrid latent_from_exchange(const ExchangeTensor& tensor) {
  require_rank(tensor, 3, "latent");
  std::vector<double> values(tensor.values.begin(), tensor.values.end());
  return LatentGrid(static_cast<int>(tensor.dims[0]), static_cast<int>(tensor.dims[1]),
                    static_cast<int>(tensor.dims[2]), std::move(values));
}

BinaryGrid mask_from_exchange(const ExchangeTensor& tensor) {
  require_rank(tensor, 2, "mask");
  if (tensor.dims[0] != tensor.dims[1]) throw DimensionError("mask tensor must be square");
  const int p = static_cast<int>(tensor.dims[0]);
  BinaryGrid mask(p);
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < p; ++c) {
      const float v = tensor.values[static_cast<std::size_t>(r * p + c)];
      if (v != 0.0f && v != 1.0f) throw FormatError("mask tensor values must be 0 or 1");
      mask.set(r, c, v == 1.0f);
    }
  }
  return mask;
}

}  // namespace layoutforge
