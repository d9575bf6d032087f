// SPDX-License-Identifier: Apache-2.0
//
// Regenerates the tensor fixtures under tests/fixtures. Usage:
//   make_fixtures <dir>
#include <cmath>
#include <fstream>
#include <iostream>

#include "layoutforge/exchange.hpp"
#include "layoutforge/guidance.hpp"
#include "layoutforge/random.hpp"

using namespace layoutforge;

namespace {

void add_bump(TokenStack& s, int token, double cy, double cx, double width, double height) {
  for (int r = 0; r < s.side(); ++r)
    for (int c = 0; c < s.side(); ++c)
      s.at(r, c, token) += height * std::exp(-((r - cy) * (r - cy) + (c - cx) * (c - cx)) / (2 * width * width));
}

TokenStack noisy(int side, int tokens, std::uint64_t seed) {
  NormalStream rng(seed);
  TokenStack s(side, tokens);
  for (double& v : s.values()) v = 0.02 * rng.uniform();
  return s;
}

BinaryGrid rect(int side, int r0, int c0, int h, int w) {
  BinaryGrid m(side);
  for (int r = r0; r < r0 + h; ++r)
    for (int c = c0; c < c0 + w; ++c) m.set(r, c);
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures <dir>\n";
    return 1;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);

  // Subjects 1, 3, 5 crowd the centre; token 0 is the background.
  TokenStack overlap = noisy(16, 8, 1);
  add_bump(overlap, 1, 6.0, 6.0, 2.0, 0.9);
  add_bump(overlap, 3, 7.0, 8.5, 2.3, 0.7);
  add_bump(overlap, 5, 9.0, 6.5, 1.8, 0.8);
  add_bump(overlap, 0, 13.0, 3.0, 3.0, 0.6);
  write_tensor(dir / "attention_overlap.xamt", to_exchange(overlap));

  TokenStack disjoint = noisy(16, 8, 2);
  add_bump(disjoint, 1, 2.0, 2.0, 1.2, 0.9);
  add_bump(disjoint, 3, 2.0, 13.0, 1.2, 0.8);
  add_bump(disjoint, 5, 13.0, 7.5, 1.2, 0.7);
  write_tensor(dir / "attention_disjoint.xamt", to_exchange(disjoint));

  TokenStack single(4, 2, 0.1);
  single.at(2, 1, 0) = 0.8;
  write_tensor(dir / "attention_single.xamt", to_exchange(single));

  write_tensor(dir / "latent_64.xamt", to_exchange(random_latent(4, 16, 7)));
  write_tensor(dir / "latent_32.xamt", to_exchange(random_latent(4, 8, 8)));

  write_tensor(dir / "mask_a.xamt", to_exchange(rect(16, 3, 3, 6, 6)));
  write_tensor(dir / "mask_b.xamt", to_exchange(rect(16, 8, 9, 5, 5)));
  write_tensor(dir / "mask_c.xamt", to_exchange(rect(16, 10, 2, 4, 6)));

  std::vector<std::uint8_t> bad = encode_tensor(to_exchange(single));
  bad[3] = 'X';
  std::ofstream(dir / "bad_magic.xamt", std::ios::binary)
      .write(reinterpret_cast<const char*>(bad.data()), static_cast<std::streamsize>(bad.size()));

  std::vector<std::uint8_t> truncated = encode_tensor(to_exchange(single));
  truncated.resize(truncated.size() - 6);
  std::ofstream(dir / "truncated.xamt", std::ios::binary)
      .write(reinterpret_cast<const char*>(truncated.data()), static_cast<std::streamsize>(truncated.size()));
  return 0;
}
