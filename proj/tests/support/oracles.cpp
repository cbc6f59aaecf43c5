#include "oracles.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

namespace oracle {

namespace {

constexpr std::array<std::uint32_t, 64> kK = {
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
    0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
    0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
    0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
    0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
    0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
    0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
    0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
    0xc67178f2};

std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

}  // namespace

Digest sha256(std::span<const std::uint8_t> msg) {
  std::array<std::uint32_t, 8> h = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                                    0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
  std::vector<std::uint8_t> data(msg.begin(), msg.end());
  const std::uint64_t bit_len = static_cast<std::uint64_t>(msg.size()) * 8;
  data.push_back(0x80);
  while (data.size() % 64 != 56) data.push_back(0);
  for (int i = 7; i >= 0; --i) data.push_back(static_cast<std::uint8_t>(bit_len >> (8 * i)));

  for (std::size_t chunk = 0; chunk < data.size(); chunk += 64) {
    std::array<std::uint32_t, 64> w{};
    for (int i = 0; i < 16; ++i) {
      w[i] = (std::uint32_t{data[chunk + 4 * i]} << 24) | (std::uint32_t{data[chunk + 4 * i + 1]} << 16) |
             (std::uint32_t{data[chunk + 4 * i + 2]} << 8) | std::uint32_t{data[chunk + 4 * i + 3]};
    }
    for (int i = 16; i < 64; ++i) {
      const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    auto [a, b, c, d, e, f, g, hh] = h;
    for (int i = 0; i < 64; ++i) {
      const std::uint32_t S1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      const std::uint32_t ch = (e & f) ^ (~e & g);
      const std::uint32_t t1 = hh + S1 + ch + kK[i] + w[i];
      const std::uint32_t S0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      const std::uint32_t t2 = S0 + maj;
      hh = g;
      g = f;
      f = e;
      e = d + t1;
      d = c;
      c = b;
      b = a;
      a = t1 + t2;
    }
    h[0] += a;
    h[1] += b;
    h[2] += c;
    h[3] += d;
    h[4] += e;
    h[5] += f;
    h[6] += g;
    h[7] += hh;
  }

  Digest out{};
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 4; ++j) out[4 * i + j] = static_cast<std::uint8_t>(h[i] >> (24 - 8 * j));
  }
  return out;
}

Digest sha256(std::string_view msg) {
  return sha256(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(msg.data()),
                                              msg.size()));
}

Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> msg) {
  std::array<std::uint8_t, 64> k{};
  if (key.size() > 64) {
    const Digest kd = sha256(key);
    std::copy(kd.begin(), kd.end(), k.begin());
  } else {
    std::copy(key.begin(), key.end(), k.begin());
  }
  std::vector<std::uint8_t> inner, outer;
  for (auto b : k) inner.push_back(b ^ 0x36);
  inner.insert(inner.end(), msg.begin(), msg.end());
  const Digest ih = sha256(inner);
  for (auto b : k) outer.push_back(b ^ 0x5c);
  outer.insert(outer.end(), ih.begin(), ih.end());
  return sha256(outer);
}

std::string hex(const Digest& d) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (auto b : d) {
    s += digits[b >> 4];
    s += digits[b & 15];
  }
  return s;
}

Digest merkle_root(const std::vector<Digest>& leaves) {
  std::vector<Digest> level = leaves;
  while (level.size() > 1) {
    std::vector<Digest> up;
    for (std::size_t i = 0; i < level.size(); i += 2) {
      if (i + 1 == level.size()) {
        up.push_back(level[i]);
        continue;
      }
      std::vector<std::uint8_t> buf(level[i].begin(), level[i].end());
      buf.insert(buf.end(), level[i + 1].begin(), level[i + 1].end());
      up.push_back(sha256(buf));
    }
    level = up;
  }
  return level.at(0);
}

std::vector<std::uint8_t> vector_bytes(const Vector& v) {
  std::vector<std::uint8_t> out;
  const auto n = static_cast<std::uint32_t>(v.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
  for (double x : v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &x, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  return out;
}

long double dot(const Vector& a, const Vector& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return s;
}

long double cosine(const Vector& a, const Vector& b) {
  return dot(a, b) / (std::sqrt(dot(a, a)) * std::sqrt(dot(b, b)));
}

std::vector<double> mcs(const std::vector<Vector>& updates) {
  std::vector<double> out(updates.size(), 0.0);
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (dot(updates[i], updates[i]) == 0) continue;
    long double s = 0;
    for (const auto& other : updates) {
      if (dot(other, other) == 0) continue;
      s += std::max<long double>(0, cosine(updates[i], other));
    }
    out[i] = static_cast<double>(s);
  }
  return out;
}

long double binomial_range(unsigned n, unsigned lo, unsigned hi, long double p) {
  long double total = 0;
  for (unsigned k = lo; k <= hi && k <= n; ++k) {
    long double c = 1;
    for (unsigned j = 1; j <= k; ++j) c = c * (n - k + j) / j;
    total += c * std::pow(p, static_cast<long double>(k)) *
             std::pow(1 - p, static_cast<long double>(n - k));
  }
  return total;
}

std::vector<long double> logits(const Vector& w, std::size_t features, std::size_t classes,
                                const std::vector<double>& x) {
  std::vector<long double> z(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    long double s = w[features * classes + k];
    for (std::size_t f = 0; f < features; ++f) s += static_cast<long double>(x[f]) * w[f * classes + k];
    z[k] = s;
  }
  return z;
}

long double cross_entropy(const Vector& w, std::size_t features, std::size_t classes,
                          const std::vector<Sample>& data) {
  long double total = 0;
  for (const auto& s : data) {
    const auto z = logits(w, features, classes, s.x);
    const long double mx = *std::max_element(z.begin(), z.end());
    long double sum = 0;
    for (auto v : z) sum += std::exp(v - mx);
    total += -(z[s.y] - mx - std::log(sum));
  }
  return total / static_cast<long double>(data.size());
}

double accuracy(const Vector& w, std::size_t features, std::size_t classes,
                const std::vector<Sample>& data) {
  std::size_t hit = 0;
  for (const auto& s : data) {
    const auto z = logits(w, features, classes, s.x);
    const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    hit += best == s.y ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

std::vector<std::size_t> top_k_cosine(const std::vector<Vector>& stored, const Vector& probe,
                                      std::size_t k) {
  std::vector<std::size_t> idx(stored.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<long double> sim(stored.size());
  for (std::size_t i = 0; i < stored.size(); ++i) sim[i] = cosine(stored[i], probe);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
  if (idx.size() > k) idx.resize(k);
  return idx;
}

}  // namespace oracle
